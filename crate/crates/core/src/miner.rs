//! Scenario instance mining: match a category against tagged data.
//!
//! For every assignment of the category's roles to distinct tracked objects,
//! the miner computes per item `j` the set of samples `B_j` on which all of
//! the item's constraints definitely hold, then searches for spans `[s, e]`
//! that can be partitioned into one contiguous segment per item, in item
//! order, where segment `j` lies entirely in `B_j`, every segment is at
//! least `min_item_len` samples long, and consecutive segments are separated
//! by at most `item_gap` uncovered samples.
//!
//! Reported instances are the valid spans that are maximal under single-step
//! extension (neither `[s - 1, e]` nor `[s, e + 1]` is valid), thinned
//! greedily: longer spans win, ties fall to the earlier start, and any span
//! overlapping an already kept one is dropped. Instances of different role
//! assignments do not compete.
//!
//! Segment boundaries within a reported span are canonical: walking the
//! items from last to first, each item extends as far left as the data and
//! the remaining items allow, keeping inter-item gaps minimal.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::category::{Category, CategoryItem};
use crate::error::{Error, Result};
use crate::model::{
    ObjectId, Params, Subject, Tag, TagDimension, TaggedDataset, Timebase,
};

/// One mined (or hand-written) scenario instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    /// Name of the category that produced the instance.
    pub category: String,
    /// Role name to bound subject.
    pub binding: BTreeMap<String, Subject>,
    /// One segment per category item, in item order.
    pub segments: Vec<Segment>,
    pub start_k: usize,
    pub end_k: usize,
}

/// The samples one item of an instance covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    /// Index into the category's item sequence.
    pub item: usize,
    pub start_k: usize,
    pub end_k: usize,
}

impl Instance {
    /// Number of samples the instance spans, gaps included.
    pub fn sample_len(&self) -> usize {
        self.end_k - self.start_k + 1
    }

    /// Tokens of the bound subjects, in role-name order.
    fn binding_tokens(&self) -> Vec<String> {
        self.binding.values().map(|s| s.to_token()).collect()
    }
}

// ---------------------------------------------------------------------------
// Constraint evaluation
// ---------------------------------------------------------------------------

/// Per-sample tag values for every (subject, dimension) a category needs.
struct SampleCache {
    values: BTreeMap<(Subject, TagDimension), Vec<Option<Tag>>>,
}

impl SampleCache {
    fn build(tagged: &TaggedDataset, category: &Category) -> SampleCache {
        let n = tagged.timebase.n_samples;
        let mut values = BTreeMap::new();
        let mut add = |subject: Subject, dims: &std::collections::BTreeSet<TagDimension>| {
            for &dim in dims {
                let samples = tagged
                    .stream(subject, dim)
                    .map(|s| s.sample_values(n))
                    .unwrap_or_else(|| vec![None; n]);
                values.insert((subject, dim), samples);
            }
        };
        add(Subject::Ego, &category.ego_dimensions_used());
        add(Subject::Environment, &category.environment_dimensions_used());
        let role_dims = category.role_dimensions_used();
        for &id in &tagged.object_ids {
            add(Subject::Object(id), &role_dims);
        }
        SampleCache { values }
    }

    fn value(&self, subject: Subject, dimension: TagDimension, k: usize) -> Option<Tag> {
        self.values
            .get(&(subject, dimension))
            .and_then(|samples| samples[k])
    }
}

/// Whether all constraints of `item` hold at sample `k` under `binding`
/// (subjects per role, in category role order).
fn item_holds(
    item: &CategoryItem,
    binding: &[Subject],
    cache: &SampleCache,
    k: usize,
) -> bool {
    item.ego
        .iter()
        .all(|(dim, expr)| expr.matches(cache.value(Subject::Ego, *dim, k)))
        && item
            .environment
            .iter()
            .all(|(dim, expr)| expr.matches(cache.value(Subject::Environment, *dim, k)))
        && item.roles.iter().zip(binding).all(|(constraints, &subject)| {
            constraints
                .iter()
                .all(|(dim, expr)| expr.matches(cache.value(subject, *dim, k)))
        })
}

fn check_dimensions(tagged: &TaggedDataset, category: &Category) -> Result<()> {
    let checks = [
        (category.ego_dimensions_used(), &tagged.ego_dimensions, "ego"),
        (
            category.role_dimensions_used(),
            &tagged.object_dimensions,
            "object",
        ),
        (
            category.environment_dimensions_used(),
            &tagged.environment_dimensions,
            "environment",
        ),
    ];
    for (used, available, kind) in checks {
        for dim in used {
            if !available.contains(&dim) {
                return Err(Error::UntaggedDimension {
                    dimension: dim.as_str().to_string(),
                    subject_kind: kind.to_string(),
                });
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Span search
// ---------------------------------------------------------------------------

/// Sorted, disjoint, non-adjacent inclusive intervals.
type IntervalSet = Vec<(usize, usize)>;

fn merge_intervals(mut raw: IntervalSet) -> IntervalSet {
    raw.sort_unstable();
    let mut merged: IntervalSet = Vec::with_capacity(raw.len());
    for (lo, hi) in raw {
        match merged.last_mut() {
            Some(last) if lo <= last.1 + 1 => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    merged
}

fn interval_set_contains(set: &IntervalSet, x: usize) -> bool {
    let idx = set.partition_point(|&(_, hi)| hi < x);
    set.get(idx).is_some_and(|&(lo, _)| lo <= x)
}

/// Largest element of `set` within `[lo, hi]`, if any.
fn largest_in_window(set: &IntervalSet, lo: usize, hi: usize) -> Option<usize> {
    let mut best = None;
    for &(ilo, ihi) in set {
        if ilo > hi {
            break;
        }
        let candidate = ihi.min(hi);
        if candidate >= lo {
            best = Some(best.map_or(candidate, |b: usize| b.max(candidate)));
        }
    }
    best
}

/// Maximal true runs of `mask` within `[from, to]`.
fn runs_within(mask: &[bool], from: usize, to: usize) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for k in from..=to {
        match (mask[k], start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                runs.push((s, k - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, to));
    }
    runs
}

/// The run of `runs` containing `k`, if any.
fn run_containing(runs: &[(usize, usize)], k: usize) -> Option<(usize, usize)> {
    let idx = runs.partition_point(|&(_, end)| end < k);
    runs.get(idx).copied().filter(|&(start, _)| start <= k)
}

/// For a span starting at `s`, the feasible end positions of each item
/// prefix: `sets[j]` holds every position at which items `0..=j` can end.
/// `None` when even the first item cannot start at `s`.
fn forward_sets(
    s: usize,
    item_runs: &[Vec<(usize, usize)>],
    min_len: usize,
    gap: usize,
) -> Option<Vec<IntervalSet>> {
    let first_run = run_containing(&item_runs[0], s)?;
    if first_run.1 + 1 < s + min_len {
        return None;
    }
    let mut sets: Vec<IntervalSet> = Vec::with_capacity(item_runs.len());
    sets.push(vec![(s + min_len - 1, first_run.1)]);
    for runs in &item_runs[1..] {
        let mut next: IntervalSet = Vec::new();
        for &(lo, hi) in sets.last().expect("seeded") {
            // Item j may start anywhere in (prev end, prev end + 1 + gap].
            let a_lo = lo + 1;
            let a_hi = hi + 1 + gap;
            let mut idx = runs.partition_point(|&(_, end)| end < a_lo);
            while let Some(&(rs, re)) = runs.get(idx) {
                if rs > a_hi {
                    break;
                }
                let a_min = a_lo.max(rs);
                let a_max = a_hi.min((re + 1).saturating_sub(min_len));
                if a_min <= a_max {
                    next.push((a_min + min_len - 1, re));
                }
                idx += 1;
            }
        }
        if next.is_empty() {
            return None;
        }
        sets.push(merge_intervals(next));
    }
    Some(sets)
}

/// Canonical segment boundaries for the valid span `[s, e]`.
fn reconstruct_segments(
    s: usize,
    e: usize,
    sets: &[IntervalSet],
    item_runs: &[Vec<(usize, usize)>],
    min_len: usize,
    gap: usize,
) -> Vec<Segment> {
    let m = sets.len();
    let mut bounds = vec![(0usize, 0usize); m];
    let mut end = e;
    for j in (1..m).rev() {
        let run = run_containing(&item_runs[j], end).expect("span end lies on the item");
        let a_geom_min = run.0;
        let a_max = end + 1 - min_len;
        let mut chosen = None;
        for &(ilo, ihi) in &sets[j - 1] {
            let p_min = a_geom_min.saturating_sub(1 + gap).max(ilo);
            if p_min > ihi {
                continue;
            }
            let a = (p_min + 1).max(a_geom_min);
            if a > a_max {
                // Later intervals only move the start further right.
                break;
            }
            chosen = Some(a);
            break;
        }
        let a = chosen.expect("valid spans always reconstruct");
        let prev_end = largest_in_window(&sets[j - 1], a.saturating_sub(1 + gap), a - 1)
            .expect("feasible predecessor exists");
        bounds[j] = (a, end);
        end = prev_end;
    }
    bounds[0] = (s, end);
    bounds
        .into_iter()
        .enumerate()
        .map(|(item, (start_k, end_k))| Segment {
            item,
            start_k,
            end_k,
        })
        .collect()
}

/// All injective assignments of `count` roles to the given ids, in
/// lexicographic order.
fn enumerate_bindings(count: usize, ids: &[ObjectId]) -> Vec<Vec<ObjectId>> {
    fn recurse(
        count: usize,
        ids: &[ObjectId],
        current: &mut Vec<ObjectId>,
        out: &mut Vec<Vec<ObjectId>>,
    ) {
        if current.len() == count {
            out.push(current.clone());
            return;
        }
        for &id in ids {
            if !current.contains(&id) {
                current.push(id);
                recurse(count, ids, current, out);
                current.pop();
            }
        }
    }
    let mut out = Vec::new();
    recurse(count, ids, &mut Vec::new(), &mut out);
    out
}

/// Mine every instance of `category` in the tagged data.
///
/// Fails fast when the category constrains a dimension the tag data does not
/// carry for that subject kind: matching against never-tagged dimensions
/// would silently find nothing.
pub fn mine(
    tagged: &TaggedDataset,
    category: &Category,
    params: &Params,
) -> Result<Vec<Instance>> {
    params.validate()?;
    check_dimensions(tagged, category)?;
    let n = tagged.timebase.n_samples;
    let min_len = params.min_item_len;
    let gap = params.item_gap;
    let cache = SampleCache::build(tagged, category);
    let ids: Vec<ObjectId> = tagged.object_ids.iter().copied().collect();
    let mut instances: Vec<Instance> = Vec::new();
    if n == 0 {
        return Ok(instances);
    }

    for binding_ids in enumerate_bindings(category.role_names.len(), &ids) {
        let binding: Vec<Subject> = binding_ids.iter().map(|&id| Subject::Object(id)).collect();
        let holds: Vec<Vec<bool>> = category
            .items
            .iter()
            .map(|item| {
                (0..n)
                    .map(|k| item_holds(item, &binding, &cache, k))
                    .collect()
            })
            .collect();
        let alive: Vec<bool> = (0..n).map(|k| holds.iter().any(|b| b[k])).collect();

        // Clusters: alive runs, merged when the dead stretch between them is
        // bridgeable by an inter-item gap. Every valid span lies in one.
        let alive_runs = runs_within(&alive, 0, n - 1);
        let mut clusters: Vec<(usize, usize)> = Vec::new();
        for run in alive_runs {
            match clusters.last_mut() {
                Some(last) if run.0 - last.1 - 1 <= gap => last.1 = run.1,
                _ => clusters.push(run),
            }
        }

        for &(c0, c1) in &clusters {
            let item_runs: Vec<Vec<(usize, usize)>> = holds
                .iter()
                .map(|mask| runs_within(mask, c0, c1))
                .collect();
            // Candidate spans: valid, and invalid when extended one sample
            // in either direction.
            let mut candidates: Vec<(usize, usize)> = Vec::new();
            let mut previous: Option<(usize, IntervalSet)> = None;
            for s in c0..=c1 {
                if !holds[0][s] {
                    previous = None;
                    continue;
                }
                let sets = forward_sets(s, &item_runs, min_len, gap);
                let ends = sets.map(|mut sets| sets.pop().expect("one set per item"));
                if let Some(ends) = &ends {
                    for &(_, hi) in ends {
                        let extendable_left = previous
                            .as_ref()
                            .is_some_and(|(ps, pv)| ps + 1 == s && interval_set_contains(pv, hi));
                        if !extendable_left {
                            candidates.push((s, hi));
                        }
                    }
                }
                previous = ends.map(|ends| (s, ends));
            }

            // Longer spans win; overlaps are dropped.
            candidates.sort_by(|a, b| {
                let len_a = a.1 - a.0;
                let len_b = b.1 - b.0;
                len_b.cmp(&len_a).then(a.0.cmp(&b.0))
            });
            let mut kept: Vec<(usize, usize)> = Vec::new();
            for (s, e) in candidates {
                if kept.iter().all(|&(ks, ke)| e < ks || s > ke) {
                    kept.push((s, e));
                }
            }
            kept.sort_unstable();

            for (s, e) in kept {
                let sets = forward_sets(s, &item_runs, min_len, gap)
                    .expect("kept candidates are valid");
                let segments = reconstruct_segments(s, e, &sets, &item_runs, min_len, gap);
                instances.push(Instance {
                    category: category.name.clone(),
                    binding: category
                        .role_names
                        .iter()
                        .cloned()
                        .zip(binding.iter().copied())
                        .collect(),
                    segments,
                    start_k: s,
                    end_k: e,
                });
            }
        }
    }

    instances.sort_by(|a, b| {
        (a.start_k, a.end_k, a.binding_tokens()).cmp(&(b.start_k, b.end_k, b.binding_tokens()))
    });
    Ok(instances)
}

/// Re-check a single instance against tagged data without searching.
///
/// Verifies the binding (roles, distinctness, known objects), the segment
/// layout (one per item, ordered, long enough, gaps within bounds, flush
/// with the span) and that every constraint holds on every covered sample.
pub fn verify_instance(
    instance: &Instance,
    tagged: &TaggedDataset,
    category: &Category,
    params: &Params,
) -> Result<()> {
    let fail = |message: String| Err(Error::InvalidInstance(message));
    if instance.category != category.name {
        return fail(format!(
            "instance is of category `{}`, not `{}`",
            instance.category, category.name
        ));
    }
    check_dimensions(tagged, category)?;

    let mut binding: Vec<Subject> = Vec::with_capacity(category.role_names.len());
    for role in &category.role_names {
        match instance.binding.get(role) {
            Some(&subject) => binding.push(subject),
            None => return fail(format!("role `{role}` is not bound")),
        }
    }
    if instance.binding.len() != category.role_names.len() {
        return fail("binding names roles the category does not declare".into());
    }
    for (i, subject) in binding.iter().enumerate() {
        let Subject::Object(id) = subject else {
            return fail(format!("role `{}` must bind an object", category.role_names[i]));
        };
        if !tagged.object_ids.contains(id) {
            return fail(format!("object {} is not in the tag data", id.0));
        }
        if binding[..i].contains(subject) {
            return fail(format!(
                "object {} is bound to more than one role",
                id.0
            ));
        }
    }

    let n = tagged.timebase.n_samples;
    if instance.segments.len() != category.items.len() {
        return fail(format!(
            "{} segments for {} items",
            instance.segments.len(),
            category.items.len()
        ));
    }
    for (j, segment) in instance.segments.iter().enumerate() {
        if segment.item != j {
            return fail(format!("segment {j} is labeled item {}", segment.item));
        }
        if segment.start_k > segment.end_k || segment.end_k >= n {
            return fail(format!(
                "segment {j} spans [{}, {}] outside the timeline",
                segment.start_k, segment.end_k
            ));
        }
        if segment.end_k + 1 - segment.start_k < params.min_item_len {
            return fail(format!(
                "segment {j} is shorter than min_item_len = {}",
                params.min_item_len
            ));
        }
        if j > 0 {
            let previous = &instance.segments[j - 1];
            if segment.start_k <= previous.end_k {
                return fail(format!("segment {j} does not start after segment {}", j - 1));
            }
            let dead = segment.start_k - previous.end_k - 1;
            if dead > params.item_gap {
                return fail(format!(
                    "gap of {dead} samples before segment {j} exceeds item_gap = {}",
                    params.item_gap
                ));
            }
        }
    }
    let first = instance.segments.first().expect("items are never empty");
    let last = instance.segments.last().expect("items are never empty");
    if instance.start_k != first.start_k || instance.end_k != last.end_k {
        return fail("span boundaries do not match the outer segments".into());
    }

    for (item, segment) in category.items.iter().zip(&instance.segments) {
        for k in segment.start_k..=segment.end_k {
            let ego_ok = item
                .ego
                .iter()
                .all(|(dim, expr)| expr.matches(tagged.value_at(Subject::Ego, *dim, k)));
            let env_ok = item
                .environment
                .iter()
                .all(|(dim, expr)| expr.matches(tagged.value_at(Subject::Environment, *dim, k)));
            let roles_ok = item.roles.iter().zip(&binding).all(|(constraints, &subject)| {
                constraints
                    .iter()
                    .all(|(dim, expr)| expr.matches(tagged.value_at(subject, *dim, k)))
            });
            if !(ego_ok && env_ok && roles_ok) {
                return fail(format!(
                    "item {} does not hold at sample {k}",
                    segment.item
                ));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Instance file format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct InstanceLine {
    category: String,
    binding: BTreeMap<String, String>,
    segments: Vec<SegmentLine>,
    start_k: usize,
    end_k: usize,
    start_t: f64,
    end_t: f64,
}

#[derive(Serialize, Deserialize)]
struct SegmentLine {
    item: usize,
    start_k: usize,
    end_k: usize,
}

/// Write instances as JSON lines, one instance per line. Times are derived
/// from the timebase for readability; the sample indices are authoritative.
pub fn write_instances<W: Write>(
    instances: &[Instance],
    timebase: &Timebase,
    mut out: W,
) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io {
        path: "<instance output>".into(),
        source: e,
    };
    for instance in instances {
        let line = InstanceLine {
            category: instance.category.clone(),
            binding: instance
                .binding
                .iter()
                .map(|(role, subject)| (role.clone(), subject.to_token()))
                .collect(),
            segments: instance
                .segments
                .iter()
                .map(|s| SegmentLine {
                    item: s.item,
                    start_k: s.start_k,
                    end_k: s.end_k,
                })
                .collect(),
            start_k: instance.start_k,
            end_k: instance.end_k,
            start_t: timebase.time_of(instance.start_k),
            end_t: timebase.time_of(instance.end_k),
        };
        let text = serde_json::to_string(&line).expect("instances serialize");
        writeln!(out, "{text}").map_err(io_err)?;
    }
    Ok(())
}

/// Read an instance file written by [`write_instances`].
pub fn read_instances<R: BufRead>(input: R) -> Result<Vec<Instance>> {
    let mut instances = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line_no = (idx + 1) as u64;
        let line = line.map_err(|e| Error::Io {
            path: "<instance input>".into(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: InstanceLine = serde_json::from_str(&line).map_err(|e| {
            Error::MalformedInstanceFile {
                line: line_no,
                message: e.to_string(),
            }
        })?;
        let mut binding = BTreeMap::new();
        for (role, token) in parsed.binding {
            let subject = Subject::parse_token(&token).ok_or_else(|| {
                Error::MalformedInstanceFile {
                    line: line_no,
                    message: format!("unknown subject token `{token}`"),
                }
            })?;
            binding.insert(role, subject);
        }
        instances.push(Instance {
            category: parsed.category,
            binding,
            segments: parsed
                .segments
                .iter()
                .map(|s| Segment {
                    item: s.item,
                    start_k: s.start_k,
                    end_k: s.end_k,
                })
                .collect(),
            start_k: parsed.start_k,
            end_k: parsed.end_k,
        });
    }
    Ok(instances)
}
