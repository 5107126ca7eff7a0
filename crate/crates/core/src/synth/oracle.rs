//! Reference tagger and miner: deliberately naive reimplementations of the
//! tagging and mining rules, recomputed from their definitions with direct
//! per-sample scans. They share only the data types with the production
//! code, so agreement between the two is real evidence of correctness
//! rather than the same bug twice.
//!
//! The reference tagger is quadratic-ish and capped at
//! [`MAX_ORACLE_SAMPLES`] samples; the reference miner enumerates every
//! valid span from the definition and is meant for short timelines only.
//! The environment reference reads the recorded road-class column alone, so
//! datasets tagged via a road map cannot be cross-checked here.

use std::collections::{BTreeMap, BTreeSet};

use crate::category::Category;
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::model::{
    EgoTrack, LateralActivity, LateralState, LeadVehicle, LongitudinalActivity,
    LongitudinalState, ObjectId, ObjectTrack, OnHighway, Params, Subject, Tag, TagDimension,
    TaggedDataset,
};

/// Largest timeline the reference tagger accepts.
pub const MAX_ORACLE_SAMPLES: usize = 5000;

/// Everything the reference tagger produces for one object.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleObjectTags {
    pub id: ObjectId,
    pub longitudinal: Vec<Option<Tag>>,
    pub lateral: Vec<Option<Tag>>,
    pub longitudinal_state: Vec<Option<Tag>>,
    pub lateral_state: Vec<Option<Tag>>,
    pub lead: Vec<Option<Tag>>,
}

/// Per-sample tags for a whole dataset, reference edition.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTags {
    pub ego_longitudinal: Vec<Option<Tag>>,
    pub ego_lateral: Vec<Option<Tag>>,
    pub environment: Vec<Option<Tag>>,
    /// Sorted by object id.
    pub objects: Vec<OracleObjectTags>,
}

fn window_min(v: &[f64], j: usize, k_h: usize) -> f64 {
    v[j.saturating_sub(k_h)..=j]
        .iter()
        .fold(f64::INFINITY, |acc, &x| acc.min(x))
}

fn window_max(v: &[f64], j: usize, k_h: usize) -> f64 {
    v[j.saturating_sub(k_h)..=j]
        .iter()
        .fold(f64::NEG_INFINITY, |acc, &x| acc.max(x))
}

// ---------------------------------------------------------------------------
// Longitudinal activity
// ---------------------------------------------------------------------------

/// Activity runs over one gap-free speed series, straight from the rules.
fn speed_runs(v: &[f64], params: &Params) -> Vec<(usize, usize, LongitudinalActivity)> {
    use LongitudinalActivity::{Accelerating, Cruising, Decelerating};
    let n = v.len();
    let last = n - 1;
    let k_h = params.k_h;
    let thr = params.a_cruise * k_h as f64 * params.ts;
    let clamp = |j: usize| j.min(last);
    let rise = |j: usize| v[j] - window_min(v, j, k_h);
    let fall = |j: usize| v[j] - window_max(v, j, k_h);
    let rise_ahead: Vec<f64> = (0..n).map(|j| rise(clamp(j + k_h))).collect();
    let fall_ahead: Vec<f64> = (0..n).map(|j| fall(clamp(j + k_h))).collect();

    let mut runs: Vec<(usize, usize, LongitudinalActivity)> = Vec::new();
    let mut cruise_from = 0usize;
    let mut k = 0usize;
    while k < n {
        let mut fired = None;
        if rise(k) >= thr && window_min(v, clamp(k + k_h), k_h) == v[k] {
            let end = (k + 1..n).find(|&t| rise_ahead[t] < thr).unwrap_or(last);
            if v[end] - v[k] > params.delta_v {
                fired = Some((end, Accelerating));
            }
        }
        if fired.is_none() && fall(k) <= -thr && window_max(v, clamp(k + k_h), k_h) == v[k] {
            let end = (k + 1..n).find(|&t| fall_ahead[t] > -thr).unwrap_or(last);
            if v[k] - v[end] > params.delta_v {
                fired = Some((end, Decelerating));
            }
        }
        match fired {
            Some((end, label)) => {
                if k > cruise_from {
                    runs.push((cruise_from, k - 1, Cruising));
                }
                runs.push((k, end, label));
                cruise_from = end + 1;
                k = end + 1;
            }
            None => k += 1,
        }
    }
    if cruise_from <= last {
        runs.push((cruise_from, last, Cruising));
    }

    // Adjacent runs with one label read as one activity.
    let mut coalesced: Vec<(usize, usize, LongitudinalActivity)> = Vec::new();
    for run in runs {
        match coalesced.last_mut() {
            Some(prev) if prev.2 == run.2 && prev.1 + 1 == run.0 => prev.1 = run.1,
            _ => coalesced.push(run),
        }
    }
    dissolve_short_cruising(coalesced, v, params.k_cruise)
}

fn dissolve_short_cruising(
    mut runs: Vec<(usize, usize, LongitudinalActivity)>,
    v: &[f64],
    k_cruise: usize,
) -> Vec<(usize, usize, LongitudinalActivity)> {
    use LongitudinalActivity::{Cruising, Decelerating};
    let mut i = 1;
    while i + 1 < runs.len() {
        let (s, e, label) = runs[i];
        if label == Cruising && e - s + 1 < k_cruise {
            if runs[i - 1].2 == runs[i + 1].2 {
                let merged = (runs[i - 1].0, runs[i + 1].1, runs[i - 1].2);
                runs.splice(i - 1..=i + 1, [merged]);
                // The merged run may absorb the next short stretch too, so
                // the index stays.
            } else {
                let pivot = if runs[i - 1].2 == Decelerating {
                    (s..=e).fold(s, |best, k| if v[k] < v[best] { k } else { best })
                } else {
                    (s..=e).fold(s, |best, k| if v[k] > v[best] { k } else { best })
                };
                runs[i - 1].1 = pivot - 1;
                runs[i + 1].0 = pivot;
                runs.remove(i);
                i += 1;
            }
        } else {
            i += 1;
        }
    }
    runs
}

fn paint(
    out: &mut [Option<Tag>],
    offset: usize,
    runs: &[(usize, usize, LongitudinalActivity)],
) {
    for &(s, e, label) in runs {
        for slot in &mut out[offset + s..=offset + e] {
            *slot = Some(Tag::LongitudinalActivity(label));
        }
    }
}

fn ego_longitudinal(ego: &EgoTrack, params: &Params) -> Vec<Option<Tag>> {
    let mut out = vec![None; ego.speed.len()];
    paint(&mut out, 0, &speed_runs(&ego.speed, params));
    out
}

fn observed_runs(observed: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (k, &on) in observed.iter().enumerate() {
        match (on, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                runs.push((s, k - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, observed.len() - 1));
    }
    runs
}

fn object_longitudinal(track: &ObjectTrack, ego: &EgoTrack, params: &Params) -> Vec<Option<Tag>> {
    let mut out = vec![None; track.dx.len()];
    for (rs, re) in observed_runs(&track.observed) {
        let v: Vec<f64> = (rs..=re).map(|k| track.v_rel[k] + ego.speed[k]).collect();
        paint(&mut out, rs, &speed_runs(&v, params));
    }
    out
}

// ---------------------------------------------------------------------------
// Lateral activity
// ---------------------------------------------------------------------------

fn following(out: &mut [Option<Tag>], from: usize, to: usize) {
    for slot in &mut out[from..=to] {
        *slot = Some(Tag::LateralActivity(LateralActivity::FollowingLane));
    }
}

fn change(out: &mut [Option<Tag>], from: usize, to: usize, label: LateralActivity) {
    for slot in &mut out[from..=to] {
        *slot = Some(Tag::LateralActivity(label));
    }
}

fn ego_lateral(ego: &EgoTrack, params: &Params) -> Vec<Option<Tag>> {
    let n = ego.line_valid.len();
    let mut out = vec![None; n];
    following(&mut out, 0, n - 1);
    let valid: Vec<usize> = (0..n).filter(|&k| ego.line_valid[k]).collect();
    let m = valid.len();
    if m == 0 {
        return out;
    }
    let lc: Vec<f64> = valid.iter().map(|&k| ego.dy_left[k]).collect();
    let rc: Vec<f64> = valid.iter().map(|&k| ego.dy_right[k]).collect();
    let k_h = params.k_h;
    let lambda = params.v_lat * k_h as f64 * params.ts;

    let mut last_end: Option<usize> = None;
    for j in 1..m {
        if last_end.is_some_and(|le| valid[j] <= le) {
            continue;
        }
        let dl = lc[j] - lc[j - 1];
        let dr = rc[j] - rc[j - 1];
        let leftward = dl > params.delta_l && dr > params.delta_l;
        let rightward = dl < -params.delta_l && dr < -params.delta_l;
        if !leftward && !rightward {
            continue;
        }
        let settled = |jj: usize| {
            if rightward {
                lc[jj] - window_min(&lc, jj, k_h) < lambda
                    || rc[jj] - window_min(&rc, jj, k_h) < lambda
            } else {
                window_max(&lc, jj, k_h) - lc[jj] < lambda
                    || window_max(&rc, jj, k_h) - rc[jj] < lambda
            }
        };
        let start_j = (0..j).rev().find(|&jj| settled(jj)).unwrap_or(0);
        let end_j = (j + 1..m)
            .find(|&jj| settled((jj + k_h).min(m - 1)))
            .unwrap_or(m - 1);
        let mut start_k = valid[start_j];
        if let Some(le) = last_end {
            start_k = start_k.max(le + 1);
        }
        let end_k = valid[end_j];
        let label = if rightward {
            LateralActivity::ChangingLaneRight
        } else {
            LateralActivity::ChangingLaneLeft
        };
        change(&mut out, start_k, end_k, label);
        last_end = Some(end_k);
    }
    out
}

/// The object's distances to the ego lane lines at `k`: its own measurement
/// where valid, else derived from the ego's lines and the lateral offset.
fn lines_at(track: &ObjectTrack, ego: &EgoTrack, k: usize) -> Option<(f64, f64)> {
    if let Some(lines) = &track.lines {
        if lines.valid[k] {
            return Some((lines.dy_left[k], lines.dy_right[k]));
        }
    }
    if ego.line_valid[k] {
        Some((ego.dy_left[k] - track.dy[k], ego.dy_right[k] - track.dy[k]))
    } else {
        None
    }
}

fn object_lateral(track: &ObjectTrack, ego: &EgoTrack, params: &Params) -> Vec<Option<Tag>> {
    let n = track.dx.len();
    let mut out = vec![None; n];
    let k_h = params.k_h;
    let lambda = params.v_lat * k_h as f64 * params.ts;
    let mut last_end: Option<usize> = None;
    for (rs, re) in observed_runs(&track.observed) {
        following(&mut out, rs, re);
        let idx: Vec<usize> = (rs..=re)
            .filter(|&k| lines_at(track, ego, k).is_some())
            .collect();
        let m = idx.len();
        if m < 2 {
            continue;
        }
        let lc: Vec<f64> = idx.iter().map(|&k| lines_at(track, ego, k).unwrap().0).collect();
        let rc: Vec<f64> = idx.iter().map(|&k| lines_at(track, ego, k).unwrap().1).collect();

        for w in 1..m {
            if idx[w] != idx[w - 1] + 1 {
                continue;
            }
            if last_end.is_some_and(|le| idx[w] <= le) {
                continue;
            }
            // The four sign-flip signatures, tried in a fixed order.
            let (pl, pr, l, r) = (lc[w - 1], rc[w - 1], lc[w], rc[w]);
            let (to_right, via_left) = if pl <= 0.0 && l > 0.0 {
                (true, true) // entering rightwards over the left line
            } else if pr >= 0.0 && r < 0.0 {
                (false, false) // entering leftwards over the right line
            } else if pr <= 0.0 && r > 0.0 {
                (true, false) // leaving rightwards over the right line
            } else if pl >= 0.0 && l < 0.0 {
                (false, true) // leaving leftwards over the left line
            } else {
                continue;
            };
            let d: &[f64] = if via_left { &lc } else { &rc };
            let width = lc[w] - rc[w];
            let near = params.alpha2 * width;
            let far = params.alpha1 * width;
            let at_origin = |ww: usize| {
                if to_right {
                    d[ww] < -far
                        || (d[ww] - window_min(d, ww, k_h) < lambda && d[ww] < -near)
                } else {
                    d[ww] > far
                        || (window_max(d, ww, k_h) - d[ww] < lambda && d[ww] > near)
                }
            };
            let at_destination = |ww: usize| {
                let ahead = (ww + k_h).min(m - 1);
                if to_right {
                    d[ww] > far
                        || (d[ahead] - window_min(d, ahead, k_h) < lambda && d[ww] > near)
                } else {
                    d[ww] < -far
                        || (window_max(d, ahead, k_h) - d[ahead] < lambda && d[ww] < -near)
                }
            };
            let start_w = (0..w).rev().find(|&ww| at_origin(ww)).unwrap_or(0);
            let end_w = (w + 1..m).find(|&ww| at_destination(ww)).unwrap_or(m - 1);
            let mut start_k = idx[start_w];
            if let Some(le) = last_end {
                start_k = start_k.max(le + 1);
            }
            let end_k = idx[end_w];
            let label = if to_right {
                LateralActivity::ChangingLaneRight
            } else {
                LateralActivity::ChangingLaneLeft
            };
            change(&mut out, start_k, end_k, label);
            last_end = Some(end_k);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// States, lead, environment
// ---------------------------------------------------------------------------

fn object_longitudinal_state(track: &ObjectTrack) -> Vec<Option<Tag>> {
    (0..track.dx.len())
        .map(|k| {
            if !track.observed[k] {
                None
            } else if track.dx[k] > 0.0 {
                Some(Tag::LongitudinalState(LongitudinalState::InFrontOfEgo))
            } else {
                Some(Tag::LongitudinalState(LongitudinalState::BehindEgo))
            }
        })
        .collect()
}

fn object_lateral_state(track: &ObjectTrack, ego: &EgoTrack) -> Vec<Option<Tag>> {
    (0..track.dx.len())
        .map(|k| {
            if !track.observed[k] {
                return None;
            }
            let (l, r) = lines_at(track, ego, k)?;
            let state = match (l < 0.0, r < 0.0) {
                (true, true) => LateralState::LeftOfEgo,
                (false, true) => LateralState::SameLaneAsEgo,
                (true, false) => LateralState::Unclear,
                (false, false) => LateralState::RightOfEgo,
            };
            Some(Tag::LateralState(state))
        })
        .collect()
}

fn lead_tags(objects: &[&ObjectTrack], ego: &EgoTrack, params: &Params) -> Vec<Vec<Option<Tag>>> {
    let n = ego.speed.len();
    let mut winner: Vec<Option<usize>> = vec![None; n];
    for k in 0..n {
        if ego.speed[k] <= 0.0 {
            continue;
        }
        let mut best: Option<(f64, u64, usize)> = None;
        for (oi, track) in objects.iter().enumerate() {
            if !track.observed[k] || track.dx[k] <= 0.0 {
                continue;
            }
            let Some((l, r)) = lines_at(track, ego, k) else {
                continue;
            };
            if !(l >= 0.0 && r < 0.0) || track.dx[k] / ego.speed[k] >= params.tau_h {
                continue;
            }
            let better = match best {
                None => true,
                Some((bd, bid, _)) => (track.dx[k], track.id.0) < (bd, bid),
            };
            if better {
                best = Some((track.dx[k], track.id.0, oi));
            }
        }
        winner[k] = best.map(|(_, _, oi)| oi);
    }
    objects
        .iter()
        .enumerate()
        .map(|(oi, track)| {
            (0..n)
                .map(|k| {
                    if !track.observed[k] {
                        None
                    } else if winner[k] == Some(oi) {
                        Some(Tag::LeadVehicle(LeadVehicle::Leader))
                    } else {
                        Some(Tag::LeadVehicle(LeadVehicle::NoLeader))
                    }
                })
                .collect()
        })
        .collect()
}

fn environment(ego: &EgoTrack, n: usize) -> Result<Vec<Option<Tag>>> {
    let Some(road_class) = &ego.road_class else {
        return Err(Error::EnvironmentSourceMissing);
    };
    Ok((0..n)
        .map(|k| {
            let on = match road_class.get(k) {
                Some("motorway") => OnHighway::Highway,
                _ => OnHighway::NoHighway,
            };
            Some(Tag::OnHighway(on))
        })
        .collect())
}

/// Tag a dataset with the reference rules.
pub fn oracle_tag(dataset: &Dataset, params: &Params) -> Result<OracleTags> {
    params.validate()?;
    let n = dataset.timebase.n_samples;
    if n > MAX_ORACLE_SAMPLES {
        return Err(Error::OracleInputTooLarge {
            n,
            max: MAX_ORACLE_SAMPLES,
        });
    }
    let mut tracks: Vec<&ObjectTrack> = dataset.objects.iter().collect();
    tracks.sort_by_key(|t| t.id);
    let leads = lead_tags(&tracks, &dataset.ego, params);
    let objects = tracks
        .iter()
        .zip(leads)
        .map(|(track, lead)| OracleObjectTags {
            id: track.id,
            longitudinal: object_longitudinal(track, &dataset.ego, params),
            lateral: object_lateral(track, &dataset.ego, params),
            longitudinal_state: object_longitudinal_state(track),
            lateral_state: object_lateral_state(track, &dataset.ego),
            lead,
        })
        .collect();
    Ok(OracleTags {
        ego_longitudinal: ego_longitudinal(&dataset.ego, params),
        ego_lateral: ego_lateral(&dataset.ego, params),
        environment: environment(&dataset.ego, n)?,
        objects,
    })
}

/// Compare production tags against the reference, returning one line per
/// mismatching (subject, dimension, sample).
pub fn diff_against(oracle: &OracleTags, tagged: &TaggedDataset) -> Vec<String> {
    let n = tagged.timebase.n_samples;
    let mut mismatches = Vec::new();
    let mut check = |subject: Subject, dimension: TagDimension, expected: &[Option<Tag>]| {
        let got = tagged
            .stream(subject, dimension)
            .map(|s| s.sample_values(n))
            .unwrap_or_else(|| vec![None; n]);
        for k in 0..n {
            if got[k] != expected[k] {
                mismatches.push(format!(
                    "{} {} at k={k}: tagger {:?}, reference {:?}",
                    subject.to_token(),
                    dimension.as_str(),
                    got[k],
                    expected[k]
                ));
            }
        }
    };
    check(Subject::Ego, TagDimension::LongitudinalActivity, &oracle.ego_longitudinal);
    check(Subject::Ego, TagDimension::LateralActivity, &oracle.ego_lateral);
    check(Subject::Environment, TagDimension::OnHighway, &oracle.environment);
    for object in &oracle.objects {
        let subject = Subject::Object(object.id);
        check(subject, TagDimension::LongitudinalActivity, &object.longitudinal);
        check(subject, TagDimension::LateralActivity, &object.lateral);
        check(subject, TagDimension::LongitudinalState, &object.longitudinal_state);
        check(subject, TagDimension::LateralState, &object.lateral_state);
        check(subject, TagDimension::LeadVehicle, &object.lead);
    }
    mismatches
}

// ---------------------------------------------------------------------------
// Reference miner
// ---------------------------------------------------------------------------

/// What the reference miner reports: the span and its binding. Segment
/// boundaries are a presentation detail checked separately via
/// [`crate::miner::verify_instance`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceInstance {
    pub binding: BTreeMap<String, Subject>,
    pub start_k: usize,
    pub end_k: usize,
}

/// Enumerate instances directly from the definition: every span that can be
/// partitioned into the category's items is computed per start sample, the
/// one-step-maximal ones become candidates, and overlaps are thinned the
/// same way the production miner does (longest first, earlier start on
/// ties). Exponential corners are avoided only by the small-input intent.
pub fn mine_reference(
    tagged: &TaggedDataset,
    category: &Category,
    params: &Params,
) -> Result<Vec<ReferenceInstance>> {
    params.validate()?;
    for dim in category.ego_dimensions_used() {
        if !tagged.ego_dimensions.contains(&dim) {
            return Err(Error::UntaggedDimension {
                dimension: dim.as_str().into(),
                subject_kind: "ego".into(),
            });
        }
    }
    for dim in category.role_dimensions_used() {
        if !tagged.object_dimensions.contains(&dim) {
            return Err(Error::UntaggedDimension {
                dimension: dim.as_str().into(),
                subject_kind: "object".into(),
            });
        }
    }
    for dim in category.environment_dimensions_used() {
        if !tagged.environment_dimensions.contains(&dim) {
            return Err(Error::UntaggedDimension {
                dimension: dim.as_str().into(),
                subject_kind: "environment".into(),
            });
        }
    }

    let n = tagged.timebase.n_samples;
    let ids: Vec<ObjectId> = tagged.object_ids.iter().copied().collect();
    let mut all = Vec::new();
    if n == 0 {
        return Ok(all);
    }
    for binding in injective_assignments(category.role_names.len(), &ids) {
        let subjects: Vec<Subject> = binding.iter().map(|&id| Subject::Object(id)).collect();
        let holds: Vec<Vec<bool>> = category
            .items
            .iter()
            .map(|item| {
                (0..n)
                    .map(|k| {
                        item.ego.iter().all(|(dim, expr)| {
                            expr.matches(tagged.value_at(Subject::Ego, *dim, k))
                        }) && item.environment.iter().all(|(dim, expr)| {
                            expr.matches(tagged.value_at(Subject::Environment, *dim, k))
                        }) && item.roles.iter().zip(&subjects).all(|(cs, &subject)| {
                            cs.iter()
                                .all(|(dim, expr)| expr.matches(tagged.value_at(subject, *dim, k)))
                        })
                    })
                    .collect()
            })
            .collect();

        let ends: Vec<BTreeSet<usize>> = (0..n)
            .map(|s| valid_ends(s, &holds, params.min_item_len, params.item_gap))
            .collect();
        let mut candidates: Vec<(usize, usize)> = Vec::new();
        for s in 0..n {
            for &e in &ends[s] {
                let wider_right = ends[s].contains(&(e + 1));
                let wider_left = s > 0 && ends[s - 1].contains(&e);
                if !wider_right && !wider_left {
                    candidates.push((s, e));
                }
            }
        }
        candidates.sort_by(|a, b| {
            let (la, lb) = (a.1 - a.0, b.1 - b.0);
            lb.cmp(&la).then(a.0.cmp(&b.0))
        });
        let mut kept: Vec<(usize, usize)> = Vec::new();
        for (s, e) in candidates {
            if kept.iter().all(|&(ks, ke)| e < ks || s > ke) {
                kept.push((s, e));
            }
        }
        for (start_k, end_k) in kept {
            all.push(ReferenceInstance {
                binding: category
                    .role_names
                    .iter()
                    .cloned()
                    .zip(subjects.iter().copied())
                    .collect(),
                start_k,
                end_k,
            });
        }
    }
    all.sort_by(|a, b| {
        let ta: Vec<String> = a.binding.values().map(|s| s.to_token()).collect();
        let tb: Vec<String> = b.binding.values().map(|s| s.to_token()).collect();
        (a.start_k, a.end_k, ta).cmp(&(b.start_k, b.end_k, tb))
    });
    Ok(all)
}

fn injective_assignments(count: usize, ids: &[ObjectId]) -> Vec<Vec<ObjectId>> {
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

/// Every sample at which a span starting at `s` can end: item 0 must start
/// exactly at `s`, each item covers a stretch of its own truth, segments are
/// at least `min_len` long and separated by at most `gap` dead samples.
fn valid_ends(s: usize, holds: &[Vec<bool>], min_len: usize, gap: usize) -> BTreeSet<usize> {
    let n = holds[0].len();
    let mut current = BTreeSet::new();
    let mut b = s;
    while b < n && holds[0][b] {
        if b + 1 - s >= min_len {
            current.insert(b);
        }
        b += 1;
    }
    for mask in &holds[1..] {
        let mut next = BTreeSet::new();
        for &prev_end in &current {
            for a in prev_end + 1..=(prev_end + 1 + gap).min(n.saturating_sub(1)) {
                let mut b = a;
                while b < n && mask[b] {
                    if b + 1 - a >= min_len {
                        next.insert(b);
                    }
                    b += 1;
                }
            }
        }
        current = next;
    }
    current
}
