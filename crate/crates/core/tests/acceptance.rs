//! Acceptance gate for the whole pipeline: seven criteria, each a test that
//! prints exactly one PASS/FAIL line. Tolerances are pinned inline.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use proptest::test_runner::{Config, TestCaseError, TestError, TestRunner};

use tagmine::category::{builtin_category, Category};
use tagmine::eval::{evaluate, metrics_from_counts};
use tagmine::ingest::Dataset;
use tagmine::miner::{mine, verify_instance, Instance};
use tagmine::model::{
    EgoTrack, LateralActivity, LateralState, LongitudinalActivity, ObjectId, ObjectTrack, Params,
    RoadClassSeries, Subject, Tag, TagDimension, TagStream, TaggedDataset, Timebase,
};
use tagmine::synth::oracle::{diff_against, mine_reference, oracle_tag, ReferenceInstance};
use tagmine::synth::{
    add_noise, gen_cutin_scene, gen_overtake_scene, gen_random_dataset, gen_speed_profile,
    CutInConfig, NoiseConfig, OvertakeConfig, Scene, SpeedSegment,
};
use tagmine::tagger::tag_dataset;

fn criterion<F: FnOnce() -> Result<String, String>>(number: usize, name: &str, body: F) {
    match body() {
        Ok(detail) => {
            if detail.is_empty() {
                println!("acceptance criterion {number} ({name}): PASS");
            } else {
                println!("acceptance criterion {number} ({name}): PASS  [{detail}]");
            }
        }
        Err(message) => {
            println!("acceptance criterion {number} ({name}): FAIL  {message}");
            panic!("acceptance criterion {number} ({name}) failed: {message}");
        }
    }
}

fn ensure(cond: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(message())
    }
}

// ---------------------------------------------------------------------------
// 1: metric identities
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_metric_identities() {
    criterion(1, "metric identities", || {
        const TOL: f64 = 1e-12;
        let close = |got: f64, want: f64, what: &str| {
            ensure((got - want).abs() <= TOL, || {
                format!("{what}: got {got}, want {want} within {TOL}")
            })
        };

        let m = metrics_from_counts(33, 3, 3);
        let want = 33.0 / 36.0;
        close(m.precision, want, "precision(33,3,3)")?;
        close(m.recall, want, "recall(33,3,3)")?;
        close(m.f1, want, "f1(33,3,3)")?;
        ensure((m.f1 * 100.0).round() == 92.0, || {
            format!("f1(33,3,3) should round to 92%, got {}", m.f1 * 100.0)
        })?;

        let m = metrics_from_counts(18, 0, 1);
        close(m.precision, 1.0, "precision(18,0,1)")?;
        close(m.recall, 18.0 / 19.0, "recall(18,0,1)")?;
        close(m.f1, 36.0 / 37.0, "f1(18,0,1)")?;
        ensure((m.recall * 1000.0).round() == 947.0, || {
            format!("recall(18,0,1) should be ~0.947, got {}", m.recall)
        })?;
        ensure((m.f1 * 1000.0).round() == 973.0, || {
            format!("f1(18,0,1) should be ~0.973, got {}", m.f1)
        })?;
        Ok(String::new())
    });
}

// ---------------------------------------------------------------------------
// 2: trapezoidal profile label sequence
// ---------------------------------------------------------------------------

fn dataset_from_speed(speed: Vec<f64>, params: &Params) -> Dataset {
    let n = speed.len();
    let mut road_class = RoadClassSeries::new(n);
    for k in 0..n {
        road_class.set(k, "motorway");
    }
    Dataset {
        timebase: Timebase::new(n, params.ts, 0.0),
        ego: EgoTrack {
            speed,
            dy_left: vec![1.75; n],
            dy_right: vec![-1.75; n],
            line_valid: vec![true; n],
            position: None,
            road_class: Some(road_class),
        },
        objects: vec![],
    }
}

fn stream_labels(stream: &TagStream) -> Vec<LongitudinalActivity> {
    stream
        .intervals
        .iter()
        .map(|iv| match iv.value {
            Tag::LongitudinalActivity(label) => label,
            other => panic!("unexpected tag {other:?} in a longitudinal stream"),
        })
        .collect()
}

#[test]
fn criterion_2_trapezoid_sequence() {
    criterion(2, "trapezoid label sequence", || {
        use LongitudinalActivity::{Accelerating, Cruising, Decelerating};
        let params = Params::default();
        let (speed, expected) = gen_speed_profile(
            20.0,
            &[
                SpeedSegment::Hold { duration_s: 10.0 },
                SpeedSegment::Ramp { duration_s: 5.0, accel: 1.0 },
                SpeedSegment::Hold { duration_s: 10.0 },
                SpeedSegment::Ramp { duration_s: 5.0, accel: -1.0 },
                SpeedSegment::Hold { duration_s: 10.0 },
            ],
            &params,
        )
        .map_err(|e| e.to_string())?;
        let want = vec![Cruising, Accelerating, Cruising, Decelerating, Cruising];
        ensure(expected == want, || {
            format!("generator expectation {expected:?}, want {want:?}")
        })?;

        let dataset = dataset_from_speed(speed, &params);
        let tagged = tag_dataset(&dataset, &params, None).map_err(|e| e.to_string())?;
        let stream = tagged
            .stream(Subject::Ego, TagDimension::LongitudinalActivity)
            .ok_or("missing ego longitudinal stream")?;
        let got = stream_labels(stream);
        ensure(got == want, || format!("tagger produced {got:?}, want {want:?}"))?;
        Ok(String::new())
    });
}

// ---------------------------------------------------------------------------
// 3: oracle equivalence on random fixtures
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_oracle_equivalence() {
    criterion(3, "oracle equivalence", || {
        let params = Params::default();
        let fixtures = 1000u64;
        let mut mismatches = 0usize;
        let mut first = String::new();
        for seed in 0..fixtures {
            let dataset = gen_random_dataset(seed, &params);
            ensure(dataset.timebase.n_samples <= 2000, || {
                format!("fixture {seed} has {} samples", dataset.timebase.n_samples)
            })?;
            ensure(dataset.objects.len() <= 3, || {
                format!("fixture {seed} has {} objects", dataset.objects.len())
            })?;
            let tagged = tag_dataset(&dataset, &params, None).map_err(|e| e.to_string())?;
            let oracle = oracle_tag(&dataset, &params).map_err(|e| e.to_string())?;
            let diff = diff_against(&oracle, &tagged);
            if !diff.is_empty() {
                if mismatches == 0 {
                    first = format!("seed {seed}: {}", diff[0]);
                }
                mismatches += diff.len();
            }
        }
        ensure(mismatches == 0, || {
            format!("{mismatches} mismatched samples across {fixtures} fixtures; first: {first}")
        })?;
        Ok(format!("{fixtures} fixtures, 0 mismatched samples"))
    });
}

// ---------------------------------------------------------------------------
// 4: miner soundness and completeness on small inputs
// ---------------------------------------------------------------------------

/// Random tag streams over every dimension, with gaps on object streams.
fn random_tagged(seed: u64, n: usize, object_count: usize) -> TaggedDataset {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut streams = Vec::new();
    let mut fill = |subject: Subject, dimension: TagDimension, rng: &mut rand_chacha::ChaCha8Rng| {
        let choices: &[&str] = match dimension {
            TagDimension::LongitudinalActivity => &["accelerating", "decelerating", "cruising"],
            TagDimension::LateralActivity => {
                &["following_lane", "changing_lane_left", "changing_lane_right"]
            }
            TagDimension::LongitudinalState => &["in_front_of_ego", "behind_ego"],
            TagDimension::LateralState => {
                &["left_of_ego", "same_lane_as_ego", "right_of_ego", "unclear"]
            }
            TagDimension::LeadVehicle => &["leader", "no_leader"],
            TagDimension::OnHighway => &["highway", "no_highway"],
        };
        let mut stream = TagStream::new(subject, dimension);
        let with_gaps = matches!(subject, Subject::Object(_));
        let mut k = 0;
        while k < n {
            let len = rng.gen_range(3..50).min(n - k);
            if with_gaps && rng.gen_bool(0.2) {
                k += len;
                continue;
            }
            let value = Tag::parse(dimension, choices[rng.gen_range(0..choices.len())]).unwrap();
            stream.push(k, k + len - 1, value);
            k += len;
        }
        streams.push(stream);
    };
    for dim in tagmine::tagger::ego_dimensions() {
        fill(Subject::Ego, dim, &mut rng);
    }
    for dim in tagmine::tagger::environment_dimensions() {
        fill(Subject::Environment, dim, &mut rng);
    }
    for id in 1..=object_count as u64 {
        for dim in tagmine::tagger::object_dimensions() {
            fill(Subject::Object(ObjectId(id)), dim, &mut rng);
        }
    }
    TaggedDataset::new(
        Timebase::new(n, 0.01, 0.0),
        streams,
        tagmine::tagger::ego_dimensions(),
        tagmine::tagger::object_dimensions(),
        tagmine::tagger::environment_dimensions(),
        (1..=object_count as u64).map(ObjectId).collect(),
    )
}

/// Per-item truth of a category under one binding, straight from the tags.
fn item_truth(
    tagged: &TaggedDataset,
    category: &Category,
    binding: &BTreeMap<String, Subject>,
) -> Vec<Vec<bool>> {
    let n = tagged.timebase.n_samples;
    let subjects: Vec<Subject> = category
        .role_names
        .iter()
        .map(|role| binding[role])
        .collect();
    category
        .items
        .iter()
        .map(|item| {
            (0..n)
                .map(|k| {
                    item.ego
                        .iter()
                        .all(|(d, e)| e.matches(tagged.value_at(Subject::Ego, *d, k)))
                        && item
                            .environment
                            .iter()
                            .all(|(d, e)| e.matches(tagged.value_at(Subject::Environment, *d, k)))
                        && item.roles.iter().zip(&subjects).all(|(cs, &subject)| {
                            cs.iter().all(|(d, e)| e.matches(tagged.value_at(subject, *d, k)))
                        })
                })
                .collect()
        })
        .collect()
}

/// All samples at which a span starting at `s` may end, by definition.
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

fn spans(instances: &[Instance]) -> Vec<ReferenceInstance> {
    instances
        .iter()
        .map(|i| ReferenceInstance {
            binding: i.binding.clone(),
            start_k: i.start_k,
            end_k: i.end_k,
        })
        .collect()
}

#[test]
fn criterion_4_miner_soundness_completeness() {
    criterion(4, "miner equals exhaustive enumeration", || {
        let extra = [
            Category::from_json_str(
                r#"{"name":"shadowing","roles":["target"],
                    "items":[{"target":{"lead_vehicle":"leader"}}]}"#,
            )
            .unwrap(),
            Category::from_json_str(
                r#"{"name":"drift_then_settle","roles":[],
                    "items":[
                      {"ego":{"lateral_activity":{"any_of":["changing_lane_left","changing_lane_right"]}}},
                      {"ego":{"lateral_activity":"following_lane"}}]}"#,
            )
            .unwrap(),
        ];
        let categories = [
            builtin_category("cut_in").unwrap(),
            builtin_category("overtaking").unwrap(),
            extra[0].clone(),
            extra[1].clone(),
        ];
        let grid = [(0usize, 1usize), (4, 1), (0, 5), (6, 3)];
        let mut verified = 0usize;
        for seed in 0..30u64 {
            let n = 260 + (seed as usize % 3) * 80;
            let tagged = random_tagged(seed, n, 2);
            for category in &categories {
                for (item_gap, min_item_len) in grid {
                    let params = Params {
                        item_gap,
                        min_item_len,
                        ..Params::default()
                    };
                    let mined = mine(&tagged, category, &params).map_err(|e| e.to_string())?;
                    let reference = mine_reference(&tagged, category, &params)
                        .map_err(|e| e.to_string())?;
                    let got = spans(&mined);
                    ensure(got == reference, || {
                        format!(
                            "seed {seed} n {n} category {} gap {item_gap} min {min_item_len}: \
                             miner found {} spans, reference {}",
                            category.name,
                            got.len(),
                            reference.len()
                        )
                    })?;
                    for instance in &mined {
                        verify_instance(instance, &tagged, category, &params)
                            .map_err(|e| format!("verify_instance: {e}"))?;
                        let holds = item_truth(&tagged, category, &instance.binding);
                        let (s, e) = (instance.start_k, instance.end_k);
                        let ends = valid_ends(s, &holds, min_item_len, item_gap);
                        ensure(ends.contains(&e), || {
                            format!("span [{s}, {e}] of {} is not valid at all", category.name)
                        })?;
                        ensure(!ends.contains(&(e + 1)), || {
                            format!("span [{s}, {e}] of {} survives a right extension", category.name)
                        })?;
                        if s > 0 {
                            let left = valid_ends(s - 1, &holds, min_item_len, item_gap);
                            ensure(!left.contains(&e), || {
                                format!(
                                    "span [{s}, {e}] of {} survives a left extension",
                                    category.name
                                )
                            })?;
                        }
                        verified += 1;
                    }
                }
            }
        }
        ensure(verified >= 300, || {
            format!("only {verified} instances exercised, wanted at least 300")
        })?;
        Ok(format!("{verified} instances verified and maximal"))
    });
}

// ---------------------------------------------------------------------------
// 5: planted-truth corpus, clean and noisy
// ---------------------------------------------------------------------------

fn cutin_corpus(params: &Params) -> Vec<Scene> {
    (0..50)
        .map(|i| {
            let config = CutInConfig {
                duration_s: 60.0,
                t_cut_s: 18.0 + 0.4 * i as f64,
                gap_m: 15.0 + (i % 7) as f64 * 3.0,
                end_dy_m: 0.0,
                lateral_speed_ms: 0.8 + (i % 5) as f64 * 0.1,
                ego_speed_ms: 25.0,
            };
            gen_cutin_scene(&config, params).expect("corpus config is consistent")
        })
        .collect()
}

fn overtake_corpus(params: &Params) -> Vec<Scene> {
    (0..50)
        .map(|i| {
            let config = OvertakeConfig {
                t_change_s: 20.0 + 0.3 * i as f64,
                start_dx_m: -(45.0 + (i % 6) as f64 * 5.0),
                closing_speed_ms: 4.0 + (i % 4) as f64,
                ego_speed_ms: 25.0,
                lateral_speed_ms: 0.8 + (i % 5) as f64 * 0.1,
            };
            gen_overtake_scene(&config, params).expect("corpus config is consistent")
        })
        .collect()
}

/// Mine each scene for its planted category and accumulate match counts.
fn score_corpus(
    scenes: &[Scene],
    category: &Category,
    params: &Params,
    noise: Option<(f64, f64)>,
) -> Result<(usize, usize, usize), String> {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (index, scene) in scenes.iter().enumerate() {
        let mut dataset = scene.dataset.clone();
        if let Some((sigma_speed, sigma_line)) = noise {
            add_noise(
                &mut dataset,
                &NoiseConfig {
                    sigma_speed,
                    sigma_line,
                    seed: 1000 + index as u64,
                },
            )
            .map_err(|e| e.to_string())?;
        }
        let tagged = tag_dataset(&dataset, params, None).map_err(|e| e.to_string())?;
        let instances = mine(&tagged, category, params).map_err(|e| e.to_string())?;
        let report = evaluate(&instances, &scene.truth, params).map_err(|e| e.to_string())?;
        tp += report.metrics.true_positives;
        fp += report.metrics.false_positives;
        fn_ += report.metrics.false_negatives;
    }
    Ok((tp, fp, fn_))
}

#[test]
fn criterion_5_planted_truth_end_to_end() {
    criterion(5, "planted-truth corpus", || {
        let clean = Params::default();
        let cutins = cutin_corpus(&clean);
        let overtakes = overtake_corpus(&clean);
        let cut_in = builtin_category("cut_in").unwrap();
        let overtaking = builtin_category("overtaking").unwrap();

        let mut clean_detail = Vec::new();
        for (scenes, category) in [(&cutins, &cut_in), (&overtakes, &overtaking)] {
            let (tp, fp, fn_) = score_corpus(scenes, category, &clean, None)?;
            let m = metrics_from_counts(tp, fp, fn_);
            ensure(m.precision == 1.0 && m.recall == 1.0, || {
                format!(
                    "clean corpus, {}: precision {} recall {} (tp {tp} fp {fp} fn {fn_})",
                    category.name, m.precision, m.recall
                )
            })?;
            clean_detail.push(format!("{} P=R=1", category.name));
        }

        // Bridging parameters for noisy runs: measurement noise chops tag
        // intervals, so let items tolerate short dropouts.
        let noisy = Params {
            item_gap: 50,
            min_item_len: 5,
            ..Params::default()
        };
        let sigma = (0.3, 0.05);
        let mut noisy_detail = Vec::new();
        for (scenes, category) in [(&cutins, &cut_in), (&overtakes, &overtaking)] {
            let (tp, fp, fn_) = score_corpus(scenes, category, &noisy, Some(sigma))?;
            let m = metrics_from_counts(tp, fp, fn_);
            ensure(m.f1 >= 0.9, || {
                format!(
                    "noisy corpus, {}: F1 {} < 0.9 (tp {tp} fp {fp} fn {fn_})",
                    category.name, m.f1
                )
            })?;
            noisy_detail.push(format!("{} F1={:.3}", category.name, m.f1));
        }
        Ok(format!(
            "clean: {}; noisy sigma_v=0.3 sigma_line=0.05: {}",
            clean_detail.join(", "),
            noisy_detail.join(", ")
        ))
    });
}

// ---------------------------------------------------------------------------
// 6: invariants on every fixture
// ---------------------------------------------------------------------------

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

/// Assert that the stream's intervals exactly tile `runs`.
fn tiles_runs(stream: &TagStream, runs: &[(usize, usize)]) -> Result<(), String> {
    let mut intervals = stream.intervals.iter().peekable();
    for &(rs, re) in runs {
        let mut at = rs;
        while at <= re {
            let iv = intervals.next().ok_or_else(|| {
                format!(
                    "{}/{}: run [{rs}, {re}] uncovered from {at}",
                    stream.subject.to_token(),
                    stream.dimension.as_str()
                )
            })?;
            if iv.start_k != at || iv.end_k > re {
                return Err(format!(
                    "{}/{}: interval [{}, {}] does not tile run [{rs}, {re}] at {at}",
                    stream.subject.to_token(),
                    stream.dimension.as_str(),
                    iv.start_k,
                    iv.end_k
                ));
            }
            at = iv.end_k + 1;
        }
    }
    if let Some(iv) = intervals.next() {
        return Err(format!(
            "{}/{}: stray interval [{}, {}] outside every observed run",
            stream.subject.to_token(),
            stream.dimension.as_str(),
            iv.start_k,
            iv.end_k
        ));
    }
    Ok(())
}

fn check_invariants(
    dataset: &Dataset,
    tagged: &TaggedDataset,
    params: &Params,
) -> Result<(), String> {
    let n = dataset.timebase.n_samples;
    let whole = [(0usize, n - 1)];

    // Timeline tiling: ego and environment streams cover every sample.
    for (subject, dimension) in [
        (Subject::Ego, TagDimension::LongitudinalActivity),
        (Subject::Ego, TagDimension::LateralActivity),
        (Subject::Environment, TagDimension::OnHighway),
    ] {
        let stream = tagged
            .stream(subject, dimension)
            .ok_or_else(|| format!("missing stream {}/{}", subject.to_token(), dimension.as_str()))?;
        tiles_runs(stream, &whole)?;
    }

    let line_source = |track: &ObjectTrack, k: usize| {
        track
            .lines
            .as_ref()
            .map(|lines| lines.valid[k])
            .unwrap_or(false)
            || dataset.ego.line_valid[k]
    };

    let mut leaders_at = vec![0usize; n];
    for track in &dataset.objects {
        let subject = Subject::Object(track.id);
        let runs = observed_runs(&track.observed);

        // Tiling: activity, longitudinal state and lead cover exactly the
        // observed samples; lateral state covers observed samples that have
        // a line source.
        for dimension in [
            TagDimension::LongitudinalActivity,
            TagDimension::LateralActivity,
            TagDimension::LongitudinalState,
            TagDimension::LeadVehicle,
        ] {
            let stream = tagged.stream(subject, dimension).ok_or_else(|| {
                format!("missing stream {}/{}", subject.to_token(), dimension.as_str())
            })?;
            tiles_runs(stream, &runs)?;
        }
        let lateral_state = tagged
            .stream(subject, TagDimension::LateralState)
            .ok_or_else(|| format!("missing stream {}/lateral_state", subject.to_token()))?;
        let got = lateral_state.sample_values(n);
        for k in 0..n {
            let want = track.observed[k] && line_source(track, k);
            if got[k].is_some() != want {
                return Err(format!(
                    "{}/lateral_state at {k}: tagged {}, expected {}",
                    subject.to_token(),
                    got[k].is_some(),
                    want
                ));
            }
        }

        // Leader bookkeeping, plus the implication that a leader is in
        // front and in the ego lane at the same sample.
        let lead = tagged
            .stream(subject, TagDimension::LeadVehicle)
            .expect("checked above")
            .sample_values(n);
        let longitudinal_state = tagged
            .stream(subject, TagDimension::LongitudinalState)
            .expect("checked above")
            .sample_values(n);
        for k in 0..n {
            if lead[k] == Some(Tag::LeadVehicle(tagmine::model::LeadVehicle::Leader)) {
                leaders_at[k] += 1;
                if longitudinal_state[k]
                    != Some(Tag::LongitudinalState(
                        tagmine::model::LongitudinalState::InFrontOfEgo,
                    ))
                {
                    return Err(format!(
                        "{} leads at {k} without being in front",
                        subject.to_token()
                    ));
                }
                if got[k]
                    != Some(Tag::LateralState(tagmine::model::LateralState::SameLaneAsEgo))
                {
                    return Err(format!(
                        "{} leads at {k} outside the ego lane",
                        subject.to_token()
                    ));
                }
            }
        }

        // Speed-change bound on object activity intervals.
        let speed: Vec<f64> = (0..n).map(|k| track.v_rel[k] + dataset.ego.speed[k]).collect();
        let stream = tagged
            .stream(subject, TagDimension::LongitudinalActivity)
            .expect("checked above");
        delta_v_bound(stream, &speed, params)?;
        interior_cruising_bound(stream, &runs, params)?;
    }

    for (k, &count) in leaders_at.iter().enumerate() {
        if count > 1 {
            return Err(format!("{count} objects tagged as leader at sample {k}"));
        }
    }

    let ego_stream = tagged
        .stream(Subject::Ego, TagDimension::LongitudinalActivity)
        .expect("checked above");
    delta_v_bound(ego_stream, &dataset.ego.speed, params)?;
    interior_cruising_bound(ego_stream, &whole, params)?;
    Ok(())
}

/// Every accelerating interval spans a signed speed gain above `delta_v`
/// from its first sample to its peak; decelerating intervals a matching
/// loss to their trough. The literal end-vs-start difference is weaker than
/// this on purpose: dissolving a short cruising stretch between opposite
/// activities splits it at a pivot, and on noisy traces the appended samples
/// can leave an interval ending on the wrong side of its start.
fn delta_v_bound(stream: &TagStream, speed: &[f64], params: &Params) -> Result<(), String> {
    use LongitudinalActivity::{Accelerating, Decelerating};
    for iv in &stream.intervals {
        let span = &speed[iv.start_k..=iv.end_k];
        match iv.value {
            Tag::LongitudinalActivity(Accelerating) => {
                let peak = span.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                if peak - span[0] <= params.delta_v {
                    return Err(format!(
                        "accelerating interval [{}, {}] gains only {} m/s",
                        iv.start_k,
                        iv.end_k,
                        peak - span[0]
                    ));
                }
            }
            Tag::LongitudinalActivity(Decelerating) => {
                let trough = span.iter().fold(f64::INFINITY, |a, &b| a.min(b));
                if span[0] - trough <= params.delta_v {
                    return Err(format!(
                        "decelerating interval [{}, {}] loses only {} m/s",
                        iv.start_k,
                        iv.end_k,
                        span[0] - trough
                    ));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Reflect the lateral axis: every lane line and lateral offset changes
/// sign, and left and right lines trade places.
fn mirrored(dataset: &Dataset) -> Dataset {
    let mut out = dataset.clone();
    out.ego.dy_left = dataset.ego.dy_right.iter().map(|v| -v).collect();
    out.ego.dy_right = dataset.ego.dy_left.iter().map(|v| -v).collect();
    for (track, orig) in out.objects.iter_mut().zip(&dataset.objects) {
        track.dy = orig.dy.iter().map(|v| -v).collect();
        if let (Some(lines), Some(source)) = (track.lines.as_mut(), orig.lines.as_ref()) {
            lines.dy_left = source.dy_right.iter().map(|v| -v).collect();
            lines.dy_right = source.dy_left.iter().map(|v| -v).collect();
        }
    }
    out
}

/// The tag the mirrored dataset should carry where the original carried
/// `tag`: left and right swap, everything else is unaffected.
fn mirror_tag(tag: Tag) -> Tag {
    match tag {
        Tag::LateralActivity(LateralActivity::ChangingLaneLeft) => {
            Tag::LateralActivity(LateralActivity::ChangingLaneRight)
        }
        Tag::LateralActivity(LateralActivity::ChangingLaneRight) => {
            Tag::LateralActivity(LateralActivity::ChangingLaneLeft)
        }
        Tag::LateralState(LateralState::LeftOfEgo) => Tag::LateralState(LateralState::RightOfEgo),
        Tag::LateralState(LateralState::RightOfEgo) => Tag::LateralState(LateralState::LeftOfEgo),
        other => other,
    }
}

/// The lane lines an object is judged against at sample `k`: its own lines
/// where observed, otherwise the ego lines shifted into the object's frame.
fn line_source_at(dataset: &Dataset, track: &ObjectTrack, k: usize) -> Option<(f64, f64)> {
    if let Some(lines) = &track.lines {
        if lines.valid[k] {
            return Some((lines.dy_left[k], lines.dy_right[k]));
        }
    }
    if dataset.ego.line_valid[k] {
        Some((
            dataset.ego.dy_left[k] - track.dy[k],
            dataset.ego.dy_right[k] - track.dy[k],
        ))
    } else {
        None
    }
}

/// Tagging the mirrored dataset must yield exactly the mirrored tags.
/// Compared per sample. A sample whose line source lands exactly on a lane
/// line falls on the opposite side of a strict comparison after reflection
/// (the planted cut-in ramp really does hit 0.0 in f64), so such samples are
/// exempt from the lateral-state check of that object and from every
/// lead-vehicle check, where one flipped candidate can change the pick.
fn check_mirror(dataset: &Dataset, tagged: &TaggedDataset, params: &Params) -> Result<(), String> {
    let flipped = tag_dataset(&mirrored(dataset), params, None).map_err(|e| e.to_string())?;
    if flipped.streams.len() != tagged.streams.len() {
        return Err(format!(
            "mirrored dataset produced {} streams instead of {}",
            flipped.streams.len(),
            tagged.streams.len()
        ));
    }
    let n = dataset.timebase.n_samples;

    let zero_line: BTreeMap<ObjectId, Vec<bool>> = dataset
        .objects
        .iter()
        .map(|track| {
            let mut zeros = vec![false; n];
            for (k, flag) in zeros.iter_mut().enumerate() {
                if track.observed[k] {
                    if let Some((l, r)) = line_source_at(dataset, track, k) {
                        *flag = l == 0.0 || r == 0.0;
                    }
                }
            }
            (track.id, zeros)
        })
        .collect();
    let any_zero: Vec<bool> = (0..n).map(|k| zero_line.values().any(|z| z[k])).collect();

    for stream in &tagged.streams {
        let twin = flipped.stream(stream.subject, stream.dimension).ok_or_else(|| {
            format!(
                "mirrored dataset lost stream {}/{}",
                stream.subject.to_token(),
                stream.dimension.as_str()
            )
        })?;
        let a = stream.sample_values(n);
        let b = twin.sample_values(n);
        for k in 0..n {
            let exempt = match (stream.subject, stream.dimension) {
                (Subject::Object(id), TagDimension::LateralState) => zero_line[&id][k],
                (_, TagDimension::LeadVehicle) => any_zero[k],
                _ => false,
            };
            if !exempt && b[k] != a[k].map(mirror_tag) {
                return Err(format!(
                    "{}/{} at {k}: {:?} mirrors to {:?}",
                    stream.subject.to_token(),
                    stream.dimension.as_str(),
                    a[k].map(|t| t.as_str()),
                    b[k].map(|t| t.as_str())
                ));
            }
        }
    }
    Ok(())
}

/// Tags depend only on sample index, never on absolute time: re-tagging with
/// a shifted origin must reproduce every stream verbatim.
fn check_time_shift(
    dataset: &Dataset,
    tagged: &TaggedDataset,
    params: &Params,
) -> Result<(), String> {
    let mut shifted = dataset.clone();
    shifted.timebase =
        Timebase::new(dataset.timebase.n_samples, dataset.timebase.sample_time_s, 86_400.0);
    let retagged = tag_dataset(&shifted, params, None).map_err(|e| e.to_string())?;
    if retagged.streams.len() != tagged.streams.len() {
        return Err("time shift changed the stream count".into());
    }
    for stream in &tagged.streams {
        let twin = retagged
            .stream(stream.subject, stream.dimension)
            .ok_or_else(|| "time shift lost a stream".to_string())?;
        if twin.intervals != stream.intervals {
            return Err(format!(
                "time shift changed {}/{}",
                stream.subject.to_token(),
                stream.dimension.as_str()
            ));
        }
    }
    Ok(())
}

/// Every ego lane-change interval must contain one pair of consecutive
/// line-valid samples where both lines jump past `delta_l` in the tagged
/// direction (positive offsets point left, so a left change re-anchors both
/// lines upward). Only exercised on planted scenes: random traces can clamp
/// an interval short of its anchoring jump when changes come back to back.
fn check_ego_change_jumps(
    dataset: &Dataset,
    tagged: &TaggedDataset,
    params: &Params,
) -> Result<(), String> {
    let stream = tagged
        .stream(Subject::Ego, TagDimension::LateralActivity)
        .ok_or_else(|| "missing ego lateral stream".to_string())?;
    for iv in &stream.intervals {
        let direction = match iv.value {
            Tag::LateralActivity(LateralActivity::ChangingLaneLeft) => 1.0,
            Tag::LateralActivity(LateralActivity::ChangingLaneRight) => -1.0,
            _ => continue,
        };
        let valid: Vec<usize> =
            (iv.start_k..=iv.end_k).filter(|&k| dataset.ego.line_valid[k]).collect();
        let anchored = valid.windows(2).any(|pair| {
            let dl = dataset.ego.dy_left[pair[1]] - dataset.ego.dy_left[pair[0]];
            let dr = dataset.ego.dy_right[pair[1]] - dataset.ego.dy_right[pair[0]];
            dl * direction > params.delta_l && dr * direction > params.delta_l
        });
        if !anchored {
            return Err(format!(
                "ego {} interval [{}, {}] contains no anchoring line jump",
                iv.value.as_str(),
                iv.start_k,
                iv.end_k
            ));
        }
    }
    Ok(())
}

/// No cruising interval with activity on both sides (within one observed
/// run) may be shorter than `k_cruise`.
fn interior_cruising_bound(
    stream: &TagStream,
    runs: &[(usize, usize)],
    params: &Params,
) -> Result<(), String> {
    use LongitudinalActivity::Cruising;
    for &(rs, re) in runs {
        let in_run: Vec<_> = stream
            .intervals
            .iter()
            .filter(|iv| iv.start_k >= rs && iv.end_k <= re)
            .collect();
        for window in in_run.windows(3) {
            let iv = window[1];
            if iv.value == Tag::LongitudinalActivity(Cruising)
                && iv.end_k - iv.start_k + 1 < params.k_cruise
            {
                return Err(format!(
                    "interior cruising interval [{}, {}] is shorter than k_cruise",
                    iv.start_k, iv.end_k
                ));
            }
        }
    }
    Ok(())
}

#[test]
fn criterion_6_invariant_suite() {
    criterion(6, "invariant suite", || {
        let params = Params::default();

        // Planted scenes, clean and noisy.
        let mut fixtures: Vec<Dataset> = Vec::new();
        fixtures.push(gen_cutin_scene(&CutInConfig::default(), &params).unwrap().dataset);
        fixtures.push(
            gen_overtake_scene(&OvertakeConfig::default(), &params)
                .unwrap()
                .dataset,
        );
        for (i, base) in fixtures.clone().iter().enumerate() {
            let mut noisy = base.clone();
            add_noise(
                &mut noisy,
                &NoiseConfig {
                    sigma_speed: 0.3,
                    sigma_line: 0.05,
                    seed: i as u64,
                },
            )
            .map_err(|e| e.to_string())?;
            fixtures.push(noisy);
        }
        for (i, dataset) in fixtures.iter().enumerate() {
            let tagged = tag_dataset(dataset, &params, None).map_err(|e| e.to_string())?;
            check_invariants(dataset, &tagged, &params)
                .and_then(|()| check_mirror(dataset, &tagged, &params))
                .and_then(|()| check_time_shift(dataset, &tagged, &params))
                .and_then(|()| check_ego_change_jumps(dataset, &tagged, &params))
                .map_err(|e| format!("planted fixture {i}: {e}"))?;
        }

        // Randomized inputs driven by proptest.
        let mut runner = TestRunner::new(Config {
            cases: 128,
            failure_persistence: None,
            ..Config::default()
        });
        let result = runner.run(&proptest::prelude::any::<u64>(), |seed| {
            let params = Params::default();
            let dataset = gen_random_dataset(seed, &params);
            let tagged = tag_dataset(&dataset, &params, None)
                .map_err(|e| TestCaseError::fail(e.to_string()))?;
            check_invariants(&dataset, &tagged, &params)
                .and_then(|()| check_mirror(&dataset, &tagged, &params))
                .and_then(|()| check_time_shift(&dataset, &tagged, &params))
                .map_err(TestCaseError::fail)
        });
        match result {
            Ok(()) => Ok(format!("{} planted fixtures + 128 random cases", fixtures.len())),
            Err(TestError::Fail(reason, seed)) => {
                Err(format!("seed {seed}: {reason}"))
            }
            Err(TestError::Abort(reason)) => Err(format!("aborted: {reason}")),
        }
    });
}

// ---------------------------------------------------------------------------
// 7: throughput on a four-hour equivalent
// ---------------------------------------------------------------------------

/// 1.44M samples (4 h at 100 Hz) with ten concurrently observed objects that
/// wander between the ego lane and the next one over, so every tagger and
/// both bundled categories have real work to do.
fn four_hour_dataset(params: &Params) -> Dataset {
    let n = 1_440_000usize;
    let mut segments = Vec::new();
    for _ in 0..130 {
        segments.push(SpeedSegment::Hold { duration_s: 50.0 });
        segments.push(SpeedSegment::Ramp { duration_s: 5.0, accel: 1.0 });
        segments.push(SpeedSegment::Hold { duration_s: 50.0 });
        segments.push(SpeedSegment::Ramp { duration_s: 5.0, accel: -1.0 });
    }
    segments.push(SpeedSegment::Hold { duration_s: 200.0 });
    let (mut speed, _) = gen_speed_profile(25.0, &segments, params).expect("profile is consistent");
    speed.truncate(n);
    let mut dataset = dataset_from_speed(speed, params);

    for i in 0..10u64 {
        let period_s = 300.0 + 20.0 * i as f64;
        let period = (period_s / params.ts) as usize;
        let ramp = (3.5 / params.ts) as usize; // 1 m/s lateral speed
        let dy: Vec<f64> = (0..n)
            .map(|k| {
                let phase = (k + (i as usize * 7919)) % period;
                let half = period / 2;
                if phase < ramp {
                    3.5 - 3.5 * phase as f64 / ramp as f64
                } else if phase < half {
                    0.0
                } else if phase < half + ramp {
                    3.5 * (phase - half) as f64 / ramp as f64
                } else {
                    3.5
                }
            })
            .collect();
        dataset.objects.push(ObjectTrack {
            id: ObjectId(i + 1),
            dx: vec![20.0 + 5.0 * i as f64; n],
            dy,
            v_rel: vec![0.0; n],
            observed: vec![true; n],
            lines: None,
        });
    }
    dataset
}

#[test]
fn criterion_7_performance() {
    criterion(7, "four-hour throughput", || {
        let params = Params::default();
        let dataset = four_hour_dataset(&params);

        let start = Instant::now();
        let tagged = tag_dataset(&dataset, &params, None).map_err(|e| e.to_string())?;
        let tag_seconds = start.elapsed().as_secs_f64();
        ensure(tag_seconds < 60.0, || {
            format!("tagging took {tag_seconds:.1} s, budget 60 s")
        })?;

        let start = Instant::now();
        let mut mined = 0usize;
        for category in ["cut_in", "overtaking"] {
            let category = builtin_category(category).unwrap();
            mined += mine(&tagged, &category, &params)
                .map_err(|e| e.to_string())?
                .len();
        }
        let mine_seconds = start.elapsed().as_secs_f64();
        ensure(mine_seconds < 10.0, || {
            format!("mining took {mine_seconds:.1} s, budget 10 s")
        })?;
        Ok(format!(
            "tagged 1.44M samples x 10 objects in {tag_seconds:.1} s, \
             mined both categories ({mined} instances) in {mine_seconds:.1} s"
        ))
    });
}
