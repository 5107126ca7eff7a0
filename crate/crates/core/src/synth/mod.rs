//! Synthetic data: speed profiles with known activity sequences, planted
//! scenario scenes with ground truth, measurement noise, and randomized
//! datasets for cross-checking the taggers against the reference
//! implementation in [`oracle`].

pub mod oracle;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::eval::GroundTruthEntry;
use crate::ingest::Dataset;
use crate::model::{
    EgoTrack, LongitudinalActivity, ObjectId, ObjectLineSeries, ObjectTrack, Params,
    RoadClassSeries, Timebase,
};

/// Lane width used by every generated scene, in metres.
pub const LANE_WIDTH_M: f64 = 3.5;

const HALF_LANE_M: f64 = LANE_WIDTH_M / 2.0;

/// A generated dataset together with the scenario occurrences built into it.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub dataset: Dataset,
    pub truth: Vec<GroundTruthEntry>,
}

fn steps(duration_s: f64, ts: f64) -> usize {
    (duration_s / ts).round() as usize
}

fn inconsistent(message: impl Into<String>) -> Error {
    Error::InconsistentScene(message.into())
}

// ---------------------------------------------------------------------------
// Speed profiles
// ---------------------------------------------------------------------------

/// One building block of a speed profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpeedSegment {
    /// Constant speed.
    Hold { duration_s: f64 },
    /// Constant acceleration (negative for braking).
    Ramp { duration_s: f64, accel: f64 },
}

/// Build a speed series from `v0` and the segments, together with the
/// longitudinal activity sequence the tagger is expected to produce for it.
///
/// The expectation mirrors the tagging contract: the series always opens
/// cruising; a ramp counts as an activity when its acceleration exceeds
/// `a_cruise` and its realized speed change exceeds `delta_v`; holds are
/// cruising; interior cruising entries nominally shorter than `k_cruise`
/// samples dissolve into their neighbours. Nominal segment boundaries sit
/// within about `k_h` samples of the detected ones, so segments should stay
/// clear of the thresholds (`a_cruise`, `delta_v`, `k_cruise * ts`) by a
/// solid margin or the expectation may disagree with the tagger.
pub fn gen_speed_profile(
    v0: f64,
    segments: &[SpeedSegment],
    params: &Params,
) -> Result<(Vec<f64>, Vec<LongitudinalActivity>)> {
    use LongitudinalActivity::{Accelerating, Cruising, Decelerating};
    if !v0.is_finite() || v0 < 0.0 {
        return Err(inconsistent(format!("initial speed {v0} is not a speed")));
    }
    let mut speed = vec![v0];
    let mut v = v0;
    let mut seq: Vec<(LongitudinalActivity, usize)> = vec![(Cruising, 1)];
    let append = |label: LongitudinalActivity, len: usize, seq: &mut Vec<_>| {
        if len == 0 {
            return;
        }
        match seq.last_mut() {
            Some((last, count)) if *last == label => *count += len,
            _ => seq.push((label, len)),
        }
    };
    for segment in segments {
        match *segment {
            SpeedSegment::Hold { duration_s } => {
                let len = steps(duration_s, params.ts);
                speed.extend(std::iter::repeat(v).take(len));
                append(Cruising, len, &mut seq);
            }
            SpeedSegment::Ramp { duration_s, accel } => {
                let len = steps(duration_s, params.ts);
                for _ in 0..len {
                    v += accel * params.ts;
                    if v < 0.0 {
                        return Err(inconsistent(format!(
                            "speed goes negative at sample {}",
                            speed.len()
                        )));
                    }
                    speed.push(v);
                }
                let dv = accel * params.ts * len as f64;
                let label = if accel.abs() > params.a_cruise && dv.abs() > params.delta_v {
                    if accel > 0.0 {
                        Accelerating
                    } else {
                        Decelerating
                    }
                } else {
                    Cruising
                };
                append(label, len, &mut seq);
            }
        }
    }

    // Dissolve interior cruising stretches shorter than k_cruise, the way
    // the tagger will.
    let mut i = 1;
    while i + 1 < seq.len() {
        if seq[i].0 == Cruising && seq[i].1 < params.k_cruise {
            if seq[i - 1].0 == seq[i + 1].0 {
                let absorbed = seq[i].1 + seq[i + 1].1;
                seq[i - 1].1 += absorbed;
                seq.drain(i..=i + 1);
            } else {
                seq.remove(i);
                i += 1;
            }
        } else {
            i += 1;
        }
    }
    Ok((speed, seq.into_iter().map(|(label, _)| label).collect()))
}

// ---------------------------------------------------------------------------
// Planted scenes
// ---------------------------------------------------------------------------

fn constant_ego(n: usize, speed: f64) -> EgoTrack {
    let mut road_class = RoadClassSeries::new(n);
    for k in 0..n {
        road_class.set(k, "motorway");
    }
    EgoTrack {
        speed: vec![speed; n],
        dy_left: vec![HALF_LANE_M; n],
        dy_right: vec![-HALF_LANE_M; n],
        line_valid: vec![true; n],
        position: None,
        road_class: Some(road_class),
    }
}

/// Shape of a generated cut-in scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutInConfig {
    pub duration_s: f64,
    /// When the object starts moving towards the ego lane.
    pub t_cut_s: f64,
    /// Constant longitudinal gap to the object.
    pub gap_m: f64,
    /// Lateral offset the object settles at; below half a lane width it
    /// ends up in the ego lane.
    pub end_dy_m: f64,
    pub lateral_speed_ms: f64,
    pub ego_speed_ms: f64,
}

impl Default for CutInConfig {
    fn default() -> Self {
        CutInConfig {
            duration_s: 60.0,
            t_cut_s: 30.0,
            gap_m: 25.0,
            end_dy_m: 0.0,
            lateral_speed_ms: 1.0,
            ego_speed_ms: 25.0,
        }
    }
}

/// A single object drifting from the left lane into the ego lane while the
/// ego drives straight on a motorway.
///
/// The scene carries a `cut_in` truth entry spanning from the start of the
/// lateral motion to the end of the data whenever the manoeuvre actually
/// qualifies: the object ends up crossing the lane line
/// (`end_dy_m < 1.75`) and its time headway `gap_m / ego_speed_ms` stays
/// under `tau_h`. Otherwise the truth list is empty.
pub fn gen_cutin_scene(config: &CutInConfig, params: &Params) -> Result<Scene> {
    if config.duration_s <= 0.0 || config.t_cut_s <= 0.0 || config.t_cut_s >= config.duration_s {
        return Err(inconsistent("the cut must start inside the scene"));
    }
    if config.gap_m <= 0.0 {
        return Err(inconsistent("the object must be in front of the ego"));
    }
    if config.lateral_speed_ms <= 0.0 {
        return Err(inconsistent("lateral speed must be positive"));
    }
    if config.ego_speed_ms < 0.0 {
        return Err(inconsistent("ego speed must not be negative"));
    }
    if config.end_dy_m > LANE_WIDTH_M {
        return Err(inconsistent("the object cannot settle above its start"));
    }
    if config.end_dy_m < LANE_WIDTH_M {
        let ramp_s = (LANE_WIDTH_M - config.end_dy_m) / config.lateral_speed_ms;
        if config.t_cut_s + ramp_s >= config.duration_s {
            return Err(inconsistent("the cut does not complete within the scene"));
        }
    }

    let n = steps(config.duration_s, params.ts) + 1;
    let k_cut = steps(config.t_cut_s, params.ts);
    let timebase = Timebase::new(n, params.ts, 0.0);
    let ego = constant_ego(n, config.ego_speed_ms);
    let dy: Vec<f64> = (0..n)
        .map(|k| {
            if k <= k_cut {
                LANE_WIDTH_M
            } else {
                (LANE_WIDTH_M - config.lateral_speed_ms * params.ts * (k - k_cut) as f64)
                    .max(config.end_dy_m)
            }
        })
        .collect();
    let object = ObjectTrack {
        id: ObjectId(1),
        dx: vec![config.gap_m; n],
        dy,
        v_rel: vec![0.0; n],
        observed: vec![true; n],
        lines: None,
    };

    let crosses = config.end_dy_m < HALF_LANE_M;
    let close_enough =
        config.ego_speed_ms > 0.0 && config.gap_m / config.ego_speed_ms < params.tau_h;
    let truth = if crosses && close_enough {
        vec![GroundTruthEntry {
            category: "cut_in".into(),
            subject: Some(ObjectId(1)),
            start_k: k_cut,
            end_k: n - 1,
        }]
    } else {
        Vec::new()
    };
    Ok(Scene {
        dataset: Dataset {
            timebase,
            ego,
            objects: vec![object],
        },
        truth,
    })
}

/// Shape of a generated overtaking scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OvertakeConfig {
    /// When the ego starts its change into the left lane.
    pub t_change_s: f64,
    /// Initial longitudinal position of the passing object; negative, so it
    /// starts behind the ego.
    pub start_dx_m: f64,
    /// How much faster the object travels than the ego.
    pub closing_speed_ms: f64,
    pub ego_speed_ms: f64,
    /// Lateral speed of the ego's lane change.
    pub lateral_speed_ms: f64,
}

impl Default for OvertakeConfig {
    fn default() -> Self {
        OvertakeConfig {
            t_change_s: 25.0,
            start_dx_m: -60.0,
            closing_speed_ms: 5.0,
            ego_speed_ms: 25.0,
            lateral_speed_ms: 1.0,
        }
    }
}

/// An object passes the ego on the left, then the ego changes into the left
/// lane behind it: the classic being-overtaken-then-follow pattern the
/// `overtaking` category describes.
///
/// The object starts `start_dx_m` behind in the left lane and closes at
/// `closing_speed_ms`; once it is well past, the ego performs a left lane
/// change taking `3.5 / lateral_speed_ms` seconds. The scene ends two
/// seconds after the change completes and carries one `overtaking` truth
/// entry from the first sample to the nominal end of the ego's ramp.
pub fn gen_overtake_scene(config: &OvertakeConfig, params: &Params) -> Result<Scene> {
    if config.t_change_s <= 0.0 {
        return Err(inconsistent("the lane change must start inside the scene"));
    }
    if config.lateral_speed_ms <= 0.0 || config.closing_speed_ms <= 0.0 {
        return Err(inconsistent("both motions must have positive speed"));
    }
    if config.start_dx_m >= 0.0 {
        return Err(inconsistent("the object must start behind the ego"));
    }
    if config.ego_speed_ms < 0.0 {
        return Err(inconsistent("ego speed must not be negative"));
    }
    let pass_s = -config.start_dx_m / config.closing_speed_ms;
    if pass_s >= config.t_change_s {
        return Err(inconsistent(
            "the object must pass the ego before the ego changes lanes",
        ));
    }

    let ramp_s = LANE_WIDTH_M / config.lateral_speed_ms;
    let duration_s = config.t_change_s + ramp_s + 2.0;
    let n = steps(duration_s, params.ts) + 1;
    let k_change = steps(config.t_change_s, params.ts);
    let ramp_end_k = k_change + steps(ramp_s, params.ts);
    let timebase = Timebase::new(n, params.ts, 0.0);

    let mut ego = constant_ego(n, config.ego_speed_ms);
    let offset = |k: usize| -> f64 {
        if k <= k_change {
            0.0
        } else {
            (config.lateral_speed_ms * params.ts * (k - k_change) as f64).min(LANE_WIDTH_M)
        }
    };
    for k in 0..n {
        // Lines re-anchor to the new lane once the boundary is crossed.
        let raw_left = HALF_LANE_M - offset(k);
        if raw_left >= 0.0 {
            ego.dy_left[k] = raw_left;
            ego.dy_right[k] = raw_left - LANE_WIDTH_M;
        } else {
            ego.dy_left[k] = raw_left + LANE_WIDTH_M;
            ego.dy_right[k] = raw_left;
        }
    }

    let object = ObjectTrack {
        id: ObjectId(1),
        dx: (0..n)
            .map(|k| config.start_dx_m + config.closing_speed_ms * params.ts * k as f64)
            .collect(),
        dy: (0..n).map(|k| LANE_WIDTH_M - offset(k)).collect(),
        v_rel: vec![config.closing_speed_ms; n],
        observed: vec![true; n],
        lines: None,
    };

    let truth = vec![GroundTruthEntry {
        category: "overtaking".into(),
        subject: Some(ObjectId(1)),
        start_k: 0,
        end_k: ramp_end_k,
    }];
    Ok(Scene {
        dataset: Dataset {
            timebase,
            ego,
            objects: vec![object],
        },
        truth,
    })
}

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

/// Gaussian measurement noise; `sigma_speed` drives the speed-like series
/// (ego speed, object relative speed), `sigma_line` the lateral ones (line
/// distances, object lateral offsets).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub sigma_speed: f64,
    pub sigma_line: f64,
    pub seed: u64,
}

/// Perturb a dataset in place, deterministically in `seed`.
///
/// Ego speed is clamped at zero; longitudinal distances stay clean (range
/// sensors are far less noisy than lateral estimates, and dx noise adds
/// nothing to what the pipeline must tolerate).
pub fn add_noise(dataset: &mut Dataset, config: &NoiseConfig) -> Result<()> {
    for (name, sigma) in [
        ("sigma_speed", config.sigma_speed),
        ("sigma_line", config.sigma_line),
    ] {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::InvalidParams(format!(
                "{name} must be finite and non-negative, got {sigma}"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let speed_noise = Normal::new(0.0, config.sigma_speed).expect("sigma validated");
    let line_noise = Normal::new(0.0, config.sigma_line).expect("sigma validated");
    let perturb = |series: &mut [f64], noise: &Normal<f64>, rng: &mut ChaCha8Rng| {
        for value in series {
            *value += noise.sample(rng);
        }
    };

    perturb(&mut dataset.ego.speed, &speed_noise, &mut rng);
    for v in &mut dataset.ego.speed {
        *v = v.max(0.0);
    }
    perturb(&mut dataset.ego.dy_left, &line_noise, &mut rng);
    perturb(&mut dataset.ego.dy_right, &line_noise, &mut rng);

    let mut order: Vec<usize> = (0..dataset.objects.len()).collect();
    order.sort_by_key(|&i| dataset.objects[i].id);
    for i in order {
        let track = &mut dataset.objects[i];
        perturb(&mut track.v_rel, &speed_noise, &mut rng);
        perturb(&mut track.dy, &line_noise, &mut rng);
        if let Some(lines) = &mut track.lines {
            perturb(&mut lines.dy_left, &line_noise, &mut rng);
            perturb(&mut lines.dy_right, &line_noise, &mut rng);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Random fixtures
// ---------------------------------------------------------------------------

/// A random dataset for tagger cross-validation: arbitrary speed segments,
/// an optional ego lane change, line dropouts, a road-class labeling and up
/// to three objects with assorted motions. Deterministic in `seed`. The
/// content is not meant to be physically coherent, only structurally varied.
pub fn gen_random_dataset(seed: u64, params: &Params) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ts = params.ts;
    let n = rng.gen_range(200..=2000);
    let timebase = Timebase::new(n, ts, 0.0);

    // Speed: alternating holds, strong ramps and sub-threshold drifts.
    let mut speed = Vec::with_capacity(n);
    let mut v: f64 = rng.gen_range(0.0..38.0);
    speed.push(v);
    while speed.len() < n {
        let len = rng.gen_range(50..=800).min(n - speed.len());
        let accel = match rng.gen_range(0u8..5) {
            0 | 1 => 0.0,
            2 | 3 => rng.gen_range(0.3..1.8) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
            _ => rng.gen_range(0.01..0.08) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
        };
        for _ in 0..len {
            v = (v + accel * ts).max(0.0);
            speed.push(v);
        }
    }

    // Ego lateral offset, with at most one lane change.
    let mut offset = vec![0.0f64; n];
    if rng.gen_bool(0.5) {
        let kc = rng.gen_range(n / 4..3 * n / 4);
        let dir = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let rate = rng.gen_range(0.7..1.4);
        for k in kc..n {
            offset[k] = dir * (rate * ts * (k - kc) as f64).min(LANE_WIDTH_M);
        }
    }
    let mut dy_left = Vec::with_capacity(n);
    let mut dy_right = Vec::with_capacity(n);
    for &off in &offset {
        // Boundary of whatever lane the offset lands in.
        let left = HALF_LANE_M + LANE_WIDTH_M * ((off + HALF_LANE_M) / LANE_WIDTH_M).floor();
        dy_left.push(left - off);
        dy_right.push(left - off - LANE_WIDTH_M);
    }

    let mut line_valid = vec![true; n];
    if rng.gen_bool(0.5) {
        for _ in 0..rng.gen_range(1..=4) {
            let start = rng.gen_range(0..n);
            let len = rng.gen_range(10..=100);
            line_valid[start..(start + len).min(n)].fill(false);
        }
    }

    let mut road_class = RoadClassSeries::new(n);
    let style = rng.gen_range(0u8..5);
    for k in 0..n {
        match style {
            0..=2 => road_class.set(k, "motorway"),
            3 => road_class.set(k, if k < n / 2 { "motorway" } else { "residential" }),
            _ => {
                // Leave a stretch unlabeled.
                if !(n / 3..n / 3 + 80).contains(&k) {
                    road_class.set(k, "residential");
                }
            }
        }
    }

    let ego = EgoTrack {
        speed,
        dy_left,
        dy_right,
        line_valid,
        position: None,
        road_class: Some(road_class),
    };

    let object_count = rng.gen_range(0..=3);
    let mut objects = Vec::with_capacity(object_count);
    for i in 0..object_count {
        let mut observed = vec![true; n];
        if rng.gen_bool(0.2) {
            let from = rng.gen_range(0..n / 2);
            let to = rng.gen_range(from + 50..n.min(from + 50 + n / 2)).min(n - 1);
            observed = (0..n).map(|k| (from..=to).contains(&k)).collect();
        }
        if rng.gen_bool(0.3) {
            let start = rng.gen_range(0..n);
            let len = rng.gen_range(20..=100);
            observed[start..(start + len).min(n)].fill(false);
        }

        let dx_base = rng.gen_range(-80.0..80.0);
        let dx_slope = match rng.gen_range(0u8..3) {
            0 => 0.0,
            1 => rng.gen_range(1.0..8.0),
            _ => -rng.gen_range(1.0..8.0),
        };
        let dx: Vec<f64> = (0..n).map(|k| dx_base + dx_slope * ts * k as f64).collect();
        let v_rel = vec![dx_slope; n];

        let lane = [-LANE_WIDTH_M, 0.0, LANE_WIDTH_M][rng.gen_range(0..3)]
            + rng.gen_range(-0.3..0.3);
        let mut dy = vec![lane; n];
        if rng.gen_bool(0.5) {
            let kc = rng.gen_range(0..n);
            let dir = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let rate = rng.gen_range(0.7..1.4);
            for k in kc..n {
                dy[k] = lane + dir * (rate * ts * (k - kc) as f64).min(LANE_WIDTH_M);
            }
        }

        let lines = if rng.gen_bool(0.3) {
            let bias = rng.gen_range(-0.1..0.1);
            let mut valid = vec![true; n];
            if rng.gen_bool(0.5) {
                for _ in 0..rng.gen_range(1..=3) {
                    let start = rng.gen_range(0..n);
                    let len = rng.gen_range(10..=80);
                    valid[start..(start + len).min(n)].fill(false);
                }
            }
            Some(ObjectLineSeries {
                dy_left: dy.iter().map(|d| HALF_LANE_M - d + bias).collect(),
                dy_right: dy.iter().map(|d| -HALF_LANE_M - d + bias).collect(),
                valid,
            })
        } else {
            None
        };

        objects.push(ObjectTrack {
            id: ObjectId(i as u64 + 1),
            dx,
            dy,
            v_rel,
            observed,
            lines,
        });
    }

    Dataset {
        timebase,
        ego,
        objects,
    }
}
