//! Longitudinal activity tagging: accelerating, decelerating, cruising.
//!
//! Detection walks a speed series chronologically and fires an acceleration
//! event at sample `k` when all of the following hold (deceleration is the
//! exact sign mirror, using the trailing maximum instead of the minimum):
//!
//! 1. no acceleration activity is already running at `k`;
//! 2. the speed has risen at least `a_cruise * k_h * ts` above its trailing
//!    window minimum;
//! 3. there is no lower speed in the near future: the trailing window minimum
//!    evaluated `k_h` samples ahead (clamped to the last sample) equals
//!    `v(k)`;
//! 4. the activity is substantial: the speed still gained is more than
//!    `delta_v` by the time the activity ends.
//!
//! The activity ends at the first sample `tau > k` whose look-ahead rise
//! (the rise series evaluated `k_h` samples ahead, clamped to the last
//! sample) falls below the cruising threshold; if no such sample exists the
//! activity runs to the end of the data. Samples covered by no activity are
//! cruising, and the first event of every series is a cruising event by
//! definition, so a series can never start mid-activity.
//!
//! Finally, cruising stretches shorter than `k_cruise` samples between two
//! activities are dissolved: equal neighbours merge into one activity, a
//! deceleration-then-acceleration pair splits at the earliest speed minimum
//! of the removed stretch, an acceleration-then-deceleration pair at the
//! earliest speed maximum. Leading and trailing cruising is never removed.
//!
//! Objects are tagged the same way on their absolute speed `v_rel + v_ego`,
//! independently per maximal observed run; unobserved samples stay untagged.

use crate::model::{
    rise_fall, windowed_extrema, EgoTrack, LongitudinalActivity, ObjectTrack, Params, Subject,
    Tag, TagDimension, TagStream,
};

/// One detected activity over `[start, end]`, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ActivityInterval {
    pub start: usize,
    pub end: usize,
    pub label: LongitudinalActivity,
}

impl ActivityInterval {
    fn len(&self) -> usize {
        self.end - self.start + 1
    }
}

/// Detect activities over one gap-free speed run. Returned intervals tile
/// `[0, v.len() - 1]` with alternating labels.
pub(crate) fn detect_run(v: &[f64], params: &Params) -> Vec<ActivityInterval> {
    let n = v.len();
    debug_assert!(n > 0, "runs are never empty");
    let last = n - 1;
    let threshold = params.long_threshold();
    let extrema = windowed_extrema(v, params.k_h).expect("run is non-empty and finite");
    let rf = rise_fall(v, params.k_h).expect("run is non-empty and finite");
    let clamp = |j: usize| j.min(last);

    // For every sample, the first tau >= sample whose look-ahead rise/fall is
    // back under the threshold; usize::MAX when none is. Suffix scans keep
    // the whole detection linear.
    let mut end_after_rise = vec![usize::MAX; n];
    let mut end_after_fall = vec![usize::MAX; n];
    let mut next_rise_end = usize::MAX;
    let mut next_fall_end = usize::MAX;
    for tau in (0..n).rev() {
        if rf.inc[clamp(tau + params.k_h)] < threshold {
            next_rise_end = tau;
        }
        if rf.dec[clamp(tau + params.k_h)] > -threshold {
            next_fall_end = tau;
        }
        end_after_rise[tau] = next_rise_end;
        end_after_fall[tau] = next_fall_end;
    }

    let accel_end = |k: usize| {
        if k + 1 < n && end_after_rise[k + 1] != usize::MAX {
            end_after_rise[k + 1]
        } else {
            last
        }
    };
    let decel_end = |k: usize| {
        if k + 1 < n && end_after_fall[k + 1] != usize::MAX {
            end_after_fall[k + 1]
        } else {
            last
        }
    };

    let mut intervals: Vec<ActivityInterval> = Vec::new();
    let mut push = |start: usize, end: usize, label: LongitudinalActivity| {
        if let Some(prev) = intervals.last_mut() {
            if prev.label == label && prev.end + 1 == start {
                prev.end = end;
                return;
            }
        }
        intervals.push(ActivityInterval { start, end, label });
    };

    let mut cruise_start = 0usize;
    let mut k = 0usize;
    while k < n {
        let accel_fires = rf.inc[k] >= threshold && extrema.min[clamp(k + params.k_h)] == v[k] && {
            let end = accel_end(k);
            v[end] - v[k] > params.delta_v
        };
        if accel_fires {
            let end = accel_end(k);
            if k > cruise_start {
                push(cruise_start, k - 1, LongitudinalActivity::Cruising);
            }
            push(k, end, LongitudinalActivity::Accelerating);
            cruise_start = end + 1;
            k = end + 1;
            continue;
        }
        let decel_fires = rf.dec[k] <= -threshold && extrema.max[clamp(k + params.k_h)] == v[k] && {
            let end = decel_end(k);
            v[k] - v[end] > params.delta_v
        };
        if decel_fires {
            let end = decel_end(k);
            if k > cruise_start {
                push(cruise_start, k - 1, LongitudinalActivity::Cruising);
            }
            push(k, end, LongitudinalActivity::Decelerating);
            cruise_start = end + 1;
            k = end + 1;
            continue;
        }
        k += 1;
    }
    if cruise_start <= last {
        push(cruise_start, last, LongitudinalActivity::Cruising);
    }
    intervals
}

/// Earliest index of the minimum of `v[range]`.
fn argmin(v: &[f64], start: usize, end: usize) -> usize {
    let mut best = start;
    for k in start + 1..=end {
        if v[k] < v[best] {
            best = k;
        }
    }
    best
}

/// Earliest index of the maximum of `v[range]`.
fn argmax(v: &[f64], start: usize, end: usize) -> usize {
    let mut best = start;
    for k in start + 1..=end {
        if v[k] > v[best] {
            best = k;
        }
    }
    best
}

/// Remove interior cruising stretches strictly shorter than `k_cruise`.
/// `v` is indexed by the same coordinates as the intervals.
pub(crate) fn merge_short_cruising(
    intervals: Vec<ActivityInterval>,
    v: &[f64],
    k_cruise: usize,
) -> Vec<ActivityInterval> {
    if intervals.len() < 3 {
        return intervals;
    }
    let mut result: Vec<ActivityInterval> = vec![intervals[0]];
    let mut i = 1;
    while i < intervals.len() {
        let cur = intervals[i];
        let interior = i + 1 < intervals.len();
        if cur.label == LongitudinalActivity::Cruising && interior && cur.len() < k_cruise {
            let right = intervals[i + 1];
            let left = result.last_mut().expect("seeded with the first interval");
            debug_assert_ne!(left.label, LongitudinalActivity::Cruising);
            debug_assert_ne!(right.label, LongitudinalActivity::Cruising);
            if left.label == right.label {
                left.end = right.end;
            } else if left.label == LongitudinalActivity::Decelerating {
                // Slowing down, then speeding up: the turning point is the
                // earliest speed minimum of the removed stretch.
                let pivot = argmin(v, cur.start, cur.end);
                left.end = pivot - 1;
                result.push(ActivityInterval {
                    start: pivot,
                    end: right.end,
                    label: right.label,
                });
            } else {
                let pivot = argmax(v, cur.start, cur.end);
                left.end = pivot - 1;
                result.push(ActivityInterval {
                    start: pivot,
                    end: right.end,
                    label: right.label,
                });
            }
            i += 2;
        } else {
            result.push(cur);
            i += 1;
        }
    }
    result
}

fn run_intervals(v: &[f64], offset: usize, params: &Params) -> Vec<ActivityInterval> {
    let detected = detect_run(v, params);
    let merged = merge_short_cruising(detected, v, params.k_cruise);
    merged
        .into_iter()
        .map(|iv| ActivityInterval {
            start: iv.start + offset,
            end: iv.end + offset,
            label: iv.label,
        })
        .collect()
}

/// Tag the ego vehicle's speed over the full timeline.
pub fn tag_ego_longitudinal(ego: &EgoTrack, params: &Params) -> TagStream {
    let mut stream = TagStream::new(Subject::Ego, TagDimension::LongitudinalActivity);
    if ego.speed.is_empty() {
        return stream;
    }
    for iv in run_intervals(&ego.speed, 0, params) {
        stream.push(iv.start, iv.end, Tag::LongitudinalActivity(iv.label));
    }
    stream
}

/// Tag one object's absolute speed, independently per observed run.
pub fn tag_object_longitudinal(track: &ObjectTrack, ego: &EgoTrack, params: &Params) -> TagStream {
    let mut stream = TagStream::new(
        Subject::Object(track.id),
        TagDimension::LongitudinalActivity,
    );
    for (start, end) in track.observed_runs() {
        let v: Vec<f64> = (start..=end)
            .map(|k| track.v_rel[k] + ego.speed[k])
            .collect();
        for iv in run_intervals(&v, start, params) {
            stream.push(iv.start, iv.end, Tag::LongitudinalActivity(iv.label));
        }
    }
    stream
}

#[cfg(test)]
mod tests {
    use super::*;
    use LongitudinalActivity::{Accelerating, Cruising, Decelerating};

    fn labels(stream: &TagStream) -> Vec<(usize, usize, LongitudinalActivity)> {
        stream
            .intervals
            .iter()
            .map(|iv| match iv.value {
                Tag::LongitudinalActivity(a) => (iv.start_k, iv.end_k, a),
                other => panic!("unexpected tag {other:?}"),
            })
            .collect()
    }

    fn ego_with_speed(speed: Vec<f64>) -> EgoTrack {
        let n = speed.len();
        EgoTrack {
            speed,
            dy_left: vec![1.75; n],
            dy_right: vec![-1.75; n],
            line_valid: vec![true; n],
            position: None,
            road_class: None,
        }
    }

    /// Piecewise speed profile: (duration in samples, acceleration per sample).
    fn profile(v0: f64, segments: &[(usize, f64)]) -> Vec<f64> {
        let mut v = vec![v0];
        for &(samples, accel_per_sample) in segments {
            for _ in 0..samples {
                let next = v.last().unwrap() + accel_per_sample;
                v.push(next);
            }
        }
        v
    }

    #[test]
    fn constant_speed_yields_single_cruising_interval() {
        let ego = ego_with_speed(vec![25.0; 5000]);
        let stream = tag_ego_longitudinal(&ego, &Params::default());
        assert_eq!(labels(&stream), vec![(0, 4999, Cruising)]);
    }

    #[test]
    fn trapezoid_profile_yields_five_activities() {
        // 10 s at 20 m/s, +2 m/s^2 for 5 s, 10 s at 30 m/s, -2 m/s^2 for
        // 5 s, 10 s at 20 m/s, all at 100 Hz.
        let v = profile(
            20.0,
            &[
                (1000, 0.0),
                (500, 0.02),
                (1000, 0.0),
                (500, -0.02),
                (999, 0.0),
            ],
        );
        assert_eq!(v.len(), 4000);
        let stream = tag_ego_longitudinal(&ego_with_speed(v), &Params::default());
        let got: Vec<LongitudinalActivity> = labels(&stream).iter().map(|&(_, _, l)| l).collect();
        assert_eq!(
            got,
            vec![Cruising, Accelerating, Cruising, Decelerating, Cruising],
            "sequence of activities"
        );
        let ivs = labels(&stream);
        assert_eq!(ivs[0].0, 0);
        assert_eq!(ivs[4].1, 3999, "intervals tile the timeline");
        for pair in ivs.windows(2) {
            assert_eq!(pair[0].1 + 1, pair[1].0, "no holes between intervals");
        }
    }

    #[test]
    fn small_total_speed_change_stays_cruising() {
        // +0.5 m/s over 5 s: the per-window rise reaches the cruising
        // threshold but the total change stays below delta_v.
        let v = profile(20.0, &[(1000, 0.0), (500, 0.001), (999, 0.0)]);
        let stream = tag_ego_longitudinal(&ego_with_speed(v), &Params::default());
        assert_eq!(labels(&stream).len(), 1);
        assert_eq!(labels(&stream)[0].2, Cruising);
    }

    #[test]
    fn merge_joins_equal_neighbours_across_short_cruising() {
        let v = profile(10.0, &[(1000, 0.004), (200, 0.0), (799, 0.004)]);
        let intervals = vec![
            ActivityInterval { start: 0, end: 999, label: Accelerating },
            ActivityInterval { start: 1000, end: 1199, label: Cruising },
            ActivityInterval { start: 1200, end: 1999, label: Accelerating },
        ];
        let merged = merge_short_cruising(intervals, &v, 400);
        assert_eq!(
            merged,
            vec![ActivityInterval { start: 0, end: 1999, label: Accelerating }]
        );
    }

    #[test]
    fn merge_splits_opposite_neighbours_at_the_speed_extremum() {
        // Speed falls to a minimum at sample 1100, then rises again.
        let mut v = vec![0.0; 2000];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = (k as f64 - 1100.0).abs();
        }
        let intervals = vec![
            ActivityInterval { start: 0, end: 999, label: Decelerating },
            ActivityInterval { start: 1000, end: 1199, label: Cruising },
            ActivityInterval { start: 1200, end: 1999, label: Accelerating },
        ];
        let merged = merge_short_cruising(intervals, &v, 400);
        assert_eq!(
            merged,
            vec![
                ActivityInterval { start: 0, end: 1099, label: Decelerating },
                ActivityInterval { start: 1100, end: 1999, label: Accelerating },
            ],
            "deceleration ends where the speed bottoms out"
        );
    }

    #[test]
    fn merge_splits_accel_then_decel_at_the_speed_maximum() {
        let mut v = vec![0.0; 300];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = -(k as f64 - 150.0).abs();
        }
        let intervals = vec![
            ActivityInterval { start: 0, end: 99, label: Accelerating },
            ActivityInterval { start: 100, end: 199, label: Cruising },
            ActivityInterval { start: 200, end: 299, label: Decelerating },
        ];
        let merged = merge_short_cruising(intervals, &v, 400);
        assert_eq!(
            merged,
            vec![
                ActivityInterval { start: 0, end: 149, label: Accelerating },
                ActivityInterval { start: 150, end: 299, label: Decelerating },
            ]
        );
    }

    #[test]
    fn merge_keeps_cruising_of_exactly_k_cruise_samples() {
        let v = vec![0.0; 2000];
        let intervals = vec![
            ActivityInterval { start: 0, end: 999, label: Accelerating },
            ActivityInterval { start: 1000, end: 1399, label: Cruising },
            ActivityInterval { start: 1400, end: 1999, label: Accelerating },
        ];
        let merged = merge_short_cruising(intervals.clone(), &v, 400);
        assert_eq!(merged, intervals, "length k_cruise is not `shorter than`");
    }

    #[test]
    fn merge_leaves_boundary_cruising_alone() {
        let v = vec![0.0; 1300];
        let intervals = vec![
            ActivityInterval { start: 0, end: 99, label: Cruising },
            ActivityInterval { start: 100, end: 1099, label: Accelerating },
            ActivityInterval { start: 1100, end: 1299, label: Cruising },
        ];
        let merged = merge_short_cruising(intervals.clone(), &v, 400);
        assert_eq!(merged, intervals);
    }

    #[test]
    fn object_constant_relative_speed_cruises_where_observed() {
        let n = 1200;
        let ego = ego_with_speed(vec![25.0; n]);
        let mut observed = vec![false; n];
        for slot in &mut observed[100..=899] {
            *slot = true;
        }
        let track = ObjectTrack {
            id: crate::model::ObjectId(4),
            dx: vec![30.0; n],
            dy: vec![0.0; n],
            v_rel: vec![0.0; n],
            observed,
            lines: None,
        };
        let stream = tag_object_longitudinal(&track, &ego, &Params::default());
        assert_eq!(labels(&stream), vec![(100, 899, Cruising)]);
    }

    #[test]
    fn object_runs_are_tagged_independently() {
        let n = 3000;
        let ego = ego_with_speed(vec![20.0; n]);
        let mut observed = vec![true; n];
        for slot in &mut observed[1400..=1499] {
            *slot = false;
        }
        // The object speeds up by 5 m/s over 3 s inside the first run.
        let mut v_rel = vec![0.0; n];
        for k in 0..n {
            v_rel[k] = match k {
                0..=499 => 0.0,
                500..=799 => (k - 500) as f64 / 60.0,
                _ => 5.0,
            };
        }
        let track = ObjectTrack {
            id: crate::model::ObjectId(9),
            dx: vec![30.0; n],
            dy: vec![0.0; n],
            v_rel,
            observed,
            lines: None,
        };
        let stream = tag_object_longitudinal(&track, &ego, &Params::default());
        let got = labels(&stream);
        // First run contains the acceleration, second run is pure cruising.
        assert!(got.iter().any(|&(s, e, l)| l == Accelerating && s >= 400 && e <= 900),
            "acceleration detected inside the first run: {got:?}");
        assert_eq!(got.last().unwrap(), &(1500, 2999, Cruising));
        assert!(got.iter().all(|&(s, e, _)| e < 1400 || s >= 1500),
            "no tags inside the unobserved gap: {got:?}");
        // Each run starts with its own (cruising) event.
        assert_eq!(got[0].0, 0);
        assert_eq!(got[0].2, Cruising);
    }
}
