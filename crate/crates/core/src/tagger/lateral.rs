//! Lateral activity tagging: lane keeping and lane changes.
//!
//! Lane geometry is carried by two signed lateral distances, `dy_left` and
//! `dy_right`, measured from the subject to the ego lane's line markings
//! (positive left). When a vehicle crosses a line the distance to that line
//! flips sign, and for the ego vehicle both distances jump by roughly a lane
//! width as the markers are re-anchored to the new lane. Detection finds
//! those signatures, then grows each hit backwards and forwards to cover the
//! whole manoeuvre.
//!
//! All window arithmetic runs on the subsequence of samples with usable line
//! data ("compacted" indices), so short marker dropouts neither break a
//! window nor hide a manoeuvre boundary. For the ego vehicle a crossing may
//! itself bridge an invalid stretch; for objects the two samples framing a
//! sign flip must be consecutive in the original timeline, otherwise the
//! candidate is dropped with a diagnostic (the sign flip would be dated too
//! loosely to be useful).

use crate::model::{
    rise_fall, EgoTrack, LateralActivity, ObjectTrack, Params, Subject, Tag, TagDimension,
    TagStream,
};

/// Tile `[0, n - 1]` (or the given runs) with `following_lane` around the
/// detected changes. `changes` must be sorted and disjoint.
fn tile_following(
    stream: &mut TagStream,
    runs: &[(usize, usize)],
    changes: &[(usize, usize, LateralActivity)],
) {
    let mut ci = 0;
    for &(run_start, run_end) in runs {
        let mut cursor = run_start;
        while ci < changes.len() && changes[ci].0 <= run_end {
            let (cs, ce, label) = changes[ci];
            debug_assert!(cs >= run_start && ce <= run_end);
            if cs > cursor {
                stream.push(
                    cursor,
                    cs - 1,
                    Tag::LateralActivity(LateralActivity::FollowingLane),
                );
            }
            stream.push(cs, ce, Tag::LateralActivity(label));
            cursor = ce + 1;
            ci += 1;
        }
        if cursor <= run_end {
            stream.push(
                cursor,
                run_end,
                Tag::LateralActivity(LateralActivity::FollowingLane),
            );
        }
    }
}

/// Tag the ego vehicle's lane keeping and lane changes.
///
/// A crossing shows up as a simultaneous jump of both line distances by more
/// than `delta_l` between consecutive valid samples: positive jumps for a
/// left change (the vehicle moves left, the markers re-anchor one lane
/// width down), negative jumps for a right change. The change interval is
/// grown to where lateral motion in the change direction starts and stops;
/// motion is measured by the windowed rise (right change) or fall (left
/// change) of the line distances over `k_h` valid samples.
pub fn tag_ego_lateral(ego: &EgoTrack, params: &Params) -> TagStream {
    let n = ego.line_valid.len();
    let mut stream = TagStream::new(Subject::Ego, TagDimension::LateralActivity);
    if n == 0 {
        return stream;
    }
    let valid: Vec<usize> = (0..n).filter(|&k| ego.line_valid[k]).collect();
    if valid.is_empty() {
        log::warn!(
            "ego line data is invalid at every sample; \
             tagging the whole timeline as following_lane"
        );
        tile_following(&mut stream, &[(0, n - 1)], &[]);
        return stream;
    }
    let m = valid.len();
    let lc: Vec<f64> = valid.iter().map(|&k| ego.dy_left[k]).collect();
    let rc: Vec<f64> = valid.iter().map(|&k| ego.dy_right[k]).collect();
    let rf_l = rise_fall(&lc, params.k_h).expect("compacted series is non-empty");
    let rf_r = rise_fall(&rc, params.k_h).expect("compacted series is non-empty");
    let lambda = params.lat_threshold();
    let clamp = |j: usize| j.min(m - 1);

    let mut changes: Vec<(usize, usize, LateralActivity)> = Vec::new();
    let mut last_end: Option<usize> = None;
    for j in 1..m {
        if last_end.is_some_and(|le| valid[j] <= le) {
            continue;
        }
        let jump_l = lc[j] - lc[j - 1];
        let jump_r = rc[j] - rc[j - 1];
        let dir = if jump_l > params.delta_l && jump_r > params.delta_l {
            LateralActivity::ChangingLaneLeft
        } else if jump_l < -params.delta_l && jump_r < -params.delta_l {
            LateralActivity::ChangingLaneRight
        } else {
            continue;
        };
        // True when the vehicle is not moving in the change direction at
        // compacted index jj. Rightward motion raises both distances, so it
        // is measured by the windowed rise; leftward by the windowed fall.
        let settled = |jj: usize| match dir {
            LateralActivity::ChangingLaneRight => {
                rf_l.inc[jj] < lambda || rf_r.inc[jj] < lambda
            }
            _ => -rf_l.dec[jj] < lambda || -rf_r.dec[jj] < lambda,
        };
        let start_j = (0..j).rev().find(|&jj| settled(jj)).unwrap_or(0);
        let end_j = (j + 1..m)
            .find(|&jj| settled(clamp(jj + params.k_h)))
            .unwrap_or(m - 1);
        let mut start_k = valid[start_j];
        if let Some(le) = last_end {
            start_k = start_k.max(le + 1);
        }
        let end_k = valid[end_j];
        debug_assert!(start_k <= end_k);
        changes.push((start_k, end_k, dir));
        last_end = Some(end_k);
    }
    tile_following(&mut stream, &[(0, n - 1)], &changes);
    stream
}

/// Per-sample line distances for an object: the object's own line
/// measurements where valid, otherwise derived from the ego measurements
/// and the object's lateral offset. `None` when neither source is usable.
pub(crate) fn object_line_distances(
    track: &ObjectTrack,
    ego: &EgoTrack,
    k: usize,
) -> Option<(f64, f64)> {
    if let Some(lines) = &track.lines {
        if lines.valid[k] {
            return Some((lines.dy_left[k], lines.dy_right[k]));
        }
    }
    if ego.line_valid[k] {
        return Some((ego.dy_left[k] - track.dy[k], ego.dy_right[k] - track.dy[k]));
    }
    None
}

/// The four object crossing signatures, in the order they are tried.
/// Each pairs the line whose distance flips sign with the movement
/// direction that flip implies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Crossing {
    /// Left line distance goes positive: entering the ego lane rightwards.
    RightToward,
    /// Right line distance goes negative: entering the ego lane leftwards.
    LeftToward,
    /// Right line distance goes positive: leaving the ego lane rightwards.
    RightAway,
    /// Left line distance goes negative: leaving the ego lane leftwards.
    LeftAway,
}

impl Crossing {
    fn detect(prev_l: f64, prev_r: f64, l: f64, r: f64) -> Option<Crossing> {
        if prev_l <= 0.0 && l > 0.0 {
            Some(Crossing::RightToward)
        } else if prev_r >= 0.0 && r < 0.0 {
            Some(Crossing::LeftToward)
        } else if prev_r <= 0.0 && r > 0.0 {
            Some(Crossing::RightAway)
        } else if prev_l >= 0.0 && l < 0.0 {
            Some(Crossing::LeftAway)
        } else {
            None
        }
    }

    fn rightward(self) -> bool {
        matches!(self, Crossing::RightToward | Crossing::RightAway)
    }

    fn uses_left_line(self) -> bool {
        matches!(self, Crossing::RightToward | Crossing::LeftAway)
    }

    fn label(self) -> LateralActivity {
        if self.rightward() {
            LateralActivity::ChangingLaneRight
        } else {
            LateralActivity::ChangingLaneLeft
        }
    }
}

/// Tag one object's lane keeping and lane changes relative to the ego lane.
///
/// A crossing of an ego lane line flips the sign of the object's distance to
/// that line between two consecutive samples. The change interval is grown
/// backwards to the last sample still clearly on the starting side
/// (distance beyond `alpha1` lane widths, or beyond `alpha2` with no motion
/// in the change direction) and forwards to the first sample clearly on the
/// far side, under the mirrored condition. Lane width is read off the two
/// distances at the crossing sample.
pub fn tag_object_lateral(track: &ObjectTrack, ego: &EgoTrack, params: &Params) -> TagStream {
    let mut stream = TagStream::new(Subject::Object(track.id), TagDimension::LateralActivity);
    let runs = track.observed_runs();
    let lambda = params.lat_threshold();
    let mut changes: Vec<(usize, usize, LateralActivity)> = Vec::new();
    let mut last_end: Option<usize> = None;
    for &(run_start, run_end) in &runs {
        let idx: Vec<usize> = (run_start..=run_end)
            .filter(|&k| object_line_distances(track, ego, k).is_some())
            .collect();
        let m = idx.len();
        if m < 2 {
            continue;
        }
        let mut lc = Vec::with_capacity(m);
        let mut rc = Vec::with_capacity(m);
        for &k in &idx {
            let (l, r) = object_line_distances(track, ego, k).expect("filtered to valid samples");
            lc.push(l);
            rc.push(r);
        }
        let rf_l = rise_fall(&lc, params.k_h).expect("compacted series is non-empty");
        let rf_r = rise_fall(&rc, params.k_h).expect("compacted series is non-empty");
        let clamp = |j: usize| j.min(m - 1);

        for w in 1..m {
            let adjacent = idx[w] == idx[w - 1] + 1;
            if !adjacent {
                if Crossing::detect(lc[w - 1], rc[w - 1], lc[w], rc[w]).is_some() {
                    log::debug!(
                        "object {}: sign flip across invalid line data near sample {} skipped",
                        track.id.0,
                        idx[w]
                    );
                }
                continue;
            }
            if last_end.is_some_and(|le| idx[w] <= le) {
                continue;
            }
            let Some(crossing) = Crossing::detect(lc[w - 1], rc[w - 1], lc[w], rc[w]) else {
                continue;
            };
            let (d, rf_d) = if crossing.uses_left_line() {
                (&lc, &rf_l)
            } else {
                (&rc, &rf_r)
            };
            let width = lc[w] - rc[w];
            let near = params.alpha2 * width;
            let far = params.alpha1 * width;
            // Clearly on the starting side of the crossed line at ww.
            let at_origin = |ww: usize| {
                if crossing.rightward() {
                    d[ww] < -far || (rf_d.inc[ww] < lambda && d[ww] < -near)
                } else {
                    d[ww] > far || (-rf_d.dec[ww] < lambda && d[ww] > near)
                }
            };
            // Clearly arrived on the far side at ww, with the forward-looking
            // motion window.
            let at_destination = |ww: usize| {
                let ahead = clamp(ww + params.k_h);
                if crossing.rightward() {
                    d[ww] > far || (rf_d.inc[ahead] < lambda && d[ww] > near)
                } else {
                    d[ww] < -far || (-rf_d.dec[ahead] < lambda && d[ww] < -near)
                }
            };
            let start_w = (0..w).rev().find(|&ww| at_origin(ww)).unwrap_or(0);
            let end_w = (w + 1..m).find(|&ww| at_destination(ww)).unwrap_or(m - 1);
            let mut start_k = idx[start_w];
            if let Some(le) = last_end {
                start_k = start_k.max(le + 1);
            }
            let end_k = idx[end_w];
            debug_assert!(start_k <= end_k);
            changes.push((start_k, end_k, crossing.label()));
            last_end = Some(end_k);
        }
    }
    tile_following(&mut stream, &runs, &changes);
    stream
}
