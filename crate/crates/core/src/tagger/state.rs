//! Relative-position states, lead-vehicle election, and the highway flag.

use crate::error::{Error, Result};
use crate::model::{
    EgoTrack, LateralState, LeadVehicle, LongitudinalState, OnHighway, Params, Subject, Tag,
    TagDimension, TagStream, Timebase,
};
use crate::tagger::lateral::object_line_distances;

/// In front of or behind the ego vehicle, per observed sample.
pub fn tag_object_longitudinal_state(track: &crate::model::ObjectTrack) -> TagStream {
    TagStream::from_samples(
        Subject::Object(track.id),
        TagDimension::LongitudinalState,
        (0..track.dx.len()).map(|k| {
            if !track.observed[k] {
                None
            } else if track.dx[k] > 0.0 {
                Some(Tag::LongitudinalState(LongitudinalState::InFrontOfEgo))
            } else {
                Some(Tag::LongitudinalState(LongitudinalState::BehindEgo))
            }
        }),
    )
}

/// Which side of the ego lane the object is on, per observed sample with
/// usable line data. Samples without line data carry no tag: without the
/// lane geometry the side cannot be told.
pub fn tag_object_lateral_state(
    track: &crate::model::ObjectTrack,
    ego: &EgoTrack,
) -> TagStream {
    TagStream::from_samples(
        Subject::Object(track.id),
        TagDimension::LateralState,
        (0..track.dx.len()).map(|k| {
            if !track.observed[k] {
                return None;
            }
            let (l, r) = object_line_distances(track, ego, k)?;
            let state = match (l < 0.0, r < 0.0) {
                (true, true) => LateralState::LeftOfEgo,
                (false, true) => LateralState::SameLaneAsEgo,
                (true, false) => LateralState::Unclear,
                (false, false) => LateralState::RightOfEgo,
            };
            Some(Tag::LateralState(state))
        }),
    )
}

/// Elect the lead vehicle at every sample and tag each object accordingly.
///
/// An object leads at sample `k` when it is observed, ahead of the ego
/// vehicle (`dx > 0`), in the ego lane by its line distances, the ego is
/// moving (`v > 0`), and the time headway `dx / v` is under `tau_h`.
/// Among qualifying objects the closest wins, ties broken by the lower id.
/// Every other observed sample of every object is tagged `no_leader`;
/// with no usable line data an object cannot qualify but is still tagged.
pub fn tag_lead_vehicle(
    objects: &[crate::model::ObjectTrack],
    ego: &EgoTrack,
    params: &Params,
) -> Vec<TagStream> {
    let n = ego.speed.len();
    let mut leader_at: Vec<Option<usize>> = vec![None; n];
    for k in 0..n {
        if ego.speed[k] <= 0.0 {
            continue;
        }
        let mut best: Option<(f64, u64, usize)> = None;
        for (oi, track) in objects.iter().enumerate() {
            if !track.observed[k] || track.dx[k] <= 0.0 {
                continue;
            }
            let Some((l, r)) = object_line_distances(track, ego, k) else {
                continue;
            };
            let same_lane = l >= 0.0 && r < 0.0;
            if !same_lane || track.dx[k] / ego.speed[k] >= params.tau_h {
                continue;
            }
            let key = (track.dx[k], track.id.0, oi);
            match best {
                Some((bd, bid, _)) if (bd, bid) <= (key.0, key.1) => {}
                _ => best = Some(key),
            }
        }
        leader_at[k] = best.map(|(_, _, oi)| oi);
    }
    objects
        .iter()
        .enumerate()
        .map(|(oi, track)| {
            TagStream::from_samples(
                Subject::Object(track.id),
                TagDimension::LeadVehicle,
                (0..n).map(|k| {
                    if !track.observed[k] {
                        None
                    } else if leader_at[k] == Some(oi) {
                        Some(Tag::LeadVehicle(LeadVehicle::Leader))
                    } else {
                        Some(Tag::LeadVehicle(LeadVehicle::NoLeader))
                    }
                }),
            )
        })
        .collect()
}

/// Road classes looked up from a map: line geometries with a class string,
/// matched by distance to the recorded positions.
pub struct RoadClassProvider {
    segments: Vec<Segment>,
    classes: Vec<String>,
    match_radius_m: f64,
}

struct Segment {
    a_lat: f64,
    a_lon: f64,
    b_lat: f64,
    b_lon: f64,
    class_idx: usize,
}

/// Metres per degree of latitude; longitude is scaled by cos(latitude).
const METERS_PER_DEGREE: f64 = 111_320.0;

impl RoadClassProvider {
    pub const DEFAULT_MATCH_RADIUS_M: f64 = 15.0;

    /// Parse a GeoJSON `FeatureCollection` of `LineString` features. The
    /// road class is read from the first of the `highway`, `road_class` or
    /// `class` properties; features without one, and geometries other than
    /// line strings, are skipped.
    pub fn from_geojson_str(text: &str, match_radius_m: f64) -> Result<Self> {
        let doc: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::RoadMap(format!("invalid JSON: {e}")))?;
        let features = doc
            .get("features")
            .and_then(|f| f.as_array())
            .ok_or_else(|| Error::RoadMap("missing `features` array".into()))?;
        let mut provider = RoadClassProvider {
            segments: Vec::new(),
            classes: Vec::new(),
            match_radius_m,
        };
        for (fi, feature) in features.iter().enumerate() {
            let geometry = feature.get("geometry").unwrap_or(&serde_json::Value::Null);
            if geometry.get("type").and_then(|t| t.as_str()) != Some("LineString") {
                continue;
            }
            let props = feature.get("properties").unwrap_or(&serde_json::Value::Null);
            let class = ["highway", "road_class", "class"]
                .iter()
                .find_map(|key| props.get(*key).and_then(|v| v.as_str()));
            let Some(class) = class else {
                log::debug!("road map feature {fi} has no class property; skipped");
                continue;
            };
            let coords = geometry
                .get("coordinates")
                .and_then(|c| c.as_array())
                .ok_or_else(|| Error::RoadMap(format!("feature {fi}: missing coordinates")))?;
            let mut points = Vec::with_capacity(coords.len());
            for pt in coords {
                let pair = pt.as_array().filter(|p| p.len() >= 2).ok_or_else(|| {
                    Error::RoadMap(format!("feature {fi}: coordinate is not a [lon, lat] pair"))
                })?;
                let lon = pair[0].as_f64().ok_or_else(|| {
                    Error::RoadMap(format!("feature {fi}: non-numeric longitude"))
                })?;
                let lat = pair[1].as_f64().ok_or_else(|| {
                    Error::RoadMap(format!("feature {fi}: non-numeric latitude"))
                })?;
                points.push((lat, lon));
            }
            if points.len() < 2 {
                log::debug!("road map feature {fi} has fewer than two points; skipped");
                continue;
            }
            let class_idx = match provider.classes.iter().position(|c| c == class) {
                Some(i) => i,
                None => {
                    provider.classes.push(class.to_string());
                    provider.classes.len() - 1
                }
            };
            for pair in points.windows(2) {
                provider.segments.push(Segment {
                    a_lat: pair[0].0,
                    a_lon: pair[0].1,
                    b_lat: pair[1].0,
                    b_lon: pair[1].1,
                    class_idx,
                });
            }
        }
        Ok(provider)
    }

    /// Class of the nearest mapped road within the match radius, if any.
    /// Distances use an equirectangular approximation around the query
    /// point, which is accurate at road-matching scales.
    pub fn classify(&self, lat: f64, lon: f64) -> Option<&str> {
        let cos_lat = lat.to_radians().cos();
        let mut best: Option<(f64, usize)> = None;
        for seg in &self.segments {
            let ax = (seg.a_lon - lon) * cos_lat * METERS_PER_DEGREE;
            let ay = (seg.a_lat - lat) * METERS_PER_DEGREE;
            let bx = (seg.b_lon - lon) * cos_lat * METERS_PER_DEGREE;
            let by = (seg.b_lat - lat) * METERS_PER_DEGREE;
            let d2 = point_segment_dist2(ax, ay, bx, by);
            if d2.sqrt() <= self.match_radius_m {
                match best {
                    Some((bd2, _)) if bd2 <= d2 => {}
                    _ => best = Some((d2, seg.class_idx)),
                }
            }
        }
        best.map(|(_, idx)| self.classes[idx].as_str())
    }
}

/// Squared distance from the origin to the segment `(ax, ay)-(bx, by)`.
fn point_segment_dist2(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    let dx = bx - ax;
    let dy = by - ay;
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (-(ax * dx + ay * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let px = ax + t * dx;
    let py = ay + t * dy;
    px * px + py * py
}

/// The road class string that maps to the `highway` tag.
pub const HIGHWAY_CLASS: &str = "motorway";

/// Tag the whole timeline as on or off the highway.
///
/// Each sample resolves its road class from the recording's own `road_class`
/// column when present there, else from the road map provider via the
/// recorded position. A sample that resolves to `motorway` is `highway`,
/// any other resolved class is `no_highway`. Samples where no source yields
/// a class are `no_highway`. When the data carries no road-class column and
/// no provider-plus-positions pairing is available at all, tagging fails:
/// there is nothing to ground the environment in.
pub fn tag_environment(
    ego: &EgoTrack,
    timebase: &Timebase,
    provider: Option<&RoadClassProvider>,
) -> Result<TagStream> {
    let n = timebase.n_samples;
    let lookup_possible = ego.position.is_some() && provider.is_some();
    if ego.road_class.is_none() && !lookup_possible {
        return Err(Error::EnvironmentSourceMissing);
    }
    Ok(TagStream::from_samples(
        Subject::Environment,
        TagDimension::OnHighway,
        (0..n).map(|k| {
            let recorded = ego.road_class.as_ref().and_then(|rc| rc.get(k));
            let class = recorded.or_else(|| {
                let pos = ego.position.as_ref()?;
                if !pos.valid[k] {
                    return None;
                }
                provider?.classify(pos.lat[k], pos.lon[k])
            });
            let on = match class {
                Some(c) if c == HIGHWAY_CLASS => OnHighway::Highway,
                _ => OnHighway::NoHighway,
            };
            Some(Tag::OnHighway(on))
        }),
    ))
}
