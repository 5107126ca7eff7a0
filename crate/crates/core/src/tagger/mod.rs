//! The tagging stage: turn raw tracks into per-subject tag streams.
//!
//! Tagging computes, per subject and dimension, a sorted list of tag
//! intervals over the shared timeline:
//!
//! * ego: `longitudinal_activity`, `lateral_activity`
//! * each object: those two plus `longitudinal_state`, `lateral_state` and
//!   `lead_vehicle`
//! * environment: `on_highway`
//!
//! Objects are only tagged where observed, and some dimensions additionally
//! need line data, so object streams may have gaps. Ego and environment
//! streams cover the whole timeline.

pub mod lateral;
pub mod longitudinal;
pub mod state;

pub use lateral::{tag_ego_lateral, tag_object_lateral};
pub use longitudinal::{tag_ego_longitudinal, tag_object_longitudinal};
pub use state::{
    tag_environment, tag_lead_vehicle, tag_object_lateral_state,
    tag_object_longitudinal_state, RoadClassProvider, HIGHWAY_CLASS,
};

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::model::{
    ObjectTrack, Params, Subject, Tag, TagDimension, TagStream, TaggedDataset, Timebase,
};

/// The dimensions tagged for the ego vehicle.
pub fn ego_dimensions() -> BTreeSet<TagDimension> {
    [
        TagDimension::LongitudinalActivity,
        TagDimension::LateralActivity,
    ]
    .into()
}

/// The dimensions tagged for every object.
pub fn object_dimensions() -> BTreeSet<TagDimension> {
    [
        TagDimension::LongitudinalActivity,
        TagDimension::LateralActivity,
        TagDimension::LongitudinalState,
        TagDimension::LateralState,
        TagDimension::LeadVehicle,
    ]
    .into()
}

/// The dimensions tagged for the environment.
pub fn environment_dimensions() -> BTreeSet<TagDimension> {
    [TagDimension::OnHighway].into()
}

/// The per-object streams that need no cross-object information. Exposed so
/// that callers can fan the per-object work out over threads; the order of
/// the returned streams is fixed.
pub fn tag_object(
    track: &ObjectTrack,
    ego: &crate::model::EgoTrack,
    params: &Params,
) -> Vec<TagStream> {
    vec![
        tag_object_longitudinal(track, ego, params),
        tag_object_lateral(track, ego, params),
        tag_object_longitudinal_state(track),
        tag_object_lateral_state(track, ego),
    ]
}

/// Tag a whole dataset. Streams are ordered ego, environment, then objects
/// by ascending id, each with its dimensions in a fixed order, so the output
/// is deterministic.
pub fn tag_dataset(
    dataset: &Dataset,
    params: &Params,
    provider: Option<&RoadClassProvider>,
) -> Result<TaggedDataset> {
    params.validate()?;
    let mut streams = Vec::new();
    streams.push(tag_ego_longitudinal(&dataset.ego, params));
    streams.push(tag_ego_lateral(&dataset.ego, params));
    streams.push(tag_environment(&dataset.ego, &dataset.timebase, provider)?);
    let lead = tag_lead_vehicle(&dataset.objects, &dataset.ego, params);
    for (track, lead_stream) in dataset.objects.iter().zip(lead) {
        streams.extend(tag_object(track, &dataset.ego, params));
        streams.push(lead_stream);
    }
    let object_ids = dataset.objects.iter().map(|t| t.id).collect();
    Ok(TaggedDataset::new(
        dataset.timebase,
        streams,
        ego_dimensions(),
        object_dimensions(),
        environment_dimensions(),
        object_ids,
    ))
}

// ---------------------------------------------------------------------------
// Tag file format
// ---------------------------------------------------------------------------
//
// JSON Lines. The first line is a meta object describing the timeline and
// what was tagged; every further line is one tag interval.

#[derive(Serialize, Deserialize)]
struct MetaLine {
    meta: MetaBody,
}

#[derive(Serialize, Deserialize)]
struct MetaBody {
    n_samples: usize,
    sample_time_s: f64,
    origin_time_s: f64,
    ego_dimensions: Vec<String>,
    object_dimensions: Vec<String>,
    environment_dimensions: Vec<String>,
    object_ids: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct IntervalLine {
    subject: String,
    dimension: String,
    value: String,
    start_k: usize,
    end_k: usize,
}

/// Write a tagged dataset as JSON lines: one meta line, then one line per
/// tag interval.
pub fn write_tags<W: Write>(tagged: &TaggedDataset, mut out: W) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io {
        path: "<tag output>".into(),
        source: e,
    };
    let dims = |set: &BTreeSet<TagDimension>| set.iter().map(|d| d.as_str().to_string()).collect();
    let meta = MetaLine {
        meta: MetaBody {
            n_samples: tagged.timebase.n_samples,
            sample_time_s: tagged.timebase.sample_time_s,
            origin_time_s: tagged.timebase.origin_time_s,
            ego_dimensions: dims(&tagged.ego_dimensions),
            object_dimensions: dims(&tagged.object_dimensions),
            environment_dimensions: dims(&tagged.environment_dimensions),
            object_ids: tagged.object_ids.iter().map(|id| id.0).collect(),
        },
    };
    let line = serde_json::to_string(&meta).expect("meta serializes");
    writeln!(out, "{line}").map_err(io_err)?;
    for stream in &tagged.streams {
        for interval in &stream.intervals {
            let line = serde_json::to_string(&IntervalLine {
                subject: stream.subject.to_token(),
                dimension: stream.dimension.as_str().to_string(),
                value: interval.value.as_str().to_string(),
                start_k: interval.start_k,
                end_k: interval.end_k,
            })
            .expect("interval serializes");
            writeln!(out, "{line}").map_err(io_err)?;
        }
    }
    Ok(())
}

/// Read a tag file written by [`write_tags`]. Streams are validated against
/// the declared timeline.
pub fn read_tags<R: BufRead>(input: R) -> Result<TaggedDataset> {
    let mut lines = input.lines().enumerate();
    let malformed =
        |line: usize, message: String| Error::MalformedTagFile { line: line as u64, message };
    let io_err = |e: std::io::Error| Error::Io {
        path: "<tag input>".into(),
        source: e,
    };

    let (_, first) = lines
        .next()
        .ok_or_else(|| malformed(1, "empty file, expected a meta line".into()))?;
    let first = first.map_err(io_err)?;
    let meta: MetaLine = serde_json::from_str(&first)
        .map_err(|e| malformed(1, format!("bad meta line: {e}")))?;
    let meta = meta.meta;

    let parse_dims = |names: &[String], line: usize| -> Result<BTreeSet<TagDimension>> {
        names
            .iter()
            .map(|name| {
                TagDimension::parse(name)
                    .ok_or_else(|| malformed(line, format!("unknown dimension `{name}`")))
            })
            .collect()
    };
    let ego_dimensions = parse_dims(&meta.ego_dimensions, 1)?;
    let object_dimensions = parse_dims(&meta.object_dimensions, 1)?;
    let environment_dimensions = parse_dims(&meta.environment_dimensions, 1)?;
    let object_ids: BTreeSet<crate::model::ObjectId> = meta
        .object_ids
        .iter()
        .map(|&id| crate::model::ObjectId(id))
        .collect();
    let timebase = Timebase::new(meta.n_samples, meta.sample_time_s, meta.origin_time_s);

    let mut streams: Vec<TagStream> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let record: IntervalLine = serde_json::from_str(&line)
            .map_err(|e| malformed(line_no, format!("bad interval line: {e}")))?;
        let subject = Subject::parse_token(&record.subject)
            .ok_or_else(|| malformed(line_no, format!("unknown subject `{}`", record.subject)))?;
        let dimension = TagDimension::parse(&record.dimension).ok_or_else(|| {
            malformed(line_no, format!("unknown dimension `{}`", record.dimension))
        })?;
        let value = Tag::parse(dimension, &record.value)
            .map_err(|e| malformed(line_no, e.to_string()))?;
        if record.start_k > record.end_k || record.end_k >= meta.n_samples {
            return Err(malformed(
                line_no,
                format!(
                    "interval [{}, {}] does not fit a timeline of {} samples",
                    record.start_k, record.end_k, meta.n_samples
                ),
            ));
        }
        let matches_last = streams
            .last()
            .is_some_and(|s| s.subject == subject && s.dimension == dimension);
        if !matches_last {
            if streams
                .iter()
                .any(|s| s.subject == subject && s.dimension == dimension)
            {
                return Err(malformed(
                    line_no,
                    format!(
                        "intervals of {} / {} are not contiguous in the file",
                        record.subject, record.dimension
                    ),
                ));
            }
            streams.push(TagStream::new(subject, dimension));
        }
        let stream = streams.last_mut().expect("just ensured");
        if stream
            .intervals
            .last()
            .is_some_and(|last| record.start_k <= last.end_k)
        {
            return Err(malformed(
                line_no,
                format!(
                    "interval starting at {} overlaps or precedes the previous one",
                    record.start_k
                ),
            ));
        }
        stream.push(record.start_k, record.end_k, value);
    }
    for stream in &streams {
        stream.validate(meta.n_samples)?;
    }
    Ok(TaggedDataset::new(
        timebase,
        streams,
        ego_dimensions,
        object_dimensions,
        environment_dimensions,
        object_ids,
    ))
}
