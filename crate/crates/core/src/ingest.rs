//! Loading and saving datasets as CSV.
//!
//! A dataset is two files. `ego.csv` has one row per sample:
//!
//! ```text
//! k,t,v,dy_left,dy_right[,lat][,lon][,road_class]
//! ```
//!
//! `objects.csv` has one row per (sample, observed object):
//!
//! ```text
//! k,id,dx,dy,v_rel[,dy_left_i,dy_right_i]
//! ```
//!
//! Headers are mandatory and name the columns; UTF-8 encoding and `.` as the
//! decimal separator. An empty cell means "value missing at this sample":
//! missing lane line distances mark the sample line-invalid, a missing object
//! row marks the object unobserved. Required numeric cells (`v`, `dx`, `dy`,
//! `v_rel`, `t`) must parse to finite numbers; anything else is a hard error
//! naming the file and line. There is no resampling: the time column must
//! agree with the configured sample period.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{
    EgoTrack, ObjectId, ObjectLineSeries, ObjectTrack, Params, PositionSeries, RoadClassSeries,
    Timebase,
};

/// One recording: the common timeline, the ego track and all object tracks
/// (sorted by id).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub timebase: Timebase,
    pub ego: EgoTrack,
    pub objects: Vec<ObjectTrack>,
}

impl Dataset {
    pub fn n_samples(&self) -> usize {
        self.timebase.n_samples
    }

    pub fn object(&self, id: ObjectId) -> Option<&ObjectTrack> {
        self.objects.iter().find(|o| o.id == id)
    }
}

/// Maximum absolute deviation between the declared time column and the
/// configured sample period before loading fails.
pub const SAMPLE_TIME_TOLERANCE_S: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

struct HeaderMap {
    indices: BTreeMap<String, usize>,
}

impl HeaderMap {
    fn new(header: &csv::StringRecord) -> Self {
        let indices = header
            .iter()
            .enumerate()
            .map(|(i, name)| (name.trim().to_string(), i))
            .collect();
        HeaderMap { indices }
    }

    fn get(&self, name: &str) -> Option<usize> {
        self.indices.get(name).copied()
    }

    fn require(&self, name: &str, path: &Path) -> Result<usize> {
        self.get(name).ok_or_else(|| Error::MalformedRow {
            path: path.to_path_buf(),
            line: 1,
            message: format!("missing required column `{name}`"),
        })
    }
}

fn malformed(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// A cell that must hold a finite number.
fn required_f64(record: &csv::StringRecord, idx: usize, name: &str, path: &Path, line: u64) -> Result<f64> {
    let raw = record
        .get(idx)
        .ok_or_else(|| malformed(path, line, format!("missing cell `{name}`")))?
        .trim();
    if raw.is_empty() {
        return Err(malformed(path, line, format!("required cell `{name}` is empty")));
    }
    let value: f64 = raw
        .parse()
        .map_err(|_| malformed(path, line, format!("cell `{name}` is not a number: `{raw}`")))?;
    if !value.is_finite() {
        return Err(malformed(path, line, format!("cell `{name}` is not finite: `{raw}`")));
    }
    Ok(value)
}

/// A cell that may be empty (masked). Non-finite values count as missing.
fn optional_f64(
    record: &csv::StringRecord,
    idx: Option<usize>,
    name: &str,
    path: &Path,
    line: u64,
) -> Result<Option<f64>> {
    let Some(idx) = idx else { return Ok(None) };
    let raw = record.get(idx).map(str::trim).unwrap_or("");
    if raw.is_empty() {
        return Ok(None);
    }
    let value: f64 = raw
        .parse()
        .map_err(|_| malformed(path, line, format!("cell `{name}` is not a number: `{raw}`")))?;
    if value.is_finite() {
        Ok(Some(value))
    } else {
        log::debug!("{}:{line}: non-finite `{name}` treated as missing", path.display());
        Ok(None)
    }
}

fn required_usize(record: &csv::StringRecord, idx: usize, name: &str, path: &Path, line: u64) -> Result<usize> {
    let raw = record
        .get(idx)
        .ok_or_else(|| malformed(path, line, format!("missing cell `{name}`")))?
        .trim();
    raw.parse()
        .map_err(|_| malformed(path, line, format!("cell `{name}` is not a sample index: `{raw}`")))
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                if let csv::ErrorKind::Io(io) = e.into_kind() {
                    Error::io(path, io)
                } else {
                    unreachable!()
                }
            }
            _ => malformed(path, 1, e.to_string()),
        })
    }

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn load_ego(path: &Path, params: &Params) -> Result<(Timebase, EgoTrack)> {
    let mut reader = open_reader(path)?;
    let header = reader
        .headers()
        .map_err(|e| malformed(path, 1, e.to_string()))?
        .clone();
    let cols = HeaderMap::new(&header);
    let col_k = cols.require("k", path)?;
    let col_t = cols.require("t", path)?;
    let col_v = cols.require("v", path)?;
    let col_dy_left = cols.require("dy_left", path)?;
    let col_dy_right = cols.require("dy_right", path)?;
    let col_lat = cols.get("lat");
    let col_lon = cols.get("lon");
    let col_road = cols.get("road_class");
    let has_position = col_lat.is_some() && col_lon.is_some();

    let mut speed = Vec::new();
    let mut dy_left = Vec::new();
    let mut dy_right = Vec::new();
    let mut line_valid = Vec::new();
    let mut lat = Vec::new();
    let mut lon = Vec::new();
    let mut pos_valid = Vec::new();
    let mut road_cells: Vec<Option<String>> = Vec::new();
    let mut origin_time = 0.0f64;

    for record in reader.records() {
        let record = record.map_err(|e| malformed(path, 0, e.to_string()))?;
        let line = record_line(&record);
        let k = required_usize(&record, col_k, "k", path, line)?;
        let expected_k = speed.len();
        if k != expected_k {
            return Err(Error::NonMonotoneSampleIndex {
                path: path.to_path_buf(),
                line,
                got: k,
                previous: expected_k.wrapping_sub(1),
            });
        }
        let t = required_f64(&record, col_t, "t", path, line)?;
        if k == 0 {
            origin_time = t;
        } else {
            let expected_t = origin_time + k as f64 * params.ts;
            if (t - expected_t).abs() > SAMPLE_TIME_TOLERANCE_S {
                return Err(Error::SampleTimeMismatch {
                    declared: (t - origin_time) / k as f64,
                    expected: params.ts,
                });
            }
        }
        speed.push(required_f64(&record, col_v, "v", path, line)?);
        let left = optional_f64(&record, Some(col_dy_left), "dy_left", path, line)?;
        let right = optional_f64(&record, Some(col_dy_right), "dy_right", path, line)?;
        match (left, right) {
            (Some(l), Some(r)) => {
                dy_left.push(l);
                dy_right.push(r);
                line_valid.push(true);
            }
            _ => {
                dy_left.push(0.0);
                dy_right.push(0.0);
                line_valid.push(false);
            }
        }
        if has_position {
            let la = optional_f64(&record, col_lat, "lat", path, line)?;
            let lo = optional_f64(&record, col_lon, "lon", path, line)?;
            match (la, lo) {
                (Some(la), Some(lo)) => {
                    lat.push(la);
                    lon.push(lo);
                    pos_valid.push(true);
                }
                _ => {
                    lat.push(0.0);
                    lon.push(0.0);
                    pos_valid.push(false);
                }
            }
        }
        if let Some(idx) = col_road {
            let cell = record.get(idx).map(str::trim).unwrap_or("");
            road_cells.push((!cell.is_empty()).then(|| cell.to_string()));
        }
    }

    let n = speed.len();
    if n == 0 {
        return Err(malformed(path, 1, "ego file contains no samples"));
    }

    let position = if has_position && pos_valid.iter().any(|&v| v) {
        Some(PositionSeries {
            lat,
            lon,
            valid: pos_valid,
        })
    } else {
        None
    };
    let road_class = if col_road.is_some() && road_cells.iter().any(Option::is_some) {
        let mut series = RoadClassSeries::new(n);
        for (k, cell) in road_cells.iter().enumerate() {
            if let Some(class) = cell {
                series.set(k, class);
            }
        }
        Some(series)
    } else {
        None
    };

    let timebase = Timebase::new(n, params.ts, origin_time);
    let ego = EgoTrack {
        speed,
        dy_left,
        dy_right,
        line_valid,
        position,
        road_class,
    };
    Ok((timebase, ego))
}

fn load_objects(path: &Path, n_samples: usize) -> Result<Vec<ObjectTrack>> {
    let mut reader = open_reader(path)?;
    let header = reader
        .headers()
        .map_err(|e| malformed(path, 1, e.to_string()))?
        .clone();
    let cols = HeaderMap::new(&header);
    let col_k = cols.require("k", path)?;
    let col_id = cols.require("id", path)?;
    let col_dx = cols.require("dx", path)?;
    let col_dy = cols.require("dy", path)?;
    let col_v_rel = cols.require("v_rel", path)?;
    let col_line_left = cols.get("dy_left_i");
    let col_line_right = cols.get("dy_right_i");
    let has_lines = col_line_left.is_some() && col_line_right.is_some();

    struct Builder {
        track: ObjectTrack,
        last_k: usize,
    }
    let mut builders: BTreeMap<u64, Builder> = BTreeMap::new();

    for record in reader.records() {
        let record = record.map_err(|e| malformed(path, 0, e.to_string()))?;
        let line = record_line(&record);
        let k = required_usize(&record, col_k, "k", path, line)?;
        if k >= n_samples {
            return Err(Error::SampleOutOfRange { k, n_samples });
        }
        let id_raw = record.get(col_id).map(str::trim).unwrap_or("");
        let id: u64 = id_raw
            .parse()
            .map_err(|_| malformed(path, line, format!("cell `id` is not an id: `{id_raw}`")))?;
        let dx = required_f64(&record, col_dx, "dx", path, line)?;
        let dy = required_f64(&record, col_dy, "dy", path, line)?;
        let v_rel = required_f64(&record, col_v_rel, "v_rel", path, line)?;

        let builder = builders.entry(id).or_insert_with(|| Builder {
            track: ObjectTrack {
                id: ObjectId(id),
                dx: vec![0.0; n_samples],
                dy: vec![0.0; n_samples],
                v_rel: vec![0.0; n_samples],
                observed: vec![false; n_samples],
                lines: has_lines.then(|| ObjectLineSeries {
                    dy_left: vec![0.0; n_samples],
                    dy_right: vec![0.0; n_samples],
                    valid: vec![false; n_samples],
                }),
            },
            last_k: usize::MAX,
        });
        if builder.last_k != usize::MAX {
            if k == builder.last_k {
                return Err(Error::DuplicateObjectRow {
                    path: path.to_path_buf(),
                    line,
                    k,
                    id,
                });
            }
            if k < builder.last_k {
                return Err(Error::NonMonotoneSampleIndex {
                    path: path.to_path_buf(),
                    line,
                    got: k,
                    previous: builder.last_k,
                });
            }
        }
        builder.last_k = k;
        builder.track.dx[k] = dx;
        builder.track.dy[k] = dy;
        builder.track.v_rel[k] = v_rel;
        builder.track.observed[k] = true;
        if has_lines {
            let left = optional_f64(&record, col_line_left, "dy_left_i", path, line)?;
            let right = optional_f64(&record, col_line_right, "dy_right_i", path, line)?;
            let lines = builder.track.lines.as_mut().expect("allocated above");
            if let (Some(l), Some(r)) = (left, right) {
                lines.dy_left[k] = l;
                lines.dy_right[k] = r;
                lines.valid[k] = true;
            }
        }
    }

    let mut objects: Vec<ObjectTrack> = builders
        .into_values()
        .map(|b| {
            let mut track = b.track;
            // Normalise "line columns exist but this object never used them"
            // back to "no line data" so save/load round-trips exactly.
            if track
                .lines
                .as_ref()
                .is_some_and(|l| l.valid.iter().all(|&v| !v))
            {
                track.lines = None;
            }
            track
        })
        .collect();
    objects.sort_by_key(|o| o.id);
    Ok(objects)
}

/// Load a dataset. `objects_path` may be omitted for recordings without
/// tracked objects. `params.ts` is the expected sample period; a time column
/// that disagrees beyond [`SAMPLE_TIME_TOLERANCE_S`] fails instead of being
/// resampled.
pub fn load_dataset(
    ego_path: impl AsRef<Path>,
    objects_path: Option<&Path>,
    params: &Params,
) -> Result<Dataset> {
    let (timebase, ego) = load_ego(ego_path.as_ref(), params)?;
    let objects = match objects_path {
        Some(path) => load_objects(path, timebase.n_samples)?,
        None => Vec::new(),
    };
    Ok(Dataset {
        timebase,
        ego,
        objects,
    })
}

// ---------------------------------------------------------------------------
// Saving
// ---------------------------------------------------------------------------

fn fmt_f64(value: f64) -> String {
    format!("{value}")
}

/// Write a dataset back to the two-file CSV layout. Masked samples become
/// empty cells, unobserved object samples produce no row, so saving and
/// reloading reproduces the dataset exactly.
pub fn save_dataset(
    dataset: &Dataset,
    ego_path: impl AsRef<Path>,
    objects_path: impl AsRef<Path>,
) -> Result<()> {
    let ego_path = ego_path.as_ref();
    let objects_path = objects_path.as_ref();
    let n = dataset.n_samples();
    let ego = &dataset.ego;

    let mut writer =
        csv::Writer::from_path(ego_path).map_err(|e| malformed(ego_path, 0, e.to_string()))?;
    let mut header = vec!["k", "t", "v", "dy_left", "dy_right"];
    if ego.position.is_some() {
        header.push("lat");
        header.push("lon");
    }
    if ego.road_class.is_some() {
        header.push("road_class");
    }
    writer
        .write_record(&header)
        .map_err(|e| malformed(ego_path, 0, e.to_string()))?;
    for k in 0..n {
        let mut row: Vec<String> = vec![
            k.to_string(),
            fmt_f64(dataset.timebase.time_of(k)),
            fmt_f64(ego.speed[k]),
        ];
        if ego.line_valid[k] {
            row.push(fmt_f64(ego.dy_left[k]));
            row.push(fmt_f64(ego.dy_right[k]));
        } else {
            row.push(String::new());
            row.push(String::new());
        }
        if let Some(pos) = &ego.position {
            if pos.valid[k] {
                row.push(fmt_f64(pos.lat[k]));
                row.push(fmt_f64(pos.lon[k]));
            } else {
                row.push(String::new());
                row.push(String::new());
            }
        }
        if let Some(road) = &ego.road_class {
            row.push(road.get(k).unwrap_or("").to_string());
        }
        writer
            .write_record(&row)
            .map_err(|e| malformed(ego_path, 0, e.to_string()))?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(ego_path, e))?;

    let any_lines = dataset.objects.iter().any(|o| o.lines.is_some());
    let mut writer = csv::Writer::from_path(objects_path)
        .map_err(|e| malformed(objects_path, 0, e.to_string()))?;
    let mut header = vec!["k", "id", "dx", "dy", "v_rel"];
    if any_lines {
        header.push("dy_left_i");
        header.push("dy_right_i");
    }
    writer
        .write_record(&header)
        .map_err(|e| malformed(objects_path, 0, e.to_string()))?;
    for k in 0..n {
        for track in &dataset.objects {
            if !track.observed[k] {
                continue;
            }
            let mut row: Vec<String> = vec![
                k.to_string(),
                track.id.to_string(),
                fmt_f64(track.dx[k]),
                fmt_f64(track.dy[k]),
                fmt_f64(track.v_rel[k]),
            ];
            if any_lines {
                match &track.lines {
                    Some(lines) if lines.valid[k] => {
                        row.push(fmt_f64(lines.dy_left[k]));
                        row.push(fmt_f64(lines.dy_right[k]));
                    }
                    _ => {
                        row.push(String::new());
                        row.push(String::new());
                    }
                }
            }
            writer
                .write_record(&row)
                .map_err(|e| malformed(objects_path, 0, e.to_string()))?;
        }
    }
    writer
        .flush()
        .map_err(|e| Error::io(objects_path, e))?;
    Ok(())
}
