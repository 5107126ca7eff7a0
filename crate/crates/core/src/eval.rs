//! Scoring mined instances against hand-labeled ground truth.
//!
//! Truth entries and mined instances are paired greedily: among all pairs of
//! the same category whose subjects are compatible and whose spans overlap
//! by at least `eval_overlap` (intersection over union), the highest IoU is
//! matched first, each side at most once. Matched pairs are true positives,
//! leftover instances false positives, leftover truth entries false
//! negatives.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::miner::Instance;
use crate::model::{ObjectId, Params, Subject};

/// One labeled scenario occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthEntry {
    pub category: String,
    /// Object expected among the instance's bound roles; `None` accepts any
    /// binding.
    pub subject: Option<ObjectId>,
    pub start_k: usize,
    pub end_k: usize,
}

/// Counts plus the derived scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 from raw counts. Empty denominators score zero
/// (with a warning) rather than poisoning downstream aggregation with NaN.
pub fn metrics_from_counts(
    true_positives: usize,
    false_positives: usize,
    false_negatives: usize,
) -> Metrics {
    let tp = true_positives as f64;
    let ratio = |num: f64, den: f64, name: &str| {
        if den == 0.0 {
            log::warn!("{name} has an empty denominator, reporting 0");
            0.0
        } else {
            num / den
        }
    };
    let precision = ratio(tp, tp + false_positives as f64, "precision");
    let recall = ratio(tp, tp + false_negatives as f64, "recall");
    let f1 = ratio(2.0 * precision * recall, precision + recall, "f1");
    Metrics {
        true_positives,
        false_positives,
        false_negatives,
        precision,
        recall,
        f1,
    }
}

/// Intersection over union of two inclusive sample intervals.
pub fn interval_iou(a: (usize, usize), b: (usize, usize)) -> f64 {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    if lo > hi {
        return 0.0;
    }
    let intersection = (hi - lo + 1) as f64;
    let len_a = (a.1 - a.0 + 1) as f64;
    let len_b = (b.1 - b.0 + 1) as f64;
    intersection / (len_a + len_b - intersection)
}

/// A truth entry paired with the instance that covers it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    pub truth_index: usize,
    pub instance_index: usize,
    pub iou: f64,
}

/// Everything [`evaluate`] determined, for reporting beyond the bare scores.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub matches: Vec<MatchedPair>,
    pub unmatched_truth: Vec<usize>,
    pub unmatched_instances: Vec<usize>,
    pub metrics: Metrics,
}

fn subject_compatible(entry: &GroundTruthEntry, instance: &Instance) -> bool {
    match entry.subject {
        None => true,
        Some(id) => instance
            .binding
            .values()
            .any(|&subject| subject == Subject::Object(id)),
    }
}

/// Score `instances` against `truth` using `params.eval_overlap` as the
/// minimum IoU for a plausible pair.
pub fn evaluate(
    instances: &[Instance],
    truth: &[GroundTruthEntry],
    params: &Params,
) -> Result<EvalReport> {
    params.validate()?;
    let mut pairs: Vec<MatchedPair> = Vec::new();
    for (truth_index, entry) in truth.iter().enumerate() {
        for (instance_index, instance) in instances.iter().enumerate() {
            if entry.category != instance.category || !subject_compatible(entry, instance) {
                continue;
            }
            let iou = interval_iou(
                (entry.start_k, entry.end_k),
                (instance.start_k, instance.end_k),
            );
            if iou >= params.eval_overlap {
                pairs.push(MatchedPair {
                    truth_index,
                    instance_index,
                    iou,
                });
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.iou
            .total_cmp(&a.iou)
            .then(a.truth_index.cmp(&b.truth_index))
            .then(a.instance_index.cmp(&b.instance_index))
    });

    let mut truth_taken = vec![false; truth.len()];
    let mut instance_taken = vec![false; instances.len()];
    let mut matches = Vec::new();
    for pair in pairs {
        if truth_taken[pair.truth_index] || instance_taken[pair.instance_index] {
            continue;
        }
        truth_taken[pair.truth_index] = true;
        instance_taken[pair.instance_index] = true;
        matches.push(pair);
    }
    matches.sort_by_key(|m| m.truth_index);

    let unmatched_truth: Vec<usize> = (0..truth.len()).filter(|&i| !truth_taken[i]).collect();
    let unmatched_instances: Vec<usize> = (0..instances.len())
        .filter(|&i| !instance_taken[i])
        .collect();
    let metrics = metrics_from_counts(
        matches.len(),
        unmatched_instances.len(),
        unmatched_truth.len(),
    );
    Ok(EvalReport {
        matches,
        unmatched_truth,
        unmatched_instances,
        metrics,
    })
}

// ---------------------------------------------------------------------------
// Ground truth CSV
// ---------------------------------------------------------------------------

const TRUTH_HEADER: [&str; 4] = ["category", "subject_id", "start_k", "end_k"];

fn csv_error(path: &Path, e: csv::Error, line: u64) -> Error {
    if matches!(e.kind(), csv::ErrorKind::Io(_)) {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        }
    }
}

/// Read a ground truth file: CSV with columns
/// `category,subject_id,start_k,end_k`, `subject_id` optionally empty.
pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruthEntry>> {
    let path = path.as_ref();
    let malformed = |line: u64, message: String| Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e, 1))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| malformed(1, e.to_string()))?;
        let got: Vec<&str> = headers.iter().collect();
        if got != TRUTH_HEADER {
            return Err(malformed(
                1,
                format!(
                    "expected header `{}`, got `{}`",
                    TRUTH_HEADER.join(","),
                    got.join(",")
                ),
            ));
        }
    }
    let mut entries = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = (idx + 2) as u64;
        let record = record.map_err(|e| malformed(line, e.to_string()))?;
        if record.len() != TRUTH_HEADER.len() {
            return Err(malformed(
                line,
                format!("expected {} cells, got {}", TRUTH_HEADER.len(), record.len()),
            ));
        }
        let category = record[0].to_string();
        if category.is_empty() {
            return Err(malformed(line, "category must not be empty".into()));
        }
        let subject = if record[1].is_empty() {
            None
        } else {
            Some(ObjectId(record[1].parse().map_err(|_| {
                malformed(line, format!("`{}` is not an object id", &record[1]))
            })?))
        };
        let parse_k = |cell: &str, name: &str| -> Result<usize> {
            cell.parse()
                .map_err(|_| malformed(line, format!("`{cell}` is not a valid {name}")))
        };
        let start_k = parse_k(&record[2], "start_k")?;
        let end_k = parse_k(&record[3], "end_k")?;
        if start_k > end_k {
            return Err(malformed(
                line,
                format!("start_k {start_k} is after end_k {end_k}"),
            ));
        }
        entries.push(GroundTruthEntry {
            category,
            subject,
            start_k,
            end_k,
        });
    }
    Ok(entries)
}

/// Write ground truth in the format [`load_ground_truth`] reads.
pub fn save_ground_truth(
    entries: &[GroundTruthEntry],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let as_err = |e: csv::Error| csv_error(path, e, 0);
    let mut writer = csv::Writer::from_path(path).map_err(as_err)?;
    writer.write_record(TRUTH_HEADER).map_err(as_err)?;
    for entry in entries {
        let subject = entry.subject.map(|id| id.0.to_string()).unwrap_or_default();
        writer
            .write_record([
                entry.category.as_str(),
                subject.as_str(),
                &entry.start_k.to_string(),
                &entry.end_k.to_string(),
            ])
            .map_err(as_err)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Category names present in either list, for per-category reporting.
pub fn category_names(
    instances: &[Instance],
    truth: &[GroundTruthEntry],
) -> BTreeSet<String> {
    instances
        .iter()
        .map(|i| i.category.clone())
        .chain(truth.iter().map(|t| t.category.clone()))
        .collect()
}
