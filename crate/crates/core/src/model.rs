//! Core data model: the sampled timeline, ego and object tracks, the closed
//! tag vocabulary, tag streams, and the parameter set shared by every stage.
//!
//! All series are sampled on one common, equidistant timeline. A sample index
//! `k` addresses the same instant in every series of a dataset. Tags never
//! store per-sample arrays; they are run-length intervals `[start_k, end_k]`
//! (inclusive on both ends) over that timeline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Timeline
// ---------------------------------------------------------------------------

/// The common equidistant timeline of a recording.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timebase {
    /// Number of samples in the recording.
    pub n_samples: usize,
    /// Sample period in seconds.
    pub sample_time_s: f64,
    /// Absolute time of sample 0 in seconds.
    pub origin_time_s: f64,
}

impl Timebase {
    pub fn new(n_samples: usize, sample_time_s: f64, origin_time_s: f64) -> Self {
        Timebase {
            n_samples,
            sample_time_s,
            origin_time_s,
        }
    }

    /// Absolute time of sample `k`.
    pub fn time_of(&self, k: usize) -> f64 {
        self.origin_time_s + k as f64 * self.sample_time_s
    }
}

// ---------------------------------------------------------------------------
// Subjects
// ---------------------------------------------------------------------------

/// Opaque identifier of a tracked object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectId(pub u64);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Who a tag stream talks about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Subject {
    Ego,
    Object(ObjectId),
    Environment,
}

impl Subject {
    /// Compact string form used in files: `ego`, `env`, `obj:<id>`.
    pub fn to_token(self) -> String {
        match self {
            Subject::Ego => "ego".to_string(),
            Subject::Environment => "env".to_string(),
            Subject::Object(id) => format!("obj:{id}"),
        }
    }

    pub fn parse_token(s: &str) -> Option<Subject> {
        match s {
            "ego" => Some(Subject::Ego),
            "env" => Some(Subject::Environment),
            _ => s
                .strip_prefix("obj:")
                .and_then(|id| id.parse::<u64>().ok())
                .map(|id| Subject::Object(ObjectId(id))),
        }
    }
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_token())
    }
}

// ---------------------------------------------------------------------------
// Tracks
// ---------------------------------------------------------------------------

/// Ego vehicle series. Lateral distances use ISO vehicle coordinates:
/// x forward, y to the left. `dy_left` is the lateral distance to the left
/// lane line (non-negative while inside the lane), `dy_right` the distance to
/// the right lane line (non-positive while inside the lane).
#[derive(Debug, Clone, PartialEq)]
pub struct EgoTrack {
    /// Speed in m/s, one value per sample.
    pub speed: Vec<f64>,
    /// Distance to the left lane line in m; meaningful where `line_valid`.
    pub dy_left: Vec<f64>,
    /// Distance to the right lane line in m; meaningful where `line_valid`.
    pub dy_right: Vec<f64>,
    /// True where both lane line distances are available.
    pub line_valid: Vec<bool>,
    /// Optional WGS84 positions for map-based environment tagging.
    pub position: Option<PositionSeries>,
    /// Optional per-sample road class labels (interned).
    pub road_class: Option<RoadClassSeries>,
}

/// WGS84 positions, meaningful where `valid`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionSeries {
    pub lat: Vec<f64>,
    pub lon: Vec<f64>,
    pub valid: Vec<bool>,
}

/// Per-sample road class labels stored against a small palette so that long
/// recordings do not pay one heap string per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadClassSeries {
    /// Palette index + 1 per sample; 0 means "no label at this sample".
    ids: Vec<u32>,
    palette: Vec<String>,
}

impl RoadClassSeries {
    pub fn new(n_samples: usize) -> Self {
        RoadClassSeries {
            ids: vec![0; n_samples],
            palette: Vec::new(),
        }
    }

    pub fn set(&mut self, k: usize, class: &str) {
        let id = match self.palette.iter().position(|p| p == class) {
            Some(i) => i + 1,
            None => {
                self.palette.push(class.to_string());
                self.palette.len()
            }
        };
        self.ids[k] = id as u32;
    }

    pub fn get(&self, k: usize) -> Option<&str> {
        match self.ids[k] {
            0 => None,
            id => Some(&self.palette[id as usize - 1]),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Optional per-object lane line distances, as delivered by a perception
/// stack that already works in the object's frame. Where valid they take
/// precedence over distances derived from the ego lane lines.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectLineSeries {
    pub dy_left: Vec<f64>,
    pub dy_right: Vec<f64>,
    pub valid: Vec<bool>,
}

/// One tracked object. All series span the full timeline; values are only
/// meaningful where `observed` is true.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTrack {
    pub id: ObjectId,
    /// Longitudinal distance to the ego vehicle in m (positive = in front).
    pub dx: Vec<f64>,
    /// Lateral distance to the ego vehicle in m (positive = to the left).
    pub dy: Vec<f64>,
    /// Relative speed in m/s; absolute speed is `v_rel + ego speed`.
    pub v_rel: Vec<f64>,
    /// True where the object is tracked at this sample.
    pub observed: Vec<bool>,
    /// Optional precomputed distances to the ego lane lines.
    pub lines: Option<ObjectLineSeries>,
}

impl ObjectTrack {
    /// Maximal runs of consecutive observed samples, in order.
    pub fn observed_runs(&self) -> Vec<(usize, usize)> {
        bool_runs(&self.observed)
    }
}

/// Maximal runs of `true` in a mask, as inclusive `(start, end)` pairs.
pub fn bool_runs(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (k, &m) in mask.iter().enumerate() {
        match (m, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                runs.push((s, k - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, mask.len() - 1));
    }
    runs
}

// ---------------------------------------------------------------------------
// Tag vocabulary
// ---------------------------------------------------------------------------

macro_rules! tag_value_enum {
    ($(#[$doc:meta])* $name:ident { $($variant:ident => $token:literal $(| $alias:literal)?),+ $(,)? }) => {
        $(#[$doc])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($variant,)+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant,)+];
            pub const TOKENS: &'static [&'static str] = &[$($token,)+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $token,)+
                }
            }

            pub fn parse(s: &str) -> Option<Self> {
                match s {
                    $($token $(| $alias)? => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

tag_value_enum! {
    /// How the subject's speed evolves. `braking` is accepted as an input
    /// alias for `decelerating`.
    LongitudinalActivity {
        Accelerating => "accelerating",
        Decelerating => "decelerating" | "braking",
        Cruising => "cruising",
    }
}

tag_value_enum! {
    /// Whether the subject keeps its lane or moves across a lane line.
    LateralActivity {
        FollowingLane => "following_lane",
        ChangingLaneLeft => "changing_lane_left",
        ChangingLaneRight => "changing_lane_right",
    }
}

tag_value_enum! {
    /// Longitudinal position of an object relative to the ego vehicle.
    LongitudinalState {
        InFrontOfEgo => "in_front_of_ego",
        BehindEgo => "behind_ego",
    }
}

tag_value_enum! {
    /// Lateral position of an object relative to the ego lane.
    LateralState {
        LeftOfEgo => "left_of_ego",
        RightOfEgo => "right_of_ego",
        SameLaneAsEgo => "same_lane_as_ego",
        Unclear => "unclear",
    }
}

tag_value_enum! {
    /// Whether an object is the ego vehicle's lead vehicle.
    LeadVehicle {
        Leader => "leader",
        NoLeader => "no_leader",
    }
}

tag_value_enum! {
    /// Whether the recording is on a highway at this sample.
    OnHighway {
        Highway => "highway",
        NoHighway => "no_highway",
    }
}

/// The six tag dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TagDimension {
    LongitudinalActivity,
    LateralActivity,
    LongitudinalState,
    LateralState,
    LeadVehicle,
    OnHighway,
}

impl TagDimension {
    pub const ALL: &'static [TagDimension] = &[
        TagDimension::LongitudinalActivity,
        TagDimension::LateralActivity,
        TagDimension::LongitudinalState,
        TagDimension::LateralState,
        TagDimension::LeadVehicle,
        TagDimension::OnHighway,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TagDimension::LongitudinalActivity => "longitudinal_activity",
            TagDimension::LateralActivity => "lateral_activity",
            TagDimension::LongitudinalState => "longitudinal_state",
            TagDimension::LateralState => "lateral_state",
            TagDimension::LeadVehicle => "lead_vehicle",
            TagDimension::OnHighway => "on_highway",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        TagDimension::ALL.iter().copied().find(|d| d.as_str() == s)
    }

    /// Valid value tokens of this dimension, for error messages.
    pub fn valid_values(self) -> &'static [&'static str] {
        match self {
            TagDimension::LongitudinalActivity => LongitudinalActivity::TOKENS,
            TagDimension::LateralActivity => LateralActivity::TOKENS,
            TagDimension::LongitudinalState => LongitudinalState::TOKENS,
            TagDimension::LateralState => LateralState::TOKENS,
            TagDimension::LeadVehicle => LeadVehicle::TOKENS,
            TagDimension::OnHighway => OnHighway::TOKENS,
        }
    }
}

impl fmt::Display for TagDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One tag value together with its dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    LongitudinalActivity(LongitudinalActivity),
    LateralActivity(LateralActivity),
    LongitudinalState(LongitudinalState),
    LateralState(LateralState),
    LeadVehicle(LeadVehicle),
    OnHighway(OnHighway),
}

impl Tag {
    pub fn dimension(self) -> TagDimension {
        match self {
            Tag::LongitudinalActivity(_) => TagDimension::LongitudinalActivity,
            Tag::LateralActivity(_) => TagDimension::LateralActivity,
            Tag::LongitudinalState(_) => TagDimension::LongitudinalState,
            Tag::LateralState(_) => TagDimension::LateralState,
            Tag::LeadVehicle(_) => TagDimension::LeadVehicle,
            Tag::OnHighway(_) => TagDimension::OnHighway,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::LongitudinalActivity(v) => v.as_str(),
            Tag::LateralActivity(v) => v.as_str(),
            Tag::LongitudinalState(v) => v.as_str(),
            Tag::LateralState(v) => v.as_str(),
            Tag::LeadVehicle(v) => v.as_str(),
            Tag::OnHighway(v) => v.as_str(),
        }
    }

    /// Parse a value token in the context of a dimension. Fails with the list
    /// of valid values for that dimension.
    pub fn parse(dimension: TagDimension, value: &str) -> Result<Tag> {
        let tag = match dimension {
            TagDimension::LongitudinalActivity => {
                LongitudinalActivity::parse(value).map(Tag::LongitudinalActivity)
            }
            TagDimension::LateralActivity => {
                LateralActivity::parse(value).map(Tag::LateralActivity)
            }
            TagDimension::LongitudinalState => {
                LongitudinalState::parse(value).map(Tag::LongitudinalState)
            }
            TagDimension::LateralState => LateralState::parse(value).map(Tag::LateralState),
            TagDimension::LeadVehicle => LeadVehicle::parse(value).map(Tag::LeadVehicle),
            TagDimension::OnHighway => OnHighway::parse(value).map(Tag::OnHighway),
        };
        tag.ok_or_else(|| Error::UnknownTagValue {
            dimension: dimension.as_str().to_string(),
            value: value.to_string(),
            valid: dimension.valid_values().to_vec(),
        })
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

// ---------------------------------------------------------------------------
// Tag streams
// ---------------------------------------------------------------------------

/// One tagged stretch of the timeline, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagInterval {
    pub start_k: usize,
    pub end_k: usize,
    pub value: Tag,
}

impl TagInterval {
    pub fn len(&self) -> usize {
        self.end_k - self.start_k + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// All tags of one subject in one dimension: sorted, non-overlapping
/// intervals. Gaps mean "no statement about this sample" and occur only
/// where the subject is unobserved (or, for line-based dimensions, where the
/// lane lines are invalid).
#[derive(Debug, Clone, PartialEq)]
pub struct TagStream {
    pub subject: Subject,
    pub dimension: TagDimension,
    pub intervals: Vec<TagInterval>,
}

impl TagStream {
    pub fn new(subject: Subject, dimension: TagDimension) -> Self {
        TagStream {
            subject,
            dimension,
            intervals: Vec::new(),
        }
    }

    /// Append an interval, merging it into the previous one when the value
    /// continues seamlessly. Panics in debug builds if ordering is violated.
    pub fn push(&mut self, start_k: usize, end_k: usize, value: Tag) {
        debug_assert!(start_k <= end_k, "interval must not be empty");
        debug_assert_eq!(value.dimension(), self.dimension, "dimension mismatch");
        if let Some(last) = self.intervals.last_mut() {
            debug_assert!(last.end_k < start_k, "intervals must be pushed in order");
            if last.end_k + 1 == start_k && last.value == value {
                last.end_k = end_k;
                return;
            }
        }
        self.intervals.push(TagInterval {
            start_k,
            end_k,
            value,
        });
    }

    /// Build a stream from per-sample values, coalescing equal neighbours.
    pub fn from_samples<I>(subject: Subject, dimension: TagDimension, samples: I) -> Self
    where
        I: IntoIterator<Item = Option<Tag>>,
    {
        let mut stream = TagStream::new(subject, dimension);
        for (k, value) in samples.into_iter().enumerate() {
            if let Some(value) = value {
                stream.push(k, k, value);
            }
        }
        stream
    }

    /// The tag value at sample `k`, if any.
    pub fn value_at(&self, k: usize) -> Option<Tag> {
        let idx = self
            .intervals
            .partition_point(|interval| interval.end_k < k);
        self.intervals
            .get(idx)
            .filter(|interval| interval.start_k <= k)
            .map(|interval| interval.value)
    }

    /// Expand to one value per sample over a timeline of `n` samples.
    pub fn sample_values(&self, n: usize) -> Vec<Option<Tag>> {
        let mut values = vec![None; n];
        for interval in &self.intervals {
            for slot in &mut values[interval.start_k..=interval.end_k.min(n - 1)] {
                *slot = Some(interval.value);
            }
        }
        values
    }

    /// Check ordering, interval sanity and dimension consistency.
    pub fn validate(&self, n_samples: usize) -> Result<()> {
        let mut previous_end: Option<usize> = None;
        for interval in &self.intervals {
            if interval.start_k > interval.end_k {
                return Err(Error::InvalidParams(format!(
                    "tag interval [{}, {}] is empty",
                    interval.start_k, interval.end_k
                )));
            }
            if interval.end_k >= n_samples {
                return Err(Error::InvalidParams(format!(
                    "tag interval ends at {} beyond timeline of {n_samples}",
                    interval.end_k
                )));
            }
            if interval.value.dimension() != self.dimension {
                return Err(Error::InvalidParams(format!(
                    "tag value {} does not belong to dimension {}",
                    interval.value, self.dimension
                )));
            }
            if let Some(prev) = previous_end {
                if interval.start_k <= prev {
                    return Err(Error::InvalidParams(format!(
                        "tag intervals overlap or are unsorted near sample {}",
                        interval.start_k
                    )));
                }
            }
            previous_end = Some(interval.end_k);
        }
        Ok(())
    }
}

/// The complete tagging result for one dataset: every stream plus what was
/// computed for each subject kind (so that downstream stages can distinguish
/// "dimension not computed" from "no tags happened to be emitted").
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedDataset {
    pub timebase: Timebase,
    pub streams: Vec<TagStream>,
    pub ego_dimensions: BTreeSet<TagDimension>,
    pub object_dimensions: BTreeSet<TagDimension>,
    pub environment_dimensions: BTreeSet<TagDimension>,
    pub object_ids: BTreeSet<ObjectId>,
    index: BTreeMap<(Subject, TagDimension), usize>,
}

impl TaggedDataset {
    pub fn new(
        timebase: Timebase,
        streams: Vec<TagStream>,
        ego_dimensions: BTreeSet<TagDimension>,
        object_dimensions: BTreeSet<TagDimension>,
        environment_dimensions: BTreeSet<TagDimension>,
        object_ids: BTreeSet<ObjectId>,
    ) -> Self {
        let index = streams
            .iter()
            .enumerate()
            .map(|(i, s)| ((s.subject, s.dimension), i))
            .collect();
        TaggedDataset {
            timebase,
            streams,
            ego_dimensions,
            object_dimensions,
            environment_dimensions,
            object_ids,
            index,
        }
    }

    pub fn stream(&self, subject: Subject, dimension: TagDimension) -> Option<&TagStream> {
        self.index
            .get(&(subject, dimension))
            .map(|&i| &self.streams[i])
    }

    pub fn value_at(&self, subject: Subject, dimension: TagDimension, k: usize) -> Option<Tag> {
        self.stream(subject, dimension)
            .and_then(|stream| stream.value_at(k))
    }

    /// The dimensions available for a subject kind.
    pub fn dimensions_for(&self, subject: Subject) -> &BTreeSet<TagDimension> {
        match subject {
            Subject::Ego => &self.ego_dimensions,
            Subject::Object(_) => &self.object_dimensions,
            Subject::Environment => &self.environment_dimensions,
        }
    }
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Every threshold of the pipeline in one place. Defaults are the values the
/// detectors were designed around at 100 Hz; change `ts` and the sample-count
/// parameters together when working with other rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// Sample period in seconds.
    pub ts: f64,
    /// Horizon of the trailing extrema windows, in samples.
    pub k_h: usize,
    /// Acceleration below which speed changes count as cruising, m/s^2.
    pub a_cruise: f64,
    /// Minimum total speed change of a speed activity, m/s.
    pub delta_v: f64,
    /// Cruising activities shorter than this many samples are merged away.
    pub k_cruise: usize,
    /// Minimum one-sample jump of a lane line distance at a crossing, m.
    pub delta_l: f64,
    /// Lateral speed below which lane line distances count as steady, m/s.
    pub v_lat: f64,
    /// Fraction of the lane width bounding one lane change (outer bound).
    pub alpha1: f64,
    /// Fraction of the lane width a change must at least reach (inner bound).
    pub alpha2: f64,
    /// Maximum time headway of a lead vehicle, s.
    pub tau_h: f64,
    /// Maximum gap between consecutive scenario items, in samples.
    pub item_gap: usize,
    /// Minimum length of one scenario item segment, in samples.
    pub min_item_len: usize,
    /// Minimum temporal IoU for an evaluation match, in (0, 1].
    pub eval_overlap: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            ts: 0.01,
            k_h: 100,
            a_cruise: 0.1,
            delta_v: 1.0,
            k_cruise: 400,
            delta_l: 1.0,
            v_lat: 0.25,
            alpha1: 0.5,
            alpha2: 0.1,
            tau_h: 3.0,
            item_gap: 0,
            min_item_len: 1,
            eval_overlap: 0.3,
        }
    }
}

impl Params {
    /// Speed change over one horizon below which the subject is cruising, m/s.
    pub fn long_threshold(&self) -> f64 {
        self.a_cruise * self.k_h as f64 * self.ts
    }

    /// Lateral distance change over one horizon counting as steady, m.
    pub fn lat_threshold(&self) -> f64 {
        self.v_lat * self.k_h as f64 * self.ts
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, value: f64) -> Result<()> {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!(
                    "{name} must be strictly positive, got {value}"
                )))
            }
        }
        positive("ts", self.ts)?;
        positive("a_cruise", self.a_cruise)?;
        positive("delta_v", self.delta_v)?;
        positive("delta_l", self.delta_l)?;
        positive("v_lat", self.v_lat)?;
        positive("alpha1", self.alpha1)?;
        positive("alpha2", self.alpha2)?;
        positive("tau_h", self.tau_h)?;
        if self.k_h == 0 {
            return Err(Error::InvalidParams("k_h must be at least 1".into()));
        }
        if self.k_cruise == 0 {
            return Err(Error::InvalidParams("k_cruise must be at least 1".into()));
        }
        if self.min_item_len == 0 {
            return Err(Error::InvalidParams(
                "min_item_len must be at least 1".into(),
            ));
        }
        if !(self.alpha2 < self.alpha1 && self.alpha1 < 1.0) {
            return Err(Error::InvalidParams(format!(
                "alpha2 < alpha1 < 1 must hold, got alpha1={} alpha2={}",
                self.alpha1, self.alpha2
            )));
        }
        if !(self.eval_overlap > 0.0 && self.eval_overlap <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "eval_overlap must lie in (0, 1], got {}",
                self.eval_overlap
            )));
        }
        Ok(())
    }

    /// Parse a `key = value` parameter file. Lines starting with `#` and
    /// blank lines are ignored; keys not present keep their default value.
    pub fn parse_config(text: &str) -> Result<Params> {
        let mut params = Params::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidParams(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| {
                Error::InvalidParams(format!("line {}: {what}: `{value}`", lineno + 1))
            };
            macro_rules! float_field {
                ($field:ident) => {
                    params.$field = value.parse().map_err(|_| bad("not a number"))?
                };
            }
            macro_rules! count_field {
                ($field:ident) => {
                    params.$field = value.parse().map_err(|_| bad("not a sample count"))?
                };
            }
            match key {
                "ts" => float_field!(ts),
                "k_h" => count_field!(k_h),
                "a_cruise" => float_field!(a_cruise),
                "delta_v" => float_field!(delta_v),
                "k_cruise" => count_field!(k_cruise),
                "delta_l" => float_field!(delta_l),
                "v_lat" => float_field!(v_lat),
                "alpha1" => float_field!(alpha1),
                "alpha2" => float_field!(alpha2),
                "tau_h" => float_field!(tau_h),
                "item_gap" => count_field!(item_gap),
                "min_item_len" => count_field!(min_item_len),
                "eval_overlap" => float_field!(eval_overlap),
                _ => {
                    return Err(Error::InvalidParams(format!(
                        "line {}: unknown parameter `{key}`",
                        lineno + 1
                    )))
                }
            }
        }
        params.validate()?;
        Ok(params)
    }

    /// Render in the format `parse_config` accepts.
    pub fn to_config(&self) -> String {
        format!(
            "ts = {}\nk_h = {}\na_cruise = {}\ndelta_v = {}\nk_cruise = {}\n\
             delta_l = {}\nv_lat = {}\nalpha1 = {}\nalpha2 = {}\ntau_h = {}\n\
             item_gap = {}\nmin_item_len = {}\neval_overlap = {}\n",
            self.ts,
            self.k_h,
            self.a_cruise,
            self.delta_v,
            self.k_cruise,
            self.delta_l,
            self.v_lat,
            self.alpha1,
            self.alpha2,
            self.tau_h,
            self.item_gap,
            self.min_item_len,
            self.eval_overlap,
        )
    }
}

// ---------------------------------------------------------------------------
// Windowed extrema
// ---------------------------------------------------------------------------

/// Trailing-window minima and maxima of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedExtrema {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// For every `k`, the extrema of `values` over the trailing window
/// `[max(0, k - k_h), k]`. The window is clamped at the start of the series,
/// so early samples use a shorter window.
///
/// Runs in O(n) using monotonic deques.
pub fn windowed_extrema(values: &[f64], k_h: usize) -> Result<WindowedExtrema> {
    if values.is_empty() {
        return Err(Error::EmptySeries);
    }
    if let Some(k) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue { k });
    }
    let n = values.len();
    let mut min = Vec::with_capacity(n);
    let mut max = Vec::with_capacity(n);
    // Deques hold indices with monotone values; front is the current extremum.
    let mut min_q: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    let mut max_q: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    for k in 0..n {
        let window_start = k.saturating_sub(k_h);
        while min_q.front().is_some_and(|&i| i < window_start) {
            min_q.pop_front();
        }
        while max_q.front().is_some_and(|&i| i < window_start) {
            max_q.pop_front();
        }
        while min_q.back().is_some_and(|&i| values[i] >= values[k]) {
            min_q.pop_back();
        }
        while max_q.back().is_some_and(|&i| values[i] <= values[k]) {
            max_q.pop_back();
        }
        min_q.push_back(k);
        max_q.push_back(k);
        min.push(values[*min_q.front().unwrap()]);
        max.push(values[*max_q.front().unwrap()]);
    }
    Ok(WindowedExtrema { min, max })
}

/// Rise and fall series of a signal relative to its trailing window.
#[derive(Debug, Clone, PartialEq)]
pub struct RiseFall {
    /// `values[k] - windowed min`, always >= 0.
    pub inc: Vec<f64>,
    /// `values[k] - windowed max`, always <= 0.
    pub dec: Vec<f64>,
}

/// How much the signal has risen above its trailing-window minimum and fallen
/// below its trailing-window maximum at every sample.
pub fn rise_fall(values: &[f64], k_h: usize) -> Result<RiseFall> {
    let extrema = windowed_extrema(values, k_h)?;
    let inc = values
        .iter()
        .zip(&extrema.min)
        .map(|(v, m)| v - m)
        .collect();
    let dec = values
        .iter()
        .zip(&extrema.max)
        .map(|(v, m)| v - m)
        .collect();
    Ok(RiseFall { inc, dec })
}
