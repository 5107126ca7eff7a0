//! Two-step scenario mining for time-series driving logs.
//!
//! Step one tags a recording: the ego vehicle and every tracked object get
//! activity tags (speeding up, slowing down, keeping or changing lanes),
//! relative-state tags (in front / behind, left / right / same lane, lead
//! vehicle) and an environment tag (highway or not). Step two matches
//! declaratively described scenario categories against those tag streams and
//! returns every maximal time span on which a category's item sequence holds.
//!
//! The crate is organised along the pipeline:
//!
//! * [`model`]: timeline, tracks, tag vocabulary, parameters.
//! * [`ingest`]: CSV loading and writing of datasets.
//! * [`tagger`]: the production taggers.
//! * [`category`]: scenario category definitions and their JSON format.
//! * [`miner`]: matching categories against tag streams.
//! * [`eval`]: scoring mined instances against ground truth.
//! * [`synth`]: synthetic scene generators and a brute-force reference
//!   tagger used to validate the production taggers in tests.

pub mod category;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod miner;
pub mod model;
pub mod synth;
pub mod tagger;

pub use error::{Error, Result};
