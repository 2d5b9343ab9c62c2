//! Shapelet-based event detection for continuous seismic records.
//!
//! The crate is organised as a pipeline:
//!
//! * [`series`] and [`distance`]: time-series containers, windowing and the
//!   squared-Euclidean subsequence distance everything else builds on.
//! * [`preprocess`]: gap stitching, zero-phase Butterworth band-pass,
//!   integer decimation and window segmentation.
//! * [`discovery`]: candidate enumeration, distance profiles, entropy and
//!   information-gain scoring, and the top-n shapelet search.
//! * [`forest`]: the shapelet transform and a random forest trained on it.
//! * [`detection`]: window classification of continuous data, catalog
//!   matching and report assembly.
//! * [`synth`]: synthetic records with ground-truth event injections.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise. Results are
//! identical either way.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detection;
pub mod discovery;
pub mod distance;
pub mod error;
pub mod forest;
pub mod io;
pub mod par;
pub mod preprocess;
pub mod series;
pub mod synth;

pub use error::{Error, Result};
pub use series::{Label, LabeledWindow, LearningSet, Subsequence, TimeSeries};
