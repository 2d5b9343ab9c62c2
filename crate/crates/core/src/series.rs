//! Time-series containers, subsequences, windowing and labeled learning sets.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Shortest subsequence considered meaningful.
pub const MIN_SUBSEQUENCE_LEN: usize = 3;

/// An ordered, non-empty run of finite samples at a fixed rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    start_time: f64,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64, start_time: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::data("time series must contain at least one sample"));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::usage(format!("sample rate must be positive, got {sample_rate_hz}")));
        }
        if !start_time.is_finite() {
            return Err(Error::data("start time must be finite"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate_hz, start_time })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false for a constructed series; provided for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Time just past the last sample.
    pub fn end_time(&self) -> f64 {
        self.start_time + self.duration_seconds()
    }

    /// Builds a series sharing this one's rate, checking invariants again.
    pub(crate) fn with_samples(&self, samples: Vec<f64>, start_time: f64) -> Result<Self> {
        Self::new(samples, self.sample_rate_hz, start_time)
    }

    pub fn subsequence(&self, offset: usize, len: usize) -> Result<Subsequence<'_>> {
        Subsequence::new(self, offset, len)
    }
}

impl AsRef<[f64]> for TimeSeries {
    fn as_ref(&self) -> &[f64] {
        &self.samples
    }
}

/// A borrowed run of `len` adjacent samples of a [`TimeSeries`].
#[derive(Debug, Clone, Copy)]
pub struct Subsequence<'a> {
    source: &'a TimeSeries,
    offset: usize,
    len: usize,
}

impl<'a> Subsequence<'a> {
    pub fn new(source: &'a TimeSeries, offset: usize, len: usize) -> Result<Self> {
        if len < MIN_SUBSEQUENCE_LEN {
            return Err(Error::usage(format!(
                "subsequence length {len} is below the minimum of {MIN_SUBSEQUENCE_LEN}"
            )));
        }
        if offset.checked_add(len).map_or(true, |end| end > source.len()) {
            return Err(Error::usage(format!(
                "subsequence [{offset}, {offset}+{len}) exceeds series length {}",
                source.len()
            )));
        }
        Ok(Self { source, offset, len })
    }

    pub fn values(&self) -> &'a [f64] {
        &self.source.samples()[self.offset..self.offset + self.len]
    }

    pub fn source(&self) -> &'a TimeSeries {
        self.source
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Lazily yields every length-`len` subsequence of `t` in offset order.
///
/// A series of length m has exactly `m - len + 1` of them.
pub fn enumerate_subsequences(
    t: &TimeSeries,
    len: usize,
) -> Result<impl ExactSizeIterator<Item = Subsequence<'_>> + '_> {
    if len < MIN_SUBSEQUENCE_LEN || len > t.len() {
        return Err(Error::usage(format!(
            "subsequence length must lie in [{MIN_SUBSEQUENCE_LEN}, {}], got {len}",
            t.len()
        )));
    }
    Ok((0..t.len() - len + 1).map(move |offset| Subsequence { source: t, offset, len }))
}

/// Result of cutting a record into fixed-length windows.
#[derive(Debug, Clone)]
pub struct Segmented {
    pub windows: Vec<TimeSeries>,
    /// Trailing samples that did not fill a whole window.
    pub dropped_samples: usize,
}

/// Cuts `record` into consecutive, non-overlapping windows of exactly
/// `window_len` samples. A short trailing remainder is dropped.
pub fn segment(record: &TimeSeries, window_len: usize) -> Result<Segmented> {
    segment_with_times(record, window_len, |i| record.start_time() + i as f64 / record.sample_rate_hz())
}

/// Like [`segment`], with the start time of each window taken from
/// `time_of(sample index)`. Used when the record has elided gaps.
pub(crate) fn segment_with_times(
    record: &TimeSeries,
    window_len: usize,
    time_of: impl Fn(usize) -> f64,
) -> Result<Segmented> {
    if window_len == 0 {
        return Err(Error::usage("window length must be at least one sample"));
    }
    let samples = record.samples();
    let windows = samples
        .chunks_exact(window_len)
        .enumerate()
        .map(|(i, chunk)| record.with_samples(chunk.to_vec(), time_of(i * window_len)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Segmented { windows, dropped_samples: samples.len() % window_len })
}

/// Class of a learning-set window; `Event` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Event,
    Other,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Event => "event",
            Label::Other => "other",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub id: String,
    pub series: TimeSeries,
    pub label: Label,
}

impl LabeledWindow {
    pub fn new(id: impl Into<String>, series: TimeSeries, label: Label) -> Self {
        Self { id: id.into(), series, label }
    }
}

/// Labeled fixed-length windows with both classes present.
#[derive(Debug, Clone)]
pub struct LearningSet {
    windows: Vec<LabeledWindow>,
    window_len: usize,
    sample_rate_hz: f64,
}

impl LearningSet {
    pub fn new(windows: Vec<LabeledWindow>) -> Result<Self> {
        let first = windows.first().ok_or_else(|| Error::usage("learning set is empty"))?;
        let window_len = first.series.len();
        let sample_rate_hz = first.series.sample_rate_hz();
        for w in &windows {
            if w.series.len() != window_len {
                return Err(Error::usage(format!(
                    "window {} has {} samples, expected {window_len}",
                    w.id,
                    w.series.len()
                )));
            }
            if w.series.sample_rate_hz() != sample_rate_hz {
                return Err(Error::usage(format!(
                    "window {} is sampled at {} Hz, expected {sample_rate_hz} Hz",
                    w.id,
                    w.series.sample_rate_hz()
                )));
            }
        }
        let events = windows.iter().filter(|w| w.label == Label::Event).count();
        if events == 0 || events == windows.len() {
            return Err(Error::usage("learning set needs at least one window of each class"));
        }
        Ok(Self { windows, window_len, sample_rate_hz })
    }

    pub fn windows(&self) -> &[LabeledWindow] {
        &self.windows
    }

    pub fn into_windows(self) -> Vec<LabeledWindow> {
        self.windows
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn labels(&self) -> Vec<Label> {
        self.windows.iter().map(|w| w.label).collect()
    }

    pub fn count(&self, label: Label) -> usize {
        self.windows.iter().filter(|w| w.label == label).count()
    }

    /// Random split into (train, test), stratified by class so both halves
    /// keep both labels. Each class contributes `round(train_frac * count)`
    /// windows to train, clamped so neither side of a class is empty.
    pub fn split(&self, train_frac: f64, seed: u64) -> Result<(LearningSet, LearningSet)> {
        if !(train_frac > 0.0 && train_frac < 1.0) {
            return Err(Error::usage(format!("train fraction must be in (0, 1), got {train_frac}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for label in [Label::Event, Label::Other] {
            let mut idx: Vec<usize> = (0..self.windows.len()).filter(|&i| self.windows[i].label == label).collect();
            if idx.len() < 2 {
                return Err(Error::usage(format!("need at least two {label} windows to split")));
            }
            idx.shuffle(&mut rng);
            let n_train = ((train_frac * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
            train.extend_from_slice(&idx[..n_train]);
            test.extend_from_slice(&idx[n_train..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        let pick = |ids: &[usize]| ids.iter().map(|&i| self.windows[i].clone()).collect();
        Ok((LearningSet::new(pick(&train))?, LearningSet::new(pick(&test))?))
    }
}
