//! Shapelet discovery.
//!
//! Every subsequence of every learning-set window (optionally subsampled by
//! length and offset steps) is a candidate. A candidate's distance profile
//! holds its minimum distance to each window; the best information-gain
//! split of that profile is the candidate's quality. Qualifying candidates
//! are ranked per source window, overlapping ones from the same window are
//! pruned, and the per-window survivors are merged into a global top n.
//!
//! Candidate scoring runs in parallel; ranking, pruning and merging are a
//! single ordered reduction, so the result does not depend on scheduling.

use std::cmp::Ordering;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::distance::DistanceMode;
use crate::forest::{self, ForestParams};
use crate::series::{Label, LearningSet, MIN_SUBSEQUENCE_LEN};
use crate::{par, Error, Result};

/// Shannon entropy (base 2) of a two-class count, with 0·log 0 = 0.
pub fn entropy_counts(events: usize, others: usize) -> f64 {
    let n = (events + others) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let term = |c: usize| {
        if c == 0 {
            0.0
        } else {
            let p = c as f64 / n;
            -p * p.log2()
        }
    };
    term(events) + term(others)
}

/// Entropy of a multiset of labels.
pub fn entropy(labels: &[Label]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::usage("entropy of an empty label set is undefined"));
    }
    let events = labels.iter().filter(|&&l| l == Label::Event).count();
    Ok(entropy_counts(events, labels.len() - events))
}

/// Information gain of splitting `total` into `left` and the remainder.
/// Counts are `(events, others)`.
fn split_gain(total: (usize, usize), left: (usize, usize)) -> f64 {
    let n = (total.0 + total.1) as f64;
    let right = (total.0 - left.0, total.1 - left.1);
    let wl = (left.0 + left.1) as f64 / n;
    let wr = (right.0 + right.1) as f64 / n;
    let ig =
        entropy_counts(total.0, total.1) - wl * entropy_counts(left.0, left.1) - wr * entropy_counts(right.0, right.1);
    ig.max(0.0)
}

fn class_counts<'a>(labels: impl Iterator<Item = &'a Label>) -> (usize, usize) {
    labels.fold((0, 0), |(e, o), l| match l {
        Label::Event => (e + 1, o),
        Label::Other => (e, o + 1),
    })
}

fn check_aligned(profile: &[f64], labels: &[Label]) -> Result<()> {
    if profile.len() != labels.len() {
        return Err(Error::usage(format!(
            "distance profile has {} entries but there are {} labels",
            profile.len(),
            labels.len()
        )));
    }
    if profile.is_empty() {
        return Err(Error::usage("distance profile is empty"));
    }
    Ok(())
}

/// Gain of the split `{d < threshold}` / `{d >= threshold}`. An empty side
/// carries zero weight.
pub fn information_gain(profile: &[f64], labels: &[Label], threshold: f64) -> Result<f64> {
    check_aligned(profile, labels)?;
    let total = class_counts(labels.iter());
    let left = class_counts(profile.iter().zip(labels).filter(|(d, _)| **d < threshold).map(|(_, l)| l));
    Ok(split_gain(total, left))
}

/// The chosen split point of a distance profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub threshold: f64,
    pub gain: f64,
    /// Gap between the two distances straddling the threshold (0 when the
    /// profile has no split point).
    pub margin: f64,
}

/// Midpoint of two distinct, ordered distances that still separates them
/// under the `<` rule.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo {
        mid
    } else {
        hi
    }
}

/// Best split of a distance profile.
///
/// Candidate thresholds are the midpoints between consecutive distinct
/// sorted distances. The highest gain wins; ties go to the larger margin,
/// then the smaller threshold. A profile with a single distinct value has
/// no split point and yields gain 0 at that value.
pub fn best_split(profile: &[f64], labels: &[Label]) -> Result<Split> {
    check_aligned(profile, labels)?;
    let mut rows: Vec<(f64, Label)> = profile.iter().copied().zip(labels.iter().copied()).collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total = class_counts(labels.iter());

    let mut best = Split { threshold: rows[0].0, gain: 0.0, margin: 0.0 };
    let mut found = false;
    let mut left = (0, 0);
    for i in 0..rows.len() - 1 {
        match rows[i].1 {
            Label::Event => left.0 += 1,
            Label::Other => left.1 += 1,
        }
        let (lo, hi) = (rows[i].0, rows[i + 1].0);
        if lo == hi {
            continue;
        }
        let gain = split_gain(total, left);
        let margin = hi - lo;
        let better = !found || gain > best.gain || (gain == best.gain && margin > best.margin);
        if better {
            best = Split { threshold: midpoint(lo, hi), gain, margin };
            found = true;
        }
    }
    Ok(best)
}

/// Minimum distance from `candidate` to each window, in set order.
pub fn distance_profile(candidate: &[f64], set: &LearningSet, mode: DistanceMode) -> Result<Vec<f64>> {
    if candidate.len() > set.window_len() {
        return Err(Error::usage(format!(
            "candidate of length {} is longer than the {}-sample windows",
            candidate.len(),
            set.window_len()
        )));
    }
    set.windows().iter().map(|w| mode.min_distance(candidate, w.series.samples())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoveryConfig {
    pub min_len: usize,
    /// `None` means the full window length.
    pub max_len: Option<usize>,
    pub max_shapelets: usize,
    pub quality_threshold: f64,
    pub length_step: usize,
    pub offset_step: usize,
    pub similarity_overlap_frac: f64,
    pub distance: DistanceMode,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            min_len: MIN_SUBSEQUENCE_LEN,
            max_len: None,
            max_shapelets: 8,
            quality_threshold: 0.45,
            length_step: 1,
            offset_step: 1,
            similarity_overlap_frac: 0.25,
            distance: DistanceMode::Raw,
        }
    }
}

impl DiscoveryConfig {
    /// Checks the configuration against a window length and returns the
    /// effective maximum length.
    pub fn validate(&self, window_len: usize) -> Result<usize> {
        let max_len = self.max_len.unwrap_or(window_len);
        if self.min_len < MIN_SUBSEQUENCE_LEN {
            return Err(Error::usage(format!("min_len must be at least {MIN_SUBSEQUENCE_LEN}")));
        }
        if max_len < self.min_len {
            return Err(Error::usage(format!("max_len {max_len} is below min_len {}", self.min_len)));
        }
        if max_len > window_len {
            return Err(Error::usage(format!("max_len {max_len} exceeds the window length {window_len}")));
        }
        if self.max_shapelets == 0 {
            return Err(Error::usage("max_shapelets must be at least 1"));
        }
        if self.length_step == 0 || self.offset_step == 0 {
            return Err(Error::usage("length_step and offset_step must be at least 1"));
        }
        if !(self.similarity_overlap_frac > 0.0 && self.similarity_overlap_frac <= 1.0) {
            return Err(Error::usage("similarity_overlap_frac must lie in (0, 1]"));
        }
        if !self.quality_threshold.is_finite() {
            return Err(Error::usage("quality_threshold must be finite"));
        }
        Ok(max_len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shapelet {
    pub values: Vec<f64>,
    pub length: usize,
    pub quality: f64,
    pub split_threshold: f64,
    pub source_window_id: String,
    pub source_offset: usize,
}

/// A scored candidate that has not been materialised yet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredCandidate {
    pub window: usize,
    pub offset: usize,
    pub length: usize,
    pub quality: f64,
    pub split_threshold: f64,
}

/// Overlap of `[a, a+la)` and `[b, b+lb)`.
fn overlap(a: usize, la: usize, b: usize, lb: usize) -> usize {
    (a + la).min(b + lb).saturating_sub(a.max(b))
}

/// Greedy pruning over a quality-sorted list: an item is dropped when it
/// comes from the same window as an already kept item and their intervals
/// overlap by more than `frac` of the shorter length.
fn prune<T, K: PartialEq>(items: Vec<T>, frac: f64, key: impl Fn(&T) -> (K, usize, usize)) -> Vec<T> {
    let mut kept: Vec<T> = Vec::new();
    for item in items {
        let (w, off, len) = key(&item);
        let similar = kept.iter().any(|k| {
            let (kw, koff, klen) = key(k);
            kw == w && overlap(off, len, koff, klen) as f64 > frac * len.min(klen) as f64
        });
        if !similar {
            kept.push(item);
        }
    }
    kept
}

/// Removes shapelets that overlap a better one from the same source window.
/// The input must already be sorted by quality, best first.
pub fn remove_similar(shapelets: Vec<Shapelet>, overlap_frac: f64) -> Vec<Shapelet> {
    prune(shapelets, overlap_frac, |s| (s.source_window_id.clone(), s.source_offset, s.length))
}

/// Quality descending, then shorter length, then `(window id, offset)`.
fn rank(a: (f64, usize, &str, usize), b: (f64, usize, &str, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then_with(|| a.2.cmp(b.2)).then(a.3.cmp(&b.3))
}

/// Scores every candidate and keeps those whose profile is not constant and
/// whose quality is at least `min_quality`. Output is in generation order
/// (window, length, offset).
pub fn score_candidates(set: &LearningSet, cfg: &DiscoveryConfig, min_quality: f64) -> Result<Vec<ScoredCandidate>> {
    let max_len = cfg.validate(set.window_len())?;
    let labels = set.labels();
    let lengths: Vec<usize> = (cfg.min_len..=max_len).step_by(cfg.length_step).collect();
    let tasks: Vec<(usize, usize)> = (0..set.len()).flat_map(|w| lengths.iter().map(move |&l| (w, l))).collect();

    let per_task = par::try_map(&tasks, |&(w, len)| {
        let samples = set.windows()[w].series.samples();
        let mut out = Vec::new();
        for offset in (0..=samples.len() - len).step_by(cfg.offset_step) {
            let profile = distance_profile(&samples[offset..offset + len], set, cfg.distance)?;
            if profile.iter().all(|&d| d == profile[0]) {
                continue;
            }
            let split = best_split(&profile, &labels)?;
            if split.gain >= min_quality {
                out.push(ScoredCandidate {
                    window: w,
                    offset,
                    length: len,
                    quality: split.gain,
                    split_threshold: split.threshold,
                });
            }
        }
        Ok(out)
    })?;
    Ok(per_task.into_iter().flatten().collect())
}

/// Ranks, prunes and merges scored candidates into the final shapelet list
/// for one quality threshold.
pub fn select(
    scored: &[ScoredCandidate],
    set: &LearningSet,
    cfg: &DiscoveryConfig,
    quality_threshold: f64,
) -> Vec<Shapelet> {
    let id = |c: &ScoredCandidate| set.windows()[c.window].id.as_str();
    let key = |c: &ScoredCandidate| (c.quality, c.length, id(c), c.offset);

    let mut merged: Vec<ScoredCandidate> = Vec::new();
    for w in 0..set.len() {
        let mut group: Vec<ScoredCandidate> =
            scored.iter().filter(|c| c.window == w && c.quality >= quality_threshold).copied().collect();
        group.sort_by(|a, b| rank(key(a), key(b)));
        let kept = prune(group, cfg.similarity_overlap_frac, |c| (c.window, c.offset, c.length));
        merged.extend(kept);
        merged.sort_by(|a, b| rank(key(a), key(b)));
        merged.truncate(cfg.max_shapelets);
    }

    merged
        .into_iter()
        .map(|c| Shapelet {
            values: set.windows()[c.window].series.samples()[c.offset..c.offset + c.length].to_vec(),
            length: c.length,
            quality: c.quality,
            split_threshold: c.split_threshold,
            source_window_id: id(&c).to_owned(),
            source_offset: c.offset,
        })
        .collect()
}

/// Finds up to `cfg.max_shapelets` shapelets with quality at least
/// `cfg.quality_threshold`, best first.
pub fn discover(set: &LearningSet, cfg: &DiscoveryConfig) -> Result<Vec<Shapelet>> {
    let scored = score_candidates(set, cfg, cfg.quality_threshold)?;
    Ok(select(&scored, set, cfg, cfg.quality_threshold))
}

/// Discovered shapelets plus everything needed to apply them to new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeletSet {
    pub distance: DistanceMode,
    pub window_len: usize,
    pub sample_rate_hz: f64,
    pub shapelets: Vec<Shapelet>,
}

impl ShapeletSet {
    pub fn from_discovery(set: &LearningSet, cfg: &DiscoveryConfig, shapelets: Vec<Shapelet>) -> Self {
        Self { distance: cfg.distance, window_len: set.window_len(), sample_rate_hz: set.sample_rate_hz(), shapelets }
    }

    pub fn len(&self) -> usize {
        self.shapelets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapelets.is_empty()
    }
}

/// Versioned on-disk form of a discovery run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeletsDocument {
    pub format: String,
    pub version: u32,
    /// File name of the run manifest that produced this document.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
    pub config: DiscoveryConfig,
    #[serde(flatten)]
    pub set: ShapeletSet,
}

impl ShapeletsDocument {
    pub const FORMAT: &'static str = "eqshapelet.shapelets";
    pub const VERSION: u32 = 1;

    pub fn new(config: DiscoveryConfig, set: ShapeletSet) -> Self {
        Self { format: Self::FORMAT.into(), version: Self::VERSION, manifest: None, config, set }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text)?;
        if doc.format != Self::FORMAT || doc.version != Self::VERSION {
            return Err(Error::data(format!("unsupported shapelet document {} v{}", doc.format, doc.version)));
        }
        Ok(doc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ig_threshold: f64,
    pub shapelet_count: usize,
    pub test_accuracy: f64,
    /// Time to transform and classify the test set.
    pub runtime_seconds: f64,
}

/// For each threshold: discover on `train`, fit a forest, and measure test
/// accuracy and classification time.
///
/// Candidates are scored once at the lowest threshold; each row only
/// re-runs selection, which yields the same shapelets as a fresh
/// [`discover`] at that threshold.
pub fn ig_threshold_sweep(
    train: &LearningSet,
    test: &LearningSet,
    thresholds: &[f64],
    cfg: &DiscoveryConfig,
    params: &ForestParams,
) -> Result<Vec<SweepRow>> {
    let lowest =
        thresholds.iter().copied().min_by(f64::total_cmp).ok_or_else(|| Error::usage("threshold list is empty"))?;
    if test.window_len() != train.window_len() || test.sample_rate_hz() != train.sample_rate_hz() {
        return Err(Error::usage("train and test windows differ in length or sample rate"));
    }
    let scored = score_candidates(train, cfg, lowest)?;
    let mut rows = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let shapelets = ShapeletSet::from_discovery(train, cfg, select(&scored, train, cfg, t));
        let model = forest::train(shapelets, train.windows(), params)?;
        let started = Instant::now();
        let metrics = forest::evaluate(&model, test.windows())?;
        rows.push(SweepRow {
            ig_threshold: t,
            shapelet_count: model.shapelets.len(),
            test_accuracy: metrics.accuracy,
            runtime_seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(rows)
}

/// Plot-ready CSV of sweep rows.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("ig_threshold,shapelet_count,accuracy,runtime_seconds\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.ig_threshold, r.shapelet_count, r.test_accuracy, r.runtime_seconds));
    }
    out
}
