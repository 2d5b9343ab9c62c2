//! Squared-Euclidean subsequence distances.
//!
//! Sums are accumulated in f64, front to back, so a given pair of inputs
//! always produces the same bits regardless of where or how often the
//! distance is evaluated.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How subsequences are compared.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// Plain squared Euclidean distance on the raw samples.
    #[default]
    Raw,
    /// Both sides are shifted to zero mean and scaled to unit standard
    /// deviation before comparison. Flat runs normalise to all zeros.
    ZNormalized,
}

impl DistanceMode {
    /// Minimum distance between `shapelet` and any same-length run of `series`.
    pub fn min_distance(self, shapelet: &[f64], series: &[f64]) -> Result<f64> {
        match self {
            DistanceMode::Raw => min_subsequence_distance(shapelet, series, None),
            DistanceMode::ZNormalized => min_znorm_subsequence_distance(shapelet, series, None),
        }
    }
}

/// Σ(xᵢ − yᵢ)².
pub fn sq_euclidean(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::usage(format!("cannot compare subsequences of lengths {} and {}", x.len(), y.len())));
    }
    Ok(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum())
}

fn check_lengths(shapelet: &[f64], series: &[f64]) -> Result<()> {
    if shapelet.is_empty() {
        return Err(Error::usage("shapelet is empty"));
    }
    if shapelet.len() > series.len() {
        return Err(Error::usage(format!(
            "shapelet of length {} is longer than series of length {}",
            shapelet.len(),
            series.len()
        )));
    }
    Ok(())
}

/// Minimum squared Euclidean distance between `shapelet` and every
/// alignment in `series`.
///
/// Alignments are abandoned as soon as their partial sum exceeds the best
/// complete sum so far (seeded with `best_so_far` when given). The result
/// is bit-identical to an exhaustive scan whenever the true minimum is
/// `<= best_so_far`; otherwise it is some value greater than `best_so_far`
/// (`f64::INFINITY` if every alignment was abandoned).
pub fn min_subsequence_distance(shapelet: &[f64], series: &[f64], best_so_far: Option<f64>) -> Result<f64> {
    check_lengths(shapelet, series)?;
    let len = shapelet.len();
    let mut bound = best_so_far.unwrap_or(f64::INFINITY);
    let mut found = f64::INFINITY;
    'align: for window in series.windows(len) {
        let mut acc = 0.0;
        for (a, b) in shapelet.iter().zip(window) {
            let d = a - b;
            acc += d * d;
            if acc > bound {
                continue 'align;
            }
        }
        if acc < found {
            found = acc;
        }
        if acc < bound {
            bound = acc;
        }
    }
    Ok(found)
}

/// Z-normalises `x` (population standard deviation).
pub fn znormalize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std <= FLAT_STD {
        vec![0.0; x.len()]
    } else {
        x.iter().map(|v| (v - mean) / std).collect()
    }
}

const FLAT_STD: f64 = 1e-12;

/// [`min_subsequence_distance`] on z-normalised subsequences.
pub fn min_znorm_subsequence_distance(shapelet: &[f64], series: &[f64], best_so_far: Option<f64>) -> Result<f64> {
    check_lengths(shapelet, series)?;
    let len = shapelet.len();
    let norm = znormalize(shapelet);

    let mut sum = vec![0.0; series.len() + 1];
    let mut sum_sq = vec![0.0; series.len() + 1];
    for (i, &v) in series.iter().enumerate() {
        sum[i + 1] = sum[i] + v;
        sum_sq[i + 1] = sum_sq[i] + v * v;
    }

    let n = len as f64;
    let mut bound = best_so_far.unwrap_or(f64::INFINITY);
    let mut found = f64::INFINITY;
    'align: for (start, window) in series.windows(len).enumerate() {
        let mean = (sum[start + len] - sum[start]) / n;
        let var = ((sum_sq[start + len] - sum_sq[start]) / n - mean * mean).max(0.0);
        let std = var.sqrt();
        let mut acc = 0.0;
        for (a, &b) in norm.iter().zip(window) {
            let z = if std <= FLAT_STD { 0.0 } else { (b - mean) / std };
            let d = a - z;
            acc += d * d;
            if acc > bound {
                continue 'align;
            }
        }
        if acc < found {
            found = acc;
        }
        if acc < bound {
            bound = acc;
        }
    }
    Ok(found)
}
