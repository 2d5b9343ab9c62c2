//! Conditioning of continuous records: gap stitching, zero-phase band-pass
//! filtering, integer decimation and window segmentation.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::series::{segment_with_times, TimeSeries};
use crate::{par, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    /// Total band-pass order (number of poles); must be even.
    pub filter_order: usize,
    pub decimate_to_hz: f64,
    pub window_seconds: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { band_low_hz: 4.0, band_high_hz: 10.0, filter_order: 4, decimate_to_hz: 20.0, window_seconds: 300.0 }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        let Self { band_low_hz: lo, band_high_hz: hi, decimate_to_hz: to, .. } = *self;
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::usage(format!("band edges must satisfy 0 < low < high, got {lo}..{hi}")));
        }
        // The upper edge may sit exactly on the decimated Nyquist frequency
        // (10 Hz at 20 Hz is the standard setup).
        if hi > to / 2.0 {
            return Err(Error::usage(format!(
                "band high edge {hi} Hz exceeds the Nyquist frequency of the {to} Hz output"
            )));
        }
        if self.filter_order < 2 || self.filter_order % 2 != 0 {
            return Err(Error::usage(format!("filter order must be even and >= 2, got {}", self.filter_order)));
        }
        if !(self.window_seconds > 0.0) {
            return Err(Error::usage("window_seconds must be positive"));
        }
        Ok(())
    }

    /// Samples per window after decimation.
    pub fn window_samples(&self) -> usize {
        (self.window_seconds * self.decimate_to_hz).round() as usize
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub gap_count: usize,
    pub longest_gap_seconds: f64,
    pub total_dropped_seconds: f64,
}

/// A stitched record plus the real start time of each original segment, so
/// sample indices can still be mapped back to wall-clock time.
#[derive(Debug, Clone)]
pub struct Stitched {
    pub series: TimeSeries,
    pub report: GapReport,
    /// `(first sample index in the stitched series, real start time)`.
    pub origins: Vec<(usize, f64)>,
}

impl Stitched {
    /// Real time of stitched sample `index`.
    pub fn time_of(&self, index: usize) -> f64 {
        let pos = self.origins.partition_point(|&(first, _)| first <= index);
        let (first, start) = self.origins[pos.saturating_sub(1)];
        start + (index - first) as f64 / self.series.sample_rate_hz()
    }
}

/// Concatenates time-ordered segments, eliding the gaps between them.
///
/// Every discontinuity of at least one sample period counts as a gap.
/// Offsets shorter than that are treated as clock jitter.
pub fn stitch(segments: &[TimeSeries]) -> Result<Stitched> {
    let first = segments.first().ok_or_else(|| Error::usage("no segments to stitch"))?;
    let rate = first.sample_rate_hz();
    let period = 1.0 / rate;
    let mut report = GapReport::default();
    let mut origins = vec![(0, first.start_time())];
    let mut samples = first.samples().to_vec();
    for pair in segments.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        if next.sample_rate_hz() != rate {
            return Err(Error::usage(format!("mixed sample rates: {rate} Hz and {} Hz", next.sample_rate_hz())));
        }
        let jump = next.start_time() - prev.end_time();
        if jump < -0.5 * period {
            return Err(Error::usage(format!(
                "segment starting at {} overlaps the previous one (ends {})",
                next.start_time(),
                prev.end_time()
            )));
        }
        if jump >= period * (1.0 - 1e-9) {
            report.gap_count += 1;
            report.total_dropped_seconds += jump;
            report.longest_gap_seconds = report.longest_gap_seconds.max(jump);
        }
        origins.push((samples.len(), next.start_time()));
        samples.extend_from_slice(next.samples());
    }
    let series = first.with_samples(samples, first.start_time())?;
    Ok(Stitched { series, report, origins })
}

/// One second-order section, `a0 == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z: Complex64) -> Complex64 {
        let zi = z.inv();
        let num = self.b[0] + self.b[1] * zi + self.b[2] * zi * zi;
        let den = self.a[0] + self.a[1] * zi + self.a[2] * zi * zi;
        num / den
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
}

impl SosFilter {
    /// Digital Butterworth band-pass with `order` poles (`order / 2` sections),
    /// designed by the bilinear transform with pre-warped band edges and
    /// normalised to unit gain at the band centre.
    pub fn butterworth_bandpass(low_hz: f64, high_hz: f64, order: usize, fs: f64) -> Result<Self> {
        if order < 2 || order % 2 != 0 {
            return Err(Error::usage(format!("filter order must be even and >= 2, got {order}")));
        }
        if !(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0) {
            return Err(Error::usage(format!("band {low_hz}..{high_hz} Hz is not inside (0, {}) Hz", fs / 2.0)));
        }
        let proto_order = order / 2;
        let warp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
        let (wl, wh) = (warp(low_hz), warp(high_hz));
        let w0 = (wl * wh).sqrt();
        let bw = wh - wl;

        let mut analog = Vec::with_capacity(order);
        for k in 0..proto_order {
            let theta = PI * (2 * k + 1 + proto_order) as f64 / (2 * proto_order) as f64;
            let p = Complex64::from_polar(1.0, theta);
            let half = p * (bw / 2.0);
            let root = (half * half - w0 * w0).sqrt();
            analog.push(half + root);
            analog.push(half - root);
        }
        let two_fs = Complex64::new(2.0 * fs, 0.0);
        let digital: Vec<Complex64> = analog.iter().map(|&s| (two_fs + s) / (two_fs - s)).collect();

        let tol = 1e-10;
        let mut sections = Vec::with_capacity(proto_order);
        let mut reals = Vec::new();
        for p in &digital {
            if p.im > tol {
                sections.push(Biquad { b: [1.0, 0.0, -1.0], a: [1.0, -2.0 * p.re, p.norm_sqr()] });
            } else if p.im.abs() <= tol {
                reals.push(p.re);
            }
        }
        for pair in reals.chunks(2) {
            let (r1, r2) = (pair[0], *pair.get(1).unwrap_or(&0.0));
            sections.push(Biquad { b: [1.0, 0.0, -1.0], a: [1.0, -(r1 + r2), r1 * r2] });
        }
        if sections.len() != proto_order {
            return Err(Error::data("band-pass design produced an unexpected pole layout"));
        }

        let centre = Complex64::from_polar(1.0, 2.0 * (w0 / (2.0 * fs)).atan());
        let gain = sections.iter().map(|s| s.response(centre)).product::<Complex64>().norm();
        let per_section = gain.powf(-1.0 / proto_order as f64);
        for s in &mut sections {
            for b in &mut s.b {
                *b *= per_section;
            }
        }
        Ok(Self { sections })
    }

    /// Causal filtering from a zero state.
    pub fn filter(&self, x: &mut [f64]) {
        for s in &self.sections {
            let (mut z1, mut z2) = (0.0, 0.0);
            for v in x.iter_mut() {
                let input = *v;
                let y = s.b[0] * input + z1;
                z1 = s.b[1] * input - s.a[1] * y + z2;
                z2 = s.b[2] * input - s.a[2] * y;
                *v = y;
            }
        }
    }

    /// Zero-phase forward-backward filtering with odd-reflection padding of
    /// `pad` samples at both ends.
    pub fn filtfilt(&self, x: &[f64], pad: usize) -> Vec<f64> {
        let n = x.len();
        let pad = pad.min(n.saturating_sub(1));
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
        self.filter(&mut ext);
        ext.reverse();
        self.filter(&mut ext);
        ext.reverse();
        ext.truncate(pad + n);
        ext.drain(..pad);
        ext
    }

    /// Magnitude response at `freq_hz` for sampling rate `fs`.
    pub fn gain_at(&self, freq_hz: f64, fs: f64) -> f64 {
        let z = Complex64::from_polar(1.0, 2.0 * PI * freq_hz / fs);
        self.sections.iter().map(|s| s.response(z)).product::<Complex64>().norm()
    }
}

/// Zero-phase Butterworth band-pass of `t` with the configured band and order.
pub fn bandpass(t: &TimeSeries, cfg: &PreprocessConfig) -> Result<TimeSeries> {
    let fs = t.sample_rate_hz();
    if fs <= 2.0 * cfg.band_high_hz {
        return Err(Error::usage(format!("sampling rate {fs} Hz cannot carry a {} Hz band edge", cfg.band_high_hz)));
    }
    let filter = SosFilter::butterworth_bandpass(cfg.band_low_hz, cfg.band_high_hz, cfg.filter_order, fs)?;
    // three periods of the low corner
    let pad = (3.0 * fs / cfg.band_low_hz).ceil() as usize;
    t.with_samples(filter.filtfilt(t.samples(), pad), t.start_time())
}

/// Integer decimation factor from `from_hz` to `to_hz`.
pub fn decimation_factor(from_hz: f64, to_hz: f64) -> Result<usize> {
    if !(to_hz > 0.0 && to_hz <= from_hz) {
        return Err(Error::usage(format!("cannot decimate {from_hz} Hz to {to_hz} Hz")));
    }
    let ratio = from_hz / to_hz;
    let k = ratio.round();
    if (ratio - k).abs() > 1e-9 * ratio {
        return Err(Error::usage(format!("{from_hz} Hz to {to_hz} Hz is not an integer decimation (ratio {ratio})")));
    }
    Ok(k as usize)
}

/// Keeps every k-th sample, starting with the first. The caller is
/// responsible for band-limiting below the new Nyquist frequency.
pub fn decimate(t: &TimeSeries, target_hz: f64) -> Result<TimeSeries> {
    let k = decimation_factor(t.sample_rate_hz(), target_hz)?;
    let samples = t.samples().iter().step_by(k).copied().collect();
    TimeSeries::new(samples, target_hz, t.start_time())
}

/// Band-pass then decimate a single pre-cut window.
pub fn condition(t: &TimeSeries, cfg: &PreprocessConfig) -> Result<TimeSeries> {
    cfg.validate()?;
    decimate(&bandpass(t, cfg)?, cfg.decimate_to_hz)
}

/// Conditions many windows in parallel, preserving order.
pub fn condition_all(windows: &[TimeSeries], cfg: &PreprocessConfig) -> Result<Vec<TimeSeries>> {
    cfg.validate()?;
    par::try_map(windows, |w| decimate(&bandpass(w, cfg)?, cfg.decimate_to_hz))
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub windows: Vec<TimeSeries>,
    pub gaps: GapReport,
    /// Decimated samples left over after the last whole window.
    pub dropped_samples: usize,
}

/// stitch → band-pass → decimate → segment.
///
/// Window start times are real times, so windows after an elided gap keep
/// their true position.
pub fn run_pipeline(segments: &[TimeSeries], cfg: &PreprocessConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let stitched = stitch(segments)?;
    let k = decimation_factor(stitched.series.sample_rate_hz(), cfg.decimate_to_hz)?;
    let filtered = bandpass(&stitched.series, cfg)?;
    let decimated = decimate(&filtered, cfg.decimate_to_hz)?;
    drop(filtered);
    let window = cfg.window_samples();
    let seg = segment_with_times(&decimated, window, |i| stitched.time_of(i * k))?;
    Ok(PipelineOutput { windows: seg.windows, gaps: stitched.report, dropped_samples: seg.dropped_samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ts(samples: Vec<f64>, rate: f64, start: f64) -> TimeSeries {
        TimeSeries::new(samples, rate, start).unwrap()
    }

    #[test]
    fn default_config_is_valid() {
        let cfg = PreprocessConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.window_samples(), 6000);
        let bad = PreprocessConfig { filter_order: 3, ..cfg.clone() };
        assert!(bad.validate().is_err());
        let bad = PreprocessConfig { band_low_hz: 12.0, ..cfg };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn stitch_abutting_and_gapped() {
        let a = ts(vec![1.0; 10], 1.0, 0.0);
        let b = ts(vec![2.0; 5], 1.0, 10.0);
        let s = stitch(&[a.clone(), b]).unwrap();
        assert_eq!(s.report.gap_count, 0);
        assert_eq!(s.series.len(), 15);

        let c = ts(vec![2.0; 5], 1.0, 25.0);
        let s = stitch(&[a.clone(), c]).unwrap();
        assert_eq!(s.report.gap_count, 1);
        assert_eq!(s.report.longest_gap_seconds, 15.0);
        assert_eq!(s.report.total_dropped_seconds, 15.0);
        assert_eq!(s.time_of(9), 9.0);
        assert_eq!(s.time_of(10), 25.0);
        assert_eq!(s.time_of(12), 27.0);
    }

    #[test]
    fn stitch_counts_every_gap() {
        let mut segs = Vec::new();
        let mut t = 0.0;
        for i in 0..8 {
            segs.push(ts(vec![0.0; 100], 100.0, t));
            t += 1.0 + if i % 2 == 0 { 60.0 } else { 840.0 };
        }
        let s = stitch(&segs).unwrap();
        assert_eq!(s.report.gap_count, 7);
        assert!((s.report.longest_gap_seconds - 840.0).abs() < 1e-9);
    }

    #[test]
    fn stitch_errors() {
        assert!(stitch(&[]).unwrap_err().is_usage());
        let a = ts(vec![0.0; 10], 1.0, 0.0);
        assert!(stitch(&[a.clone(), ts(vec![0.0; 4], 2.0, 10.0)]).unwrap_err().is_usage());
        assert!(stitch(&[a.clone(), ts(vec![0.0; 4], 1.0, 5.0)]).unwrap_err().is_usage());
    }

    #[test]
    fn zero_in_zero_out() {
        let z = ts(vec![0.0; 1000], 100.0, 0.0);
        let out = bandpass(&z, &PreprocessConfig::default()).unwrap();
        assert!(out.samples().iter().all(|&v| v == 0.0));
        assert_eq!(out.len(), 1000);
    }

    #[test]
    fn nyquist_violation_rejected() {
        let z = ts(vec![0.0; 100], 20.0, 0.0);
        assert!(bandpass(&z, &PreprocessConfig::default()).unwrap_err().is_usage());
    }

    #[test]
    fn design_has_expected_gain() {
        let f = SosFilter::butterworth_bandpass(4.0, 10.0, 4, 100.0).unwrap();
        assert_eq!(f.sections.len(), 2);
        let fs = 100.0;
        let warp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
        let w0 = (warp(4.0) * warp(10.0)).sqrt();
        let centre = (w0 / (2.0 * fs)).atan() * fs / PI;
        assert!((f.gain_at(centre, 100.0) - 1.0).abs() < 1e-12);
        // -3 dB at both edges
        assert!((f.gain_at(4.0, 100.0) - 0.5f64.sqrt()).abs() < 1e-9);
        assert!((f.gain_at(10.0, 100.0) - 0.5f64.sqrt()).abs() < 1e-9);
        assert!(f.gain_at(0.5, 100.0) < 0.01);
        let f8 = SosFilter::butterworth_bandpass(4.0, 10.0, 8, 100.0).unwrap();
        assert_eq!(f8.sections.len(), 4);
        assert!(f8.gain_at(20.0, 100.0) < f.gain_at(20.0, 100.0));
        let f6 = SosFilter::butterworth_bandpass(1.0, 30.0, 6, 100.0).unwrap();
        assert_eq!(f6.sections.len(), 3);
    }

    #[test]
    fn decimation() {
        let t = ts((0..100).map(f64::from).collect(), 100.0, 5.0);
        let d = decimate(&t, 20.0).unwrap();
        assert_eq!((d.len(), d.sample_rate_hz(), d.start_time()), (20, 20.0, 5.0));
        assert_eq!(&d.samples()[..3], &[0.0, 5.0, 10.0]);
        assert_eq!(decimate(&t, 100.0).unwrap(), t);
        assert!(decimate(&t, 30.0).unwrap_err().is_usage());
    }

    #[test]
    fn pipeline_window_size_and_times() {
        let cfg = PreprocessConfig { window_seconds: 10.0, ..Default::default() };
        let a = ts(vec![0.0; 2500], 100.0, 0.0);
        let b = ts(vec![0.0; 2500], 100.0, 100.0);
        let out = run_pipeline(&[a, b], &cfg).unwrap();
        assert_eq!(out.windows.len(), 5);
        assert!(out.windows.iter().all(|w| w.len() == 200 && w.sample_rate_hz() == 20.0));
        assert_eq!(out.gaps.gap_count, 1);
        // third window starts at stitched sample 2000 in the first segment
        assert_eq!(out.windows[2].start_time(), 20.0);
        // fourth window starts at stitched sample 3000, i.e. 5 s into the second segment
        assert_eq!(out.windows[3].start_time(), 105.0);
        assert_eq!(out.dropped_samples, 0);
        assert!(run_pipeline(&[], &cfg).unwrap_err().is_usage());
    }

    #[test]
    fn bandpass_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..3000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..3000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (a, b) = (2.5, -0.75);
        let cfg = PreprocessConfig::default();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let lhs = bandpass(&ts(mix, 100.0, 0.0), &cfg).unwrap();
        let fx = bandpass(&ts(x, 100.0, 0.0), &cfg).unwrap();
        let fy = bandpass(&ts(y, 100.0, 0.0), &cfg).unwrap();
        let scale = lhs.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..lhs.len() {
            let rhs = a * fx.samples()[i] + b * fy.samples()[i];
            assert!((lhs.samples()[i] - rhs).abs() <= 1e-9 * scale);
        }
    }

    proptest! {
        #[test]
        fn decimation_composes(n in 1usize..500, a in 1usize..5, b in 1usize..5) {
            let rate = (a * b) as f64 * 10.0;
            let t = ts((0..n).map(|i| (i as f64).sin()).collect(), rate, 0.0);
            let twice = decimate(&decimate(&t, rate / a as f64).unwrap(), 10.0).unwrap();
            let once = decimate(&t, 10.0).unwrap();
            prop_assert_eq!(twice, once);
        }

        #[test]
        fn pipeline_window_count_law(secs in 1usize..40, win in 1usize..9) {
            let cfg = PreprocessConfig { window_seconds: win as f64, ..Default::default() };
            let t = ts(vec![0.0; secs * 100 + 7], 100.0, 0.0);
            let out = run_pipeline(&[t], &cfg).unwrap();
            let decimated = (secs * 100 + 7).div_ceil(5);
            prop_assert_eq!(out.windows.len(), decimated / cfg.window_samples());
        }
    }
}
