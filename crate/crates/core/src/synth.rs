//! Synthetic seismograms with known event injections.
//!
//! A record is white Gaussian noise plus, at each event time, an
//! exponentially damped sinusoid with an abrupt onset:
//!
//! ```text
//! w(τ) = A · exp(−τ / decay) · sin(2π f τ),   0 ≤ τ < decay · ln 1000
//! ```
//!
//! so the envelope has fallen to 0.1 % when the wavelet is cut off.
//!
//! Randomness comes from ChaCha8 (a 64-bit-counter stream cipher
//! generator): stream 0 of the seed draws the event schedule and
//! amplitudes, and noise is drawn in fixed chunks of
//! [`NOISE_CHUNK`] samples with chunk `c` on stream `c + 1`. Learning-set
//! windows get their own seed derived by SplitMix64 from the base seed and
//! the window index. Output is therefore identical for any thread count.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::detection::{CatalogEvent, TruthSpan};
use crate::series::{Label, LabeledWindow, LearningSet, TimeSeries};
use crate::{par, Error, Result};

pub const NOISE_CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default = "defaults::duration")]
    pub duration_seconds: f64,
    #[serde(default = "defaults::rate")]
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub start_time: f64,
    #[serde(default = "defaults::sigma")]
    pub noise_sigma: f64,
    /// Absolute event onsets. Takes precedence over the rate.
    #[serde(default)]
    pub event_times: Option<Vec<f64>>,
    /// Poisson event rate, used when `event_times` is absent.
    #[serde(default)]
    pub event_rate_per_hour: Option<f64>,
    #[serde(default = "defaults::amplitude")]
    pub event_amplitude_range: (f64, f64),
    #[serde(default = "defaults::dominant")]
    pub wavelet_dominant_hz: f64,
    #[serde(default = "defaults::decay")]
    pub wavelet_decay_seconds: f64,
    pub seed: u64,
}

mod defaults {
    pub fn duration() -> f64 {
        3600.0
    }
    pub fn rate() -> f64 {
        100.0
    }
    pub fn sigma() -> f64 {
        1.0
    }
    pub fn amplitude() -> (f64, f64) {
        (5.0, 10.0)
    }
    pub fn dominant() -> f64 {
        5.0
    }
    pub fn decay() -> f64 {
        1.0
    }
}

impl SynthConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            duration_seconds: defaults::duration(),
            sample_rate_hz: defaults::rate(),
            start_time: 0.0,
            noise_sigma: defaults::sigma(),
            event_times: None,
            event_rate_per_hour: None,
            event_amplitude_range: defaults::amplitude(),
            wavelet_dominant_hz: defaults::dominant(),
            wavelet_decay_seconds: defaults::decay(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.duration_seconds) || !positive(self.sample_rate_hz) {
            return Err(Error::usage("duration and sample rate must be positive"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::usage("noise_sigma must be non-negative"));
        }
        let (lo, hi) = self.event_amplitude_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::usage("event amplitude range must satisfy lo <= hi"));
        }
        if !positive(self.wavelet_dominant_hz) || !positive(self.wavelet_decay_seconds) {
            return Err(Error::usage("wavelet frequency and decay must be positive"));
        }
        if self.wavelet_dominant_hz >= self.sample_rate_hz / 2.0 {
            return Err(Error::usage("wavelet frequency must be below the Nyquist frequency"));
        }
        if let Some(rate) = self.event_rate_per_hour {
            if !(rate >= 0.0 && rate.is_finite()) {
                return Err(Error::usage("event rate must be non-negative"));
            }
        }
        if let Some(times) = &self.event_times {
            let end = self.start_time + self.duration_seconds;
            if let Some(t) = times.iter().find(|&&t| !(t >= self.start_time && t < end)) {
                return Err(Error::usage(format!("event time {t} is outside the record")));
            }
        }
        Ok(())
    }

    /// Length of an injected wavelet.
    pub fn event_duration(&self) -> f64 {
        self.wavelet_decay_seconds * 1000f64.ln()
    }

    fn samples(&self) -> usize {
        (self.duration_seconds * self.sample_rate_hz).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectedEvent {
    pub time: f64,
    pub amplitude: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub events: Vec<InjectedEvent>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn spans(&self) -> Vec<TruthSpan> {
        self.events.iter().map(|e| TruthSpan { start: e.time, end: e.time + e.duration }).collect()
    }

    /// The injections as catalog entries `synth-0000`, `synth-0001`, ….
    pub fn to_catalog(&self) -> Vec<CatalogEvent> {
        self.events
            .iter()
            .enumerate()
            .map(|(i, e)| CatalogEvent { id: format!("synth-{i:04}"), origin_time: e.time, magnitude: None })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,amplitude,duration\n");
        for e in &self.events {
            out.push_str(&format!("{},{},{}\n", e.time, e.amplitude, e.duration));
        }
        out
    }

    pub fn from_csv(text: &str, path: &Path) -> Result<Self> {
        let mut events = Vec::new();
        for (lineno, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::format(path, format!("line {}: expected numbers", lineno + 1)))?;
            let [time, amplitude, duration] = vals[..] else {
                return Err(Error::format(path, format!("line {}: expected 3 fields", lineno + 1)));
            };
            events.push(InjectedEvent { time, amplitude, duration });
        }
        Ok(Self { events })
    }
}

/// SplitMix64 step: `z = (x + 0x9E3779B97F4A7C15)`, then two xor-shift
/// multiplies with `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn draw_amplitude(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn schedule(cfg: &SynthConfig) -> Result<GroundTruth> {
    let mut rng = stream(cfg.seed, 0);
    let times: Vec<f64> = match (&cfg.event_times, cfg.event_rate_per_hour) {
        (Some(times), _) => {
            let mut t = times.clone();
            t.sort_by(f64::total_cmp);
            t
        }
        (None, Some(rate)) if rate > 0.0 => {
            let gap = Exp::new(rate / 3600.0).map_err(|e| Error::usage(e.to_string()))?;
            let end = cfg.start_time + cfg.duration_seconds;
            let mut out = Vec::new();
            let mut t = cfg.start_time + gap.sample(&mut rng);
            while t < end {
                out.push(t);
                t += gap.sample(&mut rng);
            }
            out
        }
        _ => Vec::new(),
    };
    let duration = cfg.event_duration();
    let events = times
        .into_iter()
        .map(|time| InjectedEvent { time, amplitude: draw_amplitude(&mut rng, cfg.event_amplitude_range), duration })
        .collect();
    Ok(GroundTruth { events })
}

fn add_wavelet(samples: &mut [f64], cfg: &SynthConfig, e: &InjectedEvent) {
    let fs = cfg.sample_rate_hz;
    let first = ((e.time - cfg.start_time) * fs).ceil().max(0.0) as usize;
    let omega = 2.0 * std::f64::consts::PI * cfg.wavelet_dominant_hz;
    for (i, v) in samples.iter_mut().enumerate().skip(first) {
        let tau = cfg.start_time + i as f64 / fs - e.time;
        if tau >= e.duration {
            break;
        }
        *v += e.amplitude * (-tau / cfg.wavelet_decay_seconds).exp() * (omega * tau).sin();
    }
}

/// Generates a noisy record with injected events.
pub fn gen_record(cfg: &SynthConfig) -> Result<(TimeSeries, GroundTruth)> {
    cfg.validate()?;
    let n = cfg.samples();
    if n == 0 {
        return Err(Error::usage("record would contain no samples"));
    }
    let truth = schedule(cfg)?;
    let chunks = n.div_ceil(NOISE_CHUNK);
    let sigma = cfg.noise_sigma;
    let mut samples: Vec<f64> = par::map_range(chunks, |c| {
        let len = NOISE_CHUNK.min(n - c * NOISE_CHUNK);
        if sigma == 0.0 {
            return vec![0.0; len];
        }
        let mut rng = stream(cfg.seed, c as u64 + 1);
        (0..len).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect::<Vec<f64>>()
    })
    .concat();
    for e in &truth.events {
        add_wavelet(&mut samples, cfg, e);
    }
    Ok((TimeSeries::new(samples, cfg.sample_rate_hz, cfg.start_time)?, truth))
}

/// Generates `n_event` windows holding exactly one whole event each and
/// `n_other` pure-noise windows, all `window_seconds` long at the
/// configured raw sample rate. Window `i` starts at
/// `start_time + i * window_seconds`; ids are `event/NNNN` and `other/NNNN`.
pub fn gen_learning_set(
    cfg: &SynthConfig,
    window_seconds: f64,
    n_event: usize,
    n_other: usize,
) -> Result<(LearningSet, GroundTruth)> {
    cfg.validate()?;
    let margin = 1.0f64.min(0.05 * window_seconds);
    let latest = window_seconds - cfg.event_duration() - margin;
    if latest <= margin {
        return Err(Error::usage(format!(
            "{window_seconds} s windows cannot hold a {:.2} s event",
            cfg.event_duration()
        )));
    }
    let total = n_event + n_other;
    let windows = par::map_range(total, |i| {
        let is_event = i < n_event;
        let seed = derive_seed(cfg.seed, i as u64);
        let start = cfg.start_time + i as f64 * window_seconds;
        let mut rng = stream(seed, 0);
        let event_times = is_event.then(|| vec![start + rng.random_range(margin..latest)]);
        let wcfg = SynthConfig {
            duration_seconds: window_seconds,
            start_time: start,
            event_times: Some(event_times.unwrap_or_default()),
            event_rate_per_hour: None,
            seed,
            ..cfg.clone()
        };
        let (series, truth) = gen_record(&wcfg)?;
        let (label, k) = if is_event { (Label::Event, i) } else { (Label::Other, i - n_event) };
        Ok((LabeledWindow::new(format!("{label}/{k:04}"), series, label), truth))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut truth = GroundTruth::default();
    let mut out = Vec::with_capacity(total);
    for (w, t) in windows {
        truth.events.extend(t.events);
        out.push(w);
    }
    Ok((LearningSet::new(out)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_single_event_is_the_wavelet() {
        let cfg = SynthConfig {
            duration_seconds: 20.0,
            noise_sigma: 0.0,
            event_times: Some(vec![5.0]),
            event_amplitude_range: (3.0, 3.0),
            ..SynthConfig::new(1)
        };
        let (rec, truth) = gen_record(&cfg).unwrap();
        assert_eq!(truth.len(), 1);
        let e = truth.events[0];
        assert_eq!(e.amplitude, 3.0);
        for (i, &v) in rec.samples().iter().enumerate() {
            let tau = i as f64 / 100.0 - 5.0;
            let want = if (0.0..e.duration).contains(&tau) {
                3.0 * (-tau).exp() * (2.0 * std::f64::consts::PI * 5.0 * tau).sin()
            } else {
                0.0
            };
            assert!((v - want).abs() < 1e-12, "sample {i}");
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = SynthConfig { duration_seconds: 2000.0, event_rate_per_hour: Some(30.0), ..SynthConfig::new(42) };
        let a = gen_record(&cfg).unwrap();
        let b = par::with_threads(Some(3), || gen_record(&cfg)).unwrap().unwrap();
        assert_eq!(a, b);
        assert!(a.0.len() > NOISE_CHUNK);
        let c = gen_record(&SynthConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn poisson_schedule_stays_in_record() {
        let cfg = SynthConfig { duration_seconds: 7200.0, event_rate_per_hour: Some(12.0), ..SynthConfig::new(5) };
        let (_, truth) = gen_record(&cfg).unwrap();
        assert!(truth.len() > 5 && truth.len() < 50);
        assert!(truth.events.windows(2).all(|w| w[0].time < w[1].time));
        assert!(truth.events.iter().all(|e| e.time >= 0.0 && e.time < 7200.0));
        assert!(truth.events.iter().all(|e| (5.0..10.0).contains(&e.amplitude)));
    }

    #[test]
    fn loud_events_stand_out() {
        let cfg = SynthConfig {
            duration_seconds: 600.0,
            event_times: Some((0..10).map(|i| i as f64 * 60.0 + 20.0).collect()),
            event_amplitude_range: (5.0, 8.0),
            ..SynthConfig::new(8)
        };
        let (rec, _) = gen_record(&cfg).unwrap();
        let peak = |a: usize, b: usize| rec.samples()[a..b].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..10 {
            let event_peak = peak(i * 6000 + 2000, i * 6000 + 2700);
            let quiet_peak = peak(i * 6000 + 3000, i * 6000 + 5900);
            assert!(event_peak > quiet_peak, "window {i}: {event_peak} vs {quiet_peak}");
        }
    }

    #[test]
    fn learning_set_layout() {
        let cfg = SynthConfig::new(3);
        let (set, truth) = gen_learning_set(&cfg, 60.0, 4, 3).unwrap();
        assert_eq!((set.count(Label::Event), set.count(Label::Other)), (4, 3));
        assert_eq!(truth.len(), 4);
        assert_eq!(set.window_len(), 6000);
        for (w, e) in set.windows().iter().zip(&truth.events) {
            assert_eq!(w.label, Label::Event);
            assert!(e.time >= w.series.start_time() && e.time + e.duration <= w.series.end_time());
        }
        assert_eq!(set.windows()[4].id, "other/0000");
        assert!(gen_learning_set(&cfg, 60.0, 4, 0).is_err());
        assert!(gen_learning_set(&cfg, 5.0, 4, 4).is_err());
    }

    #[test]
    fn truth_csv_round_trip() {
        let cfg = SynthConfig { duration_seconds: 3600.0, event_rate_per_hour: Some(20.0), ..SynthConfig::new(2) };
        let (_, truth) = gen_record(&cfg).unwrap();
        assert_eq!(GroundTruth::from_csv(&truth.to_csv(), Path::new("t.csv")).unwrap(), truth);
        assert_eq!(truth.to_catalog().len(), truth.len());
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            SynthConfig { duration_seconds: 0.0, ..SynthConfig::new(0) },
            SynthConfig { event_amplitude_range: (2.0, 1.0), ..SynthConfig::new(0) },
            SynthConfig { event_times: Some(vec![4000.0]), ..SynthConfig::new(0) },
            SynthConfig { wavelet_dominant_hz: 60.0, ..SynthConfig::new(0) },
        ];
        for cfg in bad {
            assert!(gen_record(&cfg).unwrap_err().is_usage());
        }
    }
}
