//! Window-level detection on continuous data, catalog matching and reports.

use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::forest::Model;
use crate::series::{Label, TimeSeries};
use crate::{par, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEvent {
    pub id: String,
    /// Seconds since the Unix epoch.
    pub origin_time: f64,
    pub magnitude: Option<f64>,
}

/// Parses an ISO 8601 timestamp into epoch seconds. A missing offset means UTC.
pub fn parse_time(s: &str) -> Option<f64> {
    let s = s.trim();
    let dt = DateTime::parse_from_rfc3339(s)
        .map(|d| d.with_timezone(&Utc))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f").map(|n| n.and_utc()))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f").map(|n| n.and_utc()))
        .ok()?;
    Some(dt.timestamp() as f64 + dt.timestamp_subsec_nanos() as f64 * 1e-9)
}

/// Formats epoch seconds as RFC 3339 UTC with microseconds.
pub fn format_time(t: f64) -> String {
    let secs = t.floor();
    let micros = ((t - secs) * 1e6).round() as i64;
    DateTime::from_timestamp(secs as i64, 0)
        .map(|d| (d + chrono::Duration::microseconds(micros)).to_rfc3339_opts(SecondsFormat::Micros, true))
        .unwrap_or_else(|| t.to_string())
}

/// Reads `id,origin_time_iso8601,magnitude` rows. A header row starting
/// with `id` and `#` comments are skipped; magnitude may be empty.
pub fn parse_catalog(text: &str, path: &Path) -> Result<Vec<CatalogEvent>> {
    let mut events = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (lineno == 0 && line.starts_with("id")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(Error::format(path, format!("line {}: expected 2 or 3 fields", lineno + 1)));
        }
        let origin_time = parse_time(fields[1])
            .ok_or_else(|| Error::format(path, format!("line {}: bad timestamp {:?}", lineno + 1, fields[1])))?;
        let magnitude = match fields.get(2) {
            None | Some(&"") => None,
            Some(m) => {
                Some(m.parse().map_err(|_| Error::format(path, format!("line {}: bad magnitude {m:?}", lineno + 1)))?)
            }
        };
        events.push(CatalogEvent { id: fields[0].to_owned(), origin_time, magnitude });
    }
    Ok(events)
}

pub fn catalog_csv(events: &[CatalogEvent]) -> String {
    let mut out = String::from("id,origin_time_iso8601,magnitude\n");
    for e in events {
        let mag = e.magnitude.map(|m| m.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", e.id, format_time(e.origin_time), mag));
    }
    out
}

/// A window classified as containing an event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub window_start: f64,
    pub window_end: f64,
    pub prob_event: f64,
    /// Earliest catalog event inside the window, once matched.
    pub matched_event_id: Option<String>,
}

impl Detection {
    pub fn label(&self) -> Label {
        Label::Event
    }

    fn covers(&self, t: f64, tolerance: f64) -> bool {
        t >= self.window_start - tolerance && t <= self.window_end + tolerance
    }
}

/// Classifies each window and returns those labeled `Event`, ordered by
/// start time.
pub fn detect(windows: &[TimeSeries], model: &Model) -> Result<Vec<Detection>> {
    for w in windows {
        model.check_window(w)?;
    }
    let predictions = par::try_map(windows, |w| model.predict(w))?;
    let mut out: Vec<Detection> = windows
        .iter()
        .zip(predictions)
        .filter(|(_, p)| p.label == Label::Event)
        .map(|(w, p)| Detection {
            window_start: w.start_time(),
            window_end: w.end_time(),
            prob_event: p.prob_event,
            matched_event_id: None,
        })
        .collect();
    out.sort_by(|a, b| a.window_start.total_cmp(&b.window_start));
    Ok(out)
}

pub fn detections_jsonl(detections: &[Detection]) -> Result<String> {
    let mut out = String::new();
    for d in detections {
        out.push_str(&serde_json::to_string(d)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_detections_jsonl(text: &str) -> Result<Vec<Detection>> {
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogMatch {
    /// Input detections with `matched_event_id` filled in.
    pub detections: Vec<Detection>,
    /// `(event id, detection index)` for every matched catalog event.
    pub matched: Vec<(String, usize)>,
    /// Catalog events no detection covers.
    pub missed: Vec<CatalogEvent>,
}

impl CatalogMatch {
    /// Detections matched to at least one catalog event.
    pub fn matched_detections(&self) -> usize {
        self.detections.iter().filter(|d| d.matched_event_id.is_some()).count()
    }

    /// Detections not matched to any catalog event.
    pub fn new_events(&self) -> usize {
        self.detections.len() - self.matched_detections()
    }
}

/// Assigns each catalog event to the earliest detection whose window,
/// widened by `tolerance_seconds` on both sides, contains its origin time.
///
/// A detection may cover several events; it records the earliest one.
/// The result does not depend on the order of `catalog`.
pub fn match_catalog(
    detections: &[Detection],
    catalog: &[CatalogEvent],
    tolerance_seconds: f64,
) -> Result<CatalogMatch> {
    if !(tolerance_seconds >= 0.0) {
        return Err(Error::usage("catalog tolerance must be non-negative"));
    }
    let mut events: Vec<&CatalogEvent> = catalog.iter().collect();
    events.sort_by(|a, b| a.origin_time.total_cmp(&b.origin_time).then_with(|| a.id.cmp(&b.id)));

    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[a].window_start.total_cmp(&detections[b].window_start).then(a.cmp(&b)));

    let mut annotated = detections.to_vec();
    for d in &mut annotated {
        d.matched_event_id = None;
    }
    let mut matched = Vec::new();
    let mut missed = Vec::new();
    for e in events {
        match order.iter().copied().find(|&i| detections[i].covers(e.origin_time, tolerance_seconds)) {
            Some(i) => {
                annotated[i].matched_event_id.get_or_insert_with(|| e.id.clone());
                matched.push((e.id.clone(), i));
            }
            None => missed.push(e.clone()),
        }
    }
    Ok(CatalogMatch { detections: annotated, matched, missed })
}

/// Probability bins `[e0, e1), [e1, e2), …, [e_{n-1}, e_n]`.
pub const DEFAULT_BIN_EDGES: [f64; 7] = [0.50, 0.60, 0.70, 0.80, 0.90, 0.96, 1.0];

/// Default edges, starting at `threshold` when it is below 0.5.
pub fn default_bin_edges(threshold: f64) -> Vec<f64> {
    let mut edges: Vec<f64> = DEFAULT_BIN_EDGES.iter().copied().filter(|&e| e > threshold).collect();
    edges.insert(0, threshold.min(DEFAULT_BIN_EDGES[0]));
    edges
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Plot-ready CSV: `bin_low,bin_high,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_low,bin_high,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", self.edges[i], self.edges[i + 1], c));
        }
        out
    }
}

/// Counts detections per probability bin. Bins are half-open except the
/// last, which is closed. Every detection must fall inside the edges.
pub fn probability_histogram(detections: &[Detection], edges: &[f64]) -> Result<Histogram> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::usage("bin edges must be strictly ascending with at least two entries"));
    }
    let mut counts = vec![0; edges.len() - 1];
    let last = edges.len() - 2;
    for d in detections {
        let p = d.prob_event;
        let bin =
            if p == edges[edges.len() - 1] { Some(last) } else { edges.windows(2).position(|w| p >= w[0] && p < w[1]) };
        let bin = bin.ok_or_else(|| Error::usage(format!("probability {p} lies outside the histogram edges")))?;
        counts[bin] += 1;
    }
    Ok(Histogram { edges: edges.to_vec(), counts })
}

/// Interval known to contain real signal, used to judge detections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSpan {
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
    pub total_detections: usize,
    pub catalog_events: usize,
    /// Detections that matched a catalog event.
    pub catalog_matched: usize,
    /// Catalog events covered by some detection.
    pub catalog_events_detected: usize,
    /// Detections that matched no catalog event.
    pub new_events: usize,
    /// Needs ground truth beyond the catalog; absent otherwise.
    pub false_positives: Option<usize>,
    pub false_negatives: usize,
    pub false_positive_fraction: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub runtime_seconds: f64,
    pub histogram: Histogram,
}

/// Assembles a report.
///
/// Recall is the fraction of catalog events covered. With `truth`, a
/// detection is a false positive when its window (widened by the tolerance)
/// overlaps no truth span, and precision is the fraction that do overlap.
pub fn build_report(
    matching: &CatalogMatch,
    catalog_len: usize,
    truth: Option<&[TruthSpan]>,
    tolerance_seconds: f64,
    histogram: Histogram,
    runtime_seconds: f64,
) -> DetectionReport {
    let dets = &matching.detections;
    let total = dets.len();
    let false_positives = truth.map(|spans| {
        dets.iter()
            .filter(|d| {
                !spans
                    .iter()
                    .any(|s| s.start <= d.window_end + tolerance_seconds && s.end >= d.window_start - tolerance_seconds)
            })
            .count()
    });
    let ratio = |n: usize, d: usize| (d > 0).then(|| n as f64 / d as f64);
    let detected = catalog_len - matching.missed.len();
    DetectionReport {
        manifest: None,
        total_detections: total,
        catalog_events: catalog_len,
        catalog_matched: matching.matched_detections(),
        catalog_events_detected: detected,
        new_events: matching.new_events(),
        false_positives,
        false_negatives: matching.missed.len(),
        false_positive_fraction: false_positives.and_then(|fp| ratio(fp, total)),
        precision: false_positives.and_then(|fp| ratio(total - fp, total)),
        recall: ratio(detected, catalog_len),
        runtime_seconds,
        histogram,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn det(start: f64, p: f64) -> Detection {
        Detection { window_start: start, window_end: start + 300.0, prob_event: p, matched_event_id: None }
    }

    fn ev(id: &str, t: f64) -> CatalogEvent {
        CatalogEvent { id: id.into(), origin_time: t, magnitude: None }
    }

    #[test]
    fn time_round_trip() {
        let t = parse_time("2011-01-08T00:00:00Z").unwrap();
        assert_eq!(t, 1294444800.0);
        assert_eq!(parse_time("2011-01-08T00:00:01.5").unwrap(), t + 1.5);
        assert_eq!(parse_time(&format_time(t + 12.25)).unwrap(), t + 12.25);
        assert!(parse_time("yesterday").is_none());
    }

    #[test]
    fn catalog_parsing() {
        let text = "id,origin_time_iso8601,magnitude\nnc1,2011-01-08T00:00:00Z,4.1\nnc2,2011-01-09T01:00:00Z,\n";
        let c = parse_catalog(text, Path::new("c.csv")).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].magnitude, Some(4.1));
        assert_eq!(c[1].magnitude, None);
        assert_eq!(parse_catalog(&catalog_csv(&c), Path::new("c.csv")).unwrap(), c);
        assert!(parse_catalog("a,notatime,1\n", Path::new("c.csv")).is_err());
    }

    #[test]
    fn matching_examples() {
        let dets = vec![det(0.0, 0.9), det(600.0, 0.7)];
        let m = match_catalog(&dets, &[ev("a", 150.0)], 0.0).unwrap();
        assert_eq!(m.detections[0].matched_event_id.as_deref(), Some("a"));
        assert_eq!((m.matched_detections(), m.new_events()), (1, 1));

        // 10 minutes from any detection window
        let m = match_catalog(&[det(0.0, 0.9)], &[ev("b", 900.0)], 0.0).unwrap();
        assert_eq!(m.missed.len(), 1);
        let m = match_catalog(&[det(0.0, 0.9)], &[ev("b", 900.0)], 600.0).unwrap();
        assert!(m.missed.is_empty());

        // boundary event goes to the earliest window; both events of one window count
        let dets = vec![det(0.0, 0.9), det(300.0, 0.9)];
        let m = match_catalog(&dets, &[ev("x", 300.0), ev("y", 310.0), ev("z", 320.0)], 0.0).unwrap();
        assert_eq!(m.matched, vec![("x".into(), 0), ("y".into(), 1), ("z".into(), 1)]);
        assert_eq!(m.detections[1].matched_event_id.as_deref(), Some("y"));
        assert!(match_catalog(&dets, &[], -1.0).is_err());
    }

    #[test]
    fn thirteen_catalog_events_all_matched() {
        let dets: Vec<Detection> = (0..40).map(|i| det(i as f64 * 300.0, 0.8)).collect();
        let cat: Vec<CatalogEvent> = (0..13).map(|i| ev(&format!("e{i}"), i as f64 * 900.0 + 20.0)).collect();
        let m = match_catalog(&dets, &cat, 0.0).unwrap();
        assert_eq!(m.matched.len(), 13);
        assert_eq!(m.new_events(), 27);
    }

    #[test]
    fn matching_ignores_catalog_order_and_new_events_are_clear() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dets: Vec<Detection> = (0..30).filter(|i| i % 3 != 0).map(|i| det(i as f64 * 300.0, 0.8)).collect();
        let mut cat: Vec<CatalogEvent> = (0..25).map(|i| ev(&format!("e{i:02}"), i as f64 * 331.0 + 7.0)).collect();
        let base = match_catalog(&dets, &cat, 5.0).unwrap();
        for _ in 0..5 {
            cat.shuffle(&mut rng);
            assert_eq!(match_catalog(&dets, &cat, 5.0).unwrap(), base);
        }
        for d in base.detections.iter().filter(|d| d.matched_event_id.is_none()) {
            assert!(cat.iter().all(|e| e.origin_time < d.window_start - 5.0 || e.origin_time > d.window_end + 5.0));
        }
    }

    #[test]
    fn histogram_examples() {
        let edges = DEFAULT_BIN_EDGES;
        let h = probability_histogram(&[det(0.0, 1.0)], &edges).unwrap();
        assert_eq!(h.counts, vec![0, 0, 0, 0, 0, 1]);
        assert_eq!(probability_histogram(&[], &edges).unwrap().counts, vec![0; 6]);
        let dets: Vec<Detection> = [0.5, 0.59, 0.6, 0.95, 0.96, 0.999].iter().map(|&p| det(0.0, p)).collect();
        let h = probability_histogram(&dets, &edges).unwrap();
        assert_eq!(h.counts, vec![2, 1, 0, 0, 1, 2]);
        assert_eq!(h.counts.iter().sum::<usize>(), dets.len());
        assert!(probability_histogram(&[det(0.0, 0.4)], &edges).is_err());
        assert!(probability_histogram(&[], &[0.5]).is_err());
        assert_eq!(default_bin_edges(0.5), DEFAULT_BIN_EDGES.to_vec());
        assert_eq!(default_bin_edges(0.3)[..2], [0.3, 0.5]);
        assert_eq!(h.to_csv().lines().count(), 7);
    }

    #[test]
    fn report_arithmetic() {
        let dets: Vec<Detection> = (0..10).map(|i| det(i as f64 * 300.0, 0.8)).collect();
        let cat = vec![ev("a", 10.0), ev("b", 5000.0)];
        let m = match_catalog(&dets, &cat, 0.0).unwrap();
        let spans: Vec<TruthSpan> =
            (0..8).map(|i| TruthSpan { start: i as f64 * 300.0 + 5.0, end: i as f64 * 300.0 + 9.0 }).collect();
        let h = probability_histogram(&m.detections, &DEFAULT_BIN_EDGES).unwrap();
        let r = build_report(&m, cat.len(), Some(&spans), 0.0, h.clone(), 1.5);
        assert_eq!(r.catalog_matched + r.new_events, r.total_detections);
        assert_eq!((r.false_positives, r.false_negatives), (Some(2), 1));
        assert_eq!((r.precision, r.recall), (Some(0.8), Some(0.5)));
        assert_eq!(r.false_positive_fraction, Some(0.2));

        let empty = match_catalog(&[], &[], 0.0).unwrap();
        let r = build_report(&empty, 0, None, 0.0, probability_histogram(&[], &DEFAULT_BIN_EDGES).unwrap(), 0.0);
        assert_eq!((r.total_detections, r.precision, r.recall, r.false_positives), (0, None, None, None));
    }

    #[test]
    fn paper_scale_false_positive_fraction() {
        let dets: Vec<Detection> = (0..299).map(|i| det(i as f64 * 300.0, 0.8)).collect();
        let spans: Vec<TruthSpan> =
            (0..288).map(|i| TruthSpan { start: i as f64 * 300.0 + 1.0, end: i as f64 * 300.0 + 2.0 }).collect();
        let m = match_catalog(&dets, &[], 0.0).unwrap();
        let h = probability_histogram(&dets, &DEFAULT_BIN_EDGES).unwrap();
        let r = build_report(&m, 0, Some(&spans), 0.0, h, 0.0);
        assert_eq!(r.false_positives, Some(11));
        let frac = r.false_positive_fraction.unwrap();
        assert_eq!(frac, 11.0 / 299.0);
        assert_eq!((frac * 100.0).floor(), 3.0);
    }

    #[test]
    fn jsonl_round_trip() {
        let mut d = det(1.0, 0.75);
        d.matched_event_id = Some("nc1".into());
        let text = detections_jsonl(&[d.clone(), det(301.0, 0.5)]).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with(
            "{\"window_start\":1.0,\"window_end\":301.0,\"prob_event\":0.75,\"matched_event_id\":\"nc1\"}"
        ));
        assert_eq!(parse_detections_jsonl(&text).unwrap()[0], d);
    }
}
