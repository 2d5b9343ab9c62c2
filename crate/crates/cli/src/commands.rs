use std::path::{Path, PathBuf};

use anyhow::Context;
use eqshapelet::detection::{
    build_report, catalog_csv, default_bin_edges, detect, detections_jsonl, match_catalog, parse_catalog,
    probability_histogram,
};
use eqshapelet::discovery::{discover, ig_threshold_sweep, sweep_csv, ShapeletSet, ShapeletsDocument};
use eqshapelet::forest::{evaluate, train, Metrics, ModelDocument};
use eqshapelet::preprocess::{condition_all, run_pipeline};
use eqshapelet::synth::{gen_learning_set, gen_record, GroundTruth, SynthConfig};
use eqshapelet::{io, LabeledWindow, LearningSet, TimeSeries};
use serde::Serialize;

use crate::manifest::{manifest_path, manifest_ref, RunManifest};
use crate::settings::{self, Loaded};
use crate::{
    read_text, write_text, Cli, Command, DetectArgs, DiscoverArgs, EvaluateArgs, PreprocessArgs, SweepArgs, SynthArgs,
    TrainArgs, UsageError,
};

struct Ctx {
    loaded: Loaded,
    emit_plot_data: bool,
    sample_rate_hz: Option<f64>,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let mut ctx = Ctx {
        loaded: settings::load(cli.config.as_deref(), &cli.overrides)?,
        emit_plot_data: cli.emit_plot_data,
        sample_rate_hz: cli.sample_rate_hz,
    };
    match cli.command {
        Command::Synth(a) => synth(&mut ctx, a),
        Command::Preprocess(a) => preprocess(&mut ctx, a),
        Command::Discover(a) => discover_cmd(&ctx, a),
        Command::Sweep(a) => sweep(&mut ctx, a),
        Command::Train(a) => train_cmd(&mut ctx, a),
        Command::Detect(a) => detect_cmd(&mut ctx, a),
        Command::Evaluate(a) => evaluate_cmd(&ctx, a),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn finish(manifest: &RunManifest, primary: &Path) -> anyhow::Result<()> {
    write_json(&manifest_path(primary), manifest)
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| eqshapelet::Error::Io { path: dir.to_owned(), source }.into())
}

/// Resolves a seed from a flag or an explicit config key. Silent defaults
/// are refused so every run names its randomness.
fn require_seed(ctx: &Ctx, flag: Option<u64>, section: &str) -> anyhow::Result<u64> {
    match flag {
        Some(s) => Ok(s),
        None if ctx.loaded.is_set(section, "seed") => Ok(match section {
            "forest" => ctx.loaded.settings.forest.seed,
            "split" => ctx.loaded.settings.split.seed,
            _ => ctx.loaded.settings.synth.as_ref().map_or(0, |s| s.seed),
        }),
        None => Err(UsageError(format!("a seed is required: pass --seed or set `{section}.seed`")).into()),
    }
}

fn learning_set(dir: &Path, rate: Option<f64>) -> anyhow::Result<LearningSet> {
    let windows = io::read_labeled_dir(dir, rate)?;
    LearningSet::new(windows).with_context(|| format!("{}: not a usable learning set", dir.display()))
}

fn read_model(path: &Path) -> anyhow::Result<ModelDocument> {
    let doc = ModelDocument::from_json(&read_text(path)?);
    doc.with_context(|| format!("{}: not a model document", path.display()))
}

fn synth(ctx: &mut Ctx, a: SynthArgs) -> anyhow::Result<()> {
    if a.out.is_none() && a.learning_set.is_none() {
        return Err(UsageError("synth needs --out and/or --learning-set".into()).into());
    }
    let seed = require_seed(ctx, a.seed, "synth")?;
    let s = &mut ctx.loaded.settings;
    let mut cfg = s.synth.clone().unwrap_or_else(|| SynthConfig::new(seed));
    cfg.seed = seed;
    if let Some(d) = a.duration_seconds {
        cfg.duration_seconds = d;
    }
    if let Some(n) = a.events {
        s.learning_set.events = n;
    }
    if let Some(n) = a.others {
        s.learning_set.others = n;
    }
    s.synth = Some(cfg.clone());
    let mut m = RunManifest::new("synth", s);
    m.seed("synth", seed);

    let mut primary = None;
    if let Some(out) = &a.out {
        let (record, truth) = m.time("generate record", || gen_record(&cfg))?;
        m.time("write record", || io::write_waveform(out, &record))?;
        m.output("record", out);
        m.note("record_samples", record.len());
        m.note("injected_events", truth.len());
        if let Some(path) = &a.truth {
            write_text(path, &truth.to_csv())?;
            m.output("truth", path);
        }
        if let Some(path) = &a.catalog {
            write_text(path, &catalog_csv(&truth.to_catalog()))?;
            m.output("catalog", path);
        }
        primary = Some(out.clone());
    }
    if let Some(dir) = &a.learning_set {
        let window_seconds = a.window_seconds.unwrap_or(s.preprocess.window_seconds);
        let (n_event, n_other) = (s.learning_set.events, s.learning_set.others);
        let (set, truth) =
            m.time("generate learning set", || gen_learning_set(&cfg, window_seconds, n_event, n_other))?;
        create_dir(dir)?;
        m.time("write learning set", || io::write_labeled_dir(dir, set.windows()))?;
        write_text(&dir.join("truth.csv"), &truth.to_csv())?;
        m.output("learning_set", dir);
        m.note("learning_set_window_seconds", window_seconds);
        primary.get_or_insert_with(|| dir.clone());
    }
    finish(&m, &primary.expect("checked above"))
}

fn preprocess(ctx: &mut Ctx, a: PreprocessArgs) -> anyhow::Result<()> {
    if let Some(f) = a.train_fraction {
        ctx.loaded.settings.split.train_fraction = f;
    }
    let split_seed = match a.train_fraction {
        Some(_) => Some(require_seed(ctx, a.seed, "split")?),
        None => None,
    };
    if let Some(seed) = split_seed {
        ctx.loaded.settings.split.seed = seed;
    }
    let s = &ctx.loaded.settings;
    s.preprocess.validate()?;
    let mut m = RunManifest::new("preprocess", s);
    m.input("input", &a.input);
    if !a.input.exists() {
        let source = std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory");
        return Err(eqshapelet::Error::Io { path: a.input.clone(), source }.into());
    }
    create_dir(&a.out)?;

    if a.input.is_dir() && io::is_labeled_dir(&a.input) {
        let raw = m.time("read", || io::read_labeled_dir(&a.input, ctx.sample_rate_hz))?;
        let series: Vec<TimeSeries> = raw.iter().map(|w| w.series.clone()).collect();
        let conditioned = m.time("condition", || condition_all(&series, &s.preprocess))?;
        let windows: Vec<LabeledWindow> =
            raw.into_iter().zip(conditioned).map(|(w, c)| LabeledWindow::new(w.id, c, w.label)).collect();
        m.note("windows", windows.len());
        match split_seed {
            Some(seed) => {
                m.seed("split", seed);
                let (train_set, test_set) = LearningSet::new(windows)?.split(s.split.train_fraction, seed)?;
                m.time("write", || -> anyhow::Result<()> {
                    io::write_labeled_dir(&a.out.join("train"), train_set.windows())?;
                    io::write_labeled_dir(&a.out.join("test"), test_set.windows())?;
                    Ok(())
                })?;
                m.note("train_windows", train_set.len());
                m.note("test_windows", test_set.len());
            }
            None => m.time("write", || io::write_labeled_dir(&a.out, &windows))?,
        }
    } else {
        if split_seed.is_some() {
            return Err(UsageError("--train-fraction needs a labeled input directory".into()).into());
        }
        let segments: Vec<TimeSeries> = m.time("read", || -> anyhow::Result<_> {
            Ok(if a.input.is_dir() {
                io::read_waveform_dir(&a.input, ctx.sample_rate_hz)?.into_iter().map(|(_, t)| t).collect()
            } else {
                vec![io::read_waveform(&a.input, ctx.sample_rate_hz)?]
            })
        })?;
        if segments.is_empty() {
            return Err(eqshapelet::Error::Data(format!("{}: no waveform files", a.input.display())).into());
        }
        let out = m.time("pipeline", || run_pipeline(&segments, &s.preprocess))?;
        m.time("write", || -> anyhow::Result<()> {
            for (i, w) in out.windows.iter().enumerate() {
                io::write_waveform(&a.out.join(format!("window-{i:06}.bin")), w)?;
            }
            Ok(())
        })?;
        m.note("windows", out.windows.len());
        m.note("gaps", &out.gaps);
        m.note("dropped_samples", out.dropped_samples);
        log::info!("{} windows, {} gaps", out.windows.len(), out.gaps.gap_count);
    }
    m.output("windows", &a.out);
    finish(&m, &a.out)
}

fn discover_cmd(ctx: &Ctx, a: DiscoverArgs) -> anyhow::Result<()> {
    let s = &ctx.loaded.settings;
    let mut m = RunManifest::new("discover", s);
    m.input("train", &a.train);
    let set = m.time("read", || learning_set(&a.train, ctx.sample_rate_hz))?;
    let shapelets = m.time("discover", || discover(&set, &s.discovery))?;
    log::info!("{} shapelets", shapelets.len());
    m.note("shapelets", shapelets.len());
    let mut doc =
        ShapeletsDocument::new(s.discovery.clone(), ShapeletSet::from_discovery(&set, &s.discovery, shapelets));
    doc.manifest = Some(manifest_ref(&a.out));
    write_json(&a.out, &doc)?;
    m.output("shapelets", &a.out);
    finish(&m, &a.out)
}

fn sweep(ctx: &mut Ctx, a: SweepArgs) -> anyhow::Result<()> {
    ctx.loaded.settings.forest.seed = require_seed(ctx, a.seed, "forest")?;
    if let Some(t) = a.thresholds {
        ctx.loaded.settings.sweep.thresholds = t;
    }
    let s = &ctx.loaded.settings;
    if s.sweep.thresholds.is_empty() {
        return Err(UsageError("the threshold list is empty".into()).into());
    }
    let mut m = RunManifest::new("sweep", s);
    m.seed("forest", s.forest.seed);
    m.input("train", &a.train);
    m.input("test", &a.test);
    let train_set = learning_set(&a.train, ctx.sample_rate_hz)?;
    let test_set = learning_set(&a.test, ctx.sample_rate_hz)?;
    let rows =
        m.time("sweep", || ig_threshold_sweep(&train_set, &test_set, &s.sweep.thresholds, &s.discovery, &s.forest))?;
    write_text(&a.out, &sweep_csv(&rows))?;
    m.output("sweep", &a.out);
    finish(&m, &a.out)
}

fn train_cmd(ctx: &mut Ctx, a: TrainArgs) -> anyhow::Result<()> {
    ctx.loaded.settings.forest.seed = require_seed(ctx, a.seed, "forest")?;
    let s = &ctx.loaded.settings;
    let mut m = RunManifest::new("train", s);
    m.seed("forest", s.forest.seed);
    m.input("shapelets", &a.shapelets);
    m.input("train", &a.train);
    let doc = ShapeletsDocument::from_json(&read_text(&a.shapelets)?)
        .with_context(|| format!("{}: not a shapelet document", a.shapelets.display()))?;
    let set = learning_set(&a.train, ctx.sample_rate_hz)?;
    let model = m.time("train", || train(doc.set, set.windows(), &s.forest))?;
    let mut out = ModelDocument::new(model);
    out.manifest = Some(manifest_ref(&a.out));
    write_json(&a.out, &out)?;
    m.output("model", &a.out);
    finish(&m, &a.out)
}

fn read_windows(path: &Path, rate: Option<f64>) -> anyhow::Result<Vec<TimeSeries>> {
    if path.is_dir() {
        Ok(io::read_waveform_dir(path, rate)?.into_iter().map(|(_, t)| t).collect())
    } else {
        Ok(vec![io::read_waveform(path, rate)?])
    }
}

fn detect_cmd(ctx: &mut Ctx, a: DetectArgs) -> anyhow::Result<()> {
    if let Some(t) = a.tolerance_seconds {
        ctx.loaded.settings.detection.tolerance_seconds = t;
    }
    let s = &ctx.loaded.settings;
    let mut m = RunManifest::new("detect", s);
    m.input("model", &a.model);
    m.input("data", &a.data);
    let model = read_model(&a.model)?.model;
    let catalog = match &a.catalog {
        Some(path) => {
            m.input("catalog", path);
            parse_catalog(&read_text(path)?, path)?
        }
        None => Vec::new(),
    };
    let truth = match &a.truth {
        Some(path) => {
            m.input("truth", path);
            Some(GroundTruth::from_csv(&read_text(path)?, path)?.spans())
        }
        None => None,
    };
    let windows = m.time("read", || read_windows(&a.data, ctx.sample_rate_hz))?;
    let started = std::time::Instant::now();
    let detections = m.time("detect", || detect(&windows, &model))?;
    let runtime = started.elapsed().as_secs_f64();
    let tol = s.detection.tolerance_seconds;
    let matching = match_catalog(&detections, &catalog, tol)?;
    let edges =
        s.detection.bin_edges.clone().unwrap_or_else(|| default_bin_edges(model.forest.params.decision_threshold));
    let histogram = probability_histogram(&matching.detections, &edges)?;
    let mut report = build_report(&matching, catalog.len(), truth.as_deref(), tol, histogram, runtime);
    report.manifest = Some(manifest_ref(&a.out));

    write_text(&a.out, &detections_jsonl(&matching.detections)?)?;
    write_json(&a.report, &report)?;
    m.output("detections", &a.out);
    m.output("report", &a.report);
    if ctx.emit_plot_data {
        let path = sibling(&a.report, "histogram.csv");
        write_text(&path, &report.histogram.to_csv())?;
        m.output("histogram", &path);
    }
    m.note("windows", windows.len());
    m.note("detections", report.total_detections);
    log::info!("{} detections in {} windows", report.total_detections, windows.len());
    finish(&m, &a.out)
}

/// `dir/report.json` → `dir/report.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

#[derive(Serialize)]
struct MetricsDocument {
    manifest: String,
    windows: usize,
    #[serde(flatten)]
    metrics: Metrics,
}

fn evaluate_cmd(ctx: &Ctx, a: EvaluateArgs) -> anyhow::Result<()> {
    let mut m = RunManifest::new("evaluate", &ctx.loaded.settings);
    m.input("model", &a.model);
    m.input("test", &a.test);
    let model = read_model(&a.model)?.model;
    let windows = io::read_labeled_dir(&a.test, ctx.sample_rate_hz)?;
    let metrics = m.time("evaluate", || evaluate(&model, &windows))?;
    let doc = MetricsDocument { manifest: manifest_ref(&a.out), windows: windows.len(), metrics };
    write_json(&a.out, &doc)?;
    m.output("metrics", &a.out);
    finish(&m, &a.out)
}
