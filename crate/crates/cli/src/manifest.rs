use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::settings::Settings;

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Record of one invocation, written next to its primary output as
/// `<output>.manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub threads: usize,
    pub config: Settings,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: BTreeMap<String, PathBuf>,
    pub timings: Vec<StageTiming>,
    /// Free-form run facts (counts, gap statistics).
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: &Settings) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_owned(),
            threads: eqshapelet::par::current_threads(),
            config: config.clone(),
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            timings: Vec::new(),
            notes: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) {
        self.inputs.insert(name.to_owned(), path.to_owned());
    }

    pub fn output(&mut self, name: &str, path: &Path) {
        self.outputs.insert(name.to_owned(), path.to_owned());
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.seeds.insert(name.to_owned(), seed);
    }

    pub fn note(&mut self, name: &str, value: impl Serialize) {
        self.notes.insert(name.to_owned(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
    }

    /// Runs `f` and records its wall-clock time under `stage`.
    pub fn time<R>(&mut self, stage: &str, f: impl FnOnce() -> R) -> R {
        let started = Instant::now();
        let out = f();
        let seconds = started.elapsed().as_secs_f64();
        log::info!("{stage}: {seconds:.3} s");
        self.timings.push(StageTiming { stage: stage.to_owned(), seconds });
        out
    }
}

/// `<primary>.manifest.json`, or `<dir>/manifest.json` for directory outputs.
pub fn manifest_path(primary: &Path) -> PathBuf {
    if primary.is_dir() {
        return primary.join("manifest.json");
    }
    let mut name = primary.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    primary.with_file_name(name)
}

/// File name used by output documents to point back at their manifest.
pub fn manifest_ref(primary: &Path) -> String {
    manifest_path(primary).file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}
