//! Layered configuration: built-in defaults, then a config file, then
//! `--set section.key=value` overrides.
//!
//! The config file is TOML with one table per stage. A run manifest (JSON)
//! is also accepted, in which case its `config` object is used, so any run
//! can be replayed from its manifest.

use std::path::Path;

use anyhow::{anyhow, Context};
use eqshapelet::discovery::DiscoveryConfig;
use eqshapelet::forest::ForestParams;
use eqshapelet::preprocess::PreprocessConfig;
use eqshapelet::synth::SynthConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::{read_text, UsageError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionSettings {
    pub tolerance_seconds: f64,
    /// Histogram bin edges; defaults to the standard edges starting at the
    /// decision threshold.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin_edges: Option<Vec<f64>>,
}

impl Default for DetectionSettings {
    fn default() -> Self {
        Self { tolerance_seconds: 0.0, bin_edges: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSettings {
    fn default() -> Self {
        Self { train_fraction: 0.6, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub thresholds: Vec<f64>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self { thresholds: (1..=10).map(|i| i as f64 * 5.0 / 100.0).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningSetSettings {
    pub events: usize,
    pub others: usize,
}

impl Default for LearningSetSettings {
    fn default() -> Self {
        Self { events: 52, others: 52 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub preprocess: PreprocessConfig,
    pub discovery: DiscoveryConfig,
    pub forest: ForestParams,
    pub detection: DetectionSettings,
    pub split: SplitSettings,
    pub sweep: SweepSettings,
    pub learning_set: LearningSetSettings,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
}

/// Effective settings plus the raw merged table, which records which keys
/// were given explicitly.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub settings: Settings,
    table: Table,
}

impl Loaded {
    pub fn is_set(&self, section: &str, key: &str) -> bool {
        self.table.get(section).and_then(Value::as_table).is_some_and(|t| t.contains_key(key))
    }
}

pub fn load(config: Option<&Path>, overrides: &[String]) -> anyhow::Result<Loaded> {
    let mut table = match config {
        Some(path) => read_table(path)?,
        None => Table::new(),
    };
    for item in overrides {
        apply_override(&mut table, item)?;
    }
    let settings: Settings =
        Value::Table(table.clone()).try_into().map_err(|e| UsageError(format!("invalid configuration: {e}")))?;
    Ok(Loaded { settings, table })
}

fn read_table(path: &Path) -> anyhow::Result<Table> {
    let text = read_text(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        let doc: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("{}: not valid JSON", path.display()))?;
        let config = doc
            .get("config")
            .cloned()
            .ok_or_else(|| UsageError(format!("{}: manifest has no `config` object", path.display())))?;
        match Value::try_from(strip_nulls(config)) {
            Ok(Value::Table(t)) => Ok(t),
            _ => Err(UsageError(format!("{}: manifest config is not a table", path.display())).into()),
        }
    } else {
        toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
    }
}

fn strip_nulls(v: serde_json::Value) -> serde_json::Value {
    match v {
        serde_json::Value::Object(map) => {
            map.into_iter().filter(|(_, v)| !v.is_null()).map(|(k, v)| (k, strip_nulls(v))).collect()
        }
        serde_json::Value::Array(items) => items.into_iter().map(strip_nulls).collect(),
        other => other,
    }
}

/// Applies `section.key=value`. The value is read as a TOML value when it
/// parses as one and as a bare string otherwise.
pub fn apply_override(table: &mut Table, item: &str) -> anyhow::Result<()> {
    let bad = || UsageError(format!("override `{item}` is not of the form section.key=value"));
    let (path, raw) = item.split_once('=').ok_or_else(bad)?;
    let (section, key) = path.trim().split_once('.').ok_or_else(bad)?;
    if section.is_empty() || key.is_empty() {
        return Err(bad().into());
    }
    let raw = raw.trim();
    let value = toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_owned()));
    let entry = table.entry(section.to_owned()).or_insert_with(|| Value::Table(Table::new()));
    let Value::Table(section_table) = entry else {
        return Err(anyhow!(UsageError(format!("`{section}` is not a section"))));
    };
    section_table.insert(key.to_owned(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_core_defaults() {
        let loaded = load(None, &[]).unwrap();
        assert_eq!(loaded.settings.preprocess, PreprocessConfig::default());
        assert_eq!(loaded.settings.sweep.thresholds.len(), 10);
        assert!(!loaded.is_set("forest", "seed"));
    }

    #[test]
    fn overrides_take_typed_values() {
        let loaded = load(
            None,
            &["forest.seed=7".into(), "discovery.distance=z_normalized".into(), "sweep.thresholds=[0.1, 0.2]".into()],
        )
        .unwrap();
        assert_eq!(loaded.settings.forest.seed, 7);
        assert!(loaded.is_set("forest", "seed"));
        assert_eq!(loaded.settings.discovery.distance, eqshapelet::distance::DistanceMode::ZNormalized);
        assert_eq!(loaded.settings.sweep.thresholds, vec![0.1, 0.2]);
    }

    #[test]
    fn bad_overrides_are_usage_errors() {
        for item in ["forest", "seed=1", ".x=1", "forest.nope=1", "forest.n_trees=many"] {
            let err = load(None, &[item.into()]).unwrap_err();
            assert!(err.downcast_ref::<UsageError>().is_some(), "{item}");
        }
    }

    #[test]
    fn manifest_config_round_trips() {
        let loaded = load(None, &["forest.seed=3".into(), "synth.seed=9".into()]).unwrap();
        let json = serde_json::json!({ "config": serde_json::to_value(&loaded.settings).unwrap() });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.manifest.json");
        std::fs::write(&path, json.to_string()).unwrap();
        let again = load(Some(&path), &[]).unwrap();
        assert_eq!(again.settings, loaded.settings);
        assert!(again.is_set("forest", "seed"));
    }
}
