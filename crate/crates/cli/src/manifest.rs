//! Run manifests written next to every output.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use tetraproj::{Diagnostics, GeometryConfig, TraceConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverRecord {
    pub algo: String,
    pub iterations_requested: usize,
    pub iterations_run: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relax: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonneg: Option<bool>,
    /// Precision of the iterate and all solver vectors.
    pub state_precision: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometryConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub threads: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
    pub timings_ms: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            geometry: None,
            trace: None,
            solver: None,
            seed: None,
            threads: rayon::current_num_threads(),
            diagnostics: None,
            timings_ms: BTreeMap::new(),
            details: serde_json::Value::Null,
        }
    }

    pub fn input(&mut self, key: &str, path: &Path) {
        self.inputs.insert(key.into(), path.display().to_string());
    }

    pub fn output(&mut self, key: &str, path: &Path) {
        self.outputs.insert(key.into(), path.display().to_string());
    }

    pub fn time(&mut self, key: &str, start: std::time::Instant) {
        self.timings_ms
            .insert(key.into(), start.elapsed().as_secs_f64() * 1e3);
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
