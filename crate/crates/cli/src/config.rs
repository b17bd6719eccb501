//! Run configuration: defaults, overlaid by a JSON file, overlaid by flags.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use cerebroflow_core::dataset::{AugmentParams, SynthParams, DEFAULT_AUGMENTATIONS};
use cerebroflow_core::extraction::ExtractParams;
use cerebroflow_core::flow::DEFAULT_VISCOSITY;
use cerebroflow_core::gnn::TrainConfig;
use cerebroflow_core::phantom::YPhantomParams;
use cerebroflow_core::segmentation::SegmentParams;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::UserError;

/// Boundary data for a single `solve`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveParams {
    pub inlet_pressure: f64,
    pub outlet_pressure: f64,
    pub viscosity: f64,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            inlet_pressure: 15_000.0,
            outlet_pressure: 0.0,
            viscosity: DEFAULT_VISCOSITY,
        }
    }
}

/// Every tunable of every stage. Serialized into each artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; every stage derives its own streams from it.
    pub seed: u64,
    pub segment: SegmentParams,
    pub extract: ExtractParams,
    pub solve: SolveParams,
    pub synth: SynthParams,
    pub augment: AugmentParams,
    pub augment_count: usize,
    pub folds: usize,
    /// Share of each fold's training networks held out for checkpoint selection.
    pub val_fraction: f64,
    pub train: TrainConfig,
    pub phantom: YPhantomParams,
    /// Points per scatter plot.
    pub plot_points: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            segment: SegmentParams::default(),
            extract: ExtractParams::default(),
            solve: SolveParams::default(),
            synth: SynthParams::default(),
            augment: AugmentParams::default(),
            augment_count: DEFAULT_AUGMENTATIONS,
            folds: 5,
            val_fraction: 0.15,
            train: TrainConfig::default(),
            phantom: YPhantomParams::default(),
            plot_points: 2000,
        }
    }
}

impl RunConfig {
    /// Loads a config file. Artifacts written by this tool are accepted too;
    /// their embedded configuration is used.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| UserError(format!("cannot read config {}: {e}", path.display())))?;
        let mut value: Value = serde_json::from_str(&text)
            .map_err(|e| UserError(format!("config {} is not JSON: {e}", path.display())))?;
        if let Some(p) = value.get("provenance") {
            value = p.clone();
        }
        if value.get("tool").is_some() {
            value = value.get("config").cloned().unwrap_or(Value::Null);
        }
        let cfg: RunConfig = serde_json::from_value(value)
            .map_err(|e| UserError(format!("invalid config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Settings that must agree across stages are copied from the global ones.
    pub fn finalize(mut self) -> Self {
        self.train.seed = self.seed;
        self.phantom.seed = self.seed;
        self
    }
}

/// Provenance block embedded in JSON artifacts. Paths are left out so that
/// outputs do not depend on where they were written.
pub fn provenance(command: &str, cfg: &RunConfig) -> Result<Value> {
    Ok(json!({
        "tool": "cerebroflow",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": serde_json::to_value(cfg).context("serializing run configuration")?,
    }))
}
