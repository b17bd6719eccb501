//! Synthetic network corpus, augmentation, and network-level folds.
//!
//! On disk a dataset is a directory holding `manifest.json`, one graph file
//! per source network under `networks/`, and one JSON file per sample under
//! `samples/`.

mod augment;
mod generator;
mod split;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use augment::{augment, augment_one, AugmentParams, Sample, DEFAULT_AUGMENTATIONS};
pub use generator::{generate_network, NetworkSpec};
pub use split::{make_splits, Fold, SplitPlan};

use crate::error::{Error, Result};
use crate::graph::VascularGraph;
use crate::rng::PortableRng;

const NETWORK_STREAM: u64 = 1 << 40;
const AUGMENT_STREAM: u64 = 2 << 40;
const SPLIT_STREAM: u64 = 3 << 40;

/// Independent seed for item `index` of a named sub-task.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    PortableRng::with_stream(seed, stream + index).next_u64()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub networks: usize,
    /// Inclusive range of tree depths.
    pub depth: [usize; 2],
    pub max_loops: usize,
    pub max_stenoses: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            networks: 35,
            depth: [3, 5],
            max_loops: 2,
            max_stenoses: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub id: usize,
    pub seed: u64,
    pub spec: NetworkSpec,
    pub graph: VascularGraph,
}

/// Draws network `index` of a synthetic corpus. Loop counts that a shallow
/// tree cannot hold are reduced until the `NetworkSpec` is feasible.
pub fn synth_network(seed: u64, index: usize, params: &SynthParams) -> Result<NetworkRecord> {
    let [d0, d1] = params.depth;
    if d0 < 2 || d0 > d1 {
        return Err(Error::InvalidParameter(format!("depth range [{d0}, {d1}]")));
    }
    let net_seed = derive_seed(seed, NETWORK_STREAM, index as u64);
    let mut rng = PortableRng::with_stream(net_seed, 0);
    let depth = d0 + rng.below(d1 - d0 + 1);
    let mut spec = NetworkSpec {
        depth,
        loop_count: rng.below(params.max_loops + 1),
        stenosis_count: rng.below(params.max_stenoses + 1),
    };
    loop {
        match generate_network(net_seed, spec) {
            Ok(graph) => {
                return Ok(NetworkRecord {
                    id: index,
                    seed: net_seed,
                    spec,
                    graph,
                })
            }
            Err(Error::InvalidParameter(_)) if spec.loop_count > 0 => spec.loop_count -= 1,
            Err(e) => return Err(e),
        }
    }
}

pub fn synth_networks(seed: u64, params: &SynthParams) -> Result<Vec<NetworkRecord>> {
    (0..params.networks)
        .map(|i| synth_network(seed, i, params))
        .collect()
}

/// Augmented samples for every network, ordered by (network, augmentation).
pub fn augment_networks(
    networks: &[NetworkRecord],
    seed: u64,
    count: usize,
    params: &AugmentParams,
) -> Result<Vec<Sample>> {
    let mut out = Vec::with_capacity(networks.len() * count);
    for net in networks {
        let s = derive_seed(seed, AUGMENT_STREAM, net.id as u64);
        out.extend(augment(&net.graph, net.id, s, count, params)?);
    }
    Ok(out)
}

pub fn split_networks(networks: &[NetworkRecord], folds: usize, seed: u64) -> Result<SplitPlan> {
    let ids: Vec<usize> = networks.iter().map(|n| n.id).collect();
    make_splits(&ids, folds, derive_seed(seed, SPLIT_STREAM, 0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkEntry {
    pub id: usize,
    pub path: String,
    pub seed: u64,
    pub spec: NetworkSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub path: String,
    pub network_id: usize,
    pub aug_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
    pub networks: Vec<NetworkEntry>,
    pub samples: Vec<SampleEntry>,
    pub split_plan: Option<SplitPlan>,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(self)? + "\n",
        )?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Writes networks and samples under `dir` and returns the manifest (not yet saved).
pub fn write_dataset(
    dir: &Path,
    networks: &[NetworkRecord],
    samples: &[Sample],
    split_plan: Option<SplitPlan>,
    provenance: Option<serde_json::Value>,
) -> Result<Manifest> {
    fs::create_dir_all(dir.join("networks"))?;
    fs::create_dir_all(dir.join("samples"))?;
    let mut net_entries = Vec::new();
    for net in networks {
        let path = format!("networks/net_{:04}.json", net.id);
        net.graph.write(&dir.join(&path))?;
        net_entries.push(NetworkEntry {
            id: net.id,
            path,
            seed: net.seed,
            spec: net.spec,
        });
    }
    let mut sample_entries = Vec::new();
    for s in samples {
        let path = format!(
            "samples/net_{:04}_aug_{:03}.json",
            s.source_network_id, s.augmentation_index
        );
        fs::write(dir.join(&path), serde_json::to_string(s)?)?;
        sample_entries.push(SampleEntry {
            path,
            network_id: s.source_network_id,
            aug_index: s.augmentation_index,
        });
    }
    let manifest = Manifest {
        provenance,
        networks: net_entries,
        samples: sample_entries,
        split_plan,
    };
    manifest.write(dir)?;
    Ok(manifest)
}

pub fn read_networks(dir: &Path, manifest: &Manifest) -> Result<Vec<NetworkRecord>> {
    manifest
        .networks
        .iter()
        .map(|e| {
            Ok(NetworkRecord {
                id: e.id,
                seed: e.seed,
                spec: e.spec,
                graph: VascularGraph::read(&dir.join(&e.path))?,
            })
        })
        .collect()
}

/// Loads and re-verifies every sample listed in the manifest.
pub fn read_samples(dir: &Path, manifest: &Manifest) -> Result<Vec<Sample>> {
    manifest
        .samples
        .iter()
        .map(|e| {
            let path: PathBuf = dir.join(&e.path);
            let text = fs::read_to_string(&path)
                .map_err(|err| Error::Format(format!("{}: {err}", path.display())))?;
            let s: Sample = serde_json::from_str(&text)?;
            if s.source_network_id != e.network_id || s.augmentation_index != e.aug_index {
                return Err(Error::Format(format!(
                    "{} does not match its manifest entry",
                    path.display()
                )));
            }
            s.verify()?;
            Ok(s)
        })
        .collect()
}
