//! Random inlet pressure and per-node radius perturbation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{
    conservation_residual, solve_flow, BoundaryConditions, FlowState, DEFAULT_VISCOSITY,
};
use crate::graph::VascularGraph;
use crate::rng::PortableRng;

pub const DEFAULT_AUGMENTATIONS: usize = 25;
const MAX_RETRIES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentParams {
    /// Inlet pressure range in Pa.
    pub inlet_pressure: [f64; 2],
    /// Multiplicative radius factor range.
    pub radius_factor: [f64; 2],
    pub outlet_pressure: f64,
    pub viscosity: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            inlet_pressure: [12_000.0, 18_000.0],
            radius_factor: [0.8, 1.2],
            outlet_pressure: 0.0,
            viscosity: DEFAULT_VISCOSITY,
        }
    }
}

impl AugmentParams {
    fn validate(&self) -> Result<()> {
        let [p0, p1] = self.inlet_pressure;
        let [f0, f1] = self.radius_factor;
        if !(p0.is_finite() && p1.is_finite() && p0 <= p1) {
            return Err(Error::InvalidParameter(format!(
                "inlet pressure range [{p0}, {p1}]"
            )));
        }
        if !(f0 > 0.0 && f0 <= f1 && f1.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "radius factor range [{f0}, {f1}]"
            )));
        }
        if !self.outlet_pressure.is_finite() {
            return Err(Error::InvalidParameter(
                "outlet pressure must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// One training example: a perturbed graph, its boundary data, and the solved flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub graph: VascularGraph,
    pub bc: BoundaryConditions,
    pub truth: FlowState,
    pub source_network_id: usize,
    pub augmentation_index: usize,
}

impl Sample {
    /// Re-checks that `truth` satisfies conservation and the prescribed pressures.
    pub fn verify(&self) -> Result<()> {
        self.graph.validate()?;
        let scale = self.truth.max_abs_flow().max(f64::MIN_POSITIVE);
        for (id, r) in conservation_residual(&self.graph, &self.truth) {
            if r.abs() > 1e-8 * scale {
                return Err(Error::Format(format!(
                    "sample {}/{}: residual {r:e} at node {id}",
                    self.source_network_id, self.augmentation_index
                )));
            }
        }
        for (id, p) in self.bc.prescribed() {
            if self.truth.node_pressure.get(&id) != Some(&p) {
                return Err(Error::Format(format!(
                    "sample {}/{}: boundary pressure at node {id} differs from prescribed",
                    self.source_network_id, self.augmentation_index
                )));
            }
        }
        if self.truth.node_pressure.len() != self.graph.nodes.len()
            || self.truth.edge_flow.len() != self.graph.edges.len()
        {
            return Err(Error::Format("truth does not cover the graph".into()));
        }
        Ok(())
    }

    pub fn inlet_pressure(&self) -> Option<f64> {
        self.bc.inlet_pressures.values().next().copied()
    }
}

/// `count` augmented samples of `graph`. Sample `k` draws from its own RNG
/// stream, so the result does not depend on the order samples are built in.
pub fn augment(
    graph: &VascularGraph,
    network_id: usize,
    rng_seed: u64,
    count: usize,
    params: &AugmentParams,
) -> Result<Vec<Sample>> {
    params.validate()?;
    (0..count)
        .map(|k| augment_one(graph, network_id, rng_seed, k, params))
        .collect()
}

pub fn augment_one(
    graph: &VascularGraph,
    network_id: usize,
    rng_seed: u64,
    index: usize,
    params: &AugmentParams,
) -> Result<Sample> {
    let mut rng = PortableRng::with_stream(rng_seed, index as u64);
    let mut last_err = None;
    for _ in 0..=MAX_RETRIES {
        let inlet = rng.uniform(params.inlet_pressure[0], params.inlet_pressure[1]);
        let mut g = graph.clone();
        for node in &mut g.nodes {
            node.radius *= rng.uniform(params.radius_factor[0], params.radius_factor[1]);
        }
        let bc = BoundaryConditions::uniform(&g, inlet, params.outlet_pressure, params.viscosity);
        match solve_flow(&g, &bc) {
            Ok(truth) => {
                return Ok(Sample {
                    graph: g,
                    bc,
                    truth,
                    source_network_id: network_id,
                    augmentation_index: index,
                })
            }
            Err(e) => {
                log::warn!("augmentation {index} of network {network_id} rejected: {e}");
                last_err = Some(e);
            }
        }
    }
    Err(last_err.unwrap_or_else(|| Error::SingularSystem("augmentation failed".into())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generator::{generate_network, NetworkSpec};

    fn net() -> VascularGraph {
        generate_network(
            4,
            NetworkSpec {
                depth: 4,
                loop_count: 1,
                stenosis_count: 1,
            },
        )
        .unwrap()
    }

    #[test]
    fn ranges_and_count() {
        let g = net();
        let samples = augment(&g, 0, 11, 25, &AugmentParams::default()).unwrap();
        assert_eq!(samples.len(), 25);
        for (k, s) in samples.iter().enumerate() {
            assert_eq!(s.augmentation_index, k);
            let p = s.inlet_pressure().unwrap();
            assert!((12_000.0..=18_000.0).contains(&p));
            for (a, b) in s.graph.nodes.iter().zip(&g.nodes) {
                let f = a.radius / b.radius;
                assert!((0.8 - 1e-12..=1.2 + 1e-12).contains(&f));
            }
            s.verify().unwrap();
            assert!(s.bc.outlet_pressures.values().all(|&p| p == 0.0));
        }
    }

    #[test]
    fn empty_and_deterministic() {
        let g = net();
        assert!(augment(&g, 0, 1, 0, &AugmentParams::default())
            .unwrap()
            .is_empty());
        let a = augment(&g, 0, 7, 5, &AugmentParams::default()).unwrap();
        let b = augment(&g, 0, 7, 5, &AugmentParams::default()).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        // Sample k is the same whether built alone or in a batch.
        let lone = augment_one(&g, 0, 7, 3, &AugmentParams::default()).unwrap();
        assert_eq!(lone, a[3]);
    }

    #[test]
    fn tampered_sample_fails_verification() {
        let g = net();
        let mut s = augment_one(&g, 0, 1, 0, &AugmentParams::default()).unwrap();
        let q = s.truth.edge_flow.get_mut(&0).unwrap();
        *q *= 1.01;
        assert!(s.verify().is_err());
    }

    #[test]
    fn bad_ranges_rejected() {
        let params = AugmentParams {
            radius_factor: [1.2, 0.8],
            ..Default::default()
        };
        assert!(augment(&net(), 0, 1, 1, &params).is_err());
    }
}
