//! Normalization statistics and per-graph input features.

use std::rc::Rc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::flow::{BoundaryConditions, FlowState};
use crate::graph::VascularGraph;

pub const NODE_FEATURES: usize = 5;
pub const EDGE_FEATURES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
}

impl Moments {
    /// Population mean and standard deviation; a zero spread becomes 1.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
        for v in values {
            n += 1;
            sum += v;
            sq += v * v;
        }
        if n == 0 {
            return Err(Error::InvalidParameter(
                "no values for normalization".into(),
            ));
        }
        let mean = sum / n as f64;
        let var = (sq / n as f64 - mean * mean).max(0.0);
        let std = var.sqrt();
        let std = if std > 1e-12 * mean.abs().max(f64::MIN_POSITIVE) {
            std
        } else {
            1.0
        };
        Ok(Self { mean, std })
    }

    pub fn z(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn unz(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Z-score statistics, always computed from training samples only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub radius: Moments,
    pub length: Moments,
    pub diameter: Moments,
    pub pressure: Moments,
    pub flow: Moments,
}

fn mean_diameter(g: &VascularGraph, u: usize, v: usize) -> f64 {
    g.nodes[u].radius + g.nodes[v].radius
}

impl NormStats {
    pub fn from_samples(samples: &[Sample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter(
                "normalization needs at least one sample".into(),
            ));
        }
        let mut diam = Vec::new();
        for s in samples {
            for (u, v) in s.graph.edge_endpoints()? {
                diam.push(mean_diameter(&s.graph, u, v));
            }
        }
        Ok(Self {
            radius: Moments::of(
                samples
                    .iter()
                    .flat_map(|s| s.graph.nodes.iter().map(|n| n.radius)),
            )?,
            length: Moments::of(
                samples
                    .iter()
                    .flat_map(|s| s.graph.edges.iter().map(|e| e.length)),
            )?,
            diameter: Moments::of(diam)?,
            pressure: Moments::of(
                samples
                    .iter()
                    .flat_map(|s| s.truth.node_pressure.values().copied()),
            )?,
            flow: Moments::of(
                samples
                    .iter()
                    .flat_map(|s| s.truth.edge_flow.values().copied()),
            )?,
        })
    }
}

/// Encoded inputs of one graph. Rows follow `graph.nodes` and `graph.edges` order.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphFeatures {
    pub node: Array2<f64>,
    pub edge: Array2<f64>,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    /// Normalized prescribed pressure per node, `None` for interior nodes.
    pub boundary: Vec<Option<f64>>,
}

pub fn encode(
    graph: &VascularGraph,
    bc: &BoundaryConditions,
    stats: Option<&NormStats>,
) -> Result<GraphFeatures> {
    let stats = stats
        .ok_or_else(|| Error::InvalidParameter("normalization statistics are required".into()))?;
    let ends = graph.edge_endpoints()?;
    let n = graph.nodes.len();
    let mut node = Array2::zeros((n, NODE_FEATURES));
    let mut boundary = vec![None; n];
    for (i, nd) in graph.nodes.iter().enumerate() {
        let prescribed = bc
            .inlet_pressures
            .get(&nd.id)
            .or_else(|| bc.outlet_pressures.get(&nd.id));
        let kind = if bc.inlet_pressures.contains_key(&nd.id) {
            0
        } else if bc.outlet_pressures.contains_key(&nd.id) {
            1
        } else {
            2
        };
        node[[i, kind]] = 1.0;
        node[[i, 3]] = stats.radius.z(nd.radius);
        if let Some(&p) = prescribed {
            let z = stats.pressure.z(p);
            node[[i, 4]] = z;
            boundary[i] = Some(z);
        }
    }
    let mut edge = Array2::zeros((graph.edges.len(), EDGE_FEATURES));
    for (k, (e, &(u, v))) in graph.edges.iter().zip(&ends).enumerate() {
        edge[[k, 0]] = stats.length.z(e.length);
        edge[[k, 1]] = stats.diameter.z(mean_diameter(graph, u, v));
        edge[[k, 2]] = e.axis[0];
        edge[[k, 3]] = e.axis[1];
        edge[[k, 4]] = e.axis[2];
    }
    if node.iter().chain(edge.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite input feature".into()));
    }
    Ok(GraphFeatures {
        node,
        edge,
        src: ends.iter().map(|e| e.0).collect(),
        dst: ends.iter().map(|e| e.1).collect(),
        boundary,
    })
}

/// Features plus normalized targets.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSample {
    pub features: GraphFeatures,
    pub pressure: Vec<f64>,
    pub flow: Vec<f64>,
}

pub fn normalized_targets(
    graph: &VascularGraph,
    truth: &FlowState,
    stats: &NormStats,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = graph
        .nodes
        .iter()
        .map(|n| truth.node_pressure.get(&n.id).map(|&v| stats.pressure.z(v)))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Format("truth is missing a node pressure".into()))?;
    let q = graph
        .edges
        .iter()
        .map(|e| truth.edge_flow.get(&e.id).map(|&v| stats.flow.z(v)))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Format("truth is missing an edge flow".into()))?;
    Ok((p, q))
}

pub fn encode_sample(sample: &Sample, stats: &NormStats) -> Result<EncodedSample> {
    let features = encode(&sample.graph, &sample.bc, Some(stats))?;
    let (pressure, flow) = normalized_targets(&sample.graph, &sample.truth, stats)?;
    Ok(EncodedSample {
        features,
        pressure,
        flow,
    })
}

/// Several graphs packed as one disconnected graph.
#[derive(Clone, Debug)]
pub struct Batch {
    pub node: Array2<f64>,
    pub edge: Array2<f64>,
    pub src: Rc<Vec<usize>>,
    pub dst: Rc<Vec<usize>>,
    /// 1 for free nodes, 0 for clamped ones.
    pub keep: Rc<Vec<f64>>,
    /// Clamped value, 0 for free nodes.
    pub fixed: Vec<f64>,
    pub node_offsets: Vec<usize>,
    pub edge_offsets: Vec<usize>,
    pub target_pressure: Option<Rc<Array2<f64>>>,
    pub target_flow: Option<Rc<Array2<f64>>>,
}

impl Batch {
    pub fn from_features(graphs: &[&GraphFeatures]) -> Self {
        let n: usize = graphs.iter().map(|g| g.node.nrows()).sum();
        let m: usize = graphs.iter().map(|g| g.edge.nrows()).sum();
        let mut node = Array2::zeros((n, NODE_FEATURES));
        let mut edge = Array2::zeros((m, EDGE_FEATURES));
        let (mut src, mut dst) = (Vec::with_capacity(m), Vec::with_capacity(m));
        let (mut keep, mut fixed) = (Vec::with_capacity(n), Vec::with_capacity(n));
        let mut node_offsets = vec![0];
        let mut edge_offsets = vec![0];
        for g in graphs {
            let (n0, m0) = (*node_offsets.last().unwrap(), *edge_offsets.last().unwrap());
            let (gn, gm) = (g.node.nrows(), g.edge.nrows());
            node.slice_mut(ndarray::s![n0..n0 + gn, ..]).assign(&g.node);
            edge.slice_mut(ndarray::s![m0..m0 + gm, ..]).assign(&g.edge);
            src.extend(g.src.iter().map(|&u| u + n0));
            dst.extend(g.dst.iter().map(|&v| v + n0));
            for b in &g.boundary {
                keep.push(if b.is_some() { 0.0 } else { 1.0 });
                fixed.push(b.unwrap_or(0.0));
            }
            node_offsets.push(n0 + gn);
            edge_offsets.push(m0 + gm);
        }
        Self {
            node,
            edge,
            src: Rc::new(src),
            dst: Rc::new(dst),
            keep: Rc::new(keep),
            fixed,
            node_offsets,
            edge_offsets,
            target_pressure: None,
            target_flow: None,
        }
    }

    pub fn from_samples(samples: &[&EncodedSample]) -> Self {
        let feats: Vec<&GraphFeatures> = samples.iter().map(|s| &s.features).collect();
        let mut batch = Self::from_features(&feats);
        let p: Vec<f64> = samples
            .iter()
            .flat_map(|s| s.pressure.iter().copied())
            .collect();
        let q: Vec<f64> = samples
            .iter()
            .flat_map(|s| s.flow.iter().copied())
            .collect();
        batch.target_pressure = Some(Rc::new(Array2::from_shape_vec((p.len(), 1), p).unwrap()));
        batch.target_flow = Some(Rc::new(Array2::from_shape_vec((q.len(), 1), q).unwrap()));
        batch
    }

    pub fn node_count(&self) -> usize {
        self.node.nrows()
    }
}
