//! Steady Poiseuille flow on a vascular graph.
//!
//! Each edge is a pipe with conductance `G = pi d^4 / (128 mu L)` where `d`
//! is the mean of the two endpoint diameters. Mass conservation at every
//! interior node gives a weighted graph Laplacian system in the unknown
//! pressures; boundary pressures are prescribed.
//!
//! Graph files carry mm; everything here is converted to SI first.

mod ldl;

pub use ldl::{LdlFactor, SymmetricBuilder};

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeId, Node, NodeId, VascularGraph};

/// Whole-blood viscosity in Pa s.
pub const DEFAULT_VISCOSITY: f64 = 3.5e-3;

const MM: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConditions {
    /// Prescribed inlet pressures in Pa.
    pub inlet_pressures: BTreeMap<NodeId, f64>,
    /// Prescribed outlet pressures in Pa.
    pub outlet_pressures: BTreeMap<NodeId, f64>,
    /// Dynamic viscosity in Pa s.
    pub viscosity: f64,
}

impl BoundaryConditions {
    /// Same pressure on every inlet, and on every outlet, of `graph`.
    pub fn uniform(graph: &VascularGraph, inlet: f64, outlet: f64, viscosity: f64) -> Self {
        Self {
            inlet_pressures: graph.inlet_ids.iter().map(|&i| (i, inlet)).collect(),
            outlet_pressures: graph.outlet_ids.iter().map(|&i| (i, outlet)).collect(),
            viscosity,
        }
    }

    pub fn prescribed(&self) -> BTreeMap<NodeId, f64> {
        self.inlet_pressures
            .iter()
            .chain(&self.outlet_pressures)
            .map(|(&k, &v)| (k, v))
            .collect()
    }

    fn validate(&self, graph: &VascularGraph) -> Result<()> {
        if !(self.viscosity > 0.0 && self.viscosity.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "viscosity {}",
                self.viscosity
            )));
        }
        if graph.inlet_ids.is_empty() || graph.outlet_ids.is_empty() {
            return Err(Error::UnderDetermined(
                "graph needs at least one inlet and one outlet".into(),
            ));
        }
        for id in &graph.inlet_ids {
            if !self.inlet_pressures.contains_key(id) {
                return Err(Error::UnderDetermined(format!(
                    "no pressure for inlet {id}"
                )));
            }
        }
        for id in &graph.outlet_ids {
            if !self.outlet_pressures.contains_key(id) {
                return Err(Error::UnderDetermined(format!(
                    "no pressure for outlet {id}"
                )));
            }
        }
        for (id, p) in self.prescribed() {
            if !graph.is_boundary(id) {
                return Err(Error::InvalidParameter(format!(
                    "node {id} is not a boundary node"
                )));
            }
            if !p.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "pressure at node {id} is {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Node pressures in Pa and signed edge flows in m^3/s (positive u -> v).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    #[serde(rename = "pressure")]
    pub node_pressure: BTreeMap<NodeId, f64>,
    #[serde(rename = "flow")]
    pub edge_flow: BTreeMap<EdgeId, f64>,
}

impl FlowState {
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn max_abs_flow(&self) -> f64 {
        self.edge_flow.values().map(|q| q.abs()).fold(0.0, f64::max)
    }
}

/// Poiseuille conductance in m^3 / (s Pa).
pub fn edge_conductance(edge: &Edge, u: &Node, v: &Node, viscosity: f64) -> Result<f64> {
    if !(edge.length > 0.0 && edge.length.is_finite()) {
        return Err(Error::InvalidGeometry(format!(
            "edge {} length {}",
            edge.id, edge.length
        )));
    }
    for n in [u, v] {
        if !(n.radius > 0.0 && n.radius.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "node {} radius {}",
                n.id, n.radius
            )));
        }
    }
    if !(viscosity > 0.0) {
        return Err(Error::InvalidParameter(format!("viscosity {viscosity}")));
    }
    let d = (2.0 * u.radius + 2.0 * v.radius) / 2.0 * MM;
    let length = edge.length * MM;
    Ok(PI * d.powi(4) / (128.0 * viscosity * length))
}

/// Per-edge conductances in edge order.
pub fn conductances(graph: &VascularGraph, viscosity: f64) -> Result<Vec<f64>> {
    let ends = graph.edge_endpoints()?;
    graph
        .edges
        .iter()
        .zip(ends)
        .map(|(e, (a, b))| edge_conductance(e, &graph.nodes[a], &graph.nodes[b], viscosity))
        .collect()
}

/// Assembled interior system `A p = b` for inspection and test oracles.
pub struct PressureSystem {
    /// Position in `graph.nodes` of each unknown.
    pub interior: Vec<usize>,
    pub matrix: SymmetricBuilder,
    pub rhs: Vec<f64>,
    /// Pressure per node position; prescribed values filled in, interior NaN.
    pub known: Vec<f64>,
    pub conductance: Vec<f64>,
}

pub fn assemble(graph: &VascularGraph, bc: &BoundaryConditions) -> Result<PressureSystem> {
    bc.validate(graph)?;
    let index = graph.node_index();
    let ends = graph.edge_endpoints()?;
    let conductance = conductances(graph, bc.viscosity)?;

    let n = graph.nodes.len();
    let mut known = vec![f64::NAN; n];
    for (id, p) in bc.prescribed() {
        known[index[&id]] = p;
    }
    // Every interior node must reach a prescribed pressure.
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in &ends {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut reached = vec![false; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| !known[i].is_nan()).collect();
    queue.iter().for_each(|&i| reached[i] = true);
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !reached[j] {
                reached[j] = true;
                queue.push_back(j);
            }
        }
    }
    if let Some(i) = reached.iter().position(|r| !r) {
        return Err(Error::SingularSystem(format!(
            "node {} is not connected to any boundary node",
            graph.nodes[i].id
        )));
    }

    let interior: Vec<usize> = (0..n).filter(|&i| known[i].is_nan()).collect();
    let mut slot = vec![usize::MAX; n];
    for (k, &i) in interior.iter().enumerate() {
        slot[i] = k;
    }
    let mut matrix = SymmetricBuilder::new(interior.len());
    let mut rhs = vec![0.0; interior.len()];
    for (&(a, b), &g) in ends.iter().zip(&conductance) {
        if a == b {
            continue;
        }
        match (slot[a] != usize::MAX, slot[b] != usize::MAX) {
            (true, true) => {
                matrix.add(slot[a], slot[a], g);
                matrix.add(slot[b], slot[b], g);
                matrix.add(slot[a], slot[b], -g);
            }
            (true, false) => {
                matrix.add(slot[a], slot[a], g);
                rhs[slot[a]] += g * known[b];
            }
            (false, true) => {
                matrix.add(slot[b], slot[b], g);
                rhs[slot[b]] += g * known[a];
            }
            (false, false) => {}
        }
    }
    Ok(PressureSystem {
        interior,
        matrix,
        rhs,
        known,
        conductance,
    })
}

/// Solves for interior pressures and edge flows.
pub fn solve_flow(graph: &VascularGraph, bc: &BoundaryConditions) -> Result<FlowState> {
    let system = assemble(graph, bc)?;
    let mut pressure = system.known.clone();
    if !system.interior.is_empty() {
        let x = system.matrix.factor()?.solve(&system.rhs);
        for (k, &i) in system.interior.iter().enumerate() {
            pressure[i] = x[k];
        }
    }
    Ok(state_from_pressures(graph, &pressure, &system.conductance))
}

/// Flow state implied by per-node pressures (in `graph.nodes` order).
pub fn state_from_pressures(
    graph: &VascularGraph,
    pressure: &[f64],
    conductance: &[f64],
) -> FlowState {
    let index = graph.node_index();
    let node_pressure = graph
        .nodes
        .iter()
        .zip(pressure)
        .map(|(n, &p)| (n.id, p))
        .collect();
    let edge_flow = graph
        .edges
        .iter()
        .zip(conductance)
        .map(|(e, &g)| (e.id, g * (pressure[index[&e.u]] - pressure[index[&e.v]])))
        .collect();
    FlowState {
        node_pressure,
        edge_flow,
    }
}

/// Net inflow (inflow minus outflow) at each interior node.
pub fn conservation_residual(graph: &VascularGraph, state: &FlowState) -> BTreeMap<NodeId, f64> {
    let mut out: BTreeMap<NodeId, f64> = graph
        .nodes
        .iter()
        .filter(|n| !graph.is_boundary(n.id))
        .map(|n| (n.id, 0.0))
        .collect();
    for e in &graph.edges {
        let q = state.edge_flow.get(&e.id).copied().unwrap_or(0.0);
        if e.u == e.v {
            continue;
        }
        if let Some(r) = out.get_mut(&e.v) {
            *r += q;
        }
        if let Some(r) = out.get_mut(&e.u) {
            *r -= q;
        }
    }
    out
}

/// Summary numbers printed next to a solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub max_residual: f64,
    pub max_abs_flow: f64,
    pub total_inflow: f64,
    pub total_outflow: f64,
}

pub fn diagnostics(graph: &VascularGraph, state: &FlowState) -> SolveDiagnostics {
    let residual = conservation_residual(graph, state);
    let net_out = |id: NodeId| -> f64 {
        graph
            .edges
            .iter()
            .map(|e| {
                let q = state.edge_flow[&e.id];
                if e.u == id && e.v != id {
                    q
                } else if e.v == id && e.u != id {
                    -q
                } else {
                    0.0
                }
            })
            .sum()
    };
    SolveDiagnostics {
        max_residual: residual.values().map(|r| r.abs()).fold(0.0, f64::max),
        max_abs_flow: state.max_abs_flow(),
        total_inflow: graph.inlet_ids.iter().map(|&i| net_out(i)).sum(),
        total_outflow: -graph.outlet_ids.iter().map(|&i| net_out(i)).sum::<f64>(),
    }
}
