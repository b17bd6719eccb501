//! Vascular graph: the exchange format between extraction, simulation,
//! dataset generation and the surrogate.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type EdgeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    /// Any non-terminal node (junctions, and degree-2 nodes of synthetic graphs).
    Branch,
    /// Terminal node; hosts inlets and outlets.
    Endpoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    /// Position in mm.
    pub pos: [f64; 3],
    /// Radius in mm.
    pub radius: f64,
    pub kind: NodeKind,
    #[serde(rename = "cluster")]
    pub cluster_id: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub u: NodeId,
    pub v: NodeId,
    /// Centerline length in mm.
    pub length: f64,
    /// Unit vector from `u` toward `v`.
    pub axis: [f64; 3],
    /// Traced centerline points in mm, `u` first. Not serialized.
    #[serde(skip)]
    pub path: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VascularGraph {
    pub directed: bool,
    pub multigraph: bool,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    #[serde(rename = "inlets")]
    pub inlet_ids: Vec<NodeId>,
    #[serde(rename = "outlets")]
    pub outlet_ids: Vec<NodeId>,
}

pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Unit vector from `a` to `b`, or `None` for coincident points.
pub fn unit_axis(a: [f64; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let d = distance(a, b);
    if d <= 1e-12 {
        return None;
    }
    Some([(b[0] - a[0]) / d, (b[1] - a[1]) / d, (b[2] - a[2]) / d])
}

impl VascularGraph {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Self {
        Self {
            directed: true,
            multigraph: false,
            nodes,
            edges,
            inlet_ids: Vec::new(),
            outlet_ids: Vec::new(),
        }
    }

    /// Map from node ID to position in `nodes`.
    pub fn node_index(&self) -> HashMap<NodeId, usize> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id, i))
            .collect()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Edge endpoints as node positions in `nodes`.
    pub fn edge_endpoints(&self) -> Result<Vec<(usize, usize)>> {
        let index = self.node_index();
        self.edges
            .iter()
            .map(|e| match (index.get(&e.u), index.get(&e.v)) {
                (Some(&a), Some(&b)) => Ok((a, b)),
                _ => Err(Error::DegenerateGraph(format!(
                    "edge {} references a missing node ({} -> {})",
                    e.id, e.u, e.v
                ))),
            })
            .collect()
    }

    pub fn degrees(&self) -> Result<Vec<usize>> {
        let mut deg = vec![0; self.nodes.len()];
        for (a, b) in self.edge_endpoints()? {
            deg[a] += 1;
            deg[b] += 1;
        }
        Ok(deg)
    }

    pub fn is_boundary(&self, id: NodeId) -> bool {
        self.inlet_ids.contains(&id) || self.outlet_ids.contains(&id)
    }

    /// Connected component label per node position.
    pub fn components(&self) -> Result<(usize, Vec<usize>)> {
        let n = self.nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (a, b) in self.edge_endpoints()? {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        let mut comp = vec![0; n];
        for i in 0..n {
            let r = find(&mut parent, i);
            if label[r] == usize::MAX {
                label[r] = count;
                count += 1;
            }
            comp[i] = label[r];
        }
        Ok((count, comp))
    }

    /// Independent cycle count |E| - |V| + C.
    pub fn cycle_rank(&self) -> Result<usize> {
        let (c, _) = self.components()?;
        Ok(self.edges.len() + c - self.nodes.len())
    }

    /// Checks the structural invariants of the exchange format.
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id) {
                return Err(Error::DegenerateGraph(format!(
                    "duplicate node id {}",
                    n.id
                )));
            }
            if !(n.radius > 0.0 && n.radius.is_finite()) {
                return Err(Error::InvalidGeometry(format!(
                    "node {} radius {}",
                    n.id, n.radius
                )));
            }
        }
        let mut eids = BTreeSet::new();
        let mut pairs = BTreeSet::new();
        let index = self.node_index();
        for (e, (a, b)) in self.edges.iter().zip(self.edge_endpoints()?) {
            if !eids.insert(e.id) {
                return Err(Error::DegenerateGraph(format!(
                    "duplicate edge id {}",
                    e.id
                )));
            }
            if !(e.length > 0.0 && e.length.is_finite()) {
                return Err(Error::InvalidGeometry(format!(
                    "edge {} length {}",
                    e.id, e.length
                )));
            }
            let norm = (e.axis.iter().map(|x| x * x).sum::<f64>()).sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidGeometry(format!(
                    "edge {} axis norm {norm}",
                    e.id
                )));
            }
            let chord = distance(self.nodes[a].pos, self.nodes[b].pos);
            if e.length + 1e-9 < chord {
                return Err(Error::InvalidGeometry(format!(
                    "edge {} length {} shorter than chord {chord}",
                    e.id, e.length
                )));
            }
            if self.nodes[a].cluster_id != self.nodes[b].cluster_id {
                return Err(Error::DegenerateGraph(format!(
                    "edge {} crosses clusters",
                    e.id
                )));
            }
            if !self.multigraph && !pairs.insert((a.min(b), a.max(b))) {
                return Err(Error::DegenerateGraph(format!(
                    "parallel edge {} in a simple graph",
                    e.id
                )));
            }
        }
        for id in self.inlet_ids.iter().chain(&self.outlet_ids) {
            if !index.contains_key(id) {
                return Err(Error::DegenerateGraph(format!(
                    "boundary node {id} does not exist"
                )));
            }
        }
        if self.inlet_ids.iter().any(|i| self.outlet_ids.contains(i)) {
            return Err(Error::DegenerateGraph(
                "a node is both inlet and outlet".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: VascularGraph = serde_json::from_str(text)?;
        g.validate()?;
        Ok(g)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
