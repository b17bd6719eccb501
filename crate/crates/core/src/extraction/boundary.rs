use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeId, NodeKind, VascularGraph};

/// Inlet/outlet selection. Empty lists mean "use the default rule": the
/// widest endpoint is the inlet and every other endpoint is an outlet.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundaryRule {
    pub inlets: Vec<NodeId>,
    pub outlets: Vec<NodeId>,
}

pub fn assign_boundary_nodes(graph: &VascularGraph, rule: &BoundaryRule) -> Result<VascularGraph> {
    let mut g = graph.clone();
    for id in rule.inlets.iter().chain(&rule.outlets) {
        if g.node(*id).is_none() {
            return Err(Error::InvalidParameter(format!(
                "boundary node {id} does not exist"
            )));
        }
    }
    let endpoints: Vec<_> = g
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Endpoint)
        .collect();
    let needs_default = rule.inlets.is_empty() || rule.outlets.is_empty();
    if needs_default && endpoints.len() < 2 {
        return Err(Error::DegenerateGraph(format!(
            "need at least 2 endpoints to place boundaries, found {}",
            endpoints.len()
        )));
    }
    let inlets = if rule.inlets.is_empty() {
        // Widest endpoint; ties go to the lowest ID.
        let widest = endpoints
            .iter()
            .max_by(|a, b| a.radius.total_cmp(&b.radius).then(b.id.cmp(&a.id)))
            .unwrap();
        vec![widest.id]
    } else {
        rule.inlets.clone()
    };
    let outlets = if rule.outlets.is_empty() {
        endpoints
            .iter()
            .map(|n| n.id)
            .filter(|id| !inlets.contains(id))
            .collect()
    } else {
        rule.outlets.clone()
    };
    if outlets.is_empty() {
        return Err(Error::DegenerateGraph("no outlet nodes remain".into()));
    }
    if inlets.iter().any(|i| outlets.contains(i)) {
        return Err(Error::InvalidParameter(
            "a node cannot be both inlet and outlet".into(),
        ));
    }
    g.inlet_ids = inlets;
    g.outlet_ids = outlets;
    Ok(g)
}
