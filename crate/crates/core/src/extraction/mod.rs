//! Vessel mask to vascular graph: thinning, distance transform, tracing,
//! spur pruning, boundary placement.

mod boundary;
mod build;
mod distance;
mod skeleton;

pub use boundary::{assign_boundary_nodes, BoundaryRule};
pub use build::{build_graph, classify_voxels, prune_spurs, VoxelClass};
pub use distance::distance_field;
pub use skeleton::skeletonize;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::VascularGraph;
use crate::volume::VesselMask;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractParams {
    /// Terminal branches shorter than this many junction radii are removed.
    pub spur_factor: f64,
    pub boundary: BoundaryRule,
}

impl Default for ExtractParams {
    fn default() -> Self {
        Self {
            spur_factor: 1.5,
            boundary: BoundaryRule::default(),
        }
    }
}

/// Full extraction chain on a cleaned vessel mask.
pub fn extract_graph(mask: &VesselMask, params: &ExtractParams) -> Result<VascularGraph> {
    let field = distance_field(mask);
    let skeleton = skeletonize(mask);
    let graph = build_graph(&skeleton, &field)?;
    let graph = prune_spurs(&graph, params.spur_factor)?;
    assign_boundary_nodes(&graph, &params.boundary)
}
