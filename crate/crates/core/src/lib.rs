//! Vascular graph extraction, Poiseuille network simulation, and a
//! message-passing surrogate for nodal pressure and segment flow.
//!
//! The crate is organized along the processing chain:
//!
//! - [`segmentation`]: voxel intensities to a cleaned vessel mask
//! - [`extraction`]: mask to centerline graph with radii
//! - [`flow`]: ground-truth steady flow on a graph
//! - [`dataset`]: synthetic networks, augmentation, network-level folds
//! - [`gnn`]: encoder/processor/decoder surrogate with hand-written autodiff
//! - [`eval`]: accuracy and correlation metrics, cross-validation

// Index loops mirror the math in the numeric kernels. `!(x > 0.0)` is kept
// on purpose so NaN fails the check.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod eval;
pub mod extraction;
pub mod flow;
pub mod gnn;
pub mod graph;
pub mod io;
pub mod phantom;
pub mod rng;
pub mod segmentation;
pub mod volume;

pub use error::{Error, Result};
pub use flow::{solve_flow, BoundaryConditions, FlowState};
pub use graph::{Edge, Node, NodeKind, VascularGraph};
pub use volume::{Geometry, VesselMask, VoxelGrid};
