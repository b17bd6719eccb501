//! Voxel intensity grid to cleaned binary vessel mask.
//!
//! The pipeline is Gaussian smoothing, hysteresis thresholding with
//! 26-connectivity, then DBSCAN over foreground voxel centers in physical
//! coordinates to drop speckle and small disconnected fragments.

mod dbscan;
mod gaussian;
mod hysteresis;

pub use dbscan::dbscan_filter;
pub use gaussian::{gaussian_kernel, gaussian_smooth};
pub use hysteresis::hysteresis_threshold;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::volume::{VesselMask, VoxelGrid};

/// Tunables for the full segmentation chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentParams {
    /// Gaussian sigma in voxels.
    pub sigma: f64,
    pub low: f64,
    pub high: f64,
    /// DBSCAN radius in mm; `None` means 1.8 x the largest voxel spacing.
    pub eps: Option<f64>,
    pub min_samples: usize,
    pub min_cluster_size: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            low: 0.3,
            high: 0.6,
            eps: None,
            min_samples: 4,
            min_cluster_size: 50,
        }
    }
}

/// Smoothing, thresholding and density filtering in sequence.
pub fn segment(grid: &VoxelGrid, params: &SegmentParams) -> Result<VesselMask> {
    let smoothed = gaussian_smooth(grid, params.sigma)?;
    let mask = hysteresis_threshold(&smoothed, params.low, params.high)?;
    let max_spacing = grid.spacing().iter().cloned().fold(0.0, f64::max);
    let eps = params.eps.unwrap_or(1.8 * max_spacing);
    dbscan_filter(&mask, eps, params.min_samples, params.min_cluster_size)
}
