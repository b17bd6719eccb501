//! Dense 3D voxel containers shared by segmentation and graph extraction.
//!
//! Voxels are stored with x varying fastest: `index = x + nx * (y + ny * z)`,
//! which matches the NIfTI on-disk order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid dimensions plus physical voxel size in mm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "dims must be positive, got {dims:?}"
            )));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        Ok(Self { dims, spacing })
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    /// Voxel center in mm (origin at voxel (0,0,0)).
    pub fn position(&self, index: usize) -> [f64; 3] {
        let c = self.coords(index);
        [
            c[0] as f64 * self.spacing[0],
            c[1] as f64 * self.spacing[1],
            c[2] as f64 * self.spacing[2],
        ]
    }

    /// Index of `(x,y,z) + offset` if it lies inside the grid.
    #[inline]
    pub fn offset(&self, coords: [usize; 3], d: [isize; 3]) -> Option<usize> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let v = coords[a] as isize + d[a];
            if v < 0 || v >= self.dims[a] as isize {
                return None;
            }
            out[a] = v as usize;
        }
        Some(self.index(out[0], out[1], out[2]))
    }

    /// In-bounds 26-neighbors of a voxel.
    pub fn neighbors26(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let c = self.coords(index);
        OFFSETS_26.iter().filter_map(move |&d| self.offset(c, d))
    }
}

/// The 26 non-zero offsets of a 3x3x3 cube, in z-major, x-fastest order.
pub const OFFSETS_26: [[isize; 3]; 26] = {
    let mut out = [[0isize; 3]; 26];
    let mut n = 0;
    let mut z = -1;
    while z <= 1 {
        let mut y = -1;
        while y <= 1 {
            let mut x = -1;
            while x <= 1 {
                if !(x == 0 && y == 0 && z == 0) {
                    out[n] = [x, y, z];
                    n += 1;
                }
                x += 1;
            }
            y += 1;
        }
        z += 1;
    }
    out
};

/// Scalar intensity volume.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    pub geometry: Geometry,
    pub data: Vec<f64>,
}

impl VoxelGrid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<f64>) -> Result<Self> {
        let geometry = Geometry::new(dims, spacing)?;
        if data.len() != geometry.len() {
            return Err(Error::InvalidParameter(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Self { geometry, data })
    }

    pub fn filled(dims: [usize; 3], spacing: [f64; 3], value: f64) -> Result<Self> {
        let geometry = Geometry::new(dims, spacing)?;
        Ok(Self {
            data: vec![value; geometry.len()],
            geometry,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.geometry.spacing
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.geometry.index(x, y, z)]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Binary vessel mask with per-voxel cluster labels.
///
/// `labels[i] == 0` is background; any positive value is foreground and
/// names the cluster the voxel belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct VesselMask {
    pub geometry: Geometry,
    pub labels: Vec<u32>,
}

impl VesselMask {
    pub fn empty(geometry: Geometry) -> Self {
        Self {
            labels: vec![0; geometry.len()],
            geometry,
        }
    }

    pub fn from_labels(geometry: Geometry, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != geometry.len() {
            return Err(Error::InvalidParameter(format!(
                "label length {} does not match dims {:?}",
                labels.len(),
                geometry.dims
            )));
        }
        Ok(Self { geometry, labels })
    }

    #[inline]
    pub fn is_set(&self, index: usize) -> bool {
        self.labels[index] != 0
    }

    pub fn foreground(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != 0)
            .map(|(i, _)| i)
    }

    pub fn count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    /// Number of distinct positive labels.
    pub fn cluster_count(&self) -> usize {
        let mut seen: Vec<u32> = self.labels.iter().copied().filter(|&l| l != 0).collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    /// Number of 26-connected foreground voxels around `index`.
    pub fn neighbor_count(&self, index: usize) -> usize {
        self.geometry
            .neighbors26(index)
            .filter(|&n| self.is_set(n))
            .count()
    }
}
