//! Synthetic Y-bifurcation intensity volume with known centerline and radii.
//!
//! Three cylindrical limbs meet at a spherical junction. Each limb ends in a
//! rounded cap inside the grid, so every end has a well-defined radius.
//! Gaussian noise is added everywhere and a fraction of background voxels
//! is set to full intensity as isolated speckle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::PortableRng;
use crate::volume::VoxelGrid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct YPhantomParams {
    pub size: usize,
    pub spacing: f64,
    /// Trunk and daughter radii in voxels.
    pub trunk_radius: f64,
    pub branch_radius: f64,
    /// Junction sphere radius as a multiple of the trunk radius.
    pub junction_scale: f64,
    pub noise_sigma: f64,
    pub speckle_fraction: f64,
    pub seed: u64,
}

impl Default for YPhantomParams {
    fn default() -> Self {
        Self {
            size: 64,
            spacing: 0.5,
            trunk_radius: 6.0,
            branch_radius: 5.0,
            junction_scale: 1.2,
            noise_sigma: 0.15,
            speckle_fraction: 0.002,
            seed: 0,
        }
    }
}

/// Ground-truth point (mm) and radius (mm).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthPoint {
    pub pos: [f64; 3],
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YPhantomTruth {
    pub junction: TruthPoint,
    pub endpoints: Vec<TruthPoint>,
}

fn segment_distance(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let len2 = ab.iter().map(|v| v * v).sum::<f64>();
    let t = (ap.iter().zip(&ab).map(|(x, y)| x * y).sum::<f64>() / len2).clamp(0.0, 1.0);
    let d: f64 = (0..3).map(|i| (ap[i] - t * ab[i]).powi(2)).sum();
    d.sqrt()
}

pub fn y_phantom(params: &YPhantomParams) -> Result<(VoxelGrid, YPhantomTruth)> {
    let n = params.size;
    if n < 24 {
        return Err(Error::InvalidParameter(format!(
            "phantom size {n} is too small"
        )));
    }
    if !(params.trunk_radius > 0.0 && params.branch_radius > 0.0 && params.junction_scale >= 1.0) {
        return Err(Error::InvalidParameter(
            "phantom radii must be positive".into(),
        ));
    }
    let c = (n - 1) as f64 / 2.0;
    let last = (n - 1) as f64;
    // Voxel coordinates. Limbs end in rounded caps clear of the grid faces.
    let m = params.trunk_radius.max(params.branch_radius) + 2.0;
    let junction = [c, 0.42 * last, c];
    let ends = [
        [c, m, c],
        [0.25 * last, last - m, c],
        [0.75 * last, last - m, c],
    ];
    let radii = [
        params.trunk_radius,
        params.branch_radius,
        params.branch_radius,
    ];
    let bulb = params.junction_scale * params.trunk_radius;

    let mut rng = PortableRng::new(params.seed);
    let mut data = vec![0.0; n * n * n];
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let p = [x as f64, y as f64, z as f64];
                let dj = (0..3)
                    .map(|i| (p[i] - junction[i]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let inside = dj <= bulb
                    || ends
                        .iter()
                        .zip(&radii)
                        .any(|(e, &r)| segment_distance(p, junction, *e) <= r);
                let mut v = if inside { 1.0 } else { 0.0 };
                if !inside && rng.unit() < params.speckle_fraction {
                    v = 1.0;
                }
                data[x + n * (y + n * z)] = v + params.noise_sigma * rng.normal();
            }
        }
    }
    let h = params.spacing;
    let mm = |p: [f64; 3]| [p[0] * h, p[1] * h, p[2] * h];
    let truth = YPhantomTruth {
        junction: TruthPoint {
            pos: mm(junction),
            radius: bulb * h,
        },
        endpoints: ends
            .iter()
            .zip(&radii)
            .map(|(e, &r)| TruthPoint {
                pos: mm(*e),
                radius: r * h,
            })
            .collect(),
    };
    Ok((VoxelGrid::new([n; 3], [h; 3], data)?, truth))
}
