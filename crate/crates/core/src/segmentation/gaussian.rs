use crate::error::{Error, Result};
use crate::volume::VoxelGrid;

/// Kernel support is truncated at four standard deviations.
const TRUNCATE: f64 = 4.0;

/// Normalized 1D Gaussian taps, index 0 is offset `-radius`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let radius = (TRUNCATE * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    Ok(taps)
}

/// Separable Gaussian blur with edge replication at the borders.
///
/// `sigma` is in voxels and applied identically along each axis.
pub fn gaussian_smooth(grid: &VoxelGrid, sigma: f64) -> Result<VoxelGrid> {
    let kernel = gaussian_kernel(sigma)?;
    let mut data = grid.data.clone();
    let mut line = Vec::new();
    for axis in 0..3 {
        convolve_axis(&mut data, grid.dims(), axis, &kernel, &mut line);
    }
    Ok(VoxelGrid {
        geometry: grid.geometry,
        data,
    })
}

fn convolve_axis(
    data: &mut [f64],
    dims: [usize; 3],
    axis: usize,
    kernel: &[f64],
    line: &mut Vec<f64>,
) {
    let n = dims[axis];
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let radius = (kernel.len() / 2) as isize;
    let (outer_a, outer_b) = match axis {
        0 => (dims[1], dims[2]),
        1 => (dims[0], dims[2]),
        _ => (dims[0], dims[1]),
    };
    for b in 0..outer_b {
        for a in 0..outer_a {
            let base = match axis {
                0 => dims[0] * (a + dims[1] * b),
                1 => a + dims[0] * dims[1] * b,
                _ => a + dims[0] * b,
            };
            line.clear();
            line.extend((0..n).map(|i| data[base + i * stride]));
            for i in 0..n {
                let mut acc = 0.0;
                for (k, w) in kernel.iter().enumerate() {
                    let j = (i as isize + k as isize - radius).clamp(0, n as isize - 1) as usize;
                    acc += w * line[j];
                }
                data[base + i * stride] = acc;
            }
        }
    }
}
