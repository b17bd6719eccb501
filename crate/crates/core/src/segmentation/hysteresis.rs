use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::volume::{VesselMask, VoxelGrid};

/// Two-level threshold: voxels at or above `high` seed a 26-connected flood
/// fill through voxels at or above `low`. All foreground gets label 1.
pub fn hysteresis_threshold(grid: &VoxelGrid, low: f64, high: f64) -> Result<VesselMask> {
    if low > high || low.is_nan() || high.is_nan() {
        return Err(Error::InvalidParameter(format!(
            "hysteresis requires low <= high, got low={low}, high={high}"
        )));
    }
    let geom = grid.geometry;
    let mut mask = VesselMask::empty(geom);
    let mut queue: VecDeque<usize> = VecDeque::new();
    for (i, &v) in grid.data.iter().enumerate() {
        if v >= high {
            mask.labels[i] = 1;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        for n in geom.neighbors26(i) {
            if mask.labels[n] == 0 && grid.data[n] >= low {
                mask.labels[n] = 1;
                queue.push_back(n);
            }
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(dims: [usize; 3], data: Vec<f64>) -> VoxelGrid {
        VoxelGrid::new(dims, [1.0; 3], data).unwrap()
    }

    #[test]
    fn all_above_high_is_all_foreground() {
        let g = grid([3, 3, 3], vec![5.0; 27]);
        assert_eq!(hysteresis_threshold(&g, 1.0, 2.0).unwrap().count(), 27);
    }

    #[test]
    fn all_below_low_is_empty() {
        let g = grid([3, 3, 3], vec![0.5; 27]);
        assert_eq!(hysteresis_threshold(&g, 1.0, 2.0).unwrap().count(), 0);
    }

    #[test]
    fn seed_grows_through_weak_neighborhood_only() {
        // 7^3 grid: one seed at the center, its 3x3x3 block weak, plus a weak
        // voxel far away that is not connected to any seed.
        let dims = [7, 7, 7];
        let mut g = grid(dims, vec![0.0; 343]);
        let geom = g.geometry;
        for z in 2..5 {
            for y in 2..5 {
                for x in 2..5 {
                    g.data[geom.index(x, y, z)] = 1.5;
                }
            }
        }
        g.data[geom.index(3, 3, 3)] = 2.0;
        g.data[geom.index(6, 6, 0)] = 1.5;
        let m = hysteresis_threshold(&g, 1.0, 2.0).unwrap();

        // Brute-force flood fill oracle.
        let mut expect = vec![false; 343];
        expect[geom.index(3, 3, 3)] = true;
        loop {
            let mut changed = false;
            for i in 0..343 {
                if expect[i] || g.data[i] < 1.0 {
                    continue;
                }
                let [x, y, z] = geom.coords(i);
                let near = (0..343).any(|j| {
                    let [a, b, c] = geom.coords(j);
                    expect[j]
                        && (a as isize - x as isize).abs() <= 1
                        && (b as isize - y as isize).abs() <= 1
                        && (c as isize - z as isize).abs() <= 1
                });
                if near {
                    expect[i] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        for i in 0..343 {
            assert_eq!(m.is_set(i), expect[i], "voxel {:?}", geom.coords(i));
        }
        assert_eq!(m.count(), 27);
    }

    #[test]
    fn inverted_thresholds_rejected() {
        let g = grid([2, 2, 2], vec![0.0; 8]);
        assert!(matches!(
            hysteresis_threshold(&g, 2.0, 1.0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn equal_thresholds_match_plain_threshold() {
        let data: Vec<f64> = (0..125).map(|i| ((i * 37) % 11) as f64).collect();
        let g = grid([5, 5, 5], data.clone());
        let m = hysteresis_threshold(&g, 6.0, 6.0).unwrap();
        for (i, v) in data.iter().enumerate() {
            assert_eq!(m.is_set(i), *v >= 6.0);
        }
    }
}
