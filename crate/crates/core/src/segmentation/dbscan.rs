use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::volume::VesselMask;

const UNVISITED: u32 = 0;
const NOISE: u32 = u32::MAX;

/// Density-based filtering of foreground voxels.
///
/// DBSCAN runs over voxel centers in mm. A point's neighborhood includes the
/// point itself, so `min_samples = 1` keeps everything. Noise and clusters
/// with fewer than `min_cluster_size` voxels are cleared; survivors are
/// relabeled `1..=k` in scan order of their first voxel.
pub fn dbscan_filter(
    mask: &VesselMask,
    eps: f64,
    min_samples: usize,
    min_cluster_size: usize,
) -> Result<VesselMask> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "eps must be positive, got {eps}"
        )));
    }
    if min_samples == 0 || min_cluster_size == 0 {
        return Err(Error::InvalidParameter(
            "min_samples and min_cluster_size must be positive".into(),
        ));
    }
    let geom = mask.geometry;
    let offsets = neighborhood_offsets(geom.spacing, eps);
    let region = |i: usize, out: &mut Vec<usize>| {
        out.clear();
        let c = geom.coords(i);
        for &d in &offsets {
            if let Some(n) = geom.offset(c, d) {
                if mask.is_set(n) {
                    out.push(n);
                }
            }
        }
    };

    let mut state = vec![UNVISITED; geom.len()];
    let mut sizes: Vec<usize> = vec![0];
    let mut queue = VecDeque::new();
    let mut nbrs = Vec::new();
    for p in mask.foreground() {
        if state[p] != UNVISITED {
            continue;
        }
        region(p, &mut nbrs);
        if nbrs.len() < min_samples {
            state[p] = NOISE;
            continue;
        }
        let cluster = sizes.len() as u32;
        sizes.push(0);
        state[p] = cluster;
        queue.extend(nbrs.iter().copied());
        while let Some(q) = queue.pop_front() {
            match state[q] {
                NOISE => state[q] = cluster,
                UNVISITED => {
                    state[q] = cluster;
                    region(q, &mut nbrs);
                    if nbrs.len() >= min_samples {
                        queue.extend(
                            nbrs.iter()
                                .copied()
                                .filter(|&n| state[n] == UNVISITED || state[n] == NOISE),
                        );
                    }
                }
                _ => {}
            }
        }
    }

    for &s in &state {
        if s != UNVISITED && s != NOISE {
            sizes[s as usize] += 1;
        }
    }
    let mut relabel = vec![0u32; sizes.len()];
    let mut out = VesselMask::empty(geom);
    let mut next = 1;
    for (i, &s) in state.iter().enumerate() {
        if s == UNVISITED || s == NOISE || sizes[s as usize] < min_cluster_size {
            continue;
        }
        if relabel[s as usize] == 0 {
            relabel[s as usize] = next;
            next += 1;
        }
        out.labels[i] = relabel[s as usize];
    }
    Ok(out)
}

/// All integer offsets (including zero) whose physical length is within eps.
fn neighborhood_offsets(spacing: [f64; 3], eps: f64) -> Vec<[isize; 3]> {
    let reach: Vec<isize> = spacing.iter().map(|s| (eps / s).floor() as isize).collect();
    let mut out = Vec::new();
    for dz in -reach[2]..=reach[2] {
        for dy in -reach[1]..=reach[1] {
            for dx in -reach[0]..=reach[0] {
                let d2 = (dx as f64 * spacing[0]).powi(2)
                    + (dy as f64 * spacing[1]).powi(2)
                    + (dz as f64 * spacing[2]).powi(2);
                if d2 <= eps * eps {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;

    fn block_mask(dims: [usize; 3], spacing: [f64; 3], lo: usize, hi: usize) -> VesselMask {
        let geom = Geometry::new(dims, spacing).unwrap();
        let mut m = VesselMask::empty(geom);
        for z in lo..hi {
            for y in lo..hi {
                for x in lo..hi {
                    m.labels[geom.index(x, y, z)] = 1;
                }
            }
        }
        m
    }

    /// Textbook O(n^2) DBSCAN over explicit points; returns the kept set.
    fn brute_dbscan(points: &[[f64; 3]], eps: f64, min_samples: usize) -> Vec<Option<usize>> {
        let n = points.len();
        let dist = |a: &[f64; 3], b: &[f64; 3]| {
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
        };
        let nb: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| dist(&points[i], &points[j]) <= eps)
                    .collect()
            })
            .collect();
        let core: Vec<bool> = nb.iter().map(|v| v.len() >= min_samples).collect();
        let mut label = vec![None; n];
        let mut c = 0;
        for i in 0..n {
            if !core[i] || label[i].is_some() {
                continue;
            }
            let mut stack = vec![i];
            label[i] = Some(c);
            while let Some(p) = stack.pop() {
                if !core[p] {
                    continue;
                }
                for &q in &nb[p] {
                    if label[q].is_none() {
                        label[q] = Some(c);
                        stack.push(q);
                    }
                }
            }
            c += 1;
        }
        label
    }

    #[test]
    fn solid_block_is_one_cluster() {
        let m = block_mask([9, 9, 9], [1.0; 3], 2, 7);
        let out = dbscan_filter(&m, 2.0, 4, 10).unwrap();
        assert_eq!(out.count(), 125);
        assert_eq!(out.cluster_count(), 1);

        let pts: Vec<[f64; 3]> = m.foreground().map(|i| m.geometry.position(i)).collect();
        let brute = brute_dbscan(&pts, 2.0, 4);
        assert!(brute.iter().all(|l| *l == Some(0)));
    }

    #[test]
    fn isolated_voxel_removed() {
        let mut m = block_mask([12, 12, 12], [1.0; 3], 1, 6);
        let iso = m.geometry.index(10, 10, 10);
        m.labels[iso] = 1;
        let out = dbscan_filter(&m, 2.0, 4, 10).unwrap();
        assert!(!out.is_set(iso));
        assert_eq!(out.count(), 125);
    }

    #[test]
    fn empty_mask_stays_empty() {
        let geom = Geometry::new([4, 4, 4], [1.0; 3]).unwrap();
        let out = dbscan_filter(&VesselMask::empty(geom), 1.8, 4, 50).unwrap();
        assert_eq!(out.count(), 0);
    }

    #[test]
    fn small_cluster_dropped_and_labels_compact() {
        let mut m = block_mask([20, 20, 20], [1.0; 3], 0, 5);
        // 2x2x2 cube far away: dense but below min_cluster_size.
        for z in 15..17 {
            for y in 15..17 {
                for x in 15..17 {
                    let i = m.geometry.index(x, y, z);
                    m.labels[i] = 1;
                }
            }
        }
        let out = dbscan_filter(&m, 1.8, 4, 10).unwrap();
        assert_eq!(out.count(), 125);
        assert!(out.foreground().all(|i| out.labels[i] == 1));
    }

    #[test]
    fn anisotropic_spacing_uses_physical_distance() {
        // Two slabs one voxel apart in z; with 3 mm z-spacing they separate.
        let geom = Geometry::new([6, 6, 3], [1.0, 1.0, 3.0]).unwrap();
        let mut m = VesselMask::empty(geom);
        for y in 0..6 {
            for x in 0..6 {
                m.labels[geom.index(x, y, 0)] = 1;
                m.labels[geom.index(x, y, 1)] = 1;
            }
        }
        let out = dbscan_filter(&m, 1.8, 4, 10).unwrap();
        assert_eq!(out.cluster_count(), 2);

        let pts: Vec<[f64; 3]> = m.foreground().map(|i| geom.position(i)).collect();
        let brute = brute_dbscan(&pts, 1.8, 4);
        let ids: std::collections::HashSet<_> = brute.iter().flatten().collect();
        assert_eq!(ids.len(), 2);
    }

    #[test]
    fn matches_brute_force_on_random_speckle() {
        let geom = Geometry::new([10, 10, 10], [1.0, 1.0, 1.5]).unwrap();
        let mut rng = crate::rng::PortableRng::new(3);
        let mut m = VesselMask::empty(geom);
        for i in 0..geom.len() {
            if rng.unit() < 0.3 {
                m.labels[i] = 1;
            }
        }
        let out = dbscan_filter(&m, 1.6, 5, 1).unwrap();
        let idx: Vec<usize> = m.foreground().collect();
        let pts: Vec<[f64; 3]> = idx.iter().map(|&i| geom.position(i)).collect();
        let brute = brute_dbscan(&pts, 1.6, 5);
        for (k, &i) in idx.iter().enumerate() {
            assert_eq!(out.is_set(i), brute[k].is_some());
        }
    }
}
