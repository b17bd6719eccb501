//! Exact Euclidean distance transform with anisotropic spacing.
//!
//! Separable lower-envelope method: one pass of 1D squared-distance
//! transforms per axis.

use crate::volume::VesselMask;

/// Distance in mm from each foreground voxel center to the nearest
/// background voxel center (0 on background). Space outside the grid is
/// not treated as background; a mask without any background yields
/// infinity everywhere.
pub fn distance_field(mask: &VesselMask) -> Vec<f64> {
    let geom = mask.geometry;
    let dims = geom.dims;
    let mut sq: Vec<f64> = mask
        .labels
        .iter()
        .map(|&l| if l == 0 { 0.0 } else { f64::INFINITY })
        .collect();

    let max_n = *dims.iter().max().unwrap();
    let mut f = vec![0.0; max_n];
    let mut out = vec![0.0; max_n];
    let mut v = vec![0usize; max_n];
    let mut z = vec![0.0; max_n + 1];
    for axis in 0..3 {
        let n = dims[axis];
        let stride = [1, dims[0], dims[0] * dims[1]][axis];
        let s = geom.spacing[axis];
        for start in 0..geom.len() {
            if !(start / stride).is_multiple_of(n) {
                continue;
            }
            for i in 0..n {
                f[i] = sq[start + i * stride];
            }
            lower_envelope(&f[..n], s, &mut out[..n], &mut v, &mut z);
            for i in 0..n {
                sq[start + i * stride] = out[i];
            }
        }
    }
    sq.into_iter().map(f64::sqrt).collect()
}

/// out[q] = min_p ((q - p) s)^2 + f[p]
fn lower_envelope(f: &[f64], s: f64, out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut count = 0usize;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let xq = q as f64 * s;
        loop {
            if count == 0 {
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                count = 1;
                break;
            }
            let p = v[count - 1];
            let xp = p as f64 * s;
            let sect = ((f[q] + xq * xq) - (f[p] + xp * xp)) / (2.0 * (xq - xp));
            if sect <= z[count - 1] {
                count -= 1;
            } else {
                v[count] = q;
                z[count] = sect;
                z[count + 1] = f64::INFINITY;
                count += 1;
                break;
            }
        }
    }
    if count == 0 {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for q in 0..n {
        let xq = q as f64 * s;
        while z[k + 1] < xq {
            k += 1;
        }
        let p = v[k];
        out[q] = (xq - p as f64 * s).powi(2) + f[p];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;

    #[test]
    fn matches_brute_force() {
        let geom = Geometry::new([9, 7, 6], [0.5, 0.8, 1.3]).unwrap();
        let mut rng = crate::rng::PortableRng::new(11);
        let mut m = VesselMask::empty(geom);
        for i in 0..geom.len() {
            if rng.unit() < 0.85 {
                m.labels[i] = 1;
            }
        }
        let d = distance_field(&m);
        let bg: Vec<[f64; 3]> = (0..geom.len())
            .filter(|&i| !m.is_set(i))
            .map(|i| geom.position(i))
            .collect();
        for i in 0..geom.len() {
            let p = geom.position(i);
            let brute = bg
                .iter()
                .map(|b| crate::graph::distance(p, *b))
                .fold(f64::INFINITY, f64::min);
            assert!(
                (d[i] - brute).abs() < 1e-12,
                "voxel {i}: {} vs {brute}",
                d[i]
            );
        }
    }

    #[test]
    fn ball_center_distance() {
        let geom = Geometry::new([15, 15, 15], [1.0; 3]).unwrap();
        let mut m = VesselMask::empty(geom);
        for i in 0..geom.len() {
            let p = geom.position(i);
            if crate::graph::distance(p, [7.0, 7.0, 7.0]) <= 5.0 {
                m.labels[i] = 1;
            }
        }
        let d = distance_field(&m);
        let c = d[geom.index(7, 7, 7)];
        assert!(c > 5.0 && c <= 6.0, "{c}");
    }

    #[test]
    fn all_foreground_is_infinite() {
        let geom = Geometry::new([3, 3, 3], [1.0; 3]).unwrap();
        let m = VesselMask::from_labels(geom, vec![1; 27]).unwrap();
        assert!(distance_field(&m).iter().all(|d| d.is_infinite()));
    }
}
