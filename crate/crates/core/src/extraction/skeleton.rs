//! Topology-preserving 3D thinning to a one-voxel-wide curve skeleton.
//!
//! Border voxels are peeled in six directional sub-iterations. A voxel is
//! deleted only if it is simple for (26, 6) connectivity and is not a curve
//! end. Candidates collected in a
//! sub-iteration are re-checked sequentially before deletion, which keeps
//! the parallel sweep from disconnecting thin parts.

use crate::volume::VesselMask;

const CENTER: usize = 13;

/// Six-neighbor bit positions in the 27-bit neighborhood code.
const FACE_BITS: [usize; 6] = [4, 10, 12, 14, 16, 22];

/// Border directions in the order they are peeled: -z, +z, -y, +y, -x, +x.
const DIRECTIONS: [[isize; 3]; 6] = [
    [0, 0, -1],
    [0, 0, 1],
    [0, -1, 0],
    [0, 1, 0],
    [-1, 0, 0],
    [1, 0, 0],
];

#[inline]
fn bit(dx: isize, dy: isize, dz: isize) -> usize {
    ((dx + 1) + 3 * (dy + 1) + 9 * (dz + 1)) as usize
}

fn offset_of(b: usize) -> [isize; 3] {
    [
        (b % 3) as isize - 1,
        ((b / 3) % 3) as isize - 1,
        (b / 9) as isize - 1,
    ]
}

struct Adjacency {
    adj26: Vec<Vec<usize>>,
    adj6: Vec<Vec<usize>>,
    in_n18: [bool; 27],
}

impl Adjacency {
    fn new() -> Self {
        let mut adj26 = vec![Vec::new(); 27];
        let mut adj6 = vec![Vec::new(); 27];
        let mut in_n18 = [false; 27];
        for a in 0..27 {
            let oa = offset_of(a);
            in_n18[a] = a != CENTER && oa.iter().filter(|c| **c != 0).count() < 3;
            for b in 0..27 {
                if a == b {
                    continue;
                }
                let ob = offset_of(b);
                let d: Vec<isize> = (0..3).map(|k| (oa[k] - ob[k]).abs()).collect();
                if d.iter().all(|&x| x <= 1) {
                    adj26[a].push(b);
                    if d.iter().sum::<isize>() == 1 {
                        adj6[a].push(b);
                    }
                }
            }
        }
        Self {
            adj26,
            adj6,
            in_n18,
        }
    }

    /// Number of 26-components of the foreground in N26 minus the center.
    fn foreground_components(&self, code: u32) -> usize {
        let mut remaining = code & !(1 << CENTER);
        let mut count = 0;
        let mut stack = Vec::with_capacity(26);
        while remaining != 0 {
            let start = remaining.trailing_zeros() as usize;
            remaining &= !(1 << start);
            stack.push(start);
            while let Some(p) = stack.pop() {
                for &q in &self.adj26[p] {
                    if remaining & (1 << q) != 0 {
                        remaining &= !(1 << q);
                        stack.push(q);
                    }
                }
            }
            count += 1;
        }
        count
    }

    /// Number of 6-components of the background in N18 that touch a face
    /// neighbor of the center.
    fn background_components(&self, code: u32) -> usize {
        let mut bg: u32 = 0;
        for b in 0..27 {
            if self.in_n18[b] && code & (1 << b) == 0 {
                bg |= 1 << b;
            }
        }
        let mut count = 0;
        let mut stack = Vec::with_capacity(18);
        for &f in &FACE_BITS {
            if bg & (1 << f) == 0 {
                continue;
            }
            bg &= !(1 << f);
            stack.push(f);
            while let Some(p) = stack.pop() {
                for &q in &self.adj6[p] {
                    if bg & (1 << q) != 0 {
                        bg &= !(1 << q);
                        stack.push(q);
                    }
                }
            }
            count += 1;
        }
        count
    }

    fn is_simple(&self, code: u32) -> bool {
        self.foreground_components(code) == 1 && self.background_components(code) == 1
    }
}

/// A curve end has one neighbor, or is the tail of a staircase: a face
/// neighbor followed by one more face step. Without the second form such
/// lines are eaten from the end.
fn is_curve_end(code: u32) -> bool {
    let rest = code & !(1 << CENTER);
    match rest.count_ones() {
        0 | 1 => true,
        2 => {
            let a = offset_of(rest.trailing_zeros() as usize);
            let b = offset_of(31 - rest.leading_zeros() as usize);
            let l1 = |o: [isize; 3]| o.iter().map(|c| c.abs()).sum::<isize>();
            let step = l1([b[0] - a[0], b[1] - a[1], b[2] - a[2]]);
            step == 1 && (l1(a) == 1 || l1(b) == 1) && l1(a) + l1(b) == 3
        }
        _ => false,
    }
}

fn neighborhood(fg: &[bool], geom: &crate::volume::Geometry, index: usize) -> u32 {
    let c = geom.coords(index);
    let mut code = 0u32;
    for dz in -1..=1 {
        for dy in -1..=1 {
            for dx in -1..=1 {
                if let Some(n) = geom.offset(c, [dx, dy, dz]) {
                    if fg[n] {
                        code |= 1 << bit(dx, dy, dz);
                    }
                }
            }
        }
    }
    code
}

/// Reduces each foreground component to a curve skeleton. Surviving voxels
/// keep their cluster labels.
pub fn skeletonize(mask: &VesselMask) -> VesselMask {
    let geom = mask.geometry;
    let adjacency = Adjacency::new();
    let mut fg: Vec<bool> = mask.labels.iter().map(|&l| l != 0).collect();
    let mut active: Vec<usize> = mask.foreground().collect();
    let mut candidates = Vec::new();
    loop {
        let mut changed = false;
        for dir in DIRECTIONS {
            candidates.clear();
            for &p in &active {
                if !fg[p] {
                    continue;
                }
                let is_border = match geom.offset(geom.coords(p), dir) {
                    Some(n) => !fg[n],
                    None => true,
                };
                if !is_border {
                    continue;
                }
                let code = neighborhood(&fg, &geom, p);
                if is_curve_end(code) {
                    continue;
                }
                if adjacency.is_simple(code) {
                    candidates.push(p);
                }
            }
            for &p in &candidates {
                let code = neighborhood(&fg, &geom, p);
                if !is_curve_end(code) && adjacency.is_simple(code) {
                    fg[p] = false;
                    changed = true;
                }
            }
        }
        active.retain(|&p| fg[p]);
        if !changed {
            break;
        }
    }
    // Staircase tails can leave one-voxel prongs beside a line; drop them.
    let degree = |fg: &[bool], p: usize| geom.neighbors26(p).filter(|&n| fg[n]).count();
    let prongs: Vec<usize> = active
        .iter()
        .copied()
        .filter(|&p| {
            let mut nbrs = geom.neighbors26(p).filter(|&n| fg[n]);
            match (nbrs.next(), nbrs.next()) {
                (Some(q), None) => degree(&fg, q) >= 3,
                _ => false,
            }
        })
        .collect();
    for p in prongs {
        fg[p] = false;
    }
    let labels = mask
        .labels
        .iter()
        .zip(&fg)
        .map(|(&l, &keep)| if keep { l } else { 0 })
        .collect();
    VesselMask {
        geometry: geom,
        labels,
    }
}
