//! Synthetic vascular networks standing in for patient-derived graphs.
//!
//! A network is a bifurcating tree grown from a single inlet trunk. Child
//! radii follow Murray's law (`r_parent^3 = r_a^3 + r_b^3`), segment length
//! is proportional to radius with jitter, optional cross-connections between
//! junctions close loops, and optional stenoses insert a narrowed node in
//! the middle of a segment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{distance, unit_axis, Edge, Node, NodeKind, VascularGraph};
use crate::rng::PortableRng;

/// Segment length per unit radius.
const LENGTH_PER_RADIUS: f64 = 12.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Generations from the inlet to the leaves; a depth-2 tree is a single Y.
    pub depth: usize,
    pub loop_count: usize,
    pub stenosis_count: usize,
}

fn rotate_away(dir: [f64; 3], angle: f64, rng: &mut PortableRng) -> [f64; 3] {
    // Random unit vector orthogonal to dir.
    let helper = if dir[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let a = cross(dir, helper);
    let a = scale(a, 1.0 / norm(a));
    let b = cross(dir, a);
    let phi = rng.uniform(0.0, 2.0 * std::f64::consts::PI);
    let perp = add(scale(a, phi.cos()), scale(b, phi.sin()));
    let out = add(scale(dir, angle.cos()), scale(perp, angle.sin()));
    scale(out, 1.0 / norm(out))
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn straight_edge(id: usize, u: &Node, v: &Node, length: f64) -> Edge {
    Edge {
        id,
        u: u.id,
        v: v.id,
        length,
        axis: unit_axis(u.pos, v.pos).unwrap_or([0.0, 0.0, 1.0]),
        path: vec![u.pos, v.pos],
    }
}

/// Deterministic synthetic network for `seed`.
pub fn generate_network(seed: u64, spec: NetworkSpec) -> Result<VascularGraph> {
    if spec.depth < 2 {
        return Err(Error::InvalidParameter(format!(
            "depth must be >= 2, got {}",
            spec.depth
        )));
    }
    if spec.depth > 12 {
        return Err(Error::InvalidParameter(format!(
            "depth {} is too large",
            spec.depth
        )));
    }
    let mut rng = PortableRng::new(seed);
    let mut nodes: Vec<Node> = Vec::new();
    let mut edges: Vec<Edge> = Vec::new();
    let node = |id, pos, radius, kind| Node {
        id,
        pos,
        radius,
        kind,
        cluster_id: 1,
    };

    let r0 = rng.uniform(1.2, 2.2);
    let trunk_dir = rotate_away([0.0, 0.0, 1.0], rng.uniform(0.0, 0.3), &mut rng);
    let trunk_len = LENGTH_PER_RADIUS * r0 * rng.uniform(0.75, 1.25);
    nodes.push(node(0, [0.0; 3], r0, NodeKind::Endpoint));
    nodes.push(node(1, scale(trunk_dir, trunk_len), r0, NodeKind::Branch));
    edges.push(straight_edge(0, &nodes[0], &nodes[1], trunk_len));

    // (node index, incoming direction, generation)
    let mut frontier = vec![(1usize, trunk_dir, 1usize)];
    let mut junctions = vec![1usize];
    while let Some((parent, dir, level)) = frontier.pop() {
        let rp = nodes[parent].radius;
        let asym = rng.uniform(0.55, 1.0);
        let ra = rp / (1.0 + asym.powi(3)).cbrt();
        let rb = asym * ra;
        for r in [ra, rb] {
            let child_level = level + 1;
            let child_dir = rotate_away(dir, rng.uniform(0.45, 0.8), &mut rng);
            let length = LENGTH_PER_RADIUS * r * rng.uniform(0.75, 1.25);
            let pos = add(nodes[parent].pos, scale(child_dir, length));
            let kind = if child_level == spec.depth {
                NodeKind::Endpoint
            } else {
                NodeKind::Branch
            };
            let id = nodes.len();
            nodes.push(node(id, pos, r, kind));
            edges.push(straight_edge(
                edges.len(),
                &nodes[parent],
                &nodes[id],
                length,
            ));
            if kind == NodeKind::Branch {
                frontier.push((id, child_dir, child_level));
                junctions.push(id);
            }
        }
        frontier.sort_by_key(|f| std::cmp::Reverse(f.0));
    }

    // Stenoses: split a tree segment with a narrowed midpoint node.
    if spec.stenosis_count > edges.len() {
        return Err(Error::InvalidParameter(format!(
            "{} stenoses requested but the tree has {} segments",
            spec.stenosis_count,
            edges.len()
        )));
    }
    let mut candidates: Vec<usize> = (0..edges.len()).collect();
    rng.shuffle(&mut candidates);
    let mut stenosed = candidates[..spec.stenosis_count].to_vec();
    stenosed.sort_unstable();
    for k in stenosed {
        let (u, v, length) = (edges[k].u, edges[k].v, edges[k].length);
        let nominal = 0.5 * (nodes[u].radius + nodes[v].radius);
        let id = nodes.len();
        let mid = scale(add(nodes[u].pos, nodes[v].pos), 0.5);
        nodes.push(node(
            id,
            mid,
            nominal * rng.uniform(0.3, 0.7),
            NodeKind::Branch,
        ));
        edges[k] = straight_edge(k, &nodes[u], &nodes[id], 0.5 * length);
        let next = edges.len();
        edges.push(straight_edge(next, &nodes[id], &nodes[v], 0.5 * length));
    }

    // Loops: connect non-adjacent junction pairs.
    let adjacent = |a: usize, b: usize, edges: &[Edge]| {
        edges
            .iter()
            .any(|e| (e.u == a && e.v == b) || (e.u == b && e.v == a))
    };
    let mut pairs = Vec::new();
    for (x, &a) in junctions.iter().enumerate() {
        for &b in &junctions[x + 1..] {
            if !adjacent(a, b, &edges) {
                pairs.push((a, b));
            }
        }
    }
    if spec.loop_count > pairs.len() {
        return Err(Error::InvalidParameter(format!(
            "{} loops requested but only {} junction pairs can be joined at depth {}",
            spec.loop_count,
            pairs.len(),
            spec.depth
        )));
    }
    rng.shuffle(&mut pairs);
    let mut chosen = pairs[..spec.loop_count].to_vec();
    chosen.sort_unstable();
    for (a, b) in chosen {
        let chord = distance(nodes[a].pos, nodes[b].pos);
        let length = chord * rng.uniform(1.0, 1.3);
        let id = edges.len();
        edges.push(straight_edge(id, &nodes[a], &nodes[b], length));
    }

    let mut graph = VascularGraph::new(nodes, edges);
    graph.inlet_ids = vec![0];
    graph.outlet_ids = graph
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Endpoint && n.id != 0)
        .map(|n| n.id)
        .collect();
    graph.validate()?;
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(depth: usize, loops: usize, stenoses: usize) -> NetworkSpec {
        NetworkSpec {
            depth,
            loop_count: loops,
            stenosis_count: stenoses,
        }
    }

    #[test]
    fn depth_two_is_a_murray_y() {
        let g = generate_network(5, spec(2, 0, 0)).unwrap();
        assert_eq!(g.nodes.len(), 4);
        assert_eq!(g.edges.len(), 3);
        let r: Vec<f64> = g.nodes.iter().map(|n| n.radius).collect();
        assert!((r[1].powi(3) - r[2].powi(3) - r[3].powi(3)).abs() < 1e-9);
        assert_eq!(g.inlet_ids, vec![0]);
        assert_eq!(g.outlet_ids, vec![2, 3]);
    }

    #[test]
    fn murray_law_at_every_junction() {
        let g = generate_network(17, spec(6, 0, 0)).unwrap();
        assert_eq!(g.nodes.len(), 64);
        for n in g.nodes.iter().filter(|n| n.kind == NodeKind::Branch) {
            let kids: Vec<f64> = g
                .edges
                .iter()
                .filter(|e| e.u == n.id)
                .map(|e| g.nodes[e.v].radius.powi(3))
                .collect();
            assert_eq!(kids.len(), 2);
            assert!((n.radius.powi(3) - kids.iter().sum::<f64>()).abs() < 1e-9);
        }
    }

    #[test]
    fn same_seed_same_graph() {
        let a = generate_network(99, spec(5, 2, 2)).unwrap();
        let b = generate_network(99, spec(5, 2, 2)).unwrap();
        assert_eq!(a, b);
        let c = generate_network(100, spec(5, 2, 2)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn loops_set_cycle_rank() {
        let g = generate_network(3, spec(6, 2, 0)).unwrap();
        let (components, _) = g.components().unwrap();
        assert_eq!(components, 1);
        assert_eq!(g.edges.len() as isize - g.nodes.len() as isize + 1, 2);
        assert_eq!(g.cycle_rank().unwrap(), 2);
    }

    #[test]
    fn stenosis_narrows_segment() {
        let plain = generate_network(8, spec(3, 0, 0)).unwrap();
        let g = generate_network(8, spec(3, 0, 1)).unwrap();
        assert_eq!(g.nodes.len(), plain.nodes.len() + 1);
        assert_eq!(g.edges.len(), plain.edges.len() + 1);
        let s = g.nodes.last().unwrap();
        let nbrs: Vec<f64> = g
            .edges
            .iter()
            .filter_map(|e| {
                if e.u == s.id {
                    Some(g.nodes[e.v].radius)
                } else if e.v == s.id {
                    Some(g.nodes[e.u].radius)
                } else {
                    None
                }
            })
            .collect();
        let nominal = 0.5 * (nbrs[0] + nbrs[1]);
        assert!(s.radius >= 0.3 * nominal - 1e-12 && s.radius <= 0.7 * nominal + 1e-12);
    }

    #[test]
    fn infeasible_specs_rejected() {
        assert!(generate_network(1, spec(2, 1, 0)).is_err());
        assert!(generate_network(1, spec(1, 0, 0)).is_err());
        assert!(generate_network(1, spec(2, 0, 4)).is_err());
        assert!(generate_network(1, spec(3, 1, 0)).is_ok());
    }

    #[test]
    fn generated_graphs_solve() {
        for seed in 0..20 {
            let g = generate_network(seed, spec(3 + (seed as usize % 3), seed as usize % 3, 1))
                .unwrap();
            let bc = crate::flow::BoundaryConditions::uniform(&g, 15_000.0, 0.0, 3.5e-3);
            crate::flow::solve_flow(&g, &bc).unwrap();
        }
    }
}
