use std::collections::{BTreeMap, HashMap, HashSet};

use log::warn;

use crate::error::{Error, Result};
use crate::graph::{distance, unit_axis, Edge, Node, NodeKind, VascularGraph};
use crate::volume::VesselMask;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VoxelClass {
    Endpoint,
    Path,
    Branch,
    Isolated,
}

/// Class of every skeleton voxel from its 26-neighbor count.
pub fn classify_voxels(skeleton: &VesselMask) -> BTreeMap<usize, VoxelClass> {
    skeleton
        .foreground()
        .map(|i| {
            let class = match skeleton.neighbor_count(i) {
                0 => VoxelClass::Isolated,
                1 => VoxelClass::Endpoint,
                2 => VoxelClass::Path,
                _ => VoxelClass::Branch,
            };
            (i, class)
        })
        .collect()
}

/// Traces a skeleton into a graph.
///
/// Endpoint voxels and 26-adjacent groups of branch voxels become nodes;
/// runs of path voxels between them become edges. A node's radius is the
/// largest distance-field value on the skeleton inside the node's own
/// inscribed ball. Thinning shifts junctions off the point where the largest
/// ball fits and pulls curve ends into rounded caps, so the value at the
/// node voxel itself runs low. For endpoints the search keeps widening while
/// it finds larger balls.
pub fn build_graph(skeleton: &VesselMask, distance_field: &[f64]) -> Result<VascularGraph> {
    let geom = skeleton.geometry;
    let classes = classify_voxels(skeleton);
    let isolated = classes
        .values()
        .filter(|c| **c == VoxelClass::Isolated)
        .count();
    if isolated > 0 {
        warn!("dropping {isolated} isolated skeleton voxel(s)");
    }

    // Group node voxels: endpoints alone, adjacent branch voxels together.
    let mut group_of: HashMap<usize, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (&i, &class) in &classes {
        if group_of.contains_key(&i) {
            continue;
        }
        match class {
            VoxelClass::Endpoint => {
                group_of.insert(i, groups.len());
                groups.push(vec![i]);
            }
            VoxelClass::Branch => {
                let g = groups.len();
                let mut members = vec![i];
                group_of.insert(i, g);
                let mut k = 0;
                while k < members.len() {
                    let p = members[k];
                    k += 1;
                    for n in geom.neighbors26(p) {
                        if classes.get(&n) == Some(&VoxelClass::Branch)
                            && !group_of.contains_key(&n)
                        {
                            group_of.insert(n, g);
                            members.push(n);
                        }
                    }
                }
                members.sort_unstable();
                groups.push(members);
            }
            _ => {}
        }
    }
    if groups.is_empty() {
        return Err(Error::DegenerateGraph(
            "skeleton has no branch or endpoint voxels".into(),
        ));
    }

    let mut nodes = Vec::with_capacity(groups.len());
    for (id, members) in groups.iter().enumerate() {
        let mut c = [0.0; 3];
        for &m in members {
            let p = geom.position(m);
            (0..3).for_each(|a| c[a] += p[a]);
        }
        (0..3).for_each(|a| c[a] /= members.len() as f64);
        let anchor = *members
            .iter()
            .min_by(|&&a, &&b| {
                distance(geom.position(a), c)
                    .partial_cmp(&distance(geom.position(b), c))
                    .unwrap()
            })
            .unwrap();
        let mut radius = distance_field[anchor];
        if radius.is_finite() {
            let label = skeleton.labels[anchor];
            radius = largest_ball_near(skeleton, distance_field, c, radius, label).max(radius);
            if classes[&members[0]] == VoxelClass::Endpoint {
                // A curve end can sit on a noise bump at the cap tip. Widen
                // the search two voxels at a time while larger balls turn up.
                let step = 2.0 * geom.spacing.iter().copied().fold(f64::INFINITY, f64::min);
                loop {
                    let wider =
                        largest_ball_near(skeleton, distance_field, c, radius + step, label);
                    if wider <= radius {
                        break;
                    }
                    radius = wider;
                }
            }
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "node at voxel {:?} has radius {radius}",
                geom.coords(anchor)
            )));
        }
        nodes.push(Node {
            id,
            pos: c,
            radius,
            kind: if classes[&members[0]] == VoxelClass::Endpoint {
                NodeKind::Endpoint
            } else {
                NodeKind::Branch
            },
            cluster_id: skeleton.labels[anchor],
        });
    }

    let mut edges: Vec<Edge> = Vec::new();
    let mut visited: HashSet<usize> = HashSet::new();
    let mut direct: HashSet<(usize, usize)> = HashSet::new();
    for (g, members) in groups.iter().enumerate() {
        for &a in members {
            let label = skeleton.labels[a];
            for b in geom.neighbors26(a) {
                if skeleton.labels[b] != label || !classes.contains_key(&b) {
                    continue;
                }
                if let Some(&h) = group_of.get(&b) {
                    if h != g && direct.insert((g.min(h), g.max(h))) {
                        push_edge(&mut edges, &nodes, g, h, vec![nodes[g].pos, nodes[h].pos]);
                    }
                    continue;
                }
                if classes[&b] != VoxelClass::Path || visited.contains(&b) {
                    continue;
                }
                // Walk the run of path voxels starting at b.
                visited.insert(b);
                let mut points = vec![nodes[g].pos, geom.position(b)];
                let mut run = 1;
                let (mut prev, mut cur) = (a, b);
                let mut end = None;
                loop {
                    let next = geom.neighbors26(cur).find(|&n| {
                        n != prev
                            && skeleton.labels[n] == label
                            && classes.contains_key(&n)
                            && (group_of.get(&n).is_some_and(|&h| h != g || n != a)
                                || !visited.contains(&n))
                    });
                    match next {
                        Some(n) => {
                            if let Some(&h) = group_of.get(&n) {
                                end = Some(h);
                                break;
                            }
                            visited.insert(n);
                            points.push(geom.position(n));
                            run += 1;
                            prev = cur;
                            cur = n;
                        }
                        None => break,
                    }
                }
                match end {
                    // A one- or two-voxel detour back into the same junction
                    // is part of the junction, not a loop.
                    Some(h) if h == g && run < 3 => {}
                    Some(h) => {
                        points.push(nodes[h].pos);
                        push_edge(&mut edges, &nodes, g, h, points);
                    }
                    None => warn!("dangling skeleton path at voxel {:?}", geom.coords(cur)),
                }
            }
        }
    }

    let unvisited_path = classes
        .iter()
        .filter(|(i, c)| **c == VoxelClass::Path && !visited.contains(i))
        .count();
    if unvisited_path > 0 {
        warn!("ignoring {unvisited_path} path voxel(s) on node-free rings");
    }

    let mut pairs = HashSet::new();
    let multigraph = edges
        .iter()
        .any(|e| !pairs.insert((e.u.min(e.v), e.u.max(e.v))));
    let mut graph = VascularGraph::new(nodes, edges);
    graph.multigraph = multigraph;
    Ok(graph)
}

fn push_edge(edges: &mut Vec<Edge>, nodes: &[Node], u: usize, v: usize, path: Vec<[f64; 3]>) {
    let length: f64 = path.windows(2).map(|w| distance(w[0], w[1])).sum();
    let axis = unit_axis(nodes[u].pos, nodes[v].pos)
        .or_else(|| unit_axis(path[0], path[path.len() / 2]))
        .unwrap_or([1.0, 0.0, 0.0]);
    edges.push(Edge {
        id: edges.len(),
        u,
        v,
        length,
        axis,
        path,
    });
}

/// Largest distance-field value over skeleton voxels of `label` within `reach` mm of `center`.
fn largest_ball_near(
    skeleton: &VesselMask,
    field: &[f64],
    center: [f64; 3],
    reach: f64,
    label: u32,
) -> f64 {
    let geom = skeleton.geometry;
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        let c = center[a] / geom.spacing[a];
        let r = reach / geom.spacing[a];
        lo[a] = (c - r).floor().max(0.0) as usize;
        hi[a] = ((c + r).ceil().max(0.0) as usize).min(geom.dims[a] - 1);
    }
    let mut best = 0.0f64;
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            for x in lo[0]..=hi[0] {
                let i = geom.index(x, y, z);
                if skeleton.labels[i] == label && distance(geom.position(i), center) <= reach {
                    best = best.max(field[i]);
                }
            }
        }
    }
    best
}

/// Removes short terminal branches caused by surface noise.
///
/// A terminal edge is a spur when its length is below `factor` times the
/// radius of the junction it hangs from. After removal, junctions left with
/// two edges are dissolved and their edges joined. IDs are renumbered
/// densely afterwards. `factor <= 0` disables pruning.
pub fn prune_spurs(graph: &VascularGraph, factor: f64) -> Result<VascularGraph> {
    if factor <= 0.0 {
        return Ok(graph.clone());
    }
    let mut nodes: Vec<Option<Node>> = graph.nodes.iter().cloned().map(Some).collect();
    let index = graph.node_index();
    let mut edges: Vec<Option<Edge>> = graph
        .edges
        .iter()
        .map(|e| {
            let mut e = e.clone();
            e.u = index[&e.u];
            e.v = index[&e.v];
            Some(e)
        })
        .collect();

    loop {
        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
        for (k, e) in edges.iter().enumerate() {
            if let Some(e) = e {
                incident[e.u].push(k);
                if e.v != e.u {
                    incident[e.v].push(k);
                }
            }
        }
        // Spurs are judged against the graph as it stood at the start of the
        // round, so a fork of two short branches is removed as a whole.
        let mut spurs: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); nodes.len()];
        for n in 0..nodes.len() {
            let Some(node) = &nodes[n] else { continue };
            if node.kind != NodeKind::Endpoint || incident[n].len() != 1 {
                continue;
            }
            let k = incident[n][0];
            let e = edges[k].as_ref().unwrap();
            let other = if e.u == n { e.v } else { e.u };
            if incident[other].len() < 3 {
                continue;
            }
            if e.length < factor * nodes[other].as_ref().unwrap().radius {
                spurs[other].push((n, k, e.length));
            }
        }
        let mut changed = false;
        for (j, mut list) in spurs.into_iter().enumerate() {
            if list.is_empty() {
                continue;
            }
            if list.len() == incident[j].len() {
                // Everything hanging here is short: keep the longest one.
                list.sort_by(|a, b| a.2.total_cmp(&b.2));
                list.pop();
            }
            for &(n, k, _) in &list {
                nodes[n] = None;
                edges[k] = None;
            }
            if incident[j].len() - list.len() == 1 {
                nodes[j].as_mut().unwrap().kind = NodeKind::Endpoint;
            }
            changed |= !list.is_empty();
        }
        if changed {
            continue;
        }
        // Dissolve degree-2 junctions.
        for n in 0..nodes.len() {
            let Some(node) = &nodes[n] else { continue };
            if node.kind != NodeKind::Branch || incident[n].len() != 2 {
                continue;
            }
            let (k1, k2) = (incident[n][0], incident[n][1]);
            let e1 = edges[k1].take().unwrap();
            let e2 = edges[k2].take().unwrap();
            // Orient e1 to end at n and e2 to start at n.
            let mut p1 = e1.path.clone();
            let a = if e1.v == n {
                e1.u
            } else {
                p1.reverse();
                e1.v
            };
            let mut p2 = e2.path.clone();
            let b = if e2.u == n {
                e2.v
            } else {
                p2.reverse();
                e2.u
            };
            p1.pop();
            p1.extend(p2);
            let length = e1.length + e2.length;
            let pa = nodes[a].as_ref().unwrap().pos;
            let pb = nodes[b].as_ref().unwrap().pos;
            let axis = unit_axis(pa, pb)
                .or_else(|| unit_axis(p1[0], p1[p1.len() / 2]))
                .unwrap_or([1.0, 0.0, 0.0]);
            edges[k1] = Some(Edge {
                id: 0,
                u: a,
                v: b,
                length,
                axis,
                path: p1,
            });
            nodes[n] = None;
            changed = true;
            break;
        }
        if !changed {
            break;
        }
    }

    let mut remap = vec![usize::MAX; nodes.len()];
    let mut out_nodes = Vec::new();
    for (i, n) in nodes.into_iter().enumerate() {
        if let Some(mut n) = n {
            remap[i] = out_nodes.len();
            n.id = out_nodes.len();
            out_nodes.push(n);
        }
    }
    let out_edges: Vec<Edge> = edges
        .into_iter()
        .flatten()
        .enumerate()
        .map(|(id, mut e)| {
            e.id = id;
            e.u = remap[e.u];
            e.v = remap[e.v];
            e
        })
        .collect();
    let mut pairs = HashSet::new();
    let multigraph = out_edges
        .iter()
        .any(|e| !pairs.insert((e.u.min(e.v), e.u.max(e.v))));
    let mut out = VascularGraph::new(out_nodes, out_edges);
    out.directed = graph.directed;
    out.multigraph = multigraph;
    Ok(out)
}
