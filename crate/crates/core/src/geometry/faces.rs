use std::collections::{BTreeMap, BTreeSet};

use super::{ring_signed_area, MultiPolygonGeometry, PolygonGeometry};
use crate::model::{InfrastructureNetwork, ModelError, Point2D};

/// A bounded face of a layer's planar embedding: a minimal closed cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    /// Nodes in counter-clockwise walk order (no repetition of the start).
    pub nodes: Vec<String>,
    pub edges: Vec<String>,
    /// Closed ring following the edge geometry.
    pub ring: Vec<Point2D>,
    pub signed_area: f64,
}

impl Face {
    /// True when no node is visited twice by the walk.
    pub fn is_simple(&self) -> bool {
        let distinct: BTreeSet<&String> = self.nodes.iter().collect();
        distinct.len() == self.nodes.len()
    }
}

#[derive(Debug, Clone)]
pub struct Polygonization {
    pub footprints: MultiPolygonGeometry,
    pub faces: Vec<Face>,
    /// Nodes on no closed cycle (broken boundaries and detached nodes).
    pub open_nodes: Vec<String>,
}

struct LayerGraph {
    nodes: Vec<String>,
    // (a, b, edge id, chain from a to b)
    edges: Vec<(usize, usize, String, Vec<Point2D>)>,
}

fn layer_graph(net: &InfrastructureNetwork, layer_id: &str) -> LayerGraph {
    let nodes: Vec<String> = net.nodes_in_layer(layer_id).map(|n| n.id.clone()).collect();
    let slot: BTreeMap<&str, usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let edges = net
        .edges_in_layer(layer_id)
        .filter_map(|e| {
            let a = *slot.get(e.endpoint_a.as_str())?;
            let b = *slot.get(e.endpoint_b.as_str())?;
            Some((a, b, e.id.clone(), net.edge_chain(e)))
        })
        .collect();
    LayerGraph { nodes, edges }
}

/// Bridge flags per edge (multigraph aware: parallel edges are never
/// bridges).
fn find_bridges(node_count: usize, edges: &[(usize, usize, String, Vec<Point2D>)]) -> Vec<bool> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); node_count];
    for (i, (a, b, _, _)) in edges.iter().enumerate() {
        adj[*a].push((*b, i));
        adj[*b].push((*a, i));
    }
    let mut disc = vec![usize::MAX; node_count];
    let mut low = vec![0usize; node_count];
    let mut bridge = vec![false; edges.len()];
    let mut timer = 0;
    for root in 0..node_count {
        if disc[root] != usize::MAX {
            continue;
        }
        // (node, edge used to enter, next adjacency position)
        let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(root, None, 0)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(&mut (u, via, ref mut pos)) = stack.last_mut() {
            if *pos < adj[u].len() {
                let (v, e) = adj[u][*pos];
                *pos += 1;
                if Some(e) == via {
                    continue;
                }
                if disc[v] == usize::MAX {
                    disc[v] = timer;
                    low[v] = timer;
                    timer += 1;
                    stack.push((v, Some(e), 0));
                } else {
                    low[u] = low[u].min(disc[v]);
                }
            } else {
                stack.pop();
                if let (Some(&(parent, _, _)), Some(e)) = (stack.last(), via) {
                    low[parent] = low[parent].min(low[u]);
                    if low[u] > disc[parent] {
                        bridge[e] = true;
                    }
                }
            }
        }
    }
    bridge
}

fn departure_angle(chain: &[Point2D]) -> f64 {
    let start = chain[0];
    let next = chain
        .iter()
        .skip(1)
        .find(|p| **p != start)
        .copied()
        .unwrap_or(start);
    (next.y - start.y).atan2(next.x - start.x)
}

fn walk_faces(graph: &LayerGraph, keep: &[bool]) -> (Vec<Face>, BTreeSet<usize>) {
    // half-edge 2i runs a->b, 2i+1 runs b->a
    let mut outgoing: Vec<Vec<(f64, usize)>> = vec![Vec::new(); graph.nodes.len()];
    let mut on_cycle = BTreeSet::new();
    for (i, (a, b, _, chain)) in graph.edges.iter().enumerate() {
        if !keep[i] || chain.len() < 2 {
            continue;
        }
        let reversed: Vec<Point2D> = chain.iter().rev().copied().collect();
        outgoing[*a].push((departure_angle(chain), 2 * i));
        outgoing[*b].push((departure_angle(&reversed), 2 * i + 1));
        on_cycle.insert(*a);
        on_cycle.insert(*b);
    }
    let mut position = BTreeMap::new();
    for list in &mut outgoing {
        list.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        for (k, (_, h)) in list.iter().enumerate() {
            position.insert(*h, k);
        }
    }
    let origin = |h: usize| {
        let (a, b, _, _) = &graph.edges[h / 2];
        if h % 2 == 0 {
            *a
        } else {
            *b
        }
    };
    let mut visited = BTreeSet::new();
    let mut faces = Vec::new();
    for start in position.keys().copied().collect::<Vec<_>>() {
        if visited.contains(&start) {
            continue;
        }
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        let mut ring = Vec::new();
        let mut h = start;
        loop {
            visited.insert(h);
            let (_, _, id, chain) = &graph.edges[h / 2];
            nodes.push(graph.nodes[origin(h)].clone());
            edges.push(id.clone());
            if h % 2 == 0 {
                ring.extend(&chain[..chain.len() - 1]);
            } else {
                ring.extend(chain.iter().rev().take(chain.len() - 1));
            }
            // at the head, turn to the outgoing half-edge just clockwise of
            // the twin
            let twin = h ^ 1;
            let head = origin(twin);
            let list = &outgoing[head];
            let k = position[&twin];
            h = list[(k + list.len() - 1) % list.len()].1;
            if h == start {
                break;
            }
        }
        if let Some(first) = ring.first().copied() {
            ring.push(first);
        }
        let signed_area = ring_signed_area(&ring);
        faces.push(Face {
            nodes,
            edges,
            ring,
            signed_area,
        });
    }
    (faces, on_cycle)
}

/// Bounded faces of a layer together with the node ids lying on at least
/// one closed cycle.
pub fn bounded_faces(
    net: &InfrastructureNetwork,
    layer_id: &str,
) -> Result<(Vec<Face>, BTreeSet<String>), ModelError> {
    net.layer(layer_id)?;
    let graph = layer_graph(net, layer_id);
    let bridges = find_bridges(graph.nodes.len(), &graph.edges);
    let keep: Vec<bool> = bridges.iter().map(|b| !b).collect();
    let (faces, on_cycle) = walk_faces(&graph, &keep);
    let min_area = net.epsilon() * net.epsilon();
    let bounded = faces
        .into_iter()
        .filter(|f| f.signed_area > min_area)
        .collect();
    let on_cycle = on_cycle.into_iter().map(|i| graph.nodes[i].clone()).collect();
    Ok((bounded, on_cycle))
}

/// Turn every minimal closed cycle of a layer into a polygon and report the
/// nodes that belong to no cycle.
pub fn polygonize_layer(
    net: &InfrastructureNetwork,
    layer_id: &str,
) -> Result<Polygonization, ModelError> {
    let (faces, on_cycle) = bounded_faces(net, layer_id)?;
    let polygons = faces
        .iter()
        .filter_map(|f| PolygonGeometry::new(f.ring.clone(), Vec::new()).ok())
        .collect();
    let open_nodes = net
        .nodes_in_layer(layer_id)
        .filter(|n| !on_cycle.contains(&n.id))
        .map(|n| n.id.clone())
        .collect();
    Ok(Polygonization {
        footprints: MultiPolygonGeometry::new(polygons),
        faces,
        open_nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Edge, Layer, LayerKind, Node, Sensitivity};

    fn buildings() -> InfrastructureNetwork {
        let mut net = InfrastructureNetwork::new(0.01).unwrap();
        net.add_layer(Layer::new("b", LayerKind::Buildings, Sensitivity::Public))
            .unwrap();
        net
    }

    fn square(net: &mut InfrastructureNetwork, tag: &str, x0: f64, skip_last: bool) {
        let corners = [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)];
        for (i, (x, y)) in corners.iter().enumerate() {
            net.insert_node(Node::new(format!("{tag}{i}"), "b", Point2D::new(x0 + x, *y)))
                .unwrap();
        }
        let count = if skip_last { 3 } else { 4 };
        for i in 0..count {
            net.insert_edge(Edge::new(
                format!("{tag}e{i}"),
                "b",
                format!("{tag}{i}"),
                format!("{tag}{}", (i + 1) % 4),
            ))
            .unwrap();
        }
    }

    #[test]
    fn closed_square_is_one_polygon() {
        let mut net = buildings();
        square(&mut net, "s", 0.0, false);
        let out = polygonize_layer(&net, "b").unwrap();
        assert_eq!(out.footprints.polygons.len(), 1);
        assert!(out.open_nodes.is_empty());
        assert!((out.footprints.area() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn broken_square_has_four_open_nodes() {
        let mut net = buildings();
        square(&mut net, "s", 0.0, true);
        let out = polygonize_layer(&net, "b").unwrap();
        assert!(out.footprints.is_empty());
        // cycle oracle: a path of three edges has no cycle, so every node is open
        assert_eq!(out.open_nodes.len(), 4);
    }

    #[test]
    fn two_disjoint_squares() {
        let mut net = buildings();
        square(&mut net, "s", 0.0, false);
        square(&mut net, "t", 50.0, false);
        let out = polygonize_layer(&net, "b").unwrap();
        assert_eq!(out.footprints.polygons.len(), 2);
        assert!(out.open_nodes.is_empty());
    }

    #[test]
    fn square_with_tail_keeps_tail_open() {
        let mut net = buildings();
        square(&mut net, "s", 0.0, false);
        net.insert_node(Node::new("tail", "b", Point2D::new(-5.0, -5.0)))
            .unwrap();
        net.insert_edge(Edge::new("te", "b", "s0", "tail")).unwrap();
        let out = polygonize_layer(&net, "b").unwrap();
        assert_eq!(out.footprints.polygons.len(), 1);
        assert_eq!(out.open_nodes, vec!["tail"]);
    }

    #[test]
    fn shared_wall_gives_two_faces() {
        // two rooms sharing the middle wall
        let mut net = buildings();
        let pts = [
            ("a", 0.0, 0.0),
            ("b", 10.0, 0.0),
            ("c", 20.0, 0.0),
            ("d", 20.0, 10.0),
            ("e", 10.0, 10.0),
            ("f", 0.0, 10.0),
        ];
        for (id, x, y) in pts {
            net.insert_node(Node::new(id, "b", Point2D::new(x, y))).unwrap();
        }
        for (i, (a, b)) in [("a", "b"), ("b", "c"), ("c", "d"), ("d", "e"), ("e", "f"), ("f", "a"), ("b", "e")]
            .iter()
            .enumerate()
        {
            net.insert_edge(Edge::new(format!("w{i}"), "b", *a, *b)).unwrap();
        }
        let (faces, _) = bounded_faces(&net, "b").unwrap();
        assert_eq!(faces.len(), 2);
        assert!(faces.iter().all(|f| (f.signed_area - 100.0).abs() < 1e-9));
    }
}
