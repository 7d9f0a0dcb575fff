use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ledger::{FlagLedger, FlagTarget, Rule, SuggestionAction};
use super::RepairError;
use crate::geometry::{bounded_faces, multipolygon_contains, BBox, GridIndex, MultiPolygonGeometry};
use crate::model::{InfrastructureNetwork, Point2D, Scalar};

/// Thresholds for recognizing circles drawn as node rings (CAD symbols).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SymbolParams {
    pub min_nodes: usize,
    /// Allowed spread of node-to-centroid distances, relative to their mean.
    pub max_radial_deviation: f64,
    /// Meters.
    pub max_radius: f64,
    /// Loose ends within this multiple of the radius get connected to the
    /// replacement node.
    pub attach_factor: f64,
}

impl Default for SymbolParams {
    fn default() -> Self {
        Self {
            min_nodes: 6,
            max_radial_deviation: 0.05,
            max_radius: 3.0,
            attach_factor: 1.5,
        }
    }
}

pub(crate) fn layer_grid(net: &InfrastructureNetwork, layer_id: &str) -> GridIndex<String> {
    GridIndex::build(
        net.nodes_in_layer(layer_id)
            .map(|n| (n.id.clone(), BBox::of_point(n.position)))
            .collect(),
    )
}

fn find(parent: &mut BTreeMap<String, String>, x: &str) -> String {
    let mut root = x.to_string();
    while let Some(p) = parent.get(&root).filter(|p| **p != root) {
        root = p.clone();
    }
    parent.insert(x.to_string(), root.clone());
    root
}

/// Flag every pair of distinct same-layer nodes within ε of each other.
/// Pairs connected transitively share one merge suggestion.
pub fn detect_duplicate_nodes(
    net: &InfrastructureNetwork,
    ledger: &mut FlagLedger,
    layer_id: &str,
) -> Result<Vec<String>, RepairError> {
    net.layer(layer_id)?;
    let eps = net.epsilon();
    let grid = layer_grid(net, layer_id);
    let mut pairs = Vec::new();
    for node in net.nodes_in_layer(layer_id) {
        for other in grid.query_bbox(&BBox::of_point(node.position).expanded(eps)) {
            if *other <= node.id {
                continue;
            }
            let d = node.position.distance(&net.node(other).expect("indexed").position);
            if d <= eps {
                pairs.push((node.id.clone(), other.clone(), d));
            }
        }
    }
    pairs.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));

    let mut parent = BTreeMap::new();
    for (a, b, _) in &pairs {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent.insert(hi, lo);
        }
    }
    let mut clusters: BTreeMap<String, (BTreeSet<String>, Vec<String>)> = BTreeMap::new();
    let rev = net.revision();
    for (a, b, d) in &pairs {
        let root = find(&mut parent, a);
        let entry = clusters.entry(root).or_default();
        entry.0.insert(a.clone());
        entry.0.insert(b.clone());
        let detail = format!("nodes `{a}` and `{b}` are {d:.4} m apart (tolerance {eps} m)");
        if let Some(id) = ledger.push_flag(
            Rule::DuplicateNodes,
            layer_id,
            FlagTarget::Node(a.clone()),
            vec![b.clone()],
            format!("dup:{a}|{b}"),
            detail,
            rev,
        ) {
            entry.1.push(id);
        }
    }
    let mut created = Vec::new();
    for (nodes, flags) in clusters.into_values() {
        if flags.is_empty() {
            continue;
        }
        let nodes: Vec<String> = nodes.into_iter().collect();
        let key = format!("merge:{}", nodes.join("|"));
        let sid = match ledger.suggestions.iter().find(|s| s.key == key) {
            Some(s) => s.id.clone(),
            None => ledger.push_suggestion(
                Rule::DuplicateNodes,
                layer_id,
                SuggestionAction::MergeNodes { nodes },
                Vec::new(),
                key,
                rev,
            ),
        };
        for f in &flags {
            ledger.link(f, &sid);
        }
        created.extend(flags);
    }
    Ok(created)
}

/// Circle fit of a node ring: centroid, mean radius, and the largest
/// relative deviation of any node from the mean radius.
pub fn circle_fit(points: &[Point2D]) -> (Point2D, f64, f64) {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let c = Point2D::new(cx, cy);
    let radii: Vec<f64> = points.iter().map(|p| p.distance(&c)).collect();
    let mean = radii.iter().sum::<f64>() / n;
    let dev = radii
        .iter()
        .map(|r| (r - mean).abs() / mean)
        .fold(0.0, f64::max);
    (c, mean, dev)
}

/// Flag node cycles shaped like small circles and suggest collapsing each
/// into a single manhole node at its center.
pub fn detect_symbol_circles(
    net: &InfrastructureNetwork,
    ledger: &mut FlagLedger,
    layer_id: &str,
    params: &SymbolParams,
) -> Result<Vec<String>, RepairError> {
    if !(params.max_radius > 0.0 && params.max_radial_deviation >= 0.0) {
        return Err(RepairError::InvalidArgument(
            "symbol max_radius must be positive and deviation non-negative".into(),
        ));
    }
    let (faces, _) = bounded_faces(net, layer_id)?;
    let grid = layer_grid(net, layer_id);
    let rev = net.revision();
    let mut created = Vec::new();
    let mut claimed: BTreeSet<String> = BTreeSet::new();
    for face in faces {
        if face.nodes.len() < params.min_nodes.max(3) || !face.is_simple() {
            continue;
        }
        let points: Vec<Point2D> = face
            .nodes
            .iter()
            .map(|id| net.node(id).expect("face node").position)
            .collect();
        let (centroid, radius, dev) = circle_fit(&points);
        if dev > params.max_radial_deviation || radius > params.max_radius {
            continue;
        }
        let cycle_nodes: BTreeSet<String> = face.nodes.iter().cloned().collect();
        if cycle_nodes.iter().any(|n| claimed.contains(n)) {
            continue;
        }
        let cycle_edges: BTreeSet<String> = face.edges.iter().cloned().collect();
        let mut attachments = BTreeSet::new();
        for n in &cycle_nodes {
            for e in net.incident_edges(n) {
                if cycle_edges.contains(&e.id) {
                    continue;
                }
                if let Some(other) = e.other_end(n).filter(|o| !cycle_nodes.contains(*o)) {
                    attachments.insert(other.to_string());
                }
            }
        }
        let reach = radius * params.attach_factor;
        let nearby_ends: Vec<String> = grid
            .query_bbox(&BBox::of_point(centroid).expanded(reach))
            .into_iter()
            .filter(|id| !cycle_nodes.contains(*id) && !attachments.contains(*id))
            .filter(|id| {
                let n = net.node(id).expect("indexed");
                n.position.distance(&centroid) <= reach
                    && net.node_degree(id).unwrap_or(0) <= 1
            })
            .cloned()
            .collect();

        let nodes: Vec<String> = cycle_nodes.iter().cloned().collect();
        let key = format!("sym:{}", nodes.join("|"));
        let detail = format!(
            "{}-node cycle fits a circle of radius {radius:.3} m (max deviation {:.1}%), {} attachment(s)",
            nodes.len(),
            dev * 100.0,
            attachments.len()
        );
        let Some(fid) = ledger.push_flag(
            Rule::SymbolCircle,
            layer_id,
            FlagTarget::Node(nodes[0].clone()),
            nodes[1..].to_vec(),
            key.clone(),
            detail,
            rev,
        ) else {
            continue;
        };
        claimed.extend(cycle_nodes.iter().cloned());
        let sid = ledger.push_suggestion(
            Rule::SymbolCircle,
            layer_id,
            SuggestionAction::ReplaceSymbol {
                nodes,
                edges: cycle_edges.into_iter().collect(),
                centroid,
                radius,
                attachments: attachments.into_iter().collect(),
                nearby_ends,
            },
            Vec::new(),
            key,
            rev,
        );
        ledger.link(&fid, &sid);
        created.push(fid);
    }
    Ok(created)
}

/// Degree-1 nodes of the layer that do not end inside (or on) a building.
pub fn dangling_nodes(
    net: &InfrastructureNetwork,
    layer_id: &str,
    footprints: &MultiPolygonGeometry,
) -> Result<Vec<String>, RepairError> {
    let eps = net.epsilon();
    Ok(net
        .end_nodes(layer_id)?
        .into_iter()
        .filter(|id| !multipolygon_contains(net.node(id).expect("end node").position, footprints, eps))
        .collect())
}

pub fn detect_dangling_ends(
    net: &InfrastructureNetwork,
    ledger: &mut FlagLedger,
    layer_id: &str,
    footprints: &MultiPolygonGeometry,
) -> Result<Vec<String>, RepairError> {
    let rev = net.revision();
    Ok(dangling_nodes(net, layer_id, footprints)?
        .into_iter()
        .filter_map(|id| {
            ledger.push_flag(
                Rule::DanglingEnd,
                layer_id,
                FlagTarget::Node(id.clone()),
                Vec::new(),
                format!("dangle:{id}"),
                format!("pipe end `{id}` is neither connected nor inside a building"),
                rev,
            )
        })
        .collect())
}

/// Valve nodes (attribute `type` = "valve") with fewer than two connections.
pub fn check_valve_degree(
    net: &InfrastructureNetwork,
    ledger: &mut FlagLedger,
    layer_id: &str,
) -> Result<Vec<String>, RepairError> {
    net.layer(layer_id)?;
    let valve = Scalar::Text("valve".into());
    let rev = net.revision();
    let mut created = Vec::new();
    for node in net.nodes_in_layer(layer_id) {
        if node.attributes.get("type") != Some(&valve) {
            continue;
        }
        let degree = net.node_degree(&node.id)?;
        if degree >= 2 {
            continue;
        }
        if let Some(id) = ledger.push_flag(
            Rule::ValveDegree,
            layer_id,
            FlagTarget::Node(node.id.clone()),
            Vec::new(),
            format!("valve:{}", node.id),
            format!("valve `{}` has {degree} connection(s), expected at least 2", node.id),
            rev,
        ) {
            created.push(id);
        }
    }
    Ok(created)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Edge, Layer, LayerKind, Node, Sensitivity};

    fn net_with(points: &[(&str, f64, f64)]) -> InfrastructureNetwork {
        let mut net = InfrastructureNetwork::new(0.01).unwrap();
        net.add_layer(Layer::new("p", LayerKind::Pipes, Sensitivity::Sensitive))
            .unwrap();
        for (id, x, y) in points {
            net.insert_node(Node::new(*id, "p", Point2D::new(*x, *y))).unwrap();
        }
        net
    }

    #[test]
    fn duplicate_pairs_and_clusters() {
        let net = net_with(&[("a", 0.0, 0.0), ("b", 0.0, 0.0), ("c", 0.0, 0.0), ("d", 1.0, 0.0)]);
        let mut ledger = FlagLedger::new();
        let flags = detect_duplicate_nodes(&net, &mut ledger, "p").unwrap();
        // O(n^2) oracle
        let pts: Vec<_> = net.nodes().collect();
        let mut oracle = 0;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                if pts[i].position.distance(&pts[j].position) <= 0.01 {
                    oracle += 1;
                }
            }
        }
        assert_eq!(flags.len(), oracle);
        assert_eq!(flags.len(), 3);
        assert_eq!(ledger.suggestions.len(), 1);
        // a second scan finds nothing new
        assert!(detect_duplicate_nodes(&net, &mut ledger, "p").unwrap().is_empty());
    }

    #[test]
    fn one_meter_apart_is_not_duplicate() {
        let net = net_with(&[("a", 0.0, 0.0), ("b", 1.0, 0.0)]);
        let mut ledger = FlagLedger::new();
        assert!(detect_duplicate_nodes(&net, &mut ledger, "p").unwrap().is_empty());
    }

    #[test]
    fn valve_rule() {
        let mut net = net_with(&[("v1", 0.0, 0.0), ("v2", 10.0, 0.0), ("x", 5.0, 5.0), ("y", 20.0, 0.0)]);
        for id in ["v1", "v2"] {
            let mut n = net.node(id).unwrap().clone();
            n.attributes.insert("type".into(), Scalar::Text("valve".into()));
            let mut batch = crate::model::EditBatch::new();
            batch.push(crate::model::EditAction::RemoveNode { id: id.into() });
            batch.push(crate::model::EditAction::AddNode { node: n });
            net.apply_edit(&batch).unwrap();
        }
        net.insert_edge(Edge::new("e1", "p", "v1", "v2")).unwrap();
        net.insert_edge(Edge::new("e2", "p", "v2", "y")).unwrap();
        let mut ledger = FlagLedger::new();
        check_valve_degree(&net, &mut ledger, "p").unwrap();
        let targets: Vec<&str> = ledger.flags.iter().map(|f| f.target.id()).collect();
        assert_eq!(targets, vec!["v1"]);
    }

    #[test]
    fn ellipse_fit_deviation_exceeds_five_percent() {
        let ellipse: Vec<Point2D> = (0..12)
            .map(|k| {
                let t = k as f64 * std::f64::consts::TAU / 12.0;
                Point2D::new(2.0 * t.cos(), t.sin())
            })
            .collect();
        let (_, _, dev) = circle_fit(&ellipse);
        assert!(dev > 0.05, "{dev}");
        let circle: Vec<Point2D> = (0..12)
            .map(|k| {
                let t = k as f64 * std::f64::consts::TAU / 12.0;
                Point2D::new(t.cos(), t.sin())
            })
            .collect();
        let (c, r, dev) = circle_fit(&circle);
        assert!(c.distance(&Point2D::new(0.0, 0.0)) < 1e-12);
        assert!((r - 1.0).abs() < 1e-12 && dev < 1e-12);
    }
}
