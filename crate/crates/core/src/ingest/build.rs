use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{FeatureGeometry, FeatureRecord, IngestError};
use crate::geometry::{
    chain_length, distance_point_to_segment, project_onto_segment, BBox, GridIndex,
    MultiPolygonGeometry, PolygonGeometry,
};
use crate::model::{AreaFeature, Edge, InfrastructureNetwork, Layer, Node, Point2D};

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedFeature {
    pub layer_id: String,
    pub index: usize,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildReport {
    pub skipped: Vec<SkippedFeature>,
    /// Extra edges created by splitting at interior nodes.
    pub split_pieces: usize,
}

#[derive(Debug, Clone)]
pub struct BuiltNetwork {
    pub network: InfrastructureNetwork,
    pub report: BuildReport,
}

/// Generated ids continue after the largest numeric suffix among the ids
/// given explicitly in the input.
struct IdPool {
    taken: BTreeSet<String>,
    next: BTreeMap<char, u64>,
}

impl IdPool {
    fn new<'a>(explicit: impl Iterator<Item = &'a str>) -> Self {
        let mut next = BTreeMap::new();
        let mut taken = BTreeSet::new();
        for id in explicit {
            taken.insert(id.to_string());
            let mut chars = id.chars();
            if let Some(prefix @ ('n' | 'e' | 'a')) = chars.next() {
                if let Ok(k) = chars.as_str().parse::<u64>() {
                    let slot = next.entry(prefix).or_insert(0);
                    *slot = (*slot).max(k);
                }
            }
        }
        Self { taken, next }
    }

    fn fresh(&mut self, prefix: char) -> String {
        loop {
            let slot = self.next.entry(prefix).or_insert(0);
            *slot += 1;
            let id = format!("{prefix}{slot}");
            if self.taken.insert(id.clone()) {
                return id;
            }
        }
    }
}

/// Exact ε-cell hash used for endpoint snapping while nodes are still being
/// created.
struct SnapGrid {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<(String, Point2D)>>,
}

impl SnapGrid {
    fn new(cell: f64) -> Self {
        Self {
            cell,
            cells: HashMap::new(),
        }
    }

    fn key(&self, p: Point2D) -> (i64, i64) {
        ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64)
    }

    fn insert(&mut self, id: &str, p: Point2D) {
        let key = self.key(p);
        self.cells.entry(key).or_default().push((id.to_string(), p));
    }

    fn nearest(&self, p: Point2D, radius: f64) -> Option<&str> {
        let (cx, cy) = self.key(p);
        let mut best: Option<(f64, &str)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for (id, q) in self.cells.get(&(cx + dx, cy + dy)).into_iter().flatten() {
                    let d = p.distance(q);
                    if d > radius {
                        continue;
                    }
                    if best.is_none_or(|(bd, bid)| d < bd || (d == bd && id.as_str() < bid)) {
                        best = Some((d, id));
                    }
                }
            }
        }
        best.map(|(_, id)| id)
    }
}

struct Split {
    segment: usize,
    t: f64,
    node: String,
    position: Point2D,
}

fn push_distinct(chain: &mut Vec<Point2D>, p: Point2D) {
    if chain.last() != Some(&p) {
        chain.push(p);
    }
}

fn straight_or(chain: Vec<Point2D>) -> Vec<Point2D> {
    if chain.len() <= 2 {
        Vec::new()
    } else {
        chain
    }
}

/// Nodes of the layer lying within ε of the edge interior, in order along
/// the chain. No two returned nodes are within ε of each other.
fn interior_nodes(
    net: &InfrastructureNetwork,
    index: &GridIndex<String>,
    edge: &Edge,
    chain: &[Point2D],
) -> Vec<Split> {
    let eps = net.epsilon();
    let (first, last) = (chain[0], chain[chain.len() - 1]);
    let mut splits = Vec::new();
    for id in index.query_bbox(&BBox::of_points(chain).expanded(eps)) {
        if edge.touches(id) {
            continue;
        }
        let p = net.node(id).expect("indexed node exists").position;
        if p.distance(&first) <= eps || p.distance(&last) <= eps {
            continue;
        }
        let best = chain
            .windows(2)
            .enumerate()
            .map(|(i, w)| (distance_point_to_segment(p, w[0], w[1]), i))
            .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        if let Some((d, segment)) = best {
            if d <= eps {
                let t = project_onto_segment(p, chain[segment], chain[segment + 1]);
                splits.push(Split {
                    segment,
                    t,
                    node: id.clone(),
                    position: p,
                });
            }
        }
    }
    splits.sort_by(|x, y| {
        x.segment
            .cmp(&y.segment)
            .then(x.t.total_cmp(&y.t))
            .then(x.node.cmp(&y.node))
    });
    // coincident nodes: split at the first, leave the rest for the duplicate check
    let mut kept: Vec<Split> = Vec::with_capacity(splits.len());
    for s in splits {
        if kept.last().is_none_or(|k| k.position.distance(&s.position) > eps) {
            kept.push(s);
        }
    }
    kept
}

fn split_edge(edge: Edge, chain: &[Point2D], splits: &[Split], pool: &mut IdPool) -> Vec<Edge> {
    let mut pieces = Vec::new();
    let mut start = edge.endpoint_a.clone();
    let mut current = vec![chain[0]];
    let mut k = 0;
    for i in 0..chain.len() - 1 {
        while k < splits.len() && splits[k].segment == i {
            let s = &splits[k];
            push_distinct(&mut current, s.position);
            pieces.push((start, s.node.clone(), current));
            start = s.node.clone();
            current = vec![s.position];
            k += 1;
        }
        push_distinct(&mut current, chain[i + 1]);
    }
    pieces.push((start, edge.endpoint_b.clone(), current));

    pieces
        .into_iter()
        .enumerate()
        .map(|(i, (a, b, line))| {
            let mut piece = edge.clone();
            if i > 0 {
                piece.id = pool.fresh('e');
            }
            piece.endpoint_a = a;
            piece.endpoint_b = b;
            piece.polyline = straight_or(line);
            piece
        })
        .collect()
}

fn skip(report: &mut BuildReport, f: &FeatureRecord, reason: impl Into<String>) {
    report.skipped.push(SkippedFeature {
        layer_id: f.source_layer.clone(),
        index: f.index,
        id: f.id.clone(),
        reason: reason.into(),
    });
}

/// Assemble a network from parsed features. Points become nodes,
/// linestring ends snap to nodes within ε (or create new ones), edges are
/// split at nodes lying on their interior, and polygons become area
/// features. Generated ids depend only on input order.
pub fn build_network(
    epsilon: f64,
    layers: &[Layer],
    features: &[FeatureRecord],
) -> Result<BuiltNetwork, IngestError> {
    let mut net = InfrastructureNetwork::new(epsilon)?;
    for layer in layers {
        net.add_layer(layer.clone())?;
    }
    for f in features {
        if net.layer(&f.source_layer).is_err() {
            return Err(IngestError::UnknownLayer {
                index: f.index,
                layer: f.source_layer.clone(),
            });
        }
    }
    let mut pool = IdPool::new(features.iter().filter_map(|f| f.id.as_deref()));
    let mut report = BuildReport::default();

    for layer in layers {
        let layer_id = layer.id.as_str();
        let in_layer: Vec<&FeatureRecord> =
            features.iter().filter(|f| f.source_layer == layer_id).collect();
        let mut snap = SnapGrid::new(epsilon);

        for f in &in_layer {
            let FeatureGeometry::Point(p) = f.geometry else { continue };
            let id = f.id.clone().unwrap_or_else(|| pool.fresh('n'));
            let mut node = Node::new(id.clone(), layer_id, p);
            node.attributes = f.properties.clone();
            node.flag_ids = f.flags.clone();
            node.valid = f.valid;
            net.insert_node(node)?;
            snap.insert(&id, p);
        }

        let mut edges = Vec::new();
        for f in &in_layer {
            let FeatureGeometry::LineString(line) = &f.geometry else { continue };
            if chain_length(line) <= epsilon {
                skip(&mut report, f, "zero-length linestring");
                continue;
            }
            let (first, last) = (line[0], line[line.len() - 1]);
            if first.distance(&last) <= epsilon {
                skip(&mut report, f, "closed linestring would form a self-loop");
                continue;
            }
            let mut resolve = |p: Point2D, hint: &Option<String>| -> Result<String, IngestError> {
                if let Some(node) = hint.as_deref().and_then(|h| net.node(h)) {
                    if node.layer_id == layer_id && node.position.distance(&p) <= epsilon {
                        return Ok(node.id.clone());
                    }
                }
                if let Some(id) = snap.nearest(p, epsilon) {
                    return Ok(id.to_string());
                }
                let id = pool.fresh('n');
                net.insert_node(Node::new(id.clone(), layer_id, p))?;
                snap.insert(&id, p);
                Ok(id)
            };
            let a = resolve(first, &f.node_a)?;
            let b = resolve(last, &f.node_b)?;
            if a == b {
                skip(&mut report, f, format!("both ends snap to node `{a}`"));
                continue;
            }
            let mut edge = Edge::new(f.id.clone().unwrap_or_else(|| pool.fresh('e')), layer_id, a, b);
            edge.attributes = f.properties.clone();
            edge.flag_ids = f.flags.clone();
            edge.valid = f.valid;
            if line.len() > 2 {
                let mut poly = line.clone();
                poly[0] = net.node(&edge.endpoint_a).expect("resolved").position;
                let n = poly.len();
                poly[n - 1] = net.node(&edge.endpoint_b).expect("resolved").position;
                edge.polyline = poly;
            }
            edges.push(edge);
        }

        let index = GridIndex::build(
            net.nodes_in_layer(layer_id)
                .map(|n| (n.id.clone(), BBox::of_point(n.position)))
                .collect(),
        );
        for edge in edges {
            let chain = net.edge_chain(&edge);
            let splits = interior_nodes(&net, &index, &edge, &chain);
            if splits.is_empty() {
                net.insert_edge(edge)?;
                continue;
            }
            let pieces = split_edge(edge, &chain, &splits, &mut pool);
            report.split_pieces += pieces.len() - 1;
            for piece in pieces {
                net.insert_edge(piece)?;
            }
        }

        for f in &in_layer {
            let polygons = match &f.geometry {
                FeatureGeometry::Polygon(rings) => vec![rings.clone()],
                FeatureGeometry::MultiPolygon(polys) => polys.clone(),
                _ => continue,
            };
            let built: Result<Vec<PolygonGeometry>, _> = polygons
                .into_iter()
                .map(|mut rings| {
                    let outer = rings.remove(0);
                    PolygonGeometry::new(outer, rings)
                })
                .collect();
            match built {
                Ok(polys) => net.insert_area(AreaFeature {
                    id: f.id.clone().unwrap_or_else(|| pool.fresh('a')),
                    layer_id: layer_id.to_string(),
                    geometry: MultiPolygonGeometry::new(polys),
                    attributes: f.properties.clone(),
                    flag_ids: f.flags.clone(),
                    valid: f.valid,
                })?,
                Err(e) => skip(&mut report, f, e.to_string()),
            }
        }
    }
    Ok(BuiltNetwork {
        network: net,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Attributes, LayerKind, Sensitivity};

    fn layer() -> Layer {
        Layer::new("pipes", LayerKind::Pipes, Sensitivity::Sensitive)
    }

    fn record(index: usize, geometry: FeatureGeometry) -> FeatureRecord {
        FeatureRecord {
            index,
            id: None,
            geometry,
            properties: Attributes::new(),
            source_layer: "pipes".into(),
            flags: Vec::new(),
            node_a: None,
            node_b: None,
            valid: None,
        }
    }

    fn line(points: &[(f64, f64)]) -> FeatureGeometry {
        FeatureGeometry::LineString(points.iter().map(|&(x, y)| Point2D::new(x, y)).collect())
    }

    #[test]
    fn point_on_line_splits_it() {
        let features = vec![
            record(0, line(&[(0.0, 0.0), (10.0, 0.0)])),
            record(1, FeatureGeometry::Point(Point2D::new(5.0, 0.0))),
        ];
        let built = build_network(0.01, &[layer()], &features).unwrap();
        let net = built.network;
        assert_eq!(net.node_count(), 3);
        assert_eq!(net.edge_count(), 2);
        let p = net
            .nodes()
            .find(|n| n.position == Point2D::new(5.0, 0.0))
            .unwrap();
        assert_eq!(net.node_degree(&p.id).unwrap(), 2);
        assert_eq!(built.report.split_pieces, 1);
    }

    #[test]
    fn lone_line_gives_two_nodes() {
        let features = vec![record(0, line(&[(0.0, 0.0), (10.0, 0.0)]))];
        let net = build_network(0.01, &[layer()], &features).unwrap().network;
        assert_eq!((net.node_count(), net.edge_count()), (2, 1));
    }

    #[test]
    fn shared_endpoint_is_snapped() {
        let features = vec![
            record(0, line(&[(0.0, 0.0), (10.0, 0.0)])),
            record(1, line(&[(10.0, 0.0), (10.0, 10.0)])),
        ];
        let net = build_network(0.01, &[layer()], &features).unwrap().network;
        assert_eq!((net.node_count(), net.edge_count()), (3, 2));
    }

    #[test]
    fn zero_length_line_is_reported() {
        let features = vec![record(0, line(&[(1.0, 1.0), (1.0, 1.0)]))];
        let built = build_network(0.01, &[layer()], &features).unwrap();
        assert_eq!(built.network.edge_count(), 0);
        assert_eq!(built.report.skipped.len(), 1);
    }

    #[test]
    fn unknown_layer_is_an_error() {
        let mut f = record(0, FeatureGeometry::Point(Point2D::new(0.0, 0.0)));
        f.source_layer = "rail".into();
        assert!(matches!(
            build_network(0.01, &[layer()], &[f]),
            Err(IngestError::UnknownLayer { .. })
        ));
    }

    #[test]
    fn polyline_split_keeps_interior_vertices() {
        let features = vec![
            record(0, line(&[(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (20.0, 10.0)])),
            record(1, FeatureGeometry::Point(Point2D::new(10.0, 5.0))),
        ];
        let net = build_network(0.01, &[layer()], &features).unwrap().network;
        assert_eq!(net.edge_count(), 2);
        let total: f64 = net.edges().map(|e| chain_length(&net.edge_chain(e))).sum();
        assert!((total - 30.0).abs() < 1e-9);
    }

    #[test]
    fn generated_ids_avoid_explicit_ones() {
        let mut p = record(1, FeatureGeometry::Point(Point2D::new(50.0, 50.0)));
        p.id = Some("n1".into());
        let features = vec![record(0, line(&[(0.0, 0.0), (10.0, 0.0)])), p];
        let net = build_network(0.01, &[layer()], &features).unwrap().network;
        let ids: Vec<&str> = net.nodes().map(|n| n.id.as_str()).collect();
        assert_eq!(ids, vec!["n1", "n2", "n3"]);
    }
}
