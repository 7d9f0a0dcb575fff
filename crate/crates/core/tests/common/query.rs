use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use guides_core::access::{AccessPolicy, Role};
use guides_core::geometry::{predicate, BBox, Geometry, MultiPolygonGeometry, PolygonGeometry, SpatialOp};
use guides_core::model::{
    AreaFeature, Attributes, Edge, InfrastructureNetwork, Layer, LayerKind, Node, Point2D, Scalar, Sensitivity,
    TimeInterval,
};
use guides_core::ontology::{integrated_query, QueryResult, Region, RegionTimeQuery};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-4;
pub const OPS: [SpatialOp; 3] = [SpatialOp::Within, SpatialOp::Crosses, SpatialOp::Intersects];

pub fn day(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

pub fn years(a: i32, b: i32) -> TimeInterval {
    TimeInterval::new(day(a, 1, 1), day(b, 12, 31)).unwrap()
}

// Lattice offsets keep every vertex at least 0.25 off any integer line, so
// nothing lands on the boundary of an integer-cornered query box.
pub fn lattice(i: i32, j: i32) -> Point2D {
    Point2D::new(i as f64 + 0.5, j as f64 + 0.25)
}

pub fn rect(b: BBox) -> MultiPolygonGeometry {
    MultiPolygonGeometry::new(vec![PolygonGeometry::from_bbox(b).unwrap()])
}

pub const LINEAR: [(&str, LayerKind, Sensitivity); 3] = [
    ("pipes", LayerKind::Pipes, Sensitivity::Sensitive),
    ("streets", LayerKind::Streets, Sensitivity::Public),
    ("rail", LayerKind::Rail, Sensitivity::Sensitive),
];

/// Random network of `n` features over a `size`×`size` lattice: nodes and
/// straight or one-bend edges on three linear layers, boxes on a census layer.
pub fn fixture(n: usize, size: i32, seed: u64) -> InfrastructureNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = InfrastructureNetwork::new(EPS).unwrap();
    for (id, kind, s) in LINEAR {
        net.add_layer(Layer::new(id, kind, s)).unwrap();
    }
    let mut blocks = Layer::new("blocks", LayerKind::Census, Sensitivity::Public);
    blocks.valid_interval = Some(years(2010, 2012));
    net.add_layer(blocks).unwrap();

    let mut nodes: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    let mut count = 0;
    while count < n {
        let valid = rng.gen_bool(0.3).then(|| {
            let a = rng.gen_range(2000..2020);
            years(a, a + rng.gen_range(0..4))
        });
        let roll: f64 = rng.gen();
        let (layer, _, _) = LINEAR[rng.gen_range(0..LINEAR.len())];
        let have = nodes.get(layer).map_or(0, Vec::len);
        if roll < 0.15 {
            let (i, j) = (rng.gen_range(0..size), rng.gen_range(0..size));
            let (w, h) = (rng.gen_range(1..8), rng.gen_range(1..8));
            let b = BBox::new(i as f64 + 0.5, j as f64 + 0.25, (i + w) as f64 + 0.5, (j + h) as f64 + 0.25);
            net.insert_area(AreaFeature {
                id: format!("a{count}"),
                layer_id: "blocks".into(),
                geometry: rect(b),
                attributes: Attributes::new(),
                flag_ids: Vec::new(),
                valid,
            })
            .unwrap();
        } else if roll < 0.55 || have < 2 {
            let id = format!("n{count}");
            let mut node = Node::new(&id, layer, lattice(rng.gen_range(0..size), rng.gen_range(0..size)));
            node.valid = valid;
            net.insert_node(node).unwrap();
            nodes.entry(layer).or_default().push(id);
        } else {
            let ids = &nodes[layer];
            let a = &ids[rng.gen_range(0..ids.len())];
            let b = &ids[rng.gen_range(0..ids.len())];
            if a == b {
                continue;
            }
            let mut edge = Edge::new(format!("e{count}"), layer, a.as_str(), b.as_str());
            if rng.gen_bool(0.3) {
                let (pa, pb) = (net.node(a).unwrap().position, net.node(b).unwrap().position);
                let bend = lattice(rng.gen_range(0..size), rng.gen_range(0..size));
                if bend != pa && bend != pb {
                    edge.polyline = vec![pa, bend, pb];
                }
            }
            edge.valid = valid;
            net.insert_edge(edge).unwrap();
        }
        count += 1;
    }
    net
}

pub fn readable(role: Role, s: Sensitivity) -> bool {
    role != Role::Public || s == Sensitivity::Public
}

pub fn interval_keeps(want: Option<&TimeInterval>, have: Option<TimeInterval>) -> bool {
    match (want, have) {
        (Some(w), Some(h)) => w.start <= h.end && h.start <= w.end,
        _ => true,
    }
}

pub type Answer = (BTreeMap<String, BTreeSet<String>>, BTreeSet<String>);

pub fn answer(r: &QueryResult) -> Answer {
    let layers = r
        .layers
        .iter()
        .map(|(l, fs)| (l.clone(), fs.iter().map(|f| f.id.clone()).collect()))
        .collect();
    (layers, r.denied_layers.iter().map(|d| d.layer.clone()).collect())
}

/// Feature geometries straight from the model, with their validity.
pub fn features(net: &InfrastructureNetwork, layer: &Layer) -> Vec<(String, Geometry, Option<TimeInterval>)> {
    let fallback = layer.valid_interval;
    let mut out = Vec::new();
    for n in net.nodes().filter(|n| n.layer_id == layer.id) {
        out.push((n.id.clone(), Geometry::Point(n.position), n.valid.or(fallback)));
    }
    for e in net.edges().filter(|e| e.layer_id == layer.id) {
        out.push((e.id.clone(), Geometry::LineString(net.edge_chain(e)), e.valid.or(fallback)));
    }
    for a in net.areas().filter(|a| a.layer_id == layer.id) {
        out.push((a.id.clone(), Geometry::MultiPolygon(a.geometry.clone()), a.valid.or(fallback)));
    }
    out
}

/// Brute force: every feature of every requested layer, filtered.
pub fn scan(
    net: &InfrastructureNetwork,
    region: &Geometry,
    kinds: &BTreeSet<LayerKind>,
    interval: Option<&TimeInterval>,
    op: SpatialOp,
    role: Role,
) -> Answer {
    let mut layers = BTreeMap::new();
    let mut denied = BTreeSet::new();
    for layer in net.layers().filter(|l| kinds.contains(&l.kind)) {
        if !readable(role, layer.sensitivity) {
            denied.insert(layer.id.clone());
            continue;
        }
        let hits = features(net, layer)
            .into_iter()
            .filter(|(_, g, t)| interval_keeps(interval, *t) && predicate(g, region, op, EPS).unwrap())
            .map(|(id, _, _)| id)
            .collect();
        layers.insert(layer.id.clone(), hits);
    }
    (layers, denied)
}

pub fn inside(p: Point2D, b: &BBox) -> bool {
    b.min_x < p.x && p.x < b.max_x && b.min_y < p.y && p.y < b.max_y
}

pub fn corner_sides(a: Point2D, c: Point2D, b: &BBox) -> [f64; 4] {
    [(b.min_x, b.min_y), (b.max_x, b.min_y), (b.max_x, b.max_y), (b.min_x, b.max_y)]
        .map(|(x, y)| (c.x - a.x) * (y - a.y) - (c.y - a.y) * (x - a.x))
}

/// Separating-axis test of segment `ac` against the box. Exact on the
/// lattice: all products are multiples of 1/8.
pub fn segment_meets(a: Point2D, c: Point2D, b: &BBox, open: bool) -> bool {
    if a.x.max(c.x) < b.min_x || a.x.min(c.x) > b.max_x || a.y.max(c.y) < b.min_y || a.y.min(c.y) > b.max_y {
        return false;
    }
    let s = corner_sides(a, c, b);
    if open {
        !(s.iter().all(|v| *v >= 0.0) || s.iter().all(|v| *v <= 0.0))
    } else {
        !(s.iter().all(|v| *v > 0.0) || s.iter().all(|v| *v < 0.0))
    }
}

/// Independent answer for an axis-aligned query box on lattice data.
pub fn box_oracle(g: &Geometry, b: &BBox, op: SpatialOp) -> bool {
    match g {
        Geometry::Point(p) => op != SpatialOp::Crosses && inside(*p, b),
        Geometry::LineString(c) => {
            let all_in = c.iter().all(|p| inside(*p, b));
            let meets = |open| c.windows(2).any(|w| segment_meets(w[0], w[1], b, open));
            match op {
                SpatialOp::Within => all_in,
                SpatialOp::Intersects => meets(false),
                SpatialOp::Crosses => meets(true) && !all_in,
                SpatialOp::Contains => unreachable!(),
            }
        }
        other => {
            let a = other.bbox();
            match op {
                SpatialOp::Within => inside(Point2D::new(a.min_x, a.min_y), b) && inside(Point2D::new(a.max_x, a.max_y), b),
                SpatialOp::Intersects => a.intersects(b),
                _ => false,
            }
        }
    }
}

pub fn box_answer(
    net: &InfrastructureNetwork,
    b: &BBox,
    kinds: &BTreeSet<LayerKind>,
    interval: Option<&TimeInterval>,
    op: SpatialOp,
    role: Role,
) -> Answer {
    let mut layers = BTreeMap::new();
    let mut denied = BTreeSet::new();
    for layer in net.layers().filter(|l| kinds.contains(&l.kind)) {
        if !readable(role, layer.sensitivity) {
            denied.insert(layer.id.clone());
            continue;
        }
        let hits = features(net, layer)
            .into_iter()
            .filter(|(_, g, t)| interval_keeps(interval, *t) && box_oracle(g, b, op))
            .map(|(id, _, _)| id)
            .collect();
        layers.insert(layer.id.clone(), hits);
    }
    (layers, denied)
}

pub fn random_box(rng: &mut ChaCha8Rng, size: i32) -> BBox {
    let (x, y) = (rng.gen_range(-2..size), rng.gen_range(-2..size));
    let (w, h) = (rng.gen_range(1..size / 2), rng.gen_range(1..size / 2));
    BBox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64)
}

pub fn random_kinds(rng: &mut ChaCha8Rng) -> BTreeSet<LayerKind> {
    let all = [LayerKind::Pipes, LayerKind::Streets, LayerKind::Rail, LayerKind::Census];
    let mut kinds: BTreeSet<LayerKind> = all.into_iter().filter(|_| rng.gen_bool(0.6)).collect();
    if kinds.is_empty() {
        kinds.insert(LayerKind::Pipes);
    }
    kinds
}

pub fn random_interval(rng: &mut ChaCha8Rng) -> Option<TimeInterval> {
    rng.gen_bool(0.5).then(|| {
        let a = rng.gen_range(1998..2022);
        years(a, a + rng.gen_range(0..3))
    })
}

pub fn random_role(rng: &mut ChaCha8Rng) -> Role {
    [Role::Admin, Role::Planner, Role::Crew, Role::Public][rng.gen_range(0..4)]
}

pub fn star(rng: &mut ChaCha8Rng, size: i32) -> MultiPolygonGeometry {
    let c = Point2D::new(rng.gen_range(0.0..size as f64), rng.gen_range(0.0..size as f64));
    let k = rng.gen_range(3..9);
    let ring: Vec<Point2D> = (0..k)
        .map(|i| {
            let a = std::f64::consts::TAU * (i as f64 + rng.gen_range(0.1..0.9)) / k as f64;
            let r = rng.gen_range(2.0..size as f64 / 3.0);
            Point2D::new(c.x + r * a.cos(), c.y + r * a.sin())
        })
        .collect();
    MultiPolygonGeometry::new(vec![PolygonGeometry::new(ring, Vec::new()).unwrap()])
}

/// Box queries on fixtures up to 10⁴ features against the lattice oracle.
pub fn box_queries_match_independent_oracle() {
    let policy = AccessPolicy::default();
    for (n, size, seed) in [(50, 12, 1), (1_000, 40, 2), (10_000, 100, 3)] {
        let net = fixture(n, size, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let rounds = if n > 5_000 { 10 } else { 40 };
        for _ in 0..rounds {
            let b = random_box(&mut rng, size);
            let kinds = random_kinds(&mut rng);
            let interval = random_interval(&mut rng);
            let role = random_role(&mut rng);
            for op in OPS {
                let q = RegionTimeQuery {
                    region: Region::BBox(b),
                    interval,
                    layer_kinds: kinds.clone(),
                    predicate: op,
                };
                let got = answer(&integrated_query(&q, None, &net, &policy, role).unwrap());
                let want = box_answer(&net, &b, &kinds, interval.as_ref(), op, role);
                assert_eq!(got, want, "n={n} box={b:?} op={op:?} role={role:?}");
            }
        }
    }
}

/// Star-shaped polygon queries against a brute-force scan.
pub fn polygon_queries_match_scan() {
    let policy = AccessPolicy::default();
    let net = fixture(3_000, 60, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    for _ in 0..25 {
        let mp = star(&mut rng, 60);
        let region = Geometry::Polygon(mp.polygons[0].clone());
        let kinds = random_kinds(&mut rng);
        let interval = random_interval(&mut rng);
        let role = random_role(&mut rng);
        for op in OPS {
            let q = RegionTimeQuery {
                region: Region::Polygon(mp.clone()),
                interval,
                layer_kinds: kinds.clone(),
                predicate: op,
            };
            let got = answer(&integrated_query(&q, None, &net, &policy, role).unwrap());
            let want = scan(&net, &region, &kinds, interval.as_ref(), op, role);
            assert_eq!(got, want, "op={op:?}");
        }
    }
}

/// Census blocks (0..100, 100..200, 200..300 along x) worth 100, 250, 400,
/// and one straight pipe `burst` along y = 50.
pub fn three_blocks(x0: f64, x1: f64) -> InfrastructureNetwork {
    let mut net = InfrastructureNetwork::new(0.01).unwrap();
    net.add_layer(Layer::new("census", LayerKind::Census, Sensitivity::Public)).unwrap();
    net.add_layer(Layer::new("pipes", LayerKind::Pipes, Sensitivity::Sensitive)).unwrap();
    for (id, x, v) in [("B1", 0.0, 100), ("B2", 100.0, 250), ("B3", 200.0, 400)] {
        net.insert_area(AreaFeature {
            id: id.into(),
            layer_id: "census".into(),
            geometry: rect(BBox::new(x, 0.0, x + 100.0, 100.0)),
            attributes: [("low_income".to_string(), Scalar::Int(v))].into(),
            flag_ids: Vec::new(),
            valid: None,
        })
        .unwrap();
    }
    net.insert_node(Node::new("a", "pipes", Point2D::new(x0, 50.0))).unwrap();
    net.insert_node(Node::new("b", "pipes", Point2D::new(x1, 50.0))).unwrap();
    net.insert_edge(Edge::new("burst", "pipes", "a", "b")).unwrap();
    net
}

/// Oracle for `three_blocks`: a block counts when the pipe's open x-range
/// meets the block's open x-range.
pub fn three_blocks_oracle(x0: f64, x1: f64) -> (Vec<String>, f64) {
    let (lo, hi) = (x0.min(x1), x0.max(x1));
    let mut blocks = Vec::new();
    let mut sum = 0.0;
    for (id, x, v) in [("B1", 0.0, 100.0), ("B2", 100.0, 250.0), ("B3", 200.0, 400.0)] {
        if lo < x + 100.0 && x < hi {
            blocks.push(id.to_string());
            sum += v;
        }
    }
    (blocks, sum)
}
