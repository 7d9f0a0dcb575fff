use std::collections::{BTreeMap, BTreeSet};

use chrono::{TimeZone, Utc};
use guides_core::access::{AccessPolicy, Role};
use guides_core::model::{Edge, InfrastructureNetwork, Layer, LayerKind, Node, Point2D, Scalar, Sensitivity};
use guides_core::repair::{
    audit_unflagged, detect_duplicate_nodes, detect_symbol_circles, resolve_flag, FlagLedger, Rule, SymbolParams,
    Verdict,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::p;

pub const EPS: f64 = 0.01;

pub fn at() -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
}

pub fn layer_net(kind: LayerKind) -> InfrastructureNetwork {
    let mut net = InfrastructureNetwork::new(EPS).unwrap();
    net.add_layer(Layer::new("L", kind, Sensitivity::Sensitive)).unwrap();
    net
}

pub fn add_node(net: &mut InfrastructureNetwork, id: &str, q: Point2D) {
    net.insert_node(Node::new(id, "L", q)).unwrap();
}

pub fn add_edge(net: &mut InfrastructureNetwork, id: &str, a: &str, b: &str) {
    net.insert_edge(Edge::new(id, "L", a, b)).unwrap();
}

pub fn accept_all(net: &mut InfrastructureNetwork, ledger: &mut FlagLedger, rule: Rule) {
    let policy = AccessPolicy::default();
    loop {
        let Some(id) = ledger.open_flags(rule).map(|f| f.id.clone()).next() else { break };
        resolve_flag(net, ledger, &policy, &id, Verdict::Accepted, Role::Crew, at()).unwrap();
    }
}

pub fn find(parent: &mut Vec<usize>, x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    parent[x] = r;
    r
}

pub fn union(parent: &mut Vec<usize>, a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    parent[ra.max(rb)] = ra.min(rb);
}

/// Random layer: well-separated base nodes on a jittered grid, plus chains
/// of near copies, plus random edges among all of them.
pub fn random_layer(rng: &mut ChaCha8Rng) -> InfrastructureNetwork {
    let mut net = layer_net(LayerKind::Pipes);
    let mut ids = Vec::new();
    let base = rng.gen_range(5..30);
    for i in 0..base {
        let q = p(
            (i % 6) as f64 * 10.0 + rng.gen_range(-3.0..3.0),
            (i / 6) as f64 * 10.0 + rng.gen_range(-3.0..3.0),
        );
        let id = format!("n{i:03}");
        add_node(&mut net, &id, q);
        ids.push((id, q));
    }
    let copies = rng.gen_range(0..15);
    for c in 0..copies {
        let (_, from) = ids[rng.gen_range(0..ids.len())].clone();
        let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let r = rng.gen_range(0.0..EPS * 0.45);
        let q = p(from.x + r * ang.cos(), from.y + r * ang.sin());
        let id = format!("d{c:03}");
        add_node(&mut net, &id, q);
        ids.push((id, q));
    }
    let edges = rng.gen_range(0..ids.len() * 2);
    let mut seen = BTreeSet::new();
    for k in 0..edges {
        let a = rng.gen_range(0..ids.len());
        let b = rng.gen_range(0..ids.len());
        if a == b || !seen.insert((a.min(b), a.max(b))) {
            continue;
        }
        add_edge(&mut net, &format!("e{k:03}"), &ids[a].0, &ids[b].0);
    }
    net
}

/// Random layers with near copies; accepting every merge leaves no pair
/// within ε, one survivor per ε-cluster, and the contracted reachability.
pub fn merge_suite(seed: u64, rounds: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for round in 0..rounds {
        let original = random_layer(&mut rng);
        let mut net = original.clone();
        let mut ledger = FlagLedger::new();
        detect_duplicate_nodes(&net, &mut ledger, "L").unwrap();
        accept_all(&mut net, &mut ledger, Rule::DuplicateNodes);

        // no two remaining nodes within ε
        let nodes: Vec<&Node> = net.nodes().collect();
        for (i, a) in nodes.iter().enumerate() {
            for b in &nodes[i + 1..] {
                assert!(a.position.distance(&b.position) > EPS, "round {round}: {} {}", a.id, b.id);
            }
        }

        // oracle: ε-clusters of the original, transitive
        let ids: Vec<String> = original.nodes().map(|n| n.id.clone()).collect();
        let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut cluster: Vec<usize> = (0..ids.len()).collect();
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                let (a, b) = (original.node(&ids[i]).unwrap(), original.node(&ids[j]).unwrap());
                if a.position.distance(&b.position) <= EPS {
                    union(&mut cluster, i, j);
                }
            }
        }
        // exactly one member of each cluster survives
        let mut survivor: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, id) in ids.iter().enumerate() {
            if net.node(id).is_some() {
                let c = find(&mut cluster, i);
                assert!(survivor.insert(c, i).is_none(), "round {round}: two survivors in one cluster");
            }
        }
        let clusters: BTreeSet<usize> = (0..ids.len()).map(|i| find(&mut cluster, i)).collect();
        assert_eq!(survivor.len(), clusters.len(), "round {round}");

        // reachability over the contracted original vs the result
        let mut before = cluster.clone();
        for e in original.edges() {
            let (a, b) = (index[e.endpoint_a.as_str()], index[e.endpoint_b.as_str()]);
            union(&mut before, a, b);
        }
        let mut after: Vec<usize> = (0..ids.len()).collect();
        for e in net.edges() {
            union(&mut after, index[e.endpoint_a.as_str()], index[e.endpoint_b.as_str()]);
        }
        let reps: Vec<usize> = clusters.iter().map(|c| survivor[c]).collect();
        for &x in &reps {
            for &y in &reps {
                assert_eq!(
                    find(&mut before, x) == find(&mut before, y),
                    find(&mut after, x) == find(&mut after, y),
                    "round {round}: reachability of {} and {}",
                    ids[x],
                    ids[y]
                );
            }
        }
        assert!(audit_unflagged(&original, &net, &ledger).is_empty());
        assert!(ledger.open_flags(Rule::DuplicateNodes).next().is_none());
    }
}

pub fn circle_net(n: usize, rx: f64, ry: f64) -> InfrastructureNetwork {
    let mut net = layer_net(LayerKind::Pipes);
    let c = p(50.0, 50.0);
    for i in 0..n {
        let a = std::f64::consts::TAU * i as f64 / n as f64;
        add_node(&mut net, &format!("c{i:02}"), p(c.x + rx * a.cos(), c.y + ry * a.sin()));
    }
    for i in 0..n {
        add_edge(&mut net, &format!("r{i:02}"), &format!("c{i:02}"), &format!("c{:02}", (i + 1) % n));
    }
    net
}

/// 12-node ring with three pipes attached at nodes 0, 4, 8.
pub fn circle_symbol_becomes_manhole() {
    let mut net = circle_net(12, 1.5, 1.5);
    // three pipes attached at ring nodes 0, 4, 8
    for (k, ring) in [0usize, 4, 8].into_iter().enumerate() {
        let a = std::f64::consts::TAU * ring as f64 / 12.0;
        add_node(&mut net, &format!("x{k}"), p(50.0 + 20.0 * a.cos(), 50.0 + 20.0 * a.sin()));
        add_edge(&mut net, &format!("a{k}"), &format!("c{ring:02}"), &format!("x{k}"));
    }
    let mut ledger = FlagLedger::new();
    let flags = detect_symbol_circles(&net, &mut ledger, "L", &SymbolParams::default()).unwrap();
    assert_eq!(flags.len(), 1);
    accept_all(&mut net, &mut ledger, Rule::SymbolCircle);

    let manholes: Vec<&Node> = net
        .nodes()
        .filter(|n| n.attributes.get("Is_manhole") == Some(&Scalar::Int(1)))
        .collect();
    assert_eq!(manholes.len(), 1);
    let m = manholes[0];
    assert!(m.position.distance(&p(50.0, 50.0)) < 1e-9);
    let neighbors: BTreeSet<String> = net.neighbors(&m.id).into_iter().collect();
    assert_eq!(neighbors, BTreeSet::from(["x0".to_string(), "x1".into(), "x2".into()]));
    assert_eq!(net.node_count(), 4);
    assert_eq!(net.edge_count(), 3);

    let again = detect_symbol_circles(&net, &mut ledger, "L", &SymbolParams::default()).unwrap();
    assert!(again.is_empty());
}

pub fn square_and_ellipse_are_not_symbols() {
    let mut ledger = FlagLedger::new();
    let square = circle_net(4, 1.5, 1.5);
    assert!(detect_symbol_circles(&square, &mut ledger, "L", &SymbolParams::default()).unwrap().is_empty());

    // 12-node square outline
    let mut sq = layer_net(LayerKind::Pipes);
    let corners = [p(0.0, 0.0), p(2.0, 0.0), p(2.0, 2.0), p(0.0, 2.0)];
    let mut k = 0;
    for i in 0..4 {
        for t in 0..3 {
            add_node(&mut sq, &format!("s{k:02}"), corners[i].lerp(&corners[(i + 1) % 4], t as f64 / 3.0));
            k += 1;
        }
    }
    for i in 0..12 {
        add_edge(&mut sq, &format!("q{i:02}"), &format!("s{i:02}"), &format!("s{:02}", (i + 1) % 12));
    }
    assert!(detect_symbol_circles(&sq, &mut ledger, "L", &SymbolParams::default()).unwrap().is_empty());

    let ellipse = circle_net(12, 2.0, 1.0);
    assert!(detect_symbol_circles(&ellipse, &mut ledger, "L", &SymbolParams::default()).unwrap().is_empty());
    assert!(ledger.flags.is_empty());
}
