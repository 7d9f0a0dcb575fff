use std::collections::BTreeSet;

use guides_core::access::{AccessPolicy, Capability, Decision, DenyReason, Role};
use guides_core::geometry::{BBox, SpatialOp};
use guides_core::model::{Edge, InfrastructureNetwork, Layer, LayerKind, Node, Point2D, Sensitivity};
use guides_core::ontology::{integrated_query, Region, RegionTimeQuery};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The default grant table, spelled out.
pub fn expected(role: Role, cap: Capability, sensitivity: Sensitivity) -> Decision {
    use Capability::*;
    let granted: &[Capability] = match role {
        Role::Admin => &[ReadPublic, ReadSensitive, Update, ResolveFlags],
        Role::Planner => &[ReadPublic, ReadSensitive],
        Role::Crew => &[ReadPublic, ReadSensitive, Update, ResolveFlags],
        Role::Public => &[ReadPublic],
    };
    if !granted.contains(&cap) {
        Decision::Deny(DenyReason::NoGrant)
    } else if sensitivity == Sensitivity::Sensitive && !granted.contains(&ReadSensitive) {
        Decision::Deny(DenyReason::SensitiveLayer)
    } else {
        Decision::Allow
    }
}

/// Every role × capability × kind × sensitivity against `expected`.
pub fn exhaustive_default_table() {
    let policy = AccessPolicy::default();
    let mut rows = 0;
    for role in Role::ALL {
        for cap in Capability::ALL {
            for kind in LayerKind::ALL {
                for s in [Sensitivity::Public, Sensitivity::Sensitive] {
                    let layer = Layer::new("x", kind, s);
                    assert_eq!(
                        policy.authorize(role, cap, &layer),
                        expected(role, cap, s),
                        "{role} {} {kind:?} {s:?}",
                        cap.as_str()
                    );
                    rows += 1;
                }
            }
        }
    }
    assert_eq!(rows, 4 * 4 * LayerKind::ALL.len() * 2);
}

/// Mixed-sensitivity network: every layer kind twice, once per sensitivity.
pub fn mixed(rng: &mut ChaCha8Rng) -> InfrastructureNetwork {
    let mut net = InfrastructureNetwork::new(0.01).unwrap();
    for kind in [LayerKind::Pipes, LayerKind::Streets, LayerKind::Rail, LayerKind::Other] {
        for s in [Sensitivity::Public, Sensitivity::Sensitive] {
            let id = format!("{}_{}", kind.as_str(), if s == Sensitivity::Public { "open" } else { "closed" });
            net.add_layer(Layer::new(&id, kind, s)).unwrap();
            for i in 0..40 {
                let p = Point2D::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
                net.insert_node(Node::new(format!("{id}_n{i}"), &id, p)).unwrap();
            }
            for i in 0..20 {
                let (a, b) = (format!("{id}_n{}", 2 * i), format!("{id}_n{}", 2 * i + 1));
                net.insert_edge(Edge::new(format!("{id}_e{i}"), &id, a, b)).unwrap();
            }
        }
    }
    net
}

/// 10⁴ random public box queries over a mixed-sensitivity network.
pub fn fuzzed_public_queries_never_leak() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let net = mixed(&mut rng);
    let sensitive: BTreeSet<&str> = net
        .layers()
        .filter(|l| l.sensitivity == Sensitivity::Sensitive)
        .map(|l| l.id.as_str())
        .collect();
    let kinds = [LayerKind::Pipes, LayerKind::Streets, LayerKind::Rail, LayerKind::Other, LayerKind::Census];
    let ops = [SpatialOp::Within, SpatialOp::Crosses, SpatialOp::Intersects];
    let policy = AccessPolicy::default();
    let mut leaks = 0;
    for _ in 0..10_000 {
        let (x, y) = (rng.gen_range(-20.0..100.0), rng.gen_range(-20.0..100.0));
        let (w, h) = (rng.gen_range(0.5..120.0), rng.gen_range(0.5..120.0));
        let mut layer_kinds: BTreeSet<LayerKind> = kinds.into_iter().filter(|_| rng.gen_bool(0.5)).collect();
        layer_kinds.insert(kinds[rng.gen_range(0..kinds.len())]);
        let q = RegionTimeQuery {
            region: Region::BBox(BBox::new(x, y, x + w, y + h)),
            interval: None,
            layer_kinds,
            predicate: ops[rng.gen_range(0..3)],
        };
        let r = integrated_query(&q, None, &net, &policy, Role::Public).unwrap();
        leaks += r
            .layers
            .iter()
            .filter(|(l, _)| sensitive.contains(l.as_str()))
            .map(|(_, hits)| hits.len())
            .sum::<usize>();
        leaks += r.layers.values().flatten().filter(|f| f.id.contains("closed")).count();
        for d in &r.denied_layers {
            assert!(sensitive.contains(d.layer.as_str()));
            assert_eq!(d.reason, DenyReason::SensitiveLayer);
        }
        let text = r.to_geojson(&net).unwrap().to_string();
        assert!(!text.contains("_closed_"));
    }
    assert_eq!(leaks, 0);
}
