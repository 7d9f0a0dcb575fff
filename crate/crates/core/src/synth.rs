//! Synthetic street/pipe/building scenes, pipe removal, and the
//! precision/recall harness for missing-pipe inference.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::polygonize_layer;
use crate::model::{
    Edge, EditAction, EditBatch, InfrastructureNetwork, Layer, LayerKind, ModelError, Node, Point2D,
    Scalar, Sensitivity, DEFAULT_EPSILON,
};
use crate::repair::{
    detect_dangling_ends, infer_missing_edges, FlagLedger, InferenceParams, RepairError,
    SuggestionAction,
};

pub const STREETS: &str = "streets";
pub const PIPES: &str = "pipes";
pub const BUILDINGS: &str = "buildings";

/// Pipe role attribute: `main` edges follow streets; the rest are leads.
pub const ROLE_KEY: &str = "role";

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Repair(#[from] RepairError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    /// Block edge length in meters.
    pub block: f64,
}

/// Scene shape knobs. Lengths are fractions of the block size so scenes
/// scale with the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    /// Pipe edges per street segment.
    pub segments_per_block: usize,
    /// One building per block side, connected by a service pipe.
    pub buildings: bool,
    /// Share of eligible main-pipe nodes carrying an off-street hydrant
    /// lead that ends in the open.
    pub hydrant_fraction: f64,
    /// Share of eligible main-pipe nodes carrying a short capped lateral
    /// that stays under the street.
    pub lateral_fraction: f64,
    pub hydrant_lead: f64,
    pub lateral_lead: f64,
    pub building_setback: f64,
    pub building_depth: f64,
    pub building_width: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            segments_per_block: 1,
            buildings: true,
            hydrant_fraction: 0.0,
            lateral_fraction: 0.0,
            hydrant_lead: 0.10,
            lateral_lead: 0.04,
            building_setback: 0.12,
            building_depth: 0.20,
            building_width: 0.30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub seed: u64,
    pub grid: GridSpec,
    pub params: SceneParams,
    pub network: InfrastructureNetwork,
    /// Main pipe edges (the removable ground truth), sorted.
    pub ground_truth_edges: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedEdge {
    pub id: String,
    pub node_a: String,
    pub node_b: String,
    pub position_a: Point2D,
    pub position_b: Point2D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptedScene {
    pub network: InfrastructureNetwork,
    pub removed: Vec<RemovedEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub seed: u64,
    pub removal_fraction: f64,
    pub params: InferenceParams,
    pub constraint: bool,
    pub removed: usize,
    pub suggested: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Pinned configuration of the reference experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceScene {
    pub seed: u64,
    pub grid: GridSpec,
    pub params: SceneParams,
    pub removal_fraction: f64,
    pub inference: InferenceParams,
}

impl Default for ReferenceScene {
    fn default() -> Self {
        Self {
            seed: 42,
            grid: GridSpec {
                rows: 10,
                cols: 10,
                block: 100.0,
            },
            params: SceneParams {
                segments_per_block: 4,
                hydrant_fraction: 0.17,
                lateral_fraction: 0.02,
                ..SceneParams::default()
            },
            removal_fraction: 0.2,
            inference: InferenceParams::default(),
        }
    }
}

struct Builder {
    net: InfrastructureNetwork,
    counters: [u64; 6],
}

impl Builder {
    fn next(&mut self, slot: usize, prefix: &str) -> String {
        self.counters[slot] += 1;
        format!("{prefix}{}", self.counters[slot])
    }

    fn node(&mut self, layer: &str, p: Point2D) -> Result<String, ModelError> {
        let (slot, prefix) = match layer {
            STREETS => (0, "s"),
            PIPES => (1, "p"),
            _ => (2, "b"),
        };
        let id = self.next(slot, prefix);
        self.net.insert_node(Node::new(id.clone(), layer, p))?;
        Ok(id)
    }

    fn edge(&mut self, layer: &str, a: &str, b: &str, role: Option<&str>) -> Result<String, ModelError> {
        let (slot, prefix) = match layer {
            STREETS => (3, "se"),
            PIPES => (4, "pe"),
            _ => (5, "be"),
        };
        let id = self.next(slot, prefix);
        let mut edge = Edge::new(id.clone(), layer, a, b);
        if let Some(role) = role {
            edge.attributes.insert(ROLE_KEY.into(), Scalar::Text(role.into()));
        }
        self.net.insert_edge(edge)?;
        Ok(id)
    }
}

fn check_grid(grid: &GridSpec, params: &SceneParams) -> Result<(), SynthError> {
    if grid.rows < 2 || grid.cols < 2 {
        return Err(SynthError::InvalidArgument("rows and cols must be at least 2".into()));
    }
    if !(grid.block.is_finite() && grid.block > 0.0) {
        return Err(SynthError::InvalidArgument("block size must be positive".into()));
    }
    if params.segments_per_block == 0 {
        return Err(SynthError::InvalidArgument("segments_per_block must be at least 1".into()));
    }
    for f in [params.hydrant_fraction, params.lateral_fraction] {
        if !(0.0..=1.0).contains(&f) {
            return Err(SynthError::InvalidArgument("fractions must lie in [0, 1]".into()));
        }
    }
    if params.hydrant_fraction + params.lateral_fraction > 1.0 {
        return Err(SynthError::InvalidArgument("hydrant and lateral fractions exceed 1".into()));
    }
    if params.building_setback + params.building_depth >= 0.5 || params.building_width >= 0.5 {
        return Err(SynthError::InvalidArgument("buildings do not fit inside a block".into()));
    }
    Ok(())
}

/// Street side of a node on a street chain: the unit normal pointing into
/// the block on that side (+1) or the opposite one (-1).
fn normal(horizontal: bool, side: f64) -> Point2D {
    if horizontal {
        Point2D::new(0.0, side)
    } else {
        Point2D::new(side, 0.0)
    }
}

/// Orthogonal street grid with co-axial pipe mains, optional hydrant and
/// lateral leads, and one building per block side with a service pipe.
pub fn generate_scene(seed: u64, grid: GridSpec, params: SceneParams) -> Result<SyntheticScene, SynthError> {
    check_grid(&grid, &params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Builder {
        net: InfrastructureNetwork::new(DEFAULT_EPSILON)?,
        counters: [0; 6],
    };
    b.net.add_layer(Layer::new(STREETS, LayerKind::Streets, Sensitivity::Public))?;
    b.net.add_layer(Layer::new(PIPES, LayerKind::Pipes, Sensitivity::Sensitive))?;
    b.net.add_layer(Layer::new(BUILDINGS, LayerKind::Buildings, Sensitivity::Public))?;
    let bl = grid.block;
    let at = |r: usize, c: usize| Point2D::new(c as f64 * bl, r as f64 * bl);

    let mut street_nodes = vec![vec![String::new(); grid.cols]; grid.rows];
    let mut pipe_nodes = vec![vec![String::new(); grid.cols]; grid.rows];
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            street_nodes[r][c] = b.node(STREETS, at(r, c))?;
            pipe_nodes[r][c] = b.node(PIPES, at(r, c))?;
        }
    }

    // (start, end, horizontal, row, col) for every street segment
    let mut segments = Vec::new();
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            if c + 1 < grid.cols {
                segments.push(((r, c), (r, c + 1), true));
            }
            if r + 1 < grid.rows {
                segments.push(((r, c), (r + 1, c), false));
            }
        }
    }
    let k = params.segments_per_block;
    let mut ground_truth = Vec::new();
    // interior pipe nodes eligible for leads: (id, position, horizontal)
    let mut lead_slots = Vec::new();
    // (node id, position, horizontal, sides with a block)
    let mut service_slots = Vec::new();
    for &((r0, c0), (r1, c1), horizontal) in &segments {
        b.edge(STREETS, &street_nodes[r0][c0].clone(), &street_nodes[r1][c1].clone(), None)?;
        let (p0, p1) = (at(r0, c0), at(r1, c1));
        let mut chain = vec![pipe_nodes[r0][c0].clone()];
        for i in 1..k {
            let p = p0.lerp(&p1, i as f64 / k as f64);
            let id = b.node(PIPES, p)?;
            chain.push(id);
        }
        chain.push(pipe_nodes[r1][c1].clone());
        for w in chain.windows(2) {
            ground_truth.push(b.edge(PIPES, &w[0], &w[1], Some("main"))?);
        }
        // blocks on either side of this segment
        let sides: Vec<f64> = if horizontal {
            [(-1.0, r0 > 0), (1.0, r0 + 1 < grid.rows)]
        } else {
            [(-1.0, c0 > 0), (1.0, c0 + 1 < grid.cols)]
        }
        .into_iter()
        .filter(|(_, ok)| *ok)
        .map(|(s, _)| s)
        .collect();
        // service pipes attach to the chain node nearest the segment middle
        let mid = p0.lerp(&p1, 0.5);
        let (svc, _) = chain
            .iter()
            .map(|id| (id.clone(), b.net.node(id).expect("chain node").position.distance(&mid)))
            .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)))
            .expect("chain has nodes");
        service_slots.push((svc.clone(), mid, horizontal, sides));
        for id in &chain[1..chain.len() - 1] {
            if *id != svc {
                lead_slots.push((id.clone(), b.net.node(id).expect("chain node").position, horizontal));
            }
        }
    }

    if params.buildings {
        for (svc, mid, horizontal, sides) in &service_slots {
            for &side in sides {
                let n = normal(*horizontal, side);
                let along = if *horizontal {
                    Point2D::new(1.0, 0.0)
                } else {
                    Point2D::new(0.0, 1.0)
                };
                let jitter = rng.gen_range(-0.02..0.02) * bl;
                let near = params.building_setback * bl;
                let far = near + params.building_depth * bl;
                let half = params.building_width * bl / 2.0;
                let corner = |u: f64, v: f64| {
                    Point2D::new(
                        mid.x + along.x * (u + jitter) + n.x * v,
                        mid.y + along.y * (u + jitter) + n.y * v,
                    )
                };
                let ring = [corner(-half, near), corner(half, near), corner(half, far), corner(-half, far)];
                let ids: Vec<String> = ring
                    .iter()
                    .map(|p| b.node(BUILDINGS, *p))
                    .collect::<Result<_, _>>()?;
                for i in 0..4 {
                    b.edge(BUILDINGS, &ids[i], &ids[(i + 1) % 4], None)?;
                }
                let inside = corner(-jitter, near + 0.25 * params.building_depth * bl);
                let end = b.node(PIPES, inside)?;
                b.edge(PIPES, svc, &end, Some("service"))?;
            }
        }
    }

    // leads hang off interior chain nodes; each node gets at most one
    for (id, p, horizontal) in &lead_slots {
        let roll: f64 = rng.gen();
        let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let (len, role) = if roll < params.hydrant_fraction {
            (params.hydrant_lead * bl, "hydrant")
        } else if roll < params.hydrant_fraction + params.lateral_fraction {
            (params.lateral_lead * bl, "lateral")
        } else {
            continue;
        };
        let n = normal(*horizontal, side);
        let end = b.node(PIPES, Point2D::new(p.x + n.x * len, p.y + n.y * len))?;
        b.edge(PIPES, id, &end, Some(role))?;
    }

    ground_truth.sort();
    Ok(SyntheticScene {
        seed,
        grid,
        params,
        network: b.net,
        ground_truth_edges: ground_truth,
    })
}

/// Remove ⌈p·n⌉ of the scene's main pipe edges, chosen uniformly with a
/// seeded generator.
pub fn corrupt_scene(scene: &SyntheticScene, p: f64, seed: u64) -> Result<CorruptedScene, SynthError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(SynthError::InvalidArgument(format!("removal fraction must lie in (0, 1), got {p}")));
    }
    let n = scene.ground_truth_edges.len();
    let k = ((p * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let k = k.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut picked: Vec<usize> = sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    let mut network = scene.network.clone();
    let mut batch = EditBatch::new();
    let mut removed = Vec::new();
    for i in picked {
        let id = &scene.ground_truth_edges[i];
        let e = network.edge(id).expect("ground truth edge");
        removed.push(RemovedEdge {
            id: id.clone(),
            node_a: e.endpoint_a.clone(),
            node_b: e.endpoint_b.clone(),
            position_a: network.node(&e.endpoint_a).expect("endpoint").position,
            position_b: network.node(&e.endpoint_b).expect("endpoint").position,
        });
        batch.push(EditAction::RemoveEdge { id: id.clone() });
    }
    network.apply_edit(&batch)?;
    Ok(CorruptedScene { network, removed })
}

/// Score suggested links against the removed edges. A suggestion is a true
/// positive when it joins both ends of a not-yet-matched removed edge (by
/// id, or by position within `tolerance`).
pub fn evaluate_inference(
    corrupted: &InfrastructureNetwork,
    suggestions: &[(String, String)],
    removed: &[RemovedEdge],
    tolerance: f64,
) -> (usize, usize) {
    let pos = |id: &str| corrupted.node(id).map(|n| n.position);
    let near = |id: &str, want_id: &str, want: Point2D| {
        id == want_id || pos(id).is_some_and(|p| p.distance(&want) <= tolerance)
    };
    let mut used = vec![false; removed.len()];
    let mut tp = 0;
    for (from, to) in suggestions {
        let hit = removed.iter().enumerate().position(|(i, r)| {
            !used[i]
                && ((near(from, &r.node_a, r.position_a) && near(to, &r.node_b, r.position_b))
                    || (near(from, &r.node_b, r.position_b) && near(to, &r.node_a, r.position_a)))
        });
        if let Some(i) = hit {
            used[i] = true;
            tp += 1;
        }
    }
    (tp, suggestions.len() - tp)
}

pub fn report(
    seed: u64,
    p: f64,
    params: InferenceParams,
    constraint: bool,
    removed: usize,
    tp: usize,
    fp: usize,
) -> EvaluationReport {
    let suggested = tp + fp;
    EvaluationReport {
        seed,
        removal_fraction: p,
        params,
        constraint,
        removed,
        suggested,
        true_positives: tp,
        false_positives: fp,
        precision: if suggested == 0 { 1.0 } else { tp as f64 / suggested as f64 },
        recall: if removed == 0 { 0.0 } else { tp as f64 / removed as f64 },
    }
}

/// Dangling-end detection plus one inference pass on a corrupted scene,
/// with or without the street corridor constraint.
pub fn run_inference(
    corrupted: &CorruptedScene,
    params: &InferenceParams,
    constraint: bool,
) -> Result<(FlagLedger, Vec<(String, String)>), SynthError> {
    let net = &corrupted.network;
    let footprints = polygonize_layer(net, BUILDINGS)?.footprints;
    let mut ledger = FlagLedger::new();
    detect_dangling_ends(net, &mut ledger, PIPES, &footprints)?;
    let streets = constraint.then_some(STREETS);
    let ids = infer_missing_edges(net, &mut ledger, PIPES, streets, params)?;
    let links = ids
        .iter()
        .filter_map(|sid| match &ledger.suggestion(sid)?.action {
            SuggestionAction::AddEdge { from, to, .. } => Some((from.clone(), to.clone())),
            _ => None,
        })
        .collect();
    Ok((ledger, links))
}

/// Full experiment for one seed: generate, corrupt, infer, score.
pub fn run_experiment(
    seed: u64,
    grid: GridSpec,
    scene: SceneParams,
    p: f64,
    params: &InferenceParams,
    constraint: bool,
) -> Result<EvaluationReport, SynthError> {
    let generated = generate_scene(seed, grid, scene)?;
    let corrupted = corrupt_scene(&generated, p, seed)?;
    let (_, links) = run_inference(&corrupted, params, constraint)?;
    let (tp, fp) = evaluate_inference(&corrupted.network, &links, &corrupted.removed, DEFAULT_EPSILON);
    Ok(report(seed, p, *params, constraint, corrupted.removed.len(), tp, fp))
}

pub const CSV_HEADER: [&str; 10] = ["seed", "p", "R", "W", "constraint", "TP", "FP", "removed", "precision", "recall"];

/// CSV with one row per report.
pub fn write_csv<W: Write>(out: W, reports: &[EvaluationReport]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in reports {
        w.write_record([
            r.seed.to_string(),
            r.removal_fraction.to_string(),
            r.params.search_radius.to_string(),
            r.params.corridor_half_width.to_string(),
            r.constraint.to_string(),
            r.true_positives.to_string(),
            r.false_positives.to_string(),
            r.removed.to_string(),
            format!("{:.6}", r.precision),
            format!("{:.6}", r.recall),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Ids of the nodes of a scene layer, for tests and summaries.
pub fn layer_node_ids(net: &InfrastructureNetwork, layer: &str) -> BTreeSet<String> {
    net.nodes_in_layer(layer).map(|n| n.id.clone()).collect()
}
