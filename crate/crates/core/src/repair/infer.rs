use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::detect::layer_grid;
use super::ledger::{FlagLedger, FlagStatus, FlagTarget, Rule, SuggestionAction};
use super::RepairError;
use crate::geometry::{chain_distance, polygonize_layer, BBox, GridIndex};
use crate::model::{InfrastructureNetwork, Point2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceParams {
    /// Search radius R in meters.
    pub search_radius: f64,
    /// Corridor half-width W in meters.
    pub corridor_half_width: f64,
    /// Spacing of the corridor test samples in meters.
    pub sample_spacing: f64,
}

impl Default for InferenceParams {
    fn default() -> Self {
        Self {
            search_radius: 50.0,
            corridor_half_width: 8.0,
            sample_spacing: 1.0,
        }
    }
}

impl InferenceParams {
    pub fn validate(&self) -> Result<(), RepairError> {
        for (name, v) in [
            ("search radius", self.search_radius),
            ("corridor half-width", self.corridor_half_width),
            ("sample spacing", self.sample_spacing),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(RepairError::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Street chains indexed for the "pipes run under streets" corridor test.
pub struct StreetCorridor {
    chains: Vec<Vec<Point2D>>,
    grid: GridIndex<usize>,
    half_width: f64,
    spacing: f64,
}

impl StreetCorridor {
    pub fn new(net: &InfrastructureNetwork, streets_layer: &str, half_width: f64, spacing: f64) -> Result<Self, RepairError> {
        net.layer(streets_layer)?;
        let chains: Vec<Vec<Point2D>> = net
            .edges_in_layer(streets_layer)
            .map(|e| net.edge_chain(e))
            .filter(|c| c.len() >= 2)
            .collect();
        let grid = GridIndex::build(
            chains
                .iter()
                .enumerate()
                .map(|(i, c)| (i, BBox::of_points(c)))
                .collect(),
        );
        Ok(Self {
            chains,
            grid,
            half_width,
            spacing,
        })
    }

    fn covers(&self, p: Point2D) -> bool {
        self.grid
            .query_bbox(&BBox::of_point(p).expanded(self.half_width))
            .into_iter()
            .any(|&i| chain_distance(p, &self.chains[i]) <= self.half_width)
    }

    /// Every sample along a→b (spacing at most `spacing`, both ends
    /// included) lies within the half-width of some street chain.
    pub fn admits(&self, a: Point2D, b: Point2D) -> bool {
        let steps = (a.distance(&b) / self.spacing).ceil().max(1.0) as usize;
        (0..=steps).all(|i| self.covers(a.lerp(&b, i as f64 / steps as f64)))
    }
}

fn pair_key(a: &str, b: &str) -> String {
    if a <= b {
        format!("{a}|{b}")
    } else {
        format!("{b}|{a}")
    }
}

/// Nodes already tied up in an add_edge suggestion that is still open or
/// was accepted.
fn nodes_in_live_links(ledger: &FlagLedger) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for s in &ledger.suggestions {
        let SuggestionAction::AddEdge { from, to, .. } = &s.action else { continue };
        let live = ledger
            .flags_of(&s.id)
            .iter()
            .any(|f| f.status != FlagStatus::Rejected);
        if live {
            out.insert(from.clone());
            out.insert(to.clone());
        }
    }
    out
}

/// One inference pass: each open dangling end picks the nearest pipe node
/// within R (not a neighbor, not a pair seen before) whose connecting
/// segment passes the street corridor test when a streets layer is given.
/// Mutually chosen ends share one suggestion.
pub fn infer_missing_edges(
    net: &InfrastructureNetwork,
    ledger: &mut FlagLedger,
    pipes_layer: &str,
    streets_layer: Option<&str>,
    params: &InferenceParams,
) -> Result<Vec<String>, RepairError> {
    params.validate()?;
    net.layer(pipes_layer)?;
    let corridor = streets_layer
        .map(|s| StreetCorridor::new(net, s, params.corridor_half_width, params.sample_spacing))
        .transpose()?;
    let grid = layer_grid(net, pipes_layer);
    let busy = nodes_in_live_links(ledger);
    let sources: BTreeSet<String> = ledger
        .open_flags(Rule::DanglingEnd)
        .filter(|f| f.layer_id == pipes_layer)
        .map(|f| f.target.id().to_string())
        .filter(|id| !busy.contains(id))
        .filter(|id| net.node(id).is_some() && net.node_degree(id).unwrap_or(0) <= 1)
        .collect();

    let r = params.search_radius;
    let mut choice: BTreeMap<String, String> = BTreeMap::new();
    for src in &sources {
        let p = net.node(src).expect("checked").position;
        let neighbors = net.neighbors(src);
        let mut candidates: Vec<(f64, &String)> = grid
            .query_bbox(&BBox::of_point(p).expanded(r))
            .into_iter()
            .filter(|id| *id != src && !neighbors.contains(*id))
            .map(|id| (net.node(id).expect("indexed").position.distance(&p), id))
            .filter(|(d, _)| *d <= r)
            .filter(|(_, id)| !ledger.has_suggestion_key(&format!("link:{}", pair_key(src, id))))
            .collect();
        candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(y.1)));
        let pick = candidates.into_iter().find(|(_, id)| match &corridor {
            Some(c) => c.admits(p, net.node(id).expect("indexed").position),
            None => true,
        });
        if let Some((_, id)) = pick {
            choice.insert(src.clone(), id.clone());
        }
    }

    let rev = net.revision();
    let context: Vec<String> = streets_layer.map(str::to_string).into_iter().collect();
    let mut created = Vec::new();
    let mut done = BTreeSet::new();
    for (src, dst) in &choice {
        let key = pair_key(src, dst);
        if !done.insert(key.clone()) {
            continue;
        }
        let (from, to) = if choice.get(dst) == Some(src) && dst < src {
            (dst, src)
        } else {
            (src, dst)
        };
        let pa = net.node(from).expect("node").position;
        let pb = net.node(to).expect("node").position;
        let mutual = choice.get(dst) == Some(src);
        let detail = format!(
            "missing pipe inferred between `{from}` and `{to}` ({:.2} m{}{})",
            pa.distance(&pb),
            if corridor.is_some() { ", within street corridor" } else { "" },
            if mutual { ", chosen by both ends" } else { "" },
        );
        let Some(fid) = ledger.push_flag(
            Rule::InferredEdge,
            pipes_layer,
            FlagTarget::Node(from.clone()),
            vec![to.clone()],
            format!("infer:{key}"),
            detail,
            rev,
        ) else {
            continue;
        };
        let sid = ledger.push_suggestion(
            Rule::InferredEdge,
            pipes_layer,
            SuggestionAction::AddEdge {
                from: from.clone(),
                to: to.clone(),
                geometry: vec![pa, pb],
            },
            context.clone(),
            format!("link:{key}"),
            rev,
        );
        ledger.link(&fid, &sid);
        created.push(sid);
    }
    Ok(created)
}

/// Suggest closing broken building outlines: every loose end of a building
/// boundary (degree ≤ 1 and on no closed cycle) connects to its nearest
/// building node that is not already a neighbor.
pub fn repair_building_boundaries(
    net: &InfrastructureNetwork,
    ledger: &mut FlagLedger,
    buildings_layer: &str,
) -> Result<Vec<String>, RepairError> {
    let poly = polygonize_layer(net, buildings_layer)?;
    let grid = layer_grid(net, buildings_layer);
    let rev = net.revision();
    let mut choice: BTreeMap<String, String> = BTreeMap::new();
    let mut flags: BTreeMap<String, String> = BTreeMap::new();
    for src in &poly.open_nodes {
        if net.node_degree(src)? > 1 {
            continue;
        }
        let p = net.node(src).expect("open node").position;
        let neighbors = net.neighbors(src);
        let nearest = grid.nearest(p, f64::INFINITY, |id| {
            id != src
                && !neighbors.contains(id)
                && !ledger.has_suggestion_key(&format!("bound:{}", pair_key(src, id)))
        });
        let Some((dst, d)) = nearest else { continue };
        let Some(fid) = ledger.push_flag(
            Rule::OpenBoundary,
            buildings_layer,
            FlagTarget::Node(src.clone()),
            vec![dst.clone()],
            format!("open:{src}"),
            format!("building outline is open at `{src}`; nearest node `{dst}` is {d:.2} m away"),
            rev,
        ) else {
            continue;
        };
        flags.insert(src.clone(), fid);
        choice.insert(src.clone(), dst.clone());
    }
    let mut created = Vec::new();
    let mut by_key: BTreeMap<String, String> = BTreeMap::new();
    for (src, dst) in &choice {
        let key = pair_key(src, dst);
        let sid = match by_key.get(&key) {
            Some(sid) => sid.clone(),
            None => {
                let (from, to) = if src < dst { (src, dst) } else { (dst, src) };
                let geometry = vec![
                    net.node(from).expect("node").position,
                    net.node(to).expect("node").position,
                ];
                let sid = ledger.push_suggestion(
                    Rule::OpenBoundary,
                    buildings_layer,
                    SuggestionAction::ConnectBoundary {
                        from: from.clone(),
                        to: to.clone(),
                        geometry,
                    },
                    Vec::new(),
                    format!("bound:{key}"),
                    rev,
                );
                by_key.insert(key, sid.clone());
                created.push(sid.clone());
                sid
            }
        };
        ledger.link(&flags[src], &sid);
    }
    Ok(created)
}
