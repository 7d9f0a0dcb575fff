//! Request handlers. Every response carries the revision of the snapshot
//! it was computed from.

use std::collections::{BTreeMap, BTreeSet};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::header::AUTHORIZATION;
use axum::http::{HeaderMap, StatusCode};
use axum::Json;
use chrono::Utc;
use guides_core::access::{Capability, Decision, DenyReason, Role};
use guides_core::geometry::{BBox, Geometry, MultiPolygonGeometry, PolygonGeometry, SpatialOp};
use guides_core::ingest::{export_layer, parse_geometry, FeatureGeometry};
use guides_core::model::{EditAction, EditBatch, InfrastructureNetwork, LayerKind, Point2D, TimeInterval};
use guides_core::ontology::{entity_geometry, impact_query, integrated_query, Region, RegionTimeQuery};
use guides_core::repair::{record_manual_edit, resolve_flag, FlagStatus, Rule, Suggestion, SuggestionAction, Verdict};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::{ApiError, AppState};

const M2_PER_KM2: f64 = 1e6;

/// `Authorization: Bearer <token>`; anything else is an anonymous session.
pub fn session_role(state: &AppState, headers: &HeaderMap) -> Role {
    let token = headers
        .get(AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim);
    state.policy().session(token).role
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

fn coords(p: &Point2D) -> Value {
    json!([p.x, p.y])
}

fn ring(points: &[Point2D]) -> Value {
    Value::Array(points.iter().map(coords).collect())
}

fn polygon_coords(p: &PolygonGeometry) -> Value {
    Value::Array(p.rings().map(ring).collect())
}

pub fn geometry_json(g: &Geometry) -> Value {
    match g {
        Geometry::Point(p) => json!({"type": "Point", "coordinates": coords(p)}),
        Geometry::LineString(c) => json!({"type": "LineString", "coordinates": ring(c)}),
        Geometry::Polygon(p) => json!({"type": "Polygon", "coordinates": polygon_coords(p)}),
        Geometry::MultiPolygon(mp) => json!({
            "type": "MultiPolygon",
            "coordinates": mp.polygons.iter().map(polygon_coords).collect::<Vec<_>>(),
        }),
    }
}

pub async fn health(State(state): State<AppState>) -> Json<Value> {
    let snap = state.snapshot();
    Json(json!({"status": "ok", "revision": snap.network.revision()}))
}

/// All layers with their metadata; readable ones carry a FeatureCollection,
/// the others are listed as locked with the denial reason.
pub async fn layers(State(state): State<AppState>, headers: HeaderMap) -> Result<Json<Value>, ApiError> {
    let role = session_role(&state, &headers);
    let snap = state.snapshot();
    let net = &snap.network;
    let mut out = Vec::new();
    for layer in net.layers() {
        let mut entry = serde_json::to_value(layer).map_err(|e| ApiError::internal(e.to_string()))?;
        match state.policy().can_read(role, layer) {
            Decision::Allow => {
                entry["access"] = json!("read");
                entry["features"] = export_layer(net, &layer.id)?;
            }
            Decision::Deny(reason) => {
                entry["access"] = json!("locked");
                entry["reason"] = json!(reason.as_str());
            }
        }
        out.push(entry);
    }
    Ok(Json(json!({"revision": net.revision(), "role": role.as_str(), "layers": out})))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionSpec {
    /// `[min_x, min_y, max_x, max_y]`
    Bbox([f64; 4]),
    /// GeoJSON Polygon or MultiPolygon geometry.
    Polygon(Value),
    /// Spatial instance of the loaded ontology.
    Named(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpactRequest {
    pub edge: String,
    #[serde(default)]
    pub census_layer: Option<String>,
    pub attribute: String,
}

/// Either a region/time query or an impact query.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    #[serde(default)]
    pub region: Option<RegionSpec>,
    #[serde(default)]
    pub interval: Option<TimeInterval>,
    /// Defaults to every kind.
    #[serde(default)]
    pub layer_kinds: Option<BTreeSet<LayerKind>>,
    #[serde(default)]
    pub predicate: Option<SpatialOp>,
    #[serde(default)]
    pub impact: Option<ImpactRequest>,
}

fn build_region(spec: RegionSpec, cap_km2: f64) -> Result<Region, ApiError> {
    let (region, area) = match spec {
        RegionSpec::Named(id) => return Ok(Region::Named(id)),
        RegionSpec::Bbox([x0, y0, x1, y1]) => {
            if ![x0, y0, x1, y1].iter().all(|v| v.is_finite()) || x1 <= x0 || y1 <= y0 {
                return Err(ApiError::bad_request("bbox must be finite [min_x, min_y, max_x, max_y] with positive extent"));
            }
            let b = BBox::new(x0, y0, x1, y1);
            (Region::BBox(b), b.area())
        }
        RegionSpec::Polygon(v) => {
            let parsed = parse_geometry(&v).map_err(|e| ApiError::bad_request(format!("malformed region: {e}")))?;
            let rings = match parsed {
                FeatureGeometry::Polygon(rings) => vec![rings],
                FeatureGeometry::MultiPolygon(polys) => polys,
                other => {
                    return Err(ApiError::bad_request(format!(
                        "malformed region: expected Polygon or MultiPolygon, got {}",
                        other.kind_name()
                    )))
                }
            };
            let polygons = rings
                .into_iter()
                .map(|mut rings| {
                    let outer = rings.remove(0);
                    PolygonGeometry::new(outer, rings)
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| ApiError::bad_request(format!("malformed region: {e}")))?;
            let mp = MultiPolygonGeometry::new(polygons);
            let area = mp.area();
            (Region::Polygon(mp), area)
        }
    };
    let area_km2 = area / M2_PER_KM2;
    if area_km2 > cap_km2 {
        return Err(ApiError::bad_request(format!(
            "region covers {area_km2:.3} km², above the limit of {cap_km2} km²"
        ))
        .with("limit_km2", cap_km2)
        .with("area_km2", area_km2));
    }
    Ok(region)
}

fn check_read(state: &AppState, net: &InfrastructureNetwork, role: Role, layer_id: &str) -> Result<(), ApiError> {
    let layer = net.layer(layer_id)?;
    match state.policy().can_read(role, layer) {
        Decision::Allow => Ok(()),
        Decision::Deny(reason) => {
            Err(ApiError::denied(reason, format!("role `{role}` may not read layer `{layer_id}`")).with("layer", layer_id))
        }
    }
}

pub async fn query(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Result<Json<Value>, ApiError> {
    let role = session_role(&state, &headers);
    let req: QueryRequest = parse_body(&body)?;
    let snap = state.snapshot();
    let net = &snap.network;

    if let Some(impact) = req.impact {
        if req.region.is_some() {
            return Err(ApiError::bad_request("give either `region` or `impact`, not both"));
        }
        let census = match impact.census_layer {
            Some(id) => id,
            None => net
                .layers_of_kind(LayerKind::Census)
                .next()
                .map(|l| l.id.clone())
                .ok_or_else(|| ApiError::not_found("no census layer"))?,
        };
        let edge = net
            .edge(&impact.edge)
            .ok_or_else(|| ApiError::not_found(format!("edge `{}`", impact.edge)))?;
        check_read(&state, net, role, &edge.layer_id)?;
        check_read(&state, net, role, &census)?;
        let r = impact_query(net, &census, &impact.edge, &impact.attribute)?;
        return Ok(Json(json!({
            "revision": net.revision(),
            "edge": impact.edge,
            "census_layer": census,
            "blocks": r.blocks,
            "sum": r.sum,
        })));
    }

    let spec = req.region.ok_or_else(|| ApiError::bad_request("missing `region`"))?;
    if let Some(i) = &req.interval {
        if i.start > i.end {
            return Err(ApiError::bad_request("interval ends before it starts"));
        }
    }
    let q = RegionTimeQuery {
        region: build_region(spec, state.area_cap_km2())?,
        interval: req.interval,
        layer_kinds: req.layer_kinds.unwrap_or_else(|| LayerKind::ALL.into_iter().collect()),
        predicate: req.predicate.unwrap_or(SpatialOp::Intersects),
    };
    let result = integrated_query(&q, snap.catalog.as_ref(), net, state.policy(), role)?;
    let mut body = result.to_geojson(net)?;
    body["feature_count"] = json!(result.feature_count());
    Ok(Json(body))
}

/// Layer an action belongs to, if it can be told before applying.
fn action_layer(net: &InfrastructureNetwork, action: &EditAction) -> Option<String> {
    match action {
        EditAction::AddNode { node } => Some(node.layer_id.clone()),
        EditAction::AddEdge { edge } => Some(edge.layer_id.clone()),
        EditAction::RemoveNode { id } | EditAction::ModifyNode { id, .. } => net.node(id).map(|n| n.layer_id.clone()),
        EditAction::RemoveEdge { id } | EditAction::ModifyEdge { id, .. } => net.edge(id).map(|e| e.layer_id.clone()),
    }
}

/// Apply an edit batch. Each layer it touches gets one accepted `manual`
/// flag naming the actor.
pub async fn update(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Result<Json<Value>, ApiError> {
    let role = session_role(&state, &headers);
    let batch: EditBatch = parse_body(&body)?;
    if batch.is_empty() {
        return Err(ApiError::bad_request("edit batch has no actions"));
    }
    let policy = state.policy();
    let out = state
        .write(|snap| {
            let net = &snap.network;
            if !net.layers().any(|l| policy.authorize(role, Capability::Update, l).is_allowed()) {
                return Err(ApiError::denied(DenyReason::NoGrant, format!("role `{role}` may not edit")));
            }
            let mut groups: BTreeMap<String, EditBatch> = BTreeMap::new();
            for action in &batch.actions {
                let Some(layer_id) = action_layer(net, action) else { continue };
                if let Ok(layer) = net.layer(&layer_id) {
                    if let Decision::Deny(reason) = policy.authorize(role, Capability::Update, layer) {
                        return Err(ApiError::denied(reason, format!("role `{role}` may not edit layer `{layer_id}`"))
                            .with("layer", layer_id));
                    }
                }
                groups.entry(layer_id).or_default().push(action.clone());
            }
            let revision = snap.network.apply_edit(&batch)?;
            let at = Utc::now();
            let flags: Vec<String> = groups
                .iter()
                .filter_map(|(layer, sub)| record_manual_edit(&mut snap.ledger, layer, sub, role, at, revision))
                .collect();
            Ok(json!({"revision": revision, "manual_flags": flags}))
        })
        .await?;
    Ok(Json(out))
}

#[derive(Debug, Default, Deserialize)]
pub struct FlagFilter {
    pub status: Option<String>,
    pub rule: Option<String>,
    pub layer: Option<String>,
}

fn suggestion_geometry(net: &InfrastructureNetwork, s: &Suggestion) -> Value {
    match &s.action {
        SuggestionAction::AddEdge { geometry, .. } | SuggestionAction::ConnectBoundary { geometry, .. } => {
            geometry_json(&Geometry::LineString(geometry.clone()))
        }
        SuggestionAction::ReplaceSymbol { centroid, .. } => geometry_json(&Geometry::Point(*centroid)),
        SuggestionAction::MergeNodes { nodes } => {
            // merged-away nodes only survive in the applied edit's before-state
            let before = s.applied.as_ref().map(|a| &a.before.nodes);
            let points: Vec<Value> = nodes
                .iter()
                .filter_map(|id| {
                    net.node(id)
                        .or_else(|| before.and_then(|b| b.get(id)).and_then(Option::as_ref))
                        .map(|n| coords(&n.position))
                })
                .collect();
            json!({"type": "MultiPoint", "coordinates": points})
        }
    }
}

/// Flags on readable layers, joined with their suggestions and the
/// geometry needed to draw them.
pub async fn flags(
    State(state): State<AppState>,
    headers: HeaderMap,
    Query(filter): Query<FlagFilter>,
) -> Result<Json<Value>, ApiError> {
    let role = session_role(&state, &headers);
    let status: Option<FlagStatus> = filter.status.as_deref().map(str::parse).transpose().map_err(ApiError::bad_request)?;
    let rule: Option<Rule> = filter.rule.as_deref().map(str::parse).transpose().map_err(ApiError::bad_request)?;
    let snap = state.snapshot();
    let net = &snap.network;
    let mut denied: BTreeMap<String, &'static str> = BTreeMap::new();
    let mut out = Vec::new();
    for flag in &snap.ledger.flags {
        if status.is_some_and(|s| s != flag.status)
            || rule.is_some_and(|r| r != flag.rule)
            || filter.layer.as_ref().is_some_and(|l| *l != flag.layer_id)
        {
            continue;
        }
        let readable = match net.layer(&flag.layer_id) {
            Ok(layer) => state.policy().can_read(role, layer),
            Err(_) => Decision::Deny(DenyReason::NoGrant),
        };
        if let Decision::Deny(reason) = readable {
            denied.insert(flag.layer_id.clone(), reason.as_str());
            continue;
        }
        let mut entry = serde_json::to_value(flag).map_err(|e| ApiError::internal(e.to_string()))?;
        let suggestion = flag.suggestion_id.as_deref().and_then(|id| snap.ledger.suggestion(id));
        entry["suggestion"] = match suggestion {
            Some(s) => serde_json::to_value(s).map_err(|e| ApiError::internal(e.to_string()))?,
            None => Value::Null,
        };
        entry["geometry"] = suggestion.map_or(Value::Null, |s| suggestion_geometry(net, s));
        entry["target_geometry"] =
            entity_geometry(net, flag.target.id()).map_or(Value::Null, |g| geometry_json(&g));
        out.push(entry);
    }
    let denied: Vec<Value> = denied
        .into_iter()
        .map(|(layer, reason)| json!({"layer": layer, "reason": reason}))
        .collect();
    Ok(Json(json!({"revision": net.revision(), "flags": out, "denied_layers": denied})))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolveRequest {
    pub decision: Verdict,
}

pub async fn resolve(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let role = session_role(&state, &headers);
    let req: ResolveRequest = parse_body(&body)?;
    let policy = state.policy();
    let out = state
        .write(|snap| {
            let resolved = resolve_flag(&mut snap.network, &mut snap.ledger, policy, &id, req.decision, role, Utc::now())?;
            Ok::<_, ApiError>(json!({
                "revision": snap.network.revision(),
                "decision": req.decision,
                "resolved": resolved,
            }))
        })
        .await?;
    Ok((StatusCode::OK, Json(out)))
}
