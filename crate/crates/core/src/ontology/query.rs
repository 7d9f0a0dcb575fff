use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ClassKind, OntologyError};
use super::matching::Catalog;
use crate::access::{AccessPolicy, Decision, DenyReason, Role};
use crate::geometry::{predicate, BBox, Geometry, MultiPolygonGeometry, PolygonGeometry, SpatialOp};
use crate::ingest::export_features;
use crate::model::{EntityKind, InfrastructureNetwork, LayerKind, Scalar, TimeInterval};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureRef {
    pub layer: String,
    pub kind: EntityKind,
    pub id: String,
}

impl FeatureRef {
    pub fn all_in_layer(net: &InfrastructureNetwork, layer: &str) -> Vec<FeatureRef> {
        let make = |kind, id: &String| FeatureRef {
            layer: layer.to_string(),
            kind,
            id: id.clone(),
        };
        let mut out: Vec<FeatureRef> = net.nodes_in_layer(layer).map(|n| make(EntityKind::Node, &n.id)).collect();
        out.extend(net.edges_in_layer(layer).map(|e| make(EntityKind::Edge, &e.id)));
        out.extend(net.areas_in_layer(layer).map(|a| make(EntityKind::Area, &a.id)));
        out
    }

    /// Find an entity by id, trying nodes, then edges, then areas.
    pub fn resolve(net: &InfrastructureNetwork, id: &str) -> Option<FeatureRef> {
        let (kind, layer) = if let Some(n) = net.node(id) {
            (EntityKind::Node, &n.layer_id)
        } else if let Some(e) = net.edge(id) {
            (EntityKind::Edge, &e.layer_id)
        } else {
            (EntityKind::Area, &net.area(id)?.layer_id)
        };
        Some(FeatureRef {
            layer: layer.clone(),
            kind,
            id: id.to_string(),
        })
    }

    pub fn geometry(&self, net: &InfrastructureNetwork) -> Option<Geometry> {
        match self.kind {
            EntityKind::Node => net.node(&self.id).map(|n| Geometry::Point(n.position)),
            EntityKind::Edge => net.edge(&self.id).map(|e| Geometry::LineString(net.edge_chain(e))),
            EntityKind::Area => net.area(&self.id).map(|a| match a.geometry.polygons.as_slice() {
                [one] => Geometry::Polygon(one.clone()),
                _ => Geometry::MultiPolygon(a.geometry.clone()),
            }),
            EntityKind::Layer => None,
        }
    }

    /// Own validity, else the layer's.
    pub fn extent(&self, net: &InfrastructureNetwork) -> Option<TimeInterval> {
        let own = match self.kind {
            EntityKind::Node => net.node(&self.id).and_then(|n| n.valid),
            EntityKind::Edge => net.edge(&self.id).and_then(|e| e.valid),
            EntityKind::Area => net.area(&self.id).and_then(|a| a.valid),
            EntityKind::Layer => None,
        };
        own.or_else(|| net.layer(&self.layer).ok().and_then(|l| l.valid_interval))
    }
}

pub fn entity_geometry(net: &InfrastructureNetwork, id: &str) -> Option<Geometry> {
    FeatureRef::resolve(net, id)?.geometry(net)
}

pub fn entity_extent(net: &InfrastructureNetwork, id: &str) -> Option<TimeInterval> {
    FeatureRef::resolve(net, id)?.extent(net)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Polygon(MultiPolygonGeometry),
    BBox(BBox),
    /// A spatial instance of the catalog's spatio-temporal ontology.
    Named(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionTimeQuery {
    pub region: Region,
    pub interval: Option<TimeInterval>,
    pub layer_kinds: BTreeSet<LayerKind>,
    /// One of within, crosses, intersects (feature against region).
    pub predicate: SpatialOp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeniedLayer {
    pub layer: String,
    pub kind: LayerKind,
    pub reason: DenyReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub revision: u64,
    pub layers: BTreeMap<String, Vec<FeatureRef>>,
    pub denied_layers: Vec<DeniedLayer>,
}

impl QueryResult {
    pub fn feature_count(&self) -> usize {
        self.layers.values().map(Vec::len).sum()
    }

    /// One FeatureCollection per returned layer plus the denial notices.
    pub fn to_geojson(&self, net: &InfrastructureNetwork) -> Result<Value, OntologyError> {
        let mut layers = serde_json::Map::new();
        for (layer, hits) in &self.layers {
            let keep: BTreeSet<(EntityKind, &str)> = hits.iter().map(|f| (f.kind, f.id.as_str())).collect();
            let fc = export_features(net, layer, |kind, id| keep.contains(&(kind, id)))?;
            layers.insert(layer.clone(), fc);
        }
        Ok(json!({
            "revision": self.revision,
            "layers": layers,
            "denied_layers": self.denied_layers,
        }))
    }
}

fn resolve_region(region: &Region, catalog: Option<&Catalog>) -> Result<Geometry, OntologyError> {
    match region {
        Region::Polygon(mp) => {
            if mp.polygons.is_empty() || mp.polygons.iter().any(|p| p.area() <= 0.0) {
                return Err(OntologyError::InvalidArgument("region polygon has no area".into()));
            }
            Ok(match mp.polygons.as_slice() {
                [one] => Geometry::Polygon(one.clone()),
                _ => Geometry::MultiPolygon(mp.clone()),
            })
        }
        Region::BBox(b) => {
            if !(b.width() > 0.0 && b.height() > 0.0) {
                return Err(OntologyError::InvalidArgument("region bbox has no area".into()));
            }
            Ok(Geometry::Polygon(PolygonGeometry::from_bbox(*b)?))
        }
        Region::Named(id) => {
            let catalog = catalog.ok_or_else(|| OntologyError::NotFound(format!("region `{id}` (no ontology loaded)")))?;
            let inst = catalog
                .st
                .instance(id)
                .filter(|i| catalog.st.instance_kind(i) == ClassKind::Spatial)
                .ok_or_else(|| OntologyError::NotFound(format!("region `{id}`")))?;
            match catalog.st.footprint(inst) {
                Some(g @ (Geometry::Polygon(_) | Geometry::MultiPolygon(_))) => Ok(g.clone()),
                _ => Err(OntologyError::NotFound(format!("footprint of region `{id}`"))),
            }
        }
    }
}

/// Cross-layer region/time query. Candidates come from instance mappings
/// (named regions over fully mapped layers), the catalog's feature index,
/// or a scan, and are then checked exactly, so the result never depends on
/// which path was taken.
pub fn integrated_query(
    q: &RegionTimeQuery,
    catalog: Option<&Catalog>,
    net: &InfrastructureNetwork,
    policy: &AccessPolicy,
    role: Role,
) -> Result<QueryResult, OntologyError> {
    if q.layer_kinds.is_empty() {
        return Err(OntologyError::InvalidArgument("layer_kinds is empty".into()));
    }
    if q.predicate == SpatialOp::Contains {
        return Err(OntologyError::InvalidArgument(
            "predicate must be within, crosses, or intersects".into(),
        ));
    }
    let region = resolve_region(&q.region, catalog)?;
    let region_box = region.bbox();
    let eps = net.epsilon();
    let catalog = catalog.filter(|c| c.is_current(net));
    let mut result = QueryResult {
        revision: net.revision(),
        layers: BTreeMap::new(),
        denied_layers: Vec::new(),
    };
    for layer in net.layers().filter(|l| q.layer_kinds.contains(&l.kind)) {
        if let Decision::Deny(reason) = policy.can_read(role, layer) {
            result.denied_layers.push(DeniedLayer {
                layer: layer.id.clone(),
                kind: layer.kind,
                reason,
            });
            continue;
        }
        let candidates: Vec<FeatureRef> = match (catalog, &q.region) {
            (Some(c), Region::Named(id)) if c.is_backed(&layer.id) => {
                c.mapped_to(id)?.into_iter().filter(|f| f.layer == layer.id).collect()
            }
            (Some(c), _) => c
                .index(&layer.id)
                .map(|ix| ix.query_bbox(&region_box.expanded(eps)).into_iter().cloned().collect())
                .unwrap_or_default(),
            (None, _) => FeatureRef::all_in_layer(net, &layer.id),
        };
        let mut hits = Vec::new();
        for f in candidates {
            let Some(g) = f.geometry(net) else { continue };
            if let (Some(want), Some(have)) = (&q.interval, f.extent(net)) {
                if !want.overlaps(&have) {
                    continue;
                }
            }
            if predicate(&g, &region, q.predicate, eps)? {
                hits.push(f);
            }
        }
        hits.sort();
        result.layers.insert(layer.id.clone(), hits);
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactResult {
    pub blocks: Vec<String>,
    pub sum: f64,
}

/// Census blocks that contain or are crossed by a pipe edge, and the sum of
/// their `attribute_key` values.
pub fn impact_query(
    net: &InfrastructureNetwork,
    census_layer: &str,
    pipe_edge_id: &str,
    attribute_key: &str,
) -> Result<ImpactResult, OntologyError> {
    net.layer(census_layer)
        .map_err(|_| OntologyError::NotFound(format!("layer `{census_layer}`")))?;
    let edge = net
        .edge(pipe_edge_id)
        .ok_or_else(|| OntologyError::NotFound(format!("edge `{pipe_edge_id}`")))?;
    let line = Geometry::LineString(net.edge_chain(edge));
    let eps = net.epsilon();
    let mut blocks = Vec::new();
    let mut sum = 0.0;
    for area in net.areas_in_layer(census_layer) {
        let block = Geometry::MultiPolygon(area.geometry.clone());
        if !(predicate(&line, &block, SpatialOp::Within, eps)? || predicate(&line, &block, SpatialOp::Crosses, eps)?) {
            continue;
        }
        let value = match area.attributes.get(attribute_key) {
            Some(Scalar::Int(v)) => *v as f64,
            Some(Scalar::Float(v)) => *v,
            _ => {
                return Err(OntologyError::TypeError {
                    entity: area.id.clone(),
                    key: attribute_key.to_string(),
                })
            }
        };
        blocks.push(area.id.clone());
        sum += value;
    }
    Ok(ImpactResult { blocks, sum })
}
