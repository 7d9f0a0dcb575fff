//! Domain and spatio-temporal ontologies, instance matching, and
//! integrated cross-layer queries.

mod matching;
mod query;

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::geometry::{predicate, Geometry, GeometryError, MultiPolygonGeometry, PolygonGeometry, SpatialOp};
use crate::ingest::{parse_geometry, FeatureGeometry};
use crate::model::{ModelError, TimeInterval};

pub use matching::{match_instances, verify_mapping, Catalog, Dimension, InstanceMapping, MatchOutput, Relation};
pub use query::{
    entity_extent, entity_geometry, impact_query, integrated_query, DeniedLayer, FeatureRef, ImpactResult,
    QueryResult, Region, RegionTimeQuery,
};

/// Tolerance for footprint-to-footprint tests (coordinates in meters).
pub const FOOTPRINT_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum OntologyError {
    #[error("malformed ontology document: {0}")]
    Json(String),
    #[error("duplicate {what} id `{id}`")]
    DuplicateId { what: &'static str, id: String },
    #[error("class `{class}` has unknown parent `{parent}`")]
    UnknownParent { class: String, parent: String },
    #[error("class hierarchy has a cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("class `{class}` ({kind}) has a parent of another kind")]
    KindMismatch { class: String, kind: &'static str },
    #[error("instance `{instance}` refers to unknown class `{class}`")]
    UnknownClass { instance: String, class: String },
    #[error("instance `{instance}`: {message}")]
    InvalidInstance { instance: String, message: String },
    #[error("footprint `{id}`: {message}")]
    BadFootprint { id: String, message: String },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("attribute `{key}` of `{entity}` is not numeric")]
    TypeError { entity: String, key: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    Domain,
    Spatial,
    Temporal,
}

impl ClassKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClassKind::Domain => "domain",
            ClassKind::Spatial => "spatial",
            ClassKind::Temporal => "temporal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OntologyClass {
    pub id: String,
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    pub kind: ClassKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OntologyInstance {
    pub id: String,
    pub class_id: String,
    #[serde(default)]
    pub label: String,
    /// Key into the document's `footprint_refs`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial_footprint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal_extent: Option<TimeInterval>,
    /// Network entity (node, edge, or area id) the instance stands for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OntologyDocument {
    #[serde(default)]
    pub name: String,
    pub classes: Vec<OntologyClass>,
    #[serde(default)]
    pub instances: Vec<OntologyInstance>,
    #[serde(default)]
    pub footprint_refs: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Ancestors,
    Descendants,
}

/// A validated ontology: acyclic class hierarchy, instances bound to
/// classes, footprints parsed.
#[derive(Debug, Clone, PartialEq)]
pub struct OntologyGraph {
    pub name: String,
    classes: BTreeMap<String, OntologyClass>,
    instances: BTreeMap<String, OntologyInstance>,
    footprints: BTreeMap<String, Geometry>,
    depth: BTreeMap<String, usize>,
}

fn to_geometry(id: &str, g: FeatureGeometry) -> Result<Geometry, OntologyError> {
    let bad = |e: GeometryError| OntologyError::BadFootprint {
        id: id.to_string(),
        message: e.to_string(),
    };
    let polygon = |mut rings: Vec<Vec<_>>| {
        let outer = rings.remove(0);
        PolygonGeometry::new(outer, rings)
    };
    Ok(match g {
        FeatureGeometry::Point(p) => Geometry::Point(p),
        FeatureGeometry::LineString(c) => Geometry::LineString(c),
        FeatureGeometry::Polygon(rings) => Geometry::Polygon(polygon(rings).map_err(bad)?),
        FeatureGeometry::MultiPolygon(polys) => Geometry::MultiPolygon(MultiPolygonGeometry::new(
            polys.into_iter().map(polygon).collect::<Result<_, _>>().map_err(bad)?,
        )),
    })
}

/// A temporal extent must be one whole calendar year, month, or day.
fn temporal_grain(t: &TimeInterval) -> Option<&'static str> {
    let (s, e) = (t.start, t.end);
    let last_of_month = |d: NaiveDate| d.succ_opt().is_none_or(|n| n.month() != d.month());
    if s == e {
        return Some("day");
    }
    if s.year() == e.year() && s.month() == e.month() && s.day() == 1 && last_of_month(e) {
        return Some("month");
    }
    if s.year() == e.year() && s.ordinal() == 1 && e.month() == 12 && e.day() == 31 {
        return Some("year");
    }
    None
}

fn find_cycle(classes: &BTreeMap<String, OntologyClass>) -> Option<Vec<String>> {
    for start in classes.keys() {
        let mut path = vec![start.clone()];
        let mut cur = start;
        while let Some(parent) = classes.get(cur).and_then(|c| c.parent.as_ref()) {
            if let Some(pos) = path.iter().position(|p| p == parent) {
                let mut cycle = path[pos..].to_vec();
                cycle.push(parent.clone());
                return Some(cycle);
            }
            path.push(parent.clone());
            cur = parent;
        }
    }
    None
}

impl OntologyGraph {
    pub fn from_document(doc: OntologyDocument) -> Result<Self, OntologyError> {
        let mut classes = BTreeMap::new();
        for mut c in doc.classes {
            if c.name.is_empty() {
                c.name = c.id.clone();
            }
            if classes.contains_key(&c.id) {
                return Err(OntologyError::DuplicateId { what: "class", id: c.id });
            }
            classes.insert(c.id.clone(), c);
        }
        for c in classes.values() {
            if let Some(p) = &c.parent {
                let Some(parent) = classes.get(p) else {
                    return Err(OntologyError::UnknownParent {
                        class: c.id.clone(),
                        parent: p.clone(),
                    });
                };
                if parent.kind != c.kind && parent.id != c.id {
                    return Err(OntologyError::KindMismatch {
                        class: c.id.clone(),
                        kind: c.kind.as_str(),
                    });
                }
            }
        }
        if let Some(cycle) = find_cycle(&classes) {
            return Err(OntologyError::Cycle(cycle));
        }
        let mut depth = BTreeMap::new();
        for id in classes.keys() {
            let mut d = 0;
            let mut cur = id;
            while let Some(p) = classes[cur].parent.as_ref() {
                d += 1;
                cur = p;
            }
            depth.insert(id.clone(), d);
        }

        let mut footprints = BTreeMap::new();
        for (id, v) in &doc.footprint_refs {
            let g = parse_geometry(v).map_err(|e| OntologyError::BadFootprint {
                id: id.clone(),
                message: e.to_string(),
            })?;
            footprints.insert(id.clone(), to_geometry(id, g)?);
        }

        let mut instances = BTreeMap::new();
        for inst in doc.instances {
            let invalid = |message: String| OntologyError::InvalidInstance {
                instance: inst.id.clone(),
                message,
            };
            let Some(class) = classes.get(&inst.class_id) else {
                return Err(OntologyError::UnknownClass {
                    instance: inst.id.clone(),
                    class: inst.class_id.clone(),
                });
            };
            if let Some(t) = &inst.temporal_extent {
                if t.start > t.end {
                    return Err(invalid(format!("extent starts {} after it ends {}", t.start, t.end)));
                }
            }
            match class.kind {
                ClassKind::Spatial if inst.spatial_footprint.is_none() => {
                    return Err(invalid("spatial instance has no footprint".into()));
                }
                ClassKind::Temporal => {
                    let Some(t) = &inst.temporal_extent else {
                        return Err(invalid("temporal instance has no extent".into()));
                    };
                    if temporal_grain(t).is_none() {
                        return Err(invalid(format!(
                            "extent {}..{} is not a whole year, month, or day",
                            t.start, t.end
                        )));
                    }
                }
                ClassKind::Domain if inst.payload_ref.is_none() => {
                    return Err(invalid("domain instance has no payload_ref".into()));
                }
                _ => {}
            }
            if instances.contains_key(&inst.id) {
                return Err(OntologyError::DuplicateId {
                    what: "instance",
                    id: inst.id,
                });
            }
            instances.insert(inst.id.clone(), inst);
        }
        Ok(Self {
            name: doc.name,
            classes,
            instances,
            footprints,
            depth,
        })
    }

    pub fn classes(&self) -> impl Iterator<Item = &OntologyClass> {
        self.classes.values()
    }

    pub fn class(&self, id: &str) -> Option<&OntologyClass> {
        self.classes.get(id)
    }

    pub fn instances(&self) -> impl Iterator<Item = &OntologyInstance> {
        self.instances.values()
    }

    pub fn instance(&self, id: &str) -> Option<&OntologyInstance> {
        self.instances.get(id)
    }

    pub fn instance_kind(&self, inst: &OntologyInstance) -> ClassKind {
        self.classes[&inst.class_id].kind
    }

    /// Parsed footprint of an instance; `None` when it has none or the
    /// reference does not resolve.
    pub fn footprint(&self, inst: &OntologyInstance) -> Option<&Geometry> {
        inst.spatial_footprint.as_ref().and_then(|r| self.footprints.get(r))
    }

    /// Proper ancestor classes of `class_id`, nearest first.
    pub fn class_ancestors(&self, class_id: &str) -> Vec<&str> {
        let mut out = Vec::new();
        let mut cur = class_id;
        while let Some(p) = self.classes.get(cur).and_then(|c| c.parent.as_deref()) {
            out.push(p);
            cur = p;
        }
        out
    }

    fn contains_instance(&self, outer: &OntologyInstance, inner: &OntologyInstance) -> bool {
        match self.classes[&outer.class_id].kind {
            ClassKind::Spatial => match (self.footprint(inner), self.footprint(outer)) {
                (Some(a), Some(b)) => predicate(a, b, SpatialOp::Within, FOOTPRINT_EPSILON).unwrap_or(false),
                _ => false,
            },
            ClassKind::Temporal => match (&outer.temporal_extent, &inner.temporal_extent) {
                (Some(o), Some(i)) => o.contains(i),
                _ => false,
            },
            ClassKind::Domain => true,
        }
    }

    /// Instances of ancestor (or descendant) classes that contain (or are
    /// contained in) the instance, root-first.
    pub fn resolve_hierarchy(&self, instance_id: &str, direction: Direction) -> Result<Vec<String>, OntologyError> {
        let inst = self
            .instances
            .get(instance_id)
            .ok_or_else(|| OntologyError::NotFound(format!("instance `{instance_id}`")))?;
        let mut out: Vec<(usize, &str)> = Vec::new();
        for other in self.instances.values() {
            let related = match direction {
                Direction::Ancestors => {
                    self.class_ancestors(&inst.class_id).contains(&other.class_id.as_str())
                        && self.contains_instance(other, inst)
                }
                Direction::Descendants => {
                    self.class_ancestors(&other.class_id).contains(&inst.class_id.as_str())
                        && self.contains_instance(inst, other)
                }
            };
            if related {
                out.push((self.depth[&other.class_id], &other.id));
            }
        }
        out.sort();
        Ok(out.into_iter().map(|(_, id)| id.to_string()).collect())
    }
}

pub fn load_ontology(bytes: &[u8]) -> Result<OntologyGraph, OntologyError> {
    let doc: OntologyDocument = serde_json::from_slice(bytes).map_err(|e| OntologyError::Json(e.to_string()))?;
    OntologyGraph::from_document(doc)
}
