use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::query::{entity_extent, entity_geometry, FeatureRef};
use super::{ClassKind, Direction, OntologyError, OntologyGraph, OntologyInstance};
use crate::geometry::{chain_fraction_inside, predicate, BBox, Geometry, GridIndex, PolygonGeometry, SpatialOp};
use crate::model::{InfrastructureNetwork, Point2D, TimeInterval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Within,
    Overlaps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Spatial,
    Temporal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMapping {
    pub domain_instance_id: String,
    pub st_instance_id: String,
    pub relation: Relation,
    pub confidence: f64,
    pub dimension: Dimension,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchOutput {
    pub mappings: Vec<InstanceMapping>,
    pub warnings: Vec<String>,
}

const SAMPLES: usize = 32;
const MIN_CONFIDENCE: f64 = 1e-3;

fn polygons(g: &Geometry) -> &[PolygonGeometry] {
    match g {
        Geometry::Polygon(p) => std::slice::from_ref(p),
        Geometry::MultiPolygon(mp) => &mp.polygons,
        _ => &[],
    }
}

fn covered(p: Point2D, polys: &[PolygonGeometry], eps: f64) -> bool {
    polys
        .iter()
        .any(|poly| crate::geometry::point_in_polygon(p, poly, eps).is_covered())
}

/// Share of `domain` (by length for lines, by area for polygons, estimated
/// on a sample grid) lying inside `region`.
fn inside_fraction(domain: &Geometry, region: &Geometry, eps: f64) -> f64 {
    let target = polygons(region);
    match domain {
        Geometry::Point(p) => {
            if covered(*p, target, eps) {
                1.0
            } else {
                0.0
            }
        }
        Geometry::LineString(c) => chain_fraction_inside(c, target, eps),
        areal => {
            let own = polygons(areal);
            let b: BBox = areal.bbox();
            let (mut total, mut hit) = (0usize, 0usize);
            for i in 0..SAMPLES {
                for j in 0..SAMPLES {
                    let p = Point2D::new(
                        b.min_x + b.width() * (i as f64 + 0.5) / SAMPLES as f64,
                        b.min_y + b.height() * (j as f64 + 0.5) / SAMPLES as f64,
                    );
                    if covered(p, own, eps) {
                        total += 1;
                        if covered(p, target, eps) {
                            hit += 1;
                        }
                    }
                }
            }
            if total == 0 {
                0.0
            } else {
                hit as f64 / total as f64
            }
        }
    }
}

fn spatial_relation(domain: &Geometry, region: &Geometry, eps: f64) -> Option<(Relation, f64)> {
    if predicate(domain, region, SpatialOp::Within, eps).ok()? {
        return Some((Relation::Within, 1.0));
    }
    if predicate(domain, region, SpatialOp::Intersects, eps).ok()? {
        let f = inside_fraction(domain, region, eps).clamp(MIN_CONFIDENCE, 1.0 - MIN_CONFIDENCE);
        return Some((Relation::Overlaps, f));
    }
    None
}

fn temporal_relation(domain: &TimeInterval, st: &TimeInterval) -> Option<(Relation, f64)> {
    if st.contains(domain) {
        Some((Relation::Within, 1.0))
    } else if st.overlaps(domain) {
        let f = st.overlap_days(domain) as f64 / domain.days() as f64;
        Some((Relation::Overlaps, f.clamp(MIN_CONFIDENCE, 1.0 - MIN_CONFIDENCE)))
    } else {
        None
    }
}

fn domain_footprint(domain: &OntologyGraph, inst: &OntologyInstance, net: &InfrastructureNetwork) -> Option<Geometry> {
    domain
        .footprint(inst)
        .cloned()
        .or_else(|| inst.payload_ref.as_deref().and_then(|r| entity_geometry(net, r)))
}

fn domain_extent(inst: &OntologyInstance, net: &InfrastructureNetwork) -> Option<TimeInterval> {
    inst.temporal_extent
        .or_else(|| inst.payload_ref.as_deref().and_then(|r| entity_extent(net, r)))
}

/// Map every domain instance to the spatial instances whose footprints
/// contain or meet its footprint, and to the temporal instances whose
/// extents contain or overlap its extent. Footprints fall back to the
/// payload entity's geometry and validity.
pub fn match_instances(
    domain: &OntologyGraph,
    st: &OntologyGraph,
    net: &InfrastructureNetwork,
) -> MatchOutput {
    let mut out = MatchOutput::default();
    let mut regions: Vec<(&OntologyInstance, &Geometry)> = Vec::new();
    let mut periods: Vec<(&OntologyInstance, TimeInterval)> = Vec::new();
    for inst in st.instances() {
        match st.instance_kind(inst) {
            ClassKind::Spatial => match st.footprint(inst) {
                Some(g) if !polygons(g).is_empty() => regions.push((inst, g)),
                Some(_) => out
                    .warnings
                    .push(format!("spatial instance `{}` has a non-areal footprint; skipped", inst.id)),
                None => out
                    .warnings
                    .push(format!("spatial instance `{}` has no resolvable footprint; skipped", inst.id)),
            },
            ClassKind::Temporal => {
                if let Some(t) = inst.temporal_extent {
                    periods.push((inst, t));
                }
            }
            ClassKind::Domain => {}
        }
    }
    let index = GridIndex::build(regions.iter().enumerate().map(|(i, (_, g))| (i, g.bbox())).collect());
    for inst in domain.instances() {
        if domain.instance_kind(inst) != ClassKind::Domain {
            continue;
        }
        if let Some(g) = domain_footprint(domain, inst, net) {
            for &i in index.query_bbox(&g.bbox().expanded(net.epsilon())) {
                let (st_inst, region) = regions[i];
                if let Some((relation, confidence)) = spatial_relation(&g, region, net.epsilon()) {
                    out.mappings.push(InstanceMapping {
                        domain_instance_id: inst.id.clone(),
                        st_instance_id: st_inst.id.clone(),
                        relation,
                        confidence,
                        dimension: Dimension::Spatial,
                    });
                }
            }
        }
        if let Some(t) = domain_extent(inst, net) {
            for (st_inst, period) in &periods {
                if let Some((relation, confidence)) = temporal_relation(&t, period) {
                    out.mappings.push(InstanceMapping {
                        domain_instance_id: inst.id.clone(),
                        st_instance_id: st_inst.id.clone(),
                        relation,
                        confidence,
                        dimension: Dimension::Temporal,
                    });
                }
            }
        }
    }
    out.mappings.sort_by(|a, b| {
        (&a.domain_instance_id, a.dimension, &a.st_instance_id).cmp(&(&b.domain_instance_id, b.dimension, &b.st_instance_id))
    });
    out
}

/// Recompute a mapping's relation from the current footprints.
pub fn verify_mapping(
    m: &InstanceMapping,
    domain: &OntologyGraph,
    st: &OntologyGraph,
    net: &InfrastructureNetwork,
) -> bool {
    let (Some(d), Some(s)) = (domain.instance(&m.domain_instance_id), st.instance(&m.st_instance_id)) else {
        return false;
    };
    let relation = match m.dimension {
        Dimension::Spatial => match (domain_footprint(domain, d, net), st.footprint(s)) {
            (Some(a), Some(b)) => spatial_relation(&a, b, net.epsilon()),
            _ => None,
        },
        Dimension::Temporal => match (domain_extent(d, net), s.temporal_extent) {
            (Some(a), Some(b)) => temporal_relation(&a, &b),
            _ => None,
        },
    };
    relation.is_some_and(|(r, _)| r == m.relation)
}

/// Ontologies with their mappings and a per-layer feature index, all
/// materialized against one network revision.
#[derive(Debug, Clone)]
pub struct Catalog {
    pub st: OntologyGraph,
    pub domains: Vec<OntologyGraph>,
    revision: u64,
    matched: MatchOutput,
    index: BTreeMap<String, GridIndex<FeatureRef>>,
    /// Layers whose every feature is the payload of a domain instance.
    backed: BTreeSet<String>,
    /// Spatial instance id → features mapped to it.
    by_region: BTreeMap<String, BTreeSet<FeatureRef>>,
}

impl Catalog {
    pub fn build(st: OntologyGraph, domains: Vec<OntologyGraph>, net: &InfrastructureNetwork) -> Result<Self, OntologyError> {
        let mut seen = BTreeSet::new();
        for d in &domains {
            for inst in d.instances() {
                if !seen.insert(inst.id.clone()) {
                    return Err(OntologyError::DuplicateId {
                        what: "domain instance",
                        id: inst.id.clone(),
                    });
                }
            }
        }
        let mut catalog = Self {
            st,
            domains,
            revision: 0,
            matched: MatchOutput::default(),
            index: BTreeMap::new(),
            backed: BTreeSet::new(),
            by_region: BTreeMap::new(),
        };
        catalog.rebuild(net);
        Ok(catalog)
    }

    fn rebuild(&mut self, net: &InfrastructureNetwork) {
        self.revision = net.revision();
        self.index = net
            .layers()
            .map(|layer| {
                let entries = FeatureRef::all_in_layer(net, &layer.id)
                    .into_iter()
                    .filter_map(|f| Some((f.geometry(net)?.bbox(), f)))
                    .map(|(b, f)| (f, b))
                    .collect();
                (layer.id.clone(), GridIndex::build(entries))
            })
            .collect();

        let mut matched = MatchOutput::default();
        let mut payload: BTreeMap<String, FeatureRef> = BTreeMap::new();
        for d in &self.domains {
            let m = match_instances(d, &self.st, net);
            matched.mappings.extend(m.mappings);
            matched.warnings.extend(m.warnings);
            // an instance with its own footprint was matched on that, not on the feature
            for inst in d.instances().filter(|i| i.spatial_footprint.is_none()) {
                if let Some(f) = inst.payload_ref.as_deref().and_then(|r| FeatureRef::resolve(net, r)) {
                    payload.insert(inst.id.clone(), f);
                }
            }
        }
        matched.warnings.sort();
        matched.warnings.dedup();
        let covered: BTreeSet<&FeatureRef> = payload.values().collect();
        self.backed = net
            .layers()
            .filter(|l| {
                FeatureRef::all_in_layer(net, &l.id)
                    .iter()
                    .all(|f| covered.contains(f))
            })
            .map(|l| l.id.clone())
            .collect();
        self.by_region.clear();
        for m in matched.mappings.iter().filter(|m| m.dimension == Dimension::Spatial) {
            if let Some(f) = payload.get(&m.domain_instance_id) {
                self.by_region
                    .entry(m.st_instance_id.clone())
                    .or_default()
                    .insert(f.clone());
            }
        }
        self.matched = matched;
    }

    /// Re-match when the network moved on since the last build.
    pub fn refresh(&mut self, net: &InfrastructureNetwork) {
        if !self.is_current(net) {
            self.rebuild(net);
        }
    }

    pub fn is_current(&self, net: &InfrastructureNetwork) -> bool {
        self.revision == net.revision()
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn mappings(&self) -> &[InstanceMapping] {
        &self.matched.mappings
    }

    pub fn warnings(&self) -> &[String] {
        &self.matched.warnings
    }

    pub(crate) fn index(&self, layer: &str) -> Option<&GridIndex<FeatureRef>> {
        self.index.get(layer)
    }

    pub(crate) fn is_backed(&self, layer: &str) -> bool {
        self.backed.contains(layer)
    }

    /// Features mapped to a spatial instance or any of its descendants.
    pub(crate) fn mapped_to(&self, region_id: &str) -> Result<BTreeSet<FeatureRef>, OntologyError> {
        let mut ids = vec![region_id.to_string()];
        ids.extend(self.st.resolve_hierarchy(region_id, Direction::Descendants)?);
        Ok(ids
            .iter()
            .filter_map(|id| self.by_region.get(id))
            .flatten()
            .cloned()
            .collect())
    }
}
