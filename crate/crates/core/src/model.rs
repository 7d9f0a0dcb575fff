//! Network data model shared by every stage: layers, nodes, edges, area
//! features, and the all-or-nothing edit path.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BBox, MultiPolygonGeometry};

/// Default merge tolerance in meters.
pub const DEFAULT_EPSILON: f64 = 0.01;

/// Planar coordinate in meters of a projected CRS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(&self, other: &Point2D, t: f64) -> Point2D {
        Point2D::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }
}

impl fmt::Display for Point2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Attribute value. Integers and floats are kept apart so that values such
/// as `Is_manhole = 1` survive a text round-trip unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl Scalar {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Int(v) => Some(*v as f64),
            Scalar::Float(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Scalar::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Interpret a raw table cell: booleans, then integers, then floats,
    /// otherwise text.
    pub fn from_cell(raw: &str) -> Scalar {
        match raw {
            "true" => return Scalar::Bool(true),
            "false" => return Scalar::Bool(false),
            _ => {}
        }
        if let Ok(v) = raw.parse::<i64>() {
            return Scalar::Int(v);
        }
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Scalar::Float(v),
            _ => Scalar::Text(raw.to_string()),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Bool(v) => write!(f, "{v}"),
            Scalar::Int(v) => write!(f, "{v}"),
            Scalar::Float(v) => write!(f, "{v}"),
            Scalar::Text(v) => f.write_str(v),
        }
    }
}

pub type Attributes = BTreeMap<String, Scalar>;

/// Inclusive calendar interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeInterval {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl TimeInterval {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, ModelError> {
        if start > end {
            return Err(ModelError::InvalidInterval { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, other: &TimeInterval) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &TimeInterval) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    /// Number of days covered, inclusive of both ends.
    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days() + 1
    }

    /// Days shared with `other`, zero when disjoint.
    pub fn overlap_days(&self, other: &TimeInterval) -> i64 {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        if start > end {
            0
        } else {
            (end - start).num_days() + 1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Pipes,
    Streets,
    Buildings,
    Census,
    Rail,
    Other,
}

impl LayerKind {
    pub const ALL: [LayerKind; 6] = [
        LayerKind::Pipes,
        LayerKind::Streets,
        LayerKind::Buildings,
        LayerKind::Census,
        LayerKind::Rail,
        LayerKind::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LayerKind::Pipes => "pipes",
            LayerKind::Streets => "streets",
            LayerKind::Buildings => "buildings",
            LayerKind::Census => "census",
            LayerKind::Rail => "rail",
            LayerKind::Other => "other",
        }
    }
}

impl std::str::FromStr for LayerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LayerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown layer kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sensitivity {
    Public,
    Sensitive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalResolution {
    #[default]
    None,
    Day,
    Month,
    Year,
}

/// A thematic layer. Kind and sensitivity are fixed once the layer is
/// registered with a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub id: String,
    pub name: String,
    pub kind: LayerKind,
    pub sensitivity: Sensitivity,
    #[serde(default)]
    pub temporal_resolution: TemporalResolution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_interval: Option<TimeInterval>,
}

impl Layer {
    pub fn new(id: impl Into<String>, kind: LayerKind, sensitivity: Sensitivity) -> Self {
        let id = id.into();
        Self {
            name: id.clone(),
            id,
            kind,
            sensitivity,
            temporal_resolution: TemporalResolution::None,
            valid_interval: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub position: Point2D,
    pub layer_id: String,
    #[serde(default)]
    pub attributes: Attributes,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flag_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid: Option<TimeInterval>,
}

impl Node {
    pub fn new(id: impl Into<String>, layer_id: impl Into<String>, position: Point2D) -> Self {
        Self {
            id: id.into(),
            position,
            layer_id: layer_id.into(),
            attributes: Attributes::new(),
            flag_ids: Vec::new(),
            valid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: String,
    pub endpoint_a: String,
    pub endpoint_b: String,
    pub layer_id: String,
    #[serde(default)]
    pub attributes: Attributes,
    /// Full vertex list including both endpoints; empty for straight segments.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub polyline: Vec<Point2D>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flag_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid: Option<TimeInterval>,
}

impl Edge {
    pub fn new(
        id: impl Into<String>,
        layer_id: impl Into<String>,
        endpoint_a: impl Into<String>,
        endpoint_b: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            endpoint_a: endpoint_a.into(),
            endpoint_b: endpoint_b.into(),
            layer_id: layer_id.into(),
            attributes: Attributes::new(),
            polyline: Vec::new(),
            flag_ids: Vec::new(),
            valid: None,
        }
    }

    pub fn other_end(&self, node_id: &str) -> Option<&str> {
        if self.endpoint_a == node_id {
            Some(&self.endpoint_b)
        } else if self.endpoint_b == node_id {
            Some(&self.endpoint_a)
        } else {
            None
        }
    }

    pub fn touches(&self, node_id: &str) -> bool {
        self.endpoint_a == node_id || self.endpoint_b == node_id
    }
}

/// Polygonal feature (building footprint, census block, query region stored
/// with a layer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaFeature {
    pub id: String,
    pub layer_id: String,
    pub geometry: MultiPolygonGeometry,
    #[serde(default)]
    pub attributes: Attributes,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flag_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid: Option<TimeInterval>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Node,
    Edge,
    Area,
    Layer,
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntityKind::Node => "node",
            EntityKind::Edge => "edge",
            EntityKind::Area => "area",
            EntityKind::Layer => "layer",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown {kind} `{id}`")]
    NotFound { kind: EntityKind, id: String },
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: EntityKind, id: String },
    #[error("merge tolerance must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("{kind} `{id}` has non-finite coordinates")]
    NonFinite { kind: EntityKind, id: String },
    #[error("edge `{0}` is a self-loop")]
    SelfLoop(String),
    #[error("edge `{edge}` endpoint `{node}` is missing")]
    DanglingEndpoint { edge: String, node: String },
    #[error("edge `{edge}` in layer `{edge_layer}` references node `{node}` of layer `{node_layer}`")]
    LayerMismatch {
        edge: String,
        edge_layer: String,
        node: String,
        node_layer: String,
    },
    #[error("edge `{0}` polyline does not start and end at its endpoints")]
    PolylineMismatch(String),
    #[error("node `{node}` still has {count} incident edge(s)")]
    NodeInUse { node: String, count: usize },
    #[error("invalid interval: {start} is after {end}")]
    InvalidInterval { start: NaiveDate, end: NaiveDate },
    #[error("edit action #{index} rejected: {source}")]
    EditRejected {
        index: usize,
        #[source]
        source: Box<ModelError>,
    },
}

impl ModelError {
    fn not_found(kind: EntityKind, id: &str) -> Self {
        ModelError::NotFound {
            kind,
            id: id.to_string(),
        }
    }
}

/// One action of an edit batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditAction {
    AddNode {
        node: Node,
    },
    RemoveNode {
        id: String,
    },
    ModifyNode {
        id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        position: Option<Point2D>,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        set_attributes: Attributes,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        unset_attributes: Vec<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        add_flags: Vec<String>,
    },
    AddEdge {
        edge: Edge,
    },
    RemoveEdge {
        id: String,
    },
    ModifyEdge {
        id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        endpoints: Option<(String, String)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        polyline: Option<Vec<Point2D>>,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        set_attributes: Attributes,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        unset_attributes: Vec<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        add_flags: Vec<String>,
    },
}

impl EditAction {
    pub fn modify_node(id: impl Into<String>) -> Self {
        EditAction::ModifyNode {
            id: id.into(),
            position: None,
            set_attributes: Attributes::new(),
            unset_attributes: Vec::new(),
            add_flags: Vec::new(),
        }
    }

    pub fn modify_edge(id: impl Into<String>) -> Self {
        EditAction::ModifyEdge {
            id: id.into(),
            endpoints: None,
            polyline: None,
            set_attributes: Attributes::new(),
            unset_attributes: Vec::new(),
            add_flags: Vec::new(),
        }
    }

    /// Kind and id of the entity this action touches.
    pub fn target(&self) -> (EntityKind, &str) {
        match self {
            EditAction::AddNode { node } => (EntityKind::Node, &node.id),
            EditAction::RemoveNode { id } | EditAction::ModifyNode { id, .. } => {
                (EntityKind::Node, id)
            }
            EditAction::AddEdge { edge } => (EntityKind::Edge, &edge.id),
            EditAction::RemoveEdge { id } | EditAction::ModifyEdge { id, .. } => {
                (EntityKind::Edge, id)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EditBatch {
    pub actions: Vec<EditAction>,
}

impl EditBatch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, action: EditAction) {
        self.actions.push(action);
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Ids of nodes and edges this batch touches, sorted.
    pub fn touched(&self) -> (BTreeSet<String>, BTreeSet<String>) {
        let mut nodes = BTreeSet::new();
        let mut edges = BTreeSet::new();
        for action in &self.actions {
            match action.target() {
                (EntityKind::Node, id) => nodes.insert(id.to_string()),
                (_, id) => edges.insert(id.to_string()),
            };
        }
        (nodes, edges)
    }
}

/// Hands out `n<counter>` / `e<counter>` ids that do not collide with any
/// id currently present in the network it was created from.
#[derive(Debug, Clone)]
pub struct IdAllocator {
    next_node: u64,
    next_edge: u64,
    next_area: u64,
}

impl IdAllocator {
    pub fn node(&mut self) -> String {
        self.next_node += 1;
        format!("n{}", self.next_node)
    }

    pub fn edge(&mut self) -> String {
        self.next_edge += 1;
        format!("e{}", self.next_edge)
    }

    pub fn area(&mut self) -> String {
        self.next_area += 1;
        format!("a{}", self.next_area)
    }
}

fn generated_suffix(id: &str, prefix: char) -> Option<u64> {
    let rest = id.strip_prefix(prefix)?;
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkData {
    epsilon: f64,
    revision: u64,
    layers: Vec<Layer>,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    #[serde(default)]
    areas: Vec<AreaFeature>,
}

/// Multi-layer planar network. Readers hold clones (snapshots); all
/// committed changes go through [`InfrastructureNetwork::apply_edit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "NetworkData", try_from = "NetworkData")]
pub struct InfrastructureNetwork {
    layers: BTreeMap<String, Layer>,
    nodes: BTreeMap<String, Node>,
    edges: BTreeMap<String, Edge>,
    areas: BTreeMap<String, AreaFeature>,
    epsilon: f64,
    revision: u64,
    // node id -> incident edge ids; may briefly reference removed nodes
    // while a batch is being applied
    incident: BTreeMap<String, BTreeSet<String>>,
    node_seq: u64,
    edge_seq: u64,
    area_seq: u64,
}

impl From<InfrastructureNetwork> for NetworkData {
    fn from(net: InfrastructureNetwork) -> Self {
        NetworkData {
            epsilon: net.epsilon,
            revision: net.revision,
            layers: net.layers.into_values().collect(),
            nodes: net.nodes.into_values().collect(),
            edges: net.edges.into_values().collect(),
            areas: net.areas.into_values().collect(),
        }
    }
}

impl TryFrom<NetworkData> for InfrastructureNetwork {
    type Error = ModelError;

    fn try_from(data: NetworkData) -> Result<Self, Self::Error> {
        let mut net = InfrastructureNetwork::new(data.epsilon)?;
        for layer in data.layers {
            net.add_layer(layer)?;
        }
        for node in data.nodes {
            net.insert_node(node)?;
        }
        for edge in data.edges {
            net.insert_edge(edge)?;
        }
        for area in data.areas {
            net.insert_area(area)?;
        }
        net.revision = data.revision;
        Ok(net)
    }
}

impl InfrastructureNetwork {
    pub fn new(epsilon: f64) -> Result<Self, ModelError> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(ModelError::InvalidEpsilon(epsilon));
        }
        Ok(Self {
            layers: BTreeMap::new(),
            nodes: BTreeMap::new(),
            edges: BTreeMap::new(),
            areas: BTreeMap::new(),
            epsilon,
            revision: 0,
            incident: BTreeMap::new(),
            node_seq: 0,
            edge_seq: 0,
            area_seq: 0,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn allocator(&self) -> IdAllocator {
        IdAllocator {
            next_node: self.node_seq,
            next_edge: self.edge_seq,
            next_area: self.area_seq,
        }
    }

    // ---- load-time construction (does not bump the revision) ----

    pub fn add_layer(&mut self, layer: Layer) -> Result<(), ModelError> {
        if self.layers.contains_key(&layer.id) {
            return Err(ModelError::DuplicateId {
                kind: EntityKind::Layer,
                id: layer.id,
            });
        }
        self.layers.insert(layer.id.clone(), layer);
        Ok(())
    }

    /// Insert a node at load time. The node's layer must exist.
    pub fn insert_node(&mut self, node: Node) -> Result<(), ModelError> {
        if self.nodes.contains_key(&node.id) {
            return Err(ModelError::DuplicateId {
                kind: EntityKind::Node,
                id: node.id,
            });
        }
        self.check_node(&node)?;
        self.put_node(node);
        Ok(())
    }

    /// Insert an edge at load time; endpoints must already be present.
    pub fn insert_edge(&mut self, edge: Edge) -> Result<(), ModelError> {
        if self.edges.contains_key(&edge.id) {
            return Err(ModelError::DuplicateId {
                kind: EntityKind::Edge,
                id: edge.id,
            });
        }
        self.check_edge_shape(&edge)?;
        self.check_edge_links(&edge)?;
        self.put_edge(edge);
        Ok(())
    }

    pub fn insert_area(&mut self, area: AreaFeature) -> Result<(), ModelError> {
        if self.areas.contains_key(&area.id) {
            return Err(ModelError::DuplicateId {
                kind: EntityKind::Area,
                id: area.id,
            });
        }
        if !self.layers.contains_key(&area.layer_id) {
            return Err(ModelError::not_found(EntityKind::Layer, &area.layer_id));
        }
        if let Some(seq) = generated_suffix(&area.id, 'a') {
            self.area_seq = self.area_seq.max(seq);
        }
        self.areas.insert(area.id.clone(), area);
        Ok(())
    }

    /// Move every layer and entity of `other` into this network. Ids must
    /// not collide.
    pub fn absorb(&mut self, other: InfrastructureNetwork) -> Result<(), ModelError> {
        for layer in other.layers.into_values() {
            self.add_layer(layer)?;
        }
        for node in other.nodes.into_values() {
            self.insert_node(node)?;
        }
        for edge in other.edges.into_values() {
            self.insert_edge(edge)?;
        }
        for area in other.areas.into_values() {
            self.insert_area(area)?;
        }
        Ok(())
    }

    // ---- accessors ----

    pub fn layer(&self, id: &str) -> Result<&Layer, ModelError> {
        self.layers
            .get(id)
            .ok_or_else(|| ModelError::not_found(EntityKind::Layer, id))
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.layers.values()
    }

    pub fn layers_of_kind(&self, kind: LayerKind) -> impl Iterator<Item = &Layer> {
        self.layers.values().filter(move |l| l.kind == kind)
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn edge(&self, id: &str) -> Option<&Edge> {
        self.edges.get(id)
    }

    pub fn area(&self, id: &str) -> Option<&AreaFeature> {
        self.areas.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn areas(&self) -> impl Iterator<Item = &AreaFeature> {
        self.areas.values()
    }

    pub fn nodes_in_layer<'a>(&'a self, layer_id: &'a str) -> impl Iterator<Item = &'a Node> + 'a {
        self.nodes.values().filter(move |n| n.layer_id == layer_id)
    }

    pub fn edges_in_layer<'a>(&'a self, layer_id: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.values().filter(move |e| e.layer_id == layer_id)
    }

    pub fn areas_in_layer<'a>(
        &'a self,
        layer_id: &'a str,
    ) -> impl Iterator<Item = &'a AreaFeature> + 'a {
        self.areas.values().filter(move |a| a.layer_id == layer_id)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn incident_edges<'a>(&'a self, node_id: &str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.incident
            .get(node_id)
            .into_iter()
            .flatten()
            .filter_map(|id| self.edges.get(id))
    }

    /// Distinct neighbor node ids.
    pub fn neighbors(&self, node_id: &str) -> BTreeSet<String> {
        self.incident_edges(node_id)
            .filter_map(|e| e.other_end(node_id))
            .map(str::to_string)
            .collect()
    }

    /// Number of incident edges (within the node's own layer, since edges
    /// never span layers).
    pub fn node_degree(&self, node_id: &str) -> Result<usize, ModelError> {
        if !self.nodes.contains_key(node_id) {
            return Err(ModelError::not_found(EntityKind::Node, node_id));
        }
        Ok(self.incident.get(node_id).map_or(0, BTreeSet::len))
    }

    fn degree_unchecked(&self, node_id: &str) -> usize {
        self.incident.get(node_id).map_or(0, BTreeSet::len)
    }

    /// Degree-1 nodes of a layer, sorted by id.
    pub fn end_nodes(&self, layer_id: &str) -> Result<Vec<String>, ModelError> {
        self.layer(layer_id)?;
        Ok(self
            .nodes_in_layer(layer_id)
            .filter(|n| self.degree_unchecked(&n.id) == 1)
            .map(|n| n.id.clone())
            .collect())
    }

    /// Vertex chain of an edge from `endpoint_a` to `endpoint_b`.
    pub fn edge_chain(&self, edge: &Edge) -> Vec<Point2D> {
        if !edge.polyline.is_empty() {
            return edge.polyline.clone();
        }
        let a = self.nodes.get(&edge.endpoint_a).map(|n| n.position);
        let b = self.nodes.get(&edge.endpoint_b).map(|n| n.position);
        a.into_iter().chain(b).collect()
    }

    pub fn edge_bbox(&self, edge: &Edge) -> BBox {
        BBox::of_points(&self.edge_chain(edge))
    }

    /// Full referential-integrity scan.
    pub fn check_integrity(&self) -> Result<(), ModelError> {
        for node in self.nodes.values() {
            self.check_node(node)?;
        }
        for edge in self.edges.values() {
            self.check_edge_shape(edge)?;
            self.check_edge_links(edge)?;
        }
        Ok(())
    }

    // ---- edit path ----

    /// Apply a batch atomically. On success the revision advances by one;
    /// on failure the network is untouched and the error names the first
    /// offending action.
    pub fn apply_edit(&mut self, batch: &EditBatch) -> Result<u64, ModelError> {
        let mut work = self.clone();
        let mut last_touch: BTreeMap<(bool, String), usize> = BTreeMap::new();
        let mut removed_nodes: BTreeMap<String, usize> = BTreeMap::new();

        for (index, action) in batch.actions.iter().enumerate() {
            work.apply_action(action)
                .map_err(|e| ModelError::EditRejected {
                    index,
                    source: Box::new(e),
                })?;
            let (kind, id) = action.target();
            last_touch.insert((kind == EntityKind::Node, id.to_string()), index);
            if matches!(action, EditAction::RemoveNode { .. }) {
                removed_nodes.insert(id.to_string(), index);
            }
        }

        // deferred checks; report the earliest offending action
        let mut violations: Vec<(usize, ModelError)> = Vec::new();
        for (node_id, index) in &removed_nodes {
            if work.nodes.contains_key(node_id) {
                continue;
            }
            let count = work.degree_unchecked(node_id);
            if count > 0 {
                violations.push((
                    *index,
                    ModelError::NodeInUse {
                        node: node_id.clone(),
                        count,
                    },
                ));
            }
        }
        for ((is_node, id), index) in &last_touch {
            if *is_node {
                let Some(node) = work.nodes.get(id) else { continue };
                for edge in work.incident_edges(&node.id) {
                    if let Err(e) = work.check_edge_links(edge) {
                        // the later of the two actions broke the link
                        let edge_touch = last_touch.get(&(false, edge.id.clone())).copied().unwrap_or(0);
                        violations.push(((*index).max(edge_touch), e));
                        break;
                    }
                }
            } else if let Some(edge) = work.edges.get(id) {
                if let Err(e) = work.check_edge_links(edge) {
                    let blame = [&edge.endpoint_a, &edge.endpoint_b]
                        .iter()
                        .filter_map(|n| removed_nodes.get(*n))
                        .copied()
                        .min()
                        .unwrap_or(*index);
                    violations.push((blame, e));
                }
            }
        }
        if let Some((index, err)) = violations.into_iter().min_by_key(|(i, _)| *i) {
            return Err(ModelError::EditRejected {
                index,
                source: Box::new(err),
            });
        }

        work.revision = self.revision + 1;
        *self = work;
        Ok(self.revision)
    }

    fn apply_action(&mut self, action: &EditAction) -> Result<(), ModelError> {
        match action {
            EditAction::AddNode { node } => {
                if self.nodes.contains_key(&node.id) {
                    return Err(ModelError::DuplicateId {
                        kind: EntityKind::Node,
                        id: node.id.clone(),
                    });
                }
                self.check_node(node)?;
                self.put_node(node.clone());
            }
            EditAction::RemoveNode { id } => {
                self.nodes
                    .remove(id)
                    .ok_or_else(|| ModelError::not_found(EntityKind::Node, id))?;
            }
            EditAction::ModifyNode {
                id,
                position,
                set_attributes,
                unset_attributes,
                add_flags,
            } => {
                let node = self
                    .nodes
                    .get_mut(id)
                    .ok_or_else(|| ModelError::not_found(EntityKind::Node, id))?;
                if let Some(p) = position {
                    if !p.is_finite() {
                        return Err(ModelError::NonFinite {
                            kind: EntityKind::Node,
                            id: id.clone(),
                        });
                    }
                    node.position = *p;
                }
                for key in unset_attributes {
                    node.attributes.remove(key);
                }
                node.attributes
                    .extend(set_attributes.iter().map(|(k, v)| (k.clone(), v.clone())));
                push_flags(&mut node.flag_ids, add_flags);
            }
            EditAction::AddEdge { edge } => {
                if self.edges.contains_key(&edge.id) {
                    return Err(ModelError::DuplicateId {
                        kind: EntityKind::Edge,
                        id: edge.id.clone(),
                    });
                }
                self.check_edge_shape(edge)?;
                if !self.layers.contains_key(&edge.layer_id) {
                    return Err(ModelError::not_found(EntityKind::Layer, &edge.layer_id));
                }
                self.put_edge(edge.clone());
            }
            EditAction::RemoveEdge { id } => {
                let edge = self
                    .edges
                    .remove(id)
                    .ok_or_else(|| ModelError::not_found(EntityKind::Edge, id))?;
                self.unlink(&edge);
            }
            EditAction::ModifyEdge {
                id,
                endpoints,
                polyline,
                set_attributes,
                unset_attributes,
                add_flags,
            } => {
                let mut edge = self
                    .edges
                    .remove(id)
                    .ok_or_else(|| ModelError::not_found(EntityKind::Edge, id))?;
                self.unlink(&edge);
                if let Some((a, b)) = endpoints {
                    edge.endpoint_a = a.clone();
                    edge.endpoint_b = b.clone();
                }
                if let Some(line) = polyline {
                    edge.polyline = line.clone();
                }
                for key in unset_attributes {
                    edge.attributes.remove(key);
                }
                edge.attributes
                    .extend(set_attributes.iter().map(|(k, v)| (k.clone(), v.clone())));
                push_flags(&mut edge.flag_ids, add_flags);
                self.check_edge_shape(&edge)?;
                self.put_edge(edge);
            }
        }
        Ok(())
    }

    fn check_node(&self, node: &Node) -> Result<(), ModelError> {
        if !node.position.is_finite() {
            return Err(ModelError::NonFinite {
                kind: EntityKind::Node,
                id: node.id.clone(),
            });
        }
        if !self.layers.contains_key(&node.layer_id) {
            return Err(ModelError::not_found(EntityKind::Layer, &node.layer_id));
        }
        Ok(())
    }

    fn check_edge_shape(&self, edge: &Edge) -> Result<(), ModelError> {
        if edge.endpoint_a == edge.endpoint_b {
            return Err(ModelError::SelfLoop(edge.id.clone()));
        }
        if edge.polyline.len() == 1 {
            return Err(ModelError::PolylineMismatch(edge.id.clone()));
        }
        if edge.polyline.iter().any(|p| !p.is_finite()) {
            return Err(ModelError::NonFinite {
                kind: EntityKind::Edge,
                id: edge.id.clone(),
            });
        }
        Ok(())
    }

    fn check_edge_links(&self, edge: &Edge) -> Result<(), ModelError> {
        for end in [&edge.endpoint_a, &edge.endpoint_b] {
            let node = self
                .nodes
                .get(end)
                .ok_or_else(|| ModelError::DanglingEndpoint {
                    edge: edge.id.clone(),
                    node: end.clone(),
                })?;
            if node.layer_id != edge.layer_id {
                return Err(ModelError::LayerMismatch {
                    edge: edge.id.clone(),
                    edge_layer: edge.layer_id.clone(),
                    node: node.id.clone(),
                    node_layer: node.layer_id.clone(),
                });
            }
        }
        if let (Some(first), Some(last)) = (edge.polyline.first(), edge.polyline.last()) {
            let a = self.nodes[&edge.endpoint_a].position;
            let b = self.nodes[&edge.endpoint_b].position;
            if first.distance(&a) > self.epsilon || last.distance(&b) > self.epsilon {
                return Err(ModelError::PolylineMismatch(edge.id.clone()));
            }
        }
        Ok(())
    }

    fn put_node(&mut self, node: Node) {
        if let Some(seq) = generated_suffix(&node.id, 'n') {
            self.node_seq = self.node_seq.max(seq);
        }
        self.nodes.insert(node.id.clone(), node);
    }

    fn put_edge(&mut self, edge: Edge) {
        if let Some(seq) = generated_suffix(&edge.id, 'e') {
            self.edge_seq = self.edge_seq.max(seq);
        }
        for end in [&edge.endpoint_a, &edge.endpoint_b] {
            self.incident
                .entry(end.clone())
                .or_default()
                .insert(edge.id.clone());
        }
        self.edges.insert(edge.id.clone(), edge);
    }

    fn unlink(&mut self, edge: &Edge) {
        for end in [&edge.endpoint_a, &edge.endpoint_b] {
            if let Some(set) = self.incident.get_mut(end) {
                set.remove(&edge.id);
                if set.is_empty() {
                    self.incident.remove(end);
                }
            }
        }
    }
}

fn push_flags(target: &mut Vec<String>, flags: &[String]) {
    for flag in flags {
        if !target.contains(flag) {
            target.push(flag.clone());
        }
    }
}
