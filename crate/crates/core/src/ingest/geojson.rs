use chrono::NaiveDate;
use serde_json::{json, Map, Value};

use super::IngestError;
use crate::model::{Attributes, EntityKind, InfrastructureNetwork, Layer, ModelError, Point2D, Scalar, TimeInterval};

pub const KEY_FLAGS: &str = "_guides_flags";
pub const KEY_NODE_A: &str = "_guides_node_a";
pub const KEY_NODE_B: &str = "_guides_node_b";
pub const KEY_VALID_FROM: &str = "_guides_valid_from";
pub const KEY_VALID_TO: &str = "_guides_valid_to";

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureGeometry {
    Point(Point2D),
    LineString(Vec<Point2D>),
    /// Closed rings, outer first.
    Polygon(Vec<Vec<Point2D>>),
    MultiPolygon(Vec<Vec<Vec<Point2D>>>),
}

impl FeatureGeometry {
    pub fn kind_name(&self) -> &'static str {
        match self {
            FeatureGeometry::Point(_) => "Point",
            FeatureGeometry::LineString(_) => "LineString",
            FeatureGeometry::Polygon(_) => "Polygon",
            FeatureGeometry::MultiPolygon(_) => "MultiPolygon",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    /// Position in the source FeatureCollection.
    pub index: usize,
    pub id: Option<String>,
    pub geometry: FeatureGeometry,
    pub properties: Attributes,
    pub source_layer: String,
    pub flags: Vec<String>,
    /// Endpoint node ids recorded by a previous export.
    pub node_a: Option<String>,
    pub node_b: Option<String>,
    pub valid: Option<TimeInterval>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnsupportedFeature {
    pub index: usize,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLayer {
    pub layer: Layer,
    pub features: Vec<FeatureRecord>,
    pub unsupported: Vec<UnsupportedFeature>,
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line <= 1 {
        return column.saturating_sub(1);
    }
    let mut seen = 1;
    for (i, b) in bytes.iter().enumerate() {
        if *b == b'\n' {
            seen += 1;
            if seen == line {
                return (i + column).min(bytes.len());
            }
        }
    }
    bytes.len()
}

fn invalid(index: usize, message: impl Into<String>) -> IngestError {
    IngestError::Validation {
        index,
        message: message.into(),
    }
}

fn position(index: usize, v: &Value) -> Result<Point2D, IngestError> {
    let arr = v
        .as_array()
        .filter(|a| a.len() >= 2)
        .ok_or_else(|| invalid(index, "position must be an array of at least two numbers"))?;
    let x = arr[0].as_f64();
    let y = arr[1].as_f64();
    match (x, y) {
        (Some(x), Some(y)) if x.is_finite() && y.is_finite() => Ok(Point2D::new(x, y)),
        _ => Err(invalid(index, "position must be an array of at least two numbers")),
    }
}

fn positions(index: usize, v: &Value) -> Result<Vec<Point2D>, IngestError> {
    v.as_array()
        .ok_or_else(|| invalid(index, "expected an array of positions"))?
        .iter()
        .map(|p| position(index, p))
        .collect()
}

fn rings(index: usize, v: &Value) -> Result<Vec<Vec<Point2D>>, IngestError> {
    let raw = v
        .as_array()
        .ok_or_else(|| invalid(index, "expected an array of rings"))?;
    if raw.is_empty() {
        return Err(invalid(index, "polygon has no rings"));
    }
    raw.iter()
        .enumerate()
        .map(|(r, ring)| {
            let ring = positions(index, ring)?;
            if ring.len() < 4 {
                return Err(invalid(index, format!("ring {r} has {} vertices, need at least 4", ring.len())));
            }
            if ring.first() != ring.last() {
                return Err(invalid(index, format!("ring {r} is not closed")));
            }
            Ok(ring)
        })
        .collect()
}

enum ParsedGeometry {
    Supported(FeatureGeometry),
    Unsupported(String),
}

fn geometry(index: usize, v: &Value) -> Result<ParsedGeometry, IngestError> {
    if v.is_null() {
        return Ok(ParsedGeometry::Unsupported("null".into()));
    }
    let kind = v
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| invalid(index, "geometry has no type"))?;
    let coords = || {
        v.get("coordinates")
            .ok_or_else(|| invalid(index, "geometry has no coordinates"))
    };
    let geom = match kind {
        "Point" => FeatureGeometry::Point(position(index, coords()?)?),
        "LineString" => {
            let line = positions(index, coords()?)?;
            if line.len() < 2 {
                return Err(invalid(index, format!("LineString has {} vertex, need at least 2", line.len())));
            }
            FeatureGeometry::LineString(line)
        }
        "Polygon" => FeatureGeometry::Polygon(rings(index, coords()?)?),
        "MultiPolygon" => FeatureGeometry::MultiPolygon(
            coords()?
                .as_array()
                .ok_or_else(|| invalid(index, "expected an array of polygons"))?
                .iter()
                .map(|p| rings(index, p))
                .collect::<Result<_, _>>()?,
        ),
        other => return Ok(ParsedGeometry::Unsupported(other.to_string())),
    };
    Ok(ParsedGeometry::Supported(geom))
}

/// Parse a bare GeoJSON geometry object (Point, LineString, Polygon,
/// MultiPolygon).
pub fn parse_geometry(v: &Value) -> Result<FeatureGeometry, IngestError> {
    match geometry(0, v)? {
        ParsedGeometry::Supported(g) => Ok(g),
        ParsedGeometry::Unsupported(kind) => Err(invalid(0, format!("unsupported geometry type `{kind}`"))),
    }
}

fn scalar(index: usize, key: &str, v: &Value) -> Result<Option<Scalar>, IngestError> {
    Ok(match v {
        Value::Null => None,
        Value::Bool(b) => Some(Scalar::Bool(*b)),
        Value::Number(n) => match n.as_i64() {
            Some(i) => Some(Scalar::Int(i)),
            None => Some(Scalar::Float(n.as_f64().unwrap_or(f64::NAN))),
        },
        Value::String(s) => Some(Scalar::Text(s.clone())),
        _ => return Err(invalid(index, format!("property `{key}` is not a scalar"))),
    })
}

fn date(index: usize, key: &str, v: &Value) -> Result<NaiveDate, IngestError> {
    v.as_str()
        .and_then(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok())
        .ok_or_else(|| invalid(index, format!("`{key}` must be a YYYY-MM-DD date")))
}

fn feature_id(index: usize, v: Option<&Value>) -> Result<Option<String>, IngestError> {
    match v {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(Value::Number(n)) => Ok(Some(n.to_string())),
        Some(_) => Err(invalid(index, "feature id must be a string or number")),
    }
}

fn check_crs(doc: &Value) -> Result<(), IngestError> {
    let Some(name) = doc.pointer("/crs/properties/name").and_then(Value::as_str) else {
        return Ok(());
    };
    let upper = name.to_ascii_uppercase();
    if upper.ends_with(":4326") || upper.ends_with("CRS84") || upper.ends_with("::4326") {
        return Err(IngestError::GeographicCrs(name.to_string()));
    }
    Ok(())
}

/// Parse one layer's FeatureCollection. Feature properties are kept
/// verbatim except for the reserved `_guides_` keys, which are decoded.
pub fn parse_layer(bytes: &[u8], layer: &Layer) -> Result<ParsedLayer, IngestError> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| IngestError::Json {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(IngestError::NotFeatureCollection);
    }
    check_crs(&doc)?;
    let raw = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or(IngestError::NotFeatureCollection)?;

    let mut features = Vec::new();
    let mut unsupported = Vec::new();
    for (index, feature) in raw.iter().enumerate() {
        if feature.get("type").and_then(Value::as_str) != Some("Feature") {
            return Err(invalid(index, "member is not a Feature"));
        }
        let geom = match geometry(index, feature.get("geometry").unwrap_or(&Value::Null))? {
            ParsedGeometry::Supported(g) => g,
            ParsedGeometry::Unsupported(kind) => {
                unsupported.push(UnsupportedFeature { index, kind });
                continue;
            }
        };
        let mut record = FeatureRecord {
            index,
            id: feature_id(index, feature.get("id"))?,
            geometry: geom,
            properties: Attributes::new(),
            source_layer: layer.id.clone(),
            flags: Vec::new(),
            node_a: None,
            node_b: None,
            valid: None,
        };
        let mut from = None;
        let mut to = None;
        let props = match feature.get("properties") {
            None | Some(Value::Null) => Map::new(),
            Some(Value::Object(m)) => m.clone(),
            Some(_) => return Err(invalid(index, "properties must be an object")),
        };
        for (key, value) in &props {
            match key.as_str() {
                KEY_FLAGS => {
                    record.flags = value
                        .as_array()
                        .and_then(|a| a.iter().map(|f| f.as_str().map(str::to_string)).collect())
                        .ok_or_else(|| invalid(index, format!("`{KEY_FLAGS}` must be an array of strings")))?;
                }
                KEY_NODE_A => record.node_a = value.as_str().map(str::to_string),
                KEY_NODE_B => record.node_b = value.as_str().map(str::to_string),
                KEY_VALID_FROM => from = Some(date(index, key, value)?),
                KEY_VALID_TO => to = Some(date(index, key, value)?),
                _ => {
                    if let Some(s) = scalar(index, key, value)? {
                        record.properties.insert(key.clone(), s);
                    }
                }
            }
        }
        record.valid = match (from, to) {
            (None, None) => None,
            (Some(s), Some(e)) => Some(
                TimeInterval::new(s, e).map_err(|err| invalid(index, err.to_string()))?,
            ),
            _ => {
                return Err(invalid(
                    index,
                    format!("`{KEY_VALID_FROM}` and `{KEY_VALID_TO}` must be given together"),
                ))
            }
        };
        features.push(record);
    }
    Ok(ParsedLayer {
        layer: layer.clone(),
        features,
        unsupported,
    })
}

fn coords(p: &Point2D) -> Value {
    json!([p.x, p.y])
}

fn ring_coords(ring: &[Point2D]) -> Value {
    Value::Array(ring.iter().map(coords).collect())
}

fn properties(
    attributes: &Attributes,
    flags: &[String],
    valid: Option<&TimeInterval>,
) -> Map<String, Value> {
    let mut props = Map::new();
    for (k, v) in attributes {
        props.insert(k.clone(), serde_json::to_value(v).unwrap_or(Value::Null));
    }
    if !flags.is_empty() {
        props.insert(KEY_FLAGS.into(), json!(flags));
    }
    if let Some(v) = valid {
        props.insert(KEY_VALID_FROM.into(), json!(v.start.format("%Y-%m-%d").to_string()));
        props.insert(KEY_VALID_TO.into(), json!(v.end.format("%Y-%m-%d").to_string()));
    }
    props
}

fn feature(id: &str, geometry: Value, props: Map<String, Value>) -> Value {
    json!({
        "type": "Feature",
        "id": id,
        "geometry": geometry,
        "properties": props,
    })
}

/// Export a layer as a FeatureCollection: nodes as Points, edges as
/// LineStrings (with endpoint ids), area features as (Multi)Polygons.
pub fn export_layer(net: &InfrastructureNetwork, layer_id: &str) -> Result<Value, ModelError> {
    export_features(net, layer_id, |_, _| true)
}

/// `export_layer` restricted to the entities `keep` accepts.
pub fn export_features<F>(net: &InfrastructureNetwork, layer_id: &str, keep: F) -> Result<Value, ModelError>
where
    F: Fn(EntityKind, &str) -> bool,
{
    let layer = net.layer(layer_id)?;
    let mut features = Vec::new();
    for node in net.nodes_in_layer(layer_id).filter(|n| keep(EntityKind::Node, &n.id)) {
        let geom = json!({"type": "Point", "coordinates": coords(&node.position)});
        features.push(feature(
            &node.id,
            geom,
            properties(&node.attributes, &node.flag_ids, node.valid.as_ref()),
        ));
    }
    for edge in net.edges_in_layer(layer_id).filter(|e| keep(EntityKind::Edge, &e.id)) {
        let chain = net.edge_chain(edge);
        let geom = json!({"type": "LineString", "coordinates": ring_coords(&chain)});
        let mut props = properties(&edge.attributes, &edge.flag_ids, edge.valid.as_ref());
        props.insert(KEY_NODE_A.into(), json!(edge.endpoint_a));
        props.insert(KEY_NODE_B.into(), json!(edge.endpoint_b));
        features.push(feature(&edge.id, geom, props));
    }
    for area in net.areas_in_layer(layer_id).filter(|a| keep(EntityKind::Area, &a.id)) {
        let polygon = |p: &crate::geometry::PolygonGeometry| {
            Value::Array(p.rings().map(ring_coords).collect())
        };
        let polys = &area.geometry.polygons;
        let geom = if polys.len() == 1 {
            json!({"type": "Polygon", "coordinates": polygon(&polys[0])})
        } else {
            json!({"type": "MultiPolygon", "coordinates": polys.iter().map(polygon).collect::<Vec<_>>()})
        };
        features.push(feature(
            &area.id,
            geom,
            properties(&area.attributes, &area.flag_ids, area.valid.as_ref()),
        ));
    }
    Ok(json!({
        "type": "FeatureCollection",
        "name": layer.name,
        "features": features,
    }))
}

/// Pretty-printed export with a trailing newline; key order is stable, so
/// equal networks give byte-identical output.
pub fn export_layer_string(net: &InfrastructureNetwork, layer_id: &str) -> Result<String, ModelError> {
    let value = export_layer(net, layer_id)?;
    let mut out = serde_json::to_string_pretty(&value).expect("JSON values always serialize");
    out.push('\n');
    Ok(out)
}
