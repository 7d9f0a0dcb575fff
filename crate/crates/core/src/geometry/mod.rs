//! Planar geometry kernel: polygons, point-in-polygon, simple-features
//! predicates, a uniform-grid spatial index and planar face extraction.

mod faces;
mod index;
mod pip;
mod predicate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Point2D;

pub use faces::{bounded_faces, polygonize_layer, Face, Polygonization};
pub use index::{nearest_node, GridIndex, NodeIndex};
pub use pip::{
    locate_in_multipolygon, multipolygon_contains, multipolygon_contains_all,
    per_polygon_contains_all, point_in_polygon, Location,
};
pub use predicate::{chain_fraction_inside, predicate, Geometry, SpatialOp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate ring: {0}")]
    DegenerateRing(String),
    #[error("ring is not closed")]
    OpenRing,
    #[error("chain needs at least 2 vertices, got {0}")]
    ShortChain(usize),
    #[error("unsupported geometry pair {0}")]
    UnsupportedPair(String),
    #[error("radius must be non-negative, got {0}")]
    NegativeRadius(f64),
    #[error("layer `{0}` is not indexed")]
    UnknownLayer(String),
    #[error("index built at revision {index} but network is at revision {network}")]
    StaleIndex { index: u64, network: u64 },
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    pub const EMPTY: BBox = BBox {
        min_x: f64::INFINITY,
        min_y: f64::INFINITY,
        max_x: f64::NEG_INFINITY,
        max_y: f64::NEG_INFINITY,
    };

    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min_x: min_x.min(max_x),
            min_y: min_y.min(max_y),
            max_x: max_x.max(min_x),
            max_y: max_y.max(min_y),
        }
    }

    pub fn of_point(p: Point2D) -> Self {
        Self {
            min_x: p.x,
            min_y: p.y,
            max_x: p.x,
            max_y: p.y,
        }
    }

    pub fn of_points(points: &[Point2D]) -> Self {
        points.iter().fold(BBox::EMPTY, |b, p| b.including(*p))
    }

    pub fn is_empty(&self) -> bool {
        self.min_x > self.max_x || self.min_y > self.max_y
    }

    pub fn including(self, p: Point2D) -> Self {
        Self {
            min_x: self.min_x.min(p.x),
            min_y: self.min_y.min(p.y),
            max_x: self.max_x.max(p.x),
            max_y: self.max_y.max(p.y),
        }
    }

    pub fn union(self, other: BBox) -> Self {
        Self {
            min_x: self.min_x.min(other.min_x),
            min_y: self.min_y.min(other.min_y),
            max_x: self.max_x.max(other.max_x),
            max_y: self.max_y.max(other.max_y),
        }
    }

    pub fn expanded(self, by: f64) -> Self {
        Self {
            min_x: self.min_x - by,
            min_y: self.min_y - by,
            max_x: self.max_x + by,
            max_y: self.max_y + by,
        }
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.min_x <= other.max_x
            && other.min_x <= self.max_x
            && self.min_y <= other.max_y
            && other.min_y <= self.max_y
    }

    pub fn contains_point(&self, p: Point2D) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.width() * self.height()
        }
    }

    pub fn diagonal(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.width().hypot(self.height())
        }
    }

    /// Euclidean distance from `p` to the box (0 inside).
    pub fn distance_to(&self, p: Point2D) -> f64 {
        let dx = (self.min_x - p.x).max(0.0).max(p.x - self.max_x);
        let dy = (self.min_y - p.y).max(0.0).max(p.y - self.max_y);
        dx.hypot(dy)
    }
}

/// Twice the signed area of a closed ring (positive when counter-clockwise).
pub fn ring_signed_area(ring: &[Point2D]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        sum += a.x * b.y - b.x * a.y;
    }
    sum / 2.0
}

fn is_closed(ring: &[Point2D]) -> bool {
    ring.len() >= 2 && ring.first() == ring.last()
}

fn normalize_ring(mut ring: Vec<Point2D>, ccw: bool) -> Result<Vec<Point2D>, GeometryError> {
    if ring.iter().any(|p| !p.is_finite()) {
        return Err(GeometryError::DegenerateRing("non-finite vertex".into()));
    }
    if !is_closed(&ring) {
        if let Some(first) = ring.first().copied() {
            ring.push(first);
        }
    }
    let mut distinct = ring[..ring.len().saturating_sub(1)].to_vec();
    distinct.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(GeometryError::DegenerateRing(format!(
            "{} distinct vertices",
            distinct.len()
        )));
    }
    let area = ring_signed_area(&ring);
    let scale = BBox::of_points(&ring).diagonal();
    if area.abs() <= 1e-12 * scale * scale {
        return Err(GeometryError::DegenerateRing("collinear vertices".into()));
    }
    if (area > 0.0) != ccw {
        ring.reverse();
    }
    Ok(ring)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawPolygon {
    outer: Vec<Point2D>,
    #[serde(default)]
    holes: Vec<Vec<Point2D>>,
}

/// Polygon with a counter-clockwise outer ring and clockwise holes. Rings
/// are stored closed (first vertex repeated last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolygon", into = "RawPolygon")]
pub struct PolygonGeometry {
    outer: Vec<Point2D>,
    holes: Vec<Vec<Point2D>>,
    bbox: BBox,
}

impl TryFrom<RawPolygon> for PolygonGeometry {
    type Error = GeometryError;

    fn try_from(raw: RawPolygon) -> Result<Self, Self::Error> {
        PolygonGeometry::new(raw.outer, raw.holes)
    }
}

impl From<PolygonGeometry> for RawPolygon {
    fn from(p: PolygonGeometry) -> Self {
        RawPolygon {
            outer: p.outer,
            holes: p.holes,
        }
    }
}

impl PolygonGeometry {
    /// Build a polygon, closing rings and fixing their orientation.
    pub fn new(outer: Vec<Point2D>, holes: Vec<Vec<Point2D>>) -> Result<Self, GeometryError> {
        let outer = normalize_ring(outer, true)?;
        let holes = holes
            .into_iter()
            .map(|h| normalize_ring(h, false))
            .collect::<Result<Vec<_>, _>>()?;
        let bbox = BBox::of_points(&outer);
        Ok(Self { outer, holes, bbox })
    }

    pub fn from_bbox(b: BBox) -> Result<Self, GeometryError> {
        Self::new(
            vec![
                Point2D::new(b.min_x, b.min_y),
                Point2D::new(b.max_x, b.min_y),
                Point2D::new(b.max_x, b.max_y),
                Point2D::new(b.min_x, b.max_y),
            ],
            Vec::new(),
        )
    }

    pub fn outer(&self) -> &[Point2D] {
        &self.outer
    }

    pub fn holes(&self) -> &[Vec<Point2D>] {
        &self.holes
    }

    pub fn rings(&self) -> impl Iterator<Item = &[Point2D]> {
        std::iter::once(self.outer.as_slice()).chain(self.holes.iter().map(Vec::as_slice))
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn area(&self) -> f64 {
        ring_signed_area(&self.outer) + self.holes.iter().map(|h| ring_signed_area(h)).sum::<f64>()
    }

    /// A point strictly inside the polygon, found on a horizontal scanline.
    pub fn interior_point(&self) -> Point2D {
        let b = self.bbox;
        for frac in [0.5, 0.381_966, 0.618_034, 0.25, 0.75, 0.125, 0.875] {
            let y = b.min_y + b.height() * frac;
            let mut xs: Vec<f64> = Vec::new();
            for ring in self.rings() {
                for w in ring.windows(2) {
                    let (a, c) = (w[0], w[1]);
                    if (a.y > y) != (c.y > y) {
                        xs.push(a.x + (y - a.y) * (c.x - a.x) / (c.y - a.y));
                    }
                }
            }
            xs.sort_by(f64::total_cmp);
            let mut best: Option<(f64, f64)> = None;
            for pair in xs.chunks_exact(2) {
                let width = pair[1] - pair[0];
                if best.is_none_or(|(w, _)| width > w) {
                    best = Some((width, (pair[0] + pair[1]) / 2.0));
                }
            }
            if let Some((w, x)) = best {
                if w > 0.0 {
                    return Point2D::new(x, y);
                }
            }
        }
        // only reachable for slivers; fall back to the first vertex
        self.outer[0]
    }
}

/// Collection of polygons; membership in any constituent counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MultiPolygonGeometry {
    pub polygons: Vec<PolygonGeometry>,
}

impl MultiPolygonGeometry {
    pub fn new(polygons: Vec<PolygonGeometry>) -> Self {
        Self { polygons }
    }

    pub fn is_empty(&self) -> bool {
        self.polygons.is_empty()
    }

    pub fn bbox(&self) -> BBox {
        self.polygons
            .iter()
            .fold(BBox::EMPTY, |b, p| b.union(p.bbox()))
    }

    pub fn area(&self) -> f64 {
        self.polygons.iter().map(PolygonGeometry::area).sum()
    }
}

pub fn distance_point_to_segment(p: Point2D, a: Point2D, b: Point2D) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(&a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(&Point2D::new(a.x + t * dx, a.y + t * dy))
}

/// Parameter in `[0, 1]` of the point on segment `a`-`b` closest to `p`.
pub fn project_onto_segment(p: Point2D, a: Point2D, b: Point2D) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return 0.0;
    }
    (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
}

/// Minimum distance from `p` to any segment of `chain`.
pub fn distance_point_to_chain(p: Point2D, chain: &[Point2D]) -> Result<f64, GeometryError> {
    if chain.len() < 2 {
        return Err(GeometryError::ShortChain(chain.len()));
    }
    Ok(chain_distance(p, chain))
}

pub(crate) fn chain_distance(p: Point2D, chain: &[Point2D]) -> f64 {
    match chain {
        [] => f64::INFINITY,
        [only] => p.distance(only),
        _ => chain
            .windows(2)
            .map(|w| distance_point_to_segment(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

pub fn chain_length(chain: &[Point2D]) -> f64 {
    chain.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point2D {
        Point2D::new(x, y)
    }

    #[test]
    fn chain_distance_examples() {
        let chain = [p(0.0, 0.0), p(10.0, 0.0)];
        assert_eq!(distance_point_to_chain(p(5.0, 3.0), &chain).unwrap(), 3.0);
        assert_eq!(distance_point_to_chain(p(4.0, 0.0), &chain).unwrap(), 0.0);
        assert!(matches!(
            distance_point_to_chain(p(0.0, 0.0), &chain[..1]),
            Err(GeometryError::ShortChain(1))
        ));
    }

    #[test]
    fn chain_distance_beyond_end_matches_dense_sampling() {
        let chain = [p(0.0, 0.0), p(10.0, 0.0), p(10.0, 10.0)];
        for q in [p(13.0, 14.0), p(-3.0, -4.0), p(12.0, 5.0)] {
            // sample the chain densely and take the minimum distance
            let mut best = f64::INFINITY;
            for w in chain.windows(2) {
                for k in 0..=10_000 {
                    let s = w[0].lerp(&w[1], k as f64 / 10_000.0);
                    best = best.min(q.distance(&s));
                }
            }
            let got = distance_point_to_chain(q, &chain).unwrap();
            assert!((got - best).abs() < 1e-3, "{q}: {got} vs {best}");
        }
        assert_eq!(distance_point_to_chain(p(13.0, 14.0), &chain).unwrap(), 5.0);
    }

    #[test]
    fn polygon_normalizes_orientation_and_closure() {
        let cw = vec![p(0.0, 0.0), p(0.0, 1.0), p(1.0, 1.0), p(1.0, 0.0)];
        let poly = PolygonGeometry::new(cw, vec![]).unwrap();
        assert!(ring_signed_area(poly.outer()) > 0.0);
        assert_eq!(poly.outer().first(), poly.outer().last());
        assert!((poly.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_ring_is_degenerate() {
        let ring = vec![p(0.0, 0.0), p(1.0, 0.0), p(2.0, 0.0), p(0.0, 0.0)];
        assert!(matches!(
            PolygonGeometry::new(ring, vec![]),
            Err(GeometryError::DegenerateRing(_))
        ));
    }

    #[test]
    fn interior_point_of_u_shape() {
        let u = PolygonGeometry::new(
            vec![
                p(0.0, 0.0),
                p(3.0, 0.0),
                p(3.0, 3.0),
                p(2.0, 3.0),
                p(2.0, 1.0),
                p(1.0, 1.0),
                p(1.0, 3.0),
                p(0.0, 3.0),
            ],
            vec![],
        )
        .unwrap();
        let q = u.interior_point();
        assert_eq!(point_in_polygon(q, &u, 1e-9), Location::Inside);
    }
}
