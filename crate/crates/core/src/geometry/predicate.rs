use serde::{Deserialize, Serialize};

use super::pip::locate_in_polygons;
use super::{chain_length, BBox, GeometryError, Location, MultiPolygonGeometry, PolygonGeometry};
use crate::model::Point2D;

/// Geometry operand of a spatial predicate.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Point(Point2D),
    LineString(Vec<Point2D>),
    Polygon(PolygonGeometry),
    MultiPolygon(MultiPolygonGeometry),
}

impl Geometry {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Geometry::Point(_) => "point",
            Geometry::LineString(_) => "linestring",
            Geometry::Polygon(_) => "polygon",
            Geometry::MultiPolygon(_) => "multipolygon",
        }
    }

    pub fn bbox(&self) -> BBox {
        match self {
            Geometry::Point(p) => BBox::of_point(*p),
            Geometry::LineString(c) => BBox::of_points(c),
            Geometry::Polygon(p) => p.bbox(),
            Geometry::MultiPolygon(mp) => mp.bbox(),
        }
    }

    fn areal(&self) -> Option<&[PolygonGeometry]> {
        match self {
            Geometry::Polygon(p) => Some(std::slice::from_ref(p)),
            Geometry::MultiPolygon(mp) => Some(&mp.polygons),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialOp {
    Within,
    Contains,
    Crosses,
    Intersects,
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    location: Location,
    length: f64,
}

fn cross(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ax * by - ay * bx
}

/// Parameters along `a`-`b` where it meets segment `c`-`d`.
fn push_intersections(a: Point2D, b: Point2D, c: Point2D, d: Point2D, out: &mut Vec<f64>) {
    let (rx, ry) = (b.x - a.x, b.y - a.y);
    let (sx, sy) = (d.x - c.x, d.y - c.y);
    let (qx, qy) = (c.x - a.x, c.y - a.y);
    let denom = cross(rx, ry, sx, sy);
    let scale = rx.hypot(ry) * sx.hypot(sy);
    if scale == 0.0 {
        return;
    }
    if denom.abs() > 1e-12 * scale {
        let t = cross(qx, qy, sx, sy) / denom;
        let u = cross(qx, qy, rx, ry) / denom;
        let slack = 1e-12;
        if (-slack..=1.0 + slack).contains(&t) && (-slack..=1.0 + slack).contains(&u) {
            out.push(t.clamp(0.0, 1.0));
        }
    } else if cross(qx, qy, rx, ry).abs() <= 1e-12 * rx.hypot(ry) * qx.hypot(qy).max(1.0) {
        // collinear overlap: split at the other segment's endpoints
        let len2 = rx * rx + ry * ry;
        for p in [c, d] {
            let t = ((p.x - a.x) * rx + (p.y - a.y) * ry) / len2;
            if (0.0..=1.0).contains(&t) {
                out.push(t);
            }
        }
    }
}

/// Split a chain at every boundary crossing and classify each piece (and
/// each split point, as a zero-length piece).
fn chain_pieces(chain: &[Point2D], polys: &[PolygonGeometry], eps: f64) -> Vec<Piece> {
    let mut pieces = Vec::new();
    if chain.len() == 1 || chain_length(chain) == 0.0 {
        if let Some(p) = chain.first() {
            pieces.push(Piece {
                location: locate_in_polygons(*p, polys, eps),
                length: 0.0,
            });
        }
        return pieces;
    }
    for w in chain.windows(2) {
        let (a, b) = (w[0], w[1]);
        let seg_len = a.distance(&b);
        if seg_len == 0.0 {
            continue;
        }
        let seg_box = BBox::of_points(&[a, b]).expanded(eps);
        let mut ts = vec![0.0, 1.0];
        for poly in polys.iter().filter(|p| p.bbox().intersects(&seg_box)) {
            for ring in poly.rings() {
                for r in ring.windows(2) {
                    push_intersections(a, b, r[0], r[1], &mut ts);
                }
            }
        }
        ts.sort_by(f64::total_cmp);
        ts.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
        for t in &ts {
            pieces.push(Piece {
                location: locate_in_polygons(a.lerp(&b, *t), polys, eps),
                length: 0.0,
            });
        }
        for pair in ts.windows(2) {
            let mid = a.lerp(&b, (pair[0] + pair[1]) / 2.0);
            pieces.push(Piece {
                location: locate_in_polygons(mid, polys, eps),
                length: seg_len * (pair[1] - pair[0]),
            });
        }
    }
    pieces
}

/// Fraction of the chain's length lying inside or on the boundary of the
/// polygons. A degenerate chain counts as 0 or 1.
pub fn chain_fraction_inside(chain: &[Point2D], polys: &[PolygonGeometry], eps: f64) -> f64 {
    let pieces = chain_pieces(chain, polys, eps);
    let total: f64 = pieces.iter().map(|p| p.length).sum();
    if total == 0.0 {
        return if pieces.iter().any(|p| p.location.is_covered()) {
            1.0
        } else {
            0.0
        };
    }
    pieces
        .iter()
        .filter(|p| p.location.is_covered())
        .map(|p| p.length)
        .sum::<f64>()
        / total
}

fn line_within(chain: &[Point2D], polys: &[PolygonGeometry], eps: f64) -> bool {
    let pieces = chain_pieces(chain, polys, eps);
    let none_outside = pieces.iter().all(|p| p.location != Location::Outside);
    let degenerate = pieces.iter().all(|p| p.length == 0.0);
    let interior_hit = pieces
        .iter()
        .any(|p| p.location == Location::Inside && (p.length > 0.0 || degenerate));
    none_outside && interior_hit
}

fn line_crosses(chain: &[Point2D], polys: &[PolygonGeometry], eps: f64) -> bool {
    let pieces = chain_pieces(chain, polys, eps);
    let inside = pieces
        .iter()
        .any(|p| p.length > 0.0 && p.location == Location::Inside);
    let outside = pieces
        .iter()
        .any(|p| p.length > 0.0 && p.location == Location::Outside);
    inside && outside
}

fn line_intersects(chain: &[Point2D], polys: &[PolygonGeometry], eps: f64) -> bool {
    chain_pieces(chain, polys, eps)
        .iter()
        .any(|p| p.location.is_covered())
}

fn ring_never(ring: &[Point2D], polys: &[PolygonGeometry], eps: f64, bad: Location) -> bool {
    chain_pieces(ring, polys, eps)
        .iter()
        .all(|p| p.location != bad)
}

fn areal_within(a: &[PolygonGeometry], b: &[PolygonGeometry], eps: f64) -> bool {
    !a.is_empty()
        && a.iter().all(|pa| {
            let outer_ok = ring_never(pa.outer(), b, eps, Location::Outside);
            let holes_ok = b
                .iter()
                .flat_map(|pb| pb.holes())
                .all(|h| ring_never(h, std::slice::from_ref(pa), eps, Location::Inside));
            let probe = pa.interior_point();
            outer_ok && holes_ok && locate_in_polygons(probe, b, eps).is_covered()
        })
}

fn areal_intersects(a: &[PolygonGeometry], b: &[PolygonGeometry], eps: f64) -> bool {
    let touches = |x: &[PolygonGeometry], y: &[PolygonGeometry]| {
        x.iter().any(|px| {
            px.rings()
                .any(|ring| chain_pieces(ring, y, eps).iter().any(|p| p.location.is_covered()))
        })
    };
    touches(a, b) || touches(b, a)
}

fn unsupported(a: &Geometry, b: &Geometry) -> GeometryError {
    GeometryError::UnsupportedPair(format!("{}/{}", a.kind_name(), b.kind_name()))
}

fn within(a: &Geometry, b: &Geometry, eps: f64) -> Result<bool, GeometryError> {
    match (a, b.areal()) {
        (Geometry::Point(p), Some(polys)) => Ok(locate_in_polygons(*p, polys, eps) == Location::Inside),
        (Geometry::LineString(c), Some(polys)) => Ok(line_within(c, polys, eps)),
        (_, Some(polys)) => Ok(areal_within(a.areal().unwrap_or_default(), polys, eps)),
        // an area is never within a point or a line
        (_, None) if a.areal().is_some() => Ok(false),
        _ => Err(unsupported(a, b)),
    }
}

fn intersects(a: &Geometry, b: &Geometry, eps: f64) -> Result<bool, GeometryError> {
    let (x, y) = if b.areal().is_some() { (a, b) } else { (b, a) };
    let Some(polys) = y.areal() else {
        return Err(unsupported(a, b));
    };
    Ok(match x {
        Geometry::Point(p) => locate_in_polygons(*p, polys, eps).is_covered(),
        Geometry::LineString(c) => line_intersects(c, polys, eps),
        other => areal_intersects(other.areal().unwrap_or_default(), polys, eps),
    })
}

fn crosses(a: &Geometry, b: &Geometry, eps: f64) -> Result<bool, GeometryError> {
    let (x, y) = if b.areal().is_some() { (a, b) } else { (b, a) };
    let Some(polys) = y.areal() else {
        return Err(unsupported(a, b));
    };
    Ok(match x {
        Geometry::LineString(c) => line_crosses(c, polys, eps),
        // point/area and area/area never cross
        _ => false,
    })
}

/// Simple-features style predicate. Supported pairs are those with at least
/// one polygonal operand; anything else is an unsupported-pair error.
pub fn predicate(a: &Geometry, b: &Geometry, op: SpatialOp, eps: f64) -> Result<bool, GeometryError> {
    match op {
        SpatialOp::Within => within(a, b, eps),
        SpatialOp::Contains => within(b, a, eps),
        SpatialOp::Intersects => intersects(a, b, eps),
        SpatialOp::Crosses => crosses(a, b, eps),
    }
}
