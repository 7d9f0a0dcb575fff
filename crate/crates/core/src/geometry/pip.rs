use serde::{Deserialize, Serialize};

use super::{chain_distance, MultiPolygonGeometry, PolygonGeometry};
use crate::model::Point2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Inside,
    OnBoundary,
    Outside,
}

impl Location {
    /// Inside or on the boundary.
    pub fn is_covered(self) -> bool {
        !matches!(self, Location::Outside)
    }
}

// Deterministic vertical offsets (in units of the boundary tolerance) for
// re-casting a ray that passes exactly through a vertex.
const RETRY_OFFSETS: [f64; 6] = [0.125, -0.218, 0.331, -0.447, 0.573, -0.691];

fn crossing_parity(p: Point2D, ray_y: f64, ring: &[Point2D]) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (a.y > ray_y) != (b.y > ray_y) {
            let x = a.x + (ray_y - a.y) * (b.x - a.x) / (b.y - a.y);
            if x > p.x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Even-odd membership via a horizontal ray towards +x. When the ray hits a
/// vertex exactly it is re-cast at a slightly shifted height; callers only
/// rely on this for points farther than `nudge` from the ring.
fn ray_inside(p: Point2D, ring: &[Point2D], nudge: f64) -> bool {
    let mut ray_y = p.y;
    for offset in RETRY_OFFSETS {
        if !ring.iter().any(|v| v.y == ray_y) {
            break;
        }
        ray_y = p.y + offset * nudge;
    }
    crossing_parity(p, ray_y, ring)
}

fn nudge_for(poly: &PolygonGeometry, eps: f64) -> f64 {
    if eps > 0.0 {
        eps
    } else {
        poly.bbox().diagonal() * 1e-12
    }
}

/// Classify `p` against `poly`. Points within `eps` of any ring segment are
/// reported as on the boundary.
pub fn point_in_polygon(p: Point2D, poly: &PolygonGeometry, eps: f64) -> Location {
    if poly.bbox().expanded(eps).contains_point(p) {
        if poly.rings().any(|ring| chain_distance(p, ring) <= eps) {
            return Location::OnBoundary;
        }
    } else {
        return Location::Outside;
    }
    let nudge = nudge_for(poly, eps);
    if !ray_inside(p, poly.outer(), nudge) {
        return Location::Outside;
    }
    if poly.holes().iter().any(|h| ray_inside(p, h, nudge)) {
        return Location::Outside;
    }
    Location::Inside
}

/// Classification against the union of constituent polygons: inside any
/// wins, then on the boundary of any.
pub fn locate_in_multipolygon(p: Point2D, mp: &MultiPolygonGeometry, eps: f64) -> Location {
    locate_in_polygons(p, &mp.polygons, eps)
}

pub(crate) fn locate_in_polygons(p: Point2D, polys: &[PolygonGeometry], eps: f64) -> Location {
    let mut result = Location::Outside;
    for poly in polys {
        match point_in_polygon(p, poly, eps) {
            Location::Inside => return Location::Inside,
            Location::OnBoundary => result = Location::OnBoundary,
            Location::Outside => {}
        }
    }
    result
}

/// True when `p` is inside or on the boundary of any constituent polygon.
pub fn multipolygon_contains(p: Point2D, mp: &MultiPolygonGeometry, eps: f64) -> bool {
    mp.polygons
        .iter()
        .any(|poly| point_in_polygon(p, poly, eps).is_covered())
}

/// Single pass over the points, each tested against the whole multipolygon.
pub fn multipolygon_contains_all(
    points: &[Point2D],
    mp: &MultiPolygonGeometry,
    eps: f64,
) -> Vec<bool> {
    points
        .iter()
        .map(|p| multipolygon_contains(*p, mp, eps))
        .collect()
}

/// Two nested loops: polygons outside, points inside, OR-ing the results.
pub fn per_polygon_contains_all(
    points: &[Point2D],
    polygons: &[PolygonGeometry],
    eps: f64,
) -> Vec<bool> {
    let mut hits = vec![false; points.len()];
    for poly in polygons {
        for (hit, p) in hits.iter_mut().zip(points) {
            if !*hit && point_in_polygon(*p, poly, eps).is_covered() {
                *hit = true;
            }
        }
    }
    hits
}
