#![allow(dead_code)]

use guides_core::geometry::PolygonGeometry;
use guides_core::model::Point2D;

pub mod access;
pub mod membership;
pub mod pipeline;
pub mod query;
pub mod repair;

pub type Pt = Point2D;
use rand::Rng;

pub fn p(x: f64, y: f64) -> Point2D {
    Point2D::new(x, y)
}

/// Star-shaped (hence simple) polygon: sorted random angles around a
/// center, random radii.
pub fn random_star<R: Rng>(rng: &mut R, center: Point2D, r_min: f64, r_max: f64) -> Vec<Point2D> {
    let n = rng.gen_range(3..16);
    let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    if angles.len() < 3 {
        angles = vec![0.0, 2.1, 4.2];
    }
    angles
        .iter()
        .map(|a| {
            let r = rng.gen_range(r_min..r_max);
            p(center.x + r * a.cos(), center.y + r * a.sin())
        })
        .collect()
}

pub fn seg_dist(q: Point2D, a: Point2D, b: Point2D) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((q.x - a.x) * dx + (q.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    };
    ((a.x + t * dx - q.x).powi(2) + (a.y + t * dy - q.y).powi(2)).sqrt()
}

/// Distance from `q` to an open ring (vertices listed once).
pub fn ring_dist(q: Point2D, ring: &[Point2D]) -> f64 {
    (0..ring.len())
        .map(|i| seg_dist(q, ring[i], ring[(i + 1) % ring.len()]))
        .fold(f64::INFINITY, f64::min)
}

/// Winding number of an open ring around `q`.
pub fn winding(q: Point2D, ring: &[Point2D]) -> i32 {
    let mut w = 0;
    for i in 0..ring.len() {
        let (a, b) = (ring[i], ring[(i + 1) % ring.len()]);
        let side = (b.x - a.x) * (q.y - a.y) - (q.x - a.x) * (b.y - a.y);
        if a.y <= q.y {
            if b.y > q.y && side > 0.0 {
                w += 1;
            }
        } else if b.y <= q.y && side < 0.0 {
            w -= 1;
        }
    }
    w
}

pub fn oracle_inside(q: Point2D, ring: &[Point2D]) -> bool {
    winding(q, ring) != 0
}

pub fn polygon(ring: &[Point2D]) -> PolygonGeometry {
    PolygonGeometry::new(ring.to_vec(), Vec::new()).expect("valid ring")
}
