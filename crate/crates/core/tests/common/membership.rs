use guides_core::geometry::{
    multipolygon_contains_all, per_polygon_contains_all, point_in_polygon, Location, MultiPolygonGeometry,
    PolygonGeometry,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{oracle_inside, p, polygon, random_star, ring_dist};

pub const EPS: f64 = 1e-9;

/// 50 random simple polygons × 1000 points against the winding oracle,
/// skipping points on a boundary.
pub fn random_polygons_agree_with_winding_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut compared = 0;
    for _ in 0..50 {
        let ring = random_star(&mut rng, p(0.0, 0.0), 5.0, 50.0);
        let poly = polygon(&ring);
        for _ in 0..1000 {
            let q = p(rng.gen_range(-60.0..60.0), rng.gen_range(-60.0..60.0));
            if ring_dist(q, &ring) <= 1e-6 {
                continue;
            }
            let got = point_in_polygon(q, &poly, EPS);
            assert_ne!(got, Location::OnBoundary);
            assert_eq!(got == Location::Inside, oracle_inside(q, &ring), "point {q:?} ring {ring:?}");
            compared += 1;
        }
    }
    assert!(compared > 49_000);
}

/// 50 polygons, 1000 points: one multipolygon pass equals the per-polygon loop.
pub fn single_pass_equals_per_polygon_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let polys: Vec<PolygonGeometry> = (0..50)
        .map(|_| {
            let c = p(rng.gen_range(0.0..1000.0), rng.gen_range(0.0..1000.0));
            polygon(&random_star(&mut rng, c, 5.0, 60.0))
        })
        .collect();
    let points: Vec<_> = (0..1000)
        .map(|_| p(rng.gen_range(-50.0..1050.0), rng.gen_range(-50.0..1050.0)))
        .collect();
    let mp = MultiPolygonGeometry::new(polys.clone());
    let single = multipolygon_contains_all(&points, &mp, EPS);
    let looped = per_polygon_contains_all(&points, &polys, EPS);
    assert_eq!(single, looped);
    assert!(single.iter().any(|h| *h) && single.iter().any(|h| !*h));
}
