use std::sync::Arc;

use odp_core::autodiff::Mat;
use odp_core::neighborhoods::{geo_view, NeighborView};
use odp_core::preprocess::{haversine_km, GeoAdjacency, OdGraph};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const GEO_THRESHOLD_KM: f64 = 3.0;

pub fn matrix(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_shape_simple_fn((rows, cols), || rng.random_range(lo..hi))
}

/// Dense counts with roughly `density` of the pairs nonzero.
pub fn counts(n: usize, density: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<u32>> {
    (0..n)
        .map(|_| {
            (0..n)
                .map(|_| if rng.random::<f64>() < density { rng.random_range(1..12) } else { 0 })
                .collect()
        })
        .collect()
}

pub fn graph(slot: usize, c: &[Vec<u32>]) -> OdGraph {
    let n = c.len();
    OdGraph::from_triplets(
        slot,
        n,
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (i, j, c[i][j])),
    )
}

/// Random grid centers within a few kilometers; returns the distance
/// matrix and the geographical view at [`GEO_THRESHOLD_KM`].
pub fn geography(n: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Arc<NeighborView>) {
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|_| (40.7 + rng.random_range(-0.04..0.04), -73.95 + rng.random_range(-0.05..0.05)))
        .collect();
    let dist: Vec<Vec<f64>> = pts
        .iter()
        .map(|a| pts.iter().map(|b| haversine_km(a.0, a.1, b.0, b.1)).collect())
        .collect();
    let adj = GeoAdjacency::from_distances(n, dist.concat()).expect("square distances");
    (dist, Arc::new(geo_view(&adj, GEO_THRESHOLD_KM)))
}
