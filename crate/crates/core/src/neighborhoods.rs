//! Forward, backward and geographical neighbor sets with their pre-weights.
//!
//! Forward neighbors of `i` receive at least one request from `i` in the
//! slot; backward neighbors send at least one request to `i`. Self-loops
//! count, since nothing in the definition excludes `j = i`. Geographical
//! neighbors lie within a haversine threshold and never include `i` itself.
//!
//! Pre-weights normalize neighbor strength: request share (with a small
//! epsilon) for the OD views, inverse-distance share for the geographical
//! view. They are defined only on neighbor pairs.

use std::io::Write;
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use crate::error::{OdpError, Result};
use crate::preprocess::{GeoAdjacency, OdGraph};

pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const DEFAULT_GEO_THRESHOLD_KM: f64 = 3.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NeighborKind {
    Forward,
    Backward,
    Geographical,
}

impl NeighborKind {
    pub const ALL: [NeighborKind; 3] = [
        NeighborKind::Forward,
        NeighborKind::Backward,
        NeighborKind::Geographical,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NeighborKind::Forward => "forward",
            NeighborKind::Backward => "backward",
            NeighborKind::Geographical => "geo",
        }
    }
}

/// Neighbor lists and pre-weights for every grid, stored as CSR.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborView {
    pub kind: NeighborKind,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
}

impl NeighborView {
    /// Build from per-grid neighbor lists and matching weights.
    pub fn from_lists(kind: NeighborKind, sets: &[Vec<usize>], weights: &[Vec<f64>]) -> Self {
        assert_eq!(sets.len(), weights.len());
        let mut offsets = Vec::with_capacity(sets.len() + 1);
        offsets.push(0);
        let mut targets = Vec::new();
        let mut flat = Vec::new();
        for (s, w) in sets.iter().zip(weights) {
            assert_eq!(s.len(), w.len(), "one weight per neighbor");
            targets.extend_from_slice(s);
            flat.extend_from_slice(w);
            offsets.push(targets.len());
        }
        NeighborView {
            kind,
            offsets,
            targets,
            weights: flat,
        }
    }

    /// Number of grids.
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn edge_range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn target(&self, edge: usize) -> usize {
        self.targets[edge]
    }

    pub fn weight(&self, edge: usize) -> f64 {
        self.weights[edge]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.targets[self.edge_range(i)]
    }

    pub fn pre_weights(&self, i: usize) -> &[f64] {
        &self.weights[self.edge_range(i)]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.edge_range(i).len()
    }

    /// `(i, j, weight)` for every neighbor pair.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.len()).flat_map(move |i| {
            self.edge_range(i)
                .map(move |e| (i, self.targets[e], self.weights[e]))
        })
    }

    /// Debug dump, one "i j weight" line per pair.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| OdpError::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for (i, j, a) in self.triplets() {
            writeln!(w, "{i} {j} {a}").map_err(|e| OdpError::io(path, e))?;
        }
        w.flush().map_err(|e| OdpError::io(path, e))
    }
}

/// Ψ: `j` such that `g[i][j] > 0`.
pub fn forward_neighbors(g: &OdGraph) -> Vec<Vec<usize>> {
    let mut sets = vec![Vec::new(); g.n()];
    for (i, j, _) in g.iter() {
        sets[i].push(j);
    }
    sets
}

/// Φ: `j` such that `g[j][i] > 0`.
pub fn backward_neighbors(g: &OdGraph) -> Vec<Vec<usize>> {
    let mut sets = vec![Vec::new(); g.n()];
    for (i, j, _) in g.iter() {
        sets[j].push(i);
    }
    for s in &mut sets {
        s.sort_unstable();
    }
    sets
}

/// Θ: `j ≠ i` with `r[i][j] ≤ threshold_km`.
pub fn geo_neighbors(r: &GeoAdjacency, threshold_km: f64) -> Vec<Vec<usize>> {
    (0..r.n())
        .map(|i| {
            r.row(i)
                .iter()
                .enumerate()
                .filter(|&(j, &d)| j != i && d <= threshold_km)
                .map(|(j, _)| j)
                .collect()
        })
        .collect()
}

/// Count-share pre-weights `(c_ij + ε) / Σ_k (c_ik + ε)` over each set.
pub fn count_pre_weights(
    sets: &[Vec<usize>],
    count: impl Fn(usize, usize) -> f64,
    epsilon: f64,
) -> Vec<Vec<f64>> {
    sets.iter()
        .enumerate()
        .map(|(i, set)| {
            let raw: Vec<f64> = set.iter().map(|&j| count(i, j) + epsilon).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / total).collect()
        })
        .collect()
}

/// Inverse-distance pre-weights `(1/r_ij) / Σ_k (1/r_ik)`.
pub fn geo_pre_weights(sets: &[Vec<usize>], r: &GeoAdjacency) -> Vec<Vec<f64>> {
    sets.iter()
        .enumerate()
        .map(|(i, set)| {
            let inv: Vec<f64> = set.iter().map(|&j| 1.0 / r.get(i, j)).collect();
            let total: f64 = inv.iter().sum();
            inv.into_iter().map(|v| v / total).collect()
        })
        .collect()
}

pub fn forward_view(g: &OdGraph, epsilon: f64) -> NeighborView {
    let sets = forward_neighbors(g);
    let w = count_pre_weights(&sets, |i, j| g.get(i, j) as f64, epsilon);
    NeighborView::from_lists(NeighborKind::Forward, &sets, &w)
}

pub fn backward_view(g: &OdGraph, epsilon: f64) -> NeighborView {
    let sets = backward_neighbors(g);
    let w = count_pre_weights(&sets, |i, j| g.get(j, i) as f64, epsilon);
    NeighborView::from_lists(NeighborKind::Backward, &sets, &w)
}

pub fn geo_view(r: &GeoAdjacency, threshold_km: f64) -> NeighborView {
    let sets = geo_neighbors(r, threshold_km);
    let w = geo_pre_weights(&sets, r);
    NeighborView::from_lists(NeighborKind::Geographical, &sets, &w)
}

/// The three views for one slot. The geographical view is shared by all slots.
#[derive(Debug, Clone)]
pub struct SlotNeighborhoods {
    pub forward: Arc<NeighborView>,
    pub backward: Arc<NeighborView>,
    pub geo: Arc<NeighborView>,
}

impl SlotNeighborhoods {
    pub fn build(g: &OdGraph, geo: &Arc<NeighborView>, epsilon: f64) -> Self {
        SlotNeighborhoods {
            forward: Arc::new(forward_view(g, epsilon)),
            backward: Arc::new(backward_view(g, epsilon)),
            geo: Arc::clone(geo),
        }
    }

    pub fn get(&self, kind: NeighborKind) -> &Arc<NeighborView> {
        match kind {
            NeighborKind::Forward => &self.forward,
            NeighborKind::Backward => &self.backward,
            NeighborKind::Geographical => &self.geo,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{Bounds, GridSpec};
    use proptest::prelude::*;

    fn nyc() -> GridSpec {
        GridSpec::build(
            Bounds {
                lat_min: 40.50,
                lat_max: 40.925469,
                lng_min: -74.25,
                lng_max: -73.68198,
            },
            19,
            19,
            1,
        )
        .unwrap()
    }

    #[test]
    fn empty_graph_has_no_neighbors() {
        let g = OdGraph::empty(1, 5);
        assert!(forward_neighbors(&g).iter().all(Vec::is_empty));
        assert!(backward_neighbors(&g).iter().all(Vec::is_empty));
    }

    #[test]
    fn single_edge() {
        let g = OdGraph::from_triplets(1, 4, [(1, 2, 5)]);
        let fwd = forward_neighbors(&g);
        let bwd = backward_neighbors(&g);
        assert_eq!(fwd[1], vec![2]);
        assert_eq!(bwd[2], vec![1]);
        assert_eq!(fwd.iter().map(Vec::len).sum::<usize>(), 1);
        let view = forward_view(&g, DEFAULT_EPSILON);
        assert_eq!(view.pre_weights(1), &[1.0]);
    }

    #[test]
    fn self_loops_are_neighbors() {
        let g = OdGraph::from_triplets(1, 3, [(1, 1, 2)]);
        assert_eq!(forward_neighbors(&g)[1], vec![1]);
        assert_eq!(backward_neighbors(&g)[1], vec![1]);
    }

    #[test]
    fn count_share_weights() {
        let g = OdGraph::from_triplets(1, 3, [(0, 1, 26), (0, 2, 105)]);
        let v = forward_view(&g, 1e-8);
        let w = v.pre_weights(0);
        let total = 131.0 + 2e-8;
        assert!((w[0] - (26.0 + 1e-8) / total).abs() < 1e-15);
        assert!((w[0] - 0.19847).abs() < 1e-5);
        assert!((w[1] - 0.80153).abs() < 1e-5);
    }

    #[test]
    fn inverse_distance_weights() {
        #[rustfmt::skip]
        let r = GeoAdjacency::from_distances(3, vec![
            0.0, 1.0, 2.0,
            1.0, 0.0, 5.0,
            2.0, 5.0, 0.0,
        ]).unwrap();
        let v = geo_view(&r, 3.0);
        assert_eq!(v.neighbors(0), &[1, 2]);
        let w = v.pre_weights(0);
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(v.neighbors(1), &[0]);
        assert_eq!(v.pre_weights(1), &[1.0]);
    }

    #[test]
    fn tiny_threshold_gives_no_geo_neighbors() {
        let r = GeoAdjacency::build(&nyc());
        assert!(geo_neighbors(&r, 0.5).iter().all(Vec::is_empty));
    }

    #[test]
    fn default_threshold_gives_eight_ring() {
        let spec = nyc();
        let r = GeoAdjacency::build(&spec);
        let sets = geo_neighbors(&r, DEFAULT_GEO_THRESHOLD_KM);
        for row in 1..18 {
            for col in 1..18 {
                let i = row * 19 + col;
                // brute-force scan of R for the expected ring
                let mut expected: Vec<usize> = (0..spec.n())
                    .filter(|&j| j != i && r.get(i, j) <= 3.6)
                    .collect();
                expected.sort_unstable();
                assert_eq!(sets[i], expected);
                let ring: Vec<usize> = [
                    i - 20, i - 19, i - 18, i - 1, i + 1, i + 18, i + 19, i + 20,
                ]
                .to_vec();
                assert_eq!(sets[i], ring, "grid {i}");
            }
        }
        for (i, s) in sets.iter().enumerate() {
            assert!(!s.contains(&i));
            for &j in s {
                assert!(sets[j].contains(&i));
            }
        }
    }

    fn arb_graph() -> impl Strategy<Value = OdGraph> {
        (1usize..=10).prop_flat_map(|n| {
            prop::collection::vec((0..n, 0..n, 1u32..50), 0..40)
                .prop_map(move |edges| OdGraph::from_triplets(1, n, edges))
        })
    }

    proptest! {
        #[test]
        fn views_match_double_loop_oracle(g in arb_graph()) {
            let n = g.n();
            let dense = g.to_dense();
            let fwd = forward_view(&g, DEFAULT_EPSILON);
            let bwd = backward_view(&g, DEFAULT_EPSILON);
            for i in 0..n {
                let f_set: Vec<usize> = (0..n).filter(|&j| dense[[i, j]] > 0.0).collect();
                let b_set: Vec<usize> = (0..n).filter(|&j| dense[[j, i]] > 0.0).collect();
                prop_assert_eq!(fwd.neighbors(i), f_set.as_slice());
                prop_assert_eq!(bwd.neighbors(i), b_set.as_slice());
                let f_tot: f64 = f_set.iter().map(|&j| dense[[i, j]] + DEFAULT_EPSILON).sum();
                for (k, &j) in f_set.iter().enumerate() {
                    prop_assert_eq!(fwd.pre_weights(i)[k], (dense[[i, j]] + DEFAULT_EPSILON) / f_tot);
                }
                let b_tot: f64 = b_set.iter().map(|&j| dense[[j, i]] + DEFAULT_EPSILON).sum();
                for (k, &j) in b_set.iter().enumerate() {
                    prop_assert_eq!(bwd.pre_weights(i)[k], (dense[[j, i]] + DEFAULT_EPSILON) / b_tot);
                }
            }
        }

        #[test]
        fn backward_is_forward_of_transpose(g in arb_graph()) {
            prop_assert_eq!(backward_neighbors(&g), forward_neighbors(&g.transposed()));
        }

        #[test]
        fn weights_positive_and_normalized(g in arb_graph(), factor in 1u32..20) {
            let fwd = forward_view(&g, DEFAULT_EPSILON);
            let scaled = OdGraph::from_triplets(1, g.n(), g.iter().map(|(i, j, c)| (i, j, c * factor)));
            let fwd2 = forward_view(&scaled, DEFAULT_EPSILON);
            for i in 0..g.n() {
                let w = fwd.pre_weights(i);
                if !w.is_empty() {
                    prop_assert!(w.iter().all(|&x| x > 0.0));
                    prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                }
                for (a, b) in w.iter().zip(fwd2.pre_weights(i)) {
                    prop_assert!((a - b).abs() < 1e-5);
                }
            }
        }

        #[test]
        fn geo_weights_normalized(rows in 1usize..6, cols in 1usize..6, l in 0.5f64..20.0) {
            let spec = GridSpec::build(nyc().bounds(), rows, cols, 1).unwrap();
            let r = GeoAdjacency::build(&spec);
            let v = geo_view(&r, l);
            for i in 0..v.len() {
                prop_assert!(!v.neighbors(i).contains(&i));
                let w = v.pre_weights(i);
                if !w.is_empty() {
                    prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                }
            }
        }
    }
}
