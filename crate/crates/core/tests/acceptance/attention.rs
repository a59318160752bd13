use odp_core::autodiff::Mat;
use odp_core::neighborhoods::{NeighborKind, SlotNeighborhoods};
use odp_core::params::ParamStore;
use odp_core::spatial::{attention_weights, compute_gates, embed_sequence, Aggregation, SpatialConfig, SpatialParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fixtures::{counts, geography, graph, matrix, GEO_THRESHOLD_KM};
use crate::Outcome;

const EPSILON: f64 = 1e-8;
const ROW_SUM_TOL: f64 = 1e-6;
const REFERENCE_TOL: f64 = 1e-6;

struct Instance {
    store: ParamStore,
    params: SpatialParams,
    features: Mat,
    counts: Vec<Vec<u32>>,
    dist: Vec<Vec<f64>>,
    nbh: SlotNeighborhoods,
}

fn instance(seed: u64, cfg: impl FnOnce(&mut ChaCha8Rng) -> SpatialConfig) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = cfg(&mut rng);
    let n = rng.random_range(2..=10);
    let mut store = ParamStore::new();
    let params = SpatialParams::init(cfg.clone(), &mut store, &mut rng);
    // Widen the parameter range so scores are not all near zero.
    let scale = rng.random_range(0.5..3.0);
    for id in store.ids().collect::<Vec<_>>() {
        store.get_mut(id).mapv_inplace(|v| v * scale);
    }
    let features = matrix(n, cfg.feature_dim, -2.0, 2.0, &mut rng);
    let density = rng.random_range(0.1..0.8);
    let c = counts(n, density, &mut rng);
    let (dist, geo) = geography(n, &mut rng);
    let nbh = SlotNeighborhoods::build(&graph(1, &c), &geo, EPSILON);
    Instance {
        store,
        params,
        features,
        counts: c,
        dist,
        nbh,
    }
}

fn random_config(rng: &mut ChaCha8Rng) -> SpatialConfig {
    let agg = if rng.random::<bool>() { Aggregation::Average } else { Aggregation::Concat };
    SpatialConfig::new(rng.random_range(1..=8), rng.random_range(1..=6), rng.random_range(1..=4), agg)
}

pub fn invariants() -> Outcome {
    let mut worst_sum = 0.0f64;
    let mut rows_checked = 0;
    let mut problems = Vec::new();
    for seed in 0..100u64 {
        let mut inst = instance(3000 + seed, random_config);
        let n = inst.features.nrows();
        for (v, kind) in NeighborKind::ALL.into_iter().enumerate() {
            let view = inst.nbh.get(kind).clone();
            for head in &inst.params.heads[v] {
                let w = attention_weights(&inst.store, head, &inst.features, &view);
                for i in 0..n {
                    let nbrs = view.neighbors(i);
                    let outside: f64 = (0..n).filter(|j| !nbrs.contains(j)).map(|j| w[[i, j]].abs()).sum();
                    if outside != 0.0 {
                        problems.push(format!("weight outside the view (seed {seed})"));
                    }
                    if !nbrs.is_empty() {
                        worst_sum = worst_sum.max((w.row(i).sum() - 1.0).abs());
                        rows_checked += 1;
                    }
                }
            }
            let g = compute_gates(&inst.store, &inst.params.gates[v], &inst.features, &view);
            if g.ncols() != inst.params.cfg.heads || g.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
                problems.push(format!("gate outside (0, 1) (seed {seed})"));
            }
        }
        for gate in inst.params.gates.clone() {
            inst.store.get_mut(gate.fc_w).fill(0.0);
            inst.store.get_mut(gate.fc_b).fill(0.0);
        }
        for (v, kind) in NeighborKind::ALL.into_iter().enumerate() {
            let g = compute_gates(&inst.store, &inst.params.gates[v], &inst.features, inst.nbh.get(kind));
            if g.iter().any(|&x| x != 0.5) {
                problems.push(format!("zeroed gate parameters give a gate other than 0.5 (seed {seed})"));
            }
        }
    }
    problems.dedup();
    Outcome::check(
        worst_sum <= ROW_SUM_TOL && problems.is_empty(),
        if problems.is_empty() {
            format!("{rows_checked} softmax rows, max |sum - 1| = {worst_sum:.2e} (tol {ROW_SUM_TOL:e}); gates in (0, 1); zeroed gates = 0.5")
        } else {
            problems[..problems.len().min(3)].join(", ")
        },
    )
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.01 * x
    }
}

/// `v · W` for a row vector and a `d_f × d_e` matrix.
fn project(v: &[f64], w: &Mat) -> Vec<f64> {
    (0..w.ncols()).map(|e| (0..v.len()).map(|f| v[f] * w[[f, e]]).sum()).collect()
}

/// Neighbor lists with normalized pre-weights, built straight from the
/// counts and distances.
fn reference_neighborhoods(c: &[Vec<u32>], dist: &[Vec<f64>]) -> [Vec<Vec<(usize, f64)>>; 3] {
    let n = c.len();
    let shares = |raw: Vec<(usize, f64)>| {
        let total: f64 = raw.iter().map(|x| x.1).sum();
        raw.into_iter().map(|(j, x)| (j, x / total)).collect::<Vec<_>>()
    };
    let forward = (0..n)
        .map(|i| shares((0..n).filter(|&j| c[i][j] > 0).map(|j| (j, c[i][j] as f64 + EPSILON)).collect()))
        .collect();
    let backward = (0..n)
        .map(|i| shares((0..n).filter(|&j| c[j][i] > 0).map(|j| (j, c[j][i] as f64 + EPSILON)).collect()))
        .collect();
    let geo = (0..n)
        .map(|i| {
            shares(
                (0..n)
                    .filter(|&j| j != i && dist[i][j] <= GEO_THRESHOLD_KM)
                    .map(|j| (j, 1.0 / dist[i][j]))
                    .collect(),
            )
        })
        .collect();
    [forward, backward, geo]
}

/// `m_i = Ws v_i ⊕ Σ ψ_ij Ws v_j ⊕ Σ φ_ij Ws v_j ⊕ Σ θ_ij Ws v_j`, with the
/// weights a softmax of `FC(Wa v_i ⊕ Wa (pre_ij v_j))` over each
/// neighborhood.
fn reference_embedding(inst: &Instance) -> Mat {
    let s = &inst.store;
    let n = inst.features.nrows();
    let d_e = inst.params.cfg.embed_dim;
    let v: Vec<Vec<f64>> = inst.features.rows().into_iter().map(|r| r.to_vec()).collect();
    let ws = s.get(inst.params.w_s);
    let own: Vec<Vec<f64>> = v.iter().map(|x| project(x, ws)).collect();
    let nbhs = reference_neighborhoods(&inst.counts, &inst.dist);
    let mut m = Mat::zeros((n, 4 * d_e));
    for i in 0..n {
        for e in 0..d_e {
            m[[i, e]] = own[i][e];
        }
        for (view, sets) in nbhs.iter().enumerate() {
            let head = &inst.params.heads[view][0];
            let (wa, u, b) = (s.get(head.proj), s.get(head.fc_w), s.get(head.fc_b)[[0, 0]]);
            let left = project(&v[i], wa);
            let scores: Vec<f64> = sets[i]
                .iter()
                .map(|&(j, pre)| {
                    let scaled: Vec<f64> = v[j].iter().map(|x| pre * x).collect();
                    let right = project(&scaled, wa);
                    let mut z = b;
                    for e in 0..d_e {
                        z += left[e] * u[[e, 0]] + right[e] * u[[d_e + e, 0]];
                    }
                    leaky(z)
                })
                .collect();
            let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|z| (z - top).exp()).collect();
            let total: f64 = exps.iter().sum();
            for (k, &(j, _)) in sets[i].iter().enumerate() {
                for e in 0..d_e {
                    m[[i, (view + 1) * d_e + e]] += exps[k] / total * own[j][e];
                }
            }
        }
    }
    m
}

pub fn degenerate() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let inst = instance(4000 + seed, |rng| SpatialConfig {
            gated: false,
            residual: false,
            ..SpatialConfig::new(rng.random_range(1..=8), rng.random_range(1..=6), 1, Aggregation::Average)
        });
        let got = embed_sequence(&inst.store, &inst.params, &[inst.features.clone()], &[inst.nbh.clone()])
            .expect("aligned inputs")
            .remove(0);
        let want = reference_embedding(&inst);
        if got.dim() != want.dim() {
            return Outcome::Fail(format!("shape {:?} vs reference {:?}", got.dim(), want.dim()));
        }
        worst = worst.max(got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    Outcome::check(
        worst <= REFERENCE_TOL,
        format!("20 instances, max |diff| = {worst:.2e} (tol {REFERENCE_TOL:e})"),
    )
}
