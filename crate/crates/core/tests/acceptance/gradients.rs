use odp_core::autodiff::{Mat, Tape, Var};
use odp_core::dataset::Dataset;
use odp_core::model::{Model, ModelConfig, ModelKind};
use odp_core::params::{Bound, ParamStore};
use odp_core::spatial::{spatial_embed, Aggregation, SpatialConfig, SpatialParams};
use odp_core::temporal::{CellType, TemporalConfig, TemporalParams};
use odp_core::transfer::{BaselineSource, TransferParams, Tuning};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::fixtures::{counts, geography, graph, matrix};
use crate::Outcome;

const STEP: f64 = 1e-4;
const REL_TOL: f64 = 1e-3;
/// Denominator floor of the relative error, so gradients that are zero
/// up to rounding compare on an absolute scale.
const FLOOR: f64 = 1e-6;

const N: usize = 4;
const D_F: usize = 5;
const D_E: usize = 3;
const HEADS: usize = 2;
const DEPTH: usize = 2;

/// Fixed, irregular weights so the loss is sensitive to every entry.
fn probe(tape: &mut Tape, x: Var) -> Var {
    let (r, c) = tape.value(x).dim();
    let w = Mat::from_shape_fn((r, c), |(i, j)| (1.3 * i as f64 + 0.7 * j as f64 + 0.5).sin());
    let w = tape.constant(w);
    let y = tape.mul_bcast(x, w);
    tape.sum(y)
}

struct Check {
    name: String,
    worst: f64,
    entries: usize,
    at: String,
}

fn grad_check(name: impl Into<String>, store: &ParamStore, loss: &dyn Fn(&mut Tape, &Bound) -> Var) -> Check {
    let eval = |s: &ParamStore| {
        let mut tape = Tape::new();
        let bound = s.bind(&mut tape);
        let out = loss(&mut tape, &bound);
        (tape.scalar(out), tape, bound, out)
    };
    let (_, tape, bound, out) = eval(store);
    let grads = bound.collect(&tape.backward(out));
    let mut work = store.clone();
    let mut check = Check {
        name: name.into(),
        worst: 0.0,
        entries: 0,
        at: String::new(),
    };
    for id in store.ids() {
        if !store.entry(id).trainable {
            continue;
        }
        let shape = store.get(id).dim();
        let analytic = grads[id.index()].clone().unwrap_or_else(|| Mat::zeros(shape));
        for r in 0..shape.0 {
            for c in 0..shape.1 {
                let orig = work.get(id)[[r, c]];
                work.get_mut(id)[[r, c]] = orig + STEP;
                let up = eval(&work).0;
                work.get_mut(id)[[r, c]] = orig - STEP;
                let down = eval(&work).0;
                work.get_mut(id)[[r, c]] = orig;
                let numeric = (up - down) / (2.0 * STEP);
                let a = analytic[[r, c]];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
                if rel > check.worst {
                    check.worst = rel;
                    check.at = format!("{}[{r},{c}] analytic {a:.6e} numeric {numeric:.6e}", store.entry(id).name);
                }
                check.entries += 1;
            }
        }
    }
    check
}

fn spatial_checks(out: &mut Vec<Check>) {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let c = counts(N, 0.5, &mut rng);
    let (_, geo) = geography(N, &mut rng);
    let nbh = odp_core::neighborhoods::SlotNeighborhoods::build(&graph(1, &c), &geo, 1e-8);
    let feats = matrix(N, D_F, -1.0, 1.0, &mut rng);
    for agg in [Aggregation::Average, Aggregation::Concat] {
        let mut store = ParamStore::new();
        let params = SpatialParams::init(SpatialConfig::new(D_F, D_E, HEADS, agg), &mut store, &mut rng);
        out.push(grad_check(format!("spatial/{}", agg.name()), &store, &|tape, bound| {
            let v = tape.constant(feats.clone());
            let m = spatial_embed(tape, bound, &params, v, &nbh);
            probe(tape, m)
        }));
    }
}

fn temporal_checks(out: &mut Vec<Check>) {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let dim = 4 * D_E;
    let rows = 2 * N;
    let inputs: Vec<Vec<Mat>> = (0..4)
        .map(|_| (0..DEPTH).map(|_| matrix(rows, dim, -1.0, 1.0, &mut rng)).collect())
        .collect();
    for cell in [CellType::Lstm, CellType::Gru] {
        for (shared, agg) in [(true, Aggregation::Average), (false, Aggregation::Concat)] {
            let mut store = ParamStore::new();
            let cfg = TemporalConfig {
                dim,
                cell,
                shared,
                aggregation: agg,
            };
            let params = TemporalParams::init(cfg, &mut store, &mut rng);
            let name = format!("temporal/{}/{}/{}", cell.name(), if shared { "shared" } else { "separate" }, agg.name());
            out.push(grad_check(name, &store, &|tape, bound| {
                let slices: [Vec<Var>; 4] =
                    std::array::from_fn(|s| inputs[s].iter().map(|m| tape.constant(m.clone())).collect());
                let enc = params.encode_slices(tape, bound, &slices);
                let (fused, _) = params.fuse(tape, bound, &enc, true);
                probe(tape, fused)
            }));
        }
    }
}

fn transfer_checks(out: &mut Vec<Check>) {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let dim = 4 * D_E;
    let d_ref = matrix(N, 1, 0.0, 6.0, &mut rng);
    let g_ref = matrix(N, N, 0.0, 3.0, &mut rng);
    for tuning in [Tuning::None, Tuning::Sum, Tuning::WSum(0.4), Tuning::Mult] {
        let mut store = ParamStore::new();
        let params = TransferParams::init(dim, D_E, tuning, &mut store, &mut rng);
        // The embedding is checked as an input alongside the head weights.
        let m = store.add("input.m", matrix(N, dim, -1.0, 1.0, &mut rng), true);
        out.push(grad_check(format!("transfer/{}", tuning.name()), &store, &|tape, bound| {
            let dr = tape.constant(d_ref.clone());
            let gr = tape.constant(g_ref.clone());
            let d = params.demand_head(tape, bound, bound[m], dr);
            let g = params.od_head(tape, bound, bound[m], gr);
            let a = probe(tape, d);
            let b = probe(tape, g);
            tape.add(a, b)
        }));
    }
}

fn toy_dataset() -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(54);
    let slots = 8;
    let (_, geo) = geography(N, &mut rng);
    let graphs = (1..=slots).map(|t| graph(t, &counts(N, 0.6, &mut rng))).collect();
    let features = (0..slots).map(|_| matrix(N, D_F, 0.0, 2.0, &mut rng)).collect();
    Dataset::from_parts(2, graphs, features, geo, 1e-8).expect("consistent toy data")
}

fn model_checks(out: &mut Vec<Check>) {
    let data = toy_dataset();
    let targets = [6, 7, 8];
    let truth = Model::batch_truth(&data, &targets).expect("targets have truth");
    let variants = [
        (ModelKind::Bgarn, Tuning::Mult, CellType::Lstm),
        (ModelKind::Bgarn, Tuning::Sum, CellType::Gru),
        (ModelKind::Bgarn, Tuning::WSum(0.5), CellType::Lstm),
        (ModelKind::Bgarn, Tuning::None, CellType::Gru),
        (ModelKind::Baseline(BaselineSource::Ar), Tuning::Mult, CellType::Lstm),
    ];
    for (kind, tuning, cell) in variants {
        let cfg = ModelConfig {
            grids: N,
            embed_dim: D_E,
            heads: HEADS,
            depth: DEPTH,
            tuning,
            cell,
            ..ModelConfig::new(kind, D_F)
        };
        let model = Model::new(cfg, 55).expect("valid config");
        let name = match kind {
            ModelKind::Bgarn => format!("model/bgarn/{}/{}", tuning.name(), cell.name()),
            other => format!("model/{}", other.name()),
        };
        out.push(grad_check(name, &model.store, &|tape, bound| {
            let fwd = model.forward(tape, bound, &data, &targets, true).expect("valid batch");
            Model::loss(tape, &fwd, &truth, 0.8, 0.2, 1.0)
        }));
    }
}

pub fn criterion() -> Outcome {
    let mut checks = Vec::new();
    spatial_checks(&mut checks);
    temporal_checks(&mut checks);
    transfer_checks(&mut checks);
    model_checks(&mut checks);
    let entries: usize = checks.iter().map(|c| c.entries).sum();
    let worst = checks
        .iter()
        .max_by(|a, b| a.worst.total_cmp(&b.worst))
        .expect("at least one check");
    let failing: Vec<&str> = checks.iter().filter(|c| c.worst > REL_TOL).map(|c| c.name.as_str()).collect();
    Outcome::check(
        failing.is_empty(),
        format!(
            "{} groups, {entries} entries, step {STEP:e}; worst rel err {:.2e} in {} at {} (tol {REL_TOL:e}){}",
            checks.len(),
            worst.worst,
            worst.name,
            worst.at,
            if failing.is_empty() { String::new() } else { format!("; failing: {}", failing.join(", ")) }
        ),
    )
}
