//! Baseline references (historical averages, auto-regression) and the
//! transferring heads that tune deep outputs with them.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Mat, Tape, Var};
use crate::error::{OdpError, Result};
use crate::params::{Bound, ParamId, ParamStore};
use crate::spatial::{AttentionHead, LEAKY_SLOPE};
use crate::temporal::{slice_indices, SliceIndices};

pub const DEFAULT_WSUM_WEIGHT: f64 = 0.5;

/// How a deep output is combined with its baseline reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tuning {
    None,
    Sum,
    WSum(f64),
    Mult,
}

impl Tuning {
    pub fn name(self) -> &'static str {
        match self {
            Tuning::None => "none",
            Tuning::Sum => "sum",
            Tuning::WSum(_) => "wsum",
            Tuning::Mult => "mult",
        }
    }

    /// Parses a scheme name; `w` is used only by `wsum`.
    pub fn parse(s: &str, w: f64) -> Option<Self> {
        match s {
            "none" => Some(Tuning::None),
            "sum" => Some(Tuning::Sum),
            "wsum" => Some(Tuning::WSum(w)),
            "mult" => Some(Tuning::Mult),
            _ => None,
        }
    }
}

pub fn aggr(a: f64, reference: f64, tuning: Tuning) -> f64 {
    match tuning {
        Tuning::None => a,
        Tuning::Sum => a + reference,
        Tuning::WSum(w) => w * a + (1.0 - w) * reference,
        Tuning::Mult => a * reference,
    }
}

pub fn aggr_mat(a: &Mat, reference: &Mat, tuning: Tuning) -> Mat {
    assert_eq!(a.dim(), reference.dim(), "aggr: shapes differ");
    let mut out = a.clone();
    out.zip_mut_with(reference, |x, &r| *x = aggr(*x, r, tuning));
    out
}

pub fn aggr_var(tape: &mut Tape, a: Var, reference: Var, tuning: Tuning) -> Var {
    match tuning {
        Tuning::None => a,
        Tuning::Sum => tape.add(a, reference),
        Tuning::WSum(w) => {
            let wa = tape.scale(a, w);
            let wr = tape.scale(reference, 1.0 - w);
            tape.add(wa, wr)
        }
        Tuning::Mult => {
            assert_eq!(tape.value(a).dim(), tape.value(reference).dim(), "aggr: shapes differ");
            tape.mul_bcast(a, reference)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HaMode {
    /// All four slices, with repeats.
    Plus,
    Tendency,
    Periodicity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineSource {
    Ha(HaMode),
    Ar,
}

impl BaselineSource {
    pub fn name(self) -> &'static str {
        match self {
            BaselineSource::Ha(HaMode::Plus) => "ha+",
            BaselineSource::Ha(HaMode::Tendency) => "hat",
            BaselineSource::Ha(HaMode::Periodicity) => "hap",
            BaselineSource::Ar => "ar",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ha+" | "ha_plus" => Some(BaselineSource::Ha(HaMode::Plus)),
            "hat" => Some(BaselineSource::Ha(HaMode::Tendency)),
            "hap" => Some(BaselineSource::Ha(HaMode::Periodicity)),
            "ar" => Some(BaselineSource::Ar),
            _ => None,
        }
    }
}

/// Slots averaged by an HA mode.
pub fn ha_slots(idx: &SliceIndices, mode: HaMode) -> Vec<usize> {
    match mode {
        HaMode::Plus => idx.union(),
        HaMode::Tendency => idx.tendency.clone(),
        HaMode::Periodicity => idx.periodicity.clone(),
    }
}

fn history_slot<'a>(history: &'a [Mat], slot: usize) -> Result<&'a Mat> {
    slot.checked_sub(1)
        .and_then(|i| history.get(i))
        .ok_or_else(|| OdpError::InvalidTarget(format!("slot {slot} is outside the {} observed slots", history.len())))
}

/// Elementwise mean over `slots` of `history`, where `history[s - 1]` holds
/// slot `s`.
pub fn average_slots(history: &[Mat], slots: &[usize]) -> Result<Mat> {
    let first = history_slot(history, *slots.first().expect("nonempty slot list"))?;
    let mut acc = Mat::zeros(first.dim());
    for &s in slots {
        acc += history_slot(history, s)?;
    }
    Ok(acc / slots.len() as f64)
}

/// Historical-average reference for slot `t + 1`. Works on demand vectors
/// and OD matrices alike.
pub fn ha_baseline(history: &[Mat], t: usize, l: usize, p: usize, mode: HaMode) -> Result<Mat> {
    let idx = slice_indices(t, l, p)?;
    average_slots(history, &ha_slots(&idx, mode))
}

/// Auto-regressive baseline: one weight per history position of the
/// four-slice union, shared across grids, OD cells and both tasks.
#[derive(Debug, Clone)]
pub struct ArParams {
    pub depth: usize,
    /// `1 × 4P`
    pub weights: ParamId,
    pub bias: ParamId,
}

impl ArParams {
    /// Uniform weights `1/(4P)` and zero bias, which reproduce HA⁺.
    pub fn init(depth: usize, store: &mut ParamStore) -> Self {
        let k = 4 * depth;
        ArParams {
            depth,
            weights: store.add("ar.weights", Mat::from_elem((1, k), 1.0 / k as f64), true),
            bias: store.add("ar.bias", Mat::zeros((1, 1)), true),
        }
    }

    /// `Σ_k w_k · values[k] + b` over history positions in union order.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, values: &[Var]) -> Var {
        assert_eq!(values.len(), 4 * self.depth, "ar: history length");
        let mut total = None;
        for (k, &v) in values.iter().enumerate() {
            let w = tape.slice_cols(bound[self.weights], k, 1);
            let term = tape.mul_bcast(v, w);
            total = Some(match total {
                Some(acc) => tape.add(acc, term),
                None => term,
            });
        }
        tape.add_bcast(total.expect("nonempty history"), bound[self.bias])
    }
}

/// AR prediction for slot `t + 1` (unclamped).
pub fn ar_predict(store: &ParamStore, ar: &ArParams, history: &[Mat], t: usize, l: usize) -> Result<Mat> {
    let idx = slice_indices(t, l, ar.depth)?;
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let mut values = Vec::new();
    for s in idx.union() {
        let m = history_slot(history, s)?.clone();
        values.push(tape.constant(m));
    }
    let out = ar.forward(&mut tape, &bound, &values);
    Ok(tape.value(out).clone())
}

/// AR reference, clamped at 0 so it stays a valid count baseline.
pub fn ar_baseline(store: &ParamStore, ar: &ArParams, history: &[Mat], t: usize, l: usize) -> Result<Mat> {
    Ok(ar_predict(store, ar, history, t, l)?.mapv(|v| v.max(0.0)))
}

/// Demand FC and OD AttentionNet of the transferring layer.
#[derive(Debug, Clone)]
pub struct TransferParams {
    /// `D' × 1`
    pub demand_w: ParamId,
    pub demand_b: ParamId,
    pub od: AttentionHead,
    pub tuning: Tuning,
}

impl TransferParams {
    /// Small weights and unit biases, so that under `mult` tuning both heads
    /// start close to the reference itself.
    pub fn init(in_dim: usize, embed_dim: usize, tuning: Tuning, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        let small = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            let b = 0.01 / (rows as f64).sqrt();
            Mat::from_shape_simple_fn((rows, cols), || rng.random_range(-b..=b))
        };
        let demand_w = store.add("transfer.demand.w", small(in_dim, 1, rng), true);
        let demand_b = store.add("transfer.demand.b", Mat::ones((1, 1)), true);
        let od = AttentionHead {
            proj: store.add_uniform("transfer.od.proj", in_dim, embed_dim, in_dim, rng),
            fc_w: store.add("transfer.od.fc_w", small(2 * embed_dim, 1, rng), true),
            fc_b: store.add("transfer.od.fc_b", Mat::ones((1, 1)), true),
        };
        TransferParams {
            demand_w,
            demand_b,
            od,
            tuning,
        }
    }

    /// Per-row linear FC of the embedding, tuned with `d_ref` (rows × 1).
    pub fn demand_head(&self, tape: &mut Tape, bound: &Bound, m: Var, d_ref: Var) -> Var {
        let z = tape.matmul(m, bound[self.demand_w]);
        let z = tape.add_bcast(z, bound[self.demand_b]);
        aggr_var(tape, z, d_ref, self.tuning)
    }

    /// Pairwise AttentionNet scores of the rows of `m` (n × D'), tuned with
    /// `g_ref` (n × n).
    pub fn od_head(&self, tape: &mut Tape, bound: &Bound, m: Var, g_ref: Var) -> Var {
        let (s1, s2) = self.od.half_scores(tape, bound, m, m);
        self.od_from_scores(tape, bound, s1, s2, g_ref)
    }

    /// OD head from precomputed half scores; lets a batch share the
    /// projections and slice per sample.
    pub fn od_from_scores(&self, tape: &mut Tape, bound: &Bound, s1: Var, s2: Var, g_ref: Var) -> Var {
        let z = tape.outer_sum(s1, s2);
        let z = tape.add_bcast(z, bound[self.od.fc_b]);
        let z = tape.leaky_relu(z, LEAKY_SLOPE);
        aggr_var(tape, z, g_ref, self.tuning)
    }
}

/// Evaluates both heads for one embedding matrix.
pub fn transfer(store: &ParamStore, params: &TransferParams, m: &Mat, d_ref: &Mat, g_ref: &Mat) -> (Mat, Mat) {
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let mv = tape.constant(m.clone());
    let dr = tape.constant(d_ref.clone());
    let gr = tape.constant(g_ref.clone());
    let d = params.demand_head(&mut tape, &bound, mv, dr);
    let g = params.od_head(&mut tape, &bound, mv, gr);
    (tape.value(d).clone(), tape.value(g).clone())
}
