//! Temporal slices, recurrent encoding and batch-normalized fusion.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{BatchStats, Mat, Tape, Var};
use crate::error::{OdpError, Result};
use crate::params::{Bound, ParamId, ParamStore};
use crate::spatial::Aggregation;

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Slot indices (1-based, oldest first) of the four history slices for the
/// target slot `T + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceIndices {
    pub tendency: Vec<usize>,
    pub periodicity: Vec<usize>,
    pub periodic_minus: Vec<usize>,
    pub periodic_plus: Vec<usize>,
}

impl SliceIndices {
    /// Slices in fusion order: tendency, periodicity, minus, plus.
    pub fn all(&self) -> [&[usize]; 4] {
        [
            &self.tendency,
            &self.periodicity,
            &self.periodic_minus,
            &self.periodic_plus,
        ]
    }

    /// Concatenation of the four slices, with repeats.
    pub fn union(&self) -> Vec<usize> {
        self.all().concat()
    }

    pub fn depth(&self) -> usize {
        self.tendency.len()
    }
}

/// Indices for predicting slot `t + 1` from history up to slot `t`.
pub fn slice_indices(t: usize, l: usize, p: usize) -> Result<SliceIndices> {
    if p == 0 || l == 0 {
        return Err(OdpError::InvalidTarget(format!(
            "history depth and slots per day must be positive (P={p}, l={l})"
        )));
    }
    // The smallest index is T - lP from the shifted-earlier periodic slice.
    if t < l * p + 1 {
        return Err(OdpError::InvalidTarget(format!(
            "target slot {} needs T >= lP+1 = {} (T={t}, l={l}, P={p})",
            t + 1,
            l * p + 1
        )));
    }
    let oldest_first = |f: &dyn Fn(usize) -> usize| (1..=p).rev().map(f).collect::<Vec<_>>();
    Ok(SliceIndices {
        tendency: oldest_first(&|k| t + 1 - k),
        periodicity: oldest_first(&|k| t + 1 - l * k),
        periodic_minus: oldest_first(&|k| t - l * k),
        periodic_plus: oldest_first(&|k| t + 2 - l * k),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellType {
    Lstm,
    Gru,
}

impl CellType {
    pub fn name(self) -> &'static str {
        match self {
            CellType::Lstm => "lstm",
            CellType::Gru => "gru",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lstm" => Some(CellType::Lstm),
            "gru" => Some(CellType::Gru),
            _ => None,
        }
    }

    fn gates(self) -> usize {
        match self {
            CellType::Lstm => 4,
            CellType::Gru => 3,
        }
    }
}

/// Recurrent cell weights. Gate blocks are laid out along columns, LSTM in
/// `i, f, g, o` order and GRU in `r, z, n` order.
#[derive(Debug, Clone)]
pub struct CellParams {
    pub kind: CellType,
    pub dim: usize,
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
}

impl CellParams {
    pub fn init(kind: CellType, dim: usize, prefix: &str, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        let w = kind.gates() * dim;
        CellParams {
            kind,
            dim,
            w_ih: store.add_uniform(format!("{prefix}.w_ih"), dim, w, dim, rng),
            w_hh: store.add_uniform(format!("{prefix}.w_hh"), dim, w, dim, rng),
            b_ih: store.add_uniform(format!("{prefix}.b_ih"), 1, w, dim, rng),
            b_hh: store.add_uniform(format!("{prefix}.b_hh"), 1, w, dim, rng),
        }
    }

    /// Runs the cell over `steps` (each `rows × D`, oldest first) from a zero
    /// state and returns the mean of the per-step outputs.
    pub fn encode(&self, tape: &mut Tape, bound: &Bound, steps: &[Var]) -> Var {
        assert!(!steps.is_empty(), "encode: empty slice");
        let rows = tape.value(steps[0]).nrows();
        let d = self.dim;
        let mut h = tape.constant(Mat::zeros((rows, d)));
        let mut c = h;
        let mut outputs = Vec::with_capacity(steps.len());
        for &x in steps {
            let xi = tape.matmul(x, bound[self.w_ih]);
            let xi = tape.add_bcast(xi, bound[self.b_ih]);
            let hh = tape.matmul(h, bound[self.w_hh]);
            let hh = tape.add_bcast(hh, bound[self.b_hh]);
            match self.kind {
                CellType::Lstm => {
                    let z = tape.add(xi, hh);
                    let zi = tape.slice_cols(z, 0, d);
                    let zf = tape.slice_cols(z, d, d);
                    let zg = tape.slice_cols(z, 2 * d, d);
                    let zo = tape.slice_cols(z, 3 * d, d);
                    let i = tape.sigmoid(zi);
                    let f = tape.sigmoid(zf);
                    let g = tape.tanh(zg);
                    let o = tape.sigmoid(zo);
                    let fc = tape.mul_bcast(f, c);
                    let ig = tape.mul_bcast(i, g);
                    c = tape.add(fc, ig);
                    let tc = tape.tanh(c);
                    h = tape.mul_bcast(o, tc);
                }
                CellType::Gru => {
                    let xr = tape.slice_cols(xi, 0, d);
                    let xz = tape.slice_cols(xi, d, d);
                    let xn = tape.slice_cols(xi, 2 * d, d);
                    let hr = tape.slice_cols(hh, 0, d);
                    let hz = tape.slice_cols(hh, d, d);
                    let hn = tape.slice_cols(hh, 2 * d, d);
                    let r = tape.add(xr, hr);
                    let r = tape.sigmoid(r);
                    let z = tape.add(xz, hz);
                    let z = tape.sigmoid(z);
                    let rh = tape.mul_bcast(r, hn);
                    let n = tape.add(xn, rh);
                    let n = tape.tanh(n);
                    // h' = (1 - z) n + z h = n + z (h - n)
                    let diff = tape.sub(h, n);
                    let zd = tape.mul_bcast(z, diff);
                    h = tape.add(n, zd);
                }
            }
            outputs.push(h);
        }
        tape.mean(&outputs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalConfig {
    /// Input and hidden width `D`.
    pub dim: usize,
    pub cell: CellType,
    /// One cell for all four slices.
    pub shared: bool,
    pub aggregation: Aggregation,
}

impl TemporalConfig {
    pub fn output_dim(&self) -> usize {
        match self.aggregation {
            Aggregation::Average => self.dim,
            Aggregation::Concat => 4 * self.dim,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TemporalParams {
    pub cfg: TemporalConfig,
    pub cells: Vec<CellParams>,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl TemporalParams {
    pub fn init(cfg: TemporalConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        let cells = if cfg.shared {
            vec![CellParams::init(cfg.cell, cfg.dim, "temporal.cell", store, rng)]
        } else {
            (0..4)
                .map(|s| CellParams::init(cfg.cell, cfg.dim, &format!("temporal.cell{s}"), store, rng))
                .collect()
        };
        let w = cfg.output_dim();
        TemporalParams {
            cells,
            gamma: store.add("temporal.bn.gamma", Mat::ones((1, w)), true),
            beta: store.add("temporal.bn.beta", Mat::zeros((1, w)), true),
            running_mean: store.add("temporal.bn.running_mean", Mat::zeros((1, w)), false),
            running_var: store.add("temporal.bn.running_var", Mat::ones((1, w)), false),
            cfg,
        }
    }

    pub fn cell(&self, slice: usize) -> &CellParams {
        &self.cells[if self.cfg.shared { 0 } else { slice }]
    }

    pub fn output_dim(&self) -> usize {
        self.cfg.output_dim()
    }

    /// Encodes the four slices. `slices[s][k]` is step `k` of slice `s`;
    /// every step of every slice must have the same row count. With a shared
    /// cell the slices are stacked and run as one batch.
    pub fn encode_slices(&self, tape: &mut Tape, bound: &Bound, slices: &[Vec<Var>; 4]) -> [Var; 4] {
        let p = slices[0].len();
        assert!(slices.iter().all(|s| s.len() == p), "slices differ in depth");
        if self.cfg.shared {
            let rows = tape.value(slices[0][0]).nrows();
            let steps: Vec<Var> = (0..p)
                .map(|k| tape.concat_rows(&[slices[0][k], slices[1][k], slices[2][k], slices[3][k]]))
                .collect();
            let out = self.cells[0].encode(tape, bound, &steps);
            std::array::from_fn(|s| tape.slice_rows(out, s * rows, rows))
        } else {
            std::array::from_fn(|s| self.cells[s].encode(tape, bound, &slices[s]))
        }
    }

    /// Aggregates the four encodings and batch-normalizes over rows.
    /// Training mode normalizes with batch statistics and returns them.
    pub fn fuse(&self, tape: &mut Tape, bound: &Bound, parts: &[Var; 4], training: bool) -> (Var, Option<BatchStats>) {
        let dim = tape.value(parts[0]).dim();
        assert!(
            parts.iter().all(|&p| tape.value(p).dim() == dim),
            "fuse: slice encodings differ in shape"
        );
        let agg = self.cfg.aggregation.apply(tape, parts);
        if training {
            let (out, stats) = tape.batch_norm(agg, bound[self.gamma], bound[self.beta], BN_EPS);
            (out, Some(stats))
        } else {
            let neg_mean = tape.value(bound[self.running_mean]).mapv(|m| -m);
            let inv_std = tape.value(bound[self.running_var]).mapv(|v| 1.0 / (v + BN_EPS).sqrt());
            let neg_mean = tape.constant(neg_mean);
            let inv_std = tape.constant(inv_std);
            let x = tape.add_bcast(agg, neg_mean);
            let x = tape.mul_bcast(x, inv_std);
            let x = tape.mul_bcast(x, bound[self.gamma]);
            (tape.add_bcast(x, bound[self.beta]), None)
        }
    }

    /// Exponential update of the running statistics. The running variance
    /// uses the unbiased batch estimate.
    pub fn update_running(&self, store: &mut ParamStore, stats: &BatchStats) {
        let unbias = if stats.rows > 1 {
            stats.rows as f64 / (stats.rows - 1) as f64
        } else {
            1.0
        };
        let m = store.get_mut(self.running_mean);
        for (r, &b) in m.iter_mut().zip(&stats.mean) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
        let v = store.get_mut(self.running_var);
        for (r, &b) in v.iter_mut().zip(&stats.var) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b * unbias;
        }
    }
}

/// Encodes one slice (`P` matrices, oldest first) with the cell of slice
/// `slice`.
pub fn encode_sequence(store: &ParamStore, params: &TemporalParams, slice: usize, steps: &[Mat]) -> Result<Mat> {
    if steps.is_empty() {
        return Err(OdpError::Shape("encode_sequence: empty slice".into()));
    }
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let vars: Vec<Var> = steps.iter().map(|m| tape.constant(m.clone())).collect();
    let out = params.cell(slice).encode(&mut tape, &bound, &vars);
    Ok(tape.value(out).clone())
}

fn fuse_values(store: &ParamStore, params: &TemporalParams, parts: &[Mat; 4], training: bool) -> (Mat, Option<BatchStats>) {
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let vars = parts.each_ref().map(|m| tape.constant(m.clone()));
    let (out, stats) = params.fuse(&mut tape, &bound, &vars, training);
    (tape.value(out).clone(), stats)
}

/// Training-mode fusion: normalizes with batch statistics and folds them
/// into the running buffers.
pub fn fuse_temporal_train(store: &mut ParamStore, params: &TemporalParams, parts: &[Mat; 4]) -> Mat {
    let (out, stats) = fuse_values(store, params, parts, true);
    params.update_running(store, &stats.expect("training mode"));
    out
}

/// Evaluation-mode fusion with frozen running statistics.
pub fn fuse_temporal_eval(store: &ParamStore, params: &TemporalParams, parts: &[Mat; 4]) -> Mat {
    fuse_values(store, params, parts, false).0
}
