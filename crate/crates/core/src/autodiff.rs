//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Values are
//! materialized eagerly; [`Tape::backward`] walks the record in reverse and
//! returns the gradient of a scalar output with respect to every node that
//! requires one. Constants (features, baseline references, targets) are leaves
//! without gradients, so nothing is accumulated for them.
//!
//! Besides the usual dense ops there are three fused ops over a sparse
//! [`NeighborView`]: edge softmax attention, weighted max pooling and
//! weighted mean pooling. They keep memory proportional to the number of
//! neighbor pairs instead of `n²`.

use std::sync::Arc;

use ndarray::{concatenate, s, Array2, Axis};

use crate::neighborhoods::NeighborView;

pub type Mat = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddBcast(Var, Var),
    MulBcast(Var, Var),
    Scale(Var, f64),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Mean(Vec<Var>),
    Sum(Var),
    OuterSum(Var, Var),
    EdgeAttention {
        src: Var,
        dst: Var,
        bias: Var,
        values: Var,
        view: Arc<NeighborView>,
        alpha: Vec<f64>,
        pre_act: Vec<f64>,
        slope: f64,
    },
    EdgeMaxPool {
        input: Var,
        view: Arc<NeighborView>,
        argmax: Vec<usize>,
    },
    EdgeMeanPool {
        input: Var,
        view: Arc<NeighborView>,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    SmoothL1 {
        pred: Var,
        target: Mat,
        beta: f64,
    },
}

struct Node {
    value: Mat,
    op: Op,
    requires_grad: bool,
}

/// Batch statistics produced by [`Tape::batch_norm`] in training mode.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased variance (divided by the row count).
    pub var: Vec<f64>,
    pub rows: usize,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients returned by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Mat> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Sum `g` down to `shape`, undoing a broadcast.
fn reduce_to(g: Mat, shape: (usize, usize)) -> Mat {
    let mut g = g;
    if shape.0 == 1 && g.nrows() != 1 {
        g = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if shape.1 == 1 && g.ncols() != 1 {
        g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    g
}

fn check_bcast(a: &Mat, b: &Mat, what: &str) {
    let ok_r = b.nrows() == a.nrows() || b.nrows() == 1;
    let ok_c = b.ncols() == a.ncols() || b.ncols() == 1;
    assert!(
        ok_r && ok_c,
        "{what}: cannot broadcast {:?} into {:?}",
        b.dim(),
        a.dim()
    );
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.dim(), (1, 1), "scalar() on non-scalar node");
        m[[0, 0]]
    }

    fn push(&mut self, value: Mat, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn rg_any(&self, vs: &[Var]) -> bool {
        vs.iter().any(|&v| self.rg(v))
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf without gradient.
    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(
            va.ncols(),
            vb.nrows(),
            "matmul: {:?} x {:?}",
            va.dim(),
            vb.dim()
        );
        let out = va.dot(vb);
        let rg = self.rg_any(&[a, b]);
        self.push(out, Op::MatMul(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "add");
        let out = self.value(a) + self.value(b);
        let rg = self.rg_any(&[a, b]);
        self.push(out, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "sub");
        let out = self.value(a) - self.value(b);
        let rg = self.rg_any(&[a, b]);
        self.push(out, Op::Sub(a, b), rg)
    }

    /// `a + b` with `b` broadcast to `a`'s shape (`1×1`, `r×1`, `1×c` or `r×c`).
    pub fn add_bcast(&mut self, a: Var, b: Var) -> Var {
        check_bcast(self.value(a), self.value(b), "add_bcast");
        let out = self.value(a) + self.value(b);
        let rg = self.rg_any(&[a, b]);
        self.push(out, Op::AddBcast(a, b), rg)
    }

    /// `a ∘ b` with `b` broadcast to `a`'s shape.
    pub fn mul_bcast(&mut self, a: Var, b: Var) -> Var {
        check_bcast(self.value(a), self.value(b), "mul_bcast");
        let out = self.value(a) * self.value(b);
        let rg = self.rg_any(&[a, b]);
        self.push(out, Op::MulBcast(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a) * k;
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, k), rg)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self.value(a).mapv(|x| leaky(x, slope));
        let rg = self.rg(a);
        self.push(out, Op::LeakyRelu(a, slope), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(sigmoid);
        let rg = self.rg(a);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::tanh);
        let rg = self.rg(a);
        self.push(out, Op::Tanh(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = concatenate(Axis(1), &views).expect("concat_cols: row counts differ");
        let rg = self.rg_any(parts);
        self.push(out, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = concatenate(Axis(0), &views).expect("concat_rows: column counts differ");
        let rg = self.rg_any(parts);
        self.push(out, Op::ConcatRows(parts.to_vec()), rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Var {
        let out = self
            .value(a)
            .slice(s![.., start..start + width])
            .to_owned();
        let rg = self.rg(a);
        self.push(out, Op::SliceCols(a, start), rg)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, height: usize) -> Var {
        let out = self
            .value(a)
            .slice(s![start..start + height, ..])
            .to_owned();
        let rg = self.rg(a);
        self.push(out, Op::SliceRows(a, start), rg)
    }

    /// Elementwise mean of same-shaped nodes.
    pub fn mean(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "mean of nothing");
        let mut out = self.value(parts[0]).clone();
        for &p in &parts[1..] {
            assert_eq!(self.value(p).dim(), out.dim(), "mean: shapes differ");
            out += self.value(p);
        }
        out /= parts.len() as f64;
        let rg = self.rg_any(parts);
        self.push(out, Op::Mean(parts.to_vec()), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Mat::from_elem((1, 1), self.value(a).sum());
        let rg = self.rg(a);
        self.push(out, Op::Sum(a), rg)
    }

    /// `out[i][j] = p[i] + q[j]` for column vectors `p` (n×1) and `q` (m×1).
    pub fn outer_sum(&mut self, p: Var, q: Var) -> Var {
        let (vp, vq) = (self.value(p), self.value(q));
        assert_eq!(vp.ncols(), 1, "outer_sum: p must be a column");
        assert_eq!(vq.ncols(), 1, "outer_sum: q must be a column");
        let out = Mat::from_shape_fn((vp.nrows(), vq.nrows()), |(i, j)| {
            vp[[i, 0]] + vq[[j, 0]]
        });
        let rg = self.rg_any(&[p, q]);
        self.push(out, Op::OuterSum(p, q), rg)
    }

    /// Softmax attention over the edges of `view`.
    ///
    /// For grid `i` and neighbor `j` with pre-weight `a`, the score is
    /// `LeakyReLU(src[i] + a·dst[j] + bias)`; scores are softmax-normalized
    /// over the neighbors of `i` and used to average rows of `values`.
    /// Grids without neighbors get a zero row.
    pub fn edge_attention(
        &mut self,
        src: Var,
        dst: Var,
        bias: Var,
        values: Var,
        view: &Arc<NeighborView>,
        slope: f64,
    ) -> Var {
        let n = view.len();
        let (vs, vd, vb, vv) = (
            self.value(src),
            self.value(dst),
            self.value(bias),
            self.value(values),
        );
        assert_eq!(vs.dim(), (n, 1), "edge_attention: src");
        assert_eq!(vd.dim(), (n, 1), "edge_attention: dst");
        assert_eq!(vb.dim(), (1, 1), "edge_attention: bias");
        assert_eq!(vv.nrows(), n, "edge_attention: values");
        let b = vb[[0, 0]];
        let mut alpha = vec![0.0; view.edge_count()];
        let mut pre_act = vec![0.0; view.edge_count()];
        let mut out = Mat::zeros((n, vv.ncols()));
        for i in 0..n {
            let range = view.edge_range(i);
            if range.is_empty() {
                continue;
            }
            let mut max = f64::NEG_INFINITY;
            for e in range.clone() {
                let z = vs[[i, 0]] + view.weight(e) * vd[[view.target(e), 0]] + b;
                pre_act[e] = z;
                max = max.max(leaky(z, slope));
            }
            let mut denom = 0.0;
            for e in range.clone() {
                let w = (leaky(pre_act[e], slope) - max).exp();
                alpha[e] = w;
                denom += w;
            }
            let mut row = out.row_mut(i);
            for e in range {
                alpha[e] /= denom;
                row.scaled_add(alpha[e], &vv.row(view.target(e)));
            }
        }
        let rg = self.rg_any(&[src, dst, bias, values]);
        self.push(
            out,
            Op::EdgeAttention {
                src,
                dst,
                bias,
                values,
                view: Arc::clone(view),
                alpha,
                pre_act,
                slope,
            },
            rg,
        )
    }

    /// Elementwise max over neighbors of `a·input[j]`; zero row when empty.
    pub fn edge_max_pool(&mut self, input: Var, view: &Arc<NeighborView>) -> Var {
        let n = view.len();
        let x = self.value(input);
        assert_eq!(x.nrows(), n, "edge_max_pool: input rows");
        let d = x.ncols();
        let mut out = Mat::zeros((n, d));
        let mut argmax = vec![usize::MAX; n * d];
        for i in 0..n {
            let range = view.edge_range(i);
            if range.is_empty() {
                continue;
            }
            for c in 0..d {
                let mut best = f64::NEG_INFINITY;
                let mut best_e = usize::MAX;
                for e in range.clone() {
                    let v = view.weight(e) * x[[view.target(e), c]];
                    if v > best {
                        best = v;
                        best_e = e;
                    }
                }
                out[[i, c]] = best;
                argmax[i * d + c] = best_e;
            }
        }
        let rg = self.rg(input);
        self.push(
            out,
            Op::EdgeMaxPool {
                input,
                view: Arc::clone(view),
                argmax,
            },
            rg,
        )
    }

    /// `Σ_j a·input[j] / |N(i)|` over neighbors; zero row when empty.
    pub fn edge_mean_pool(&mut self, input: Var, view: &Arc<NeighborView>) -> Var {
        let n = view.len();
        let x = self.value(input);
        assert_eq!(x.nrows(), n, "edge_mean_pool: input rows");
        let mut out = Mat::zeros((n, x.ncols()));
        for i in 0..n {
            let range = view.edge_range(i);
            if range.is_empty() {
                continue;
            }
            let inv = 1.0 / range.len() as f64;
            let mut row = out.row_mut(i);
            for e in range {
                row.scaled_add(view.weight(e) * inv, &x.row(view.target(e)));
            }
        }
        let rg = self.rg(input);
        self.push(
            out,
            Op::EdgeMeanPool {
                input,
                view: Arc::clone(view),
            },
            rg,
        )
    }

    /// Training-mode batch normalization over rows, per column.
    pub fn batch_norm(&mut self, input: Var, gamma: Var, beta: Var, eps: f64) -> (Var, BatchStats) {
        let x = self.value(input);
        let (rows, cols) = x.dim();
        assert!(rows > 0, "batch_norm on empty batch");
        assert_eq!(self.value(gamma).dim(), (1, cols), "batch_norm: gamma");
        assert_eq!(self.value(beta).dim(), (1, cols), "batch_norm: beta");
        let mean = x.mean_axis(Axis(0)).expect("rows > 0");
        let centered = x - &mean.view().insert_axis(Axis(0));
        let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("rows > 0");
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = centered;
        for (c, &is) in inv_std.iter().enumerate() {
            xhat.column_mut(c).mapv_inplace(|v| v * is);
        }
        let out = &xhat * self.value(gamma) + self.value(beta);
        let stats = BatchStats {
            mean: mean.to_vec(),
            var: var.to_vec(),
            rows,
        };
        let rg = self.rg_any(&[input, gamma, beta]);
        let v = self.push(
            out,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        );
        (v, stats)
    }

    /// Mean Smooth-L1 loss against a constant target, as a `1×1` node.
    pub fn smooth_l1(&mut self, pred: Var, target: &Mat, beta: f64) -> Var {
        let p = self.value(pred);
        assert_eq!(p.dim(), target.dim(), "smooth_l1: shapes differ");
        let total: f64 = p
            .iter()
            .zip(target.iter())
            .map(|(a, b)| crate::training::loss::smooth_l1_term(a - b, beta))
            .sum();
        let loss = total / p.len().max(1) as f64;
        let rg = self.rg(pred);
        self.push(
            Mat::from_elem((1, 1), loss),
            Op::SmoothL1 {
                pred,
                target: target.clone(),
                beta,
            },
            rg,
        )
    }

    /// Gradients of the scalar `output` with respect to every node.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.value(output).dim(), (1, 1), "backward from non-scalar");
        let mut grads: Vec<Option<Mat>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[output.0] = Some(Mat::ones((1, 1)));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Mat>], v: Var, g: Mat) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => *acc += &g,
            slot @ None => *slot = Some(g),
        }
    }

    fn backprop_node(&self, node: &Node, g: &Mat, grads: &mut [Option<Mat>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    self.accumulate(grads, *a, g.dot(&self.value(*b).t()));
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, self.value(*a).t().dot(g));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, -g);
            }
            Op::AddBcast(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if self.rg(*b) {
                    let shape = self.value(*b).dim();
                    self.accumulate(grads, *b, reduce_to(g.clone(), shape));
                }
            }
            Op::MulBcast(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    self.accumulate(grads, *a, g * vb);
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, reduce_to(g * va, vb.dim()));
                }
            }
            Op::Scale(a, k) => self.accumulate(grads, *a, g * *k),
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a);
                let mut d = g.clone();
                d.zip_mut_with(x, |gv, &xv| {
                    if xv <= 0.0 {
                        *gv *= slope
                    }
                });
                self.accumulate(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let mut d = g.clone();
                d.zip_mut_with(&node.value, |gv, &y| *gv *= y * (1.0 - y));
                self.accumulate(grads, *a, d);
            }
            Op::Tanh(a) => {
                let mut d = g.clone();
                d.zip_mut_with(&node.value, |gv, &y| *gv *= 1.0 - y * y);
                self.accumulate(grads, *a, d);
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = self.value(p).ncols();
                    if self.rg(p) {
                        self.accumulate(grads, p, g.slice(s![.., start..start + w]).to_owned());
                    }
                    start += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for &p in parts {
                    let h = self.value(p).nrows();
                    if self.rg(p) {
                        self.accumulate(grads, p, g.slice(s![start..start + h, ..]).to_owned());
                    }
                    start += h;
                }
            }
            Op::SliceCols(a, start) => {
                if self.rg(*a) {
                    let mut d = Mat::zeros(self.value(*a).dim());
                    d.slice_mut(s![.., *start..*start + g.ncols()]).assign(g);
                    self.accumulate(grads, *a, d);
                }
            }
            Op::SliceRows(a, start) => {
                if self.rg(*a) {
                    let mut d = Mat::zeros(self.value(*a).dim());
                    d.slice_mut(s![*start..*start + g.nrows(), ..]).assign(g);
                    self.accumulate(grads, *a, d);
                }
            }
            Op::Mean(parts) => {
                let share = g / parts.len() as f64;
                for &p in parts {
                    self.accumulate(grads, p, share.clone());
                }
            }
            Op::Sum(a) => {
                let dim = self.value(*a).dim();
                self.accumulate(grads, *a, Mat::from_elem(dim, g[[0, 0]]));
            }
            Op::OuterSum(p, q) => {
                self.accumulate(grads, *p, g.sum_axis(Axis(1)).insert_axis(Axis(1)));
                self.accumulate(grads, *q, g.sum_axis(Axis(0)).insert_axis(Axis(1)));
            }
            Op::EdgeAttention {
                src,
                dst,
                bias,
                values,
                view,
                alpha,
                pre_act,
                slope,
            } => {
                let vv = self.value(*values);
                let n = view.len();
                let mut d_src = Mat::zeros((n, 1));
                let mut d_dst = Mat::zeros((n, 1));
                let mut d_bias = 0.0;
                let mut d_vals = Mat::zeros(vv.dim());
                let mut d_alpha = Vec::new();
                for i in 0..n {
                    let range = view.edge_range(i);
                    if range.is_empty() {
                        continue;
                    }
                    let gi = g.row(i);
                    d_alpha.clear();
                    let mut weighted = 0.0;
                    for e in range.clone() {
                        let j = view.target(e);
                        let da = gi.dot(&vv.row(j));
                        weighted += alpha[e] * da;
                        d_alpha.push(da);
                        d_vals.row_mut(j).scaled_add(alpha[e], &gi);
                    }
                    for (k, e) in range.enumerate() {
                        let de = alpha[e] * (d_alpha[k] - weighted);
                        let dz = if pre_act[e] > 0.0 { de } else { de * slope };
                        d_src[[i, 0]] += dz;
                        d_dst[[view.target(e), 0]] += view.weight(e) * dz;
                        d_bias += dz;
                    }
                }
                self.accumulate(grads, *src, d_src);
                self.accumulate(grads, *dst, d_dst);
                self.accumulate(grads, *bias, Mat::from_elem((1, 1), d_bias));
                self.accumulate(grads, *values, d_vals);
            }
            Op::EdgeMaxPool {
                input,
                view,
                argmax,
            } => {
                if self.rg(*input) {
                    let x = self.value(*input);
                    let d = x.ncols();
                    let mut dx = Mat::zeros(x.dim());
                    for i in 0..view.len() {
                        for c in 0..d {
                            let e = argmax[i * d + c];
                            if e != usize::MAX {
                                dx[[view.target(e), c]] += view.weight(e) * g[[i, c]];
                            }
                        }
                    }
                    self.accumulate(grads, *input, dx);
                }
            }
            Op::EdgeMeanPool { input, view } => {
                if self.rg(*input) {
                    let mut dx = Mat::zeros(self.value(*input).dim());
                    for i in 0..view.len() {
                        let range = view.edge_range(i);
                        if range.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / range.len() as f64;
                        for e in range {
                            dx.row_mut(view.target(e))
                                .scaled_add(view.weight(e) * inv, &g.row(i));
                        }
                    }
                    self.accumulate(grads, *input, dx);
                }
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let rows = xhat.nrows() as f64;
                self.accumulate(grads, *beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                self.accumulate(
                    grads,
                    *gamma,
                    (g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)),
                );
                if self.rg(*input) {
                    let dxhat = g * self.value(*gamma);
                    let sum_d = dxhat.sum_axis(Axis(0));
                    let sum_dx = (&dxhat * xhat).sum_axis(Axis(0));
                    let mut dx = Mat::zeros(xhat.dim());
                    for ((r, c), v) in dx.indexed_iter_mut() {
                        *v = inv_std[c] / rows
                            * (rows * dxhat[[r, c]] - sum_d[c] - xhat[[r, c]] * sum_dx[c]);
                    }
                    self.accumulate(grads, *input, dx);
                }
            }
            Op::SmoothL1 { pred, target, beta } => {
                let p = self.value(*pred);
                let count = p.len() as f64;
                let scale = g[[0, 0]] / count;
                let mut d = p - target;
                d.mapv_inplace(|e| {
                    let local = if e.abs() < *beta { e / beta } else { e.signum() };
                    local * scale
                });
                self.accumulate(grads, *pred, d);
            }
        }
    }
}
