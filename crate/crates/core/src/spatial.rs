//! Gated multi-head spatial attention.
//!
//! For each slot and each neighborhood view, `K` attention heads score
//! neighbor pairs with an AttentionNet, softmax the scores over the
//! neighborhood and average the projected neighbor features. A per-view gate
//! network (max and mean pooling over pre-weighted neighbors) produces one
//! sigmoid gate per head. Every head output is the projected grid feature
//! plus its gated attention sum; heads are then averaged or concatenated and
//! the three view blocks are concatenated after the projected grid feature:
//!
//! ```text
//! m_i = Ws·v_i ⊕ ∥_k (Ws·v_i + ω_k · Σ_j α_ij Ws·v_j)   for each of the 3 views
//! ```

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Mat, Tape, Var};
use crate::error::{OdpError, Result};
use crate::neighborhoods::{NeighborKind, NeighborView, SlotNeighborhoods};
use crate::params::{Bound, ParamId, ParamStore};

pub const LEAKY_SLOPE: f64 = 0.01;

/// How parallel blocks (attention heads, temporal slices) are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    Average,
    Concat,
}

impl Aggregation {
    pub fn name(self) -> &'static str {
        match self {
            Aggregation::Average => "average",
            Aggregation::Concat => "concat",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "average" | "mean" => Some(Aggregation::Average),
            "concat" => Some(Aggregation::Concat),
            _ => None,
        }
    }

    pub fn apply(self, tape: &mut Tape, parts: &[Var]) -> Var {
        match self {
            Aggregation::Average => tape.mean(parts),
            Aggregation::Concat => tape.concat_cols(parts),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialConfig {
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub aggregation: Aggregation,
    /// Apply sigmoid gates to the heads. Off only for the single-head
    /// reference configuration.
    pub gated: bool,
    /// Add `Ws·v_i` inside every head.
    pub residual: bool,
}

impl SpatialConfig {
    pub fn new(feature_dim: usize, embed_dim: usize, heads: usize, aggregation: Aggregation) -> Self {
        SpatialConfig {
            feature_dim,
            embed_dim,
            heads,
            aggregation,
            gated: true,
            residual: true,
        }
    }

    /// Width of the embedding matrix.
    pub fn output_dim(&self) -> usize {
        match self.aggregation {
            Aggregation::Average => 4 * self.embed_dim,
            Aggregation::Concat => (3 * self.heads + 1) * self.embed_dim,
        }
    }
}

/// One AttentionNet: a shared projection followed by a LeakyReLU FC over
/// the concatenated projected pair.
#[derive(Debug, Clone)]
pub struct AttentionHead {
    /// `d_f × d_e`
    pub proj: ParamId,
    /// `2·d_e × 1`; the first half scores the grid, the second its neighbor.
    pub fc_w: ParamId,
    pub fc_b: ParamId,
}

impl AttentionHead {
    pub fn init(store: &mut ParamStore, prefix: &str, in_dim: usize, embed_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        AttentionHead {
            proj: store.add_uniform(format!("{prefix}.proj"), in_dim, embed_dim, in_dim, rng),
            fc_w: store.add_uniform(format!("{prefix}.fc_w"), 2 * embed_dim, 1, 2 * embed_dim, rng),
            fc_b: store.add_uniform(format!("{prefix}.fc_b"), 1, 1, 2 * embed_dim, rng),
        }
    }

    /// Per-row halves of the FC score: `(left·W·u1, right·W·u2)`.
    pub fn half_scores(&self, tape: &mut Tape, bound: &Bound, left: Var, right: Var) -> (Var, Var) {
        let d_e = tape.value(bound[self.proj]).ncols();
        let u1 = tape.slice_rows(bound[self.fc_w], 0, d_e);
        let u2 = tape.slice_rows(bound[self.fc_w], d_e, d_e);
        let pl = tape.matmul(left, bound[self.proj]);
        let s1 = tape.matmul(pl, u1);
        let s2 = if left == right {
            tape.matmul(pl, u2)
        } else {
            let pr = tape.matmul(right, bound[self.proj]);
            tape.matmul(pr, u2)
        };
        (s1, s2)
    }

    /// Row-wise AttentionNet score of `(left[r], right[r])` pairs, `r × 1`.
    pub fn score_rows(&self, tape: &mut Tape, bound: &Bound, left: Var, right: Var) -> Var {
        let (s1, s2) = self.half_scores(tape, bound, left, right);
        let z = tape.add(s1, s2);
        let z = tape.add_bcast(z, bound[self.fc_b]);
        tape.leaky_relu(z, LEAKY_SLOPE)
    }
}

#[derive(Debug, Clone)]
pub struct GateParams {
    /// `d_f × d_e`, projects pre-weighted neighbors before max pooling.
    pub proj: ParamId,
    /// `(2·d_f + d_e) × K`
    pub fc_w: ParamId,
    pub fc_b: ParamId,
}

#[derive(Debug, Clone)]
pub struct SpatialParams {
    pub cfg: SpatialConfig,
    pub w_s: ParamId,
    /// Indexed `[view][head]`, views in [`NeighborKind::ALL`] order.
    pub heads: Vec<Vec<AttentionHead>>,
    pub gates: Vec<GateParams>,
}

impl SpatialParams {
    pub fn init(cfg: SpatialConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        assert!(cfg.heads >= 1 && cfg.embed_dim >= 1 && cfg.feature_dim >= 1);
        let (d_f, d_e, k) = (cfg.feature_dim, cfg.embed_dim, cfg.heads);
        let w_s = store.add_uniform("spatial.w_s", d_f, d_e, d_f, rng);
        let mut heads = Vec::new();
        let mut gates = Vec::new();
        for kind in NeighborKind::ALL {
            let name = kind.name();
            heads.push(
                (0..k)
                    .map(|h| AttentionHead::init(store, &format!("spatial.{name}.head{h}"), d_f, d_e, rng))
                    .collect(),
            );
            let gate_in = 2 * d_f + d_e;
            gates.push(GateParams {
                proj: store.add_uniform(format!("spatial.{name}.gate.proj"), d_f, d_e, d_f, rng),
                fc_w: store.add_uniform(format!("spatial.{name}.gate.fc_w"), gate_in, k, gate_in, rng),
                fc_b: store.add_uniform(format!("spatial.{name}.gate.fc_b"), 1, k, gate_in, rng),
            });
        }
        SpatialParams {
            cfg,
            w_s,
            heads,
            gates,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.cfg.output_dim()
    }
}

fn view_index(kind: NeighborKind) -> usize {
    match kind {
        NeighborKind::Forward => 0,
        NeighborKind::Backward => 1,
        NeighborKind::Geographical => 2,
    }
}

/// Softmax attention sum over one view: `Σ_j α_ij values[j]`.
pub fn attend(
    tape: &mut Tape,
    bound: &Bound,
    head: &AttentionHead,
    features: Var,
    values: Var,
    view: &Arc<NeighborView>,
) -> Var {
    let (s1, s2) = head.half_scores(tape, bound, features, features);
    tape.edge_attention(s1, s2, bound[head.fc_b], values, view, LEAKY_SLOPE)
}

/// Gates for one view, `n × K`, each in (0, 1).
pub fn gates(tape: &mut Tape, bound: &Bound, gate: &GateParams, features: Var, view: &Arc<NeighborView>) -> Var {
    let projected = tape.matmul(features, bound[gate.proj]);
    let max_pool = tape.edge_max_pool(projected, view);
    let mean_pool = tape.edge_mean_pool(features, view);
    let input = tape.concat_cols(&[features, max_pool, mean_pool]);
    let z = tape.matmul(input, bound[gate.fc_w]);
    let z = tape.add_bcast(z, bound[gate.fc_b]);
    tape.sigmoid(z)
}

/// Embedding matrix `M_t` (n × D) for one slot.
pub fn spatial_embed(
    tape: &mut Tape,
    bound: &Bound,
    params: &SpatialParams,
    features: Var,
    nbh: &SlotNeighborhoods,
) -> Var {
    let cfg = &params.cfg;
    assert_eq!(
        tape.value(features).ncols(),
        cfg.feature_dim,
        "feature width disagrees with the spatial config"
    );
    let own = tape.matmul(features, bound[params.w_s]);
    let mut blocks = vec![own];
    for kind in NeighborKind::ALL {
        let v = view_index(kind);
        let view = nbh.get(kind);
        let gate = cfg
            .gated
            .then(|| gates(tape, bound, &params.gates[v], features, view));
        let mut heads = Vec::with_capacity(cfg.heads);
        for (k, head) in params.heads[v].iter().enumerate() {
            let mut out = attend(tape, bound, head, features, own, view);
            if let Some(g) = gate {
                let gk = tape.slice_cols(g, k, 1);
                out = tape.mul_bcast(out, gk);
            }
            if cfg.residual {
                out = tape.add(own, out);
            }
            heads.push(out);
        }
        blocks.push(cfg.aggregation.apply(tape, &heads));
    }
    tape.concat_cols(&blocks)
}

/// Scalar AttentionNet score of the pair `(v_i, v_j)`.
pub fn attention_net(store: &ParamStore, head: &AttentionHead, v_i: &[f64], v_j: &[f64]) -> f64 {
    assert_eq!(v_i.len(), v_j.len(), "attention_net: dimension mismatch");
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let left = tape.constant(Mat::from_shape_vec((1, v_i.len()), v_i.to_vec()).expect("row"));
    let right = tape.constant(Mat::from_shape_vec((1, v_j.len()), v_j.to_vec()).expect("row"));
    let s = head.score_rows(&mut tape, &bound, left, right);
    tape.scalar(s)
}

/// Attention weights of every neighbor pair, as an `n × n` matrix that is
/// zero outside the view. Rows of grids with neighbors sum to 1.
pub fn attention_weights(store: &ParamStore, head: &AttentionHead, features: &Mat, view: &Arc<NeighborView>) -> Mat {
    let n = features.nrows();
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let v = tape.constant(features.clone());
    // Attending over the identity returns the weight rows themselves.
    let eye = tape.constant(Mat::eye(n));
    let out = attend(&mut tape, &bound, head, v, eye, view);
    tape.value(out).clone()
}

pub fn compute_gates(store: &ParamStore, gate: &GateParams, features: &Mat, view: &Arc<NeighborView>) -> Mat {
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let v = tape.constant(features.clone());
    let g = gates(&mut tape, &bound, gate, v, view);
    tape.value(g).clone()
}

/// Embeddings for a sequence of slots with shared parameters.
pub fn embed_sequence(
    store: &ParamStore,
    params: &SpatialParams,
    features: &[Mat],
    neighborhoods: &[SlotNeighborhoods],
) -> Result<Vec<Mat>> {
    if features.len() != neighborhoods.len() {
        return Err(OdpError::Shape(format!(
            "{} feature matrices but {} neighborhood sets",
            features.len(),
            neighborhoods.len()
        )));
    }
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    Ok(features
        .iter()
        .zip(neighborhoods)
        .map(|(f, nbh)| {
            let v = tape.constant(f.clone());
            let m = spatial_embed(&mut tape, &bound, params, v, nbh);
            tape.value(m).clone()
        })
        .collect())
}
