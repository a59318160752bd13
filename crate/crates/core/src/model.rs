//! The full predictor: spatial embedding per slot, recurrent encoding of the
//! four history slices, batch-normalized fusion and the tuned transferring
//! heads. Baseline-only models share the same interface.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{BatchStats, Mat, Tape, Var};
use crate::dataset::Dataset;
use crate::error::{OdpError, Result};
use crate::params::{Bound, ParamStore};
use crate::spatial::{spatial_embed, Aggregation, SpatialConfig, SpatialParams};
use crate::temporal::{CellType, SliceIndices, TemporalConfig, TemporalParams};
use crate::transfer::{ArParams, BaselineSource, HaMode, TransferParams, Tuning};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Bgarn,
    Baseline(BaselineSource),
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Bgarn => "bgarn",
            ModelKind::Baseline(b) => b.name(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bgarn" => Some(ModelKind::Bgarn),
            other => BaselineSource::parse(other).map(ModelKind::Baseline),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub feature_dim: usize,
    /// Grid count the model was built for; 0 accepts any.
    pub grids: usize,
    pub embed_dim: usize,
    pub heads: usize,
    /// History depth `P`.
    pub depth: usize,
    pub aggregation: Aggregation,
    pub cell: CellType,
    pub shared_cell: bool,
    pub tuning: Tuning,
    /// Reference used for tuning.
    pub baseline: BaselineSource,
    pub gated: bool,
    pub residual: bool,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, feature_dim: usize) -> Self {
        ModelConfig {
            kind,
            feature_dim,
            grids: 0,
            embed_dim: 16,
            heads: 3,
            depth: 7,
            aggregation: Aggregation::Average,
            cell: CellType::Lstm,
            shared_cell: true,
            tuning: Tuning::Mult,
            baseline: BaselineSource::Ha(HaMode::Plus),
            gated: true,
            residual: true,
        }
    }

    pub fn spatial(&self) -> SpatialConfig {
        SpatialConfig {
            gated: self.gated,
            residual: self.residual,
            ..SpatialConfig::new(self.feature_dim, self.embed_dim, self.heads, self.aggregation)
        }
    }

    /// Settings that fix the parameter layout and semantics; a checkpoint
    /// only loads into a model whose pairs match.
    pub fn signature(&self) -> Vec<(&'static str, String)> {
        let w = match self.tuning {
            Tuning::WSum(w) => w.to_string(),
            _ => "-".into(),
        };
        vec![
            ("model", self.kind.name().into()),
            ("feature_dim", self.feature_dim.to_string()),
            ("grids", self.grids.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("heads", self.heads.to_string()),
            ("history", self.depth.to_string()),
            ("aggregation", self.aggregation.name().into()),
            ("cell", self.cell.name().into()),
            ("shared_cell", self.shared_cell.to_string()),
            ("tuning", self.tuning.name().into()),
            ("wsum_weight", w),
            ("baseline", self.baseline.name().into()),
            ("gated", self.gated.to_string()),
            ("residual", self.residual.to_string()),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct BgarnNet {
    pub spatial: SpatialParams,
    pub temporal: TemporalParams,
    pub transfer: TransferParams,
    /// Present when the tuning reference is the AR baseline.
    pub ar: Option<ArParams>,
}

#[derive(Debug, Clone)]
pub enum Net {
    Bgarn(Box<BgarnNet>),
    Ar(ArParams),
    Ha(HaMode),
}

/// Tape handles of one batch forward pass. Rows are stacked sample by
/// sample: demand is `(B·n) × 1`, OD is `(B·n) × n`.
#[derive(Debug)]
pub struct Forward {
    pub demand: Var,
    pub od: Var,
    /// The AR reference's own predictions, trained alongside the network.
    pub reference: Option<(Var, Var)>,
    pub bn: Option<BatchStats>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    pub net: Net,
}

impl Model {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        if cfg.depth == 0 {
            return Err(OdpError::config("history depth must be at least 1"));
        }
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = match cfg.kind {
            ModelKind::Baseline(BaselineSource::Ha(mode)) => Net::Ha(mode),
            ModelKind::Baseline(BaselineSource::Ar) => Net::Ar(ArParams::init(cfg.depth, &mut store)),
            ModelKind::Bgarn => {
                if cfg.embed_dim == 0 || cfg.heads == 0 || cfg.feature_dim == 0 {
                    return Err(OdpError::config("embed_dim, heads and feature width must be positive"));
                }
                let spatial = SpatialParams::init(cfg.spatial(), &mut store, &mut rng);
                let temporal = TemporalParams::init(
                    TemporalConfig {
                        dim: spatial.output_dim(),
                        cell: cfg.cell,
                        shared: cfg.shared_cell,
                        aggregation: cfg.aggregation,
                    },
                    &mut store,
                    &mut rng,
                );
                let transfer = TransferParams::init(temporal.output_dim(), cfg.embed_dim, cfg.tuning, &mut store, &mut rng);
                let ar = (cfg.baseline == BaselineSource::Ar).then(|| ArParams::init(cfg.depth, &mut store));
                Net::Bgarn(Box::new(BgarnNet {
                    spatial,
                    temporal,
                    transfer,
                    ar,
                }))
            }
        };
        Ok(Model { cfg, store, net })
    }

    pub fn is_trainable(&self) -> bool {
        !matches!(self.net, Net::Ha(_))
    }

    /// Stacked ground truth for observed targets.
    pub fn batch_truth(data: &Dataset, targets: &[usize]) -> Result<(Mat, Mat)> {
        let n = data.n;
        let mut d = Mat::zeros((targets.len() * n, 1));
        let mut g = Mat::zeros((targets.len() * n, n));
        for (b, &t) in targets.iter().enumerate() {
            if t == 0 || t > data.slots() {
                return Err(OdpError::InvalidTarget(format!("target {t} has no ground truth")));
            }
            d.slice_mut(ndarray::s![b * n..(b + 1) * n, ..]).assign(data.demand(t));
            for (i, j, c) in data.graph(t).iter() {
                g[[b * n + i, j]] = c as f64;
            }
        }
        Ok((d, g))
    }

    fn ar_forward(tape: &mut Tape, bound: &Bound, ar: &ArParams, data: &Dataset, idx: &[SliceIndices]) -> (Var, Var) {
        let unions: Vec<Vec<usize>> = idx.iter().map(|i| i.union()).collect();
        let n = data.n;
        let positions = 4 * ar.depth;
        let mut dv = Vec::with_capacity(positions);
        let mut gv = Vec::with_capacity(positions);
        for k in 0..positions {
            let mut d = Mat::zeros((unions.len() * n, 1));
            let mut g = Mat::zeros((unions.len() * n, n));
            for (b, u) in unions.iter().enumerate() {
                d.slice_mut(ndarray::s![b * n..(b + 1) * n, ..]).assign(data.demand(u[k]));
                for (i, j, c) in data.graph(u[k]).iter() {
                    g[[b * n + i, j]] = c as f64;
                }
            }
            dv.push(tape.constant(d));
            gv.push(tape.constant(g));
        }
        (ar.forward(tape, bound, &dv), ar.forward(tape, bound, &gv))
    }

    /// Batch forward pass. `training` selects batch statistics in the
    /// normalization layer.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, data: &Dataset, targets: &[usize], training: bool) -> Result<Forward> {
        if targets.is_empty() {
            return Err(OdpError::Shape("empty batch".into()));
        }
        let p = self.cfg.depth;
        let idx = targets
            .iter()
            .map(|&t| data.slices(t, p))
            .collect::<Result<Vec<_>>>()?;
        let n = data.n;
        if self.cfg.grids != 0 && self.cfg.grids != n {
            return Err(OdpError::Incompatible(format!(
                "model was built for {} grids, data has {n}",
                self.cfg.grids
            )));
        }
        match &self.net {
            Net::Ha(mode) => {
                let (d, g) = self.stacked_ha(data, targets, *mode)?;
                Ok(Forward {
                    demand: tape.constant(d),
                    od: tape.constant(g),
                    reference: None,
                    bn: None,
                })
            }
            Net::Ar(ar) => {
                let (demand, od) = Self::ar_forward(tape, bound, ar, data, &idx);
                Ok(Forward {
                    demand,
                    od,
                    reference: None,
                    bn: None,
                })
            }
            Net::Bgarn(net) => {
                if !data.has_neighborhoods() {
                    return Err(OdpError::Shape("dataset was built without neighborhoods".into()));
                }
                if data.feature_dim() != self.cfg.feature_dim {
                    return Err(OdpError::Incompatible(format!(
                        "model expects {} features per grid, workspace has {}",
                        self.cfg.feature_dim,
                        data.feature_dim()
                    )));
                }
                let mut emb: BTreeMap<usize, Var> = BTreeMap::new();
                for i in &idx {
                    for s in i.union() {
                        if let std::collections::btree_map::Entry::Vacant(e) = emb.entry(s) {
                            let v = tape.constant(data.features(s).clone());
                            e.insert(spatial_embed(tape, bound, &net.spatial, v, data.neighborhoods(s)));
                        }
                    }
                }
                let slices: [Vec<Var>; 4] = std::array::from_fn(|s| {
                    (0..p)
                        .map(|k| {
                            let rows: Vec<Var> = idx.iter().map(|i| emb[&i.all()[s][k]]).collect();
                            if rows.len() == 1 {
                                rows[0]
                            } else {
                                tape.concat_rows(&rows)
                            }
                        })
                        .collect()
                });
                let enc = net.temporal.encode_slices(tape, bound, &slices);
                let (fused, bn) = net.temporal.fuse(tape, bound, &enc, training);

                let (d_ref, g_ref, reference) = match (&net.ar, self.cfg.baseline) {
                    (Some(ar), _) => {
                        let (d, g) = Self::ar_forward(tape, bound, ar, data, &idx);
                        let dr = tape.value(d).mapv(|v| v.max(0.0));
                        let gr = tape.value(g).mapv(|v| v.max(0.0));
                        (dr, gr, Some((d, g)))
                    }
                    (None, BaselineSource::Ha(mode)) => {
                        let (d, g) = self.stacked_ha(data, targets, mode)?;
                        (d, g, None)
                    }
                    (None, BaselineSource::Ar) => unreachable!("AR reference without AR parameters"),
                };
                let d_ref = tape.constant(d_ref);
                let demand = net.transfer.demand_head(tape, bound, fused, d_ref);
                let (s1, s2) = net.transfer.od.half_scores(tape, bound, fused, fused);
                let mut ods = Vec::with_capacity(targets.len());
                for b in 0..targets.len() {
                    let (a, c) = if targets.len() == 1 {
                        (s1, s2)
                    } else {
                        (tape.slice_rows(s1, b * n, n), tape.slice_rows(s2, b * n, n))
                    };
                    let r = tape.constant(g_ref.slice(ndarray::s![b * n..(b + 1) * n, ..]).to_owned());
                    ods.push(net.transfer.od_from_scores(tape, bound, a, c, r));
                }
                let od = if ods.len() == 1 { ods[0] } else { tape.concat_rows(&ods) };
                Ok(Forward {
                    demand,
                    od,
                    reference,
                    bn,
                })
            }
        }
    }

    fn stacked_ha(&self, data: &Dataset, targets: &[usize], mode: HaMode) -> Result<(Mat, Mat)> {
        let n = data.n;
        let mut d = Mat::zeros((targets.len() * n, 1));
        let mut g = Mat::zeros((targets.len() * n, n));
        for (b, &t) in targets.iter().enumerate() {
            let (dd, gg) = data.ha_reference(t, self.cfg.depth, mode)?;
            d.slice_mut(ndarray::s![b * n..(b + 1) * n, ..]).assign(&dd);
            g.slice_mut(ndarray::s![b * n..(b + 1) * n, ..]).assign(&gg);
        }
        Ok((d, g))
    }

    /// `η_d · L_d + η_o · L_o`, plus the same combination for an AR
    /// reference's own predictions.
    pub fn loss(tape: &mut Tape, fwd: &Forward, truth: &(Mat, Mat), eta_d: f64, eta_o: f64, beta: f64) -> Var {
        let combined = |tape: &mut Tape, d: Var, g: Var| {
            let ld = tape.smooth_l1(d, &truth.0, beta);
            let lo = tape.smooth_l1(g, &truth.1, beta);
            let ld = tape.scale(ld, eta_d);
            let lo = tape.scale(lo, eta_o);
            tape.add(ld, lo)
        };
        let main = combined(tape, fwd.demand, fwd.od);
        match fwd.reference {
            Some((d, g)) => {
                let aux = combined(tape, d, g);
                tape.add(main, aux)
            }
            None => main,
        }
    }

    /// Unclamped evaluation-mode predictions `(demand n×1, OD n×n)` for
    /// each target.
    pub fn predict_batch(&self, data: &Dataset, targets: &[usize]) -> Result<Vec<(Mat, Mat)>> {
        let mut tape = Tape::new();
        let bound = self.store.bind(&mut tape);
        let fwd = self.forward(&mut tape, &bound, data, targets, false)?;
        let n = data.n;
        let (d, g) = (tape.value(fwd.demand), tape.value(fwd.od));
        Ok((0..targets.len())
            .map(|b| {
                (
                    d.slice(ndarray::s![b * n..(b + 1) * n, ..]).to_owned(),
                    g.slice(ndarray::s![b * n..(b + 1) * n, ..]).to_owned(),
                )
            })
            .collect())
    }

    pub fn predict(&self, data: &Dataset, target: usize) -> Result<(Mat, Mat)> {
        Ok(self.predict_batch(data, &[target])?.pop().expect("one target"))
    }
}
