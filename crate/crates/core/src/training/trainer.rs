//! Mini-batch training with Adam and global-norm clipping, and evaluation.

use std::fmt::Write as _;
use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::{MetricAccumulator, MetricRow, MetricsReport, Task};
use super::samples::Split;
use crate::autodiff::Tape;
use crate::dataset::Dataset;
use crate::error::{OdpError, Result};
use crate::model::{Model, Net};
use crate::params::{clip_global_norm, Adam};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub lr: f64,
    pub eta_d: f64,
    pub eta_o: f64,
    pub smooth_l1_beta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 32,
            clip_norm: 10.0,
            lr: 1e-3,
            eta_d: 0.8,
            eta_o: 0.2,
            smooth_l1_beta: 1.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    /// 0 when the initial parameters were never improved on.
    pub best_epoch: usize,
    pub best_loss: f64,
    /// Mean training wall time per sample, seconds.
    pub ttps: f64,
    /// Global gradient norm after clipping, one entry per step.
    pub grad_norms: Vec<f64>,
}

impl TrainReport {
    pub fn render_log(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,wall_seconds\n");
        for e in &self.epochs {
            let val = e.val_loss.map_or("NaN".to_string(), |v| v.to_string());
            writeln!(out, "{},{},{},{:.3}", e.epoch, e.train_loss, val, e.wall_seconds).expect("write to string");
        }
        out
    }
}

/// Mean combined loss over `targets` in evaluation mode; `None` when there
/// are no targets.
pub fn validation_loss(model: &Model, data: &Dataset, targets: &[usize], cfg: &TrainConfig) -> Result<Option<f64>> {
    if targets.is_empty() {
        return Ok(None);
    }
    let mut total = 0.0;
    for chunk in targets.chunks(cfg.batch_size.max(1)) {
        let mut tape = Tape::new();
        let bound = model.store.bind(&mut tape);
        let fwd = model.forward(&mut tape, &bound, data, chunk, false)?;
        let truth = Model::batch_truth(data, chunk)?;
        let loss = Model::loss(&mut tape, &fwd, &truth, cfg.eta_d, cfg.eta_o, cfg.smooth_l1_beta);
        total += tape.scalar(loss) * chunk.len() as f64;
    }
    Ok(Some(total / targets.len() as f64))
}

/// Trains on `split.train` and keeps the parameters with the lowest
/// validation loss (training loss when there is no validation split).
pub fn train(model: &mut Model, data: &Dataset, split: &Split, cfg: &TrainConfig) -> Result<TrainReport> {
    if !model.is_trainable() {
        return Err(OdpError::config(format!(
            "model {} has no trainable parameters",
            model.cfg.kind.name()
        )));
    }
    if split.train.is_empty() {
        return Err(OdpError::config("training split is empty; more history is needed"));
    }
    if cfg.batch_size == 0 {
        return Err(OdpError::config("batch_size must be positive"));
    }
    let mut opt = Adam::new(cfg.lr);
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: 0,
        best_loss: f64::INFINITY,
        ttps: 0.0,
        grad_norms: Vec::new(),
    };
    if let Some(v) = validation_loss(model, data, &split.val, cfg)? {
        report.best_loss = v;
    }
    let mut best = model.store.clone();
    let mut train_seconds = 0.0;
    let mut order = split.train.clone();
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut tape = Tape::new();
            let bound = model.store.bind(&mut tape);
            let fwd = model.forward(&mut tape, &bound, data, batch, true)?;
            let truth = Model::batch_truth(data, batch)?;
            let loss = Model::loss(&mut tape, &fwd, &truth, cfg.eta_d, cfg.eta_o, cfg.smooth_l1_beta);
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(OdpError::Diverged(format!(
                    "non-finite training loss {value} at epoch {epoch}, batch {b}"
                )));
            }
            total += value * batch.len() as f64;
            let mut grads = bound.collect(&tape.backward(loss));
            report.grad_norms.push(clip_global_norm(&mut grads, cfg.clip_norm));
            opt.step(&mut model.store, &grads);
            if let (Some(stats), Net::Bgarn(net)) = (&fwd.bn, &model.net) {
                net.temporal.update_running(&mut model.store, stats);
            }
        }
        let train_loss = total / order.len() as f64;
        train_seconds += start.elapsed().as_secs_f64();
        let val_loss = validation_loss(model, data, &split.val, cfg)?;
        let wall_seconds = start.elapsed().as_secs_f64();
        let score = val_loss.unwrap_or(train_loss);
        if score < report.best_loss {
            report.best_loss = score;
            report.best_epoch = epoch;
            best = model.store.clone();
        }
        info!(
            "epoch {epoch}: train {train_loss:.6} val {} ({wall_seconds:.2}s)",
            val_loss.map_or("-".into(), |v| format!("{v:.6}"))
        );
        report.epochs.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            wall_seconds,
        });
    }
    model.store = best;
    if cfg.epochs > 0 {
        report.ttps = train_seconds / (cfg.epochs * order.len()) as f64;
    }
    Ok(report)
}

/// Thresholded metrics of clamped predictions over `targets`.
pub fn evaluate(model: &Model, data: &Dataset, targets: &[usize], thresholds: &[f64], batch_size: usize) -> Result<MetricsReport> {
    let mut demand: Vec<MetricAccumulator> = thresholds.iter().map(|&t| MetricAccumulator::new(t)).collect();
    let mut od = demand.clone();
    for chunk in targets.chunks(batch_size.max(1)) {
        let preds = model.predict_batch(data, chunk)?;
        for (&t, (d, g)) in chunk.iter().zip(preds) {
            let (d_true, g_true) = data.truth(t)?;
            let d = d.mapv(|v| v.max(0.0));
            let g = g.mapv(|v| v.max(0.0));
            for acc in &mut demand {
                acc.extend(&d, &d_true);
            }
            for acc in &mut od {
                acc.extend(&g, &g_true);
            }
        }
    }
    let rows = [(Task::Demand, demand), (Task::Od, od)]
        .into_iter()
        .flat_map(|(task, accs)| {
            accs.into_iter().map(move |a| MetricRow {
                task,
                threshold: a.threshold,
                metrics: a.finish(),
            })
        })
        .collect();
    Ok(MetricsReport {
        rows,
        samples: targets.len(),
    })
}
