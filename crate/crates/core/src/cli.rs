//! Command implementations behind the `odp` binary.
//!
//! | command   | reads                       | writes                                              |
//! |-----------|-----------------------------|-----------------------------------------------------|
//! | `synth`   | config                      | `data`, `<data>.config.txt`                         |
//! | `prep`    | `data`                      | `workspace/` (manifest, OD, features, `config.txt`) |
//! | `train`   | `workspace/`                | `out/checkpoint.txt`, `train_log.csv`, `train_summary.txt` |
//! | `eval`    | `workspace/`, checkpoint    | `out/metrics.csv`                                   |
//! | `predict` | `workspace/`, checkpoint    | `out/demand.txt`, `out/od.txt`                      |
//!
//! Every output directory also receives the resolved configuration.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDateTime, Timelike};
use log::{info, warn};

use crate::config::RunConfig;
use crate::dataset::Dataset;
use crate::error::{OdpError, Result};
use crate::model::{Model, ModelKind};
use crate::preprocess::od::slot_of;
use crate::preprocess::trips::write_trips;
use crate::preprocess::workspace::write_file;
use crate::preprocess::{parse_trips, Workspace};
use crate::synth::SyntheticSpec;
use crate::training::{evaluate, split_targets, train, Checkpoint, MetricsReport, TrainReport};
use crate::transfer::BaselineSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Prep,
    Synth,
    Train,
    Eval,
    Predict,
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::Prep => run_prep(cfg).map(|_| ()),
        Command::Synth => run_synth(cfg).map(|_| ()),
        Command::Train => run_train(cfg).map(|_| ()),
        Command::Eval => run_eval(cfg).map(|_| ()),
        Command::Predict => run_predict(cfg).map(|_| ()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| OdpError::io(dir, e))
}

fn echo_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    write_file(&dir.join("config.txt"), &cfg.render())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

/// Writes the synthetic trip file; returns the request count.
pub fn run_synth(cfg: &RunConfig) -> Result<usize> {
    let spec = SyntheticSpec::from_config(cfg)?;
    let reqs = spec.generate();
    let path = cfg.path("data");
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let file = File::create(&path).map_err(|e| OdpError::io(&path, e))?;
    write_trips(BufWriter::new(file), &reqs, &cfg.trip_format()?)?;
    write_file(&sibling(&path, ".config.txt"), &cfg.render())?;
    info!("wrote {} synthetic requests over {} slots to {}", reqs.len(), spec.slots(), path.display());
    Ok(reqs.len())
}

/// Midnight on or before `t`.
fn day_start(t: NaiveDateTime) -> NaiveDateTime {
    t - Duration::seconds(i64::from(t.num_seconds_from_midnight())) - Duration::nanoseconds(i64::from(t.nanosecond()))
}

/// Builds and writes the workspace.
pub fn run_prep(cfg: &RunConfig) -> Result<Workspace> {
    let spec = cfg.grid_spec()?;
    let path = cfg.path("data");
    let file = File::open(&path).map_err(|e| OdpError::io(&path, e))?;
    let parsed = parse_trips(BufReader::new(file), &cfg.trip_format()?, &path.display().to_string())?;
    if parsed.skipped > 0 {
        warn!("skipped {} malformed rows in {}", parsed.skipped, path.display());
    }
    let reqs = parsed.requests;
    let first = reqs.iter().map(|r| r.time).min();
    let start = match (cfg.start_time()?, first) {
        (Some(s), _) => s,
        (None, Some(t)) => day_start(t),
        (None, None) => return Err(OdpError::config("empty trip file: set start_time and slots explicitly")),
    };
    let slots = match cfg.slots()? {
        0 => {
            let last = reqs
                .iter()
                .filter_map(|r| slot_of(r.time, start, spec.slot_hours))
                .max()
                .ok_or_else(|| OdpError::config("no trips after start_time: set slots explicitly"))?;
            last
        }
        s => s,
    };
    if reqs.is_empty() {
        warn!("{} holds no trips; writing {slots} empty slots", path.display());
    }
    let ws = Workspace::build(&reqs, &spec, start, slots, parsed.skipped)?;
    if ws.manifest.dropped > 0 {
        warn!("dropped {} requests outside the grid or slot window", ws.manifest.dropped);
    }
    let dir = cfg.path("workspace");
    ws.write(&dir)?;
    echo_config(&dir, cfg)?;
    info!("workspace {}: {} grids, {} slots", dir.display(), ws.n(), ws.slots());
    Ok(ws)
}

/// Loads the workspace and builds a freshly initialized model for it.
pub fn load_context(cfg: &RunConfig) -> Result<(Dataset, Model)> {
    let ws = Workspace::load(&cfg.path("workspace"))?;
    let kind = cfg.model_kind()?;
    let model_cfg = cfg.model_config(ws.manifest.feature_dim(), ws.n())?;
    let needs_graphs = kind == ModelKind::Bgarn;
    let data = Dataset::from_workspace(&ws, cfg.geo_threshold_km()?, cfg.epsilon()?, needs_graphs);
    let model = Model::new(model_cfg, cfg.seed()?)?;
    Ok((data, model))
}

/// Loads the workspace and the model with its checkpoint parameters.
pub fn load_trained(cfg: &RunConfig) -> Result<(Dataset, Model)> {
    let (data, mut model) = load_context(cfg)?;
    load_checkpoint(cfg, &mut model)?;
    Ok((data, model))
}

fn load_checkpoint(cfg: &RunConfig, model: &mut Model) -> Result<()> {
    let path = cfg.checkpoint_path();
    if matches!(model.cfg.kind, ModelKind::Baseline(BaselineSource::Ha(_))) && !path.exists() {
        return Ok(());
    }
    Checkpoint::read(&path)?.load_into(model)
}

pub struct TrainOutcome {
    pub report: Option<TrainReport>,
    pub model: Model,
}

/// Trains (baselines without parameters skip the loop) and writes the
/// checkpoint, epoch log and summary.
pub fn run_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let (data, mut model) = load_context(cfg)?;
    let split = split_targets(data.slots(), data.l, model.cfg.depth, cfg.split()?)?;
    let tcfg = cfg.train_config()?;
    let out = cfg.path("out");
    create_dir(&out)?;
    echo_config(&out, cfg)?;
    let report = if model.is_trainable() {
        Some(train(&mut model, &data, &split, &tcfg)?)
    } else {
        info!("{} has no parameters; writing an empty checkpoint", model.cfg.kind.name());
        None
    };
    let ck_path = cfg.checkpoint_path();
    if let Some(parent) = ck_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    Checkpoint::from_model(&model, tcfg.seed, cfg.pairs()).write(&ck_path)?;
    let log = report.as_ref().map_or_else(|| "epoch,train_loss,val_loss,wall_seconds\n".to_string(), |r| r.render_log());
    write_file(&out.join("train_log.csv"), &log)?;
    let summary = match &report {
        Some(r) => format!(
            "train_samples={}\nval_samples={}\ntest_samples={}\nbest_epoch={}\nbest_loss={}\nttps_seconds={}\nmax_grad_norm={}\n",
            split.train.len(),
            split.val.len(),
            split.test.len(),
            r.best_epoch,
            r.best_loss,
            r.ttps,
            r.grad_norms.iter().cloned().fold(0.0, f64::max)
        ),
        None => format!(
            "train_samples={}\nval_samples={}\ntest_samples={}\n",
            split.train.len(),
            split.val.len(),
            split.test.len()
        ),
    };
    write_file(&out.join("train_summary.txt"), &summary)?;
    Ok(TrainOutcome { report, model })
}

/// Evaluates the configured split and writes `metrics.csv`.
pub fn run_eval(cfg: &RunConfig) -> Result<MetricsReport> {
    let (data, model) = load_trained(cfg)?;
    let split = split_targets(data.slots(), data.l, model.cfg.depth, cfg.split()?)?;
    let targets = match cfg.get("eval_split") {
        "train" => &split.train,
        "val" => &split.val,
        _ => &split.test,
    };
    if targets.is_empty() {
        warn!("the {} split is empty", cfg.get("eval_split"));
    }
    let report = evaluate(&model, &data, targets, &cfg.thresholds()?, cfg.train_config()?.batch_size)?;
    let out = cfg.path("out");
    create_dir(&out)?;
    echo_config(&out, cfg)?;
    report.write(&out.join("metrics.csv"))?;
    Ok(report)
}

/// Clamped prediction for the configured target; writes `demand.txt`
/// ("grid value") and `od.txt` ("i j value").
pub fn run_predict(cfg: &RunConfig) -> Result<(usize, crate::autodiff::Mat, crate::autodiff::Mat)> {
    let (data, model) = load_trained(cfg)?;
    let target = match cfg.target()? {
        0 => data.slots() + 1,
        t => t,
    };
    let (d, g) = model.predict(&data, target)?;
    let d = d.mapv(|v| v.max(0.0));
    let g = g.mapv(|v| v.max(0.0));
    let out = cfg.path("out");
    create_dir(&out)?;
    echo_config(&out, cfg)?;
    let demand: String = d.iter().enumerate().map(|(i, v)| format!("{i} {v}\n")).collect();
    let od: String = g.indexed_iter().map(|((i, j), v)| format!("{i} {j} {v}\n")).collect();
    write_file(&out.join("demand.txt"), &demand)?;
    write_file(&out.join("od.txt"), &od)?;
    info!("predicted slot {target} into {}", out.display());
    Ok((target, d, g))
}
