//! Flat `key=value` run configuration.
//!
//! Values are resolved from the built-in defaults, then the config file,
//! then `ODP_<KEY>` environment variables, then `--set key=value`
//! overrides. Unknown keys in a file or override are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDateTime;

use crate::error::{OdpError, Result};
use crate::model::{ModelConfig, ModelKind};
use crate::preprocess::workspace::{parse_key_values, read_file, TIME_FORMAT};
use crate::preprocess::{Bounds, GridSpec, TripFormat};
use crate::spatial::Aggregation;
use crate::temporal::CellType;
use crate::training::TrainConfig;
use crate::transfer::{BaselineSource, Tuning};

/// Every accepted key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("data", "trips.csv", "trip file read by prep and written by synth"),
    ("workspace", "workspace", "preprocessed workspace directory"),
    ("out", "out", "output directory of train, eval and predict"),
    ("checkpoint", "", "checkpoint path; empty means <out>/checkpoint.txt"),
    ("lat_min", "40.5", "southern bound of the grid"),
    ("lat_max", "40.925469", "northern bound of the grid"),
    ("lng_min", "-74.25", "western bound of the grid"),
    ("lng_max", "-73.68198", "eastern bound of the grid"),
    ("rows", "19", "grid rows"),
    ("cols", "19", "grid columns"),
    ("slot_hours", "1", "slot length in hours; must divide 24"),
    ("start_time", "", "first slot start; empty derives midnight before the first trip"),
    ("slots", "0", "number of slots; 0 derives it from the last trip"),
    ("delimiter", ",", "trip file field delimiter"),
    ("col_time", "tpep_pickup_datetime", "pickup time column"),
    ("col_origin_lat", "pickup_latitude", "origin latitude column"),
    ("col_origin_lng", "pickup_longitude", "origin longitude column"),
    ("col_dest_lat", "dropoff_latitude", "destination latitude column"),
    ("col_dest_lng", "dropoff_longitude", "destination longitude column"),
    ("time_format", "%Y-%m-%d %H:%M:%S", "chrono format of the pickup time"),
    ("geo_threshold_km", "3.6", "geographical neighborhood radius"),
    ("epsilon", "1e-8", "smoothing term of the count pre-weights"),
    ("model", "bgarn", "bgarn, ha+, hat, hap or ar"),
    ("embed_dim", "16", "embedding width d_e"),
    ("heads", "3", "attention heads per neighborhood"),
    ("history", "7", "history depth P"),
    ("aggregation", "average", "average or concat, for heads and slices"),
    ("cell", "lstm", "lstm or gru"),
    ("shared_cell", "true", "one recurrent cell for all four slices"),
    ("tuning", "mult", "none, sum, wsum or mult"),
    ("wsum_weight", "0.5", "weight of the deep output under wsum"),
    ("baseline", "ha+", "tuning reference: ha+, hat, hap or ar"),
    ("gated", "true", "sigmoid gates on attention heads"),
    ("residual", "true", "add the projected grid feature inside each head"),
    ("epochs", "200", "training epochs"),
    ("batch_size", "32", "targets per mini-batch"),
    ("clip_norm", "10", "global gradient-norm clip"),
    ("lr", "0.001", "Adam learning rate"),
    ("eta_d", "0.8", "demand loss weight"),
    ("eta_o", "0.2", "OD loss weight"),
    ("smooth_l1_beta", "1", "Smooth-L1 transition point"),
    ("seed", "42", "seed for initialization, batch order and synthesis"),
    ("thresholds", "0,3,5", "metric thresholds on the ground truth"),
    ("split", "0.7,0.1,0.2", "chronological train, validation and test fractions"),
    ("eval_split", "test", "split evaluated by eval: train, val or test"),
    ("target", "0", "slot predicted by predict; 0 means the slot after the last"),
    ("synth_days", "14", "synthetic history length in days"),
    ("synth_intensity", "2", "mean requests per active OD pair per slot"),
    ("synth_density", "0.5", "fraction of OD pairs with nonzero intensity"),
    ("synth_profile", "periodic", "constant, periodic or a comma list of per-slot multipliers"),
    ("synth_noise", "none", "none (exact counts) or poisson"),
    ("synth_hotspots", "", "comma list of origin:destination:factor intensity multipliers"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn is_known(key: &str) -> bool {
    KEYS.iter().any(|(k, _, _)| *k == key)
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    /// Resolves a configuration from all sources.
    pub fn load(file: Option<&Path>, env: impl IntoIterator<Item = (String, String)>, sets: &[String]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = match read_file(path) {
                Ok(t) => t,
                Err(OdpError::Io { source, .. }) => {
                    return Err(OdpError::config(format!("cannot read config {}: {source}", path.display())))
                }
                Err(e) => return Err(e),
            };
            let pairs = parse_key_values(&text, path).map_err(|e| OdpError::config(e.to_string()))?;
            for (k, v) in pairs {
                cfg.set(&k, &v)?;
            }
        }
        for (k, v) in env {
            if let Some(key) = k.strip_prefix("ODP_") {
                let key = key.to_ascii_lowercase();
                if is_known(&key) {
                    cfg.set(&key, &v)?;
                }
            }
        }
        for s in sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| OdpError::config(format!("--set expects key=value, got {s}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !is_known(key) {
            return Err(OdpError::config(format!("unknown configuration key {key}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("unregistered key {key}"))
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key);
        v.parse()
            .map_err(|_| OdpError::config(format!("{key}: cannot parse {v:?}")))
    }

    fn boolean(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            v => Err(OdpError::config(format!("{key}: expected true or false, got {v:?}"))),
        }
    }

    fn list(&self, key: &str) -> Result<Vec<f64>> {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| OdpError::config(format!("{key}: cannot parse {s:?}"))))
            .collect()
    }

    pub fn path(&self, key: &str) -> PathBuf {
        PathBuf::from(self.get(key))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        match self.get("checkpoint") {
            "" => self.path("out").join("checkpoint.txt"),
            p => PathBuf::from(p),
        }
    }

    /// Every key in table order.
    pub fn pairs(&self) -> Vec<(String, String)> {
        KEYS.iter()
            .map(|(k, _, _)| (k.to_string(), self.get(k).to_string()))
            .collect()
    }

    pub fn render(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::build(
            Bounds {
                lat_min: self.parse("lat_min")?,
                lat_max: self.parse("lat_max")?,
                lng_min: self.parse("lng_min")?,
                lng_max: self.parse("lng_max")?,
            },
            self.parse("rows")?,
            self.parse("cols")?,
            self.parse("slot_hours")?,
        )
        .map_err(|e| OdpError::config(e.to_string()))
    }

    pub fn start_time(&self) -> Result<Option<NaiveDateTime>> {
        match self.get("start_time") {
            "" => Ok(None),
            s => NaiveDateTime::parse_from_str(s, TIME_FORMAT)
                .map(Some)
                .map_err(|_| OdpError::config(format!("start_time: expected {TIME_FORMAT}, got {s:?}"))),
        }
    }

    pub fn slots(&self) -> Result<usize> {
        self.parse("slots")
    }

    pub fn trip_format(&self) -> Result<TripFormat> {
        let d = self.get("delimiter");
        let delimiter = match d {
            "\\t" | "tab" => b'\t',
            _ if d.len() == 1 => d.as_bytes()[0],
            _ => return Err(OdpError::config(format!("delimiter must be one byte, got {d:?}"))),
        };
        Ok(TripFormat {
            delimiter,
            pickup_time_col: self.get("col_time").into(),
            o_lat_col: self.get("col_origin_lat").into(),
            o_lng_col: self.get("col_origin_lng").into(),
            d_lat_col: self.get("col_dest_lat").into(),
            d_lng_col: self.get("col_dest_lng").into(),
            time_format: self.get("time_format").into(),
        })
    }

    pub fn geo_threshold_km(&self) -> Result<f64> {
        self.parse("geo_threshold_km")
    }

    pub fn epsilon(&self) -> Result<f64> {
        self.parse("epsilon")
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        let v = self.get("model");
        ModelKind::parse(v).ok_or_else(|| OdpError::config(format!("model: unknown model {v:?}")))
    }

    pub fn model_config(&self, feature_dim: usize, grids: usize) -> Result<ModelConfig> {
        let agg = self.get("aggregation");
        let cell = self.get("cell");
        let tuning = self.get("tuning");
        let baseline = self.get("baseline");
        Ok(ModelConfig {
            kind: self.model_kind()?,
            feature_dim,
            grids,
            embed_dim: self.parse("embed_dim")?,
            heads: self.parse("heads")?,
            depth: self.parse("history")?,
            aggregation: Aggregation::parse(agg).ok_or_else(|| OdpError::config(format!("aggregation: unknown scheme {agg:?}")))?,
            cell: CellType::parse(cell).ok_or_else(|| OdpError::config(format!("cell: unknown cell {cell:?}")))?,
            shared_cell: self.boolean("shared_cell")?,
            tuning: Tuning::parse(tuning, self.parse("wsum_weight")?)
                .ok_or_else(|| OdpError::config(format!("tuning: unknown scheme {tuning:?}")))?,
            baseline: BaselineSource::parse(baseline)
                .ok_or_else(|| OdpError::config(format!("baseline: unknown source {baseline:?}")))?,
            gated: self.boolean("gated")?,
            residual: self.boolean("residual")?,
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            epochs: self.parse("epochs")?,
            batch_size: self.parse("batch_size")?,
            clip_norm: self.parse("clip_norm")?,
            lr: self.parse("lr")?,
            eta_d: self.parse("eta_d")?,
            eta_o: self.parse("eta_o")?,
            smooth_l1_beta: self.parse("smooth_l1_beta")?,
            seed: self.seed()?,
        })
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse("seed")
    }

    pub fn history(&self) -> Result<usize> {
        self.parse("history")
    }

    pub fn thresholds(&self) -> Result<Vec<f64>> {
        self.list("thresholds")
    }

    pub fn split(&self) -> Result<[f64; 3]> {
        let v = self.list("split")?;
        <[f64; 3]>::try_from(v).map_err(|_| OdpError::config("split: expected three fractions"))
    }

    pub fn target(&self) -> Result<usize> {
        self.parse("target")
    }

    /// Type-checks every key and enforces the cross-field invariants.
    pub fn validate(&self) -> Result<()> {
        self.grid_spec()?;
        self.start_time()?;
        self.slots()?;
        self.trip_format()?;
        let cfg = self.model_config(1, 0)?;
        let train = self.train_config()?;
        if cfg.depth == 0 {
            return Err(OdpError::config("history must be at least 1"));
        }
        if cfg.embed_dim == 0 || cfg.heads == 0 {
            return Err(OdpError::config("embed_dim and heads must be positive"));
        }
        if let Tuning::WSum(w) = cfg.tuning {
            if !(0.0..=1.0).contains(&w) {
                return Err(OdpError::config(format!("wsum_weight {w} is outside [0, 1]")));
            }
        }
        if train.eta_d < 0.0 || train.eta_o < 0.0 {
            return Err(OdpError::config("eta_d and eta_o must be nonnegative"));
        }
        if train.batch_size == 0 {
            return Err(OdpError::config("batch_size must be positive"));
        }
        if !(train.clip_norm > 0.0) || !(train.lr > 0.0) || !(train.smooth_l1_beta > 0.0) {
            return Err(OdpError::config("clip_norm, lr and smooth_l1_beta must be positive"));
        }
        if self.thresholds()?.iter().any(|&t| t < 0.0 || t.is_nan()) {
            return Err(OdpError::config("thresholds must be nonnegative"));
        }
        let s = self.split()?;
        if s.iter().any(|f| !(0.0..=1.0).contains(f)) || (s.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(OdpError::config("split fractions must be in [0, 1] and sum to 1"));
        }
        if !matches!(self.get("eval_split"), "train" | "val" | "test") {
            return Err(OdpError::config("eval_split must be train, val or test"));
        }
        if !(self.geo_threshold_km()? >= 0.0) || !(self.epsilon()? > 0.0) {
            return Err(OdpError::config("geo_threshold_km must be nonnegative and epsilon positive"));
        }
        self.target()?;
        Ok(())
    }
}
