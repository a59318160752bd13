//! Text checkpoint: version tag, seed, architecture signature, a config echo
//! and every named parameter (buffers included).
//!
//! ```text
//! odp-checkpoint 1
//! seed 42
//! arch heads=3
//! config epochs=200
//! param spatial.w_s 41 16 1
//! <41 lines of 16 values>
//! ```
//!
//! Values use Rust's shortest round-trip float formatting, so a checkpoint
//! reloads bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::Mat;
use crate::error::{OdpError, Result};
use crate::model::Model;
use crate::params::ParamEntry;
use crate::preprocess::workspace::{read_file, write_file};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "odp-checkpoint";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub arch: Vec<(String, String)>,
    pub config: Vec<(String, String)>,
    pub params: Vec<ParamEntry>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, seed: u64, config: Vec<(String, String)>) -> Self {
        Checkpoint {
            seed,
            arch: model
                .cfg
                .signature()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            config,
            params: model.store.entries().to_vec(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = format!("{MAGIC} {CHECKPOINT_VERSION}\nseed {}\n", self.seed);
        for (k, v) in &self.arch {
            writeln!(out, "arch {k}={v}").expect("write to string");
        }
        for (k, v) in &self.config {
            writeln!(out, "config {k}={v}").expect("write to string");
        }
        for p in &self.params {
            let (r, c) = p.value.dim();
            writeln!(out, "param {} {r} {c} {}", p.name, u8::from(p.trainable)).expect("write to string");
            for row in p.value.rows() {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let bad = |msg: String| OdpError::input(path, msg);
        let mut lines = text.lines().enumerate().peekable();
        let header = lines.next().map(|(_, l)| l).unwrap_or("");
        match header.split_once(' ') {
            Some((MAGIC, v)) if v == CHECKPOINT_VERSION.to_string() => {}
            Some((MAGIC, v)) => {
                return Err(OdpError::Incompatible(format!(
                    "{}: checkpoint version {v}, expected {CHECKPOINT_VERSION}",
                    path.display()
                )))
            }
            _ => return Err(bad("not a checkpoint file".into())),
        }
        let mut ck = Checkpoint {
            seed: 0,
            arch: Vec::new(),
            config: Vec::new(),
            params: Vec::new(),
        };
        while let Some((no, line)) = lines.next() {
            let (kind, rest) = line.split_once(' ').ok_or_else(|| bad(format!("line {}: malformed", no + 1)))?;
            match kind {
                "seed" => ck.seed = rest.parse().map_err(|_| bad(format!("line {}: bad seed", no + 1)))?,
                "arch" | "config" => {
                    let (k, v) = rest.split_once('=').ok_or_else(|| bad(format!("line {}: expected key=value", no + 1)))?;
                    let target = if kind == "arch" { &mut ck.arch } else { &mut ck.config };
                    target.push((k.to_string(), v.to_string()));
                }
                "param" => {
                    let f: Vec<&str> = rest.split_whitespace().collect();
                    let parse_dim = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("line {}: bad shape", no + 1)));
                    if f.len() != 4 {
                        return Err(bad(format!("line {}: expected name rows cols trainable", no + 1)));
                    }
                    let (rows, cols) = (parse_dim(f[1])?, parse_dim(f[2])?);
                    let mut values = Vec::with_capacity(rows * cols);
                    for _ in 0..rows {
                        let (rno, row) = lines.next().ok_or_else(|| bad(format!("parameter {} is truncated", f[0])))?;
                        for tok in row.split_whitespace() {
                            values.push(tok.parse::<f64>().map_err(|_| bad(format!("line {}: bad value {tok}", rno + 1)))?);
                        }
                    }
                    let value = Mat::from_shape_vec((rows, cols), values)
                        .map_err(|_| bad(format!("parameter {} does not have {rows}x{cols} values", f[0])))?;
                    ck.params.push(ParamEntry {
                        name: f[0].to_string(),
                        value,
                        trainable: f[3] == "1",
                    });
                }
                other => return Err(bad(format!("line {}: unknown record {other}", no + 1))),
            }
        }
        Ok(ck)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.render())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_file(path)?, path)
    }

    /// Copies the parameters into `model` after checking that the
    /// architecture signatures and parameter layouts agree.
    pub fn load_into(&self, model: &mut Model) -> Result<()> {
        let mut diffs = Vec::new();
        for (k, v) in model.cfg.signature() {
            match self.arch.iter().find(|(ak, _)| ak == k) {
                Some((_, av)) if *av == v => {}
                Some((_, av)) => diffs.push(format!("{k}: checkpoint {av}, config {v}")),
                None => diffs.push(format!("{k}: missing from checkpoint")),
            }
        }
        if !diffs.is_empty() {
            return Err(OdpError::Incompatible(format!(
                "checkpoint does not match the configuration ({})",
                diffs.join("; ")
            )));
        }
        if self.params.len() != model.store.len() {
            return Err(OdpError::Incompatible(format!(
                "checkpoint has {} parameters, model has {}",
                self.params.len(),
                model.store.len()
            )));
        }
        for p in &self.params {
            let id = model
                .store
                .find(&p.name)
                .ok_or_else(|| OdpError::Incompatible(format!("unknown parameter {}", p.name)))?;
            let current = model.store.get_mut(id);
            if current.dim() != p.value.dim() {
                return Err(OdpError::Incompatible(format!(
                    "parameter {} has shape {:?}, model expects {:?}",
                    p.name,
                    p.value.dim(),
                    current.dim()
                )));
            }
            current.assign(&p.value);
        }
        Ok(())
    }
}
