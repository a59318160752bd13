//! On-disk layout of a preprocessed run.
//!
//! ```text
//! <dir>/manifest.txt   key=value lines (grid, slots, start time, counters)
//! <dir>/od_<t>.txt     "i j count" per nonzero OD entry of slot t, sorted
//! <dir>/feat_<t>.txt   n lines of d_f space-separated values
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so files
//! are byte-stable for identical inputs and parse back to identical values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{Duration, NaiveDateTime};

use super::features::{build_features, feature_dim};
use super::grid::{Bounds, GridSpec};
use super::od::{build_od_sequence, OdGraph};
use super::trips::Request;
use crate::autodiff::Mat;
use crate::error::{OdpError, Result};

pub const WORKSPACE_FORMAT_VERSION: u32 = 1;
pub const TIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub spec: GridSpec,
    pub slots: usize,
    pub start_time: NaiveDateTime,
    /// Requests outside the grid or the slot window.
    pub dropped: usize,
    /// Rows rejected while parsing the trip file.
    pub skipped_rows: usize,
    pub parsed: usize,
}

impl Manifest {
    pub fn feature_dim(&self) -> usize {
        feature_dim(self.spec.slots_per_day())
    }

    pub fn slot_start(&self, slot: usize) -> NaiveDateTime {
        self.start_time + Duration::hours(((slot - 1) as u32 * self.spec.slot_hours) as i64)
    }

    fn render(&self) -> String {
        let s = &self.spec;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        kv("format_version", WORKSPACE_FORMAT_VERSION.to_string());
        kv("lat_min", s.lat_min.to_string());
        kv("lat_max", s.lat_max.to_string());
        kv("lng_min", s.lng_min.to_string());
        kv("lng_max", s.lng_max.to_string());
        kv("rows", s.rows.to_string());
        kv("cols", s.cols.to_string());
        kv("slot_hours", s.slot_hours.to_string());
        kv("slots", self.slots.to_string());
        kv("start_time", self.start_time.format(TIME_FORMAT).to_string());
        kv("dropped_count", self.dropped.to_string());
        kv("skipped_rows", self.skipped_rows.to_string());
        kv("parsed_count", self.parsed.to_string());
        kv("grids", s.n().to_string());
        kv("feature_dim", self.feature_dim().to_string());
        out
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let map = parse_key_values(text, path)?;
        let get = |k: &str| {
            map.get(k)
                .ok_or_else(|| OdpError::input(path, format!("manifest lacks '{k}'")))
        };
        fn num<T: std::str::FromStr>(v: &str, k: &str, path: &Path) -> Result<T> {
            v.parse()
                .map_err(|_| OdpError::input(path, format!("bad value for '{k}': {v}")))
        }
        let version: u32 = num(get("format_version")?, "format_version", path)?;
        if version != WORKSPACE_FORMAT_VERSION {
            return Err(OdpError::Incompatible(format!(
                "workspace format {version}, expected {WORKSPACE_FORMAT_VERSION}"
            )));
        }
        let bounds = Bounds {
            lat_min: num(get("lat_min")?, "lat_min", path)?,
            lat_max: num(get("lat_max")?, "lat_max", path)?,
            lng_min: num(get("lng_min")?, "lng_min", path)?,
            lng_max: num(get("lng_max")?, "lng_max", path)?,
        };
        let spec = GridSpec::build(
            bounds,
            num(get("rows")?, "rows", path)?,
            num(get("cols")?, "cols", path)?,
            num(get("slot_hours")?, "slot_hours", path)?,
        )?;
        let start_time = NaiveDateTime::parse_from_str(get("start_time")?, TIME_FORMAT)
            .map_err(|e| OdpError::input(path, format!("start_time: {e}")))?;
        let m = Manifest {
            spec,
            slots: num(get("slots")?, "slots", path)?,
            start_time,
            dropped: num(get("dropped_count")?, "dropped_count", path)?,
            skipped_rows: num(get("skipped_rows")?, "skipped_rows", path)?,
            parsed: num(get("parsed_count")?, "parsed_count", path)?,
        };
        let grids: usize = num(get("grids")?, "grids", path)?;
        let fdim: usize = num(get("feature_dim")?, "feature_dim", path)?;
        if grids != m.spec.n() || fdim != m.feature_dim() {
            return Err(OdpError::input(path, "grids/feature_dim disagree with the grid spec"));
        }
        Ok(m)
    }
}

/// Parse `key=value` lines, skipping blanks and `#` comments.
pub fn parse_key_values(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            OdpError::input(path, format!("line {}: expected key=value", lineno + 1))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Preprocessed OD sequence and features for every slot.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub manifest: Manifest,
    pub graphs: Vec<OdGraph>,
    pub features: Vec<Mat>,
}

impl Workspace {
    pub fn build(
        requests: &[Request],
        spec: &GridSpec,
        start_time: NaiveDateTime,
        slots: usize,
        skipped_rows: usize,
    ) -> Result<Self> {
        let seq = build_od_sequence(requests, spec, start_time, slots)?;
        let manifest = Manifest {
            spec: spec.clone(),
            slots,
            start_time,
            dropped: seq.dropped,
            skipped_rows,
            parsed: requests.len(),
        };
        let features = seq
            .graphs
            .iter()
            .map(|g| build_features(g, spec, manifest.slot_start(g.slot)))
            .collect();
        Ok(Workspace {
            manifest,
            graphs: seq.graphs,
            features,
        })
    }

    pub fn n(&self) -> usize {
        self.manifest.spec.n()
    }

    pub fn slots(&self) -> usize {
        self.manifest.slots
    }

    pub fn graph(&self, slot: usize) -> &OdGraph {
        &self.graphs[slot - 1]
    }

    pub fn features(&self, slot: usize) -> &Mat {
        &self.features[slot - 1]
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| OdpError::io(dir, e))?;
        write_file(&dir.join("manifest.txt"), &self.manifest.render())?;
        for (g, v) in self.graphs.iter().zip(&self.features) {
            let mut od = String::new();
            for (i, j, c) in g.iter() {
                od.push_str(&format!("{i} {j} {c}\n"));
            }
            write_file(&dir.join(format!("od_{}.txt", g.slot)), &od)?;
            write_file(&dir.join(format!("feat_{}.txt", g.slot)), &render_matrix(v))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join("manifest.txt");
        let manifest = Manifest::parse(&read_file(&mpath)?, &mpath)?;
        let n = manifest.spec.n();
        let mut graphs = Vec::with_capacity(manifest.slots);
        let mut features = Vec::with_capacity(manifest.slots);
        for t in 1..=manifest.slots {
            let opath = dir.join(format!("od_{t}.txt"));
            let mut g = OdGraph::empty(t, n);
            for (lineno, line) in read_file(&opath)?.lines().enumerate() {
                let parts: Vec<_> = line.split_whitespace().collect();
                let parsed = match parts.as_slice() {
                    [i, j, c] => i
                        .parse::<usize>()
                        .ok()
                        .zip(j.parse::<usize>().ok())
                        .zip(c.parse::<u32>().ok()),
                    _ => None,
                };
                match parsed {
                    Some(((i, j), c)) if i < n && j < n => g.add(i, j, c),
                    _ => {
                        return Err(OdpError::input(
                            &opath,
                            format!("line {}: expected 'i j count'", lineno + 1),
                        ))
                    }
                }
            }
            graphs.push(g);
            let fpath = dir.join(format!("feat_{t}.txt"));
            features.push(parse_matrix(&read_file(&fpath)?, n, manifest.feature_dim(), &fpath)?);
        }
        Ok(Workspace {
            manifest,
            graphs,
            features,
        })
    }
}

pub fn render_matrix(m: &Mat) -> String {
    let mut out = String::new();
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str, rows: usize, cols: usize, path: &Path) -> Result<Mat> {
    let mut values = Vec::with_capacity(rows * cols);
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let before = values.len();
        for tok in line.split_whitespace() {
            values.push(
                tok.parse::<f64>()
                    .map_err(|_| OdpError::input(path, format!("bad number '{tok}'")))?,
            );
        }
        if values.len() - before != cols {
            return Err(OdpError::input(path, format!("expected {cols} columns")));
        }
    }
    Mat::from_shape_vec((rows, cols), values)
        .map_err(|_| OdpError::input(path, format!("expected {rows} rows")))
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| OdpError::io(path, e))
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| OdpError::io(path, e))
}
