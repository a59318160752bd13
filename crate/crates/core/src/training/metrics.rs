//! Thresholded RMSE, MAPE and MAE.
//!
//! Entries are selected where the ground truth is at least the threshold.
//! The percentage error divides by `y + 1`.

use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::Mat;
use crate::error::Result;
use crate::preprocess::workspace::write_file;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub rmse: f64,
    pub mape: f64,
    pub mae: f64,
    pub count: usize,
}

/// Running sums for one threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricAccumulator {
    pub threshold: f64,
    count: usize,
    sq: f64,
    pct: f64,
    abs: f64,
}

impl MetricAccumulator {
    pub fn new(threshold: f64) -> Self {
        MetricAccumulator {
            threshold,
            ..Default::default()
        }
    }

    pub fn push(&mut self, pred: f64, truth: f64) {
        if truth >= self.threshold {
            let e = pred - truth;
            self.count += 1;
            self.sq += e * e;
            self.pct += (e / (truth + 1.0)).abs();
            self.abs += e.abs();
        }
    }

    pub fn extend(&mut self, pred: &Mat, truth: &Mat) {
        assert_eq!(pred.dim(), truth.dim(), "metrics: shapes differ");
        for (&p, &t) in pred.iter().zip(truth.iter()) {
            self.push(p, t);
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// `None` when no entry passed the threshold.
    pub fn finish(&self) -> Option<Metrics> {
        (self.count > 0).then(|| {
            let z = self.count as f64;
            Metrics {
                rmse: (self.sq / z).sqrt(),
                mape: self.pct / z,
                mae: self.abs / z,
                count: self.count,
            }
        })
    }
}

pub fn metrics(pred: &Mat, truth: &Mat, threshold: f64) -> Option<Metrics> {
    let mut acc = MetricAccumulator::new(threshold);
    acc.extend(pred, truth);
    acc.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Demand,
    Od,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Demand => "demand",
            Task::Od => "od",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub task: Task,
    pub threshold: f64,
    /// `None` when the mask was empty.
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<MetricRow>,
    pub samples: usize,
}

impl MetricsReport {
    pub fn get(&self, task: Task, threshold: f64) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.task == task && r.threshold == threshold)
    }

    pub fn has_empty_mask(&self) -> bool {
        self.rows.iter().any(|r| r.metrics.is_none())
    }

    /// Delimited text, one row per task and threshold. Undefined metrics
    /// are written as `NaN` with a zero count.
    pub fn render(&self) -> String {
        let mut out = String::from("task,threshold,rmse,mape,mae,count\n");
        for r in &self.rows {
            match r.metrics {
                Some(m) => writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.task.name(),
                    r.threshold,
                    m.rmse,
                    m.mape,
                    m.mae,
                    m.count
                ),
                None => writeln!(out, "{},{},NaN,NaN,NaN,0", r.task.name(), r.threshold),
            }
            .expect("write to string");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.render())
    }
}
