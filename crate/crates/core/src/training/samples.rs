//! Prediction targets and the chronological split.

use log::warn;

use crate::error::{OdpError, Result};
use crate::temporal::{slice_indices, SliceIndices};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    /// Slot being predicted, from history up to `target - 1`.
    pub target: usize,
    pub indices: SliceIndices,
}

/// Every target in `[lP + 2, T + 1]`. Returns an empty list, with a warning,
/// when the history is too short.
pub fn make_samples(slots: usize, l: usize, p: usize) -> Vec<Sample> {
    let first = l * p + 2;
    if slots + 1 < first {
        warn!("{slots} slots are too few for P={p} with {l} slots per day; need at least {}", first - 1);
        return Vec::new();
    }
    (first..=slots + 1)
        .map(|target| Sample {
            target,
            indices: slice_indices(target - 1, l, p).expect("target range guarantees valid slices"),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Chronological split with floor allocation for train and validation and
/// the remainder going to test.
pub fn split_chronological(targets: &[usize], fractions: [f64; 3]) -> Result<Split> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(OdpError::config(format!("split fractions {fractions:?} must be in [0, 1] and sum to 1")));
    }
    let n = targets.len();
    let alloc = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
    let n_train = alloc(fractions[0]).min(n);
    let n_val = alloc(fractions[1]).min(n - n_train);
    Ok(Split {
        train: targets[..n_train].to_vec(),
        val: targets[n_train..n_train + n_val].to_vec(),
        test: targets[n_train + n_val..].to_vec(),
    })
}

/// Targets with ground truth (`target <= slots`), split chronologically.
pub fn split_targets(slots: usize, l: usize, p: usize, fractions: [f64; 3]) -> Result<Split> {
    let targets: Vec<usize> = make_samples(slots, l, p)
        .into_iter()
        .map(|s| s.target)
        .filter(|&t| t <= slots)
        .collect();
    split_chronological(&targets, fractions)
}
