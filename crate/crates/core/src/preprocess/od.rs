use std::collections::BTreeMap;

use chrono::{NaiveDateTime, Timelike};

use super::grid::GridSpec;
use super::trips::Request;
use crate::autodiff::Mat;
use crate::error::{OdpError, Result};

/// Sparse request counts between grids for one time slot.
///
/// Entries are kept sorted by `(origin, destination)`; zero counts are never
/// stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OdGraph {
    /// 1-based slot index.
    pub slot: usize,
    n: usize,
    counts: BTreeMap<(usize, usize), u32>,
}

impl OdGraph {
    pub fn empty(slot: usize, n: usize) -> Self {
        OdGraph {
            slot,
            n,
            counts: BTreeMap::new(),
        }
    }

    pub fn from_triplets(slot: usize, n: usize, triplets: impl IntoIterator<Item = (usize, usize, u32)>) -> Self {
        let mut g = Self::empty(slot, n);
        for (i, j, c) in triplets {
            g.add(i, j, c);
        }
        g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn add(&mut self, i: usize, j: usize, count: u32) {
        assert!(i < self.n && j < self.n, "edge ({i}, {j}) outside {} grids", self.n);
        if count > 0 {
            *self.counts.entry((i, j)).or_insert(0) += count;
        }
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.counts.get(&(i, j)).copied().unwrap_or(0)
    }

    /// Nonzero entries `(i, j, count)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        self.counts.iter().map(|(&(i, j), &c)| (i, j, c))
    }

    pub fn nnz(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().map(|&c| c as u64).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, _, c) in self.iter() {
            out[i] += c as f64;
        }
        out
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (_, j, c) in self.iter() {
            out[j] += c as f64;
        }
        out
    }

    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros((self.n, self.n));
        for (i, j, c) in self.iter() {
            m[[i, j]] = c as f64;
        }
        m
    }

    pub fn transposed(&self) -> OdGraph {
        OdGraph::from_triplets(self.slot, self.n, self.iter().map(|(i, j, c)| (j, i, c)))
    }
}

/// Outgoing request count per grid (row sums), as an `n × 1` column.
pub fn demand_vector(g: &OdGraph) -> Mat {
    Mat::from_shape_vec((g.n(), 1), g.row_sums()).expect("n entries")
}

#[derive(Debug, Clone)]
pub struct OdSequence {
    pub graphs: Vec<OdGraph>,
    /// Requests that fell outside the grid or the slot window.
    pub dropped: usize,
}

/// Check that `start` sits on a slot boundary.
pub fn check_slot_aligned(start: NaiveDateTime, slot_hours: u32) -> Result<()> {
    if start.minute() != 0 || start.second() != 0 || start.nanosecond() != 0 || start.hour() % slot_hours != 0 {
        return Err(OdpError::config(format!(
            "start_time {start} is not aligned to a {slot_hours}-hour slot boundary"
        )));
    }
    Ok(())
}

/// 1-based slot of `time`, or `None` when it precedes `start`.
pub fn slot_of(time: NaiveDateTime, start: NaiveDateTime, slot_hours: u32) -> Option<usize> {
    let secs = (time - start).num_seconds();
    if secs < 0 {
        return None;
    }
    Some((secs / (slot_hours as i64 * 3600)) as usize + 1)
}

/// Bucket requests into `slots` OD graphs starting at `start`.
pub fn build_od_sequence(
    requests: &[Request],
    spec: &GridSpec,
    start: NaiveDateTime,
    slots: usize,
) -> Result<OdSequence> {
    check_slot_aligned(start, spec.slot_hours)?;
    let n = spec.n();
    let mut graphs: Vec<OdGraph> = (1..=slots).map(|t| OdGraph::empty(t, n)).collect();
    let mut dropped = 0;
    for r in requests {
        let slot = slot_of(r.time, start, spec.slot_hours).filter(|&t| t <= slots);
        let o = spec.locate(r.origin_lat, r.origin_lng);
        let d = spec.locate(r.dest_lat, r.dest_lng);
        match (slot, o, d) {
            (Some(t), Ok(i), Ok(j)) => graphs[t - 1].add(i, j, 1),
            _ => dropped += 1,
        }
    }
    Ok(OdSequence { graphs, dropped })
}
