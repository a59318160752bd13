//! Per-slot grid feature matrices.
//!
//! Column layout, for `l = 24 / slot_hours` slots per day:
//!
//! | columns        | feature                                         |
//! |----------------|-------------------------------------------------|
//! | 0              | grid-center latitude, scaled to [0, 1]          |
//! | 1              | grid-center longitude, scaled to [0, 1]         |
//! | 2              | grid ID / (n − 1)                               |
//! | 3..10          | day of week one-hot, Monday = 0                 |
//! | 10..10+l       | slot-of-day one-hot                             |
//! | 10+l           | weekday flag (1 Monday–Friday)                  |
//! | 11+l..15+l     | period one-hot: night, morning, afternoon, evening |
//! | 15+l           | out-degree / max out-degree in the slot         |
//! | 16+l           | in-degree / max in-degree in the slot           |

use chrono::{Datelike, NaiveDateTime, Timelike};

use super::grid::GridSpec;
use super::od::OdGraph;
use crate::autodiff::Mat;

pub fn feature_dim(slots_per_day: usize) -> usize {
    3 + 7 + slots_per_day + 1 + 4 + 2
}

/// Column offsets of each feature block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureLayout {
    pub day_of_week: usize,
    pub slot_of_day: usize,
    pub weekday: usize,
    pub period: usize,
    pub out_degree: usize,
    pub in_degree: usize,
    pub dim: usize,
}

impl FeatureLayout {
    pub fn new(slots_per_day: usize) -> Self {
        let l = slots_per_day;
        FeatureLayout {
            day_of_week: 3,
            slot_of_day: 10,
            weekday: 10 + l,
            period: 11 + l,
            out_degree: 15 + l,
            in_degree: 16 + l,
            dim: feature_dim(l),
        }
    }
}

/// Index of the six-hour period containing `hour`.
pub fn time_period(hour: u32) -> usize {
    (hour / 6) as usize
}

pub fn build_features(g: &OdGraph, spec: &GridSpec, slot_start: NaiveDateTime) -> Mat {
    let n = spec.n();
    assert_eq!(g.n(), n, "graph and grid disagree on n");
    let layout = FeatureLayout::new(spec.slots_per_day());
    let mut v = Mat::zeros((n, layout.dim));

    let dow = slot_start.weekday().num_days_from_monday() as usize;
    let hour = slot_start.hour();
    let slot_of_day = (hour / spec.slot_hours) as usize;
    let weekday = if dow < 5 { 1.0 } else { 0.0 };
    let period = time_period(hour);

    let outs = g.row_sums();
    let ins = g.col_sums();
    let max_out = outs.iter().cloned().fold(0.0, f64::max).max(1.0);
    let max_in = ins.iter().cloned().fold(0.0, f64::max).max(1.0);
    let id_scale = (n.max(2) - 1) as f64;

    for i in 0..n {
        let (lat, lng) = spec.center(i);
        let mut row = v.row_mut(i);
        row[0] = (lat - spec.lat_min) / (spec.lat_max - spec.lat_min);
        row[1] = (lng - spec.lng_min) / (spec.lng_max - spec.lng_min);
        row[2] = i as f64 / id_scale;
        row[layout.day_of_week + dow] = 1.0;
        row[layout.slot_of_day + slot_of_day] = 1.0;
        row[layout.weekday] = weekday;
        row[layout.period + period] = 1.0;
        row[layout.out_degree] = outs[i] / max_out;
        row[layout.in_degree] = ins[i] / max_in;
    }
    v
}
