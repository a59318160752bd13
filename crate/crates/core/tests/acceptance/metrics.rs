use odp_core::autodiff::Mat;
use odp_core::training::metrics;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Outcome;

const TOL: f64 = 1e-9;

/// `(rmse, mape, mae, count)` by explicit loops.
fn oracle(pred: &[f64], truth: &[f64], threshold: f64) -> Option<(f64, f64, f64, usize)> {
    let mut n = 0usize;
    let (mut sq, mut pct, mut abs) = (0.0, 0.0, 0.0);
    for k in 0..pred.len() {
        if truth[k] < threshold {
            continue;
        }
        n += 1;
        let diff = truth[k] - pred[k];
        sq += diff * diff;
        pct += diff.abs() / (truth[k] + 1.0);
        abs += diff.abs();
    }
    if n == 0 {
        return None;
    }
    let z = n as f64;
    Some(((sq / z).sqrt(), pct / z, abs / z, n))
}

fn row(v: &[f64]) -> Mat {
    Mat::from_shape_vec((1, v.len()), v.to_vec()).expect("row")
}

pub fn criterion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    let mut mismatches = 0;
    let mut empty = 0;
    for _ in 0..1000 {
        let len = rng.random_range(1..60);
        let truth: Vec<f64> = (0..len).map(|_| rng.random_range(0..12) as f64).collect();
        let pred: Vec<f64> = (0..len).map(|_| rng.random_range(-2.0..14.0)).collect();
        for threshold in [0.0, 3.0, 5.0] {
            match (metrics(&row(&pred), &row(&truth), threshold), oracle(&pred, &truth, threshold)) {
                (Some(m), Some((rmse, mape, mae, n))) => {
                    if m.count != n {
                        mismatches += 1;
                    }
                    worst = worst
                        .max((m.rmse - rmse).abs())
                        .max((m.mape - mape).abs())
                        .max((m.mae - mae).abs());
                }
                (None, None) => empty += 1,
                _ => mismatches += 1,
            }
        }
    }
    let unit = metrics(&row(&[1.0]), &row(&[0.0]), 0.0).map(|m| m.mape);
    Outcome::check(
        worst <= TOL && mismatches == 0 && unit == Some(1.0),
        format!(
            "1000 arrays x 3 thresholds; max diff {worst:.2e} (tol {TOL:e}), {mismatches} mask mismatches, {empty} empty masks; MAPE(y=0, yhat=1) = {unit:?}"
        ),
    )
}
