//! Smooth-L1 loss and the two-task combination.

use crate::autodiff::Mat;
use crate::error::{OdpError, Result};

/// Smooth-L1 of one residual.
pub fn smooth_l1_term(e: f64, beta: f64) -> f64 {
    let a = e.abs();
    if a < beta {
        0.5 * e * e / beta
    } else {
        a - 0.5 * beta
    }
}

/// Mean Smooth-L1 over all elements.
pub fn smooth_l1(pred: &Mat, truth: &Mat, beta: f64) -> Result<f64> {
    if pred.dim() != truth.dim() {
        return Err(OdpError::Shape(format!(
            "smooth_l1: prediction {:?} vs truth {:?}",
            pred.dim(),
            truth.dim()
        )));
    }
    let total: f64 = pred
        .iter()
        .zip(truth.iter())
        .map(|(p, t)| smooth_l1_term(p - t, beta))
        .sum();
    Ok(total / pred.len().max(1) as f64)
}

pub fn combine(demand_loss: f64, od_loss: f64, eta_d: f64, eta_o: f64) -> f64 {
    eta_d * demand_loss + eta_o * od_loss
}

/// `η_d · L_d + η_o · L_o` over a demand vector and an OD matrix.
pub fn combined_loss(
    pred: (&Mat, &Mat),
    truth: (&Mat, &Mat),
    eta_d: f64,
    eta_o: f64,
    beta: f64,
) -> Result<f64> {
    Ok(combine(
        smooth_l1(pred.0, truth.0, beta)?,
        smooth_l1(pred.1, truth.1, beta)?,
        eta_d,
        eta_o,
    ))
}
