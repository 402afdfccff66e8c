use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{gradient_weight, GridField, ModeTable, Transform};
use crate::error::{MnoError, Result};

/// Sobolev loss configuration (`p = 2` only).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SobolevSpec {
    /// Highest derivative order `k`, in `0..=4`.
    pub order: u32,
    /// Sum of per-order relative errors (training) instead of a single
    /// relative `H^k` norm (evaluation).
    pub balanced: bool,
}

impl SobolevSpec {
    pub const MAX_ORDER: u32 = 4;

    pub fn balanced(order: u32) -> Self {
        SobolevSpec {
            order,
            balanced: true,
        }
    }

    pub fn unbalanced(order: u32) -> Self {
        SobolevSpec {
            order,
            balanced: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order > Self::MAX_ORDER {
            return Err(MnoError::validation(
                "training.sobolev_order",
                format!("must be in 0..=4, got {}", self.order),
            ));
        }
        Ok(())
    }
}

fn weighted_norm_sq(coeffs: &[Complex64], modes: &ModeTable, weight: &[f64]) -> f64 {
    coeffs
        .iter()
        .zip(&modes.multiplicity)
        .zip(weight)
        .map(|((c, m), w)| m * w * c.norm_sqr())
        .sum()
}

fn sobolev_weight(modes: &ModeTable, order: u32) -> Vec<f64> {
    modes
        .kappa_sq
        .iter()
        .map(|k2| (0..=order).map(|i| k2.powi(i as i32)).sum())
        .collect()
}

/// `sqrt(Σ (1 + |κ|² + … + |κ|^{2k}) |f̂|²)` with physical wavenumbers.
pub fn sobolev_norm(f: &GridField, order: u32) -> f64 {
    let coeffs = Transform::new(f.domain).forward(&f.values);
    let modes = f.domain.modes();
    weighted_norm_sq(&coeffs, &modes, &sobolev_weight(&modes, order)).sqrt()
}

/// Relative Sobolev discrepancy between `pred` and `truth`.
pub fn relative_sobolev_loss(
    pred: &GridField,
    truth: &GridField,
    spec: SobolevSpec,
) -> Result<f64> {
    let transform = Transform::new(truth.domain);
    if pred.domain != truth.domain {
        return Err(MnoError::Shape(format!(
            "prediction on {:?} compared to truth on {:?}",
            pred.domain, truth.domain
        )));
    }
    sobolev_loss_with_grad(&transform, &pred.values, &truth.values, spec, false).map(|(l, _)| l)
}

/// Relative Sobolev loss and, when `want_grad`, its gradient with respect to
/// the predicted grid values.
pub fn sobolev_loss_with_grad(
    transform: &Transform,
    pred: &[f64],
    truth: &[f64],
    spec: SobolevSpec,
    want_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    let domain = transform.domain();
    if pred.len() != domain.points() || truth.len() != domain.points() {
        return Err(MnoError::Shape(format!(
            "loss expects {} points, got {} and {}",
            domain.points(),
            pred.len(),
            truth.len()
        )));
    }
    let modes = domain.modes();
    let diff: Vec<f64> = pred.iter().zip(truth).map(|(p, t)| p - t).collect();
    let d_hat = transform.forward(&diff);
    let t_hat = transform.forward(truth);

    // (weight, 1 / (‖d‖_w ‖t‖_w)) per term
    let mut weights: Vec<Vec<f64>> = Vec::new();
    if spec.balanced {
        for i in 0..=spec.order {
            weights.push(gradient_weight(&modes, i));
        }
    } else {
        weights.push(sobolev_weight(&modes, spec.order));
    }

    let mut loss = 0.0;
    let mut cotangent = vec![Complex64::new(0.0, 0.0); d_hat.len()];
    for (i, w) in weights.iter().enumerate() {
        let t_norm = weighted_norm_sq(&t_hat, &modes, w).sqrt();
        if t_norm <= f64::MIN_POSITIVE {
            let order = if spec.balanced { i as u32 } else { spec.order };
            return Err(MnoError::DegenerateNorm(format!(
                "reference field has zero order-{order} Sobolev norm"
            )));
        }
        let d_norm = weighted_norm_sq(&d_hat, &modes, w).sqrt();
        loss += d_norm / t_norm;
        if want_grad && d_norm > 0.0 {
            let scale = 1.0 / (d_norm * t_norm * domain.points() as f64);
            for ((c, d), wk) in cotangent.iter_mut().zip(&d_hat).zip(w) {
                *c += d * (wk * scale);
            }
        }
    }
    let grad = if want_grad {
        transform.inverse(&cotangent)
    } else {
        Vec::new()
    };
    Ok((loss, grad))
}
