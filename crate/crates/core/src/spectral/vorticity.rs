//! Vorticity, stream function and velocity on the periodic square.
//!
//! Convention: `-Δψ = w`, `u = (∂ψ/∂y, -∂ψ/∂x)`, so that `∂_x u_y - ∂_y u_x = w`.

use rustfft::num_complex::Complex64;

use super::{Domain, GridField, SpectralField, Transform};
use crate::error::{MnoError, Result};

const MEAN_TOLERANCE: f64 = 1e-10;

fn require_square(domain: Domain) -> Result<()> {
    match domain {
        Domain::Square { .. } => Ok(()),
        Domain::Line { .. } => Err(MnoError::Shape(
            "vorticity operations need a 2D field".into(),
        )),
    }
}

/// `ψ̂ = ŵ / |κ|²` away from the zero mode, `ψ̂(0) = 0`.
pub fn streamfunction_hat(w_hat: &SpectralField) -> SpectralField {
    let modes = w_hat.domain.modes();
    let coeffs = w_hat
        .coeffs
        .iter()
        .zip(&modes.kappa_sq)
        .map(|(w, k2)| {
            if *k2 > 0.0 {
                w / k2
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    SpectralField {
        domain: w_hat.domain,
        coeffs,
    }
}

/// Spectral velocity `(û_x, û_y) = (iκ_y ψ̂, -iκ_x ψ̂)`.
pub fn velocity_hat(w_hat: &SpectralField) -> (SpectralField, SpectralField) {
    let modes = w_hat.domain.modes();
    let psi = streamfunction_hat(w_hat);
    let mut ux = SpectralField::zeros(w_hat.domain);
    let mut uy = SpectralField::zeros(w_hat.domain);
    for (idx, p) in psi.coeffs.iter().enumerate() {
        let ky = if modes.nyquist_y[idx] {
            0.0
        } else {
            modes.ky[idx]
        };
        let kx = if modes.nyquist_x[idx] {
            0.0
        } else {
            modes.kx[idx]
        };
        ux.coeffs[idx] = Complex64::new(0.0, ky) * p;
        uy.coeffs[idx] = Complex64::new(0.0, -kx) * p;
    }
    (ux, uy)
}

fn check_mean_zero(w_hat: &SpectralField) -> Result<()> {
    let mean = w_hat.coeffs[0].re;
    if mean.abs() > MEAN_TOLERANCE {
        return Err(MnoError::validation(
            "vorticity",
            format!("Poisson problem needs a mean-zero field, mean is {mean:e}"),
        ));
    }
    Ok(())
}

/// Solves `-Δψ = w` on the periodic square.
pub fn streamfunction(w: &GridField) -> Result<GridField> {
    require_square(w.domain)?;
    let t = Transform::new(w.domain);
    let w_hat = SpectralField {
        domain: w.domain,
        coeffs: t.forward(&w.values),
    };
    check_mean_zero(&w_hat)?;
    let psi = streamfunction_hat(&w_hat);
    GridField::new(w.domain, t.inverse(&psi.coeffs))
}

/// Divergence-free velocity whose curl is `w`.
pub fn vorticity_to_velocity(w: &GridField) -> Result<(GridField, GridField)> {
    require_square(w.domain)?;
    let t = Transform::new(w.domain);
    let w_hat = SpectralField {
        domain: w.domain,
        coeffs: t.forward(&w.values),
    };
    check_mean_zero(&w_hat)?;
    let (ux, uy) = velocity_hat(&w_hat);
    Ok((
        GridField::new(w.domain, t.inverse(&ux.coeffs))?,
        GridField::new(w.domain, t.inverse(&uy.coeffs))?,
    ))
}

fn derivative_pair(ux: &GridField, uy: &GridField) -> Result<(SpectralField, SpectralField)> {
    require_square(ux.domain)?;
    if ux.domain != uy.domain {
        return Err(MnoError::Shape(
            "velocity components on different grids".into(),
        ));
    }
    let t = Transform::new(ux.domain);
    Ok((
        SpectralField {
            domain: ux.domain,
            coeffs: t.forward(&ux.values),
        },
        SpectralField {
            domain: uy.domain,
            coeffs: t.forward(&uy.values),
        },
    ))
}

/// Spectral `∂_x u_y - ∂_y u_x`.
pub fn curl(ux: &GridField, uy: &GridField) -> Result<GridField> {
    let (ax, ay) = derivative_pair(ux, uy)?;
    let modes = ux.domain.modes();
    let coeffs: Vec<Complex64> = (0..modes.len())
        .map(|i| {
            let kx = if modes.nyquist_x[i] { 0.0 } else { modes.kx[i] };
            let ky = if modes.nyquist_y[i] { 0.0 } else { modes.ky[i] };
            Complex64::new(0.0, kx) * ay.coeffs[i] - Complex64::new(0.0, ky) * ax.coeffs[i]
        })
        .collect();
    GridField::new(ux.domain, Transform::new(ux.domain).inverse(&coeffs))
}

/// Spectral `∂_x u_x + ∂_y u_y`.
pub fn divergence(ux: &GridField, uy: &GridField) -> Result<GridField> {
    let (ax, ay) = derivative_pair(ux, uy)?;
    let modes = ux.domain.modes();
    let coeffs: Vec<Complex64> = (0..modes.len())
        .map(|i| {
            let kx = if modes.nyquist_x[i] { 0.0 } else { modes.kx[i] };
            let ky = if modes.nyquist_y[i] { 0.0 } else { modes.ky[i] };
            Complex64::new(0.0, kx) * ax.coeffs[i] + Complex64::new(0.0, ky) * ay.coeffs[i]
        })
        .collect();
    GridField::new(ux.domain, Transform::new(ux.domain).inverse(&coeffs))
}
