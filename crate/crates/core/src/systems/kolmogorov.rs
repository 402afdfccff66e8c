//! Kolmogorov flow in vorticity form on `[0, 2π)²`:
//! `∂w/∂t + u·∇w = Δw/Re − n cos(n y)`.
//!
//! Split step: the viscous term is integrated exactly with the factor
//! `exp(−|κ|² dt / Re)`, advection and forcing with Heun's method in the
//! integrating-factor frame. Advection products are dealiased with the 2/3
//! rule.

use rustfft::num_complex::Complex64;

use crate::error::{MnoError, Result};
use crate::spectral::{dealias_mask, velocity_hat, Domain, GridField, SpectralField, Transform};

#[derive(Clone)]
pub struct KolmogorovSolver {
    domain: Domain,
    pub dt: f64,
    pub reynolds: f64,
    transform: Transform,
    decay: Vec<f64>,
    forcing_hat: Vec<Complex64>,
    mask: Vec<f64>,
    ikx: Vec<Complex64>,
    iky: Vec<Complex64>,
}

impl KolmogorovSolver {
    /// `forcing_wavenumber = None` disables the body force.
    pub fn new(
        domain: Domain,
        dt: f64,
        reynolds: f64,
        forcing_wavenumber: Option<usize>,
    ) -> Result<Self> {
        domain.validate()?;
        if domain.dim() != 2 {
            return Err(MnoError::validation(
                "system.resolution",
                "Kolmogorov flow runs on a 2D grid",
            ));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(MnoError::validation(
                "system.dt",
                format!("must be positive, got {dt}"),
            ));
        }
        if !(reynolds > 0.0 && reynolds.is_finite()) {
            return Err(MnoError::validation(
                "system.reynolds",
                format!("must be positive, got {reynolds}"),
            ));
        }
        let transform = Transform::new(domain);
        let modes = domain.modes();
        let decay = modes
            .kappa_sq
            .iter()
            .map(|k2| (-k2 * dt / reynolds).exp())
            .collect();
        let forcing_hat = match forcing_wavenumber {
            Some(n) => {
                let n = n as f64;
                transform.forward(&GridField::from_fn(domain, |_, y| -n * (n * y).cos()).values)
            }
            None => vec![Complex64::new(0.0, 0.0); domain.spectral_len()],
        };
        let ikx = (0..modes.len())
            .map(|i| Complex64::new(0.0, if modes.nyquist_x[i] { 0.0 } else { modes.kx[i] }))
            .collect();
        let iky = (0..modes.len())
            .map(|i| Complex64::new(0.0, if modes.nyquist_y[i] { 0.0 } else { modes.ky[i] }))
            .collect();
        Ok(KolmogorovSolver {
            domain,
            dt,
            reynolds,
            transform,
            decay,
            forcing_hat,
            mask: dealias_mask(domain),
            ikx,
            iky,
        })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Advection plus forcing: `−u·∇w + g`.
    fn explicit_term(&self, w_hat: &[Complex64]) -> Vec<Complex64> {
        let masked = SpectralField {
            domain: self.domain,
            coeffs: w_hat.iter().zip(&self.mask).map(|(c, m)| c * m).collect(),
        };
        let (ux_hat, uy_hat) = velocity_hat(&masked);
        let wx_hat: Vec<Complex64> = masked
            .coeffs
            .iter()
            .zip(&self.ikx)
            .map(|(c, k)| c * k)
            .collect();
        let wy_hat: Vec<Complex64> = masked
            .coeffs
            .iter()
            .zip(&self.iky)
            .map(|(c, k)| c * k)
            .collect();
        let ux = self.transform.inverse(&ux_hat.coeffs);
        let uy = self.transform.inverse(&uy_hat.coeffs);
        let wx = self.transform.inverse(&wx_hat);
        let wy = self.transform.inverse(&wy_hat);
        let adv: Vec<f64> = (0..ux.len())
            .map(|i| ux[i] * wx[i] + uy[i] * wy[i])
            .collect();
        let mut out = self.transform.forward(&adv);
        for ((o, m), g) in out.iter_mut().zip(&self.mask).zip(&self.forcing_hat) {
            *o = -*o * m + g;
        }
        out[0] = Complex64::new(0.0, 0.0);
        out
    }

    pub fn step(&self, w_hat: &[Complex64]) -> Result<Vec<Complex64>> {
        let dt = self.dt;
        let n0 = self.explicit_term(w_hat);
        let predictor: Vec<Complex64> = (0..w_hat.len())
            .map(|i| self.decay[i] * (w_hat[i] + dt * n0[i]))
            .collect();
        let n1 = self.explicit_term(&predictor);
        let mut next = Vec::with_capacity(w_hat.len());
        for i in 0..w_hat.len() {
            let x = self.decay[i] * w_hat[i] + 0.5 * dt * (self.decay[i] * n0[i] + n1[i]);
            if !(x.re.is_finite() && x.im.is_finite()) {
                return Err(MnoError::BlowUp {
                    step: 0,
                    detail: format!("vorticity mode {i} became non-finite"),
                });
            }
            next.push(x);
        }
        Ok(next)
    }

    pub fn advance(&self, w_hat: &[Complex64], steps: usize) -> Result<Vec<Complex64>> {
        let mut state = w_hat.to_vec();
        for k in 0..steps {
            state = self.step(&state).map_err(|e| match e {
                MnoError::BlowUp { detail, .. } => MnoError::BlowUp { step: k, detail },
                other => other,
            })?;
        }
        Ok(state)
    }

    pub fn advance_grid(&self, w: &[f64], steps: usize) -> Result<Vec<f64>> {
        let w_hat = self.transform.forward(w);
        Ok(self.transform.inverse(&self.advance(&w_hat, steps)?))
    }

    /// Advective CFL number `dt · max(|u_x| + |u_y|) / Δx` of a vorticity field.
    pub fn cfl(&self, w: &[f64]) -> f64 {
        let w_hat = SpectralField {
            domain: self.domain,
            coeffs: self.transform.forward(w),
        };
        let (ux_hat, uy_hat) = velocity_hat(&w_hat);
        let ux = self.transform.inverse(&ux_hat.coeffs);
        let uy = self.transform.inverse(&uy_hat.coeffs);
        let dx = self.domain.length() / self.domain.n() as f64;
        let vmax = ux
            .iter()
            .zip(&uy)
            .map(|(a, b)| a.abs() + b.abs())
            .fold(0.0, f64::max);
        self.dt * vmax / dx
    }
}

/// One split step of a spectral vorticity field.
pub fn ns_step(w_hat: &SpectralField, solver: &KolmogorovSolver) -> Result<SpectralField> {
    if w_hat.domain != solver.domain() {
        return Err(MnoError::Shape("field and solver domains differ".into()));
    }
    Ok(SpectralField {
        domain: w_hat.domain,
        coeffs: solver.step(&w_hat.coeffs)?,
    })
}
