//! Kuramoto–Sivashinsky `u_t = -u u_x - u_xx - u_xxxx` on a periodic segment,
//! integrated with fourth-order exponential time differencing (ETDRK4).

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{MnoError, Result};
use crate::spectral::{dealias_mask, Domain, SpectralField, Transform};

/// Number of contour points used to evaluate the φ-functions.
pub const CONTOUR_POINTS: usize = 32;

/// Per-mode ETDRK4 coefficients for a fixed step `dt`.
///
/// With `z = ℓ·dt` the update is
/// `v⁺ = E v + f1 N(v) + f2 (N(a) + N(b)) + f3 N(c)`, so at `ℓ → 0` the weights
/// reduce to the classical RK4 weights `dt/6, dt/3, dt/6`.
#[derive(Clone, Debug)]
pub struct EtdCoefficients {
    pub domain: Domain,
    pub dt: f64,
    /// Physical wavenumber `κ = 2πn/L`.
    pub wavenumber: Vec<f64>,
    /// Linear symbol `ℓ(κ) = κ² − κ⁴`.
    pub linear: Vec<f64>,
    pub e: Vec<f64>,
    pub e2: Vec<f64>,
    pub q: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub f3: Vec<f64>,
}

pub fn ks_precompute(domain: Domain, dt: f64) -> Result<EtdCoefficients> {
    domain.validate()?;
    if domain.dim() != 1 {
        return Err(MnoError::validation(
            "system.resolution",
            "KS runs on a 1D grid",
        ));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(MnoError::validation(
            "system.dt",
            format!("must be positive, got {dt}"),
        ));
    }
    let n = domain.n();
    let len = n / 2 + 1;
    let base = domain.base_wavenumber();
    let roots: Vec<Complex64> = (0..CONTOUR_POINTS)
        .map(|j| Complex64::from_polar(1.0, 2.0 * PI * (j as f64 + 0.5) / CONTOUR_POINTS as f64))
        .collect();
    let mut c = EtdCoefficients {
        domain,
        dt,
        wavenumber: Vec::with_capacity(len),
        linear: Vec::with_capacity(len),
        e: Vec::with_capacity(len),
        e2: Vec::with_capacity(len),
        q: Vec::with_capacity(len),
        f1: Vec::with_capacity(len),
        f2: Vec::with_capacity(len),
        f3: Vec::with_capacity(len),
    };
    for mode in 0..len {
        let kappa = base * mode as f64;
        let ell = kappa * kappa - kappa.powi(4);
        let z0 = ell * dt;
        let (mut q, mut f1, mut f2, mut f3) = (0.0, 0.0, 0.0, 0.0);
        for r in &roots {
            let z = z0 + r;
            let ez = z.exp();
            let z3 = z * z * z;
            q += (((z * 0.5).exp() - 1.0) / z).re;
            f1 += ((-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3).re;
            f2 += ((2.0 + z + ez * (z - 2.0)) / z3).re;
            f3 += ((-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3).re;
        }
        let m = CONTOUR_POINTS as f64;
        c.wavenumber.push(kappa);
        c.linear.push(ell);
        c.e.push(z0.exp());
        c.e2.push((0.5 * z0).exp());
        c.q.push(dt * q / m);
        c.f1.push(dt * f1 / m);
        c.f2.push(2.0 * dt * f2 / m);
        c.f3.push(dt * f3 / m);
    }
    Ok(c)
}

/// ETDRK4 stepper holding the transform and dealiasing mask.
#[derive(Clone)]
pub struct KsSolver {
    pub coeffs: EtdCoefficients,
    transform: Transform,
    mask: Vec<f64>,
    /// When false only the linear part is integrated.
    pub nonlinear: bool,
}

impl KsSolver {
    pub fn new(domain: Domain, dt: f64) -> Result<Self> {
        let coeffs = ks_precompute(domain, dt)?;
        Ok(KsSolver {
            transform: Transform::new(domain),
            mask: dealias_mask(domain),
            coeffs,
            nonlinear: true,
        })
    }

    pub fn linear_only(mut self) -> Self {
        self.nonlinear = false;
        self
    }

    pub fn domain(&self) -> Domain {
        self.coeffs.domain
    }

    /// `N(u) = -½ ∂x(u²)`, dealiased with the 2/3 rule.
    fn nonlinear_term(&self, v: &[Complex64]) -> Vec<Complex64> {
        if !self.nonlinear {
            return vec![Complex64::new(0.0, 0.0); v.len()];
        }
        let masked: Vec<Complex64> = v.iter().zip(&self.mask).map(|(c, m)| c * m).collect();
        let u = self.transform.inverse(&masked);
        let sq: Vec<f64> = u.iter().map(|x| x * x).collect();
        let mut out = self.transform.forward(&sq);
        for ((o, m), k) in out.iter_mut().zip(&self.mask).zip(&self.coeffs.wavenumber) {
            *o *= Complex64::new(0.0, -0.5 * k) * m;
        }
        out
    }

    pub fn step(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let c = &self.coeffs;
        let nv = self.nonlinear_term(v);
        let a: Vec<Complex64> = (0..v.len())
            .map(|i| c.e2[i] * v[i] + c.q[i] * nv[i])
            .collect();
        let na = self.nonlinear_term(&a);
        let b: Vec<Complex64> = (0..v.len())
            .map(|i| c.e2[i] * v[i] + c.q[i] * na[i])
            .collect();
        let nb = self.nonlinear_term(&b);
        let cc: Vec<Complex64> = (0..v.len())
            .map(|i| c.e2[i] * a[i] + c.q[i] * (2.0 * nb[i] - nv[i]))
            .collect();
        let nc = self.nonlinear_term(&cc);
        let mut next = Vec::with_capacity(v.len());
        for i in 0..v.len() {
            let x = c.e[i] * v[i] + c.f1[i] * nv[i] + c.f2[i] * (na[i] + nb[i]) + c.f3[i] * nc[i];
            if !(x.re.is_finite() && x.im.is_finite()) {
                return Err(MnoError::BlowUp {
                    step: 0,
                    detail: format!("KS mode {i} became non-finite"),
                });
            }
            next.push(x);
        }
        // the stored zero mode and Nyquist coefficient of a real field are real
        next[0].im = 0.0;
        let last = next.len() - 1;
        next[last].im = 0.0;
        Ok(next)
    }

    pub fn advance(&self, v: &[Complex64], steps: usize) -> Result<Vec<Complex64>> {
        let mut state = v.to_vec();
        for k in 0..steps {
            state = self.step(&state).map_err(|e| with_step(e, k))?;
        }
        Ok(state)
    }

    /// Advances a grid-space field by `steps` inner steps.
    pub fn advance_grid(&self, u: &[f64], steps: usize) -> Result<Vec<f64>> {
        let v = self.transform.forward(u);
        let out = self.advance(&v, steps)?;
        Ok(self.transform.inverse(&out))
    }
}

fn with_step(e: MnoError, step: usize) -> MnoError {
    match e {
        MnoError::BlowUp { detail, .. } => MnoError::BlowUp { step, detail },
        other => other,
    }
}

/// One ETDRK4 step of a spectral field.
pub fn ks_etdrk4_step(u_hat: &SpectralField, solver: &KsSolver) -> Result<SpectralField> {
    if u_hat.domain != solver.domain() {
        return Err(MnoError::Shape("field and solver domains differ".into()));
    }
    Ok(SpectralField {
        domain: u_hat.domain,
        coeffs: solver.step(&u_hat.coeffs)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::GridField;

    #[test]
    fn zero_mode_takes_rk4_limits() {
        let dt = 0.25;
        let c = ks_precompute(Domain::line(64, 32.0 * PI), dt).unwrap();
        assert_eq!(c.linear[0], 0.0);
        assert_eq!(c.e[0], 1.0);
        assert!((c.q[0] - dt / 2.0).abs() < 1e-14);
        assert!((c.f1[0] - dt / 6.0).abs() < 1e-14);
        assert!((c.f2[0] - dt / 3.0).abs() < 1e-14);
        assert!((c.f3[0] - dt / 6.0).abs() < 1e-14);
    }

    #[test]
    fn linear_symbol_values() {
        let c = ks_precompute(Domain::line(16, 2.0 * PI), 0.1).unwrap();
        assert!(c.linear[1].abs() < 1e-14);
        let c = ks_precompute(Domain::line(128, 32.0 * PI), 0.1).unwrap();
        assert!(c.linear[16].abs() < 1e-12);
        assert!((c.linear[32] + 12.0).abs() < 1e-12);
    }

    #[test]
    fn origin_is_a_fixed_point() {
        let solver = KsSolver::new(Domain::line(64, 32.0 * PI), 0.25).unwrap();
        let zero = vec![Complex64::new(0.0, 0.0); 33];
        assert!(solver.step(&zero).unwrap().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn linear_part_is_exact_per_mode() {
        let domain = Domain::line(64, 32.0 * PI);
        let dt = 0.25;
        let solver = KsSolver::new(domain, dt).unwrap().linear_only();
        for mode in [1usize, 5, 16, 20] {
            let mut v = vec![Complex64::new(0.0, 0.0); 33];
            v[mode] = Complex64::new(0.3, -0.2);
            let steps = 40;
            let out = solver.advance(&v, steps).unwrap();
            let exact = v[mode] * (solver.coeffs.linear[mode] * dt * steps as f64).exp();
            assert!((out[mode] - exact).norm() < 1e-10, "mode {mode}");
        }
    }

    #[test]
    fn mean_zero_field_keeps_zero_mode() {
        let domain = Domain::line(128, 32.0 * PI);
        let solver = KsSolver::new(domain, 0.25).unwrap();
        let u = GridField::from_fn(domain, |x, _| (x / 16.0).cos() * (1.0 + (x / 16.0).sin()));
        let t = Transform::new(domain);
        let mut v = t.forward(&u.values);
        v[0] = Complex64::new(0.0, 0.0);
        let out = solver.advance(&v, 20).unwrap();
        assert!(out[0].norm() < 1e-15);
    }

    #[test]
    fn self_convergence_is_fourth_order() {
        let domain = Domain::line(128, 32.0 * PI);
        let u = GridField::from_fn(domain, |x, _| (x / 16.0).cos() * (1.0 + (x / 16.0).sin()));
        let run = |dt: f64| {
            let steps = (1.0 / dt).round() as usize;
            KsSolver::new(domain, dt)
                .unwrap()
                .advance_grid(&u.values, steps)
                .unwrap()
        };
        let coarse = run(0.25);
        let mid = run(0.125);
        let fine = run(0.0625);
        let dist = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let order = (dist(&coarse, &fine) / dist(&mid, &fine)).log2();
        assert!(order > 3.0, "observed order {order}");
    }
}
