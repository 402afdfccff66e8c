//! Mean-zero Gaussian random fields with covariance
//! `prefactor · (−Δ + shift)^{−α}` on periodic grids.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{MnoError, Result};
use crate::spectral::{signed_mode, Domain, GridField, Transform};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrfSpec {
    pub dimension: usize,
    pub alpha: f64,
    pub tau: f64,
    pub prefactor: f64,
    pub domain_length: f64,
    /// Additive shift of `|κ|²` in the covariance eigenvalue.
    pub shift: f64,
}

impl GrfSpec {
    /// `L^{−2/α} τ^{(2α−1)/2} (−Δ + τ²/L²)^{−α}` with `α = 2`, `τ = 7`.
    pub fn kuramoto_sivashinsky(length: f64) -> Self {
        let (alpha, tau) = (2.0f64, 7.0f64);
        GrfSpec {
            dimension: 1,
            alpha,
            tau,
            prefactor: length.powf(-2.0 / alpha) * tau.powf(0.5 * (2.0 * alpha - 1.0)),
            domain_length: length,
            shift: tau * tau / (length * length),
        }
    }

    /// `7^{3/2} (−Δ + 49)^{−2.5}` on `[0, 2π)²`.
    pub fn kolmogorov() -> Self {
        GrfSpec {
            dimension: 2,
            alpha: 2.5,
            tau: 7.0,
            prefactor: 7f64.powf(1.5),
            domain_length: std::f64::consts::TAU,
            shift: 49.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("alpha", self.alpha),
            ("tau", self.tau),
            ("prefactor", self.prefactor),
            ("domain_length", self.domain_length),
        ];
        for (name, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MnoError::validation(
                    format!("system.grf.{name}"),
                    format!("must be positive, got {v}"),
                ));
            }
        }
        if !(self.shift >= 0.0 && self.shift.is_finite()) {
            return Err(MnoError::validation(
                "system.grf.shift",
                "must be non-negative",
            ));
        }
        if self.dimension != 1 && self.dimension != 2 {
            return Err(MnoError::validation(
                "system.grf.dimension",
                "must be 1 or 2",
            ));
        }
        Ok(())
    }

    /// Covariance eigenvalue of the Fourier mode with `|κ|² = kappa_sq`.
    pub fn eigenvalue(&self, kappa_sq: f64) -> f64 {
        self.prefactor * (kappa_sq + self.shift).powf(-self.alpha)
    }

    /// Standard deviation of the Fourier coefficient of a mode. The
    /// covariance eigenfunctions are `e^{iκ·x}/√|D|`, orthonormal in `L²(D)`,
    /// so a coefficient carries `√(λ/|D|)`.
    pub fn coefficient_sd(&self, kappa_sq: f64) -> f64 {
        (self.eigenvalue(kappa_sq) / self.domain_length.powi(self.dimension as i32)).sqrt()
    }

    pub fn domain(&self, resolution: usize) -> Domain {
        if self.dimension == 1 {
            Domain::line(resolution, self.domain_length)
        } else {
            Domain::Square {
                n: resolution,
                length: self.domain_length,
            }
        }
    }
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Half-spectrum coefficients of one draw: each mode is `√(λ/|D|) · z` with
/// `z` a standard complex Gaussian (`E|z|² = 1`); self-conjugate modes are
/// real; the zero mode is 0.
pub fn grf_coefficients<R: Rng + ?Sized>(
    spec: &GrfSpec,
    domain: Domain,
    rng: &mut R,
) -> Vec<Complex64> {
    let n = domain.n();
    let half = n / 2 + 1;
    let modes = domain.modes();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); domain.spectral_len()];
    match domain {
        Domain::Line { .. } => {
            for k in 1..half {
                let sd = spec.coefficient_sd(modes.kappa_sq[k]);
                coeffs[k] = if k == half - 1 {
                    let g: f64 = StandardNormal.sample(rng);
                    Complex64::new(sd * g, 0.0)
                } else {
                    complex_normal(rng) * sd
                };
            }
        }
        Domain::Square { .. } => {
            for row in 0..n {
                for col in 0..half {
                    let idx = row * half + col;
                    let sd = spec.coefficient_sd(modes.kappa_sq[idx]);
                    let edge = col == 0 || col == half - 1;
                    let my = signed_mode(row, n);
                    if !edge {
                        coeffs[idx] = complex_normal(rng) * sd;
                    } else if my == 0 || my == n as i64 / 2 {
                        if !(col == 0 && my == 0) {
                            let g: f64 = StandardNormal.sample(rng);
                            coeffs[idx] = Complex64::new(sd * g, 0.0);
                        }
                    } else if my > 0 {
                        let z = complex_normal(rng) * sd;
                        coeffs[idx] = z;
                        coeffs[(n - row) * half + col] = z.conj();
                    }
                }
            }
        }
    }
    coeffs
}

pub fn grf_sample<R: Rng + ?Sized>(
    spec: &GrfSpec,
    resolution: usize,
    rng: &mut R,
) -> Result<GridField> {
    spec.validate()?;
    let domain = spec.domain(resolution);
    domain.validate()?;
    let coeffs = grf_coefficients(spec, domain, rng);
    GridField::new(domain, Transform::new(domain).inverse(&coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rustfft::FftPlanner;
    use std::f64::consts::PI;

    #[test]
    fn eigenvalues_follow_closed_forms() {
        let l = 32.0 * PI;
        let ks = GrfSpec::kuramoto_sivashinsky(l);
        let kappa = 2.0 * PI * 3.0 / l;
        let expected = l.powf(-1.0) * 7f64.powf(1.5) * (kappa * kappa + 49.0 / (l * l)).powf(-2.0);
        assert!((ks.eigenvalue(kappa * kappa) / expected - 1.0).abs() < 1e-14);
        let ns = GrfSpec::kolmogorov();
        assert!((ns.eigenvalue(25.0) - 7f64.powf(1.5) * 74f64.powf(-2.5)).abs() < 1e-18);
    }

    #[test]
    fn ks_samples_have_zero_mean_and_analytic_mode_variances() {
        let l = 32.0 * PI;
        let spec = GrfSpec::kuramoto_sivashinsky(l);
        let domain = Domain::line(32, l);
        let t = Transform::new(domain);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let samples = 10_000;
        let probe = [1usize, 2, 5];
        let mut var = [0.0; 3];
        let mut point_sum = vec![0.0; 32];
        let mut point_sq = vec![0.0; 32];
        let mut cross = Complex64::new(0.0, 0.0);
        for _ in 0..samples {
            let f = grf_sample(&spec, 32, &mut rng).unwrap();
            for (i, v) in f.values.iter().enumerate() {
                point_sum[i] += v;
                point_sq[i] += v * v;
            }
            let c = t.forward(&f.values);
            for (j, &k) in probe.iter().enumerate() {
                var[j] += c[k].norm_sqr();
            }
            cross += c[1] * c[2].conj();
        }
        for (j, &k) in probe.iter().enumerate() {
            let lambda = spec.eigenvalue((2.0 * PI * k as f64 / l).powi(2));
            let rel = l * (var[j] / samples as f64) / lambda - 1.0;
            assert!(rel.abs() < 0.1, "mode {k}: {rel}");
        }
        // mean within three Monte-Carlo standard errors at every point
        for i in 0..32 {
            let mean = point_sum[i] / samples as f64;
            let sd = (point_sq[i] / samples as f64 - mean * mean).sqrt();
            assert!(mean.abs() < 3.0 * sd / (samples as f64).sqrt(), "point {i}");
        }
        // cross-mode covariance vanishes within three standard errors
        let l1 = spec.eigenvalue((2.0 * PI / l).powi(2));
        let l2 = spec.eigenvalue((4.0 * PI / l).powi(2));
        let se = (l1 * l2 / samples as f64).sqrt() / l;
        assert!((cross / samples as f64).norm() < 3.0 * se);
    }

    #[test]
    fn two_dimensional_samples_are_real_and_hermitian() {
        let spec = GrfSpec::kolmogorov();
        let domain = Domain::square(16);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let coeffs = grf_coefficients(&spec, domain, &mut rng);
        // complete the full spectrum and invert with a complex FFT
        let n = 16;
        let half = 9;
        let mut full = vec![Complex64::new(0.0, 0.0); n * n];
        for row in 0..n {
            for col in 0..n {
                full[row * n + col] = if col < half {
                    coeffs[row * half + col]
                } else {
                    coeffs[((n - row) % n) * half + (n - col)].conj()
                };
            }
        }
        let mut planner = FftPlanner::<f64>::new();
        let inv = planner.plan_fft_inverse(n);
        for row in full.chunks_mut(n) {
            inv.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for c in 0..n {
            for r in 0..n {
                col[r] = full[r * n + c];
            }
            inv.process(&mut col);
            for r in 0..n {
                full[r * n + c] = col[r];
            }
        }
        let max_im = full.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        assert!(max_im < 1e-12, "{max_im}");
        let f = GridField::new(domain, Transform::new(domain).inverse(&coeffs)).unwrap();
        for (z, v) in full.iter().zip(&f.values) {
            assert!((z.re - v).abs() < 1e-12);
        }
    }

    #[test]
    fn two_dimensional_variances_match_eigenvalues() {
        let spec = GrfSpec::kolmogorov();
        let domain = Domain::square(8);
        let t = Transform::new(domain);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let samples = 10_000;
        // (kx, ky) = (1, 2) and (0, 3)
        let probes = [(2 * 5 + 1, 5.0), (3 * 5, 9.0)];
        let mut acc = [0.0; 2];
        let area = (2.0 * PI).powi(2);
        for _ in 0..samples {
            let f = grf_sample(&spec, 8, &mut rng).unwrap();
            let c = t.forward(&f.values);
            for (j, (idx, _)) in probes.iter().enumerate() {
                acc[j] += c[*idx].norm_sqr();
            }
        }
        for (j, (_, k2)) in probes.iter().enumerate() {
            let rel = area * acc[j] / samples as f64 / spec.eigenvalue(*k2) - 1.0;
            assert!(rel.abs() < 0.1, "probe {j}: {rel}");
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = GrfSpec::kolmogorov();
        s.alpha = 0.0;
        assert!(s.validate().is_err());
        let mut s = GrfSpec::kolmogorov();
        s.tau = -1.0;
        assert!(s.validate().is_err());
    }
}
