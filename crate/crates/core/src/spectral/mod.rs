//! Periodic Fourier machinery shared by the solvers, the surrogates and the
//! statistics.
//!
//! Coefficients follow the normalized convention
//! `f̂(n) = N^-d Σ_x f(x) exp(-i 2π n·x / N)`, so coefficient magnitudes do not
//! depend on resolution and the inverse transform is a plain sum. Real fields
//! are stored as half spectra: `N/2 + 1` coefficients in 1D, and `N` rows of
//! `N/2 + 1` coefficients (row index = `k_y`, column index = `k_x`) in 2D.

mod sobolev;
mod vorticity;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{MnoError, Result};

pub use sobolev::{relative_sobolev_loss, sobolev_loss_with_grad, sobolev_norm, SobolevSpec};
pub use vorticity::{
    curl, divergence, streamfunction, streamfunction_hat, velocity_hat, vorticity_to_velocity,
};

pub use rustfft::num_complex::Complex64 as Complex;

/// A periodic grid: a segment `[0, L)` or a square `[0, L)²`, with `n` points
/// per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Line { n: usize, length: f64 },
    Square { n: usize, length: f64 },
}

impl Domain {
    pub fn line(n: usize, length: f64) -> Self {
        Domain::Line { n, length }
    }

    /// The `[0, 2π)²` square used by the Kolmogorov flow.
    pub fn square(n: usize) -> Self {
        Domain::Square {
            n,
            length: 2.0 * PI,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Line { .. } => 1,
            Domain::Square { .. } => 2,
        }
    }

    pub fn n(&self) -> usize {
        match *self {
            Domain::Line { n, .. } | Domain::Square { n, .. } => n,
        }
    }

    pub fn length(&self) -> f64 {
        match *self {
            Domain::Line { length, .. } | Domain::Square { length, .. } => length,
        }
    }

    /// Number of grid points.
    pub fn points(&self) -> usize {
        match *self {
            Domain::Line { n, .. } => n,
            Domain::Square { n, .. } => n * n,
        }
    }

    /// Number of stored half-spectrum coefficients.
    pub fn spectral_len(&self) -> usize {
        match *self {
            Domain::Line { n, .. } => n / 2 + 1,
            Domain::Square { n, .. } => n * (n / 2 + 1),
        }
    }

    /// Grid shape as recorded in file headers.
    pub fn shape(&self) -> Vec<usize> {
        match *self {
            Domain::Line { n, .. } => vec![n],
            Domain::Square { n, .. } => vec![n, n],
        }
    }

    /// `2π / L`: the physical wavenumber of the first harmonic.
    pub fn base_wavenumber(&self) -> f64 {
        2.0 * PI / self.length()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n < 4 || !n.is_power_of_two() {
            return Err(MnoError::validation(
                "system.resolution",
                format!("must be a power of two >= 4, got {n}"),
            ));
        }
        let length = self.length();
        if !(length.is_finite() && length > 0.0) {
            return Err(MnoError::validation(
                "system.domain_length",
                format!("must be positive, got {length}"),
            ));
        }
        Ok(())
    }

    /// Signed integer mode numbers `(k_x, k_y)` of every stored coefficient.
    /// In 1D `k_y` is always 0.
    pub fn mode_numbers(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        let n = self.n();
        let half = n / 2 + 1;
        let len = self.spectral_len();
        let dim = self.dim();
        (0..len).map(move |idx| {
            if dim == 1 {
                (idx as i64, 0)
            } else {
                let row = idx / half;
                let col = idx % half;
                (col as i64, signed_mode(row, n))
            }
        })
    }

    /// Per-coefficient mode table (wavenumbers and Hermitian multiplicities).
    pub fn modes(&self) -> ModeTable {
        ModeTable::new(*self)
    }
}

/// Maps an FFT bin index to its signed mode number, with the Nyquist bin
/// reported as `+n/2`.
pub fn signed_mode(index: usize, n: usize) -> i64 {
    if index <= n / 2 {
        index as i64
    } else {
        index as i64 - n as i64
    }
}

/// Physical wavenumbers and multiplicities of every stored coefficient.
///
/// `multiplicity` is the number of full-spectrum coefficients a stored entry
/// stands for: sums of `multiplicity · |f̂|²` over the half spectrum equal the
/// same sum over the full spectrum.
#[derive(Clone, Debug)]
pub struct ModeTable {
    pub kx: Vec<f64>,
    pub ky: Vec<f64>,
    pub kappa_sq: Vec<f64>,
    pub multiplicity: Vec<f64>,
    /// Whether the entry sits on the Nyquist line of some axis.
    pub nyquist_x: Vec<bool>,
    pub nyquist_y: Vec<bool>,
}

impl ModeTable {
    fn new(domain: Domain) -> Self {
        let n = domain.n() as i64;
        let base = domain.base_wavenumber();
        let len = domain.spectral_len();
        let mut table = ModeTable {
            kx: Vec::with_capacity(len),
            ky: Vec::with_capacity(len),
            kappa_sq: Vec::with_capacity(len),
            multiplicity: Vec::with_capacity(len),
            nyquist_x: Vec::with_capacity(len),
            nyquist_y: Vec::with_capacity(len),
        };
        for (mx, my) in domain.mode_numbers() {
            let kx = base * mx as f64;
            let ky = base * my as f64;
            table.kx.push(kx);
            table.ky.push(ky);
            table.kappa_sq.push(kx * kx + ky * ky);
            let edge = mx == 0 || mx == n / 2;
            table.multiplicity.push(if edge { 1.0 } else { 2.0 });
            table.nyquist_x.push(mx == n / 2);
            table.nyquist_y.push(domain.dim() == 2 && my == n / 2);
        }
        table
    }

    pub fn len(&self) -> usize {
        self.kx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kx.is_empty()
    }
}

/// A real field sampled on a periodic grid (row-major, `x` fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub domain: Domain,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(domain: Domain, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.points() {
            return Err(MnoError::Shape(format!(
                "grid of {} points given {} values",
                domain.points(),
                values.len()
            )));
        }
        Ok(GridField { domain, values })
    }

    pub fn zeros(domain: Domain) -> Self {
        GridField {
            domain,
            values: vec![0.0; domain.points()],
        }
    }

    /// Samples `f` at the grid points; 1D calls receive `y = 0`.
    pub fn from_fn(domain: Domain, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = domain.n();
        let dx = domain.length() / n as f64;
        let values = match domain {
            Domain::Line { .. } => (0..n).map(|i| f(i as f64 * dx, 0.0)).collect(),
            Domain::Square { .. } => (0..n * n)
                .map(|idx| f((idx % n) as f64 * dx, (idx / n) as f64 * dx))
                .collect(),
        };
        GridField { domain, values }
    }

    /// Root-mean-square value, equal to the coefficient ℓ² norm.
    pub fn rms(&self) -> f64 {
        rms(&self.values)
    }
}

pub fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// Half-spectrum Fourier coefficients of a real field.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    pub domain: Domain,
    pub coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(domain: Domain) -> Self {
        SpectralField {
            domain,
            coeffs: vec![Complex64::new(0.0, 0.0); domain.spectral_len()],
        }
    }

    /// Σ |f̂|² over the full spectrum.
    pub fn energy(&self) -> f64 {
        let modes = self.domain.modes();
        self.coeffs
            .iter()
            .zip(&modes.multiplicity)
            .map(|(c, m)| m * c.norm_sqr())
            .sum()
    }
}

struct Plans {
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    col_fwd: Option<Arc<dyn Fft<f64>>>,
    col_inv: Option<Arc<dyn Fft<f64>>>,
}

type PlanCache = Mutex<HashMap<(usize, usize), Arc<Plans>>>;

fn plans_for(dim: usize, n: usize) -> Arc<Plans> {
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry((dim, n))
        .or_insert_with(|| {
            let mut real = RealFftPlanner::<f64>::new();
            let (col_fwd, col_inv) = if dim == 2 {
                let mut planner = FftPlanner::<f64>::new();
                (
                    Some(planner.plan_fft_forward(n)),
                    Some(planner.plan_fft_inverse(n)),
                )
            } else {
                (None, None)
            };
            Arc::new(Plans {
                r2c: real.plan_fft_forward(n),
                c2r: real.plan_fft_inverse(n),
                col_fwd,
                col_inv,
            })
        })
        .clone()
}

/// Forward/inverse real transforms for one domain. Cheap to construct; plans
/// are cached process-wide.
#[derive(Clone)]
pub struct Transform {
    domain: Domain,
    plans: Arc<Plans>,
}

impl Transform {
    pub fn new(domain: Domain) -> Self {
        Transform {
            domain,
            plans: plans_for(domain.dim(), domain.n()),
        }
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.domain.spectral_len()];
        self.forward_into(values, &mut out);
        out
    }

    pub fn forward_into(&self, values: &[f64], out: &mut [Complex64]) {
        let n = self.domain.n();
        let half = n / 2 + 1;
        debug_assert_eq!(values.len(), self.domain.points());
        debug_assert_eq!(out.len(), self.domain.spectral_len());
        let mut row = vec![0.0; n];
        match self.domain {
            Domain::Line { .. } => {
                row.copy_from_slice(values);
                self.plans
                    .r2c
                    .process(&mut row, out)
                    .expect("buffer sizes match the plan");
                let scale = 1.0 / n as f64;
                out.iter_mut().for_each(|c| *c *= scale);
            }
            Domain::Square { .. } => {
                for r in 0..n {
                    row.copy_from_slice(&values[r * n..(r + 1) * n]);
                    self.plans
                        .r2c
                        .process(&mut row, &mut out[r * half..(r + 1) * half])
                        .expect("buffer sizes match the plan");
                }
                let fwd = self.plans.col_fwd.as_ref().expect("2D plan");
                let mut col = vec![Complex64::new(0.0, 0.0); n];
                let scale = 1.0 / (n * n) as f64;
                for c in 0..half {
                    for r in 0..n {
                        col[r] = out[r * half + c];
                    }
                    fwd.process(&mut col);
                    for r in 0..n {
                        out[r * half + c] = col[r] * scale;
                    }
                }
            }
        }
    }

    /// Inverse transform. The imaginary parts of the `k_x = 0` and Nyquist
    /// columns are discarded after the `y` pass, i.e. the result is
    /// `Σ_k c_kx Re(f̂(k) e^{iκ·x})` with `c = 1` on those columns and 2
    /// elsewhere.
    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut out = vec![0.0; self.domain.points()];
        self.inverse_into(coeffs, &mut out);
        out
    }

    pub fn inverse_into(&self, coeffs: &[Complex64], out: &mut [f64]) {
        let n = self.domain.n();
        let half = n / 2 + 1;
        debug_assert_eq!(coeffs.len(), self.domain.spectral_len());
        debug_assert_eq!(out.len(), self.domain.points());
        match self.domain {
            Domain::Line { .. } => {
                let mut buf = coeffs.to_vec();
                buf[0].im = 0.0;
                buf[half - 1].im = 0.0;
                self.plans
                    .c2r
                    .process(&mut buf, out)
                    .expect("buffer sizes match the plan");
            }
            Domain::Square { .. } => {
                let mut buf = coeffs.to_vec();
                let inv = self.plans.col_inv.as_ref().expect("2D plan");
                let mut col = vec![Complex64::new(0.0, 0.0); n];
                for c in 0..half {
                    for r in 0..n {
                        col[r] = buf[r * half + c];
                    }
                    inv.process(&mut col);
                    for r in 0..n {
                        buf[r * half + c] = col[r];
                    }
                }
                for r in 0..n {
                    let row = &mut buf[r * half..(r + 1) * half];
                    row[0].im = 0.0;
                    row[half - 1].im = 0.0;
                    self.plans
                        .c2r
                        .process(row, &mut out[r * n..(r + 1) * n])
                        .expect("buffer sizes match the plan");
                }
            }
        }
    }
}

pub fn transform_forward(field: &GridField) -> SpectralField {
    let transform = Transform::new(field.domain);
    SpectralField {
        domain: field.domain,
        coeffs: transform.forward(&field.values),
    }
}

pub fn transform_inverse(spectrum: &SpectralField) -> GridField {
    let transform = Transform::new(spectrum.domain);
    GridField {
        domain: spectrum.domain,
        values: transform.inverse(&spectrum.coeffs),
    }
}

/// Differentiation axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Multiplies each coefficient by `(iκ)^order` along `axis`. The Nyquist line
/// of that axis is zeroed for odd orders.
pub fn spectral_derivative(f_hat: &SpectralField, order: u32, axis: Axis) -> SpectralField {
    let modes = f_hat.domain.modes();
    let mut out = f_hat.clone();
    if axis == Axis::Y && f_hat.domain.dim() == 1 {
        if order > 0 {
            out.coeffs
                .iter_mut()
                .for_each(|c| *c = Complex64::new(0.0, 0.0));
        }
        return out;
    }
    let ik_pow = |k: f64| Complex64::new(0.0, k).powu(order);
    for (idx, c) in out.coeffs.iter_mut().enumerate() {
        let (k, nyquist) = match axis {
            Axis::X => (modes.kx[idx], modes.nyquist_x[idx]),
            Axis::Y => (modes.ky[idx], modes.nyquist_y[idx]),
        };
        if order % 2 == 1 && nyquist {
            *c = Complex64::new(0.0, 0.0);
        } else {
            *c *= ik_pow(k);
        }
    }
    out
}

/// Per-mode weights `|κ|^{2i}` used by the order-`i` Sobolev terms.
pub fn gradient_weight(modes: &ModeTable, order: u32) -> Vec<f64> {
    modes
        .kappa_sq
        .iter()
        .map(|k2| k2.powi(order as i32))
        .collect()
}

/// 2/3-rule dealiasing mask: keeps modes with `|n| <= N/3` on every axis.
pub fn dealias_mask(domain: Domain) -> Vec<f64> {
    let cutoff = (domain.n() / 3) as i64;
    domain
        .mode_numbers()
        .map(|(mx, my)| {
            if mx.abs() <= cutoff && my.abs() <= cutoff && mx != domain.n() as i64 / 2 {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Band-limited resampling to a finer grid by zero padding in Fourier space.
pub fn upsample(field: &GridField, n_fine: usize) -> Result<GridField> {
    let n = field.domain.n();
    if n_fine < n || !n_fine.is_power_of_two() {
        return Err(MnoError::validation(
            "resolution",
            format!("cannot resample {n} points to {n_fine}"),
        ));
    }
    let fine_domain = match field.domain {
        Domain::Line { length, .. } => Domain::line(n_fine, length),
        Domain::Square { length, .. } => Domain::Square { n: n_fine, length },
    };
    let coarse = Transform::new(field.domain).forward(&field.values);
    let mut fine = vec![Complex64::new(0.0, 0.0); fine_domain.spectral_len()];
    let half = n / 2 + 1;
    let fine_half = n_fine / 2 + 1;
    match field.domain {
        Domain::Line { .. } => {
            // the coarse Nyquist coefficient is split between ±N/2 on the fine grid
            fine[..half - 1].copy_from_slice(&coarse[..half - 1]);
            fine[half - 1] = Complex64::new(coarse[half - 1].re * 0.5, 0.0);
        }
        Domain::Square { .. } => {
            for (idx, c) in coarse.iter().enumerate() {
                let row = idx / half;
                let col = idx % half;
                let my = signed_mode(row, n);
                if col == half - 1 || my == n as i64 / 2 {
                    continue;
                }
                let fine_row = if my >= 0 {
                    my as usize
                } else {
                    (n_fine as i64 + my) as usize
                };
                fine[fine_row * fine_half + col] = *c;
            }
        }
    }
    let values = Transform::new(fine_domain).inverse(&fine);
    GridField::new(fine_domain, values)
}
