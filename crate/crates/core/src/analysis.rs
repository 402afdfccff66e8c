//! Long rollouts and time-averaged statistics of trajectories.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{MnoError, Result};
use crate::spectral::{velocity_hat, Domain, SpectralField, Transform};
use crate::state::StateSpace;
use crate::systems::SystemKind;

/// Header data of a trajectory. `domain_length` is 0 for vector states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    #[serde(default)]
    pub system: Option<SystemKind>,
    pub grid_shape: Vec<usize>,
    pub domain_length: f64,
    pub h: f64,
    /// Seed of a sampled initial state, 0 otherwise.
    #[serde(default)]
    pub seed: u64,
    pub provenance: String,
}

impl TrajectoryMeta {
    pub fn for_space(space: &StateSpace, h: f64, provenance: impl Into<String>) -> Self {
        let (grid_shape, domain_length) = match space.domain() {
            Some(d) => (d.shape(), d.length()),
            None => (vec![space.dim()], 0.0),
        };
        TrajectoryMeta {
            system: None,
            grid_shape,
            domain_length,
            h,
            seed: 0,
            provenance: provenance.into(),
        }
    }

    pub fn state_len(&self) -> usize {
        self.grid_shape.iter().product()
    }

    pub fn domain(&self) -> Option<Domain> {
        if self.domain_length <= 0.0 {
            return None;
        }
        match self.grid_shape.as_slice() {
            [n] => Some(Domain::line(*n, self.domain_length)),
            [n, m] if n == m => Some(Domain::Square {
                n: *n,
                length: self.domain_length,
            }),
            _ => None,
        }
    }

    pub fn space(&self) -> StateSpace {
        match self.domain() {
            Some(d) => StateSpace::field(d),
            None => StateSpace::Vector(self.state_len()),
        }
    }
}

/// Snapshots `u_0, u_1, …` a fixed step `h` apart, stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub meta: TrajectoryMeta,
    pub data: Vec<f64>,
}

impl Trajectory {
    pub fn new(meta: TrajectoryMeta, data: Vec<f64>) -> Result<Self> {
        let len = meta.state_len();
        if len == 0 || data.is_empty() || data.len() % len != 0 {
            return Err(MnoError::Shape(format!(
                "{} values do not form whole snapshots of {len}",
                data.len()
            )));
        }
        Ok(Trajectory { meta, data })
    }

    pub fn from_states(meta: TrajectoryMeta, states: &[Vec<f64>]) -> Result<Self> {
        Trajectory::new(meta, states.concat())
    }

    pub fn state_len(&self) -> usize {
        self.meta.state_len()
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.state_len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn snapshot(&self, i: usize) -> &[f64] {
        let n = self.state_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn snapshots(&self) -> std::slice::Chunks<'_, f64> {
        self.data.chunks(self.state_len())
    }

    /// Snapshots from `burn_in` on.
    pub fn window(&self, burn_in: usize) -> Result<std::slice::Chunks<'_, f64>> {
        if burn_in >= self.len() {
            return Err(MnoError::validation(
                "analysis.burn_in",
                format!("burn-in {burn_in} leaves no snapshots of {}", self.len()),
            ));
        }
        Ok(self.data[burn_in * self.state_len()..].chunks(self.state_len()))
    }

    fn field_domain(&self) -> Result<Domain> {
        self.meta
            .domain()
            .ok_or_else(|| MnoError::Shape("statistic needs field-valued snapshots".into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RolloutOptions {
    /// Factor applied to the initial state.
    pub perturb_scale: f64,
    /// Abort once a state norm exceeds this.
    pub blowup_bound: f64,
}

impl Default for RolloutOptions {
    fn default() -> Self {
        RolloutOptions {
            perturb_scale: 1.0,
            blowup_bound: f64::INFINITY,
        }
    }
}

/// `n` compositions of `step` from `u0`.
pub fn rollout(
    mut step: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    u0: &[f64],
    n: usize,
    meta: TrajectoryMeta,
    opts: RolloutOptions,
) -> Result<Trajectory> {
    let space = meta.space();
    space.check(u0)?;
    let mut data = Vec::with_capacity((n + 1) * u0.len());
    let mut u: Vec<f64> = u0.iter().map(|v| v * opts.perturb_scale).collect();
    let check = |u: &[f64], k: usize| -> Result<()> {
        let norm = space.norm(u);
        if !norm.is_finite() {
            return Err(MnoError::BlowUp {
                step: k,
                detail: "state became non-finite".into(),
            });
        }
        if norm > opts.blowup_bound {
            return Err(MnoError::BlowUp {
                step: k,
                detail: format!(
                    "state norm {norm:.4e} exceeds bound {:.4e}",
                    opts.blowup_bound
                ),
            });
        }
        Ok(())
    };
    check(&u, 0)?;
    data.extend_from_slice(&u);
    for k in 1..=n {
        u = step(&u).map_err(|e| match e {
            MnoError::BlowUp { detail, .. } => MnoError::BlowUp { step: k, detail },
            other => other,
        })?;
        space.check(&u)?;
        check(&u, k)?;
        data.extend_from_slice(&u);
    }
    Trajectory::new(meta, data)
}

/// Mean of `g` over the snapshots from `burn_in` on.
pub fn time_average(traj: &Trajectory, g: impl Fn(&[f64]) -> f64, burn_in: usize) -> Result<f64> {
    let window = traj.window(burn_in)?;
    let count = traj.len() - burn_in;
    Ok(window.map(g).sum::<f64>() / count as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    /// 1D: mean `|f̂(n)|` per mode number.
    Magnitude,
    /// 2D: shell sums of `|ŵ|²`.
    Vorticity,
    /// 2D: shell sums of `½|û|²` with `u` recovered from the vorticity.
    Velocity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub kind: SpectrumKind,
    /// Integer mode numbers (1D) or shell indices `k ≤ |n| < k + 1` (2D).
    pub wavenumbers: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn fourier_spectrum(traj: &Trajectory, kind: SpectrumKind, burn_in: usize) -> Result<Spectrum> {
    let domain = traj.field_domain()?;
    let transform = Transform::new(domain);
    let count = (traj.len().saturating_sub(burn_in)) as f64;
    match (domain.dim(), kind) {
        (1, SpectrumKind::Magnitude) => {
            let mut acc = vec![0.0; domain.spectral_len()];
            for u in traj.window(burn_in)? {
                for (a, c) in acc.iter_mut().zip(transform.forward(u)) {
                    *a += c.norm();
                }
            }
            Ok(Spectrum {
                kind,
                wavenumbers: (0..acc.len()).map(|k| k as f64).collect(),
                values: acc.into_iter().map(|a| a / count).collect(),
            })
        }
        (2, SpectrumKind::Vorticity | SpectrumKind::Velocity) => {
            let n = domain.n() as f64;
            let shells = ((n / 2.0) * std::f64::consts::SQRT_2).floor() as usize + 1;
            let mut acc = vec![0.0; shells];
            let modes = domain.modes();
            let bins: Vec<usize> = domain
                .mode_numbers()
                .map(|(mx, my)| ((mx * mx + my * my) as f64).sqrt().floor() as usize)
                .collect();
            for w in traj.window(burn_in)? {
                let w_hat = SpectralField {
                    domain,
                    coeffs: transform.forward(w),
                };
                let energy: Vec<f64> = if kind == SpectrumKind::Vorticity {
                    w_hat.coeffs.iter().map(|c| c.norm_sqr()).collect()
                } else {
                    let (ux, uy) = velocity_hat(&w_hat);
                    ux.coeffs
                        .iter()
                        .zip(&uy.coeffs)
                        .map(|(a, b)| 0.5 * (a.norm_sqr() + b.norm_sqr()))
                        .collect()
                };
                for ((e, m), b) in energy.iter().zip(&modes.multiplicity).zip(&bins) {
                    acc[*b] += m * e;
                }
            }
            Ok(Spectrum {
                kind,
                wavenumbers: (0..shells).map(|k| k as f64).collect(),
                values: acc.into_iter().map(|a| a / count).collect(),
            })
        }
        _ => Err(MnoError::validation(
            "analysis.spectrum",
            format!(
                "{kind:?} spectrum does not apply to {}D fields",
                domain.dim()
            ),
        )),
    }
}

/// Time-averaged periodic autocorrelation `C(r) = ⟨u(x) u(x + r)⟩` on the
/// grid lags, computed from the averaged power spectrum. Row-major like the
/// snapshots; `C` at index 0 is the mean square.
pub fn spatial_correlation(traj: &Trajectory, burn_in: usize) -> Result<Vec<f64>> {
    let domain = traj.field_domain()?;
    let transform = Transform::new(domain);
    let count = (traj.len().saturating_sub(burn_in)) as f64;
    let mut power = vec![Complex64::new(0.0, 0.0); domain.spectral_len()];
    for u in traj.window(burn_in)? {
        for (p, c) in power.iter_mut().zip(transform.forward(u)) {
            p.re += c.norm_sqr() / count;
        }
    }
    Ok(transform.inverse(&power))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Autocorrelation {
    pub values: Vec<f64>,
    /// Variance below `1e-12 · mean²`; values are then all ones.
    pub degenerate: bool,
}

/// Normalized biased autocorrelation for lags `0..=max_lag`.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Autocorrelation> {
    let n = series.len();
    if n < 2 {
        return Err(MnoError::validation(
            "analysis.acf",
            "series needs at least 2 values",
        ));
    }
    let max_lag = max_lag.min(n - 1);
    let mean = series.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = series.iter().map(|a| a - mean).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if denom / n as f64 <= 1e-12 * mean * mean || denom == 0.0 {
        return Ok(Autocorrelation {
            values: vec![1.0; max_lag + 1],
            degenerate: true,
        });
    }
    let values = (0..=max_lag)
        .map(|lag| {
            dev[..n - lag]
                .iter()
                .zip(&dev[lag..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / denom
        })
        .collect();
    Ok(Autocorrelation {
        values,
        degenerate: false,
    })
}

/// Orthonormal modes (rows of `vectors`) around `mean`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PodBasis {
    pub mean: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
}

impl PodBasis {
    pub fn rank(&self) -> usize {
        self.vectors.len()
    }

    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        self.vectors
            .iter()
            .map(|phi| {
                phi.iter()
                    .zip(u)
                    .zip(&self.mean)
                    .map(|((p, x), m)| p * (x - m))
                    .sum()
            })
            .collect()
    }

    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut u = self.mean.clone();
        for (c, phi) in coords.iter().zip(&self.vectors) {
            u.iter_mut().zip(phi).for_each(|(x, p)| *x += c * p);
        }
        u
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PodResult {
    pub basis: PodBasis,
    /// Row per snapshot, column per mode.
    pub coordinates: Vec<Vec<f64>>,
}

/// Proper orthogonal decomposition by the method of snapshots, or a
/// projection onto `reference` when given.
pub fn pod_project(
    snapshots: &[&[f64]],
    rank: usize,
    reference: Option<&PodBasis>,
) -> Result<PodResult> {
    if let Some(basis) = reference {
        if rank > basis.rank() {
            return Err(MnoError::RankDeficient {
                requested: rank,
                achieved: basis.rank(),
            });
        }
        let basis = PodBasis {
            mean: basis.mean.clone(),
            vectors: basis.vectors[..rank].to_vec(),
            singular_values: basis.singular_values[..rank].to_vec(),
        };
        let coordinates = snapshots.iter().map(|u| basis.project(u)).collect();
        return Ok(PodResult { basis, coordinates });
    }
    let m = snapshots.len();
    if m == 0 {
        return Err(MnoError::validation("analysis.pod_rank", "no snapshots"));
    }
    let d = snapshots[0].len();
    if snapshots.iter().any(|s| s.len() != d) {
        return Err(MnoError::Shape("snapshots differ in size".into()));
    }
    if rank == 0 || rank > m.min(d) {
        return Err(MnoError::validation(
            "analysis.pod_rank",
            format!("rank must lie in 1..={}, got {rank}", m.min(d)),
        ));
    }
    let mut mean = vec![0.0; d];
    for s in snapshots {
        mean.iter_mut()
            .zip(*s)
            .for_each(|(a, b)| *a += b / m as f64);
    }
    let centered: Vec<Vec<f64>> = snapshots
        .iter()
        .map(|s| s.iter().zip(&mean).map(|(a, b)| a - b).collect())
        .collect();
    let gram: DMatrix<f64> = DMatrix::from_fn(m, m, |i, j| {
        centered[i]
            .iter()
            .zip(&centered[j])
            .map(|(a, b)| a * b)
            .sum()
    });
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let cutoff = top * 1e-12 * m as f64;
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(rank);
    let mut singular_values = Vec::with_capacity(rank);
    for &i in order.iter().take(rank) {
        let lambda = eig.eigenvalues[i];
        if !(lambda > cutoff) || top == 0.0 {
            break;
        }
        let mut phi = vec![0.0; d];
        for (row, coef) in centered.iter().zip(eig.eigenvectors.column(i).iter()) {
            phi.iter_mut().zip(row).for_each(|(p, x)| *p += coef * x);
        }
        // re-orthogonalize twice against the accepted modes
        for _ in 0..2 {
            for q in &vectors {
                let dot: f64 = q.iter().zip(&phi).map(|(a, b)| a * b).sum();
                phi.iter_mut().zip(q).for_each(|(p, a)| *p -= dot * a);
            }
        }
        let norm = phi.iter().map(|p| p * p).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            break;
        }
        phi.iter_mut().for_each(|p| *p /= norm);
        vectors.push(phi);
        singular_values.push(lambda.sqrt());
    }
    if vectors.len() < rank {
        return Err(MnoError::RankDeficient {
            requested: rank,
            achieved: vectors.len(),
        });
    }
    let basis = PodBasis {
        mean,
        vectors,
        singular_values,
    };
    let coordinates = snapshots.iter().map(|u| basis.project(u)).collect();
    Ok(PodResult { basis, coordinates })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowDiagnostics {
    /// Spatial mean of `|u(t) − ū|²`.
    pub tke: Vec<f64>,
    /// Spatial mean of `w(t)²` over `Re`.
    pub dissipation: Vec<f64>,
}

/// Turbulence statistics of a vorticity trajectory on the periodic square.
pub fn flow_diagnostics(
    traj: &Trajectory,
    reynolds: f64,
    burn_in: usize,
) -> Result<FlowDiagnostics> {
    let domain = traj.field_domain()?;
    if domain.dim() != 2 {
        return Err(MnoError::Shape(
            "flow diagnostics need 2D vorticity fields".into(),
        ));
    }
    if !(reynolds > 0.0) {
        return Err(MnoError::validation("system.reynolds", "must be positive"));
    }
    if traj.len() < burn_in + 2 {
        return Err(MnoError::validation(
            "analysis.burn_in",
            "flow diagnostics need at least 2 snapshots after burn-in",
        ));
    }
    let transform = Transform::new(domain);
    let points = domain.points();
    let velocities: Vec<(Vec<f64>, Vec<f64>)> = traj
        .window(burn_in)?
        .map(|w| {
            let w_hat = SpectralField {
                domain,
                coeffs: transform.forward(w),
            };
            let (ux, uy) = velocity_hat(&w_hat);
            (transform.inverse(&ux.coeffs), transform.inverse(&uy.coeffs))
        })
        .collect();
    let count = velocities.len() as f64;
    let mut mean_x = vec![0.0; points];
    let mut mean_y = vec![0.0; points];
    for (ux, uy) in &velocities {
        mean_x.iter_mut().zip(ux).for_each(|(m, v)| *m += v / count);
        mean_y.iter_mut().zip(uy).for_each(|(m, v)| *m += v / count);
    }
    let tke = velocities
        .iter()
        .map(|(ux, uy)| {
            let s: f64 = (0..points)
                .map(|i| (ux[i] - mean_x[i]).powi(2) + (uy[i] - mean_y[i]).powi(2))
                .sum();
            s / points as f64
        })
        .collect();
    let dissipation = traj
        .window(burn_in)?
        .map(|w| w.iter().map(|v| v * v).sum::<f64>() / points as f64 / reynolds)
        .collect();
    Ok(FlowDiagnostics { tke, dissipation })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Values below or above the range, counted in the edge bins.
    pub clamped_low: u64,
    pub clamped_high: u64,
}

impl Histogram {
    pub fn new(bins: usize, range: (f64, f64)) -> Result<Self> {
        let (lo, hi) = range;
        if bins < 2 {
            return Err(MnoError::validation(
                "analysis.histogram_bins",
                "must be at least 2",
            ));
        }
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(MnoError::validation(
                "analysis.histogram_range",
                format!("need a finite range lo < hi, got [{lo}, {hi}]"),
            ));
        }
        let width = (hi - lo) / bins as f64;
        Ok(Histogram {
            edges: (0..=bins)
                .map(|i| if i == bins { hi } else { lo + width * i as f64 })
                .collect(),
            counts: vec![0; bins],
            clamped_low: 0,
            clamped_high: 0,
        })
    }

    pub fn add(&mut self, v: f64) {
        let bins = self.counts.len();
        let (lo, hi) = (self.edges[0], self.edges[bins]);
        let idx = if v < lo {
            self.clamped_low += 1;
            0
        } else if v > hi || v.is_nan() {
            self.clamped_high += 1;
            bins - 1
        } else {
            (((v - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1)
        };
        self.counts[idx] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts normalized to a probability density.
    pub fn density(&self) -> Vec<f64> {
        let total = self.total().max(1) as f64;
        self.counts
            .iter()
            .zip(self.edges.windows(2))
            .map(|(c, e)| *c as f64 / total / (e[1] - e[0]))
            .collect()
    }
}

/// Histogram of every grid value of every snapshot from `burn_in` on.
pub fn pointwise_histogram(
    traj: &Trajectory,
    burn_in: usize,
    bins: usize,
    range: (f64, f64),
) -> Result<Histogram> {
    let mut h = Histogram::new(bins, range)?;
    for u in traj.window(burn_in)? {
        u.iter().for_each(|v| h.add(*v));
    }
    Ok(h)
}

/// Histogram of one component of the snapshots from `burn_in` on.
pub fn component_histogram(
    traj: &Trajectory,
    component: usize,
    burn_in: usize,
    bins: usize,
    range: (f64, f64),
) -> Result<Histogram> {
    if component >= traj.state_len() {
        return Err(MnoError::Shape(format!("no component {component}")));
    }
    let mut h = Histogram::new(bins, range)?;
    for u in traj.window(burn_in)? {
        h.add(u[component]);
    }
    Ok(h)
}

/// 1-Wasserstein distance `∫|F_a − F_b|` between two empirical distributions.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut x = a[0].min(b[0]);
    let mut dist = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(p), Some(q)) => p.min(*q),
            (Some(p), None) => *p,
            (None, Some(q)) => *q,
            (None, None) => break,
        };
        dist += (i as f64 / na - j as f64 / nb).abs() * (next - x);
        x = next;
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
    }
    dist
}

/// 1-Wasserstein distance between two histograms on the same edges, treating
/// each bin's mass as sitting at its center.
pub fn histogram_wasserstein1(a: &Histogram, b: &Histogram) -> Result<f64> {
    if a.edges != b.edges {
        return Err(MnoError::Shape(
            "histograms have different bin edges".into(),
        ));
    }
    let (ta, tb) = (a.total().max(1) as f64, b.total().max(1) as f64);
    let mut ca = 0.0;
    let mut cb = 0.0;
    let mut dist = 0.0;
    for k in 0..a.counts.len() - 1 {
        ca += a.counts[k] as f64 / ta;
        cb += b.counts[k] as f64 / tb;
        let gap = 0.5 * (a.edges[k + 2] - a.edges[k]);
        dist += (ca - cb).abs() * gap;
    }
    Ok(dist)
}

/// Statistics a report can hold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Spectrum,
    Correlation,
    Acf,
    Pod,
    Histogram,
    Flow,
    Energy,
}

impl Statistic {
    pub const ALL: [Statistic; 7] = [
        Statistic::Spectrum,
        Statistic::Correlation,
        Statistic::Acf,
        Statistic::Pod,
        Statistic::Histogram,
        Statistic::Flow,
        Statistic::Energy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Spectrum => "spectrum",
            Statistic::Correlation => "correlation",
            Statistic::Acf => "acf",
            Statistic::Pod => "pod",
            Statistic::Histogram => "histogram",
            Statistic::Flow => "flow",
            Statistic::Energy => "energy",
        }
    }

    /// Parses `all` or a comma-separated list of names.
    pub fn parse_list(s: &str) -> Result<Vec<Statistic>> {
        if s.trim() == "all" {
            return Ok(Statistic::ALL.to_vec());
        }
        s.split(',')
            .map(|p| {
                let p = p.trim();
                Statistic::ALL
                    .into_iter()
                    .find(|st| st.name() == p)
                    .ok_or_else(|| {
                        MnoError::validation("--which", format!("unknown statistic '{p}'"))
                    })
            })
            .collect()
    }

    fn applies_to(self, meta: &TrajectoryMeta) -> bool {
        let dim = meta.domain().map_or(0, |d| d.dim());
        match self {
            Statistic::Spectrum | Statistic::Correlation => dim > 0,
            Statistic::Flow => dim == 2,
            _ => true,
        }
    }
}

fn default_burn_in_fraction() -> f64 {
    0.1
}

fn default_bins() -> usize {
    64
}

fn default_max_lag() -> usize {
    100
}

fn default_pod_rank() -> usize {
    2
}

fn default_acf_mode() -> usize {
    10
}

fn default_reynolds() -> f64 {
    40.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatisticsOptions {
    #[serde(default = "default_burn_in_fraction")]
    pub burn_in_fraction: f64,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// Histogram range; the data range (or the reference's) when absent.
    #[serde(default)]
    pub histogram_range: Option<(f64, f64)>,
    #[serde(default = "default_max_lag")]
    pub max_lag: usize,
    #[serde(default = "default_pod_rank")]
    pub pod_rank: usize,
    /// Fourier mode whose magnitude series feeds the field ACF.
    #[serde(default = "default_acf_mode")]
    pub acf_mode: usize,
    #[serde(default = "default_reynolds")]
    pub reynolds: f64,
}

impl Default for StatisticsOptions {
    fn default() -> Self {
        StatisticsOptions {
            burn_in_fraction: default_burn_in_fraction(),
            histogram_bins: default_bins(),
            histogram_range: None,
            max_lag: default_max_lag(),
            pod_rank: default_pod_rank(),
            acf_mode: default_acf_mode(),
            reynolds: default_reynolds(),
        }
    }
}

impl StatisticsOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(MnoError::validation(
                "analysis.burn_in_fraction",
                "must lie in [0, 1)",
            ));
        }
        if self.histogram_bins < 2 {
            return Err(MnoError::validation(
                "analysis.histogram_bins",
                "must be at least 2",
            ));
        }
        if self.pod_rank < 1 {
            return Err(MnoError::validation(
                "analysis.pod_rank",
                "must be at least 1",
            ));
        }
        if !(self.reynolds > 0.0) {
            return Err(MnoError::validation(
                "analysis.reynolds",
                "must be positive",
            ));
        }
        Ok(())
    }

    pub fn burn_in(&self, len: usize) -> usize {
        ((len as f64 * self.burn_in_fraction).floor() as usize).min(len.saturating_sub(1))
    }
}

/// One labeled array of a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub x_label: String,
    pub x: Vec<f64>,
    pub y_label: String,
    /// Row-major values; `shape` gives their layout.
    pub values: Vec<f64>,
    pub shape: Vec<usize>,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl ReportEntry {
    pub fn curve(x_label: &str, x: Vec<f64>, y_label: &str, values: Vec<f64>) -> Self {
        ReportEntry {
            x_label: x_label.into(),
            shape: vec![values.len()],
            x,
            y_label: y_label.into(),
            values,
            meta: BTreeMap::new(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().chain(&self.x).all(|v| v.is_finite())
    }

    /// Two columns `x,y` for curves; one row per leading index otherwise.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.shape.len() == 1 && self.x.len() == self.values.len() {
            out.push_str(&format!("{},{}\n", self.x_label, self.y_label));
            for (x, y) in self.x.iter().zip(&self.values) {
                out.push_str(&format!("{x:e},{y:e}\n"));
            }
        } else {
            let cols = self.shape.last().copied().unwrap_or(1).max(1);
            for row in self.values.chunks(cols) {
                let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
                out.push_str(&line.join(","));
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatisticsReport {
    pub provenance: String,
    pub snapshots: usize,
    pub burn_in: usize,
    pub entries: BTreeMap<String, ReportEntry>,
    /// `‖a − b‖ / ‖b‖` per entry against a reference report.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub discrepancies: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dissipativity: Option<crate::dissipativity::DissipativityReport>,
}

impl StatisticsReport {
    pub fn is_finite(&self) -> bool {
        self.entries.values().all(ReportEntry::is_finite)
    }

    /// Fills `discrepancies` from a report of the same statistics.
    pub fn compare_with(&mut self, reference: &StatisticsReport) {
        for (name, entry) in &self.entries {
            if let Some(r) = reference.entries.get(name) {
                if r.values.len() == entry.values.len() {
                    let diff: f64 = entry
                        .values
                        .iter()
                        .zip(&r.values)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum();
                    let base: f64 = r.values.iter().map(|b| b * b).sum();
                    let d = if base > 0.0 {
                        (diff / base).sqrt()
                    } else {
                        diff.sqrt()
                    };
                    self.discrepancies.insert(name.clone(), d);
                }
            }
        }
    }
}

fn data_range(traj: &Trajectory, burn_in: usize, component: Option<usize>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for u in traj.snapshots().skip(burn_in) {
        let vals: &[f64] = match component {
            Some(c) => &u[c..=c],
            None => u,
        };
        for v in vals {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if !(hi > lo) {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 1e-9 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// Computes the selected statistics that apply to the trajectory. Histogram
/// ranges follow `range_from` when given, so two reports share bin edges.
pub fn compute_statistics(
    traj: &Trajectory,
    which: &[Statistic],
    opts: &StatisticsOptions,
    range_from: Option<&Trajectory>,
) -> Result<StatisticsReport> {
    opts.validate()?;
    let burn_in = opts.burn_in(traj.len());
    let mut entries = BTreeMap::new();
    let domain = traj.meta.domain();
    let h = traj.meta.h;
    for &stat in which {
        if !stat.applies_to(&traj.meta) {
            continue;
        }
        match stat {
            Statistic::Spectrum => {
                let kind = if domain.map(|d| d.dim()) == Some(1) {
                    SpectrumKind::Magnitude
                } else {
                    SpectrumKind::Velocity
                };
                let s = fourier_spectrum(traj, kind, burn_in)?;
                let label = if kind == SpectrumKind::Magnitude {
                    "mean_abs_coefficient"
                } else {
                    "energy"
                };
                entries.insert(
                    "spectrum".into(),
                    ReportEntry::curve("wavenumber", s.wavenumbers, label, s.values),
                );
                if kind == SpectrumKind::Velocity {
                    let s = fourier_spectrum(traj, SpectrumKind::Vorticity, burn_in)?;
                    entries.insert(
                        "vorticity_spectrum".into(),
                        ReportEntry::curve("wavenumber", s.wavenumbers, "enstrophy", s.values),
                    );
                }
            }
            Statistic::Correlation => {
                let d = domain.expect("field statistic");
                let c = spatial_correlation(traj, burn_in)?;
                let dx = d.length() / d.n() as f64;
                let mut e = ReportEntry::curve(
                    "lag",
                    (0..d.n()).map(|j| j as f64 * dx).collect(),
                    "correlation",
                    c,
                );
                e.shape = d.shape();
                entries.insert("correlation".into(), e);
            }
            Statistic::Acf => {
                let series: Vec<f64> = match domain {
                    Some(d) => {
                        let t = Transform::new(d);
                        let idx = opts.acf_mode.min(d.spectral_len() - 1);
                        traj.snapshots()
                            .skip(burn_in)
                            .map(|u| t.forward(u)[idx].norm())
                            .collect()
                    }
                    None => traj.snapshots().skip(burn_in).map(|u| u[0]).collect(),
                };
                if series.len() >= 2 {
                    let acf = autocorrelation(&series, opts.max_lag)?;
                    let mut e = ReportEntry::curve(
                        "lag_time",
                        (0..acf.values.len()).map(|k| k as f64 * h).collect(),
                        "acf",
                        acf.values,
                    );
                    e.meta.insert("degenerate".into(), acf.degenerate.into());
                    let source = if domain.is_some() {
                        format!("fourier_mode_{}", opts.acf_mode)
                    } else {
                        "component_0".into()
                    };
                    e.meta.insert("series".into(), source.into());
                    entries.insert("acf".into(), e);
                }
            }
            Statistic::Pod => {
                let snaps: Vec<&[f64]> = traj.snapshots().skip(burn_in).collect();
                let rank = opts.pod_rank.min(snaps.len()).min(traj.state_len());
                if let Ok(p) = pod_project(&snaps, rank, None) {
                    let k = p.basis.rank();
                    let values: Vec<f64> = p.coordinates.concat();
                    let mut e = ReportEntry::curve(
                        "time",
                        (0..snaps.len()).map(|i| (i + burn_in) as f64 * h).collect(),
                        "pod_coordinates",
                        values,
                    );
                    e.shape = vec![snaps.len(), k];
                    e.meta.insert(
                        "singular_values".into(),
                        serde_json::json!(p.basis.singular_values),
                    );
                    e.meta.insert("rank".into(), k.into());
                    entries.insert("pod".into(), e);
                }
            }
            Statistic::Histogram => {
                let source = range_from.unwrap_or(traj);
                if domain.is_some() {
                    let range = opts
                        .histogram_range
                        .unwrap_or_else(|| data_range(source, opts.burn_in(source.len()), None));
                    let hist = pointwise_histogram(traj, burn_in, opts.histogram_bins, range)?;
                    entries.insert("histogram".into(), histogram_entry(&hist));
                } else {
                    for c in 0..traj.state_len() {
                        let range = opts.histogram_range.unwrap_or_else(|| {
                            data_range(source, opts.burn_in(source.len()), Some(c))
                        });
                        let hist =
                            component_histogram(traj, c, burn_in, opts.histogram_bins, range)?;
                        entries.insert(format!("histogram_{c}"), histogram_entry(&hist));
                    }
                }
            }
            Statistic::Flow => {
                if traj.len() >= burn_in + 2 {
                    let f = flow_diagnostics(traj, opts.reynolds, burn_in)?;
                    let times: Vec<f64> =
                        (0..f.tke.len()).map(|i| (i + burn_in) as f64 * h).collect();
                    entries.insert(
                        "tke".into(),
                        ReportEntry::curve("time", times.clone(), "tke", f.tke),
                    );
                    entries.insert(
                        "dissipation".into(),
                        ReportEntry::curve("time", times, "dissipation", f.dissipation),
                    );
                }
            }
            Statistic::Energy => {
                let space = traj.meta.space();
                let series: Vec<f64> = traj.snapshots().map(|u| space.norm(u).powi(2)).collect();
                let mean = time_average(traj, |u| space.norm(u).powi(2), burn_in)?;
                let mut e = ReportEntry::curve(
                    "time",
                    (0..series.len()).map(|i| i as f64 * h).collect(),
                    "norm_sq",
                    series,
                );
                e.meta.insert("time_average".into(), mean.into());
                entries.insert("energy".into(), e);
            }
        }
    }
    let report = StatisticsReport {
        provenance: traj.meta.provenance.clone(),
        snapshots: traj.len(),
        burn_in,
        entries,
        discrepancies: BTreeMap::new(),
        dissipativity: None,
    };
    if !report.is_finite() {
        return Err(MnoError::NonFinite("a statistic is not finite".into()));
    }
    Ok(report)
}

fn histogram_entry(hist: &Histogram) -> ReportEntry {
    let centers = hist.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect();
    let mut e = ReportEntry::curve("bin_center", centers, "density", hist.density());
    e.meta.insert("edges".into(), serde_json::json!(hist.edges));
    e.meta
        .insert("counts".into(), serde_json::json!(hist.counts));
    e.meta.insert("clamped_low".into(), hist.clamped_low.into());
    e.meta
        .insert("clamped_high".into(), hist.clamped_high.into());
    e
}
