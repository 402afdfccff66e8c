//! Ground-truth dynamics and dataset generation.

mod dataset;
mod grf;
mod kolmogorov;
mod ks;
mod lorenz;

use serde::{Deserialize, Serialize};

use crate::error::{MnoError, Result};
use crate::spectral::{Domain, Transform};

pub use dataset::{
    derive_stream_seed, generate_dataset, DatasetMeta, InitialCondition, PairDataset,
};
pub use grf::{grf_coefficients, grf_sample, GrfSpec};
pub use kolmogorov::{ns_step, KolmogorovSolver};
pub use ks::{ks_etdrk4_step, ks_precompute, EtdCoefficients, KsSolver, CONTOUR_POINTS};
pub use lorenz::{lorenz_rhs, rk4_step, to_shifted, LorenzParams, LorenzSolver, LorenzState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Lorenz,
    Ks,
    Kolmogorov,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Lorenz => "lorenz",
            SystemKind::Ks => "ks",
            SystemKind::Kolmogorov => "kolmogorov",
        }
    }
}

fn default_forcing() -> usize {
    4
}

fn default_reynolds() -> f64 {
    40.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub system: SystemKind,
    /// Inner solver step.
    pub dt: f64,
    /// Solver steps per emitted snapshot, so `h = dt · sample_stride`.
    pub sample_stride: usize,
    #[serde(default = "default_reynolds")]
    pub reynolds: f64,
    #[serde(default = "default_forcing")]
    pub forcing_wavenumber: usize,
    /// Grid points per axis; ignored for Lorenz.
    #[serde(default)]
    pub resolution: usize,
    #[serde(default)]
    pub domain_length: f64,
    #[serde(default)]
    pub lorenz: LorenzParams,
}

impl SolverConfig {
    pub fn lorenz() -> Self {
        SolverConfig {
            system: SystemKind::Lorenz,
            dt: 0.005,
            sample_stride: 10,
            reynolds: default_reynolds(),
            forcing_wavenumber: default_forcing(),
            resolution: 0,
            domain_length: 0.0,
            lorenz: LorenzParams::default(),
        }
    }

    pub fn ks(resolution: usize, domain_length: f64, dt: f64, sample_stride: usize) -> Self {
        SolverConfig {
            system: SystemKind::Ks,
            dt,
            sample_stride,
            resolution,
            domain_length,
            ..SolverConfig::lorenz()
        }
    }

    pub fn kolmogorov(resolution: usize, reynolds: f64, dt: f64, sample_stride: usize) -> Self {
        SolverConfig {
            system: SystemKind::Kolmogorov,
            dt,
            sample_stride,
            reynolds,
            resolution,
            domain_length: std::f64::consts::TAU,
            ..SolverConfig::lorenz()
        }
    }

    pub fn h(&self) -> f64 {
        self.dt * self.sample_stride as f64
    }

    /// Grid of the state, `None` for Lorenz.
    pub fn domain(&self) -> Option<Domain> {
        match self.system {
            SystemKind::Lorenz => None,
            SystemKind::Ks => Some(Domain::line(self.resolution, self.domain_length)),
            SystemKind::Kolmogorov => Some(Domain::Square {
                n: self.resolution,
                length: self.domain_length,
            }),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.domain().map_or(3, |d| d.points())
    }

    pub fn grid_shape(&self) -> Vec<usize> {
        self.domain().map_or(vec![3], |d| d.shape())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(MnoError::validation(
                "system.dt",
                format!("must be positive, got {}", self.dt),
            ));
        }
        if self.sample_stride < 1 {
            return Err(MnoError::validation(
                "system.sample_stride",
                "must be at least 1",
            ));
        }
        match self.system {
            SystemKind::Lorenz => Ok(()),
            SystemKind::Ks => self.domain().unwrap().validate(),
            SystemKind::Kolmogorov => {
                if !(self.reynolds > 0.0 && self.reynolds.is_finite()) {
                    return Err(MnoError::validation(
                        "system.reynolds",
                        format!("must be positive, got {}", self.reynolds),
                    ));
                }
                if (self.domain_length - std::f64::consts::TAU).abs() > 1e-12 {
                    return Err(MnoError::validation(
                        "system.domain_length",
                        "Kolmogorov flow uses 2π",
                    ));
                }
                self.domain().unwrap().validate()
            }
        }
    }
}

/// A reference solver advancing grid-space states by one sampling interval.
#[derive(Clone)]
pub enum ReferenceSolver {
    Lorenz(LorenzSolver),
    Ks(KsSolver, Transform),
    Kolmogorov(KolmogorovSolver, Transform),
}

impl ReferenceSolver {
    pub fn new(cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(match cfg.system {
            SystemKind::Lorenz => ReferenceSolver::Lorenz(LorenzSolver {
                params: cfg.lorenz,
                dt: cfg.dt,
            }),
            SystemKind::Ks => {
                let d = cfg.domain().unwrap();
                ReferenceSolver::Ks(KsSolver::new(d, cfg.dt)?, Transform::new(d))
            }
            SystemKind::Kolmogorov => {
                let d = cfg.domain().unwrap();
                let s =
                    KolmogorovSolver::new(d, cfg.dt, cfg.reynolds, Some(cfg.forcing_wavenumber))?;
                ReferenceSolver::Kolmogorov(s, Transform::new(d))
            }
        })
    }

    /// Advances a grid-space state by `steps` inner solver steps.
    pub fn advance(&self, state: &[f64], steps: usize) -> Result<Vec<f64>> {
        match self {
            ReferenceSolver::Lorenz(s) => {
                let arr: [f64; 3] = state.try_into().map_err(|_| {
                    MnoError::Shape(format!(
                        "Lorenz state has 3 components, got {}",
                        state.len()
                    ))
                })?;
                Ok(s.advance(arr, steps)?.to_vec())
            }
            ReferenceSolver::Ks(s, t) => {
                check_len(state, t)?;
                Ok(t.inverse(&s.advance(&t.forward(state), steps)?))
            }
            ReferenceSolver::Kolmogorov(s, t) => {
                check_len(state, t)?;
                Ok(t.inverse(&s.advance(&t.forward(state), steps)?))
            }
        }
    }
}

fn check_len(state: &[f64], t: &Transform) -> Result<()> {
    if state.len() != t.domain().points() {
        return Err(MnoError::Shape(format!(
            "state has {} values, grid has {}",
            state.len(),
            t.domain().points()
        )));
    }
    Ok(())
}
