use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{grf_sample, to_shifted, GrfSpec, ReferenceSolver, SolverConfig, SystemKind};
use crate::error::{MnoError, Result};

/// Largest advective CFL number tolerated at emitted Kolmogorov snapshots.
const MAX_CFL: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// Uniform in `[−w, w]³` (standard coordinates), then shifted.
    LorenzBox {
        half_width: f64,
    },
    Grf(GrfSpec),
}

impl InitialCondition {
    pub fn sample(&self, cfg: &SolverConfig, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        match (self, cfg.system) {
            (InitialCondition::LorenzBox { half_width }, SystemKind::Lorenz) => {
                let w = *half_width;
                if !(w > 0.0 && w.is_finite()) {
                    return Err(MnoError::validation(
                        "data.initial.half_width",
                        "must be positive",
                    ));
                }
                let standard = [
                    rng.random_range(-w..=w),
                    rng.random_range(-w..=w),
                    rng.random_range(-w..=w),
                ];
                Ok(to_shifted(standard, cfg.lorenz).to_vec())
            }
            (InitialCondition::Grf(spec), SystemKind::Ks | SystemKind::Kolmogorov) => {
                let expected = if cfg.system == SystemKind::Ks { 1 } else { 2 };
                if spec.dimension != expected {
                    return Err(MnoError::validation(
                        "system.grf.dimension",
                        format!("{} needs a {expected}D field", cfg.system.name()),
                    ));
                }
                if (spec.domain_length - cfg.domain_length).abs() > 1e-12 * cfg.domain_length {
                    return Err(MnoError::validation(
                        "system.grf.domain_length",
                        "must equal system.domain_length",
                    ));
                }
                Ok(grf_sample(spec, cfg.resolution, rng)?.values)
            }
            _ => Err(MnoError::validation(
                "data.initial",
                format!(
                    "initial condition does not fit system {}",
                    cfg.system.name()
                ),
            )),
        }
    }
}

/// Seed of the random stream owned by trajectory `index`.
pub fn derive_stream_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (z ^ (z >> 31)) ^ index
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub system: SystemKind,
    pub grid_shape: Vec<usize>,
    pub domain_length: f64,
    pub dt: f64,
    pub h: f64,
    pub seed: u64,
    pub n_trajectories: usize,
    pub provenance: String,
}

/// Snapshot pairs `(u(t), u(t + h))`, stored trajectory by trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct PairDataset {
    pub meta: DatasetMeta,
    /// Values per state.
    pub record_size: usize,
    pub inputs: Vec<f64>,
    pub outputs: Vec<f64>,
}

impl PairDataset {
    pub fn new(
        meta: DatasetMeta,
        record_size: usize,
        inputs: Vec<f64>,
        outputs: Vec<f64>,
    ) -> Result<Self> {
        if record_size == 0 || inputs.len() != outputs.len() || inputs.len() % record_size != 0 {
            return Err(MnoError::Shape(format!(
                "{} inputs and {} outputs do not form records of {record_size}",
                inputs.len(),
                outputs.len()
            )));
        }
        let expected: usize = meta.grid_shape.iter().product();
        if expected != record_size {
            return Err(MnoError::Shape(format!(
                "grid shape {:?} holds {expected} values, records hold {record_size}",
                meta.grid_shape
            )));
        }
        Ok(PairDataset {
            meta,
            record_size,
            inputs,
            outputs,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.record_size
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.record_size..(i + 1) * self.record_size]
    }

    pub fn output(&self, i: usize) -> &[f64] {
        &self.outputs[i * self.record_size..(i + 1) * self.record_size]
    }

    pub fn pairs_per_trajectory(&self) -> usize {
        self.len() / self.meta.n_trajectories.max(1)
    }

    /// Largest state-space norm over all inputs and outputs.
    pub fn max_norm(&self, norm: impl Fn(&[f64]) -> f64) -> f64 {
        (0..self.len())
            .map(|i| norm(self.input(i)).max(norm(self.output(i))))
            .fold(0.0, f64::max)
    }

    /// Splits off the last 10% of trajectories (or of pairs, when there is a
    /// single trajectory) as a validation set.
    pub fn split_validation(&self) -> (Vec<usize>, Vec<usize>) {
        let n = self.len();
        let trajs = self.meta.n_trajectories.max(1);
        let cut = if trajs > 1 && n % trajs == 0 {
            let held = (trajs / 10).max(1);
            (trajs - held) * (n / trajs)
        } else {
            n - (n / 10).max(1).min(n.saturating_sub(1))
        };
        ((0..cut).collect(), (cut..n).collect())
    }
}

/// Integrates `n_traj` trajectories, discards `[0, t_burn)`, and emits the
/// pairs of consecutive snapshots covering `[t_burn, t_end]`.
pub fn generate_dataset(
    cfg: &SolverConfig,
    init: &InitialCondition,
    n_traj: usize,
    t_burn: f64,
    t_end: f64,
    seed: u64,
) -> Result<PairDataset> {
    cfg.validate()?;
    if n_traj < 1 {
        return Err(MnoError::validation(
            "data.trajectories",
            "must be at least 1",
        ));
    }
    if !(t_burn >= 0.0 && t_burn < t_end && t_end.is_finite()) {
        return Err(MnoError::validation(
            "data.t_burn",
            format!("need 0 ≤ t_burn < t_end, got {t_burn} and {t_end}"),
        ));
    }
    let h = cfg.h();
    let pairs = ((t_end - t_burn) / h).round() as usize;
    if pairs == 0 {
        return Err(MnoError::validation(
            "data.t_end",
            "window shorter than one sampling step",
        ));
    }
    let burn_steps = (t_burn / cfg.dt).round() as usize;
    let solver = ReferenceSolver::new(cfg)?;
    let dim = cfg.state_dim();

    let runs: Vec<Result<Vec<f64>>> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_stream_seed(seed, i as u64));
            let u0 = init.sample(cfg, &mut rng)?;
            let mut state = solver.advance(&u0, burn_steps)?;
            let mut snaps = Vec::with_capacity((pairs + 1) * dim);
            snaps.extend_from_slice(&state);
            for k in 0..pairs {
                state = solver.advance(&state, cfg.sample_stride)?;
                check_snapshot(&solver, &state, k)?;
                snaps.extend_from_slice(&state);
            }
            Ok(snaps)
        })
        .collect();

    let mut inputs = Vec::with_capacity(n_traj * pairs * dim);
    let mut outputs = Vec::with_capacity(n_traj * pairs * dim);
    for (i, run) in runs.into_iter().enumerate() {
        let snaps = run.map_err(|e| MnoError::TrajectoryBlowUp {
            trajectory: i,
            source: Box::new(e),
        })?;
        inputs.extend_from_slice(&snaps[..pairs * dim]);
        outputs.extend_from_slice(&snaps[dim..]);
    }
    let meta = DatasetMeta {
        system: cfg.system,
        grid_shape: cfg.grid_shape(),
        domain_length: cfg.domain_length,
        dt: cfg.dt,
        h,
        seed,
        n_trajectories: n_traj,
        provenance: format!("{} solver, stride {}", cfg.system.name(), cfg.sample_stride),
    };
    PairDataset::new(meta, dim, inputs, outputs)
}

fn check_snapshot(solver: &ReferenceSolver, state: &[f64], k: usize) -> Result<()> {
    if let ReferenceSolver::Kolmogorov(s, _) = solver {
        let cfl = s.cfl(state);
        if cfl > MAX_CFL {
            return Err(MnoError::BlowUp {
                step: k,
                detail: format!("CFL number {cfl:.3} exceeds {MAX_CFL}; reduce system.dt"),
            });
        }
    }
    Ok(())
}
