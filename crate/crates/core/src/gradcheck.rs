//! Analytic gradients of the training objective against central finite
//! differences, block by block.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{MnoError, Result};
use crate::model::{Architecture, Model};
use crate::spectral::{Domain, SobolevSpec};
use crate::state::StateSpace;
use crate::systems::{grf_coefficients, GrfSpec};
use crate::training::{total_loss, LossSpec, ShellSampler};

fn default_tolerance() -> f64 {
    1e-5
}

fn default_batch() -> usize {
    2
}

fn default_balanced() -> bool {
    true
}

fn default_lambda() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradCheckConfig {
    pub architecture: Architecture,
    /// Grid points per side when the states are periodic fields. A
    /// feedforward network with a resolution acts on a 1D field of
    /// `input_dim` points on `[0, 2π)`.
    #[serde(default)]
    pub resolution: Option<usize>,
    #[serde(default)]
    pub sobolev_order: u32,
    #[serde(default = "default_balanced")]
    pub balanced: bool,
    #[serde(default)]
    pub dissipativity: bool,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// Test fixture: scales the analytic gradient of this block by 1.1.
    #[serde(default)]
    pub corrupt_block: Option<String>,
}

impl GradCheckConfig {
    pub fn new(
        architecture: Architecture,
        resolution: Option<usize>,
        sobolev_order: u32,
        dissipativity: bool,
    ) -> Self {
        GradCheckConfig {
            architecture,
            resolution,
            sobolev_order,
            balanced: true,
            dissipativity,
            lambda: default_lambda(),
            seed: 0,
            tolerance: default_tolerance(),
            batch: default_batch(),
            corrupt_block: None,
        }
    }

    pub fn sobolev(&self) -> SobolevSpec {
        SobolevSpec {
            order: self.sobolev_order,
            balanced: self.balanced,
        }
    }

    pub fn state_space(&self) -> Result<StateSpace> {
        let space = match (&self.architecture, self.resolution) {
            (Architecture::Fno(a), Some(n)) => {
                let d = if a.dimension == 1 {
                    Domain::line(n, std::f64::consts::TAU)
                } else {
                    Domain::square(n)
                };
                StateSpace::field(d)
            }
            (Architecture::Fno(_), None) => {
                return Err(MnoError::validation(
                    "gradcheck.resolution",
                    "required for Fourier operators",
                ))
            }
            (Architecture::Ffn(a), Some(n)) => {
                if a.input_dim != n || a.output_dim != n {
                    return Err(MnoError::validation(
                        "gradcheck.resolution",
                        format!("field states need input_dim = output_dim = {n}"),
                    ));
                }
                StateSpace::field(Domain::line(n, std::f64::consts::TAU))
            }
            (Architecture::Ffn(a), None) => {
                if a.input_dim != a.output_dim {
                    return Err(MnoError::validation(
                        "model.output_dim",
                        "must equal input_dim",
                    ));
                }
                StateSpace::Vector(a.input_dim)
            }
            (Architecture::Linear(a), _) => StateSpace::Vector(a.dim),
        };
        if let Some(d) = space.domain() {
            d.validate()?;
        }
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        self.sobolev().validate()?;
        let space = self.state_space()?;
        self.architecture.check_state_len(space.dim())?;
        if matches!(space, StateSpace::Vector(_)) && self.sobolev_order != 0 {
            return Err(MnoError::validation(
                "gradcheck.sobolev_order",
                "vector states only support order 0; give a resolution for Sobolev losses",
            ));
        }
        if !(self.tolerance > 0.0) {
            return Err(MnoError::validation(
                "gradcheck.tolerance",
                "must be positive",
            ));
        }
        if self.batch < 1 {
            return Err(MnoError::validation(
                "gradcheck.batch",
                "must be at least 1",
            ));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(MnoError::validation(
                "gradcheck.lambda",
                "must lie in (0, 1)",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockError {
    pub name: String,
    pub len: usize,
    /// `‖g_analytic − g_fd‖ / max(‖g_analytic‖, ‖g_fd‖)`.
    pub rel_error: f64,
    pub analytic_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub loss: f64,
    pub parameters: usize,
    pub blocks: Vec<BlockError>,
}

fn random_states(space: &StateSpace, count: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(count * space.dim());
    for _ in 0..count {
        match space {
            StateSpace::Vector(d) => {
                out.extend((0..*d).map(|_| -> f64 { StandardNormal.sample(&mut *rng) }))
            }
            StateSpace::Field(t) => {
                let d = t.domain();
                let mut spec = GrfSpec::kolmogorov();
                spec.dimension = d.dim();
                spec.alpha = 1.5;
                spec.shift = 1.0;
                spec.prefactor = 1.0;
                let mut u = t.inverse(&grf_coefficients(&spec, d, rng));
                let s = 1.0 / space.norm(&u);
                u.iter_mut().for_each(|v| *v *= s);
                // a mean keeps the zero mode in play
                u.iter_mut().for_each(|v| *v += 0.3);
                out.extend(u);
            }
        }
    }
    out
}

/// Compares the gradient of the objective at a seeded random model and batch
/// against central differences with step `1e-6 · max(1, |θ|)`. Mismatches
/// are reported, not raised; errors only come from invalid setups.
pub fn grad_check(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    cfg.validate()?;
    let space = cfg.state_space()?;
    let model = Model::init(cfg.architecture.clone(), cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6772_6164);
    let inputs = random_states(&space, cfg.batch, &mut rng);
    let targets = random_states(&space, cfg.batch, &mut rng);
    let shell = if cfg.dissipativity {
        let grf = space.domain().map(|d| {
            let mut g = GrfSpec::kolmogorov();
            g.dimension = d.dim();
            g.domain_length = d.length();
            g
        });
        let sampler = ShellSampler::new(space.clone(), grf, 2.0, 3.0)?;
        (0..cfg.batch)
            .flat_map(|_| sampler.sample(&mut rng))
            .collect()
    } else {
        Vec::new()
    };
    let spec = LossSpec {
        sobolev: cfg.sobolev(),
        dissipativity: cfg.dissipativity.then_some((1.0, cfg.lambda)),
    };
    let (parts, mut grads) = total_loss(&model, &space, &inputs, &targets, &shell, &spec, true)?;
    if let Some(name) = &cfg.corrupt_block {
        let b = model.params.index_of(name).ok_or_else(|| {
            MnoError::validation("gradcheck.corrupt_block", format!("no block named {name}"))
        })?;
        grads.blocks[b].iter_mut().for_each(|g| *g *= 1.1);
    }

    let loss_at = |m: &Model| -> Result<f64> {
        Ok(
            total_loss(m, &space, &inputs, &targets, &shell, &spec, false)?
                .0
                .total,
        )
    };
    let mut probe = model.clone();
    let mut blocks = Vec::with_capacity(model.params.blocks.len());
    for (b, spec_b) in model.params.specs.iter().enumerate() {
        let mut diff_sq = 0.0;
        let mut a_sq = 0.0;
        let mut f_sq = 0.0;
        for i in 0..model.params.blocks[b].len() {
            let theta = model.params.blocks[b][i];
            let h = 1e-6 * theta.abs().max(1.0);
            probe.params.blocks[b][i] = theta + h;
            let up = loss_at(&probe)?;
            probe.params.blocks[b][i] = theta - h;
            let down = loss_at(&probe)?;
            probe.params.blocks[b][i] = theta;
            let fd = (up - down) / (2.0 * h);
            let a = grads.blocks[b][i];
            diff_sq += (a - fd) * (a - fd);
            a_sq += a * a;
            f_sq += fd * fd;
        }
        let scale = a_sq.max(f_sq).sqrt();
        let rel_error = if scale > 0.0 {
            diff_sq.sqrt() / scale
        } else {
            0.0
        };
        blocks.push(BlockError {
            name: spec_b.name.clone(),
            len: model.params.blocks[b].len(),
            rel_error,
            analytic_norm: a_sq.sqrt(),
        });
    }
    let max_rel_error = blocks.iter().map(|b| b.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_error,
        tolerance: cfg.tolerance,
        passed: max_rel_error.is_finite() && max_rel_error < cfg.tolerance,
        loss: parts.total,
        parameters: model.params.len(),
        blocks,
    })
}
