//! TOML experiment configuration with cross-field validation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{Statistic, StatisticsOptions};
use crate::dissipativity::PostProcessConfig;
use crate::error::{MnoError, Result};
use crate::gradcheck::GradCheckConfig;
use crate::model::Architecture;
use crate::state::StateSpace;
use crate::systems::{
    derive_stream_seed, GrfSpec, InitialCondition, ReferenceSolver, SolverConfig, SystemKind,
};
use crate::training::TrainConfig;

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default = "one")]
    pub trajectories: usize,
    #[serde(default)]
    pub t_burn: f64,
    pub t_end: f64,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to the system's standard initial measure.
    #[serde(default)]
    pub initial: Option<InitialCondition>,
}

fn default_which() -> String {
    "all".into()
}

fn default_steps() -> usize {
    1000
}

fn unit() -> f64 {
    1.0
}

fn default_samples() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// `all` or a comma-separated list of statistics.
    #[serde(default = "default_which")]
    pub which: String,
    #[serde(default = "default_steps")]
    pub rollout_steps: usize,
    #[serde(default = "unit")]
    pub perturb_scale: f64,
    #[serde(default)]
    pub blowup_bound: Option<f64>,
    /// Radii of the dissipativity report; none skips it.
    #[serde(default)]
    pub dissipativity_radii: Vec<f64>,
    #[serde(default = "default_samples")]
    pub dissipativity_samples: usize,
    #[serde(default)]
    pub statistics: StatisticsOptions,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            which: default_which(),
            rollout_steps: default_steps(),
            perturb_scale: 1.0,
            blowup_bound: None,
            dissipativity_radii: Vec::new(),
            dissipativity_samples: default_samples(),
            statistics: StatisticsOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SolverConfig,
    pub data: DataConfig,
    pub model: Architecture,
    pub training: TrainConfig,
    #[serde(default)]
    pub postprocess: Option<PostProcessConfig>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        let field = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.starts_with("unknown field") || msg.starts_with("missing field"))
            .unwrap_or("config")
            .to_string();
        MnoError::validation(field, e.to_string().trim_end())
    })
}

pub fn load_text(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| MnoError::io(path, e))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = parse_toml(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&load_text(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn state_space(&self) -> StateSpace {
        match self.system.domain() {
            Some(d) => StateSpace::field(d),
            None => StateSpace::Vector(3),
        }
    }

    pub fn initial_condition(&self) -> InitialCondition {
        self.data.initial.unwrap_or(match self.system.system {
            SystemKind::Lorenz => InitialCondition::LorenzBox { half_width: 20.0 },
            SystemKind::Ks => {
                InitialCondition::Grf(GrfSpec::kuramoto_sivashinsky(self.system.domain_length))
            }
            SystemKind::Kolmogorov => {
                let mut g = GrfSpec::kolmogorov();
                g.domain_length = self.system.domain_length;
                InitialCondition::Grf(g)
            }
        })
    }

    /// Gaussian measure for field directions (shell samples).
    pub fn grf(&self) -> Option<GrfSpec> {
        match self.initial_condition() {
            InitialCondition::Grf(g) => Some(g),
            InitialCondition::LorenzBox { .. } => None,
        }
    }

    pub fn statistics(&self) -> Result<Vec<Statistic>> {
        Statistic::parse_list(&self.analysis.which)
    }

    pub fn statistics_options(&self) -> StatisticsOptions {
        let mut o = self.analysis.statistics.clone();
        o.reynolds = self.system.reynolds;
        o
    }

    /// A draw from the initial measure advanced through `data.t_burn`.
    pub fn sample_attractor_state(&self, seed: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_stream_seed(seed, 0));
        let u0 = self.initial_condition().sample(&self.system, &mut rng)?;
        let steps = (self.data.t_burn / self.system.dt).round() as usize;
        ReferenceSolver::new(&self.system)?.advance(&u0, steps)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        let space = self.state_space();
        let dim = space.dim();

        let d = &self.data;
        if d.trajectories < 1 {
            return Err(MnoError::validation(
                "data.trajectories",
                "must be at least 1",
            ));
        }
        if !(d.t_burn >= 0.0 && d.t_end > d.t_burn && d.t_end.is_finite()) {
            return Err(MnoError::validation(
                "data.t_end",
                format!("need 0 ≤ t_burn < t_end, got {} and {}", d.t_burn, d.t_end),
            ));
        }
        if ((d.t_end - d.t_burn) / self.system.h()).round() < 1.0 {
            return Err(MnoError::validation(
                "data.t_end",
                "window shorter than one sampling step",
            ));
        }
        match (self.initial_condition(), self.system.system) {
            (InitialCondition::LorenzBox { half_width }, SystemKind::Lorenz) => {
                if !(half_width > 0.0 && half_width.is_finite()) {
                    return Err(MnoError::validation(
                        "data.initial.half_width",
                        "must be positive",
                    ));
                }
            }
            (InitialCondition::Grf(g), SystemKind::Ks | SystemKind::Kolmogorov) => {
                g.validate()?;
                let want = if self.system.system == SystemKind::Ks {
                    1
                } else {
                    2
                };
                if g.dimension != want {
                    return Err(MnoError::validation(
                        "data.initial.dimension",
                        format!("{} needs dimension {want}", self.system.system.name()),
                    ));
                }
                if (g.domain_length - self.system.domain_length).abs()
                    > 1e-12 * self.system.domain_length
                {
                    return Err(MnoError::validation(
                        "data.initial.domain_length",
                        "must equal system.domain_length",
                    ));
                }
            }
            _ => {
                return Err(MnoError::validation(
                    "data.initial",
                    format!(
                        "initial condition does not fit system {}",
                        self.system.system.name()
                    ),
                ))
            }
        }

        self.model.validate()?;
        match &self.model {
            Architecture::Fno(a) => {
                let sys_dim = space.domain().map(|d| d.dim());
                if sys_dim != Some(a.dimension) {
                    return Err(MnoError::validation(
                        "model.dimension",
                        format!(
                            "Fourier operator of dimension {} cannot act on {} states",
                            a.dimension,
                            self.system.system.name()
                        ),
                    ));
                }
                if 2 * a.modes > self.system.resolution {
                    return Err(MnoError::validation(
                        "model.modes",
                        format!(
                            "{} modes need resolution ≥ {}, system.resolution is {}",
                            a.modes,
                            2 * a.modes,
                            self.system.resolution
                        ),
                    ));
                }
            }
            Architecture::Ffn(a) => {
                if a.input_dim != dim {
                    return Err(MnoError::validation(
                        "model.input_dim",
                        format!("states hold {dim} values, got {}", a.input_dim),
                    ));
                }
                if a.output_dim != dim {
                    return Err(MnoError::validation(
                        "model.output_dim",
                        format!("states hold {dim} values, got {}", a.output_dim),
                    ));
                }
            }
            Architecture::Linear(a) => {
                if a.dim != dim {
                    return Err(MnoError::validation(
                        "model.dim",
                        format!("states hold {dim} values"),
                    ));
                }
            }
        }

        self.training.validate()?;
        if space.domain().is_none() && self.training.sobolev_order != 0 {
            return Err(MnoError::validation(
                "training.sobolev_order",
                "vector-valued systems only support order 0",
            ));
        }
        if let Some(p) = &self.postprocess {
            p.validate()?;
        }

        let a = &self.analysis;
        self.statistics()?;
        a.statistics.validate()?;
        if !(a.perturb_scale > 0.0 && a.perturb_scale.is_finite()) {
            return Err(MnoError::validation(
                "analysis.perturb_scale",
                "must be positive",
            ));
        }
        if let Some(b) = a.blowup_bound {
            if !(b > 0.0) {
                return Err(MnoError::validation(
                    "analysis.blowup_bound",
                    "must be positive",
                ));
            }
        }
        if a.dissipativity_radii
            .iter()
            .any(|r| !(*r > 0.0 && r.is_finite()))
        {
            return Err(MnoError::validation(
                "analysis.dissipativity_radii",
                "radii must be positive",
            ));
        }
        if a.dissipativity_samples < 1 {
            return Err(MnoError::validation(
                "analysis.dissipativity_samples",
                "must be at least 1",
            ));
        }
        Ok(())
    }
}

impl GradCheckConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: GradCheckConfig = parse_toml(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&load_text(path)?)
    }
}
