//! Learnable one-step surrogates with hand-written reverse-mode gradients.

mod ffn;
mod fno;
mod linalg;
mod params;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MnoError, Result};

pub use ffn::FfnArchitecture;
pub use fno::{retained_modes, FnoArchitecture};
pub use params::{BlockSpec, GradientBuffer, ModelParams};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// Exact GELU, `x Φ(x)`.
    #[default]
    Gelu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => 0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2)),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => {
                let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
                let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
                cdf + x * pdf
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::Identity => 1.0,
        }
    }
}

/// `y = w · x` with a single scalar parameter `w`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearArchitecture {
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Linear(LinearArchitecture),
    Ffn(FfnArchitecture),
    Fno(FnoArchitecture),
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        match self {
            Architecture::Linear(a) => {
                if a.dim == 0 {
                    return Err(MnoError::validation("model.dim", "must be at least 1"));
                }
                Ok(())
            }
            Architecture::Ffn(a) => a.validate(),
            Architecture::Fno(a) => a.validate(),
        }
    }

    pub fn block_specs(&self) -> Vec<BlockSpec> {
        match self {
            Architecture::Linear(_) => vec![BlockSpec::real("scale", vec![1])],
            Architecture::Ffn(a) => a.block_specs(),
            Architecture::Fno(a) => a.block_specs(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.block_specs().iter().map(BlockSpec::len).sum()
    }

    /// Whether the network output is added to its input.
    pub fn residual(&self) -> bool {
        match self {
            Architecture::Linear(_) => false,
            Architecture::Ffn(a) => a.residual,
            Architecture::Fno(a) => a.residual_mode,
        }
    }

    /// Checks that a state with `len` values can be fed to the model.
    pub fn check_state_len(&self, len: usize) -> Result<()> {
        match self {
            Architecture::Linear(a) if a.dim != len => Err(MnoError::Shape(format!(
                "model expects {} values, got {len}",
                a.dim
            ))),
            Architecture::Ffn(a) if a.input_dim != len => Err(MnoError::Shape(format!(
                "network expects {} inputs, got {len}",
                a.input_dim
            ))),
            Architecture::Fno(a) => a.resolution_of(len).map(|_| ()),
            _ => Ok(()),
        }
    }

    /// Values per output state for an input state of `len` values.
    pub fn output_len(&self, len: usize) -> usize {
        match self {
            Architecture::Ffn(a) => a.output_dim,
            _ => len,
        }
    }
}

/// Saved forward state needed by [`Model::backward`].
#[derive(Clone, Debug)]
pub struct Tape {
    batch: usize,
    inner: TapeInner,
}

#[derive(Clone, Debug)]
enum TapeInner {
    Linear(Vec<f64>),
    Ffn(ffn::FfnTape),
    Fno(Vec<fno::FnoTape>),
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub params: ModelParams,
}

impl Model {
    /// All parameters zero.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let params = ModelParams::zeros(arch.block_specs());
        Ok(Model { arch, params })
    }

    /// Random initialization: affine weights and biases uniform in
    /// `±1/√fan_in`; complex spectral weights uniform in the disk of radius
    /// `1/(width · modes^{dim/2})`.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut model = Model::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let specs = model.params.specs.clone();
        for (spec, block) in specs.iter().zip(model.params.blocks.iter_mut()) {
            if spec.complex {
                let radius = match &model.arch {
                    Architecture::Fno(a) => a.spectral_init_radius(),
                    _ => 1.0,
                };
                for pair in block.chunks_mut(2) {
                    let r = radius * rng.random::<f64>().sqrt();
                    let theta = std::f64::consts::TAU * rng.random::<f64>();
                    pair[0] = r * theta.cos();
                    pair[1] = r * theta.sin();
                }
            } else if spec.name == "scale" {
                block[0] = rng.random_range(-1.0..1.0);
            } else {
                let fan_in = fan_in(&model.arch, spec);
                let bound = 1.0 / (fan_in as f64).sqrt();
                for v in block.iter_mut() {
                    *v = rng.random_range(-bound..bound);
                }
            }
        }
        Ok(model)
    }

    pub fn from_params(arch: Architecture, params: ModelParams) -> Result<Self> {
        arch.validate()?;
        if params.specs != arch.block_specs() {
            return Err(MnoError::Format(
                "parameter blocks do not match the architecture".into(),
            ));
        }
        for (s, b) in params.specs.iter().zip(&params.blocks) {
            if s.len() != b.len() {
                return Err(MnoError::Format(format!(
                    "block {} has the wrong length",
                    s.name
                )));
            }
        }
        Ok(Model { arch, params })
    }

    pub fn gradient_buffer(&self) -> GradientBuffer {
        self.params.gradient_buffer()
    }

    /// Evaluates the model on one state.
    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.run(u, 1, false)?.0)
    }

    /// Evaluates a batch of `batch` states stored contiguously, saving the
    /// activations needed for [`Model::backward`].
    pub fn forward(&self, inputs: &[f64], batch: usize) -> Result<(Vec<f64>, Tape)> {
        let (out, tape) = self.run(inputs, batch, true)?;
        Ok((out, tape.expect("tape requested")))
    }

    fn run(&self, inputs: &[f64], batch: usize, save: bool) -> Result<(Vec<f64>, Option<Tape>)> {
        if batch == 0 || inputs.len() % batch != 0 {
            return Err(MnoError::Shape(format!(
                "{} values cannot be split into {batch} states",
                inputs.len()
            )));
        }
        let len = inputs.len() / batch;
        self.arch.check_state_len(len)?;
        let p = &self.params;
        let (out, inner) = match &self.arch {
            Architecture::Linear(_) => {
                let w = p.blocks[0][0];
                let out = inputs.iter().map(|x| w * x).collect();
                (out, save.then(|| TapeInner::Linear(inputs.to_vec())))
            }
            Architecture::Ffn(a) => {
                let (out, tape) = ffn::forward(a, p, inputs, batch, save);
                (out, tape.map(TapeInner::Ffn))
            }
            Architecture::Fno(a) => {
                let mut out = Vec::with_capacity(inputs.len());
                let mut tapes = Vec::new();
                for u in inputs.chunks(len) {
                    let (o, t) = fno::forward(a, p, u, save)?;
                    out.extend_from_slice(&o);
                    if let Some(t) = t {
                        tapes.push(t);
                    }
                }
                (out, save.then_some(TapeInner::Fno(tapes)))
            }
        };
        Ok((out, inner.map(|inner| Tape { batch, inner })))
    }

    /// Accumulates parameter gradients for the output cotangent `cotangent`
    /// into `grads` and returns the input cotangent.
    pub fn backward(
        &self,
        tape: &Tape,
        cotangent: &[f64],
        grads: &mut GradientBuffer,
    ) -> Result<Vec<f64>> {
        if !grads.congruent_with(&self.params) {
            return Err(MnoError::Shape(
                "gradient buffer does not match the parameters".into(),
            ));
        }
        let p = &self.params;
        match (&self.arch, &tape.inner) {
            (Architecture::Linear(_), TapeInner::Linear(x)) => {
                if cotangent.len() != x.len() {
                    return Err(MnoError::Shape(
                        "cotangent does not match the saved batch".into(),
                    ));
                }
                let w = p.blocks[0][0];
                grads.blocks[0][0] += x.iter().zip(cotangent).map(|(a, b)| a * b).sum::<f64>();
                Ok(cotangent.iter().map(|c| w * c).collect())
            }
            (Architecture::Ffn(a), TapeInner::Ffn(t)) => {
                if cotangent.len() != a.output_dim * tape.batch {
                    return Err(MnoError::Shape(
                        "cotangent does not match the saved batch".into(),
                    ));
                }
                Ok(ffn::backward(a, p, t, cotangent, grads))
            }
            (Architecture::Fno(a), TapeInner::Fno(tapes)) => {
                if tapes.len() != tape.batch || cotangent.len() % tape.batch != 0 {
                    return Err(MnoError::MissingState(
                        "tape does not hold the forward batch".into(),
                    ));
                }
                let len = cotangent.len() / tape.batch;
                let mut dx = Vec::with_capacity(cotangent.len());
                for (t, g) in tapes.iter().zip(cotangent.chunks(len)) {
                    if g.len() != t.points() {
                        return Err(MnoError::Shape(
                            "cotangent does not match the saved batch".into(),
                        ));
                    }
                    dx.extend(fno::backward(a, p, t, g, grads));
                }
                Ok(dx)
            }
            _ => Err(MnoError::MissingState(
                "tape was recorded by a different architecture".into(),
            )),
        }
    }
}

fn fan_in(arch: &Architecture, spec: &BlockSpec) -> usize {
    let weight_name = spec.name.replace(".bias", ".weight");
    let shape = if spec.name.ends_with(".bias") {
        arch.block_specs()
            .into_iter()
            .find(|s| s.name == weight_name)
            .map(|s| s.shape)
            .unwrap_or_else(|| vec![1, 1])
    } else {
        spec.shape.clone()
    };
    shape.get(1).copied().unwrap_or(1).max(1)
}
