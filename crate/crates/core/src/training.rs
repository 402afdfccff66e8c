//! Training objective (relative Sobolev data loss plus dissipativity
//! regularization on a shell of states) and the Adam training loop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MnoError, Result};
use crate::model::{GradientBuffer, Model, ModelParams};
use crate::spectral::SobolevSpec;
use crate::state::StateSpace;
use crate::systems::{grf_coefficients, GrfSpec, PairDataset};

fn default_lambda() -> f64 {
    0.5
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DissipativityConfig {
    #[serde(default)]
    pub enabled: bool,
    /// Loss weight of the regularization term.
    #[serde(default = "default_weight")]
    pub weight: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Shell radii in state-norm units. When absent they default to
    /// `max training norm / λ` and `1.3 ×` that.
    #[serde(default)]
    pub shell_inner: Option<f64>,
    #[serde(default)]
    pub shell_outer: Option<f64>,
    /// Shell samples per minibatch; defaults to the batch size.
    #[serde(default)]
    pub samples_per_batch: Option<usize>,
}

impl Default for DissipativityConfig {
    fn default() -> Self {
        DissipativityConfig {
            enabled: false,
            weight: default_weight(),
            lambda: default_lambda(),
            shell_inner: None,
            shell_outer: None,
            samples_per_batch: None,
        }
    }
}

impl DissipativityConfig {
    pub fn shell(inner: f64, outer: f64, lambda: f64, weight: f64) -> Self {
        DissipativityConfig {
            enabled: true,
            weight,
            lambda,
            shell_inner: Some(inner),
            shell_outer: Some(outer),
            samples_per_batch: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(MnoError::validation(
                "training.dissipativity.lambda",
                format!("must lie in (0, 1), got {}", self.lambda),
            ));
        }
        if !(self.weight >= 0.0 && self.weight.is_finite()) {
            return Err(MnoError::validation(
                "training.dissipativity.weight",
                "must be non-negative",
            ));
        }
        if let (Some(a), Some(b)) = (self.shell_inner, self.shell_outer) {
            if !(a > 0.0 && a < b && b.is_finite()) {
                return Err(MnoError::validation(
                    "training.dissipativity.shell_inner",
                    format!("need 0 < shell_inner < shell_outer, got {a} and {b}"),
                ));
            }
        }
        if self.shell_inner.is_some() != self.shell_outer.is_some() {
            return Err(MnoError::validation(
                "training.dissipativity.shell_outer",
                "give both shell radii or neither",
            ));
        }
        if self.samples_per_batch == Some(0) {
            return Err(MnoError::validation(
                "training.dissipativity.samples_per_batch",
                "must be at least 1",
            ));
        }
        Ok(())
    }

    /// Shell radii, falling back to `(m/λ, 1.3 m/λ)` for the largest training
    /// norm `m`.
    pub fn radii(&self, max_training_norm: f64) -> (f64, f64) {
        match (self.shell_inner, self.shell_outer) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                let inner = max_training_norm / self.lambda;
                (inner, 1.3 * inner)
            }
        }
    }
}

/// Draws states on a shell `inner ≤ ‖u‖ ≤ outer` of a state space.
#[derive(Clone, Debug)]
pub struct ShellSampler {
    pub space: StateSpace,
    /// Field directions are normalized draws of this measure.
    pub grf: Option<GrfSpec>,
    pub inner: f64,
    pub outer: f64,
}

impl ShellSampler {
    pub fn new(space: StateSpace, grf: Option<GrfSpec>, inner: f64, outer: f64) -> Result<Self> {
        if !(inner > 0.0 && inner <= outer && outer.is_finite()) {
            return Err(MnoError::validation(
                "training.dissipativity.shell_inner",
                format!("need 0 < inner ≤ outer, got {inner} and {outer}"),
            ));
        }
        if let StateSpace::Field(_) = space {
            if grf.is_none() {
                return Err(MnoError::validation(
                    "system.grf",
                    "field shells need a Gaussian measure for directions",
                ));
            }
        }
        Ok(ShellSampler {
            space,
            grf,
            inner,
            outer,
        })
    }

    /// A copy drawing on the sphere of the given radius.
    pub fn at_radius(&self, radius: f64) -> Result<Self> {
        ShellSampler::new(self.space.clone(), self.grf, radius, radius)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        loop {
            let mut u: Vec<f64> = match &self.space {
                StateSpace::Vector(d) => (0..*d)
                    .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect(),
                StateSpace::Field(t) => {
                    let spec = self.grf.expect("checked in new");
                    let coeffs = grf_coefficients(&spec, t.domain(), rng);
                    t.inverse(&coeffs)
                }
            };
            let norm = self.space.norm(&u);
            if norm > 0.0 && norm.is_finite() {
                let radius = if self.inner == self.outer {
                    self.inner
                } else {
                    rng.random_range(self.inner..=self.outer)
                };
                u.iter_mut().for_each(|v| *v *= radius / norm);
                return u;
            }
        }
    }
}

/// One shell sample; see [`ShellSampler`].
pub fn shell_sample<R: Rng + ?Sized>(rng: &mut R, sampler: &ShellSampler) -> Vec<f64> {
    sampler.sample(rng)
}

/// Parts of the objective, all averaged over their samples.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub data: f64,
    pub regularization: f64,
    pub total: f64,
}

/// Objective settings shared by training and gradient checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossSpec {
    pub sobolev: SobolevSpec,
    /// `(weight, λ)` of the regularization term, if enabled.
    pub dissipativity: Option<(f64, f64)>,
}

/// `mean_b L(model(u_b), S_h(u_b)) + α mean_s ‖model(v_s) − λ v_s‖²` and its
/// parameter gradient. `inputs`/`targets` hold the batch contiguously, `shell`
/// the shell samples.
pub fn total_loss(
    model: &Model,
    space: &StateSpace,
    inputs: &[f64],
    targets: &[f64],
    shell: &[f64],
    spec: &LossSpec,
    want_grad: bool,
) -> Result<(LossParts, GradientBuffer)> {
    let dim = space.dim();
    if inputs.len() % dim != 0 || targets.len() != inputs.len() {
        return Err(MnoError::Shape(format!(
            "batch of {} inputs and {} targets for states of {dim} values",
            inputs.len(),
            targets.len()
        )));
    }
    let batch = inputs.len() / dim;
    let mut grads = model.gradient_buffer();
    let mut parts = LossParts::default();

    if batch > 0 {
        let (pred, tape) = model.forward(inputs, batch)?;
        let mut cot = vec![0.0; pred.len()];
        for b in 0..batch {
            let r = b * dim..(b + 1) * dim;
            let (l, g) = space.loss_with_grad(
                &pred[r.clone()],
                &targets[r.clone()],
                spec.sobolev,
                want_grad,
            )?;
            parts.data += l / batch as f64;
            if want_grad {
                cot[r]
                    .iter_mut()
                    .zip(&g)
                    .for_each(|(c, v)| *c = v / batch as f64);
            }
        }
        if want_grad {
            model.backward(&tape, &cot, &mut grads)?;
        }
    }

    if let Some((weight, lambda)) = spec.dissipativity {
        if !shell.is_empty() && weight > 0.0 {
            if shell.len() % dim != 0 {
                return Err(MnoError::Shape(
                    "shell samples do not match the state size".into(),
                ));
            }
            let count = shell.len() / dim;
            let (out, tape) = model.forward(shell, count)?;
            let mut cot = vec![0.0; out.len()];
            for s in 0..count {
                let r = s * dim..(s + 1) * dim;
                let resid: Vec<f64> = out[r.clone()]
                    .iter()
                    .zip(&shell[r.clone()])
                    .map(|(o, v)| o - lambda * v)
                    .collect();
                let n = space.norm(&resid);
                parts.regularization += weight * n * n / count as f64;
                if want_grad {
                    let g = space.norm_sq_grad(&resid);
                    cot[r]
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(c, v)| *c = weight * v / count as f64);
                }
            }
            if want_grad {
                model.backward(&tape, &cot, &mut grads)?;
            }
        }
    }
    parts.total = parts.data + parts.regularization;
    Ok((parts, grads))
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates, block-congruent with the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            m: params.blocks.iter().map(|b| vec![0.0; b.len()]).collect(),
            v: params.blocks.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

/// Adam update number `t ≥ 1` with bias correction.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &GradientBuffer,
    state: &mut AdamState,
    lr: f64,
    t: u64,
) {
    assert!(t >= 1, "Adam steps are numbered from 1");
    let c1 = 1.0 - ADAM_BETA1.powf(t as f64);
    let c2 = 1.0 - ADAM_BETA2.powf(t as f64);
    for (b, block) in params.blocks.iter_mut().enumerate() {
        let (m, v, g) = (&mut state.m[b], &mut state.v[b], &grads.blocks[b]);
        for i in 0..block.len() {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            block[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

fn default_balanced() -> bool {
    true
}

fn default_validation() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub sobolev_order: u32,
    #[serde(default = "default_balanced")]
    pub balanced: bool,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Epochs between learning-rate halvings; 0 keeps the rate fixed.
    #[serde(default)]
    pub lr_halving_period: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dissipativity: DissipativityConfig,
    /// Hold out the last 10% of trajectories for a validation loss.
    #[serde(default = "default_validation")]
    pub validation: bool,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, epochs: usize, batch_size: usize) -> Self {
        TrainConfig {
            sobolev_order: 0,
            balanced: true,
            learning_rate,
            epochs,
            lr_halving_period: 0,
            batch_size,
            seed: 0,
            dissipativity: DissipativityConfig::default(),
            validation: true,
        }
    }

    pub fn sobolev(&self) -> SobolevSpec {
        SobolevSpec {
            order: self.sobolev_order,
            balanced: self.balanced,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sobolev().validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(MnoError::validation(
                "training.learning_rate",
                "must be positive",
            ));
        }
        if self.epochs < 1 {
            return Err(MnoError::validation(
                "training.epochs",
                "must be at least 1",
            ));
        }
        if self.batch_size < 1 {
            return Err(MnoError::validation(
                "training.batch_size",
                "must be at least 1",
            ));
        }
        self.dissipativity.validate()
    }

    /// `lr₀ · 2^{−⌊epoch / period⌋}`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match epoch.checked_div(self.lr_halving_period) {
            Some(halvings) => self.learning_rate * 0.5f64.powi(halvings as i32),
            None => self.learning_rate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub data_loss: f64,
    pub regularization: f64,
    pub validation_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs: usize,
    pub pairs: usize,
    pub final_train_loss: f64,
    pub final_validation_loss: Option<f64>,
    /// Largest state norm in the training data.
    pub max_training_norm: f64,
    pub shell: Option<(f64, f64)>,
    pub history: Vec<EpochRecord>,
}

/// Everything [`train`] needs besides the dataset and model.
pub struct TrainSetup<'a> {
    pub space: StateSpace,
    /// Measure for field shell directions.
    pub grf: Option<GrfSpec>,
    pub config: &'a TrainConfig,
    /// Called after every epoch.
    pub on_epoch: Option<&'a mut dyn FnMut(&EpochRecord)>,
}

/// Mean data loss over the given pairs.
pub fn evaluate_loss(
    model: &Model,
    space: &StateSpace,
    data: &PairDataset,
    indices: &[usize],
    sobolev: SobolevSpec,
) -> Result<f64> {
    if indices.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &i in indices {
        let pred = model.apply(data.input(i))?;
        total += space
            .loss_with_grad(&pred, data.output(i), sobolev, false)?
            .0;
    }
    Ok(total / indices.len() as f64)
}

/// Trains `model` in place with seeded minibatch Adam.
pub fn train(model: &mut Model, data: &PairDataset, setup: TrainSetup) -> Result<TrainingSummary> {
    let cfg = setup.config;
    cfg.validate()?;
    let space = setup.space;
    if data.record_size != space.dim() {
        return Err(MnoError::Shape(format!(
            "dataset states hold {} values, model state space {}",
            data.record_size,
            space.dim()
        )));
    }
    model.arch.check_state_len(space.dim())?;
    if data.is_empty() {
        return Err(MnoError::validation("data", "dataset holds no pairs"));
    }
    let (train_idx, val_idx) = if cfg.validation && data.len() >= 2 {
        data.split_validation()
    } else {
        ((0..data.len()).collect(), Vec::new())
    };
    let max_norm = data.max_norm(|u| space.norm(u));
    let sampler = if cfg.dissipativity.enabled {
        let (inner, outer) = cfg.dissipativity.radii(max_norm);
        Some(ShellSampler::new(space.clone(), setup.grf, inner, outer)?)
    } else {
        None
    };
    let spec = LossSpec {
        sobolev: cfg.sobolev(),
        dissipativity: sampler
            .as_ref()
            .map(|_| (cfg.dissipativity.weight, cfg.dissipativity.lambda)),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(&model.params);
    let mut order = train_idx.clone();
    let dim = space.dim();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut on_epoch = setup.on_epoch;
    let mut t = 0u64;
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut sums = LossParts::default();
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut inputs = Vec::with_capacity(chunk.len() * dim);
            let mut targets = Vec::with_capacity(chunk.len() * dim);
            for &i in chunk {
                inputs.extend_from_slice(data.input(i));
                targets.extend_from_slice(data.output(i));
            }
            let mut shell = Vec::new();
            if let Some(s) = &sampler {
                let count = cfg.dissipativity.samples_per_batch.unwrap_or(chunk.len());
                for _ in 0..count {
                    shell.extend(s.sample(&mut rng));
                }
            }
            let (parts, grads) = total_loss(model, &space, &inputs, &targets, &shell, &spec, true)?;
            if !parts.total.is_finite() || !grads.is_finite() {
                return Err(MnoError::NonFiniteLoss { epoch, batch: b });
            }
            t += 1;
            adam_step(&mut model.params, &grads, &mut adam, lr, t);
            sums.data += parts.data;
            sums.regularization += parts.regularization;
            sums.total += parts.total;
            batches += 1;
        }
        let validation_loss = if val_idx.is_empty() {
            None
        } else {
            Some(evaluate_loss(model, &space, data, &val_idx, cfg.sobolev())?)
        };
        let record = EpochRecord {
            epoch,
            learning_rate: lr,
            train_loss: sums.total / batches as f64,
            data_loss: sums.data / batches as f64,
            regularization: sums.regularization / batches as f64,
            validation_loss,
        };
        if let Some(cb) = on_epoch.as_mut() {
            cb(&record);
        }
        history.push(record);
    }
    let last = history.last().expect("at least one epoch");
    Ok(TrainingSummary {
        epochs: cfg.epochs,
        pairs: data.len(),
        final_train_loss: last.train_loss,
        final_validation_loss: last.validation_loss,
        max_training_norm: max_norm,
        shell: sampler.map(|s| (s.inner, s.outer)),
        history,
    })
}
