use serde::{Deserialize, Serialize};

use super::linalg::{gemm, View};
use super::{Activation, BlockSpec, GradientBuffer, ModelParams};
use crate::error::{MnoError, Result};

fn unit_scale() -> f64 {
    1.0
}

/// Fully connected network. Inputs are divided by `state_scale` and outputs
/// multiplied by it, so the trainable part sees order-one values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FfnArchitecture {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default = "unit_scale")]
    pub state_scale: f64,
    /// Predict the increment `u(t+h) − u(t)` instead of `u(t+h)`.
    #[serde(default)]
    pub residual: bool,
}

impl FfnArchitecture {
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        hidden_layers: usize,
        hidden_width: usize,
    ) -> Self {
        FfnArchitecture {
            input_dim,
            output_dim,
            hidden_layers,
            hidden_width,
            activation: Activation::Gelu,
            state_scale: 1.0,
            residual: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(MnoError::validation(
                "model.input_dim",
                "dimensions must be at least 1",
            ));
        }
        if self.hidden_layers < 1 {
            return Err(MnoError::validation(
                "model.hidden_layers",
                "must be at least 1",
            ));
        }
        if self.hidden_width < 1 {
            return Err(MnoError::validation(
                "model.hidden_width",
                "must be at least 1",
            ));
        }
        if !(self.state_scale > 0.0 && self.state_scale.is_finite()) {
            return Err(MnoError::validation(
                "model.state_scale",
                "must be positive",
            ));
        }
        if self.residual && self.input_dim != self.output_dim {
            return Err(MnoError::validation(
                "model.residual",
                "needs equal input and output dimensions",
            ));
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![(self.hidden_width, self.input_dim)];
        for _ in 1..self.hidden_layers {
            dims.push((self.hidden_width, self.hidden_width));
        }
        dims.push((self.output_dim, self.hidden_width));
        dims
    }

    /// `layer{i}.weight` (`[out, in]`, row-major) then `layer{i}.bias`.
    pub fn block_specs(&self) -> Vec<BlockSpec> {
        self.layer_dims()
            .into_iter()
            .enumerate()
            .flat_map(|(i, (out, inp))| {
                [
                    BlockSpec::real(format!("layer{i}.weight"), vec![out, inp]),
                    BlockSpec::real(format!("layer{i}.bias"), vec![out]),
                ]
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub(crate) struct FfnTape {
    inputs: Vec<f64>,
    /// Layer inputs `a_0 … a_H` (row per sample).
    acts: Vec<Vec<f64>>,
    /// Hidden pre-activations `z_0 … z_{H−1}`.
    pre: Vec<Vec<f64>>,
}

fn affine(
    x: &[f64],
    batch: usize,
    w: &[f64],
    b: &[f64],
    out_dim: usize,
    in_dim: usize,
) -> Vec<f64> {
    let mut z: Vec<f64> = (0..batch).flat_map(|_| b.iter().copied()).collect();
    gemm(
        View::new(x, batch, in_dim),
        View::new(w, out_dim, in_dim).t(),
        1.0,
        &mut z,
    );
    z
}

pub(crate) fn forward(
    arch: &FfnArchitecture,
    p: &ModelParams,
    inputs: &[f64],
    batch: usize,
    save: bool,
) -> (Vec<f64>, Option<FfnTape>) {
    let s = arch.state_scale;
    let dims = arch.layer_dims();
    let mut a: Vec<f64> = inputs.iter().map(|v| v / s).collect();
    let mut acts = Vec::new();
    let mut pre = Vec::new();
    for (l, &(out, inp)) in dims.iter().enumerate().take(arch.hidden_layers) {
        let z = affine(&a, batch, &p.blocks[2 * l], &p.blocks[2 * l + 1], out, inp);
        let next = z.iter().map(|v| arch.activation.apply(*v)).collect();
        if save {
            acts.push(std::mem::replace(&mut a, next));
            pre.push(z);
        } else {
            a = next;
        }
    }
    let last = arch.hidden_layers;
    let (out_dim, in_dim) = dims[last];
    let y = affine(
        &a,
        batch,
        &p.blocks[2 * last],
        &p.blocks[2 * last + 1],
        out_dim,
        in_dim,
    );
    let mut out: Vec<f64> = y.iter().map(|v| v * s).collect();
    if arch.residual {
        out.iter_mut().zip(inputs).for_each(|(o, x)| *o += x);
    }
    let tape = save.then(|| {
        acts.push(a);
        FfnTape {
            inputs: inputs.to_vec(),
            acts,
            pre,
        }
    });
    (out, tape)
}

pub(crate) fn backward(
    arch: &FfnArchitecture,
    p: &ModelParams,
    tape: &FfnTape,
    cotangent: &[f64],
    grads: &mut GradientBuffer,
) -> Vec<f64> {
    let s = arch.state_scale;
    let dims = arch.layer_dims();
    let batch = tape.inputs.len() / arch.input_dim;
    let mut delta: Vec<f64> = cotangent.iter().map(|g| g * s).collect();
    for l in (0..=arch.hidden_layers).rev() {
        let (out, inp) = dims[l];
        if l < arch.hidden_layers {
            for (d, z) in delta.iter_mut().zip(&tape.pre[l]) {
                *d *= arch.activation.derivative(*z);
            }
        }
        let d_view = View::new(&delta, batch, out);
        gemm(
            d_view.t(),
            View::new(&tape.acts[l], batch, inp),
            1.0,
            &mut grads.blocks[2 * l],
        );
        let db = &mut grads.blocks[2 * l + 1];
        for row in delta.chunks(out) {
            db.iter_mut().zip(row).for_each(|(b, d)| *b += d);
        }
        let mut prev = vec![0.0; batch * inp];
        gemm(
            d_view,
            View::new(&p.blocks[2 * l], out, inp),
            0.0,
            &mut prev,
        );
        delta = prev;
    }
    let mut dx: Vec<f64> = delta.iter().map(|d| d / s).collect();
    if arch.residual {
        dx.iter_mut().zip(cotangent).for_each(|(d, g)| *d += g);
    }
    dx
}
