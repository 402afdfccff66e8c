//! Fourier neural operator on periodic 1D or 2D grids.
//!
//! Layout: lifting affine on `1 + dim` input channels (field value and grid
//! coordinates `j/N`), `n_layers` Fourier layers
//! `v ← σ(W v + b + K v)` with `K` a truncated spectral convolution, then a
//! two-layer pointwise projection `width → projection_width → 1`.
//!
//! Spectral weights are indexed `[c_in, c_out, k]` where `k` runs over the
//! retained half-spectrum entries in the order given by [`retained_modes`].

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::linalg::{gemm, View};
use super::{Activation, BlockSpec, GradientBuffer, ModelParams};
use crate::error::{MnoError, Result};
use crate::spectral::{Domain, Transform};

fn default_projection() -> usize {
    128
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FnoArchitecture {
    pub dimension: usize,
    pub width: usize,
    pub modes: usize,
    pub n_layers: usize,
    #[serde(default = "default_projection")]
    pub projection_width: usize,
    #[serde(default)]
    pub activation: Activation,
    /// Output `u + net(u)` instead of `net(u)`.
    #[serde(default)]
    pub residual_mode: bool,
}

impl FnoArchitecture {
    pub fn new(dimension: usize, width: usize, modes: usize, n_layers: usize) -> Self {
        FnoArchitecture {
            dimension,
            width,
            modes,
            n_layers,
            projection_width: default_projection(),
            activation: Activation::Gelu,
            residual_mode: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension != 1 && self.dimension != 2 {
            return Err(MnoError::validation("model.dimension", "must be 1 or 2"));
        }
        for (name, v) in [
            ("model.width", self.width),
            ("model.modes", self.modes),
            ("model.n_layers", self.n_layers),
            ("model.projection_width", self.projection_width),
        ] {
            if v < 1 {
                return Err(MnoError::validation(name, "must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn in_channels(&self) -> usize {
        1 + self.dimension
    }

    /// Retained spectral entries per channel pair.
    pub fn spectral_len(&self) -> usize {
        if self.dimension == 1 {
            self.modes
        } else {
            2 * self.modes * self.modes
        }
    }

    pub fn spectral_init_radius(&self) -> f64 {
        1.0 / (self.width as f64 * (self.modes as f64).powf(self.dimension as f64 / 2.0))
    }

    pub fn block_specs(&self) -> Vec<BlockSpec> {
        let w = self.width;
        let mut specs = vec![
            BlockSpec::real("lift.weight", vec![w, self.in_channels()]),
            BlockSpec::real("lift.bias", vec![w]),
        ];
        let spectral_shape = if self.dimension == 1 {
            vec![w, w, self.modes]
        } else {
            vec![w, w, 2 * self.modes, self.modes]
        };
        for l in 0..self.n_layers {
            specs.push(BlockSpec::complex(
                format!("fourier{l}.spectral"),
                spectral_shape.clone(),
            ));
            specs.push(BlockSpec::real(format!("fourier{l}.weight"), vec![w, w]));
            specs.push(BlockSpec::real(format!("fourier{l}.bias"), vec![w]));
        }
        specs.push(BlockSpec::real(
            "proj1.weight",
            vec![self.projection_width, w],
        ));
        specs.push(BlockSpec::real("proj1.bias", vec![self.projection_width]));
        specs.push(BlockSpec::real(
            "proj2.weight",
            vec![1, self.projection_width],
        ));
        specs.push(BlockSpec::real("proj2.bias", vec![1]));
        specs
    }

    /// Grid resolution of a state with `len` values.
    pub fn resolution_of(&self, len: usize) -> Result<usize> {
        let n = if self.dimension == 1 {
            len
        } else {
            let n = (len as f64).sqrt().round() as usize;
            if n * n != len {
                return Err(MnoError::Shape(format!(
                    "{len} values do not form a square grid"
                )));
            }
            n
        };
        if n < 4 || !n.is_power_of_two() {
            return Err(MnoError::Shape(format!(
                "resolution {n} is not a power of two ≥ 4"
            )));
        }
        if 2 * self.modes > n {
            return Err(MnoError::validation(
                "model.modes",
                format!(
                    "{} modes need resolution ≥ {}, got {n}",
                    self.modes,
                    2 * self.modes
                ),
            ));
        }
        Ok(n)
    }

    fn domain(&self, n: usize) -> Domain {
        // coordinates are normalized, so the physical length is irrelevant
        if self.dimension == 1 {
            Domain::line(n, 1.0)
        } else {
            Domain::Square { n, length: 1.0 }
        }
    }
}

/// Half-spectrum indices of the retained modes and their multiplicity
/// factor `c` (1 on the `k_x = 0` column, 2 elsewhere).
///
/// 1D keeps `k < modes`; 2D keeps `k_x < modes` and `k_y ∈ [0, modes) ∪
/// [N − modes, N)`, row by row.
pub fn retained_modes(dimension: usize, n: usize, modes: usize) -> Vec<(usize, f64)> {
    let factor = |kx: usize| if kx == 0 { 1.0 } else { 2.0 };
    if dimension == 1 {
        (0..modes).map(|k| (k, factor(k))).collect()
    } else {
        let half = n / 2 + 1;
        let mut out = Vec::with_capacity(2 * modes * modes);
        for ry in 0..2 * modes {
            let row = if ry < modes { ry } else { n - 2 * modes + ry };
            for kx in 0..modes {
                out.push((row * half + kx, factor(kx)));
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub(crate) struct FnoTape {
    n: usize,
    /// Lifting input channels (value and coordinates), `cin × P`.
    input: Vec<f64>,
    /// Input of each Fourier layer, `width × P`, plus the final one.
    layer_in: Vec<Vec<f64>>,
    /// Retained spectra of each layer input, `width × K`.
    spectra: Vec<Vec<Complex64>>,
    /// Pre-activations of each Fourier layer.
    pre: Vec<Vec<f64>>,
    proj_pre: Vec<f64>,
    proj_act: Vec<f64>,
    projection_width: usize,
}

impl FnoTape {
    pub(crate) fn points(&self) -> usize {
        self.proj_pre.len() / self.projection_width
    }
}

struct Ctx<'a> {
    arch: &'a FnoArchitecture,
    n: usize,
    points: usize,
    transform: Transform,
    retained: Vec<(usize, f64)>,
    p: &'a ModelParams,
}

impl<'a> Ctx<'a> {
    fn new(arch: &'a FnoArchitecture, p: &'a ModelParams, len: usize) -> Result<Self> {
        let n = arch.resolution_of(len)?;
        let domain = arch.domain(n);
        Ok(Ctx {
            arch,
            n,
            points: domain.points(),
            transform: Transform::new(domain),
            retained: retained_modes(arch.dimension, n, arch.modes),
            p,
        })
    }

    fn block(&self, name: &str) -> &'a [f64] {
        self.p.block(name)
    }

    fn spectral_len(&self) -> usize {
        self.transform.domain().spectral_len()
    }

    /// `out (rows × P) = W (rows × cols) · x (cols × P) + b`.
    fn pointwise(&self, w: &[f64], b: &[f64], x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
        let p = self.points;
        let mut out: Vec<f64> = b.iter().flat_map(|v| std::iter::repeat_n(*v, p)).collect();
        gemm(
            View::new(w, rows, cols),
            View::new(x, cols, p),
            1.0,
            &mut out,
        );
        out
    }

    fn input_channels(&self, u: &[f64]) -> Vec<f64> {
        let (n, p) = (self.n, self.points);
        let mut input = Vec::with_capacity(self.arch.in_channels() * p);
        input.extend_from_slice(u);
        input.extend((0..p).map(|idx| (idx % n) as f64 / n as f64));
        if self.arch.dimension == 2 {
            input.extend((0..p).map(|idx| (idx / n) as f64 / n as f64));
        }
        input
    }
}

pub(crate) fn forward(
    arch: &FnoArchitecture,
    params: &ModelParams,
    u: &[f64],
    save: bool,
) -> Result<(Vec<f64>, Option<FnoTape>)> {
    let ctx = Ctx::new(arch, params, u.len())?;
    let (w, p, k_len) = (arch.width, ctx.points, ctx.retained.len());
    let act = arch.activation;
    let input = ctx.input_channels(u);
    let mut v = ctx.pointwise(
        ctx.block("lift.weight"),
        ctx.block("lift.bias"),
        &input,
        w,
        arch.in_channels(),
    );
    let mut layer_in = Vec::new();
    let mut spectra = Vec::new();
    let mut pre = Vec::new();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); ctx.spectral_len()];
    let mut out_hat = vec![Complex64::new(0.0, 0.0); ctx.spectral_len()];
    let mut conv = vec![0.0; p];
    for l in 0..arch.n_layers {
        let weights = ctx.block(&format!("fourier{l}.spectral"));
        let mut spec = Vec::with_capacity(w * k_len);
        for c in 0..w {
            ctx.transform
                .forward_into(&v[c * p..(c + 1) * p], &mut coeffs);
            spec.extend(ctx.retained.iter().map(|(idx, _)| coeffs[*idx]));
        }
        let mut z = ctx.pointwise(
            ctx.block(&format!("fourier{l}.weight")),
            ctx.block(&format!("fourier{l}.bias")),
            &v,
            w,
            w,
        );
        for o in 0..w {
            out_hat.fill(Complex64::new(0.0, 0.0));
            for c in 0..w {
                let base = (c * w + o) * k_len;
                for (k, (idx, _)) in ctx.retained.iter().enumerate() {
                    let s = Complex64::new(weights[2 * (base + k)], weights[2 * (base + k) + 1]);
                    out_hat[*idx] += s * spec[c * k_len + k];
                }
            }
            ctx.transform.inverse_into(&out_hat, &mut conv);
            z[o * p..(o + 1) * p]
                .iter_mut()
                .zip(&conv)
                .for_each(|(a, b)| *a += b);
        }
        let next: Vec<f64> = z.iter().map(|x| act.apply(*x)).collect();
        if save {
            layer_in.push(std::mem::replace(&mut v, next));
            spectra.push(spec);
            pre.push(z);
        } else {
            v = next;
        }
    }
    let pw = arch.projection_width;
    let proj_pre = ctx.pointwise(
        ctx.block("proj1.weight"),
        ctx.block("proj1.bias"),
        &v,
        pw,
        w,
    );
    let proj_act: Vec<f64> = proj_pre.iter().map(|x| act.apply(*x)).collect();
    let mut out = ctx.pointwise(
        ctx.block("proj2.weight"),
        ctx.block("proj2.bias"),
        &proj_act,
        1,
        pw,
    );
    if arch.residual_mode {
        out.iter_mut().zip(u).for_each(|(o, x)| *o += x);
    }
    let tape = save.then(|| {
        layer_in.push(v);
        FnoTape {
            n: ctx.n,
            input,
            layer_in,
            spectra,
            pre,
            proj_pre,
            proj_act,
            projection_width: arch.projection_width,
        }
    });
    Ok((out, tape))
}

/// Adds `Σ_p x[r, p] · y[c, p]` into `acc[r, c]`, i.e. `acc += x yᵀ`.
fn accumulate_outer(
    x: &[f64],
    y: &[f64],
    rows: usize,
    cols: usize,
    points: usize,
    acc: &mut [f64],
) {
    gemm(
        View::new(x, rows, points),
        View::new(y, cols, points).t(),
        1.0,
        acc,
    );
}

fn accumulate_row_sums(x: &[f64], points: usize, acc: &mut [f64]) {
    for (a, row) in acc.iter_mut().zip(x.chunks(points)) {
        *a += row.iter().sum::<f64>();
    }
}

pub(crate) fn backward(
    arch: &FnoArchitecture,
    params: &ModelParams,
    tape: &FnoTape,
    cotangent: &[f64],
    grads: &mut GradientBuffer,
) -> Vec<f64> {
    let len = if arch.dimension == 1 {
        tape.n
    } else {
        tape.n * tape.n
    };
    let ctx = Ctx::new(arch, params, len).expect("tape was recorded at a valid resolution");
    let (w, p, k_len, pw) = (
        arch.width,
        ctx.points,
        ctx.retained.len(),
        arch.projection_width,
    );
    let act = arch.activation;
    let gi = |name: &str| params.index_of(name).expect("block exists");

    // projection
    let v_last = &tape.layer_in[arch.n_layers];
    accumulate_outer(
        cotangent,
        &tape.proj_act,
        1,
        pw,
        p,
        &mut grads.blocks[gi("proj2.weight")],
    );
    accumulate_row_sums(cotangent, p, &mut grads.blocks[gi("proj2.bias")]);
    let proj2 = ctx.block("proj2.weight");
    let mut dq: Vec<f64> = Vec::with_capacity(pw * p);
    for j in 0..pw {
        dq.extend(cotangent.iter().map(|g| proj2[j] * g));
    }
    dq.iter_mut()
        .zip(&tape.proj_pre)
        .for_each(|(d, z)| *d *= act.derivative(*z));
    accumulate_outer(&dq, v_last, pw, w, p, &mut grads.blocks[gi("proj1.weight")]);
    accumulate_row_sums(&dq, p, &mut grads.blocks[gi("proj1.bias")]);
    let mut dv = vec![0.0; w * p];
    gemm(
        View::new(ctx.block("proj1.weight"), pw, w).t(),
        View::new(&dq, pw, p),
        0.0,
        &mut dv,
    );

    let mut h_coeffs = vec![Complex64::new(0.0, 0.0); ctx.spectral_len()];
    let mut a_hat = vec![Complex64::new(0.0, 0.0); ctx.spectral_len()];
    let mut back = vec![0.0; p];
    let points = p as f64;
    for l in (0..arch.n_layers).rev() {
        let v_in = &tape.layer_in[l];
        let mut dz = dv;
        dz.iter_mut()
            .zip(&tape.pre[l])
            .for_each(|(d, z)| *d *= act.derivative(*z));
        accumulate_outer(
            &dz,
            v_in,
            w,
            w,
            p,
            &mut grads.blocks[gi(&format!("fourier{l}.weight"))],
        );
        accumulate_row_sums(&dz, p, &mut grads.blocks[gi(&format!("fourier{l}.bias"))]);
        let mut dv_next = vec![0.0; w * p];
        gemm(
            View::new(ctx.block(&format!("fourier{l}.weight")), w, w).t(),
            View::new(&dz, w, p),
            0.0,
            &mut dv_next,
        );

        // spectral convolution: with Ĥ_o = F(dz_o), ∂/∂S_{c,o,k} = c_k P conj(V̂_c) Ĥ_o
        // and the input cotangent is F⁻¹(Σ_o conj(S_{c,o,k}) Ĥ_o).
        let weights = ctx.block(&format!("fourier{l}.spectral"));
        let sidx = gi(&format!("fourier{l}.spectral"));
        let spec = &tape.spectra[l];
        let mut h = Vec::with_capacity(w * k_len);
        for o in 0..w {
            ctx.transform
                .forward_into(&dz[o * p..(o + 1) * p], &mut h_coeffs);
            h.extend(ctx.retained.iter().map(|(idx, _)| h_coeffs[*idx]));
        }
        let gs = &mut grads.blocks[sidx];
        for c in 0..w {
            a_hat.fill(Complex64::new(0.0, 0.0));
            for o in 0..w {
                let base = (c * w + o) * k_len;
                for (k, (idx, factor)) in ctx.retained.iter().enumerate() {
                    let hk = h[o * k_len + k];
                    let g = spec[c * k_len + k].conj() * hk * (factor * points);
                    gs[2 * (base + k)] += g.re;
                    gs[2 * (base + k) + 1] += g.im;
                    let s = Complex64::new(weights[2 * (base + k)], weights[2 * (base + k) + 1]);
                    a_hat[*idx] += s.conj() * hk;
                }
            }
            ctx.transform.inverse_into(&a_hat, &mut back);
            dv_next[c * p..(c + 1) * p]
                .iter_mut()
                .zip(&back)
                .for_each(|(d, b)| *d += b);
        }
        dv = dv_next;
    }

    // lifting
    let cin = arch.in_channels();
    accumulate_outer(
        &dv,
        &tape.input,
        w,
        cin,
        p,
        &mut grads.blocks[gi("lift.weight")],
    );
    accumulate_row_sums(&dv, p, &mut grads.blocks[gi("lift.bias")]);
    let lift = ctx.block("lift.weight");
    let mut du = vec![0.0; p];
    for o in 0..w {
        let s = lift[o * cin];
        du.iter_mut()
            .zip(&dv[o * p..(o + 1) * p])
            .for_each(|(d, g)| *d += s * g);
    }
    if arch.residual_mode {
        du.iter_mut().zip(cotangent).for_each(|(d, g)| *d += g);
    }
    du
}
