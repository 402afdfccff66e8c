//! Dissipative post-processing `Ŝ′(u) = ρ(‖u‖) Ŝ(u) + (1 − ρ(‖u‖)) λu` with a
//! logistic hand-off `ρ(r) = 1 / (1 + e^{β(r − α)})`, and shell diagnostics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MnoError, Result};
use crate::model::Model;
use crate::state::StateSpace;
use crate::training::ShellSampler;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostProcessConfig {
    /// Transition radius in state-norm units.
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
}

impl PostProcessConfig {
    pub fn new(alpha: f64, beta: f64, lambda: f64) -> Self {
        PostProcessConfig {
            alpha,
            beta,
            lambda,
        }
    }

    /// `α = 2m`, `β = 10/α`, `λ = 0.5` for the largest training norm `m`.
    pub fn from_training_norm(max_norm: f64) -> Self {
        let alpha = 2.0 * max_norm;
        PostProcessConfig {
            alpha,
            beta: 10.0 / alpha,
            lambda: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(MnoError::validation(
                "postprocess.alpha",
                "must be positive",
            ));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(MnoError::validation("postprocess.beta", "must be positive"));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(MnoError::validation(
                "postprocess.lambda",
                "must lie in (0, 1)",
            ));
        }
        Ok(())
    }
}

/// Weight on the learned model at state norm `norm`.
pub fn rho(norm: f64, cfg: &PostProcessConfig) -> f64 {
    let x = cfg.beta * (norm - cfg.alpha);
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Blends a model output `out` for the state `u` of norm `norm`.
pub fn blend(u: &[f64], out: &[f64], norm: f64, cfg: &PostProcessConfig) -> Vec<f64> {
    let r = rho(norm, cfg);
    u.iter()
        .zip(out)
        .map(|(x, y)| r * y + (1.0 - r) * cfg.lambda * x)
        .collect()
}

pub fn post_process_apply(
    model: &Model,
    space: &StateSpace,
    u: &[f64],
    cfg: &PostProcessConfig,
) -> Result<Vec<f64>> {
    space.check(u)?;
    let out = model.apply(u)?;
    Ok(blend(u, &out, space.norm(u), cfg))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellStatistics {
    pub radius: f64,
    pub samples: usize,
    /// `‖Ŝ(u) − λu‖ / ‖u‖`.
    pub mean_error: f64,
    pub max_error: f64,
    /// `‖Ŝ(u)‖ / ‖u‖`.
    pub mean_gain: f64,
    pub max_gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissipativityReport {
    pub lambda: f64,
    pub post_processed: bool,
    pub shells: Vec<ShellStatistics>,
}

/// Evaluates `map` on `n_samples` states drawn on each sphere of the given
/// radii, with directions from `template`.
pub fn dissipativity_report<R: Rng + ?Sized>(
    map: impl Fn(&[f64]) -> Result<Vec<f64>>,
    template: &ShellSampler,
    radii: &[f64],
    n_samples: usize,
    lambda: f64,
    post_processed: bool,
    rng: &mut R,
) -> Result<DissipativityReport> {
    if n_samples == 0 {
        return Err(MnoError::validation(
            "analysis.dissipativity_samples",
            "must be at least 1",
        ));
    }
    let space = &template.space;
    let mut shells = Vec::with_capacity(radii.len());
    for &radius in radii {
        let sampler = template.at_radius(radius)?;
        let mut st = ShellStatistics {
            radius,
            samples: n_samples,
            mean_error: 0.0,
            max_error: 0.0,
            mean_gain: 0.0,
            max_gain: 0.0,
        };
        for _ in 0..n_samples {
            let u = sampler.sample(rng);
            let out = map(&u)?;
            let n = space.norm(&u);
            let resid: Vec<f64> = out.iter().zip(&u).map(|(o, x)| o - lambda * x).collect();
            let err = space.norm(&resid) / n;
            let gain = space.norm(&out) / n;
            st.mean_error += err / n_samples as f64;
            st.mean_gain += gain / n_samples as f64;
            st.max_error = st.max_error.max(err);
            st.max_gain = st.max_gain.max(gain);
        }
        shells.push(st);
    }
    Ok(DissipativityReport {
        lambda,
        post_processed,
        shells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, FfnArchitecture, LinearArchitecture};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(w: f64, dim: usize) -> Model {
        let mut m = Model::zeros(Architecture::Linear(LinearArchitecture { dim })).unwrap();
        m.params.blocks[0][0] = w;
        m
    }

    #[test]
    fn rho_values() {
        let c = PostProcessConfig::new(100.0, 0.1, 0.5);
        assert_eq!(rho(100.0, &c), 0.5);
        assert!((rho(0.0, &c) - 1.0 / (1.0 + (-10f64).exp())).abs() < 1e-15);
        assert!((rho(0.0, &c) - 0.9999546).abs() < 1e-7);
        assert_eq!(rho(1e300, &c), 0.0);
        assert_eq!(rho(f64::INFINITY, &c), 0.0);
        let mut prev = 1.0;
        for i in 0..400 {
            let r = rho(i as f64, &c);
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn midpoint_blend_of_identity() {
        let m = scalar(1.0, 2);
        let c = PostProcessConfig::new(5.0, 0.3, 0.5);
        let out = post_process_apply(&m, &StateSpace::Vector(2), &[3.0, 4.0], &c).unwrap();
        assert_eq!(out, vec![2.25, 3.0]);
    }

    #[test]
    fn far_field_is_close_to_safety_map() {
        let m = scalar(3.0, 2);
        let c = PostProcessConfig::new(10.0, 1.0, 0.5);
        let u = [300.0, -400.0];
        let out = post_process_apply(&m, &StateSpace::Vector(2), &u, &c).unwrap();
        let r = rho(500.0, &c);
        assert!(r < 1e-6);
        let dev = ((out[0] - 150.0).powi(2) + (out[1] + 200.0).powi(2)).sqrt();
        assert!(dev <= r * (1500.0 + 250.0));
    }

    #[test]
    fn lambda_identity_has_zero_error() {
        let m = scalar(0.5, 3);
        let t = ShellSampler::new(StateSpace::Vector(3), None, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = dissipativity_report(
            |u| m.apply(u),
            &t,
            &[1.0, 10.0, 100.0],
            50,
            0.5,
            false,
            &mut rng,
        )
        .unwrap();
        for s in &r.shells {
            assert!(s.max_error < 1e-15);
            assert!((s.mean_gain - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn post_processed_far_shell_contracts_at_lambda() {
        let mut a = FfnArchitecture::new(3, 3, 2, 10);
        a.activation = crate::model::Activation::Tanh;
        let m = Model::init(Architecture::Ffn(a), 4).unwrap();
        let c = PostProcessConfig::new(100.0, 0.1, 0.5);
        let space = StateSpace::Vector(3);
        let t = ShellSampler::new(space.clone(), None, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = dissipativity_report(
            |u| post_process_apply(&m, &space, u, &c),
            &t,
            &[1000.0],
            200,
            0.5,
            true,
            &mut rng,
        )
        .unwrap();
        assert!(r.shells[0].max_gain <= 0.5 + 1e-3);
    }

    #[test]
    fn interior_is_left_alone() {
        let mut a = FfnArchitecture::new(3, 3, 2, 10);
        a.state_scale = 20.0;
        let m = Model::init(Architecture::Ffn(a), 9).unwrap();
        let c = PostProcessConfig::new(100.0, 1.0, 0.5);
        let space = StateSpace::Vector(3);
        let t = ShellSampler::new(space.clone(), None, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // α − 10/β = 90
        for radius in [1.0, 40.0, 90.0] {
            let s = t.at_radius(radius).unwrap();
            for _ in 0..20 {
                let u = s.sample(&mut rng);
                let raw = m.apply(&u).unwrap();
                let post = post_process_apply(&m, &space, &u, &c).unwrap();
                let w = 1.0 - rho(radius, &c);
                assert!(w < 5e-5);
                let d: Vec<f64> = raw.iter().zip(&post).map(|(a, b)| a - b).collect();
                assert!(space.norm(&d) <= w * (space.norm(&raw) + 0.5 * radius) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn validation_names_fields() {
        let e = PostProcessConfig::new(1.0, 1.0, 1.5)
            .validate()
            .unwrap_err();
        assert!(e.to_string().contains("postprocess.lambda"));
        assert!(PostProcessConfig::new(0.0, 1.0, 0.5).validate().is_err());
        let d = PostProcessConfig::from_training_norm(20.0);
        assert_eq!((d.alpha, d.beta, d.lambda), (40.0, 0.25, 0.5));
    }
}
