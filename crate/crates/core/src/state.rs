//! State spaces the surrogates act on: plain vectors (ODEs) or periodic grid
//! fields (PDEs).

use crate::error::{MnoError, Result};
use crate::spectral::{rms, sobolev_loss_with_grad, Domain, SobolevSpec, Transform};

#[derive(Clone)]
pub enum StateSpace {
    Vector(usize),
    Field(Transform),
}

impl std::fmt::Debug for StateSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StateSpace::Vector(d) => write!(f, "Vector({d})"),
            StateSpace::Field(t) => write!(f, "Field({:?})", t.domain()),
        }
    }
}

impl StateSpace {
    pub fn field(domain: Domain) -> Self {
        StateSpace::Field(Transform::new(domain))
    }

    pub fn dim(&self) -> usize {
        match self {
            StateSpace::Vector(d) => *d,
            StateSpace::Field(t) => t.domain().points(),
        }
    }

    pub fn domain(&self) -> Option<Domain> {
        match self {
            StateSpace::Vector(_) => None,
            StateSpace::Field(t) => Some(t.domain()),
        }
    }

    /// Euclidean norm for vectors; coefficient ℓ² norm (the grid RMS) for
    /// fields.
    pub fn norm(&self, u: &[f64]) -> f64 {
        match self {
            StateSpace::Vector(_) => u.iter().map(|v| v * v).sum::<f64>().sqrt(),
            StateSpace::Field(_) => rms(u),
        }
    }

    /// Gradient of `‖u‖²` with respect to `u`.
    pub fn norm_sq_grad(&self, u: &[f64]) -> Vec<f64> {
        let scale = match self {
            StateSpace::Vector(_) => 2.0,
            StateSpace::Field(_) => 2.0 / u.len() as f64,
        };
        u.iter().map(|v| scale * v).collect()
    }

    pub fn check(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(MnoError::Shape(format!(
                "state has {} values, expected {}",
                u.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Relative Sobolev loss between a prediction and its target, and its
    /// gradient with respect to the prediction when `want_grad`.
    ///
    /// Vectors only support order 0, the relative Euclidean error.
    pub fn loss_with_grad(
        &self,
        pred: &[f64],
        truth: &[f64],
        spec: SobolevSpec,
        want_grad: bool,
    ) -> Result<(f64, Vec<f64>)> {
        match self {
            StateSpace::Field(t) => sobolev_loss_with_grad(t, pred, truth, spec, want_grad),
            StateSpace::Vector(d) => {
                if spec.order != 0 {
                    return Err(MnoError::validation(
                        "training.sobolev_order",
                        "vector states only support order 0",
                    ));
                }
                if pred.len() != *d || truth.len() != *d {
                    return Err(MnoError::Shape(format!(
                        "loss expects {d} components, got {} and {}",
                        pred.len(),
                        truth.len()
                    )));
                }
                let t_norm = self.norm(truth);
                if t_norm <= f64::MIN_POSITIVE {
                    return Err(MnoError::DegenerateNorm(
                        "reference state has zero norm".into(),
                    ));
                }
                let diff: Vec<f64> = pred.iter().zip(truth).map(|(p, t)| p - t).collect();
                let d_norm = self.norm(&diff);
                let grad = if want_grad && d_norm > 0.0 {
                    diff.iter().map(|v| v / (d_norm * t_norm)).collect()
                } else if want_grad {
                    vec![0.0; *d]
                } else {
                    Vec::new()
                };
                Ok((d_norm / t_norm, grad))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::GridField;

    #[test]
    fn norms_follow_the_space() {
        assert_eq!(StateSpace::Vector(2).norm(&[3.0, 4.0]), 5.0);
        let d = Domain::line(16, std::f64::consts::TAU);
        let f = GridField::from_fn(d, |x, _| x.sin());
        assert!((StateSpace::field(d).norm(&f.values) - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn vector_loss_gradient_matches_differences() {
        let s = StateSpace::Vector(3);
        let p = [1.0, -2.0, 0.5];
        let t = [0.7, -1.0, 2.0];
        let (l, g) = s
            .loss_with_grad(&p, &t, SobolevSpec::balanced(0), true)
            .unwrap();
        for i in 0..3 {
            let mut a = p;
            let mut b = p;
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let fd = (s
                .loss_with_grad(&a, &t, SobolevSpec::balanced(0), false)
                .unwrap()
                .0
                - s.loss_with_grad(&b, &t, SobolevSpec::balanced(0), false)
                    .unwrap()
                    .0)
                / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8);
        }
        assert!(l > 0.0);
        assert!(s
            .loss_with_grad(&p, &t, SobolevSpec::balanced(1), false)
            .is_err());
    }
}
