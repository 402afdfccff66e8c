use serde::{Deserialize, Serialize};

use crate::error::{MnoError, Result};

/// Lorenz-63 parameters `(α, b, r)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub alpha: f64,
    pub b: f64,
    pub r: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        LorenzParams {
            alpha: 10.0,
            b: 8.0 / 3.0,
            r: 28.0,
        }
    }
}

/// State of the Lorenz system in the shifted coordinates where the `z`
/// component is offset by `-(r + α)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LorenzState {
    pub u_x: f64,
    pub u_y: f64,
    pub u_z: f64,
}

impl LorenzState {
    pub fn new(u_x: f64, u_y: f64, u_z: f64) -> Self {
        LorenzState { u_x, u_y, u_z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.u_x, self.u_y, self.u_z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        LorenzState::new(a[0], a[1], a[2])
    }

    pub fn norm(&self) -> f64 {
        (self.u_x * self.u_x + self.u_y * self.u_y + self.u_z * self.u_z).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.u_x.is_finite() && self.u_y.is_finite() && self.u_z.is_finite()
    }
}

pub fn lorenz_rhs(state: LorenzState, params: LorenzParams) -> LorenzState {
    let LorenzParams { alpha, b, r } = params;
    let LorenzState { u_x, u_y, u_z } = state;
    LorenzState {
        u_x: alpha * (u_y - u_x),
        u_y: -alpha * u_x - u_y - u_x * u_z,
        u_z: u_x * u_y - b * u_z - b * (r + alpha),
    }
}

/// One classical fourth-order Runge–Kutta step.
pub fn rk4_step<const D: usize>(
    rhs: impl Fn(&[f64; D]) -> [f64; D],
    state: &[f64; D],
    dt: f64,
) -> Result<[f64; D]> {
    if !(dt > 0.0) {
        return Err(MnoError::validation(
            "dt",
            format!("must be positive, got {dt}"),
        ));
    }
    let axpy = |a: &[f64; D], s: f64, b: &[f64; D]| {
        let mut out = [0.0; D];
        for i in 0..D {
            out[i] = a[i] + s * b[i];
        }
        out
    };
    let k1 = rhs(state);
    let k2 = rhs(&axpy(state, 0.5 * dt, &k1));
    let k3 = rhs(&axpy(state, 0.5 * dt, &k2));
    let k4 = rhs(&axpy(state, dt, &k3));
    let mut next = [0.0; D];
    for i in 0..D {
        next[i] = state[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        if !next[i].is_finite() {
            return Err(MnoError::BlowUp {
                step: 0,
                detail: format!("component {i} became non-finite"),
            });
        }
    }
    Ok(next)
}

/// Fixed-step RK4 integrator for the Lorenz system.
#[derive(Clone, Copy, Debug)]
pub struct LorenzSolver {
    pub params: LorenzParams,
    pub dt: f64,
}

impl LorenzSolver {
    pub fn step(&self, state: &[f64; 3]) -> Result<[f64; 3]> {
        let params = self.params;
        rk4_step(
            |s| lorenz_rhs(LorenzState::from_array(*s), params).to_array(),
            state,
            self.dt,
        )
    }

    pub fn advance(&self, state: [f64; 3], steps: usize) -> Result<[f64; 3]> {
        let mut s = state;
        for k in 0..steps {
            s = self.step(&s).map_err(|e| match e {
                MnoError::BlowUp { detail, .. } => MnoError::BlowUp { step: k, detail },
                other => other,
            })?;
        }
        Ok(s)
    }
}

/// Shifts standard Lorenz coordinates `(x, y, z)` into the offset frame.
pub fn to_shifted(standard: [f64; 3], params: LorenzParams) -> [f64; 3] {
    [
        standard[0],
        standard[1],
        standard[2] - (params.r + params.alpha),
    ]
}
