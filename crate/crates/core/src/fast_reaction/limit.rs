//! The reduced spatial system `ẋ_i = w_{ν^N}(x_i)`, `w_ν(x) = v_{(id,Δ)#ν}(x, Δ(x, ν))`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DeltaMap;
use crate::dynamics::{AgentState, VelocityField};
use crate::error::{Error, Result};
use crate::measures::{euclidean_norm, mean_position};
use crate::strategy_space::StrategySpace;

#[derive(Debug, Clone)]
pub struct LimitSystem {
    pub space: StrategySpace,
    pub velocity: VelocityField,
    pub delta: DeltaMap,
}

impl LimitSystem {
    /// Sublinearity constant of `w`.
    ///
    /// Labels in `C_ε` have `‖ℓ‖_{L^p} ≤ R_ε`, so `|w_ν(x)| ≤ M_v (1 + |x| + R_ε + m_1(ν) + R_ε)`.
    pub fn m_w(&self) -> f64 {
        self.velocity.m_v(&self.space) * (1.0 + 2.0 * self.delta.bounds.upper_eps)
    }

    /// `(x_j, Δ(x_j, ν))` for every atom of `ν`.
    pub fn lift(&self, positions: &[Vec<f64>]) -> Result<Vec<AgentState>> {
        if positions.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        positions
            .par_iter()
            .map(|x| Ok(AgentState::new(x.clone(), self.delta.get(x, positions)?)))
            .collect()
    }

    /// `w_ν(x_i)` at every atom.
    pub fn velocities(&self, positions: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let lifted = self.lift(positions)?;
        let dim = self.velocity.dim();
        let mean = mean_position(positions.iter().map(|x| x.as_slice()), dim);
        Ok(lifted
            .iter()
            .map(|a| self.velocity.eval_with_mean(&self.space, &lifted, &mean, a))
            .collect())
    }
}

/// `w_ν(x)` at a single point.
pub fn limit_velocity(limit: &LimitSystem, nu: &[Vec<f64>], x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != limit.velocity.dim() {
        return Err(Error::DimensionMismatch(format!(
            "point in R^{} for R^{}",
            x.len(),
            limit.velocity.dim()
        )));
    }
    let lifted = limit.lift(nu)?;
    let y = AgentState::new(x.to_vec(), limit.delta.get(x, nu)?);
    Ok(limit.velocity.eval(&limit.space, &lifted, &y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialTrajectory {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<Vec<f64>>>,
    pub bound: f64,
    pub sup_norm: f64,
}

fn max_norm(positions: &[Vec<f64>]) -> f64 {
    positions.iter().map(|x| euclidean_norm(x)).fold(0.0, f64::max)
}

fn axpy(base: &[Vec<f64>], k: &[Vec<f64>], h: f64) -> Vec<Vec<f64>> {
    base.iter()
        .zip(k)
        .map(|(x, v)| x.iter().zip(v).map(|(a, b)| a + h * b).collect())
        .collect()
}

/// RK4 for the limit system, recording every `record_every` steps.
///
/// Every step is checked against `(max|x̄| + M_w T) e^{2 M_w T}`.
pub fn integrate_limit(
    limit: &LimitSystem,
    initial: &[Vec<f64>],
    horizon: f64,
    dt: f64,
    record_every: usize,
) -> Result<SpatialTrajectory> {
    if initial.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::Config(format!("horizon T={horizon} must be non-negative")));
    }
    let m_w = limit.m_w();
    let bound = (max_norm(initial) + m_w * horizon) * (2.0 * m_w * horizon).exp();
    let mut out = SpatialTrajectory {
        times: vec![0.0],
        positions: vec![initial.to_vec()],
        bound,
        sup_norm: max_norm(initial),
    };
    if horizon == 0.0 {
        return Ok(out);
    }
    if !(dt > 0.0) {
        return Err(Error::Config(format!("step size {dt} must be positive")));
    }
    let steps = ((horizon / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let h = horizon / steps as f64;
    let record_every = record_every.max(1);
    let mut x = initial.to_vec();
    for n in 1..=steps {
        let k1 = limit.velocities(&x)?;
        let k2 = limit.velocities(&axpy(&x, &k1, h / 2.0))?;
        let k3 = limit.velocities(&axpy(&x, &k2, h / 2.0))?;
        let k4 = limit.velocities(&axpy(&x, &k3, h))?;
        for (i, xi) in x.iter_mut().enumerate() {
            for (c, v) in xi.iter_mut().enumerate() {
                *v += h / 6.0 * (k1[i][c] + 2.0 * k2[i][c] + 2.0 * k3[i][c] + k4[i][c]);
            }
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("limit system state".into()));
        }
        let norm = max_norm(&x);
        out.sup_norm = out.sup_norm.max(norm);
        if !(norm <= bound) {
            return Err(Error::BoundViolated { norm, bound });
        }
        if n % record_every == 0 || n == steps {
            out.times.push(horizon * n as f64 / steps as f64);
            out.positions.push(x.clone());
        }
    }
    Ok(out)
}
