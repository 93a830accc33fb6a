//! The entropic vector field `b^{ε,λ}_Ψ(y) = (v_Ψ(y), λ(𝒯_Ψ(y) + ε ℋ(ℓ)))`
//! and the step bound that keeps explicit steps inside the invariant box.

pub mod kernel;
pub mod operator;
pub mod probe;
pub mod velocity;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{euclidean_norm, mean_position};
use crate::strategy_space::{entropy_drift, select_box_bounds, BoxBounds, LabelDensity, StrategySpace};

pub use kernel::{
    CoordinationKernel, FnFullKernel, FnIntegralKernel, FnSpatialKernel, FullKernel, IntegralKernel, LocalPayoff,
    PayoffKernel, SpatialKernel, WaveKernel,
};
pub use operator::{
    markov_operator, replicator_operator, undisclosed_operator, LabelOperator, LabelTangent, MarkovRates,
};
pub use probe::{probe_assumptions, AssumptionCheck, ProbeReport};
pub use velocity::{VelocityField, VelocityTerm};

/// `y = (x, ℓ)`: a position in `R^d` and a label density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub x: Vec<f64>,
    pub ell: LabelDensity,
}

impl AgentState {
    pub fn new(x: Vec<f64>, ell: LabelDensity) -> Self {
        AgentState { x, ell }
    }
}

/// Both components of the field at one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    pub dx: Vec<f64>,
    pub dl: Vec<f64>,
    /// Mean residual removed from the operator output.
    pub raw_residual: f64,
}

/// `(v_Ψ(y), λ(𝒯_Ψ(y) + ε ℋ(ℓ)))` for a single agent.
///
/// `eps = 0` drops the entropy term, which is then allowed to see zero labels.
pub fn entropic_field(
    space: &StrategySpace,
    velocity: &VelocityField,
    operator: &LabelOperator,
    psi: &[AgentState],
    y: &AgentState,
    eps: f64,
    lambda: f64,
) -> Result<Tangent> {
    if y.x.len() != velocity.dim() {
        return Err(Error::DimensionMismatch(format!(
            "position in R^{} for a field on R^{}",
            y.x.len(),
            velocity.dim()
        )));
    }
    let dx = velocity.eval(space, psi, y);
    let t = operator.apply(space, psi, y)?;
    Ok(Tangent {
        dx,
        dl: scaled_label_drift(space, t.values, y, eps, lambda)?,
        raw_residual: t.raw_residual,
    })
}

fn scaled_label_drift(
    space: &StrategySpace,
    mut t: Vec<f64>,
    y: &AgentState,
    eps: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    if eps != 0.0 {
        let h = entropy_drift(space, y.ell.values())?;
        for (a, b) in t.iter_mut().zip(h) {
            *a += eps * b;
        }
    }
    for a in t.iter_mut() {
        *a *= lambda;
    }
    Ok(t)
}

/// Step bound `θ_ε`: any explicit step `ℓ + θ (𝒯 + εℋ)` with `θ ≤ θ_ε` stays in
/// `[r_ε, R_ε]`, for every operator obeying the pointwise bound with `(C_T, ω)`.
///
/// The two cases are the upper-bound estimate near `R_ε` (with `R'_ε` the root
/// of `t ↦ C_T ω(R) + ε t (k - log t)` on `[1, R]`) and the lower-bound estimate
/// for labels above `4 r_ε / 3`.
pub fn step_bound_theta(bounds: &BoxBounds) -> Result<f64> {
    if !bounds.certify() {
        return Err(Error::NoFeasibleBounds("box bounds do not certify".into()));
    }
    let (r, upper, eps) = (bounds.r_eps, bounds.upper_eps, bounds.eps);
    let k = bounds.entropy().k;
    let push = bounds.c_t * bounds.omega.eval(upper);
    let f = |t: f64| push + eps * t * (k - t.ln());
    let (mut lo, mut hi) = (1.0_f64, upper);
    if !(f(lo) > 0.0 && f(hi) < 0.0) {
        return Err(Error::NoFeasibleBounds(format!(
            "upper-case drift does not change sign on [1, R]: f(1)={}, f(R)={}",
            f(lo),
            f(hi)
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // hi is on the non-positive side, so the estimate holds on [hi, R]
    let upper_prime = hi;
    let theta_upper = (upper - upper_prime) / (push + eps * upper * k + eps / std::f64::consts::E);
    let theta_lower = (r / 3.0) / (push + eps * upper * upper.ln());
    Ok(theta_upper.min(theta_lower))
}

/// The scaled system `ẏ_i = b^{ε,λ}_{Λ^N}(y_i)` with its resolved box and step bound.
#[derive(Debug, Clone)]
pub struct EntropicSystem {
    pub space: StrategySpace,
    pub velocity: VelocityField,
    pub operator: LabelOperator,
    pub eps: f64,
    pub lambda: f64,
    pub bounds: BoxBounds,
    pub theta: f64,
}

impl EntropicSystem {
    pub fn new(
        space: StrategySpace,
        velocity: VelocityField,
        operator: LabelOperator,
        eps: f64,
        lambda: f64,
    ) -> Result<Self> {
        let bounds = select_box_bounds(eps, operator.c_t(), operator.omega())?;
        Self::with_bounds(space, velocity, operator, lambda, bounds)
    }

    /// Uses given box bounds, e.g. with a user override of `C_T`.
    pub fn with_bounds(
        space: StrategySpace,
        velocity: VelocityField,
        operator: LabelOperator,
        lambda: f64,
        bounds: BoxBounds,
    ) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Config(format!("time-scale lambda={lambda} must be positive")));
        }
        if bounds.c_t < operator.c_t() {
            return Err(Error::Config(format!(
                "C_T={} is below the operator bound {}",
                bounds.c_t,
                operator.c_t()
            )));
        }
        let theta = step_bound_theta(&bounds)?;
        Ok(EntropicSystem {
            space,
            velocity,
            operator,
            eps: bounds.eps,
            lambda,
            bounds,
            theta,
        })
    }

    /// Same system on a different time scale.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::with_bounds(
            self.space.clone(),
            self.velocity.clone(),
            self.operator.clone(),
            lambda,
            self.bounds,
        )
    }

    /// Largest admissible explicit Euler step, `θ_ε / λ`.
    pub fn euler_step_bound(&self) -> f64 {
        self.theta / self.lambda
    }

    /// `M_v`.
    pub fn m_v(&self) -> f64 {
        self.velocity.m_v(&self.space)
    }

    /// `M_ε = M_v + λ (C_T ω(R_ε) + ε max(R_ε log R_ε, R_ε k_ε + 1/e))`.
    pub fn m_eps(&self) -> f64 {
        let b = &self.bounds;
        let upper = b.upper_eps;
        let h = (upper * upper.ln()).max(b.entropy().h_high);
        self.m_v() + self.lambda * (b.c_t * b.omega.eval(upper) + self.eps * h)
    }

    pub fn field_at(&self, psi: &[AgentState], y: &AgentState) -> Result<Tangent> {
        entropic_field(
            &self.space,
            &self.velocity,
            &self.operator,
            psi,
            y,
            self.eps,
            self.lambda,
        )
    }

    /// The field at every agent with `Λ^N` frozen at `atoms`.
    pub fn field(&self, atoms: &[AgentState]) -> Result<Vec<Tangent>> {
        if atoms.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        let dim = self.velocity.dim();
        for a in atoms {
            if a.x.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "agent position in R^{} for R^{dim}",
                    a.x.len()
                )));
            }
        }
        let mean = mean_position(atoms.iter().map(|a| a.x.as_slice()), dim);
        let ops = self.operator.apply_all(&self.space, atoms)?;
        atoms
            .iter()
            .zip(ops)
            .map(|(a, t)| {
                let dx = self.velocity.eval_with_mean(&self.space, atoms, &mean, a);
                let dl = scaled_label_drift(&self.space, t.values, a, self.eps, self.lambda)?;
                Ok(Tangent {
                    dx,
                    dl,
                    raw_residual: t.raw_residual,
                })
            })
            .collect()
    }

    /// `|dx| + ‖dl‖_{L^p}`.
    pub fn tangent_norm(&self, t: &Tangent) -> f64 {
        euclidean_norm(&t.dx) + self.space.norm(&t.dl)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::strategy_space::Growth;

    fn benchmark_like() -> EntropicSystem {
        let space = StrategySpace::uniform_grid(8, 2.0).unwrap();
        let kernel = PayoffKernel::ReplicatorFull(Arc::new(CoordinationKernel {
            amplitude: 0.05,
            width: 1.0,
        }));
        let velocity = VelocityField::new(2, vec![VelocityTerm::Attraction(1.0)]).unwrap();
        EntropicSystem::new(space, velocity, LabelOperator::from_kernel(kernel), 0.5, 1.0).unwrap()
    }

    #[test]
    fn theta_positive_without_operator() {
        for eps in [1.0, 0.1, 0.01] {
            let b = select_box_bounds(eps, 0.0, Growth::Identity).unwrap();
            let theta = step_bound_theta(&b).unwrap();
            assert!(theta > 0.0 && theta.is_finite());
        }
    }

    #[test]
    fn theta_known_box() {
        let sys = benchmark_like();
        assert_eq!((sys.bounds.r_eps, sys.bounds.upper_eps), (0.5, 2.0));
        assert!(sys.theta > 0.1 && sys.theta < 0.25, "theta={}", sys.theta);
    }

    #[test]
    fn zero_label_dynamics_returns_velocity() {
        let space = StrategySpace::uniform_grid(3, 2.0).unwrap();
        let v = VelocityField::new(1, vec![VelocityTerm::Constant(vec![0.7])]).unwrap();
        let y = AgentState::new(
            vec![0.0],
            LabelDensity::new(&space, vec![0.5, 1.0, 1.5], 0.5, 2.0).unwrap(),
        );
        let t = entropic_field(&space, &v, &LabelOperator::Zero, &[], &y, 0.0, 1.0).unwrap();
        assert_eq!(t.dx, vec![0.7]);
        assert!(t.dl.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lambda_scales_labels_only() {
        let sys = benchmark_like();
        let fast = sys.with_lambda(2.0).unwrap();
        let space = &sys.space;
        let y = AgentState::new(
            vec![0.3, -0.2],
            LabelDensity::new(space, vec![0.6, 1.4, 1.0, 0.8, 1.2, 1.0, 0.9, 1.1], 0.5, 2.0).unwrap(),
        );
        let psi = vec![
            y.clone(),
            AgentState::new(vec![1.0, 1.0], LabelDensity::uniform(space, 0.5, 2.0).unwrap()),
        ];
        let a = sys.field_at(&psi, &y).unwrap();
        let b = fast.field_at(&psi, &y).unwrap();
        assert_eq!(a.dx, b.dx);
        for (p, q) in a.dl.iter().zip(&b.dl) {
            assert_eq!(2.0 * p, *q);
        }
        assert_eq!(sys.field(&psi).unwrap()[0].dl, a.dl);
    }
}
