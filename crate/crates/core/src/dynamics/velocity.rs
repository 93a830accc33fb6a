//! Velocity fields `v_Ψ(y)` for the spatial component.

use std::fmt;
use std::sync::Arc;

use super::AgentState;
use crate::error::{Error, Result};
use crate::measures::{euclidean_norm, mean_position};
use crate::strategy_space::StrategySpace;

pub type CustomVelocity = Arc<dyn Fn(&StrategySpace, &[AgentState], &AgentState) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub enum VelocityTerm {
    /// `v = c`, `M_v = |c|`.
    Constant(Vec<f64>),
    /// `v = a (mean(Ψ) - x) = a ∫ (x' - x) dν(x')`, `M_v = |a|`.
    Attraction(f64),
    /// `v = g (∫ u_1 ℓ(u) dη - c) e`, `M_v = |g| |e| (max |u_1| + |c|)`.
    Steering {
        gain: f64,
        center: f64,
        direction: Vec<f64>,
    },
    /// `v = c x ‖y‖`. Its declared constant `|c|` is wrong on purpose: the
    /// field grows quadratically and must be caught by the assumption probe.
    Superlinear(f64),
    Custom {
        f: CustomVelocity,
        m_v: f64,
    },
}

impl fmt::Debug for VelocityTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VelocityTerm::Constant(c) => write!(f, "Constant({c:?})"),
            VelocityTerm::Attraction(a) => write!(f, "Attraction({a})"),
            VelocityTerm::Steering {
                gain,
                center,
                direction,
            } => {
                write!(f, "Steering(gain={gain}, center={center}, direction={direction:?})")
            }
            VelocityTerm::Superlinear(c) => write!(f, "Superlinear({c})"),
            VelocityTerm::Custom { m_v, .. } => write!(f, "Custom(M_v={m_v})"),
        }
    }
}

/// A sum of velocity terms acting in `R^d`.
#[derive(Debug, Clone)]
pub struct VelocityField {
    dim: usize,
    terms: Vec<VelocityTerm>,
}

impl VelocityField {
    pub fn new(dim: usize, terms: Vec<VelocityTerm>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch("spatial dimension must be positive".into()));
        }
        for term in &terms {
            let len = match term {
                VelocityTerm::Constant(c) => Some(c.len()),
                VelocityTerm::Steering { direction, .. } => Some(direction.len()),
                _ => None,
            };
            if let Some(len) = len {
                if len != dim {
                    return Err(Error::DimensionMismatch(format!(
                        "velocity term of dimension {len} in R^{dim}"
                    )));
                }
            }
        }
        Ok(VelocityField { dim, terms })
    }

    pub fn zero(dim: usize) -> Self {
        VelocityField { dim, terms: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[VelocityTerm] {
        &self.terms
    }

    /// Declared sublinearity constant: `|v_Ψ(y)| ≤ M_v (1 + ‖y‖ + m_1(Ψ))`.
    pub fn m_v(&self, space: &StrategySpace) -> f64 {
        let max_u = space.nodes().iter().map(|n| n[0].abs()).fold(0.0, f64::max);
        self.terms
            .iter()
            .map(|t| match t {
                VelocityTerm::Constant(c) => euclidean_norm(c),
                VelocityTerm::Attraction(a) => a.abs(),
                VelocityTerm::Steering {
                    gain,
                    center,
                    direction,
                } => gain.abs() * euclidean_norm(direction) * (max_u + center.abs()),
                VelocityTerm::Superlinear(c) => c.abs(),
                VelocityTerm::Custom { m_v, .. } => *m_v,
            })
            .sum()
    }

    /// Whether the field ignores both `Ψ` and the agent's own label.
    pub fn is_state_only(&self) -> bool {
        self.terms.iter().all(|t| matches!(t, VelocityTerm::Constant(_)))
    }

    pub fn eval(&self, space: &StrategySpace, psi: &[AgentState], y: &AgentState) -> Vec<f64> {
        let needs_mean = self.terms.iter().any(|t| matches!(t, VelocityTerm::Attraction(_)));
        let mean = if needs_mean && !psi.is_empty() {
            mean_position(psi.iter().map(|a| a.x.as_slice()), self.dim)
        } else {
            vec![0.0; self.dim]
        };
        self.eval_with_mean(space, psi, &mean, y)
    }

    /// Like [`VelocityField::eval`] with the mean position of `Ψ` precomputed.
    pub fn eval_with_mean(&self, space: &StrategySpace, psi: &[AgentState], mean: &[f64], y: &AgentState) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for term in &self.terms {
            match term {
                VelocityTerm::Constant(c) => {
                    for (o, v) in out.iter_mut().zip(c) {
                        *o += v;
                    }
                }
                VelocityTerm::Attraction(a) => {
                    for ((o, m), x) in out.iter_mut().zip(mean).zip(&y.x) {
                        *o += a * (m - x);
                    }
                }
                VelocityTerm::Steering {
                    gain,
                    center,
                    direction,
                } => {
                    let w = space.weights();
                    let first_moment: f64 = y
                        .ell
                        .values()
                        .iter()
                        .enumerate()
                        .map(|(k, l)| w[k] * l * space.node(k)[0])
                        .sum();
                    let s = gain * (first_moment - center);
                    for (o, e) in out.iter_mut().zip(direction) {
                        *o += s * e;
                    }
                }
                VelocityTerm::Superlinear(c) => {
                    let norm = euclidean_norm(&y.x) + space.norm(y.ell.values());
                    for (o, x) in out.iter_mut().zip(&y.x) {
                        *o += c * x * norm;
                    }
                }
                VelocityTerm::Custom { f, .. } => {
                    for (o, v) in out.iter_mut().zip(f(space, psi, y)) {
                        *o += v;
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy_space::LabelDensity;

    #[test]
    fn terms_evaluate_by_hand() {
        let space = StrategySpace::uniform_grid(2, 2.0).unwrap();
        let ell = LabelDensity::new(&space, vec![1.5, 0.5], 0.25, 4.0).unwrap();
        let y = AgentState::new(vec![1.0, 0.0], ell.clone());
        let other = AgentState::new(vec![3.0, 2.0], ell);
        let psi = vec![y.clone(), other];
        let field = VelocityField::new(
            2,
            vec![
                VelocityTerm::Constant(vec![0.5, -0.5]),
                VelocityTerm::Attraction(2.0),
                VelocityTerm::Steering {
                    gain: 4.0,
                    center: 0.5,
                    direction: vec![0.0, 1.0],
                },
            ],
        )
        .unwrap();
        // mean = (2, 1); ∫uℓ = 0.5 (0.25 * 1.5 + 0.75 * 0.5) = 0.375
        let v = field.eval(&space, &psi, &y);
        assert!((v[0] - (0.5 + 2.0)).abs() < 1e-15);
        assert!((v[1] - (-0.5 + 2.0 + 4.0 * (0.375 - 0.5))).abs() < 1e-15);
        assert!((field.m_v(&space) - (0.5f64.sqrt() + 2.0 + 4.0 * 1.25)).abs() < 1e-15);
    }

    #[test]
    fn dimension_checked() {
        assert!(VelocityField::new(2, vec![VelocityTerm::Constant(vec![1.0])]).is_err());
    }
}
