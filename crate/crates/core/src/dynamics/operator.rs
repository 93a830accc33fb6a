//! Label-transfer operators `𝒯_Ψ(y)`.
//!
//! Every operator has zero `η`-mean in exact arithmetic. Quadrature and
//! rounding break this slightly, so outputs are re-centred and the removed
//! residual is reported alongside.

use std::fmt;
use std::sync::Arc;

use log::trace;
use rayon::prelude::*;

use super::kernel::{LocalPayoff, PayoffKernel};
use super::AgentState;
use crate::error::{Error, Result};
use crate::strategy_space::{remove_mean, Growth, Metric, StrategySpace};

/// Operator output with the mean residual removed before returning.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTangent {
    pub values: Vec<f64>,
    pub raw_residual: f64,
}

impl LabelTangent {
    fn centred(space: &StrategySpace, mut values: Vec<f64>) -> Self {
        let raw_residual = remove_mean(space, &mut values);
        trace!("operator mean residual {raw_residual:e}");
        LabelTangent { values, raw_residual }
    }

    pub fn zero(m: usize) -> Self {
        LabelTangent {
            values: vec![0.0; m],
            raw_residual: 0.0,
        }
    }
}

pub type RateFn = Arc<dyn Fn(usize, usize, &[f64], &[AgentState]) -> f64 + Send + Sync>;

/// Switching rates `α_hk(x, Ψ)` from label `h` to label `k` on a finite label set.
#[derive(Clone)]
pub struct MarkovRates {
    labels: usize,
    rate: RateFn,
    sup_rate: f64,
}

impl fmt::Debug for MarkovRates {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MarkovRates(H={}, sup={})", self.labels, self.sup_rate)
    }
}

impl MarkovRates {
    /// `sup_rate` must bound every off-diagonal rate.
    pub fn new(labels: usize, sup_rate: f64, rate: RateFn) -> Result<Self> {
        if labels == 0 {
            return Err(Error::InvalidSpace("Markov operator needs at least one label".into()));
        }
        if !(sup_rate >= 0.0) || !sup_rate.is_finite() {
            return Err(Error::Config(format!(
                "rate bound {sup_rate} must be finite and non-negative"
            )));
        }
        Ok(MarkovRates { labels, rate, sup_rate })
    }

    /// `α_hk = base + gain · (1/N) Σ_j η_k ℓ_j(k)`: agents drift towards popular labels.
    pub fn popularity(space: &StrategySpace, base: f64, gain: f64) -> Result<Self> {
        if base < 0.0 || gain < 0.0 {
            return Err(Error::Config("popularity rates need non-negative base and gain".into()));
        }
        let weights = space.weights().to_vec();
        let rate: RateFn = Arc::new(move |_h, k, _x, psi| {
            let share = psi.iter().map(|a| weights[k] * a.ell.values()[k]).sum::<f64>() / psi.len().max(1) as f64;
            base + gain * share
        });
        Self::new(space.len(), base + gain, rate)
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn sup_rate(&self) -> f64 {
        self.sup_rate
    }

    pub fn rate(&self, h: usize, k: usize, x: &[f64], psi: &[AgentState]) -> f64 {
        (self.rate)(h, k, x, psi)
    }

    /// `C_T` with `ω(s) = s`: bounds both the total outflow `α_hh` and the inflow
    /// `Σ_k α_kh` of a label.
    pub fn c_t(&self) -> f64 {
        self.labels.saturating_sub(1) as f64 * self.sup_rate
    }

    /// The full matrix `α` with `α_hh = Σ_{k≠h} α_hk` on the diagonal.
    #[allow(clippy::needless_range_loop)]
    pub fn matrix(&self, x: &[f64], psi: &[AgentState]) -> Result<Vec<Vec<f64>>> {
        let h_count = self.labels;
        let mut alpha = vec![vec![0.0; h_count]; h_count];
        for h in 0..h_count {
            for k in 0..h_count {
                if h == k {
                    continue;
                }
                let a = self.rate(h, k, x, psi);
                if !(a >= 0.0) || !a.is_finite() {
                    return Err(Error::NegativeRate {
                        from: h,
                        to: k,
                        rate: a,
                    });
                }
                alpha[h][k] = a;
            }
            alpha[h][h] = alpha[h].iter().sum();
        }
        Ok(alpha)
    }
}

#[derive(Debug, Clone)]
pub enum LabelOperator {
    Zero,
    /// Replicator dynamics with a full kernel.
    Replicator(PayoffKernel),
    /// `(∫ ∂_ξF ℓ dη - ∂_ξF) ℓ` for a kernel of the `F` family.
    Undisclosed(PayoffKernel),
    Markov(MarkovRates),
}

impl LabelOperator {
    /// Picks the operator matching the kernel kind.
    pub fn from_kernel(kernel: PayoffKernel) -> Self {
        match kernel {
            PayoffKernel::ReplicatorFull(_) => LabelOperator::Replicator(kernel),
            _ => LabelOperator::Undisclosed(kernel),
        }
    }

    /// `C_T` in the pointwise bound `𝒯 ≤ C_T ω(R)`, `𝒯_- ≤ C_T ω(ℓ)`.
    pub fn c_t(&self) -> f64 {
        match self {
            LabelOperator::Zero => 0.0,
            LabelOperator::Replicator(k) | LabelOperator::Undisclosed(k) => 2.0 * k.c_f(),
            LabelOperator::Markov(r) => r.c_t(),
        }
    }

    pub fn omega(&self) -> Growth {
        Growth::Identity
    }

    pub fn kernel(&self) -> Option<&PayoffKernel> {
        match self {
            LabelOperator::Replicator(k) | LabelOperator::Undisclosed(k) => Some(k),
            _ => None,
        }
    }

    /// Applies the operator to `y` with `Ψ` given by `psi`.
    pub fn apply(&self, space: &StrategySpace, psi: &[AgentState], y: &AgentState) -> Result<LabelTangent> {
        match self {
            LabelOperator::Zero => Ok(LabelTangent::zero(space.len())),
            LabelOperator::Replicator(kernel) => replicator_operator(space, kernel, psi, y),
            LabelOperator::Undisclosed(kernel) => {
                let nu: Vec<Vec<f64>> = psi.iter().map(|a| a.x.clone()).collect();
                undisclosed_operator(space, kernel, &nu, y)
            }
            LabelOperator::Markov(rates) => markov_operator(space, rates, psi, y),
        }
    }

    /// Applies the operator to every atom of `psi`, sharing precomputation.
    pub fn apply_all(&self, space: &StrategySpace, psi: &[AgentState]) -> Result<Vec<LabelTangent>> {
        match self {
            LabelOperator::Zero => Ok(vec![LabelTangent::zero(space.len()); psi.len()]),
            LabelOperator::Replicator(PayoffKernel::ReplicatorFull(k)) => {
                for a in psi {
                    space.check_len(a.ell.values(), "label")?;
                }
                let local = k.localize_all(space, psi);
                Ok(psi
                    .iter()
                    .zip(local)
                    .map(|(a, j)| replicator_from_payoff(space, &j, a.ell.values()))
                    .collect())
            }
            LabelOperator::Undisclosed(kernel) => {
                let nu: Vec<Vec<f64>> = psi.iter().map(|a| a.x.clone()).collect();
                psi.par_iter()
                    .map(|a| undisclosed_operator(space, kernel, &nu, a))
                    .collect()
            }
            _ => psi.par_iter().map(|a| self.apply(space, psi, a)).collect(),
        }
    }
}

fn replicator_from_payoff(space: &StrategySpace, j: &[f64], ell: &[f64]) -> LabelTangent {
    let average = space.integrate(&j.iter().zip(ell).map(|(a, b)| a * b).collect::<Vec<_>>());
    LabelTangent::centred(space, j.iter().zip(ell).map(|(a, l)| (a - average) * l).collect())
}

/// `(∫ ∂_ξF ℓ dη - ∂_ξF(·)) ℓ` from precomputed `∂_ξF_ν(x, ℓ(u_k), u_k)`.
pub(crate) fn undisclosed_from_derivative(space: &StrategySpace, dxi: &[f64], ell: &[f64]) -> LabelTangent {
    let average = space.integrate(&dxi.iter().zip(ell).map(|(a, b)| a * b).collect::<Vec<_>>());
    LabelTangent::centred(space, dxi.iter().zip(ell).map(|(d, l)| (average - d) * l).collect())
}

/// `(𝒥_Ψ(x, ·) - ∫ 𝒥_Ψ(x, u) ℓ(u) dη) ℓ`.
pub fn replicator_operator(
    space: &StrategySpace,
    kernel: &PayoffKernel,
    psi: &[AgentState],
    y: &AgentState,
) -> Result<LabelTangent> {
    let PayoffKernel::ReplicatorFull(k) = kernel else {
        return Err(Error::UnsupportedKernel(
            "replicator operator needs a full kernel".into(),
        ));
    };
    space.check_len(y.ell.values(), "label")?;
    for a in psi {
        space.check_len(a.ell.values(), "label")?;
        if a.x.len() != y.x.len() {
            return Err(Error::DimensionMismatch("atom positions of differing dimension".into()));
        }
    }
    if psi.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    let j = k.localize(space, psi, &y.x);
    Ok(replicator_from_payoff(space, &j, y.ell.values()))
}

/// `(∫ ∂_ξF_ν(x, ℓ(u), u) ℓ(u) dη - ∂_ξF_ν(x, ℓ, ·)) ℓ`.
pub fn undisclosed_operator(
    space: &StrategySpace,
    kernel: &PayoffKernel,
    nu: &[Vec<f64>],
    y: &AgentState,
) -> Result<LabelTangent> {
    space.check_len(y.ell.values(), "label")?;
    let local: LocalPayoff = kernel.localize(space, nu, &y.x)?;
    let dxi = local.dxi_all(y.ell.values());
    Ok(undisclosed_from_derivative(space, &dxi, y.ell.values()))
}

/// `(𝒬^* ℓ)_h = -α_hh ℓ_h + Σ_{k≠h} α_kh ℓ_k`.
pub fn markov_operator(
    space: &StrategySpace,
    rates: &MarkovRates,
    psi: &[AgentState],
    y: &AgentState,
) -> Result<LabelTangent> {
    if space.metric() != Metric::Discrete || space.len() != rates.labels() {
        return Err(Error::DimensionMismatch(format!(
            "Markov operator with {} labels needs a discrete space of that size",
            rates.labels()
        )));
    }
    space.check_len(y.ell.values(), "label")?;
    let alpha = rates.matrix(&y.x, psi)?;
    let ell = y.ell.values();
    let values = (0..ell.len())
        .map(|h| {
            let inflow: f64 = (0..ell.len()).filter(|&k| k != h).map(|k| alpha[k][h] * ell[k]).sum();
            inflow - alpha[h][h] * ell[h]
        })
        .collect();
    Ok(LabelTangent::centred(space, values))
}
