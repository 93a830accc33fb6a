//! Fast-reaction limit: labels replaced by the minimizer of
//! `G_ν(x, ℓ) = ∫ F_ν(x, ℓ(u), u) + ε ℓ(u)(log ℓ(u) - 1) dη(u)` over `C_ε`.

mod limit;
mod study;

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dynamics::{LocalPayoff, PayoffKernel};
use crate::error::{Error, Result};
use crate::strategy_space::{project_tilt, BoxBounds, LabelDensity, StrategySpace};

pub use limit::{integrate_limit, limit_velocity, LimitSystem, SpatialTrajectory};
pub use study::{
    fast_reaction_study, fit_line, mean_field_study, FastReactionSetup, LineFit, MeanFieldRow, MeanFieldSetup,
    MeanFieldTable, RateFit, RateRow,
};

/// Default stationarity tolerance of the minimizer.
pub const DEFAULT_TOL: f64 = 1e-11;
const MAX_ITERATIONS: usize = 20_000;

/// Minimization of `G_ν(x, ·)` over `C_ε` with `(ν, x)` frozen.
#[derive(Clone)]
pub struct GProblem {
    pub space: StrategySpace,
    pub eps: f64,
    pub bounds: BoxBounds,
    pub xi_lipschitz: f64,
    local: LocalPayoff,
}

impl GProblem {
    pub fn new(
        space: &StrategySpace,
        kernel: &PayoffKernel,
        nu: &[Vec<f64>],
        x: &[f64],
        eps: f64,
        bounds: BoxBounds,
    ) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Config(format!("entropic weight eps={eps} must be positive")));
        }
        Ok(GProblem {
            space: space.clone(),
            eps,
            bounds,
            xi_lipschitz: kernel.xi_lipschitz(),
            local: kernel.localize(space, nu, x)?,
        })
    }

    pub fn local(&self) -> &LocalPayoff {
        &self.local
    }

    fn check(&self, ell: &[f64]) -> Result<()> {
        self.space.check_len(ell, "density")?;
        if let Some(v) = ell.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::NonFiniteValue(format!("G needs a positive density, found {v}")));
        }
        Ok(())
    }

    /// `∂_ξ F_ν(x, ℓ_k, u_k) + ε log ℓ_k`, the `L²(η)` gradient of `G`.
    pub fn gradient(&self, ell: &[f64]) -> Vec<f64> {
        ell.iter()
            .enumerate()
            .map(|(k, &l)| self.local.dxi(k, l) + self.eps * l.ln())
            .collect()
    }
}

/// `G_ν(x, ℓ)`.
pub fn g_value(problem: &GProblem, ell: &[f64]) -> Result<f64> {
    problem.check(ell)?;
    let w = problem.space.weights();
    let value: f64 = ell
        .iter()
        .enumerate()
        .map(|(k, &l)| w[k] * (problem.local.f(k, l) + problem.eps * l * (l.ln() - 1.0)))
        .sum();
    if !value.is_finite() {
        return Err(Error::NonFiniteValue(format!("G evaluated to {value}")));
    }
    Ok(value)
}

/// `⟨g, ℓ⟩ - min_{q ∈ C_{r,R}} ⟨g, q⟩`: the linear-minimization (Frank-Wolfe) gap.
///
/// The inner minimum is a fractional knapsack: start from `q = r` and pour the
/// remaining mass `1 - r` into the nodes with the smallest `g` first.
pub fn frank_wolfe_gap(space: &StrategySpace, gradient: &[f64], ell: &[f64], r: f64, upper: f64) -> f64 {
    let w = space.weights();
    let mut order: Vec<usize> = (0..gradient.len()).collect();
    order.sort_by(|&a, &b| gradient[a].total_cmp(&gradient[b]));
    let mut remaining = 1.0 - r;
    let mut best = r * space.integrate(gradient);
    for k in order {
        if remaining <= 0.0 {
            break;
        }
        let capacity = (upper - r) * w[k];
        let take = capacity.min(remaining);
        best += take * gradient[k];
        remaining -= take;
    }
    let current: f64 = w.iter().zip(gradient).zip(ell).map(|((w, g), l)| w * g * l).sum();
    current - best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizerCertificate {
    pub ell_star: LabelDensity,
    pub value: f64,
    /// Last `‖ℓ_{n+1} - ℓ_n‖_{L²} / s`.
    pub residual: f64,
    /// Frank-Wolfe gap at `ℓ*`, an upper bound on `G(ℓ*) - min G`.
    pub fw_gap: f64,
    /// `L²` strong-convexity modulus `ε / R_ε`.
    pub beta_eps: f64,
    pub iterations: usize,
    pub step: f64,
}

fn kl(space: &StrategySpace, q: &[f64], p: &[f64]) -> f64 {
    space
        .weights()
        .iter()
        .zip(q.iter().zip(p))
        .map(|(w, (a, b))| w * (a * (a / b).ln() - a + b))
        .sum()
}

/// Mirror descent with exact clipped-tilt projection and Bregman backtracking.
///
/// The step starts at `s = R_ε / (ε + C'_F)` and is halved whenever the
/// relative-smoothness descent inequality fails; halved steps are kept.
pub fn minimize_g(problem: &GProblem, tol: f64) -> Result<MinimizerCertificate> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("solver tolerance {tol} must be positive")));
    }
    let space = &problem.space;
    let (r, upper) = (problem.bounds.r_eps, problem.bounds.upper_eps);
    let mut s = upper / (problem.eps + problem.xi_lipschitz);
    let mut ell = vec![1.0; space.len()];
    let mut value = g_value(problem, &ell)?;
    let mut residual = f64::INFINITY;
    for iteration in 1..=MAX_ITERATIONS {
        let grad = problem.gradient(&ell);
        let (next, next_value) = loop {
            let log_w: Vec<f64> = ell.iter().zip(&grad).map(|(l, g)| l.ln() - s * g).collect();
            let (cand, _) = project_tilt(space, &log_w, r, upper)?;
            let cand_value = g_value(problem, &cand)?;
            let linear: f64 = space
                .weights()
                .iter()
                .zip(grad.iter().zip(cand.iter().zip(&ell)))
                .map(|(w, (g, (c, l)))| w * g * (c - l))
                .sum();
            let model = value + linear + kl(space, &cand, &ell) / s;
            if cand_value <= model + 1e-14 * (1.0 + value.abs()) || s < 1e-12 {
                break (cand, cand_value);
            }
            s *= 0.5;
        };
        let diff: Vec<f64> = next.iter().zip(&ell).map(|(a, b)| a - b).collect();
        residual = crate::strategy_space::lp_norm(space, &diff, 2.0) / s;
        ell = next;
        value = next_value;
        if residual <= tol {
            let grad = problem.gradient(&ell);
            let fw_gap = frank_wolfe_gap(space, &grad, &ell, r, upper);
            let (ell_star, _) = crate::strategy_space::renormalize(space, ell, r, upper)?;
            let value = g_value(problem, ell_star.values())?;
            return Ok(MinimizerCertificate {
                ell_star,
                value,
                residual,
                fw_gap,
                beta_eps: problem.eps / upper,
                iterations: iteration,
                step: s,
            });
        }
    }
    Err(Error::MaxIterations {
        iterations: MAX_ITERATIONS,
        residual,
    })
}

/// Closed-form minimizer for `F = -𝒥 ξ`: `clip(c e^{𝒥/ε}, r, R)` with `c` fixed
/// by the mass constraint. The flag reports whether clipping was active.
pub fn gibbs_reference(problem: &GProblem) -> Result<(LabelDensity, bool)> {
    let j = problem
        .local
        .linear_payoff()
        .ok_or_else(|| Error::UnsupportedKernel("closed form needs a kernel linear in the label".into()))?;
    let log_w: Vec<f64> = j.iter().map(|v| v / problem.eps).collect();
    let (r, upper) = (problem.bounds.r_eps, problem.bounds.upper_eps);
    let (values, clipped) = project_tilt(&problem.space, &log_w, r, upper)?;
    let (density, _) = crate::strategy_space::renormalize(&problem.space, values, r, upper)?;
    Ok((density, clipped))
}

const CACHE_LIMIT: usize = 200_000;

/// Memoized `Δ(x, ν) = argmin G_ν(x, ·)`.
///
/// Keys are the exact bit patterns of `(x, ν)`, so cached and fresh results are
/// indistinguishable. Every solve starts from the uniform density.
pub struct DeltaMap {
    pub space: StrategySpace,
    pub kernel: PayoffKernel,
    pub eps: f64,
    pub bounds: BoxBounds,
    pub tol: f64,
    cache: Mutex<HashMap<Vec<u64>, LabelDensity>>,
}

impl std::fmt::Debug for DeltaMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "DeltaMap(kernel={:?}, eps={}, tol={})",
            self.kernel, self.eps, self.tol
        )
    }
}

impl Clone for DeltaMap {
    fn clone(&self) -> Self {
        DeltaMap::new(self.space.clone(), self.kernel.clone(), self.eps, self.bounds, self.tol)
    }
}

impl DeltaMap {
    pub fn new(space: StrategySpace, kernel: PayoffKernel, eps: f64, bounds: BoxBounds, tol: f64) -> Self {
        DeltaMap {
            space,
            kernel,
            eps,
            bounds,
            tol,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn problem(&self, x: &[f64], nu: &[Vec<f64>]) -> Result<GProblem> {
        GProblem::new(&self.space, &self.kernel, nu, x, self.eps, self.bounds)
    }

    pub fn get(&self, x: &[f64], nu: &[Vec<f64>]) -> Result<LabelDensity> {
        let key: Vec<u64> = x.iter().chain(nu.iter().flatten()).map(|v| v.to_bits()).collect();
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let cert = minimize_g(&self.problem(x, nu)?, self.tol)?;
        let mut cache = self.cache.lock().expect("cache lock");
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key, cert.ell_star.clone());
        Ok(cert.ell_star)
    }

    pub fn cache_len(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}
