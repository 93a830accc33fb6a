//! Convergence studies: `λ → ∞` at fixed `N`, and `N → ∞` at fixed `λ`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{integrate_limit, DeltaMap, LimitSystem};
use crate::dynamics::{AgentState, EntropicSystem, FnSpatialKernel, LabelOperator, PayoffKernel};
use crate::error::{Error, Result};
use crate::measures::{euclidean, w1, EmpiricalMeasure};
use crate::particle_system::{default_dt, integrate, Ensemble, Method};
use crate::strategy_space::LabelDensity;

/// Least-squares line `y = slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Root-mean-square residual.
    pub rms_residual: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} abscissae for {} values",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "line fit needs 2 points, got {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("line fit data".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientSamples("line fit abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(LineFit {
        slope,
        intercept,
        r_squared,
        rms_residual: (sse / n).sqrt(),
    })
}

/// Inputs of [`fast_reaction_study`]. The `λ` stored in `system` is ignored.
#[derive(Debug, Clone)]
pub struct FastReactionSetup {
    pub system: EntropicSystem,
    pub positions: Vec<Vec<f64>>,
    /// Labels of the `λ`-system at `t = 0`; `None` uses `Δ(x̄_i, μ̄)`.
    pub initial_labels: Option<Vec<LabelDensity>>,
    pub horizon: f64,
    /// Number of sample times on `(0, T]`.
    pub samples: usize,
    pub burn_in: f64,
    /// RK4 steps of the limit system between two sample times.
    pub limit_substeps: usize,
    pub tol: f64,
}

impl FastReactionSetup {
    pub fn new(system: EntropicSystem, positions: Vec<Vec<f64>>, horizon: f64) -> Self {
        FastReactionSetup {
            system,
            positions,
            initial_labels: None,
            horizon,
            samples: 50,
            burn_in: horizon / 10.0,
            limit_substeps: 20,
            tol: super::DEFAULT_TOL,
        }
    }

    fn delta_map(&self) -> Result<DeltaMap> {
        let sys = &self.system;
        let kernel = match &sys.operator {
            LabelOperator::Undisclosed(k) => k.clone(),
            LabelOperator::Zero => PayoffKernel::Undisclosed(Arc::new(FnSpatialKernel {
                f: |_: &[f64], _: &[f64], _: &[f64]| 0.0,
                sup: 0.0,
            })),
            _ => {
                return Err(Error::UnsupportedKernel(
                    "the fast-reaction limit needs an undisclosed payoff or a zero operator".into(),
                ))
            }
        };
        Ok(DeltaMap::new(sys.space.clone(), kernel, sys.eps, sys.bounds, self.tol))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub lambda: f64,
    pub gap: f64,
    pub steps: usize,
    /// Time at which the supremum was attained.
    pub t_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub p: f64,
    pub lambdas: Vec<f64>,
    pub gaps: Vec<f64>,
    pub rows: Vec<RateRow>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub rms_residual: f64,
}

/// Runs the `λ`-system for each `λ` against the limit system and fits
/// `log gap ≈ slope·log λ + intercept`.
///
/// The gap at time `t` is the agent mean of `|x_{λ,i} - x_i| + ‖ℓ_{λ,i} - Δ(x_i, μ_t)‖_{L^p}`;
/// its supremum is taken over sample times `t ≥ burn_in`.
pub fn fast_reaction_study(setup: &FastReactionSetup, lambdas: &[f64]) -> Result<RateFit> {
    if lambdas.len() < 4 {
        return Err(Error::InsufficientSamples(format!(
            "rate fit needs 4 values of lambda, got {}",
            lambdas.len()
        )));
    }
    let lo = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = lambdas.iter().cloned().fold(0.0, f64::max);
    if !(lo > 0.0) || hi / lo < 100.0 * (1.0 - 1e-12) {
        return Err(Error::InsufficientSamples(format!(
            "lambda range [{lo}, {hi}] spans less than two decades"
        )));
    }
    if setup.samples == 0 || !(setup.horizon > 0.0) || !(setup.burn_in < setup.horizon) {
        return Err(Error::Config(
            "rate study needs T > 0, a sample and burn-in below T".into(),
        ));
    }
    let sys = &setup.system;
    let space = &sys.space;
    let delta = setup.delta_map()?;
    let limit = LimitSystem {
        space: space.clone(),
        velocity: sys.velocity.clone(),
        delta,
    };
    let n = setup.positions.len();
    let horizon = setup.horizon;
    let s = setup.samples;

    let limit_steps = s * setup.limit_substeps.max(1);
    let reduced = integrate_limit(
        &limit,
        &setup.positions,
        horizon,
        horizon / limit_steps as f64,
        setup.limit_substeps,
    )?;
    let targets: Vec<Vec<LabelDensity>> = reduced
        .positions
        .iter()
        .map(|xs| Ok(limit.lift(xs)?.into_iter().map(|a| a.ell).collect()))
        .collect::<Result<_>>()?;
    let labels = match &setup.initial_labels {
        Some(l) if l.len() == n => l.clone(),
        Some(l) => {
            return Err(Error::DimensionMismatch(format!(
                "{} initial labels for {n} agents",
                l.len()
            )))
        }
        None => targets[0].clone(),
    };
    let initial = Ensemble::new(
        setup
            .positions
            .iter()
            .zip(labels)
            .map(|(x, l)| AgentState::new(x.clone(), l))
            .collect(),
    )?;

    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let fast = sys.with_lambda(lambda)?;
        let per_sample = (horizon / (default_dt(&fast, horizon) * s as f64) * (1.0 - 1e-12))
            .ceil()
            .max(1.0) as usize;
        let dt = horizon / (s * per_sample) as f64;
        let traj = integrate(&fast, &initial, horizon, dt, Method::Rk4, per_sample)?;
        let mut gap = 0.0f64;
        let mut t_max = 0.0;
        for (j, snap) in traj.snapshots.iter().enumerate() {
            let t = horizon * j as f64 / s as f64;
            if t < setup.burn_in * (1.0 - 1e-12) {
                continue;
            }
            let mean = snap
                .agents
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    let diff: Vec<f64> = a
                        .ell
                        .values()
                        .iter()
                        .zip(targets[j][i].values())
                        .map(|(u, v)| u - v)
                        .collect();
                    euclidean(&a.x, &reduced.positions[j][i]) + space.norm(&diff)
                })
                .sum::<f64>()
                / n as f64;
            if mean > gap {
                gap = mean;
                t_max = t;
            }
        }
        log::info!(
            "lambda={lambda}: gap={gap:.4e} at t={t_max} ({} steps)",
            traj.diagnostics.len()
        );
        rows.push(RateRow {
            lambda,
            gap,
            steps: traj.diagnostics.len(),
            t_max,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.lambda.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.gap.ln()).collect();
    let fit = fit_line(&xs, &ys)?;
    Ok(RateFit {
        p: space.p(),
        lambdas: rows.iter().map(|r| r.lambda).collect(),
        gaps: rows.iter().map(|r| r.gap).collect(),
        rows,
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        rms_residual: fit.rms_residual,
    })
}

/// Inputs of [`mean_field_study`]. `initial` holds the largest sample; the
/// `N`-particle system uses its first `N` agents.
#[derive(Debug, Clone)]
pub struct MeanFieldSetup {
    pub system: EntropicSystem,
    pub initial: Vec<AgentState>,
    pub horizon: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldRow {
    pub n: usize,
    /// `sup_t W₁(Λ^N_t, Λ^{2N}_t)` over the sample times.
    pub sup_w1: f64,
    /// `W₁(Λ̄^N, Λ̄^{2N})`.
    pub initial_w1: f64,
    /// `sup_w1 / initial_w1`, absent when the initial distance vanishes.
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldTable {
    pub rows: Vec<MeanFieldRow>,
}

impl MeanFieldTable {
    /// Number of `N` at which `sup_w1` increases.
    pub fn inversions(&self) -> usize {
        self.rows.windows(2).filter(|w| w[1].sup_w1 > w[0].sup_w1).count()
    }

    /// `max ρ / min ρ` over the defined ratios.
    pub fn rho_spread(&self) -> Option<f64> {
        let rhos: Vec<f64> = self.rows.iter().filter_map(|r| r.rho).collect();
        if rhos.is_empty() {
            return None;
        }
        let max = rhos.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = rhos.iter().cloned().fold(f64::INFINITY, f64::min);
        Some(max / min)
    }
}

/// Compares the `N`- and `2N`-particle systems on nested initial data.
pub fn mean_field_study(setup: &MeanFieldSetup, ns: &[usize]) -> Result<MeanFieldTable> {
    if ns.len() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "mean-field study needs 2 sizes, got {}",
            ns.len()
        )));
    }
    if ns[0] == 0 || ns.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(Error::InsufficientSamples(format!("sizes {ns:?} must double")));
    }
    let largest = *ns.last().expect("non-empty");
    if setup.initial.len() < largest {
        return Err(Error::InsufficientSamples(format!(
            "{} initial agents for N={largest}",
            setup.initial.len()
        )));
    }
    if setup.samples == 0 {
        return Err(Error::Config("mean-field study needs at least one sample time".into()));
    }
    let sys = &setup.system;
    let horizon = setup.horizon;
    let per_sample = if horizon > 0.0 {
        (horizon / (default_dt(sys, horizon) * setup.samples as f64) * (1.0 - 1e-12))
            .ceil()
            .max(1.0) as usize
    } else {
        1
    };
    let dt = horizon / (setup.samples * per_sample) as f64;
    let runs: Vec<Vec<EmpiricalMeasure>> = ns
        .iter()
        .map(|&n| {
            let initial = Ensemble::new(setup.initial[..n].to_vec())?;
            let traj = integrate(sys, &initial, horizon, dt, Method::Rk4, per_sample)?;
            traj.snapshots
                .into_iter()
                .map(|s| EmpiricalMeasure::new(s.agents))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(ns.len() - 1);
    for (k, pair) in runs.windows(2).enumerate() {
        let mut sup_w1 = 0.0f64;
        let mut initial_w1 = 0.0;
        for (j, (a, b)) in pair[0].iter().zip(&pair[1]).enumerate() {
            let (d, _) = w1(&sys.space, a, b)?;
            if j == 0 {
                initial_w1 = d;
            }
            sup_w1 = sup_w1.max(d);
        }
        let rho = if initial_w1 > 0.0 {
            Some(sup_w1 / initial_w1)
        } else {
            None
        };
        log::info!("N={}: sup W1={sup_w1:.4e}, W1(0)={initial_w1:.4e}", ns[k]);
        rows.push(MeanFieldRow {
            n: ns[k],
            sup_w1,
            initial_w1,
            rho,
        });
    }
    Ok(MeanFieldTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_exact() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let fit = fit_line(&xs, &ys).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-14 && (fit.intercept - 2.0).abs() < 1e-14);
        assert!((fit.r_squared - 1.0).abs() < 1e-14);
        assert!(fit_line(&[1.0], &[1.0]).is_err());
    }
}
