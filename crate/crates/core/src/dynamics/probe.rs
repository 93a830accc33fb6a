//! Monte-Carlo probes of the structural assumptions on `v` and `𝒯`.
//!
//! Inequalities with declared constants are checked and can fail; Lipschitz
//! moduli have no declared value and are only estimated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AgentState, EntropicSystem, LabelOperator};
use crate::error::Result;
use crate::measures::{euclidean, euclidean_norm, sample_in_ball, state_distance_unchecked, state_norm};
use crate::strategy_space::sample_density;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    /// Largest observed value of the checked ratio or residual.
    pub observed: f64,
    /// The bound it is compared against (`inf` for estimates).
    pub limit: f64,
    /// Description of the worst input seen.
    pub witness: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub checks: Vec<AssumptionCheck>,
}

impl ProbeReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Tracker {
    name: &'static str,
    observed: f64,
    limit: f64,
    witness: String,
}

impl Tracker {
    fn new(name: &'static str, limit: f64) -> Self {
        Tracker {
            name,
            observed: 0.0,
            limit,
            witness: String::new(),
        }
    }

    fn record(&mut self, value: f64, witness: impl FnOnce() -> String) {
        if value > self.observed || value.is_nan() {
            self.observed = value;
            self.witness = witness();
        }
    }

    fn finish(self, slack: f64) -> AssumptionCheck {
        let passed = self.observed.is_finite() && self.observed <= self.limit + slack;
        AssumptionCheck {
            name: self.name.into(),
            passed,
            observed: self.observed,
            limit: self.limit,
            witness: self.witness,
        }
    }
}

fn random_agent(sys: &EntropicSystem, rng: &mut ChaCha8Rng, radius: f64) -> Result<AgentState> {
    let x = sample_in_ball(rng, sys.velocity.dim(), radius);
    let concentration = if rng.gen_bool(0.5) { 0.3 } else { 3.0 };
    let ell = sample_density(&sys.space, rng, sys.bounds.r_eps, sys.bounds.upper_eps, concentration)?;
    Ok(AgentState::new(x, ell))
}

/// Runs `samples` random probes at each radius in `{1, 10, 100}`.
pub fn probe_assumptions(sys: &EntropicSystem, samples: usize, seed: u64) -> Result<ProbeReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = &sys.space;
    let b = &sys.bounds;
    let m_v = sys.m_v();
    let unit = sys.with_lambda(1.0)?;
    let m_eps = unit.m_eps();
    let c_t = sys.operator.c_t();

    let mut v3 = Tracker::new("v3_sublinear", m_v);
    let mut v_lip = Tracker::new("v_lipschitz_estimate", f64::INFINITY);
    let mut t1_raw = Tracker::new("T1_raw_residual", 1e-8);
    let mut t1 = Tracker::new("T1_zero_mean", 1e-12);
    let mut t2 = Tracker::new("T2_lipschitz_estimate", f64::INFINITY);
    let mut t3_up = Tracker::new("T3_upper", c_t * b.omega.eval(b.upper_eps));
    let mut t3_neg = Tracker::new("T3_negative_part", 1.0);
    let mut f3 = Tracker::new("F3_derivative_bound", sys.operator.kernel().map_or(0.0, |k| k.c_f()));
    let mut sub = Tracker::new("b_eps_sublinear", m_eps);

    for radius in [1.0, 10.0, 100.0] {
        for _ in 0..samples {
            let n_psi = rng.gen_range(1..=6);
            let psi: Vec<AgentState> = (0..n_psi)
                .map(|_| random_agent(sys, &mut rng, radius))
                .collect::<Result<_>>()?;
            let y = random_agent(sys, &mut rng, radius)?;
            let m1 = psi.iter().map(|a| state_norm(space, a)).sum::<f64>() / psi.len() as f64;
            let scale = 1.0 + state_norm(space, &y) + m1;
            let describe = |y: &AgentState| format!("x={:?}, |y|={:.4}, m1={:.4}", y.x, state_norm(space, y), m1);

            let v = sys.velocity.eval(space, &psi, &y);
            v3.record(euclidean_norm(&v) / scale, || describe(&y));

            let t = sys.operator.apply(space, &psi, &y)?;
            t1_raw.record(t.raw_residual.abs(), || describe(&y));
            t1.record(space.integrate(&t.values).abs(), || describe(&y));
            for (k, (&tk, &lk)) in t.values.iter().zip(y.ell.values()).enumerate() {
                t3_up.record(tk, || format!("node {k}, {}", describe(&y)));
                let neg = (-tk).max(0.0);
                let allowed = c_t * b.omega.eval(lk);
                let ratio = if allowed > 0.0 {
                    neg / allowed
                } else if neg > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                };
                t3_neg.record(ratio, || format!("node {k}, ell={lk}, {}", describe(&y)));
            }

            let field = unit.field_at(&psi, &y)?;
            sub.record(unit.tangent_norm(&field) / scale, || describe(&y));

            if let Some(kernel) = sys.operator.kernel() {
                if !matches!(sys.operator, LabelOperator::Replicator(_)) {
                    let nu: Vec<Vec<f64>> = psi.iter().map(|a| a.x.clone()).collect();
                    let local = kernel.localize(space, &nu, &y.x)?;
                    for k in 0..space.len() {
                        let xi = rng.gen_range(1e-6..(2.0 * b.upper_eps));
                        f3.record(local.dxi(k, xi).abs(), || {
                            format!("node {k}, xi={xi}, {}", describe(&y))
                        });
                    }
                }
            }

            // difference quotients along a nearby perturbation of (y, Ψ)
            let mut y2 = random_agent(sys, &mut rng, 1.0)?;
            let mix: f64 = rng.gen_range(0.001..0.1);
            let x2: Vec<f64> = y.x.iter().zip(&y2.x).map(|(a, d)| a + mix * d).collect();
            let l2: Vec<f64> = y
                .ell
                .values()
                .iter()
                .zip(y2.ell.values())
                .map(|(a, c)| (1.0 - mix) * a + mix * c)
                .collect();
            y2 = AgentState::new(
                x2,
                crate::strategy_space::renormalize(space, l2, b.r_eps, b.upper_eps)?.0,
            );
            let dy = state_distance_unchecked(space, &y, &y2);
            if dy > 0.0 {
                let v2 = sys.velocity.eval(space, &psi, &y2);
                v_lip.record(euclidean(&v, &v2) / dy, || describe(&y));
                let t2v = sys.operator.apply(space, &psi, &y2)?;
                let diff: Vec<f64> = t.values.iter().zip(&t2v.values).map(|(a, c)| a - c).collect();
                t2.record(space.norm(&diff) / dy, || describe(&y));
            }
        }
    }

    let rel = 1e-9;
    Ok(ProbeReport {
        checks: vec![
            v3.finish(rel * (1.0 + m_v)),
            v_lip.finish(0.0),
            t1_raw.finish(0.0),
            t1.finish(0.0),
            t2.finish(0.0),
            t3_up.finish(1e-12),
            t3_neg.finish(1e-12),
            f3.finish(1e-12),
            sub.finish(rel * (1.0 + m_eps)),
        ],
    })
}
