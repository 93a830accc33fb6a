//! Explicit integration of the N-agent system `ẏ_i = b^{ε,λ}_{Λ^N}(y_i)`.
//!
//! Steps evaluate the field on the frozen ensemble and commit all agents at
//! once. Label updates are checked against the invariant box and renormalized;
//! every repair is recorded so drift stays visible.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dynamics::{AgentState, EntropicSystem, Tangent};
use crate::error::{Error, Result};
use crate::measures::state_norm;
use crate::strategy_space::{negative_entropy, renormalize, StrategySpace};

/// Relative slack when comparing a step size with its bound.
const STEP_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub agents: Vec<AgentState>,
    pub t: f64,
}

impl Ensemble {
    pub fn new(agents: Vec<AgentState>) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        Ok(Ensemble { agents, t: 0.0 })
    }

    /// `max_i ‖y_i‖`.
    pub fn max_norm(&self, space: &StrategySpace) -> f64 {
        self.agents.iter().map(|a| state_norm(space, a)).fold(0.0, f64::max)
    }
}

/// `‖𝒚¹ - 𝒚²‖ = (1/N) Σ_i (|x¹_i - x²_i| + ‖ℓ¹_i - ℓ²_i‖_{L^p})`.
pub fn ensemble_distance(space: &StrategySpace, a: &[AgentState], b: &[AgentState]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "ensembles of size {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut total = 0.0;
    for (p, q) in a.iter().zip(b) {
        total += crate::measures::state_distance(space, p, q)?;
    }
    Ok(total / a.len() as f64)
}

/// Diagnostics of one committed step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub t: f64,
    /// Largest `|Σ η ℓ - 1|` before renormalization.
    pub mass_residual: f64,
    /// `min_{i,k} min(ℓ_k - r_ε, R_ε - ℓ_k)` after the step.
    pub box_margin: f64,
    /// Largest renormalization magnitude applied to any agent or stage.
    pub correction: f64,
    /// Largest operator mean residual removed during the step.
    pub operator_residual: f64,
}

/// Constants entering the a-priori bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremConstants {
    pub m_eps: f64,
    pub m_v: f64,
    pub c_t: f64,
    pub theta_eps: f64,
    pub horizon: f64,
}

impl TheoremConstants {
    pub fn of(sys: &EntropicSystem, horizon: f64) -> Self {
        TheoremConstants {
            m_eps: sys.m_eps(),
            m_v: sys.m_v(),
            c_t: sys.bounds.c_t,
            theta_eps: sys.theta,
            horizon,
        }
    }
}

/// `(max_i ‖ȳ_i‖ + M_ε T) e^{2 M_ε T}`.
pub fn gronwall_bound(space: &StrategySpace, initial: &Ensemble, constants: &TheoremConstants) -> f64 {
    let mt = constants.m_eps * constants.horizon;
    (initial.max_norm(space) + mt) * (2.0 * mt).exp()
}

struct Accumulator {
    mass_residual: f64,
    correction: f64,
    operator_residual: f64,
}

impl Accumulator {
    fn new() -> Self {
        Accumulator {
            mass_residual: 0.0,
            correction: 0.0,
            operator_residual: 0.0,
        }
    }

    fn note_field(&mut self, field: &[Tangent]) {
        for t in field {
            self.operator_residual = self.operator_residual.max(t.raw_residual.abs());
        }
    }
}

/// `y + h Σ_j c_j k_j` for every agent, with labels renormalized into the box.
fn combine(
    sys: &EntropicSystem,
    base: &[AgentState],
    stages: &[(&[Tangent], f64)],
    h: f64,
    acc: &mut Accumulator,
    record_mass: bool,
) -> Result<Vec<AgentState>> {
    let (r, upper) = (sys.bounds.r_eps, sys.bounds.upper_eps);
    base.iter()
        .enumerate()
        .map(|(i, a)| {
            let mut x = a.x.clone();
            let mut ell = a.ell.values().to_vec();
            for (field, c) in stages {
                let t = &field[i];
                for (xi, d) in x.iter_mut().zip(&t.dx) {
                    *xi += h * c * d;
                }
                for (l, d) in ell.iter_mut().zip(&t.dl) {
                    *l += h * c * d;
                }
            }
            if let Some(v) = x.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue(format!("agent {i} position {v}")));
            }
            if record_mass {
                acc.mass_residual = acc.mass_residual.max((sys.space.integrate(&ell) - 1.0).abs());
            }
            let (density, correction) = renormalize(&sys.space, ell, r, upper)?;
            acc.correction = acc.correction.max(correction);
            Ok(AgentState::new(x, density))
        })
        .collect()
}

fn finish(agents: Vec<AgentState>, t: f64, acc: Accumulator) -> (Ensemble, StepDiagnostics) {
    let box_margin = agents.iter().map(|a| a.ell.box_margin()).fold(f64::INFINITY, f64::min);
    let diag = StepDiagnostics {
        t,
        mass_residual: acc.mass_residual,
        box_margin,
        correction: acc.correction,
        operator_residual: acc.operator_residual,
    };
    (Ensemble { agents, t }, diag)
}

fn check_step(dt: f64, bound: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Config(format!("step size {dt} must be positive")));
    }
    if dt > bound * (1.0 + STEP_SLACK) {
        return Err(Error::StepTooLarge { dt, bound });
    }
    Ok(())
}

/// One explicit Euler step; requires `dt ≤ θ_ε / λ`.
pub fn euler_step(sys: &EntropicSystem, ensemble: &Ensemble, dt: f64) -> Result<(Ensemble, StepDiagnostics)> {
    check_step(dt, sys.euler_step_bound())?;
    let mut acc = Accumulator::new();
    let k1 = sys.field(&ensemble.agents)?;
    acc.note_field(&k1);
    let agents = combine(sys, &ensemble.agents, &[(&k1, 1.0)], dt, &mut acc, true)?;
    Ok(finish(agents, ensemble.t + dt, acc))
}

/// One classical Runge-Kutta step; requires `dt ≤ θ_ε / (4λ)` and checks that
/// every intermediate stage stays in the box.
pub fn rk4_step(sys: &EntropicSystem, ensemble: &Ensemble, dt: f64) -> Result<(Ensemble, StepDiagnostics)> {
    check_step(dt, sys.euler_step_bound() / 4.0)?;
    let mut acc = Accumulator::new();
    let y = &ensemble.agents;
    let k1 = sys.field(y)?;
    acc.note_field(&k1);
    let y2 = combine(sys, y, &[(&k1, 0.5)], dt, &mut acc, false)?;
    let k2 = sys.field(&y2)?;
    acc.note_field(&k2);
    let y3 = combine(sys, y, &[(&k2, 0.5)], dt, &mut acc, false)?;
    let k3 = sys.field(&y3)?;
    acc.note_field(&k3);
    let y4 = combine(sys, y, &[(&k3, 1.0)], dt, &mut acc, false)?;
    let k4 = sys.field(&y4)?;
    acc.note_field(&k4);
    let sixth = 1.0 / 6.0;
    let agents = combine(
        sys,
        y,
        &[(&k1, sixth), (&k2, 2.0 * sixth), (&k3, 2.0 * sixth), (&k4, sixth)],
        dt,
        &mut acc,
        true,
    )?;
    Ok(finish(agents, ensemble.t + dt, acc))
}

pub fn step(sys: &EntropicSystem, ensemble: &Ensemble, dt: f64, method: Method) -> Result<(Ensemble, StepDiagnostics)> {
    match method {
        Method::Euler => euler_step(sys, ensemble, dt),
        Method::Rk4 => rk4_step(sys, ensemble, dt),
    }
}

/// `min(θ_ε / (4λ), T / 1000)`.
pub fn default_dt(sys: &EntropicSystem, horizon: f64) -> f64 {
    let cap = sys.euler_step_bound() / 4.0;
    if horizon > 0.0 {
        cap.min(horizon / 1000.0)
    } else {
        cap
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub agents: Vec<AgentState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub constants: TheoremConstants,
    pub gronwall_bound: f64,
    /// `sup_{t, i} ‖y_i(t)‖` over every step, not only the snapshots.
    pub sup_norm: f64,
    pub step_size: f64,
    pub method: Method,
}

impl Trajectory {
    pub fn last(&self) -> &Snapshot {
        self.snapshots
            .last()
            .expect("trajectory holds at least the initial snapshot")
    }

    /// Long-format CSV: `t,agent_id,x0..,l0..`, preceded by `# ` comment lines.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        let first = &self.snapshots[0].agents[0];
        out.push_str("t,agent_id");
        for c in 0..first.x.len() {
            let _ = write!(out, ",x{c}");
        }
        for k in 0..first.ell.values().len() {
            let _ = write!(out, ",l{k}");
        }
        out.push('\n');
        for snap in &self.snapshots {
            for (i, a) in snap.agents.iter().enumerate() {
                let _ = write!(out, "{},{i}", snap.t);
                for v in a.x.iter().chain(a.ell.values()) {
                    let _ = write!(out, ",{v}");
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Integrates to time `horizon` with steps of at most `dt`, keeping a snapshot
/// every `record_every` steps (and always the first and last state).
///
/// The step count is `ceil(T / dt)` and the step is `T` divided by it, so the
/// final time is hit exactly.
pub fn integrate(
    sys: &EntropicSystem,
    initial: &Ensemble,
    horizon: f64,
    dt: f64,
    method: Method,
    record_every: usize,
) -> Result<Trajectory> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::Config(format!("horizon T={horizon} must be non-negative")));
    }
    for a in &initial.agents {
        if a.ell.lower() < sys.bounds.r_eps || a.ell.upper() > sys.bounds.upper_eps {
            // a density declared for a wider box may still sit inside this one
            let inside = a
                .ell
                .values()
                .iter()
                .all(|&v| v >= sys.bounds.r_eps && v <= sys.bounds.upper_eps);
            if !inside {
                return Err(Error::InvalidDensity("initial label outside the invariant box".into()));
            }
        }
    }
    let constants = TheoremConstants::of(sys, horizon);
    let bound = gronwall_bound(&sys.space, initial, &constants);
    let mut snapshots = vec![Snapshot {
        t: initial.t,
        agents: initial.agents.clone(),
    }];
    let mut sup_norm = initial.max_norm(&sys.space);
    let record_every = record_every.max(1);
    if horizon == 0.0 {
        return Ok(Trajectory {
            snapshots,
            diagnostics: Vec::new(),
            constants,
            gronwall_bound: bound,
            sup_norm,
            step_size: 0.0,
            method,
        });
    }
    if !(dt > 0.0) {
        return Err(Error::Config(format!("step size {dt} must be positive")));
    }
    let steps = ((horizon / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let h = horizon / steps as f64;
    let start = initial.t;
    let mut current = Ensemble {
        agents: initial
            .agents
            .iter()
            .map(|a| {
                let (d, _) = renormalize(
                    &sys.space,
                    a.ell.values().to_vec(),
                    sys.bounds.r_eps,
                    sys.bounds.upper_eps,
                )?;
                Ok(AgentState::new(a.x.clone(), d))
            })
            .collect::<Result<_>>()?,
        t: start,
    };
    let mut diagnostics = Vec::with_capacity(steps);
    for n in 1..=steps {
        let (mut next, mut diag) = step(sys, &current, h, method)?;
        // pin the clock to the grid to avoid accumulated rounding in t
        next.t = start + horizon * n as f64 / steps as f64;
        diag.t = next.t;
        let norm = next.max_norm(&sys.space);
        sup_norm = sup_norm.max(norm);
        if !(norm <= bound) {
            return Err(Error::BoundViolated { norm, bound });
        }
        diagnostics.push(diag);
        if n % record_every == 0 || n == steps {
            snapshots.push(Snapshot {
                t: next.t,
                agents: next.agents.clone(),
            });
        }
        current = next;
    }
    Ok(Trajectory {
        snapshots,
        diagnostics,
        constants,
        gronwall_bound: bound,
        sup_norm,
        step_size: h,
        method,
    })
}

/// Invariant audit over all snapshots and step diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantAudit {
    pub max_mass_drift: f64,
    pub mass_ok: bool,
    pub min_box_margin: f64,
    pub box_ok: bool,
    pub min_entropy: f64,
    pub max_entropy: f64,
    pub entropy_upper: f64,
    pub entropy_ok: bool,
    pub sup_norm: f64,
    pub gronwall_bound: f64,
    pub gronwall_ok: bool,
    pub max_operator_residual: f64,
    pub max_correction: f64,
}

impl InvariantAudit {
    pub fn passed(&self) -> bool {
        self.mass_ok && self.box_ok && self.entropy_ok && self.gronwall_ok
    }
}

/// Mass drift tolerance before renormalization.
pub const MASS_DRIFT_TOL: f64 = 1e-8;

pub fn audit(sys: &EntropicSystem, traj: &Trajectory) -> Result<InvariantAudit> {
    let space = &sys.space;
    let (r, upper) = (sys.bounds.r_eps, sys.bounds.upper_eps);
    let k = sys.bounds.entropy().k;
    let mut max_mass = traj.diagnostics.iter().map(|d| d.mass_residual).fold(0.0, f64::max);
    let mut min_margin = f64::INFINITY;
    let (mut min_i, mut max_i) = (f64::INFINITY, f64::NEG_INFINITY);
    for snap in &traj.snapshots {
        for a in &snap.agents {
            max_mass = max_mass.max((a.ell.mass(space) - 1.0).abs());
            let margin = a
                .ell
                .values()
                .iter()
                .map(|&v| (v - r).min(upper - v))
                .fold(f64::INFINITY, f64::min);
            min_margin = min_margin.min(margin);
            let info = negative_entropy(space, a.ell.values())?;
            min_i = min_i.min(info);
            max_i = max_i.max(info);
        }
    }
    Ok(InvariantAudit {
        max_mass_drift: max_mass,
        mass_ok: max_mass <= MASS_DRIFT_TOL,
        min_box_margin: min_margin,
        box_ok: min_margin >= 0.0,
        min_entropy: min_i,
        max_entropy: max_i,
        entropy_upper: k,
        // Jensen gives I ≥ 0 exactly; allow rounding at the uniform density
        entropy_ok: min_i >= -1e-12 && max_i <= k,
        sup_norm: traj.sup_norm,
        gronwall_bound: traj.gronwall_bound,
        gronwall_ok: traj.sup_norm <= traj.gronwall_bound,
        max_operator_residual: traj.diagnostics.iter().map(|d| d.operator_residual).fold(0.0, f64::max),
        max_correction: traj.diagnostics.iter().map(|d| d.correction).fold(0.0, f64::max),
    })
}
