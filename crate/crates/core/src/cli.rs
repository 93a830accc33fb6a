//! Scenario files and the four experiment commands behind the binary.
//!
//! A scenario is a JSON document; unknown keys are rejected. Every output file
//! carries the SHA-256 of the resolved scenario and the resolved box and step
//! bound, so a result can always be traced back to its input.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{
    probe_assumptions, AgentState, CoordinationKernel, EntropicSystem, LabelOperator, MarkovRates, PayoffKernel,
    ProbeReport, VelocityField, VelocityTerm, WaveKernel,
};
use crate::error::{Error, Result};
use crate::fast_reaction::{fast_reaction_study, mean_field_study, FastReactionSetup, MeanFieldSetup};
use crate::measures::sample_in_ball;
use crate::particle_system::{audit, default_dt, integrate, Ensemble, Method};
use crate::strategy_space::{sample_density, select_box_bounds, Growth, LabelDensity, Metric, StrategySpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    /// Number of quadrature nodes.
    pub nodes: usize,
    /// `euclidean`: midpoints of `[0, 1]`; `discrete`: labels `1..=nodes`.
    #[serde(default = "default_metric")]
    pub metric: Metric,
    #[serde(default = "default_p")]
    pub p: f64,
}

fn default_metric() -> Metric {
    Metric::Euclidean
}

fn default_p() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    /// No label dynamics besides entropy.
    Zero,
    /// Replicator dynamics with the coordination kernel.
    ReplicatorFull { amplitude: f64, width: f64 },
    /// Undisclosed replicator with the wave kernel, `F = -𝒥 ξ`.
    Undisclosed { amplitude: f64, wavenumber: f64 },
    /// Wave kernel plus the convex penalty `κ (ξ + e^{-ξ} - 1)`.
    Penalized {
        amplitude: f64,
        wavenumber: f64,
        kappa: f64,
    },
    /// Markov jumps with popularity-driven rates; needs a discrete space.
    Markov { base: f64, gain: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocityConfig {
    Constant {
        value: Vec<f64>,
    },
    Attraction {
        strength: f64,
    },
    Steering {
        gain: f64,
        center: f64,
        direction: Vec<f64>,
    },
    Superlinear {
        coefficient: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitAgent {
    pub x: Vec<f64>,
    pub ell: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "sampler", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    /// Positions uniform in a ball, labels from Gamma weights tilted into the box.
    UniformBall {
        radius: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
        concentration: f64,
    },
    Explicit {
        agents: Vec<ExplicitAgent>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FastLimitConfig {
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_rate_samples")]
    pub samples: usize,
    /// Defaults to `T / 10`.
    #[serde(default)]
    pub burn_in: Option<f64>,
    #[serde(default = "default_substeps")]
    pub limit_substeps: usize,
}

fn default_lambdas() -> Vec<f64> {
    vec![10.0, 100.0, 1000.0, 10000.0]
}

fn default_rate_samples() -> usize {
    50
}

fn default_substeps() -> usize {
    20
}

impl Default for FastLimitConfig {
    fn default() -> Self {
        FastLimitConfig {
            lambdas: default_lambdas(),
            samples: default_rate_samples(),
            burn_in: None,
            limit_substeps: default_substeps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanFieldConfig {
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_mf_samples")]
    pub samples: usize,
}

fn default_sizes() -> Vec<usize> {
    vec![16, 32, 64, 128, 256]
}

fn default_mf_samples() -> usize {
    20
}

impl Default for MeanFieldConfig {
    fn default() -> Self {
        MeanFieldConfig {
            sizes: default_sizes(),
            samples: default_mf_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub space: SpaceConfig,
    pub kernel: KernelConfig,
    /// Spatial dimension `d`.
    pub dim: usize,
    #[serde(default)]
    pub velocity: Vec<VelocityConfig>,
    pub eps: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Replaces the operator's `C_T` when larger.
    #[serde(default)]
    pub c_t: Option<f64>,
    pub agents: usize,
    pub horizon: f64,
    /// Defaults to `min(θ_ε / (4λ), T / 1000)`.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    pub initial: InitialConfig,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    #[serde(default = "default_probe_samples")]
    pub probe_samples: usize,
    #[serde(default)]
    pub fastlimit: FastLimitConfig,
    #[serde(default)]
    pub meanfield: MeanFieldConfig,
}

fn default_lambda() -> f64 {
    1.0
}

fn default_method() -> Method {
    Method::Rk4
}

fn default_record_every() -> usize {
    10
}

fn default_solver_tol() -> f64 {
    crate::fast_reaction::DEFAULT_TOL
}

fn default_probe_samples() -> usize {
    40
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ScenarioConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name}={v} must be positive and finite")))
            }
        };
        if self.eps == 0.0 {
            return Err(Error::Config(
                "eps=0 leaves the entropic box undefined: without entropy labels can reach zero \
                 and no invariant region C_eps exists"
                    .into(),
            ));
        }
        positive("eps", self.eps)?;
        positive("lambda", self.lambda)?;
        positive("space.p", self.space.p)?;
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(Error::Config(format!("horizon={} must be non-negative", self.horizon)));
        }
        if let Some(dt) = self.dt {
            positive("dt", dt)?;
        }
        if let Some(c) = self.c_t {
            if !(c >= 0.0) || !c.is_finite() {
                return Err(Error::Config(format!("c_t={c} must be non-negative")));
            }
        }
        positive("solver_tol", self.solver_tol)?;
        if self.space.nodes == 0 || self.dim == 0 || self.agents == 0 {
            return Err(Error::Config("space.nodes, dim and agents must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn space(&self) -> Result<StrategySpace> {
        match self.space.metric {
            Metric::Euclidean => StrategySpace::uniform_grid(self.space.nodes, self.space.p),
            Metric::Discrete => StrategySpace::discrete(self.space.nodes, self.space.p),
        }
    }

    fn operator(&self, space: &StrategySpace) -> Result<LabelOperator> {
        Ok(match &self.kernel {
            KernelConfig::Zero => LabelOperator::Zero,
            KernelConfig::ReplicatorFull { amplitude, width } => {
                LabelOperator::from_kernel(PayoffKernel::ReplicatorFull(Arc::new(CoordinationKernel {
                    amplitude: *amplitude,
                    width: *width,
                })))
            }
            KernelConfig::Undisclosed { amplitude, wavenumber } => {
                LabelOperator::from_kernel(PayoffKernel::Undisclosed(Arc::new(WaveKernel {
                    amplitude: *amplitude,
                    wavenumber: *wavenumber,
                })))
            }
            KernelConfig::Penalized {
                amplitude,
                wavenumber,
                kappa,
            } => {
                if !(*kappa >= 0.0) {
                    return Err(Error::Config(format!("penalty kappa={kappa} must be non-negative")));
                }
                LabelOperator::from_kernel(PayoffKernel::Penalized {
                    base: Arc::new(WaveKernel {
                        amplitude: *amplitude,
                        wavenumber: *wavenumber,
                    }),
                    kappa: *kappa,
                })
            }
            KernelConfig::Markov { base, gain } => {
                if self.space.metric != Metric::Discrete {
                    return Err(Error::Config("markov kernel needs a discrete space".into()));
                }
                LabelOperator::Markov(MarkovRates::popularity(space, *base, *gain)?)
            }
        })
    }

    fn velocity(&self) -> Result<VelocityField> {
        let terms = self
            .velocity
            .iter()
            .map(|v| match v {
                VelocityConfig::Constant { value } => VelocityTerm::Constant(value.clone()),
                VelocityConfig::Attraction { strength } => VelocityTerm::Attraction(*strength),
                VelocityConfig::Steering {
                    gain,
                    center,
                    direction,
                } => VelocityTerm::Steering {
                    gain: *gain,
                    center: *center,
                    direction: direction.clone(),
                },
                VelocityConfig::Superlinear { coefficient } => VelocityTerm::Superlinear(*coefficient),
            })
            .collect();
        VelocityField::new(self.dim, terms)
    }

    /// The system at the configured `λ`.
    pub fn system(&self) -> Result<EntropicSystem> {
        let space = self.space()?;
        let operator = self.operator(&space)?;
        let velocity = self.velocity()?;
        let c_t = self.c_t.unwrap_or(0.0).max(operator.c_t());
        let bounds = select_box_bounds(self.eps, c_t, Growth::Identity)?;
        EntropicSystem::with_bounds(space, velocity, operator, self.lambda, bounds)
    }

    /// Initial agents; the sampler draws `count` agents from the seeded stream.
    pub fn initial_agents(&self, sys: &EntropicSystem, count: usize) -> Result<Vec<AgentState>> {
        let (r, upper) = (sys.bounds.r_eps, sys.bounds.upper_eps);
        match &self.initial {
            InitialConfig::UniformBall {
                radius,
                center,
                concentration,
            } => {
                if !(*radius >= 0.0) || !(*concentration > 0.0) {
                    return Err(Error::Config("sampler needs radius >= 0 and concentration > 0".into()));
                }
                let center = center.clone().unwrap_or_else(|| vec![0.0; self.dim]);
                if center.len() != self.dim {
                    return Err(Error::Config(format!(
                        "sampler center has {} coordinates",
                        center.len()
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                (0..count)
                    .map(|_| {
                        let offset = sample_in_ball(&mut rng, self.dim, *radius);
                        let x = center.iter().zip(offset).map(|(c, o)| c + o).collect();
                        Ok(AgentState::new(
                            x,
                            sample_density(&sys.space, &mut rng, r, upper, *concentration)?,
                        ))
                    })
                    .collect()
            }
            InitialConfig::Explicit { agents } => {
                if agents.len() < count {
                    return Err(Error::Config(format!(
                        "{} explicit agents for {count} requested",
                        agents.len()
                    )));
                }
                agents[..count]
                    .iter()
                    .map(|a| {
                        if a.x.len() != self.dim {
                            return Err(Error::Config(format!("explicit agent position in R^{}", a.x.len())));
                        }
                        let ell = LabelDensity::new(&sys.space, a.ell.clone(), r, upper)
                            .map_err(|e| Error::Config(format!("explicit label: {e}")))?;
                        Ok(AgentState::new(a.x.clone(), ell))
                    })
                    .collect()
            }
        }
    }
}

/// Values embedded in every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
    pub r_eps: f64,
    pub upper_eps: f64,
    pub theta_eps: f64,
    pub c_t: f64,
    pub m_eps: f64,
}

impl Provenance {
    pub fn of(config: &ScenarioConfig, sys: &EntropicSystem) -> Self {
        Provenance {
            config_sha256: config.hash(),
            seed: config.seed,
            r_eps: sys.bounds.r_eps,
            upper_eps: sys.bounds.upper_eps,
            theta_eps: sys.theta,
            c_t: sys.bounds.c_t,
            m_eps: sys.m_eps(),
        }
    }

    fn comments(&self) -> Vec<String> {
        vec![
            format!("config_sha256={}", self.config_sha256),
            format!("seed={}", self.seed),
            format!("r_eps={}", self.r_eps),
            format!("upper_eps={}", self.upper_eps),
            format!("theta_eps={}", self.theta_eps),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    FastLimit,
    MeanField,
    Check,
}

/// Exit status of a command that ran to completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// `1` for configuration problems, `2` for invariant or assumption failures.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Config(_)
        | Error::Io(_)
        | Error::InvalidBounds { .. }
        | Error::NoFeasibleBounds(_)
        | Error::InvalidSpace(_)
        | Error::InvalidDensity(_)
        | Error::DimensionMismatch(_)
        | Error::UnsupportedKernel(_)
        | Error::InsufficientSamples(_)
        | Error::StepTooLarge { .. }
        | Error::EmptyMeasure => 1,
        _ => 2,
    }
}

fn write(out: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = out.join(name);
    fs::write(&path, contents)?;
    files.push(path);
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    provenance: &'a Provenance,
    passed: bool,
    result: T,
}

/// Runs one command and writes its files into `out`.
pub fn run(command: Command, config: &ScenarioConfig, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out)?;
    let sys = config.system()?;
    let prov = Provenance::of(config, &sys);
    let mut files = Vec::new();
    match command {
        Command::Simulate => {
            let agents = config.initial_agents(&sys, config.agents)?;
            let dt = config.dt.unwrap_or_else(|| default_dt(&sys, config.horizon));
            let traj = integrate(
                &sys,
                &Ensemble::new(agents)?,
                config.horizon,
                dt,
                config.method,
                config.record_every,
            )?;
            let checks = audit(&sys, &traj)?;
            write(out, "trajectory.csv", &traj.to_csv(&prov.comments()), &mut files)?;
            #[derive(Serialize)]
            struct Summary<'a> {
                audit: &'a crate::particle_system::InvariantAudit,
                constants: &'a crate::particle_system::TheoremConstants,
                step_size: f64,
                steps: usize,
                method: Method,
                final_time: f64,
            }
            let summary = Summary {
                audit: &checks,
                constants: &traj.constants,
                step_size: traj.step_size,
                steps: traj.diagnostics.len(),
                method: traj.method,
                final_time: traj.last().t,
            };
            let passed = checks.passed();
            write(
                out,
                "summary.json",
                &to_json(&Report {
                    command: "simulate",
                    provenance: &prov,
                    passed,
                    result: summary,
                })?,
                &mut files,
            )?;
            Ok(Outcome {
                exit_code: if passed { 0 } else { 2 },
                files,
                summary: format!(
                    "simulate: {} steps, sup norm {:.6} <= bound {:.6}, audit {}",
                    traj.diagnostics.len(),
                    traj.sup_norm,
                    traj.gronwall_bound,
                    if passed { "passed" } else { "FAILED" }
                ),
            })
        }
        Command::FastLimit => {
            let agents = config.initial_agents(&sys, config.agents)?;
            let fl = &config.fastlimit;
            let mut setup =
                FastReactionSetup::new(sys.clone(), agents.into_iter().map(|a| a.x).collect(), config.horizon);
            setup.samples = fl.samples;
            setup.limit_substeps = fl.limit_substeps;
            setup.tol = config.solver_tol;
            if let Some(b) = fl.burn_in {
                setup.burn_in = b;
            }
            let fit = fast_reaction_study(&setup, &fl.lambdas)?;
            let mut csv = String::new();
            for c in prov.comments() {
                let _ = writeln!(csv, "# {c}");
            }
            csv.push_str("lambda,gap,slope\n");
            for row in &fit.rows {
                let _ = writeln!(csv, "{},{},{}", row.lambda, row.gap, fit.slope);
            }
            write(out, "rates.csv", &csv, &mut files)?;
            write(
                out,
                "report.json",
                &to_json(&Report {
                    command: "fastlimit",
                    provenance: &prov,
                    passed: true,
                    result: &fit,
                })?,
                &mut files,
            )?;
            Ok(Outcome {
                exit_code: 0,
                files,
                summary: format!(
                    "fastlimit: slope {:.4} (R^2 {:.4}) at p={}",
                    fit.slope, fit.r_squared, fit.p
                ),
            })
        }
        Command::MeanField => {
            let mf = &config.meanfield;
            let largest = mf.sizes.iter().copied().max().unwrap_or(0);
            let setup = MeanFieldSetup {
                system: sys.clone(),
                initial: config.initial_agents(&sys, largest)?,
                horizon: config.horizon,
                samples: mf.samples,
            };
            let table = mean_field_study(&setup, &mf.sizes)?;
            let mut csv = String::new();
            for c in prov.comments() {
                let _ = writeln!(csv, "# {c}");
            }
            csv.push_str("n,sup_w1,initial_w1,rho\n");
            for row in &table.rows {
                let rho = row.rho.map_or(String::from("nan"), |v| v.to_string());
                let _ = writeln!(csv, "{},{},{},{rho}", row.n, row.sup_w1, row.initial_w1);
            }
            write(out, "rates.csv", &csv, &mut files)?;
            #[derive(Serialize)]
            struct MeanFieldReport<'a> {
                table: &'a crate::fast_reaction::MeanFieldTable,
                inversions: usize,
                rho_spread: Option<f64>,
            }
            let result = MeanFieldReport {
                table: &table,
                inversions: table.inversions(),
                rho_spread: table.rho_spread(),
            };
            write(
                out,
                "report.json",
                &to_json(&Report {
                    command: "meanfield",
                    provenance: &prov,
                    passed: true,
                    result,
                })?,
                &mut files,
            )?;
            Ok(Outcome {
                exit_code: 0,
                files,
                summary: format!(
                    "meanfield: {} pairs, {} inversions, rho spread {:?}",
                    table.rows.len(),
                    table.inversions(),
                    table.rho_spread()
                ),
            })
        }
        Command::Check => {
            let report: ProbeReport = probe_assumptions(&sys, config.probe_samples, config.seed)?;
            let passed = report.passed();
            let mut summary = format!(
                "r_eps={} R_eps={} theta_eps={} M_eps={}\n",
                prov.r_eps, prov.upper_eps, prov.theta_eps, prov.m_eps
            );
            for c in &report.checks {
                let _ = writeln!(
                    summary,
                    "{:<24} {} observed={:.6e} limit={:.6e}",
                    c.name,
                    if c.passed { "PASS" } else { "FAIL" },
                    c.observed,
                    c.limit
                );
            }
            write(
                out,
                "report.json",
                &to_json(&Report {
                    command: "check",
                    provenance: &prov,
                    passed,
                    result: &report,
                })?,
                &mut files,
            )?;
            Ok(Outcome {
                exit_code: if passed { 0 } else { 2 },
                files,
                summary,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "seed": 3,
        "space": {"nodes": 4},
        "kernel": {"type": "zero"},
        "dim": 1,
        "eps": 0.5,
        "agents": 2,
        "horizon": 0.1,
        "initial": {"sampler": "uniform_ball", "radius": 1.0, "concentration": 1.0}
    }"#;

    #[test]
    fn parses_minimal_and_hashes_stably() {
        let a = ScenarioConfig::from_json(MINIMAL).unwrap();
        let b = ScenarioConfig::from_json(MINIMAL).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let mut c = a.clone();
        c.seed = 4;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn rejects_unknown_keys_and_missing_seed() {
        let typo = MINIMAL.replace("\"horizon\"", "\"horizn\"");
        assert!(matches!(ScenarioConfig::from_json(&typo), Err(Error::Config(_))));
        let no_seed = MINIMAL.replace("\"seed\": 3,", "");
        assert!(matches!(ScenarioConfig::from_json(&no_seed), Err(Error::Config(_))));
    }

    #[test]
    fn zero_entropy_refused() {
        let text = MINIMAL.replace("\"eps\": 0.5", "\"eps\": 0.0");
        match ScenarioConfig::from_json(&text) {
            Err(e @ Error::Config(_)) => {
                assert!(e.to_string().contains("entropic box"));
                assert_eq!(exit_code(&e), 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn markov_needs_discrete_space() {
        let text = MINIMAL.replace(
            "{\"type\": \"zero\"}",
            "{\"type\": \"markov\", \"base\": 0.1, \"gain\": 0.1}",
        );
        let config = ScenarioConfig::from_json(&text).unwrap();
        assert!(config.system().is_err());
    }

    #[test]
    fn sampler_is_seeded() {
        let config = ScenarioConfig::from_json(MINIMAL).unwrap();
        let sys = config.system().unwrap();
        assert_eq!(
            config.initial_agents(&sys, 2).unwrap(),
            config.initial_agents(&sys, 2).unwrap()
        );
    }
}
