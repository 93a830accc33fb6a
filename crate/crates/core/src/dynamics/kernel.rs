//! Pay-off kernels `J` and the functionals `F_ν(x, ξ, u)` built from them.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use super::AgentState;
use crate::error::{Error, Result};
use crate::measures::euclidean;
use crate::strategy_space::StrategySpace;

/// Pay-off `J(x, u, x', u')` that may depend on the opponent's strategy.
pub trait FullKernel: Send + Sync {
    fn eval(&self, x: &[f64], u: &[f64], xp: &[f64], up: &[f64]) -> f64;

    /// An upper bound on `|J|`.
    fn sup_abs(&self) -> f64;

    /// `𝒥_Ψ(x, u_k) = (1/N) Σ_j Σ_k' η_k' ℓ_j(k') J(x, u_k, x_j, u_k')` for every node.
    fn localize(&self, space: &StrategySpace, psi: &[AgentState], x: &[f64]) -> Vec<f64> {
        let n = psi.len() as f64;
        let w = space.weights();
        (0..space.len())
            .map(|k| {
                psi.iter()
                    .map(|a| {
                        a.ell
                            .values()
                            .iter()
                            .enumerate()
                            .map(|(kp, l)| w[kp] * l * self.eval(x, space.node(k), &a.x, space.node(kp)))
                            .sum::<f64>()
                    })
                    .sum::<f64>()
                    / n
            })
            .collect()
    }

    /// [`FullKernel::localize`] at every atom position of `psi`.
    fn localize_all(&self, space: &StrategySpace, psi: &[AgentState]) -> Vec<Vec<f64>> {
        psi.par_iter().map(|a| self.localize(space, psi, &a.x)).collect()
    }
}

/// Pay-off `J(x, u, x')` seeing only the opponents' positions.
pub trait SpatialKernel: Send + Sync {
    fn eval(&self, x: &[f64], u: &[f64], xp: &[f64]) -> f64;

    fn sup_abs(&self) -> f64;

    /// `𝒥_ν(x, u_k) = (1/N) Σ_j J(x, u_k, x_j)` for every node.
    fn localize(&self, space: &StrategySpace, nu: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        let n = nu.len() as f64;
        (0..space.len())
            .map(|k| nu.iter().map(|xp| self.eval(x, space.node(k), xp)).sum::<f64>() / n)
            .collect()
    }
}

/// Integrand `f(x, ξ, u, x')` with `F_ν(x, ξ, u) = ∫ f(x, ξ, u, x') dν(x')`.
pub trait IntegralKernel: Send + Sync {
    fn f(&self, x: &[f64], xi: f64, u: &[f64], xp: &[f64]) -> f64;
    fn dxi(&self, x: &[f64], xi: f64, u: &[f64], xp: &[f64]) -> f64;
    /// Bound on `|∂_ξ f|`.
    fn c_f(&self) -> f64;
    /// Lipschitz constant of `∂_ξ f` in `ξ`.
    fn xi_lipschitz(&self) -> f64;
}

/// Closure-backed [`FullKernel`].
pub struct FnFullKernel<G> {
    pub f: G,
    pub sup: f64,
}

impl<G> FullKernel for FnFullKernel<G>
where
    G: Fn(&[f64], &[f64], &[f64], &[f64]) -> f64 + Send + Sync,
{
    fn eval(&self, x: &[f64], u: &[f64], xp: &[f64], up: &[f64]) -> f64 {
        (self.f)(x, u, xp, up)
    }

    fn sup_abs(&self) -> f64 {
        self.sup
    }
}

/// Closure-backed [`SpatialKernel`].
pub struct FnSpatialKernel<G> {
    pub f: G,
    pub sup: f64,
}

impl<G> SpatialKernel for FnSpatialKernel<G>
where
    G: Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync,
{
    fn eval(&self, x: &[f64], u: &[f64], xp: &[f64]) -> f64 {
        (self.f)(x, u, xp)
    }

    fn sup_abs(&self) -> f64 {
        self.sup
    }
}

/// Closure-backed [`IntegralKernel`].
pub struct FnIntegralKernel<G, D> {
    pub f: G,
    pub dxi: D,
    pub c_f: f64,
    pub xi_lipschitz: f64,
}

impl<G, D> IntegralKernel for FnIntegralKernel<G, D>
where
    G: Fn(&[f64], f64, &[f64], &[f64]) -> f64 + Send + Sync,
    D: Fn(&[f64], f64, &[f64], &[f64]) -> f64 + Send + Sync,
{
    fn f(&self, x: &[f64], xi: f64, u: &[f64], xp: &[f64]) -> f64 {
        (self.f)(x, xi, u, xp)
    }

    fn dxi(&self, x: &[f64], xi: f64, u: &[f64], xp: &[f64]) -> f64 {
        (self.dxi)(x, xi, u, xp)
    }

    fn c_f(&self) -> f64 {
        self.c_f
    }

    fn xi_lipschitz(&self) -> f64 {
        self.xi_lipschitz
    }
}

/// Coordination game: `J = a exp(-|x - x'|² / (2 w²)) cos(2π(u_1 - u'_1))`.
///
/// Agents gain from matching the strategy of nearby opponents.
#[derive(Debug, Clone, Copy)]
pub struct CoordinationKernel {
    pub amplitude: f64,
    pub width: f64,
}

impl CoordinationKernel {
    fn proximity(&self, x: &[f64], xp: &[f64]) -> f64 {
        let d = euclidean(x, xp);
        (-d * d / (2.0 * self.width * self.width)).exp()
    }

    /// `Σ_k η_k ℓ(k) (cos, sin)(2π u_k)` for one atom.
    fn moments(space: &StrategySpace, ell: &[f64]) -> (f64, f64) {
        let w = space.weights();
        ell.iter().enumerate().fold((0.0, 0.0), |(c, s), (k, l)| {
            let phase = TAU * space.node(k)[0];
            (c + w[k] * l * phase.cos(), s + w[k] * l * phase.sin())
        })
    }

    fn combine(&self, space: &StrategySpace, moments: &[(f64, f64)], psi: &[AgentState], x: &[f64]) -> Vec<f64> {
        let n = psi.len() as f64;
        let (mut c, mut s) = (0.0, 0.0);
        for (a, (cj, sj)) in psi.iter().zip(moments) {
            let phi = self.proximity(x, &a.x);
            c += phi * cj;
            s += phi * sj;
        }
        (0..space.len())
            .map(|k| {
                let phase = TAU * space.node(k)[0];
                self.amplitude * (phase.cos() * c + phase.sin() * s) / n
            })
            .collect()
    }
}

impl FullKernel for CoordinationKernel {
    fn eval(&self, x: &[f64], u: &[f64], xp: &[f64], up: &[f64]) -> f64 {
        self.amplitude * self.proximity(x, xp) * (TAU * (u[0] - up[0])).cos()
    }

    fn sup_abs(&self) -> f64 {
        self.amplitude.abs()
    }

    fn localize(&self, space: &StrategySpace, psi: &[AgentState], x: &[f64]) -> Vec<f64> {
        let moments: Vec<(f64, f64)> = psi.iter().map(|a| Self::moments(space, a.ell.values())).collect();
        self.combine(space, &moments, psi, x)
    }

    fn localize_all(&self, space: &StrategySpace, psi: &[AgentState]) -> Vec<Vec<f64>> {
        let moments: Vec<(f64, f64)> = psi.iter().map(|a| Self::moments(space, a.ell.values())).collect();
        psi.par_iter()
            .map(|a| self.combine(space, &moments, psi, &a.x))
            .collect()
    }
}

/// Travelling-wave pay-off: `J = a cos(2π u_1 - k Σ_c (x'_c - x_c))`.
///
/// The preferred strategy of an agent depends on where it sits relative to the
/// crowd, which couples labels and positions.
#[derive(Debug, Clone, Copy)]
pub struct WaveKernel {
    pub amplitude: f64,
    pub wavenumber: f64,
}

impl WaveKernel {
    fn phase(&self, x: &[f64]) -> f64 {
        self.wavenumber * x.iter().sum::<f64>()
    }
}

impl SpatialKernel for WaveKernel {
    fn eval(&self, x: &[f64], u: &[f64], xp: &[f64]) -> f64 {
        self.amplitude * (TAU * u[0] - (self.phase(xp) - self.phase(x))).cos()
    }

    fn sup_abs(&self) -> f64 {
        self.amplitude.abs()
    }

    fn localize(&self, space: &StrategySpace, nu: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        let n = nu.len() as f64;
        let (c, s) = nu.iter().fold((0.0, 0.0), |(c, s), xp| {
            let t = self.phase(xp);
            (c + t.cos(), s + t.sin())
        });
        let (c, s) = (c / n, s / n);
        let own = self.phase(x);
        // mean of cos(2πu - t_j + t_x) expanded in (2πu + t_x)
        (0..space.len())
            .map(|k| {
                let a = TAU * space.node(k)[0] + own;
                self.amplitude * (a.cos() * c + a.sin() * s)
            })
            .collect()
    }
}

/// The operator family a kernel induces.
#[derive(Clone)]
pub enum PayoffKernel {
    /// Replicator dynamics with the full pay-off `J(x, u, x', u')`.
    ReplicatorFull(Arc<dyn FullKernel>),
    /// `F_ν(x, ξ, u) = -𝒥_ν(x, u) ξ`.
    Undisclosed(Arc<dyn SpatialKernel>),
    /// Marginal pay-off `J(x, u, x') - J_1(ξ)` with `J_1(ξ) = κ(1 - e^{-ξ})`,
    /// i.e. `F_ν(x, ξ, u) = -𝒥_ν(x, u) ξ + κ(ξ + e^{-ξ} - 1)`.
    Penalized { base: Arc<dyn SpatialKernel>, kappa: f64 },
    /// `F_ν(x, ξ, u) = ∫ f(x, ξ, u, x') dν(x')`.
    Integral(Arc<dyn IntegralKernel>),
}

impl fmt::Debug for PayoffKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PayoffKernel::ReplicatorFull(k) => write!(f, "ReplicatorFull(sup={})", k.sup_abs()),
            PayoffKernel::Undisclosed(k) => write!(f, "Undisclosed(sup={})", k.sup_abs()),
            PayoffKernel::Penalized { base, kappa } => {
                write!(f, "Penalized(sup={}, kappa={kappa})", base.sup_abs())
            }
            PayoffKernel::Integral(k) => write!(f, "Integral(C_F={})", k.c_f()),
        }
    }
}

impl PayoffKernel {
    /// `C_F`, the bound on `|∂_ξ F|` (for the full replicator, on `|J|`).
    pub fn c_f(&self) -> f64 {
        match self {
            PayoffKernel::ReplicatorFull(k) => k.sup_abs(),
            PayoffKernel::Undisclosed(k) => k.sup_abs(),
            PayoffKernel::Penalized { base, kappa } => base.sup_abs() + kappa.abs(),
            PayoffKernel::Integral(k) => k.c_f(),
        }
    }

    /// Lipschitz constant of `ξ ↦ ∂_ξ F`.
    pub fn xi_lipschitz(&self) -> f64 {
        match self {
            PayoffKernel::ReplicatorFull(_) | PayoffKernel::Undisclosed(_) => 0.0,
            PayoffKernel::Penalized { kappa, .. } => kappa.abs(),
            PayoffKernel::Integral(k) => k.xi_lipschitz(),
        }
    }

    /// Whether `F` is linear in `ξ`, so the minimizer has a closed form.
    pub fn is_linear(&self) -> bool {
        matches!(self, PayoffKernel::Undisclosed(_))
    }

    /// Freezes `(ν, x)`; fails for the full replicator kernel, which has no `F`.
    pub fn localize(&self, space: &StrategySpace, nu: &[Vec<f64>], x: &[f64]) -> Result<LocalPayoff> {
        if nu.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        if nu.iter().any(|p| p.len() != x.len()) {
            return Err(Error::DimensionMismatch("position dimensions differ".into()));
        }
        Ok(match self {
            PayoffKernel::ReplicatorFull(_) => {
                return Err(Error::UnsupportedKernel(
                    "the full replicator kernel depends on opponents' labels".into(),
                ))
            }
            PayoffKernel::Undisclosed(k) => LocalPayoff::Linear {
                j: k.localize(space, nu, x),
            },
            PayoffKernel::Penalized { base, kappa } => LocalPayoff::Penalized {
                j: base.localize(space, nu, x),
                kappa: *kappa,
            },
            PayoffKernel::Integral(k) => LocalPayoff::Integral {
                kernel: Arc::clone(k),
                x: x.to_vec(),
                nu: nu.to_vec(),
                nodes: space.nodes().to_vec(),
            },
        })
    }
}

/// `F_ν(x, ·, ·)` with `(ν, x)` frozen.
#[derive(Clone)]
pub enum LocalPayoff {
    Linear {
        j: Vec<f64>,
    },
    Penalized {
        j: Vec<f64>,
        kappa: f64,
    },
    Integral {
        kernel: Arc<dyn IntegralKernel>,
        x: Vec<f64>,
        nu: Vec<Vec<f64>>,
        nodes: Vec<Vec<f64>>,
    },
}

impl LocalPayoff {
    /// `F_ν(x, ξ, u_k)`.
    pub fn f(&self, k: usize, xi: f64) -> f64 {
        match self {
            LocalPayoff::Linear { j } => -j[k] * xi,
            LocalPayoff::Penalized { j, kappa } => -j[k] * xi + kappa * (xi + (-xi).exp() - 1.0),
            LocalPayoff::Integral { kernel, x, nu, nodes } => {
                nu.iter().map(|xp| kernel.f(x, xi, &nodes[k], xp)).sum::<f64>() / nu.len() as f64
            }
        }
    }

    /// `∂_ξ F_ν(x, ξ, u_k)`.
    pub fn dxi(&self, k: usize, xi: f64) -> f64 {
        match self {
            LocalPayoff::Linear { j } => -j[k],
            LocalPayoff::Penalized { j, kappa } => -j[k] + kappa * (1.0 - (-xi).exp()),
            LocalPayoff::Integral { kernel, x, nu, nodes } => {
                nu.iter().map(|xp| kernel.dxi(x, xi, &nodes[k], xp)).sum::<f64>() / nu.len() as f64
            }
        }
    }

    pub fn dxi_all(&self, ell: &[f64]) -> Vec<f64> {
        ell.iter().enumerate().map(|(k, &l)| self.dxi(k, l)).collect()
    }

    /// The linear coefficient `𝒥_ν(x, ·)` when `F = -𝒥 ξ`.
    pub fn linear_payoff(&self) -> Option<&[f64]> {
        match self {
            LocalPayoff::Linear { j } => Some(j),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy_space::LabelDensity;

    #[test]
    fn coordination_localize_matches_double_sum() {
        let space = StrategySpace::uniform_grid(5, 2.0).unwrap();
        let kernel = CoordinationKernel {
            amplitude: 0.3,
            width: 0.7,
        };
        let generic = FnFullKernel {
            f: move |x: &[f64], u: &[f64], xp: &[f64], up: &[f64]| kernel.eval(x, u, xp, up),
            sup: 0.3,
        };
        let ell = LabelDensity::new(&space, vec![0.6, 1.4, 1.0, 0.8, 1.2], 0.25, 4.0).unwrap();
        let psi = vec![
            AgentState::new(vec![0.0, 0.1], ell.clone()),
            AgentState::new(vec![0.5, -0.3], LabelDensity::uniform(&space, 0.25, 4.0).unwrap()),
        ];
        let fast = kernel.localize(&space, &psi, &[0.2, 0.2]);
        let slow = generic.localize(&space, &psi, &[0.2, 0.2]);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-14);
        }
        let all = kernel.localize_all(&space, &psi);
        assert_eq!(all[0], kernel.localize(&space, &psi, &psi[0].x));
    }

    #[test]
    fn wave_localize_matches_direct_sum() {
        let space = StrategySpace::uniform_grid(4, 2.0).unwrap();
        let kernel = WaveKernel {
            amplitude: 0.5,
            wavenumber: 1.3,
        };
        let generic = FnSpatialKernel {
            f: move |x: &[f64], u: &[f64], xp: &[f64]| kernel.eval(x, u, xp),
            sup: 0.5,
        };
        let nu = vec![vec![0.1, 0.4], vec![-0.7, 0.2], vec![1.1, 0.0]];
        let fast = kernel.localize(&space, &nu, &[0.3, -0.2]);
        let slow = generic.localize(&space, &nu, &[0.3, -0.2]);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn penalized_derivative_bounded() {
        let space = StrategySpace::uniform_grid(3, 2.0).unwrap();
        let base = Arc::new(WaveKernel {
            amplitude: 0.2,
            wavenumber: 1.0,
        });
        let kernel = PayoffKernel::Penalized { base, kappa: 0.3 };
        assert!((kernel.c_f() - 0.5).abs() < 1e-15);
        assert_eq!(kernel.xi_lipschitz(), 0.3);
        let local = kernel.localize(&space, &[vec![0.0]], &[0.5]).unwrap();
        for k in 0..3 {
            for xi in [1e-6, 0.5, 1.0, 10.0] {
                assert!(local.dxi(k, xi).abs() <= kernel.c_f());
                let h = 1e-6;
                let fd = (local.f(k, xi + h) - local.f(k, xi - h.min(xi / 2.0))) / (h + h.min(xi / 2.0));
                assert!((fd - local.dxi(k, xi)).abs() < 1e-5);
            }
        }
        let full = PayoffKernel::ReplicatorFull(Arc::new(CoordinationKernel {
            amplitude: 1.0,
            width: 1.0,
        }));
        assert!(matches!(
            full.localize(&space, &[vec![0.0]], &[0.0]),
            Err(Error::UnsupportedKernel(_))
        ));
    }
}
