//! Quadrature model of the label space `(U, η)`, bounded probability
//! densities on it, and the entropy functional with its analytic bounds.
//!
//! Every integral over `U` is a weighted sum over the grid nodes, so all of
//! the inequalities below are exact statements about finite vectors.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance on `|Σ η_k ℓ_k - 1|` for a valid density.
pub const TOL_MASS: f64 = 1e-10;
/// Largest mass defect `renormalize` will silently repair.
pub const MAX_MASS_CORRECTION: f64 = 1e-6;
/// Box violations below this are treated as floating-point noise and clamped.
pub const BOX_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Discrete,
}

/// Grid nodes, quadrature weights and integrability exponent of the label space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace", into = "RawSpace")]
pub struct StrategySpace {
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
    metric: Metric,
    p: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpace {
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
    metric: Metric,
    p: f64,
}

impl TryFrom<RawSpace> for StrategySpace {
    type Error = Error;

    fn try_from(raw: RawSpace) -> Result<Self> {
        StrategySpace::new(raw.nodes, raw.weights, raw.metric, raw.p)
    }
}

impl From<StrategySpace> for RawSpace {
    fn from(space: StrategySpace) -> Self {
        RawSpace {
            nodes: space.nodes,
            weights: space.weights,
            metric: space.metric,
            p: space.p,
        }
    }
}

impl StrategySpace {
    pub fn new(nodes: Vec<Vec<f64>>, weights: Vec<f64>, metric: Metric, p: f64) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidSpace("no nodes".into()));
        }
        if nodes.len() != weights.len() {
            return Err(Error::InvalidSpace(format!(
                "{} nodes but {} weights",
                nodes.len(),
                weights.len()
            )));
        }
        let dim = nodes[0].len();
        if nodes.iter().any(|n| n.len() != dim || n.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidSpace(
                "nodes must be finite points of equal dimension".into(),
            ));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidSpace(
                "every weight must be positive (full support)".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSpace(format!("weights sum to {total}, expected 1")));
        }
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::InvalidSpace(format!("exponent p={p} must lie in [1, inf)")));
        }
        Ok(StrategySpace {
            nodes,
            weights,
            metric,
            p,
        })
    }

    /// Midpoint grid of `m` nodes on `[0, 1]` with equal weights.
    pub fn uniform_grid(m: usize, p: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidSpace("grid needs at least one node".into()));
        }
        let nodes = (0..m).map(|k| vec![(k as f64 + 0.5) / m as f64]).collect();
        Self::new(nodes, vec![1.0 / m as f64; m], Metric::Euclidean, p)
    }

    /// Finite label set `{1, ..., h}` with uniform weights and the discrete metric.
    pub fn discrete(h: usize, p: f64) -> Result<Self> {
        if h == 0 {
            return Err(Error::InvalidSpace("label set must be non-empty".into()));
        }
        let nodes = (1..=h).map(|k| vec![k as f64]).collect();
        Self::new(nodes, vec![1.0 / h as f64; h], Metric::Discrete, p)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Same nodes and weights with another exponent.
    pub fn with_p(&self, p: f64) -> Result<Self> {
        Self::new(self.nodes.clone(), self.weights.clone(), self.metric, p)
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        match self.metric {
            Metric::Discrete => {
                if i == j {
                    0.0
                } else {
                    1.0
                }
            }
            Metric::Euclidean => self.nodes[i]
                .iter()
                .zip(&self.nodes[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Quadrature integral `Σ_k η_k f_k`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// `L^p(U, η)` norm with the space's own exponent.
    pub fn norm(&self, f: &[f64]) -> f64 {
        lp_norm(self, f, self.p)
    }

    pub(crate) fn check_len(&self, f: &[f64], what: &str) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "{what} has {} entries, space has {} nodes",
                f.len(),
                self.len()
            )));
        }
        Ok(())
    }
}

/// `(Σ_k η_k |f_k|^p)^{1/p}`, or `max_k |f_k|` for `p = ∞`.
pub fn lp_norm(space: &StrategySpace, f: &[f64], p: f64) -> f64 {
    debug_assert_eq!(f.len(), space.len());
    if p.is_infinite() {
        return f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    }
    if p == 1.0 {
        return space.weights.iter().zip(f).map(|(w, v)| w * v.abs()).sum();
    }
    if p == 2.0 {
        return space.weights.iter().zip(f).map(|(w, v)| w * v * v).sum::<f64>().sqrt();
    }
    space
        .weights
        .iter()
        .zip(f)
        .map(|(w, v)| w * v.abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

/// Subtracts the quadrature mean in place and returns the removed residual.
pub fn remove_mean(space: &StrategySpace, f: &mut [f64]) -> f64 {
    let residual = space.integrate(f);
    for v in f.iter_mut() {
        *v -= residual;
    }
    residual
}

/// A probability density with respect to `η`, confined to `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDensity {
    values: Vec<f64>,
    lower: f64,
    upper: f64,
}

impl LabelDensity {
    pub fn new(space: &StrategySpace, values: Vec<f64>, lower: f64, upper: f64) -> Result<Self> {
        Self::with_tolerance(space, values, lower, upper, TOL_MASS)
    }

    pub fn with_tolerance(
        space: &StrategySpace,
        values: Vec<f64>,
        lower: f64,
        upper: f64,
        tol_mass: f64,
    ) -> Result<Self> {
        space.check_len(&values, "density")?;
        if !((0.0..1.0).contains(&lower) && upper > 1.0) {
            return Err(Error::InvalidBounds { r: lower, upper });
        }
        if let Some((k, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteValue(format!("density value {v} at node {k}")));
        }
        if let Some((k, v)) = values.iter().enumerate().find(|(_, &v)| v < lower || v > upper) {
            return Err(Error::InvalidDensity(format!(
                "value {v} at node {k} outside [{lower}, {upper}]"
            )));
        }
        let mass = space.integrate(&values);
        if (mass - 1.0).abs() > tol_mass {
            return Err(Error::InvalidDensity(format!("mass {mass} differs from 1")));
        }
        Ok(LabelDensity { values, lower, upper })
    }

    /// `ℓ ≡ 1`, which lies in every admissible box.
    pub fn uniform(space: &StrategySpace, lower: f64, upper: f64) -> Result<Self> {
        Self::new(space, vec![1.0; space.len()], lower, upper)
    }

    pub(crate) fn from_parts_unchecked(values: Vec<f64>, lower: f64, upper: f64) -> Self {
        LabelDensity { values, lower, upper }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn mass(&self, space: &StrategySpace) -> f64 {
        space.integrate(&self.values)
    }

    /// Smallest distance to the box, `min_k min(ℓ_k - r, R - ℓ_k)`.
    pub fn box_margin(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| (v - self.lower).min(self.upper - v))
            .fold(f64::INFINITY, f64::min)
    }
}

fn x_log_x(t: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t * t.ln()
    }
}

/// Negative entropy `I(ℓ) = Σ_k η_k ℓ_k log ℓ_k`, with `0 log 0 = 0`.
pub fn negative_entropy(space: &StrategySpace, values: &[f64]) -> Result<f64> {
    space.check_len(values, "density")?;
    if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::NonFiniteValue(format!("negative entropy undefined at {v}")));
    }
    Ok(space.weights.iter().zip(values).map(|(w, &v)| w * x_log_x(v)).sum())
}

/// Entropy drift `ℋ(ℓ)_k = ℓ_k (I(ℓ) - log ℓ_k)`, corrected to exact zero mean.
pub fn entropy_drift(space: &StrategySpace, values: &[f64]) -> Result<Vec<f64>> {
    space.check_len(values, "density")?;
    if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::NonFiniteValue(format!(
            "entropy drift needs strictly positive density, found {v}"
        )));
    }
    let info = negative_entropy(space, values)?;
    let mut drift: Vec<f64> = values.iter().map(|&v| v * (info - v.ln())).collect();
    remove_mean(space, &mut drift);
    Ok(drift)
}

/// Analytic bounds on `I` and `ℋ` over `C_{r,R}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyBounds {
    pub alpha: f64,
    pub k: f64,
    pub h_low: f64,
    pub h_high: f64,
}

pub fn entropy_bounds(r: f64, upper: f64) -> Result<EntropyBounds> {
    if !(r > 0.0 && r < 1.0 && upper > 1.0 && upper.is_finite()) {
        return Err(Error::InvalidBounds { r, upper });
    }
    let alpha = (upper - 1.0) * r / (upper - r);
    let k = alpha * r.ln() + (1.0 - alpha) * upper.ln();
    Ok(EntropyBounds {
        alpha,
        k,
        h_low: -upper * upper.ln(),
        h_high: upper * k + std::f64::consts::E.recip(),
    })
}

/// Lipschitz constant of `ℋ` on `C_{r,R}` in any `L^p` norm:
/// `(R + 1) L' + k_{r,R}` with `L' = max(|1 + log r|, |1 + log R|)`.
pub fn entropy_lipschitz(r: f64, upper: f64) -> Result<f64> {
    let b = entropy_bounds(r, upper)?;
    let slope = (1.0 + r.ln()).abs().max((1.0 + upper.ln()).abs());
    Ok((upper + 1.0) * slope + b.k)
}

/// Monotone growth function `ω` controlling the pointwise operator bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    /// `ω(s) = s`
    #[default]
    Identity,
    /// `ω(s) = s / (1 + s)`
    Saturating,
}

impl Growth {
    pub fn eval(self, s: f64) -> f64 {
        match self {
            Growth::Identity => s,
            Growth::Saturating => s / (1.0 + s),
        }
    }
}

/// The invariant box `[r_ε, R_ε]` together with the data that certifies it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub r_eps: f64,
    pub upper_eps: f64,
    pub eps: f64,
    pub c_t: f64,
    pub omega: Growth,
}

impl BoxBounds {
    /// Lower-bound inequality: `ε log(3 / (4r)) ≥ C_T ω(4r/3) / r`.
    pub fn lower_condition_holds(eps: f64, c_t: f64, omega: Growth, r: f64) -> bool {
        eps * (3.0 / (4.0 * r)).ln() >= c_t * omega.eval(4.0 * r / 3.0) / r
    }

    /// Upper-bound inequality: `α_{r,R} log(R/r) ≥ 2 C_T ω(R) / (ε R)`.
    pub fn upper_condition_holds(eps: f64, c_t: f64, omega: Growth, r: f64, upper: f64) -> bool {
        match entropy_bounds(r, upper) {
            Ok(b) => b.alpha * (upper / r).ln() >= 2.0 * c_t * omega.eval(upper) / (eps * upper),
            Err(_) => false,
        }
    }

    /// Re-evaluates both defining inequalities.
    pub fn certify(&self) -> bool {
        self.r_eps > 0.0
            && self.r_eps < 1.0
            && self.upper_eps > 1.0
            && Self::lower_condition_holds(self.eps, self.c_t, self.omega, self.r_eps)
            && Self::upper_condition_holds(self.eps, self.c_t, self.omega, self.r_eps, self.upper_eps)
    }

    pub fn entropy(&self) -> EntropyBounds {
        entropy_bounds(self.r_eps, self.upper_eps).expect("certified box has valid ordering")
    }
}

const MAX_DYADIC_EXPONENT: i32 = 64;

/// Largest dyadic `r_ε = 2^{-j}` and then smallest dyadic `R_ε = 2^j`
/// satisfying the two box inequalities, for `1 ≤ j ≤ 64`.
pub fn select_box_bounds(eps: f64, c_t: f64, omega: Growth) -> Result<BoxBounds> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Config(format!("entropic weight eps={eps} must be positive")));
    }
    if !(c_t >= 0.0) || !c_t.is_finite() {
        return Err(Error::Config(format!("operator bound C_T={c_t} must be non-negative")));
    }
    let r_eps = (1..=MAX_DYADIC_EXPONENT)
        .map(|j| 2f64.powi(-j))
        .find(|&r| BoxBounds::lower_condition_holds(eps, c_t, omega, r))
        .ok_or_else(|| Error::NoFeasibleBounds(format!("no r = 2^-j (j <= 64) for eps={eps}, C_T={c_t}")))?;
    let upper_eps = (1..=MAX_DYADIC_EXPONENT)
        .map(|j| 2f64.powi(j))
        .find(|&upper| BoxBounds::upper_condition_holds(eps, c_t, omega, r_eps, upper))
        .ok_or_else(|| Error::NoFeasibleBounds(format!("no R = 2^j (j <= 64) for eps={eps}, C_T={c_t}, r={r_eps}")))?;
    let bounds = BoxBounds {
        r_eps,
        upper_eps,
        eps,
        c_t,
        omega,
    };
    if !bounds.certify() {
        return Err(Error::NoFeasibleBounds("selected pair failed re-certification".into()));
    }
    Ok(bounds)
}

/// Repairs small mass drift while keeping `r ≤ ℓ ≤ R`.
///
/// Excess mass is removed in proportion to the headroom `ℓ_k - r`, missing mass
/// is added in proportion to `R - ℓ_k`. Returns the density and the total
/// correction (mass shift plus clamped box noise).
pub fn renormalize(space: &StrategySpace, mut values: Vec<f64>, r: f64, upper: f64) -> Result<(LabelDensity, f64)> {
    space.check_len(&values, "density")?;
    let mut clamped = 0.0;
    let mut worst = 0.0_f64;
    for v in values.iter_mut() {
        if !v.is_finite() {
            return Err(Error::NonFiniteValue(format!("density value {v}")));
        }
        let excess = (r - *v).max(*v - upper);
        if excess > 0.0 {
            worst = worst.max(excess);
            clamped += excess;
            *v = v.clamp(r, upper);
        }
    }
    if worst > BOX_SLACK {
        return Err(Error::StageLeftBox { violation: worst });
    }
    let defect = space.integrate(&values) - 1.0;
    if defect.abs() > MAX_MASS_CORRECTION {
        return Err(Error::CorrectionTooLarge {
            magnitude: defect.abs(),
            limit: MAX_MASS_CORRECTION,
        });
    }
    if defect != 0.0 {
        let headroom: Vec<f64> = if defect > 0.0 {
            values.iter().map(|v| v - r).collect()
        } else {
            values.iter().map(|v| upper - v).collect()
        };
        let total = space.integrate(&headroom);
        if total > 0.0 {
            for (v, h) in values.iter_mut().zip(&headroom) {
                *v = (*v - defect * h / total).clamp(r, upper);
            }
        }
    }
    Ok((
        LabelDensity::from_parts_unchecked(values, r, upper),
        defect.abs() + clamped,
    ))
}

/// Bregman (KL) projection of the tilted weights `exp(log_w)` onto
/// `{ Σ η ℓ = 1, r ≤ ℓ ≤ R }`: `ℓ_k = clip(c e^{log_w_k}, r, R)` with the
/// scalar `c` fixed by the mass constraint. Returns the density and whether
/// any component was clipped.
pub fn project_tilt(space: &StrategySpace, log_w: &[f64], r: f64, upper: f64) -> Result<(Vec<f64>, bool)> {
    space.check_len(log_w, "log-weights")?;
    if !(r < 1.0 && upper > 1.0 && r >= 0.0) {
        return Err(Error::InvalidBounds { r, upper });
    }
    if log_w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("non-finite tilt weight".into()));
    }
    let max_lw = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_lw = log_w.iter().cloned().fold(f64::INFINITY, f64::min);
    let eval = |log_c: f64| -> f64 {
        space
            .weights
            .iter()
            .zip(log_w)
            .map(|(w, lw)| w * (log_c + lw).exp().clamp(r, upper))
            .sum()
    };
    // at lo every value clips to r (mass r < 1), at hi every value clips to R
    let mut lo = if r > 0.0 { r.ln() - max_lw } else { -745.0 - max_lw };
    let mut hi = upper.ln() - min_lw;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eval(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let log_c = 0.5 * (lo + hi);
    let mut values: Vec<f64> = log_w.iter().map(|lw| (log_c + lw).exp()).collect();
    // exact mass on the free set for the active pattern found by bisection
    let mut fixed_mass = 0.0;
    let mut free_mass = 0.0;
    let mut clipped = false;
    for (v, w) in values.iter_mut().zip(&space.weights) {
        if *v <= r {
            *v = r;
            fixed_mass += w * r;
            clipped = true;
        } else if *v >= upper {
            *v = upper;
            fixed_mass += w * upper;
            clipped = true;
        } else {
            free_mass += w * *v;
        }
    }
    if free_mass > 0.0 {
        let scale = (1.0 - fixed_mass) / free_mass;
        for v in values.iter_mut() {
            if *v > r && *v < upper {
                *v = (*v * scale).clamp(r, upper);
            }
        }
    }
    Ok((values, clipped))
}

/// Random density in `C_{r,R}`: Gamma(`concentration`) weights, projected onto
/// the box by a clipped tilt. Small concentrations give spiky densities.
pub fn sample_density<G: Rng + ?Sized>(
    space: &StrategySpace,
    rng: &mut G,
    r: f64,
    upper: f64,
    concentration: f64,
) -> Result<LabelDensity> {
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|e| Error::Config(format!("label concentration {concentration}: {e}")))?;
    let log_w: Vec<f64> = (0..space.len())
        .map(|_| gamma.sample(rng).max(f64::MIN_POSITIVE).ln())
        .collect();
    let (values, _) = project_tilt(space, &log_w, r, upper)?;
    renormalize(space, values, r, upper).map(|(d, _)| d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node() -> StrategySpace {
        StrategySpace::uniform_grid(2, 2.0).unwrap()
    }

    #[test]
    fn space_rejects_bad_weights() {
        assert!(StrategySpace::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.4], Metric::Euclidean, 2.0).is_err());
        assert!(StrategySpace::new(vec![vec![0.0], vec![1.0]], vec![1.0, 0.0], Metric::Euclidean, 2.0).is_err());
        assert!(StrategySpace::new(vec![vec![0.0]], vec![1.0], Metric::Euclidean, 0.5).is_err());
    }

    #[test]
    fn space_json_round_trip() {
        let space = StrategySpace::discrete(3, 1.5).unwrap();
        let text = serde_json::to_string(&space).unwrap();
        assert!(text.contains("\"metric\":\"discrete\""));
        let back: StrategySpace = serde_json::from_str(&text).unwrap();
        assert_eq!(back, space);
        let bad = r#"{"nodes":[[0.0]],"weights":[0.5],"metric":"euclidean","p":2.0}"#;
        assert!(serde_json::from_str::<StrategySpace>(bad).is_err());
    }

    #[test]
    fn entropy_of_uniform_is_zero() {
        let space = StrategySpace::uniform_grid(7, 2.0).unwrap();
        assert_eq!(negative_entropy(&space, &[1.0; 7]).unwrap(), 0.0);
        assert!(entropy_drift(&space, &[1.0; 7]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn entropy_two_node_hand_values() {
        let space = two_node();
        let ell = [1.5, 0.5];
        let expected = 0.5 * (1.5 * 1.5f64.ln() + 0.5 * 0.5f64.ln());
        let info = negative_entropy(&space, &ell).unwrap();
        assert!((info - expected).abs() < 1e-15);
        let drift = entropy_drift(&space, &ell).unwrap();
        assert!((drift[0] - 1.5 * (expected - 1.5f64.ln())).abs() < 1e-15);
        assert!((drift[1] - 0.5 * (expected - 0.5f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn entropy_errors_on_negative_values() {
        let space = two_node();
        assert!(matches!(
            negative_entropy(&space, &[2.5, -0.5]),
            Err(Error::NonFiniteValue(_))
        ));
        assert!(matches!(
            entropy_drift(&space, &[2.0, 0.0]),
            Err(Error::NonFiniteValue(_))
        ));
        assert_eq!(negative_entropy(&space, &[2.0, 0.0]).unwrap(), 2f64.ln());
    }

    #[test]
    fn entropy_bounds_hand_values() {
        let b = entropy_bounds(0.5, 2.0).unwrap();
        assert!((b.alpha - 1.0 / 3.0).abs() < 1e-15);
        assert!((b.k - (0.5f64.ln() / 3.0 + 2.0 * 2f64.ln() / 3.0)).abs() < 1e-15);
        assert!(b.h_low < 0.0 && b.h_high > 0.0);
        let near = entropy_bounds(0.5, 1.0 + 1e-9).unwrap();
        assert!(near.alpha < 1e-8 && near.k.abs() < 1e-8);
        assert!(matches!(entropy_bounds(1.2, 2.0), Err(Error::InvalidBounds { .. })));
        assert!(matches!(entropy_bounds(0.5, 0.9), Err(Error::InvalidBounds { .. })));
    }

    #[test]
    fn k_positive_on_parameter_sweep() {
        for i in 1..10 {
            for j in 1..=10 {
                let r = i as f64 / 10.0;
                let upper = 1.0 + j as f64 * 0.7;
                assert!(entropy_bounds(r, upper).unwrap().k > 0.0, "r={r} R={upper}");
            }
        }
    }

    #[test]
    fn box_bounds_zero_operator() {
        let b = select_box_bounds(1.0, 0.0, Growth::Identity).unwrap();
        assert_eq!((b.r_eps, b.upper_eps), (0.5, 2.0));
    }

    #[test]
    fn box_bounds_self_certify_and_monotone() {
        let mut prev: Option<BoxBounds> = None;
        for eps in [1.0, 0.5, 0.25] {
            let b = select_box_bounds(eps, 0.25, Growth::Identity).unwrap();
            assert!(b.certify());
            if let Some(p) = prev {
                assert!(b.r_eps <= p.r_eps && b.upper_eps >= p.upper_eps);
            }
            prev = Some(b);
        }
        let sat = select_box_bounds(0.5, 1.0, Growth::Saturating).unwrap();
        assert!(sat.certify());
    }

    #[test]
    fn box_bounds_infeasible_when_operator_dominates() {
        // C_T / eps = 2 forces R beyond 2^64 with the identity growth
        assert!(matches!(
            select_box_bounds(0.5, 1.0, Growth::Identity),
            Err(Error::NoFeasibleBounds(_))
        ));
        assert!(select_box_bounds(0.0, 1.0, Growth::Identity).is_err());
    }

    #[test]
    fn lp_norm_values() {
        let space = two_node();
        assert!((lp_norm(&space, &[1.0, -1.0], 2.0) - 1.0).abs() < 1e-15);
        for p in [1.0, 1.5, 2.0, 3.0, f64::INFINITY] {
            assert!((lp_norm(&space, &[-3.0, -3.0], p) - 3.0).abs() < 1e-14);
        }
        assert_eq!(lp_norm(&space, &[0.25, -2.0], f64::INFINITY), 2.0);
    }

    #[test]
    fn renormalize_cases() {
        let space = StrategySpace::uniform_grid(4, 2.0).unwrap();
        let (d, c) = renormalize(&space, vec![0.5, 1.5, 1.25, 0.75], 0.25, 4.0).unwrap();
        assert_eq!(d.values(), &[0.5, 1.5, 1.25, 0.75]);
        assert_eq!(c, 0.0);

        let (d, c) = renormalize(&space, vec![1.0 + 1e-9; 4], 0.25, 4.0).unwrap();
        assert!(d.values().iter().all(|v| (v - 1.0).abs() < 1e-15));
        assert!((c - 1e-9).abs() < 1e-15);

        let err = renormalize(&space, vec![1.001; 4], 0.25, 4.0).unwrap_err();
        assert!(matches!(err, Error::CorrectionTooLarge { .. }));

        let (d, _) = renormalize(&space, vec![0.25, 0.25, 2.0, 1.5 - 1e-8], 0.25, 4.0).unwrap();
        assert!((d.mass(&space) - 1.0).abs() < 1e-15);
        assert!(d.values().iter().all(|&v| (0.25..=4.0).contains(&v)));
    }

    #[test]
    fn tilt_projection_respects_box_and_mass() {
        let space = StrategySpace::uniform_grid(5, 2.0).unwrap();
        let (v, clipped) = project_tilt(&space, &[0.0, 0.0, 0.0, 0.0, 0.0], 0.5, 2.0).unwrap();
        assert!(!clipped);
        assert!(v.iter().all(|x| (x - 1.0).abs() < 1e-14));
        let (v, clipped) = project_tilt(&space, &[10.0, 0.0, -3.0, 1.0, 0.0], 0.5, 2.0).unwrap();
        assert!(clipped);
        assert!((space.integrate(&v) - 1.0).abs() < 1e-14);
        assert_eq!(v[0], 2.0);
        assert!(v.iter().all(|&x| (0.5..=2.0).contains(&x)));
    }
}
