//! Uniform atomic measures on the state space `Y = R^d x L^p(U, η)` and on its
//! spatial marginal, with exact Wasserstein-1 distances.
//!
//! For two uniform measures with the same number of atoms the optimal coupling
//! can be taken to be a permutation, so `W1` reduces to a linear assignment
//! problem which is solved exactly.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::AgentState;
use crate::error::{Error, Result};
use crate::strategy_space::StrategySpace;

/// Atom-splitting guard: `lcm(n1, n2) * max(n1, n2)` may not exceed this.
pub const MAX_SPLIT_SIZE: usize = 1_000_000;

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

pub fn euclidean_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `‖y‖ = |x| + ‖ℓ‖_{L^p}`.
pub fn state_norm(space: &StrategySpace, y: &AgentState) -> f64 {
    euclidean_norm(&y.x) + space.norm(y.ell.values())
}

/// `|x1 - x2| + ‖ℓ1 - ℓ2‖_{L^p}`.
pub fn state_distance(space: &StrategySpace, y1: &AgentState, y2: &AgentState) -> Result<f64> {
    if y1.x.len() != y2.x.len() {
        return Err(Error::DimensionMismatch(format!(
            "positions of dimension {} and {}",
            y1.x.len(),
            y2.x.len()
        )));
    }
    space.check_len(y1.ell.values(), "first label")?;
    space.check_len(y2.ell.values(), "second label")?;
    Ok(state_distance_unchecked(space, y1, y2))
}

pub(crate) fn state_distance_unchecked(space: &StrategySpace, y1: &AgentState, y2: &AgentState) -> f64 {
    let diff: Vec<f64> = y1
        .ell
        .values()
        .iter()
        .zip(y2.ell.values())
        .map(|(a, b)| a - b)
        .collect();
    euclidean(&y1.x, &y2.x) + space.norm(&diff)
}

/// Uniform sample from the closed euclidean ball of radius `radius` in `R^dim`.
pub fn sample_in_ball<G: Rng + ?Sized>(rng: &mut G, dim: usize, radius: f64) -> Vec<f64> {
    let direction: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = euclidean_norm(&direction);
    let scale = radius * rng.gen::<f64>().powf(1.0 / dim as f64) / norm.max(f64::MIN_POSITIVE);
    direction.iter().map(|v| v * scale).collect()
}

/// `(1/N) Σ_i δ_{y_i}` on the product state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    atoms: Vec<AgentState>,
}

impl EmpiricalMeasure {
    pub fn new(atoms: Vec<AgentState>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        let dim = atoms[0].x.len();
        let m = atoms[0].ell.values().len();
        if atoms.iter().any(|a| a.x.len() != dim || a.ell.values().len() != m) {
            return Err(Error::DimensionMismatch("atoms of differing shape".into()));
        }
        Ok(EmpiricalMeasure { atoms })
    }

    pub fn atoms(&self) -> &[AgentState] {
        &self.atoms
    }

    pub fn into_atoms(self) -> Vec<AgentState> {
        self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn spatial_marginal(&self) -> SpatialMeasure {
        SpatialMeasure {
            atoms: self.atoms.iter().map(|a| a.x.clone()).collect(),
        }
    }

    /// `m_1(Λ) = (1/N) Σ_i ‖y_i‖`.
    pub fn first_moment(&self, space: &StrategySpace) -> f64 {
        self.atoms.iter().map(|a| state_norm(space, a)).sum::<f64>() / self.atoms.len() as f64
    }
}

/// `(1/N) Σ_i δ_{x_i}` on `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialMeasure {
    atoms: Vec<Vec<f64>>,
}

impl SpatialMeasure {
    pub fn new(atoms: Vec<Vec<f64>>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        let dim = atoms[0].len();
        if atoms.iter().any(|a| a.len() != dim) {
            return Err(Error::DimensionMismatch("positions of differing dimension".into()));
        }
        Ok(SpatialMeasure { atoms })
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn first_moment(&self) -> f64 {
        self.atoms.iter().map(|a| euclidean_norm(a)).sum::<f64>() / self.atoms.len() as f64
    }

    pub fn mean(&self) -> Vec<f64> {
        mean_position(self.atoms.iter().map(|a| a.as_slice()), self.dim())
    }
}

pub(crate) fn mean_position<'a>(points: impl Iterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
    let mut sum = vec![0.0; dim];
    let mut count = 0usize;
    for p in points {
        for (s, v) in sum.iter_mut().zip(p) {
            *s += v;
        }
        count += 1;
    }
    sum.iter().map(|s| s / count as f64).collect()
}

/// Optimal permutation coupling between two (possibly split) uniform measures.
///
/// Indices refer to the split measures when the atom counts differ: atom `i`
/// of a measure with `n` atoms is repeated `lcm / n` times consecutively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub assignment: Vec<usize>,
    pub costs: Vec<f64>,
    pub cost: f64,
}

impl TransportPlan {
    /// Edge list `i,sigma_i,cost_i` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,sigma_i,cost_i\n");
        for (i, (j, c)) in self.assignment.iter().zip(&self.costs).enumerate() {
            let _ = writeln!(out, "{i},{j},{c}");
        }
        out
    }
}

/// Exact minimum-cost perfect matching on a dense `n x n` matrix (row-major).
///
/// Shortest augmenting paths with dual potentials, `O(n^3)`. Returns the column
/// assigned to each row.
pub fn solve_assignment(n: usize, cost: &[f64]) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost matrix must be n x n");
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; column 0 is the virtual root of each augmentation
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            let row = &cost[(i0 - 1) * n..i0 * n];
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[row_of[j] - 1] = j - 1;
    }
    assignment
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn w1_generic<T>(a: &[T], b: &[T], dist: impl Fn(&T, &T) -> f64) -> Result<(f64, TransportPlan)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    let (n1, n2) = (a.len(), b.len());
    let n = n1 / gcd(n1, n2) * n2;
    if n.saturating_mul(n1.max(n2)) > MAX_SPLIT_SIZE {
        return Err(Error::MeasureTooLarge {
            size: n,
            limit: MAX_SPLIT_SIZE,
        });
    }
    let base: Vec<f64> = a
        .iter()
        .flat_map(|p| b.iter().map(|q| dist(p, q)).collect::<Vec<_>>())
        .collect();
    let (rep1, rep2) = (n / n1, n / n2);
    let mut cost = Vec::with_capacity(n * n);
    for i in 0..n {
        let row = &base[(i / rep1) * n2..(i / rep1 + 1) * n2];
        cost.extend((0..n).map(|j| row[j / rep2]));
    }
    let assignment = solve_assignment(n, &cost);
    let costs: Vec<f64> = assignment.iter().enumerate().map(|(i, &j)| cost[i * n + j]).collect();
    let total = costs.iter().sum::<f64>() / n as f64;
    Ok((
        total,
        TransportPlan {
            assignment,
            costs,
            cost: total,
        },
    ))
}

/// Exact `W1` on the product space with ground metric `|x - x'| + ‖ℓ - ℓ'‖_{L^p}`.
pub fn w1(space: &StrategySpace, mu1: &EmpiricalMeasure, mu2: &EmpiricalMeasure) -> Result<(f64, TransportPlan)> {
    if let (Some(a), Some(b)) = (mu1.atoms.first(), mu2.atoms.first()) {
        state_distance(space, a, b)?;
    }
    w1_generic(&mu1.atoms, &mu2.atoms, |p, q| state_distance_unchecked(space, p, q))
}

/// Exact `W1` between spatial measures with the euclidean ground metric.
pub fn w1_spatial(nu1: &SpatialMeasure, nu2: &SpatialMeasure) -> Result<(f64, TransportPlan)> {
    if nu1.dim() != nu2.dim() {
        return Err(Error::DimensionMismatch(
            "spatial measures of differing dimension".into(),
        ));
    }
    w1_generic(&nu1.atoms, &nu2.atoms, |p, q| euclidean(p, q))
}

/// A test function `φ` for the dual formulation of `W1`.
pub type Witness<'a, T> = &'a dyn Fn(&T) -> f64;

fn dual_generic<T>(a: &[T], b: &[T], dist: impl Fn(&T, &T) -> f64, witnesses: &[Witness<'_, T>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    let pool: Vec<&T> = a.iter().chain(b.iter()).collect();
    let mut best = 0.0_f64;
    for (index, phi) in witnesses.iter().enumerate() {
        let values: Vec<f64> = pool.iter().map(|p| phi(p)).collect();
        for i in 0..pool.len() {
            for j in (i + 1)..pool.len() {
                let d = dist(pool[i], pool[j]);
                let diff = (values[i] - values[j]).abs();
                if diff > d + 1e-12 * (1.0 + d) {
                    return Err(Error::WitnessNotLipschitz {
                        index,
                        ratio: if d > 0.0 { diff / d } else { f64::INFINITY },
                    });
                }
            }
        }
        let m1 = values[..a.len()].iter().sum::<f64>() / a.len() as f64;
        let m2 = values[a.len()..].iter().sum::<f64>() / b.len() as f64;
        let value = m1 - m2;
        if index == 0 || value > best {
            best = value;
        }
    }
    Ok(best)
}

/// Kantorovich lower bound `max_φ ∫φ dμ1 - ∫φ dμ2` over certified 1-Lipschitz witnesses.
pub fn w1_dual_check(
    space: &StrategySpace,
    mu1: &EmpiricalMeasure,
    mu2: &EmpiricalMeasure,
    witnesses: &[Witness<'_, AgentState>],
) -> Result<f64> {
    dual_generic(
        &mu1.atoms,
        &mu2.atoms,
        |p, q| state_distance_unchecked(space, p, q),
        witnesses,
    )
}

pub fn w1_spatial_dual_check(
    nu1: &SpatialMeasure,
    nu2: &SpatialMeasure,
    witnesses: &[Witness<'_, Vec<f64>>],
) -> Result<f64> {
    dual_generic(&nu1.atoms, &nu2.atoms, |p, q| euclidean(p, q), witnesses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy_space::LabelDensity;

    fn agent(space: &StrategySpace, x: Vec<f64>, ell: Vec<f64>) -> AgentState {
        AgentState::new(x, LabelDensity::new(space, ell, 0.25, 4.0).unwrap())
    }

    #[test]
    fn assignment_small_known() {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = solve_assignment(3, &cost);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i * 3 + j]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn distance_basics() {
        let space = StrategySpace::uniform_grid(2, 2.0).unwrap();
        let a = agent(&space, vec![0.0, 0.0], vec![1.5, 0.5]);
        let b = agent(&space, vec![1.0, 0.0], vec![1.5, 0.5]);
        assert_eq!(state_distance(&space, &a, &a).unwrap(), 0.0);
        assert_eq!(state_distance(&space, &a, &b).unwrap(), 1.0);
        let c = agent(&space, vec![1.0], vec![1.5, 0.5]);
        assert!(matches!(
            state_distance(&space, &a, &c),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn w1_two_diracs_and_dual_attainment() {
        let space = StrategySpace::uniform_grid(2, 2.0).unwrap();
        let a = agent(&space, vec![0.0], vec![1.5, 0.5]);
        let b = agent(&space, vec![2.0], vec![0.5, 1.5]);
        let mu1 = EmpiricalMeasure::new(vec![a.clone()]).unwrap();
        let mu2 = EmpiricalMeasure::new(vec![b.clone()]).unwrap();
        let (value, plan) = w1(&space, &mu1, &mu2).unwrap();
        assert_eq!(value, state_distance(&space, &a, &b).unwrap());
        assert_eq!(plan.assignment, vec![0]);
        let phi = |y: &AgentState| state_distance_unchecked(&space, y, &b);
        let zero = |_: &AgentState| 0.0;
        assert_eq!(w1_dual_check(&space, &mu1, &mu2, &[&zero]).unwrap(), 0.0);
        assert_eq!(w1_dual_check(&space, &mu1, &mu2, &[&phi]).unwrap(), value);
    }

    #[test]
    fn w1_identical_is_zero_and_lcm_split() {
        let nu = SpatialMeasure::new(vec![vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(w1_spatial(&nu, &nu).unwrap().0, 0.0);
        let single = SpatialMeasure::new(vec![vec![1.0]]).unwrap();
        let (value, plan) = w1_spatial(&nu, &single).unwrap();
        assert!((value - 1.0).abs() < 1e-15);
        assert_eq!(plan.assignment.len(), 3);
        let two = SpatialMeasure::new(vec![vec![0.0], vec![2.0]]).unwrap();
        let (value, plan) = w1_spatial(&nu, &two).unwrap();
        assert_eq!(plan.assignment.len(), 6);
        // 0->0 (0), 1->{0,2} (1), 3->2 (1) over masses 1/3 each
        assert!((value - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn w1_guard_and_empty() {
        assert!(matches!(SpatialMeasure::new(vec![]), Err(Error::EmptyMeasure)));
        let a = SpatialMeasure::new((0..997).map(|i| vec![i as f64]).collect()).unwrap();
        let b = SpatialMeasure::new((0..991).map(|i| vec![i as f64]).collect()).unwrap();
        assert!(matches!(w1_spatial(&a, &b), Err(Error::MeasureTooLarge { .. })));
    }

    #[test]
    fn non_lipschitz_witness_rejected() {
        let nu1 = SpatialMeasure::new(vec![vec![0.0]]).unwrap();
        let nu2 = SpatialMeasure::new(vec![vec![1.0]]).unwrap();
        let steep = |x: &Vec<f64>| 2.0 * x[0];
        assert!(matches!(
            w1_spatial_dual_check(&nu1, &nu2, &[&steep]),
            Err(Error::WitnessNotLipschitz { index: 0, .. })
        ));
    }

    #[test]
    fn first_moment_values() {
        let space = StrategySpace::uniform_grid(3, 1.0).unwrap();
        let mu = EmpiricalMeasure::new(vec![agent(&space, vec![0.0, 0.0], vec![1.0; 3])]).unwrap();
        assert_eq!(mu.first_moment(&space), 1.0);
        let plan_csv = w1(&space, &mu, &mu).unwrap().1.to_csv();
        assert_eq!(plan_csv, "i,sigma_i,cost_i\n0,0,0\n");
    }
}
