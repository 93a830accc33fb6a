use std::sync::Arc;

use entropic_agents::dynamics::{
    undisclosed_operator, AgentState, EntropicSystem, FnSpatialKernel, LabelOperator, PayoffKernel, VelocityField,
    VelocityTerm, WaveKernel,
};
use entropic_agents::fast_reaction::{
    fast_reaction_study, g_value, integrate_limit, limit_velocity, mean_field_study, DeltaMap, FastReactionSetup,
    GProblem, LimitSystem, MeanFieldSetup, DEFAULT_TOL,
};
use entropic_agents::measures::{euclidean, sample_in_ball, w1_spatial, SpatialMeasure};
use entropic_agents::particle_system::{integrate, Ensemble, Method};
use entropic_agents::strategy_space::{
    entropy_drift, lp_norm, sample_density, select_box_bounds, BoxBounds, Growth, LabelDensity, StrategySpace,
};
use entropic_agents::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn zero_kernel() -> PayoffKernel {
    PayoffKernel::Undisclosed(Arc::new(FnSpatialKernel {
        f: |_: &[f64], _: &[f64], _: &[f64]| 0.0,
        sup: 0.0,
    }))
}

fn wave(amplitude: f64) -> PayoffKernel {
    PayoffKernel::Undisclosed(Arc::new(WaveKernel {
        amplitude,
        wavenumber: 1.0,
    }))
}

fn steering(dim: usize) -> VelocityField {
    let mut direction = vec![0.0; dim];
    direction[0] = 1.0;
    VelocityField::new(
        dim,
        vec![
            VelocityTerm::Attraction(1.0),
            VelocityTerm::Steering {
                gain: 2.0,
                center: 0.5,
                direction,
            },
        ],
    )
    .unwrap()
}

fn bounds(eps: f64) -> BoxBounds {
    select_box_bounds(eps, 0.1, Growth::Identity).unwrap()
}

fn limit(space: &StrategySpace, velocity: VelocityField, kernel: PayoffKernel, eps: f64) -> LimitSystem {
    LimitSystem {
        space: space.clone(),
        velocity,
        delta: DeltaMap::new(space.clone(), kernel, eps, bounds(eps), DEFAULT_TOL),
    }
}

fn positions(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| sample_in_ball(rng, dim, 1.0)).collect()
}

#[test]
fn g_is_convex_on_random_pairs() {
    let space = StrategySpace::uniform_grid(7, 2.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let b = bounds(0.5);
    let kernel = PayoffKernel::Penalized {
        base: Arc::new(WaveKernel {
            amplitude: 0.3,
            wavenumber: 2.0,
        }),
        kappa: 0.4,
    };
    let problem = GProblem::new(&space, &kernel, &positions(&mut rng, 3, 1), &[0.2], 0.5, b).unwrap();
    for _ in 0..200 {
        let l1 = sample_density(&space, &mut rng, b.r_eps, b.upper_eps, 0.5).unwrap();
        let l2 = sample_density(&space, &mut rng, b.r_eps, b.upper_eps, 0.5).unwrap();
        let mid: Vec<f64> = l1
            .values()
            .iter()
            .zip(l2.values())
            .map(|(a, c)| 0.5 * (a + c))
            .collect();
        let lhs = g_value(&problem, &mid).unwrap();
        let rhs = 0.5 * g_value(&problem, l1.values()).unwrap() + 0.5 * g_value(&problem, l2.values()).unwrap();
        assert!(lhs <= rhs + 1e-14, "{lhs} > {rhs}");
    }
}

#[test]
fn zero_payoff_gives_uniform_delta_everywhere() {
    let space = StrategySpace::uniform_grid(6, 2.0).unwrap();
    let map = DeltaMap::new(space, zero_kernel(), 0.7, bounds(0.7), DEFAULT_TOL);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let nu = positions(&mut rng, 4, 2);
        let x = sample_in_ball(&mut rng, 2, 3.0);
        assert!(map
            .get(&x, &nu)
            .unwrap()
            .values()
            .iter()
            .all(|v| (v - 1.0).abs() < 1e-12));
    }
}

#[test]
fn delta_continuity_sweep() {
    let space = StrategySpace::uniform_grid(8, 2.0).unwrap();
    let map = DeltaMap::new(space.clone(), wave(0.05), 0.5, bounds(0.5), DEFAULT_TOL);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let nu1 = positions(&mut rng, 5, 2);
        let nu2: Vec<Vec<f64>> = nu1
            .iter()
            .map(|x| x.iter().map(|v| v + rng.gen_range(-0.05..0.05)).collect())
            .collect();
        let x1 = sample_in_ball(&mut rng, 2, 1.0);
        let x2: Vec<f64> = x1.iter().map(|v| v + rng.gen_range(-0.05..0.05)).collect();
        let d1 = map.get(&x1, &nu1).unwrap();
        let d2 = map.get(&x2, &nu2).unwrap();
        let diff: Vec<f64> = d1.values().iter().zip(d2.values()).map(|(a, b)| a - b).collect();
        let w = w1_spatial(&SpatialMeasure::new(nu1).unwrap(), &SpatialMeasure::new(nu2).unwrap())
            .unwrap()
            .0;
        worst = worst.max(lp_norm(&space, &diff, 2.0) / (euclidean(&x1, &x2) + w));
    }
    // Δ is Lipschitz with a constant of order amplitude * wavenumber / eps
    assert!(worst.is_finite() && worst < 10.0, "fitted A = {worst}");
}

#[test]
fn stationary_labels_have_no_fast_drift() {
    let space = StrategySpace::uniform_grid(10, 2.0).unwrap();
    let eps = 0.5;
    let kernel = wave(0.05);
    let map = DeltaMap::new(space.clone(), kernel.clone(), eps, bounds(eps), 1e-13);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let nu = positions(&mut rng, 4, 2);
        let x = sample_in_ball(&mut rng, 2, 1.0);
        let ell = map.get(&x, &nu).unwrap();
        assert!(ell.box_margin() > 0.0, "box must be inactive for this check");
        let t = undisclosed_operator(&space, &kernel, &nu, &AgentState::new(x, ell.clone())).unwrap();
        let h = entropy_drift(&space, ell.values()).unwrap();
        let drift: Vec<f64> = t.values.iter().zip(&h).map(|(a, b)| a + eps * b).collect();
        assert!(lp_norm(&space, &drift, 2.0) < 1e-9, "{drift:?}");
    }
}

#[test]
fn state_free_velocity_passes_through() {
    let space = StrategySpace::uniform_grid(5, 2.0).unwrap();
    let v = VelocityField::new(2, vec![VelocityTerm::Constant(vec![0.3, -1.0])]).unwrap();
    let lim = limit(&space, v, wave(0.05), 0.5);
    let w = limit_velocity(&lim, &[vec![0.0, 1.0], vec![2.0, 0.0]], &[0.5, 0.5]).unwrap();
    assert_eq!(w, vec![0.3, -1.0]);
}

#[test]
fn single_atom_uses_uniform_label() {
    let space = StrategySpace::uniform_grid(4, 2.0).unwrap();
    let v = VelocityField::new(
        1,
        vec![VelocityTerm::Steering {
            gain: 2.0,
            center: 0.2,
            direction: vec![1.0],
        }],
    )
    .unwrap();
    let lim = limit(&space, v.clone(), zero_kernel(), 0.5);
    let x = vec![0.7];
    let w = limit_velocity(&lim, std::slice::from_ref(&x), &x).unwrap();
    let uniform = AgentState::new(x.clone(), LabelDensity::uniform(&space, 0.5, 2.0).unwrap());
    let expected = v.eval(&space, std::slice::from_ref(&uniform), &uniform);
    assert!((w[0] - expected[0]).abs() < 1e-12);
    // midpoint grid on [0, 1]: ∫ u dη = 1/2
    assert!((w[0] - 2.0 * (0.5 - 0.2)).abs() < 1e-12);
}

#[test]
fn limit_velocity_is_lipschitz_and_sublinear() {
    let space = StrategySpace::uniform_grid(6, 2.0).unwrap();
    let lim = limit(&space, steering(2), wave(0.05), 0.5);
    let m_w = lim.m_w();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut xi = 0.0f64;
    for _ in 0..30 {
        let nu = positions(&mut rng, 4, 2);
        let x = sample_in_ball(&mut rng, 2, 5.0);
        let x2: Vec<f64> = x.iter().map(|v| v + rng.gen_range(-0.01..0.01)).collect();
        let w = limit_velocity(&lim, &nu, &x).unwrap();
        let w2 = limit_velocity(&lim, &nu, &x2).unwrap();
        xi = xi.max(euclidean(&w, &w2) / euclidean(&x, &x2));
        let m1 = nu
            .iter()
            .map(|p| entropic_agents::measures::euclidean_norm(p))
            .sum::<f64>()
            / nu.len() as f64;
        let norm = entropic_agents::measures::euclidean_norm(&w);
        assert!(norm <= m_w * (1.0 + entropic_agents::measures::euclidean_norm(&x) + m1));
    }
    assert!(xi.is_finite() && xi < 10.0, "fitted Xi = {xi}");
}

#[test]
fn limit_trajectories_zero_and_straight() {
    let space = StrategySpace::uniform_grid(4, 2.0).unwrap();
    let still = limit(&space, VelocityField::zero(2), wave(0.05), 0.5);
    let x0 = vec![vec![0.1, 0.2], vec![-0.3, 0.4]];
    let traj = integrate_limit(&still, &x0, 1.0, 0.1, 1).unwrap();
    assert!(traj.positions.iter().all(|p| *p == x0));

    let drift = limit(
        &space,
        VelocityField::new(2, vec![VelocityTerm::Constant(vec![1.0, -2.0])]).unwrap(),
        wave(0.05),
        0.5,
    );
    let traj = integrate_limit(&drift, &[vec![0.0, 0.0]], 1.0, 0.05, 1).unwrap();
    for (t, p) in traj.times.iter().zip(&traj.positions) {
        assert!((p[0][0] - t).abs() < 1e-12 && (p[0][1] + 2.0 * t).abs() < 1e-12);
    }
    assert!(traj.sup_norm <= traj.bound);
}

fn fast_system(space: StrategySpace, operator: LabelOperator) -> EntropicSystem {
    EntropicSystem::new(space, steering(2), operator, 0.5, 1.0).unwrap()
}

#[test]
fn full_system_tracks_limit_at_large_lambda() {
    let space = StrategySpace::uniform_grid(8, 2.0).unwrap();
    let kernel = wave(0.05);
    let sys = fast_system(space.clone(), LabelOperator::Undisclosed(kernel.clone()))
        .with_lambda(1000.0)
        .unwrap();
    let lim = LimitSystem {
        space: space.clone(),
        velocity: sys.velocity.clone(),
        delta: DeltaMap::new(space.clone(), kernel, sys.eps, sys.bounds, DEFAULT_TOL),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x0 = positions(&mut rng, 6, 2);
    let reduced = integrate_limit(&lim, &x0, 0.5, 0.005, 100).unwrap();
    let start: Vec<AgentState> = lim.lift(&x0).unwrap();
    let full = integrate(
        &sys,
        &Ensemble::new(start).unwrap(),
        0.5,
        sys.euler_step_bound() / 4.0,
        Method::Rk4,
        usize::MAX,
    )
    .unwrap();
    let dev = full
        .last()
        .agents
        .iter()
        .zip(reduced.positions.last().unwrap())
        .map(|(a, x)| euclidean(&a.x, x))
        .fold(0.0, f64::max);
    assert!(dev <= 1.0 / 1000f64.sqrt(), "deviation {dev}");
}

#[test]
fn entropy_only_labels_relax_fast() {
    let space = StrategySpace::uniform_grid(4, 2.0).unwrap();
    let sys = fast_system(space.clone(), LabelOperator::Zero);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x0 = positions(&mut rng, 4, 2);
    let labels: Vec<LabelDensity> = (0..4)
        .map(|_| sample_density(&space, &mut rng, sys.bounds.r_eps, sys.bounds.upper_eps, 1.0).unwrap())
        .collect();
    let mut setup = FastReactionSetup::new(sys, x0, 0.5);
    setup.initial_labels = Some(labels);
    setup.samples = 20;
    let fit = fast_reaction_study(&setup, &[1.0, 10.0, 100.0, 1000.0]).unwrap();
    assert!(fit.slope <= -0.5, "{fit:?}");
}

#[test]
fn gap_decreases_with_lambda() {
    let space = StrategySpace::uniform_grid(8, 2.0).unwrap();
    let sys = fast_system(space, LabelOperator::Undisclosed(wave(0.05)));
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut setup = FastReactionSetup::new(sys, positions(&mut rng, 8, 2), 0.5);
    setup.samples = 25;
    let lambdas = [10.0, 40.0, 160.0, 1000.0];
    let fit = fast_reaction_study(&setup, &lambdas).unwrap();
    for i in 0..lambdas.len() {
        for j in 0..lambdas.len() {
            if lambdas[j] >= 4.0 * lambdas[i] {
                assert!(fit.gaps[j] <= fit.gaps[i] * 1.1, "{:?}", fit.gaps);
            }
        }
    }
    assert!(fit.slope < 0.0);
}

#[test]
fn rate_study_rejects_thin_lambda_sets() {
    let space = StrategySpace::uniform_grid(4, 2.0).unwrap();
    let sys = fast_system(space, LabelOperator::Undisclosed(wave(0.05)));
    let setup = FastReactionSetup::new(sys, vec![vec![0.0, 0.0]], 0.1);
    assert!(matches!(
        fast_reaction_study(&setup, &[10.0, 100.0, 1000.0]),
        Err(Error::InsufficientSamples(_))
    ));
    assert!(matches!(
        fast_reaction_study(&setup, &[10.0, 20.0, 40.0, 80.0]),
        Err(Error::InsufficientSamples(_))
    ));
}

#[test]
fn replicated_atoms_give_zero_mean_field_distance() {
    let space = StrategySpace::uniform_grid(4, 2.0).unwrap();
    let sys = fast_system(space.clone(), LabelOperator::Undisclosed(wave(0.05)));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let base: Vec<AgentState> = positions(&mut rng, 4, 2)
        .into_iter()
        .map(|x| AgentState::new(x, sample_density(&space, &mut rng, 0.6, 1.5, 1.0).unwrap()))
        .collect();
    let initial: Vec<AgentState> = (0..4).flat_map(|_| base.clone()).collect();
    let setup = MeanFieldSetup {
        system: sys,
        initial,
        horizon: 0.5,
        samples: 5,
    };
    let table = mean_field_study(&setup, &[4, 8, 16]).unwrap();
    for row in &table.rows {
        assert!(row.sup_w1 < 1e-12, "{row:?}");
        assert_eq!(row.rho, None);
    }
    assert!(matches!(
        mean_field_study(&setup, &[4, 12]),
        Err(Error::InsufficientSamples(_))
    ));
    assert!(matches!(
        mean_field_study(&setup, &[4]),
        Err(Error::InsufficientSamples(_))
    ));
}
