use nalgebra::{DMatrix, DVector, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stackbelief_core::lin_dyn::stack;
use stackbelief_core::{build_ol_br, rollout_open_loop, solve_fse, Player};
use stackbelief_sim::{
    build_intentions, build_joint_dynamics, build_leader_cost, run_rng, sample_initial, Intention, Scenario,
    ScenarioParams, SimError,
};

fn min_eig(q: &DMatrix<f64>) -> f64 {
    q.clone().symmetric_eigenvalues().min()
}

fn block(q: &DMatrix<f64>, i: usize, j: usize) -> DMatrix<f64> {
    q.view((2 * i, 2 * j), (2, 2)).into_owned()
}

#[test]
fn default_costs_are_psd_with_printed_layout() {
    let p = ScenarioParams::default();
    let l = build_leader_cost(&p).unwrap();
    assert!(min_eig(l.q()) >= -1e-9);
    let set = build_intentions(&p).unwrap();
    for (m, label) in set.models.iter().zip(["T", "I", "A"]) {
        assert_eq!(m.label(), label);
        assert!(min_eig(m.q()) >= -1e-9, "{label}");
        assert!(m.r()[(0, 0)] > 0.0);
    }
    let qi = set.get(Intention::I).q();
    assert_eq!(qi.rows(0, 2).amax(), 0.0);
    assert_eq!(qi.columns(0, 2).amax(), 0.0);
    let qa = set.get(Intention::A).q();
    assert_eq!(block(qa, 0, 0), DMatrix::identity(2, 2) * p.alpha);
    // zero blocks the printed matrices leave empty
    let qt = set.get(Intention::T).q();
    for (i, j) in [(0, 2), (0, 3), (1, 2), (1, 3), (2, 2), (3, 3)] {
        assert_eq!(block(qt, i, j).amax(), 0.0, "T block ({i},{j})");
    }
    assert_eq!(block(l.q(), 3, 3).amax(), 0.0);
}

#[test]
fn sign_violations_are_rejected() {
    assert!(Scenario::new(ScenarioParams { alpha: -0.1, ..Default::default() }).is_err());
    assert!(Scenario::new(ScenarioParams { epsilon: 0.0, ..Default::default() }).is_err());
    assert!(matches!(build_joint_dynamics(0.0, 0.5), Err(SimError::Config(_))));
    assert!(build_joint_dynamics(0.5, 1.2).is_err());
}

#[test]
fn unit_decay_keeps_references_fixed() {
    let d = build_joint_dynamics(1.0, 1.0).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let x0 = DVector::from_fn(8, |_, _| r.random_range(-20.0..20.0));
    let u: Vec<DVector<f64>> = (0..10).map(|_| DVector::from_element(1, r.random_range(-3.0..3.0))).collect();
    let traj = rollout_open_loop(&d, &x0, &u, &u).unwrap();
    for x in &traj.states {
        assert_eq!(x.rows(4, 4), x0.rows(4, 4));
    }
}

#[test]
fn uncontrolled_agents_follow_double_integrator_powers() {
    let d = build_joint_dynamics(0.3, 0.8).unwrap();
    let x0 = DVector::from_fn(8, |i, _| i as f64 - 3.5);
    let zero = vec![DVector::zeros(1); 6];
    let traj = rollout_open_loop(&d, &x0, &zero, &zero).unwrap();
    for (t, x) in traj.states.iter().enumerate() {
        let pow = Matrix2::new(1.0, t as f64, 0.0, 1.0);
        for agent in 0..2 {
            let want = pow * x0.fixed_rows::<2>(2 * agent);
            assert!((x.fixed_rows::<2>(2 * agent) - want).amax() < 1e-12);
        }
    }
}

#[test]
fn joint_stacked_rollout_matches_recursion() {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let d = build_joint_dynamics(r.random_range(0.01..=1.0), r.random_range(0.01..=1.0)).unwrap();
        let st = d.stacked(21).unwrap();
        let x0 = DVector::from_fn(8, |_, _| r.random_range(-20.0..20.0));
        let ul: Vec<_> = (0..20).map(|_| DVector::from_element(1, r.random_range(-5.0..5.0))).collect();
        let uf: Vec<_> = (0..20).map(|_| DVector::from_element(1, r.random_range(-5.0..5.0))).collect();
        let traj = rollout_open_loop(&d, &x0, &ul, &uf).unwrap();
        let diff = st.states(&x0, &stack(&ul), &stack(&uf)) - traj.stacked_states();
        assert!(diff.amax() <= 1e-9 * (1.0 + traj.stacked_states().amax()));
    }
}

#[test]
fn sampling_is_seeded_and_in_support() {
    let p = ScenarioParams::default();
    assert_eq!(sample_initial(&mut ChaCha8Rng::seed_from_u64(42), &p), sample_initial(&mut ChaCha8Rng::seed_from_u64(42), &p));
    assert_eq!(sample_initial(&mut run_rng(42, 7), &p), sample_initial(&mut run_rng(42, 7), &p));
    assert_ne!(sample_initial(&mut run_rng(42, 7), &p), sample_initial(&mut run_rng(42, 8), &p));

    let n = 10_000;
    let mut sum = [0.0f64; 8];
    let mut min_sigma = f64::MAX;
    let mut max_sigma = 0.0f64;
    for k in 0..n {
        let s = sample_initial(&mut run_rng(0, k), &p);
        for (acc, v) in sum.iter_mut().zip(&s.x0) {
            assert!(v.abs() <= 20.0);
            *acc += v;
        }
        min_sigma = min_sigma.min(s.sigma_leader.min(s.sigma_follower));
        max_sigma = max_sigma.max(s.sigma_leader.max(s.sigma_follower));
    }
    assert!(min_sigma > 0.0 && max_sigma <= 1.0);
    for s in sum {
        assert!((s / n as f64).abs() <= 0.6, "mean {}", s / n as f64);
    }
}

#[test]
fn every_sampled_game_is_valid() {
    let sc = Scenario::new(ScenarioParams::default()).unwrap();
    for k in 0..50 {
        let s = sample_initial(&mut run_rng(3, k), &sc.params);
        for truth in Intention::ALL {
            let g = sc.game(&s, truth).unwrap();
            assert_eq!(g.horizon, 20);
            assert!(solve_fse(&g.dynamics, &g.leader_cost, &g.follower_cost, 21).is_ok());
        }
    }
}

#[test]
fn intentions_give_distinct_best_responses() {
    let sc = Scenario::new(ScenarioParams::default()).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let trials = 200;
    let mut separated = 0;
    for k in 0..trials {
        let s = sample_initial(&mut run_rng(11, k), &sc.params);
        let d = build_joint_dynamics(s.sigma_leader, s.sigma_follower).unwrap();
        let ul = DVector::from_fn(20 * d.m(Player::Leader), |_, _| r.random_range(-3.0..3.0));
        let replies: Vec<DVector<f64>> = Intention::ALL
            .iter()
            .map(|&i| build_ol_br(&d, sc.intentions.get(i), 21).unwrap().respond(&s.x0(), &ul))
            .collect();
        let gap = |a: usize, b: usize| (&replies[a] - &replies[b]).norm();
        if gap(0, 1) > 1e-6 && gap(0, 2) > 1e-6 && gap(1, 2) > 1e-6 {
            separated += 1;
        }
    }
    assert!(separated * 100 >= 95 * trials, "{separated} of {trials}");
}
