mod common;

use common::*;
use nalgebra::DVector;
use proptest::prelude::*;
use stackbelief_core::lin_dyn::split;
use stackbelief_core::{
    build_ol_br, check_stage_optimality, eval_cost, follower_lifted_gradient, follower_response, fse_cost,
    leader_lifted_cost, leader_lifted_gradient, resolve_truncated_ol, rollout_feedback, rollout_open_loop,
    solve_fse, solve_olse, CostModel, Dynamics, Game, Player,
};

fn x(v: f64) -> DVector<f64> {
    DVector::from_element(1, v)
}

#[test]
fn example1_olse_and_best_responses() {
    let (game, b_prime) = example1();
    let x0 = x(7.6);
    let star = solve_olse(&game, &game.follower_cost, &x0, 6).unwrap();
    for (g, w) in star.iter().zip([-4.6, -0.86, 0.06, 0.19, 0.12]) {
        assert_close(*g, w, 0.01, "u^L under b*");
    }
    let prime = solve_olse(&game, &b_prime, &x0, 6).unwrap();
    for (g, w) in prime.iter().zip([-2.28, 0.4, 0.73, 0.52, 0.25]) {
        assert_close(*g, w, 0.01, "u^L under b'");
    }

    let br = build_ol_br(&game.dynamics, &game.follower_cost, 6).unwrap();
    for (g, w) in br.respond(&x0, &star).iter().zip([-7.53, -4.14, -2.29, -1.21, -0.53]) {
        assert_close(*g, w, 0.01, "true BR to b* plan");
    }
    for (g, w) in br.respond(&x0, &prime).iter().zip([-13.43, -7.57, -4.25, -2.27, -0.98]) {
        assert_close(*g, w, 0.01, "true BR to b' plan");
    }
}

#[test]
fn example1_truncated_resolves() {
    let (game, b_prime) = example1();
    for (x3, belief, want_l, want_f) in [
        (1.22, &game.follower_cost, [-1.06, -0.3], [-0.21, -0.07]),
        (2.13, &b_prime, [-1.56, -0.41], [-0.6, -0.23]),
    ] {
        let ul = resolve_truncated_ol(&game, belief, &x(x3), 3).unwrap();
        let uf = build_ol_br(&game.dynamics, &game.follower_cost, 3).unwrap().respond(&x(x3), &ul);
        for i in 0..2 {
            assert_close(ul[i], want_l[i], 0.01, "re-solved leader control");
            assert_close(uf[i], want_f[i], 0.01, "re-solved follower response");
        }
    }
    assert_eq!(resolve_truncated_ol(&game, &b_prime, &x(1.0), 5).unwrap().len(), 0);
    assert!(resolve_truncated_ol(&game, &b_prime, &x(1.0), 0).is_err());
}

/// One-step problem: the follower reacts to `a x + b^L u^L` with gain
/// `k = q_F b_F / (r_F + q_F b_F^2)`, leaving `c = 1 - b_F k` of it; the
/// leader then minimises `q_L c^2 (a x + b_L u)^2 + r_L u^2`.
fn one_step(a: f64, bl: f64, bf: f64, ql: f64, rl: f64, qf: f64, rf: f64) -> (f64, f64) {
    let k = qf * bf / (rf + qf * bf * bf);
    let c = 1.0 - bf * k;
    let kl = ql * c * c * bl * a / (rl + ql * c * c * bl * bl);
    (kl, k * (a - bl * kl))
}

#[test]
fn last_step_resolve_matches_hand_algebra() {
    let mut r = rng(4);
    for _ in 0..20 {
        let (a, bl, bf) = (r_in(&mut r, 0.5, 2.0), r_in(&mut r, 0.2, 2.0), r_in(&mut r, 0.2, 2.0));
        let (ql, rl, qf, rf) = (r_in(&mut r, 0.5, 20.0), r_in(&mut r, 0.5, 20.0), r_in(&mut r, 0.5, 20.0), r_in(&mut r, 0.5, 20.0));
        let game = Game::new(
            Dynamics::scalar(a, bl, bf).unwrap(),
            CostModel::scalar("L", ql, rl).unwrap(),
            CostModel::scalar("F", qf, rf).unwrap(),
            4,
        )
        .unwrap();
        let xt = r_in(&mut r, -5.0, 5.0);
        let u = resolve_truncated_ol(&game, &game.follower_cost, &x(xt), 3).unwrap();
        let (kl, kf) = one_step(a, bl, bf, ql, rl, qf, rf);
        assert_close(u[0], -kl * xt, 1e-10 * (1.0 + xt.abs()), "one-step leader control");

        let fse = solve_fse(&game.dynamics, &game.leader_cost, &game.follower_cost, 2).unwrap();
        assert_close(fse.leader_gains[0][0], kl, 1e-10, "one-step leader gain");
        assert_close(fse.follower_gains[0][0], kf, 1e-10, "one-step follower gain");
    }
}

fn r_in(r: &mut impl rand::Rng, lo: f64, hi: f64) -> f64 {
    r.random_range(lo..hi)
}

#[test]
fn zero_state_gives_zero_plans() {
    let (game, b) = example1();
    assert_eq!(solve_olse(&game, &b, &x(0.0), 6).unwrap().amax(), 0.0);
    let br = build_ol_br(&game.dynamics, &b, 6).unwrap();
    assert_eq!(br.respond(&x(0.0), &DVector::zeros(5)).amax(), 0.0);
    let (g2, _) = example2();
    let sol = solve_fse(&g2.dynamics, &g2.leader_cost, &g2.follower_cost, 9).unwrap();
    assert_eq!(fse_cost(&g2, &sol, &x(0.0)).unwrap(), 0.0);
}

#[test]
fn olse_is_time_inconsistent_on_example1() {
    let (game, _) = example1();
    let x0 = x(7.6);
    let full = solve_olse(&game, &game.follower_cost, &x0, 6).unwrap();
    let br = build_ol_br(&game.dynamics, &game.follower_cost, 6).unwrap();
    let traj = rollout_open_loop(&game.dynamics, &x0, &split(&full, 1), &split(&br.respond(&x0, &full), 1)).unwrap();
    let again = resolve_truncated_ol(&game, &game.follower_cost, &traj.states[3], 3).unwrap();
    let gap = (full[3] - again[0]).abs().min((full[4] - again[1]).abs());
    assert!(gap > 0.1, "tail plans {:?} vs {:?}", &full.as_slice()[3..], again.as_slice());
}

#[test]
fn example2_gains_and_costs() {
    let (game, b_prime) = example2();
    let star = solve_fse(&game.dynamics, &game.leader_cost, &game.follower_cost, 9).unwrap();
    let kl = [0.31, 0.31, 0.31, 0.31, 0.32, 0.32, 0.33, 0.3];
    let kf = [0.27, 0.27, 0.27, 0.26, 0.26, 0.26, 0.25, 0.19];
    for t in 0..8 {
        assert_close(star.leader_gains[t][0], kl[t], 0.01, "K^L under b*");
        assert_close(star.follower_reaction[t][0], kf[t], 0.01, "K^F under b*");
    }
    let prime = solve_fse(&game.dynamics, &game.leader_cost, &b_prime, 9).unwrap();
    assert_close(prime.leader_gains[0][0], 0.01, 0.01, "first K^L under b'");
    assert_close(prime.leader_gains[7][0], 0.02, 0.01, "last K^L under b'");
    let reply = follower_response(&game.dynamics, &game.follower_cost, &prime.leader_gains).unwrap();
    assert_close(reply.reaction[0][0], 0.37, 0.01, "first K^F under b'");
    assert_close(reply.reaction[7][0], 0.19, 0.01, "last K^F under b'");

    let x0 = x(-5.6);
    let j_star = fse_cost(&game, &star, &x0).unwrap();
    let j_prime = fse_cost(&game, &prime, &x0).unwrap();
    assert_close(j_star, 347.2, 0.5, "cost under b*");
    assert_close(j_prime, 299.4, 0.5, "cost under b'");
    assert!(j_prime < j_star);
}

#[test]
fn example2_stage_optimality_and_negative_control() {
    let (game, _) = example2();
    let sol = solve_fse(&game.dynamics, &game.leader_cost, &game.follower_cost, 9).unwrap();
    let mut r = rng(9);
    for t in 0..8 {
        assert!(check_stage_optimality(&sol, &game, t, 200, &mut r).unwrap().passed, "stage {t}");
    }
    let mut bad = sol.clone();
    bad.leader_gains[0][(0, 0)] += 0.2;
    assert!(!check_stage_optimality(&bad, &game, 0, 50, &mut r).unwrap().passed);
    assert!(check_stage_optimality(&sol, &game, 8, 1, &mut r).is_err());
}

#[test]
fn fse_boundary_and_symmetry() {
    let mut r = rng(12);
    let game = game(&mut r, 4, 2, 2, 7);
    let sol = solve_fse(&game.dynamics, &game.leader_cost, &game.follower_cost, 8).unwrap();
    assert_eq!(sol.leader_values.last().unwrap(), game.leader_cost.q());
    assert_eq!(sol.follower_values.last().unwrap(), game.follower_cost.q());
    for v in sol.leader_values.iter().chain(&sol.follower_values) {
        assert!((v - v.transpose()).amax() <= 1e-9 * v.amax().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ol_best_response_is_stationary_and_minimal(seed in any::<u64>()) {
        let mut r = rng(seed);
        let game = game(&mut r, 3, 2, 2, 6);
        let br = build_ol_br(&game.dynamics, &game.follower_cost, 7).unwrap();
        let x0 = vec(&mut r, 3, 3.0);
        let ul = vec(&mut r, 12, 2.0);
        let uf = br.respond(&x0, &ul);
        let grad = follower_lifted_gradient(&game.dynamics, &game.follower_cost, &x0, &ul, &uf).unwrap();
        prop_assert!(grad.norm() <= 1e-7 * (1.0 + uf.norm()));

        let cost_of = |uf: &DVector<f64>| {
            let t = rollout_open_loop(&game.dynamics, &x0, &split(&ul, 2), &split(uf, 2)).unwrap();
            eval_cost(&t, Player::Follower, &game.follower_cost, true).unwrap()
        };
        let base = cost_of(&uf);
        for _ in 0..20 {
            let d = vec(&mut r, 12, 1.0);
            let d = d.normalize() * 1e-3;
            prop_assert!(cost_of(&(&uf + d)) >= base - 1e-9 * base.max(1.0));
        }
    }

    #[test]
    fn olse_is_optimal_against_belief(seed in any::<u64>()) {
        let mut r = rng(seed);
        let game = game(&mut r, 3, 1, 2, 5);
        let belief = cost(&mut r, "b", 3, 2);
        let x0 = vec(&mut r, 3, 4.0);
        let ul = solve_olse(&game, &belief, &x0, 6).unwrap();
        let br = build_ol_br(&game.dynamics, &belief, 6).unwrap();
        let g = leader_lifted_gradient(&game.dynamics, &game.leader_cost, &br, &x0, &ul).unwrap();
        prop_assert!(g.norm() <= 1e-7 * (1.0 + ul.norm()));
        let base = leader_lifted_cost(&game.dynamics, &game.leader_cost, &br, &x0, &ul).unwrap();
        for k in 0..200 {
            let scale = [1e-3, 1e-2, 1e-1][k % 3];
            let pert = &ul + vec(&mut r, 5, scale);
            let j = leader_lifted_cost(&game.dynamics, &game.leader_cost, &br, &x0, &pert).unwrap();
            prop_assert!(j >= base - 1e-9 * base.max(1.0));
        }
    }

    #[test]
    fn true_belief_is_best_after_update(seed in any::<u64>(), tau in 1usize..6) {
        let mut r = rng(seed);
        let game = game(&mut r, 2, 1, 1, 6);
        let x0 = vec(&mut r, 2, 4.0);
        let star = stackbelief_core::run_with_update(&game, &x0, &game.follower_cost, &game.follower_cost, tau,
            stackbelief_core::InfoStructure::OpenLoop).unwrap();
        let post_star = star.breakdown.post_update;
        for _ in 0..50 {
            let b2 = cost(&mut r, "b2", 2, 1);
            let run = stackbelief_core::run_with_update(&game, &x0, &game.follower_cost, &b2, tau,
                stackbelief_core::InfoStructure::OpenLoop).unwrap();
            prop_assert!((run.breakdown.pre_update - star.breakdown.pre_update).abs() <= 1e-9 * (1.0 + star.breakdown.pre_update));
            prop_assert!(post_star <= run.breakdown.post_update + 1e-8 * post_star.max(1.0));
        }
    }

    #[test]
    fn fse_is_time_consistent(seed in any::<u64>(), t in 1usize..7) {
        let mut r = rng(seed);
        let game = game(&mut r, 3, 2, 1, 7);
        let belief = cost(&mut r, "b", 3, 1);
        let full = solve_fse(&game.dynamics, &game.leader_cost, &belief, 8).unwrap();
        let tail = solve_fse(&game.dynamics, &game.leader_cost, &belief, 8 - t).unwrap();
        let want = full.tail(t);
        for (a, b) in tail.leader_gains.iter().zip(&want.leader_gains) {
            prop_assert!((a - b).amax() <= 1e-9 * (1.0 + b.amax()));
        }
        for (a, b) in tail.follower_gains.iter().zip(&want.follower_gains) {
            prop_assert!((a - b).amax() <= 1e-9 * (1.0 + b.amax()));
        }
    }

    #[test]
    fn fse_values_equal_rollout_cost_to_go(seed in any::<u64>(), t in 0usize..6) {
        let mut r = rng(seed);
        let game = game(&mut r, 3, 1, 2, 6);
        let sol = solve_fse(&game.dynamics, &game.leader_cost, &game.follower_cost, 7).unwrap();
        let xt = vec(&mut r, 3, 3.0);
        let traj = rollout_feedback(&game.dynamics, &xt, &sol.leader_gains[t..], &sol.follower_gains[t..]).unwrap();
        for (player, cost, values) in [
            (Player::Leader, &game.leader_cost, &sol.leader_values),
            (Player::Follower, &game.follower_cost, &sol.follower_values),
        ] {
            let rolled = eval_cost(&traj, player, cost, true).unwrap();
            let v = xt.dot(&(&values[t] * &xt));
            prop_assert!((rolled - v).abs() <= 1e-6 * v.abs().max(1e-6), "{player:?}: {rolled} vs {v}");
        }
    }

    #[test]
    fn fse_stage_optimality_on_random_games(seed in any::<u64>()) {
        let mut r = rng(seed);
        let game = game(&mut r, 3, 2, 1, 5);
        let sol = solve_fse(&game.dynamics, &game.leader_cost, &game.follower_cost, 6).unwrap();
        for t in 0..5 {
            prop_assert!(check_stage_optimality(&sol, &game, t, 40, &mut r).unwrap().passed);
        }
    }
}

#[test]
fn follower_reply_is_identity_on_own_belief() {
    let mut r = rng(31);
    let game = game(&mut r, 4, 2, 2, 6);
    let sol = solve_fse(&game.dynamics, &game.leader_cost, &game.follower_cost, 7).unwrap();
    let reply = follower_response(&game.dynamics, &game.follower_cost, &sol.leader_gains).unwrap();
    for (a, b) in reply.gains.iter().zip(&sol.follower_gains) {
        assert!((a - b).amax() < 1e-10);
    }
}
