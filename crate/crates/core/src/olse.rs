//! Open-loop Stackelberg equilibrium in closed form.
//!
//! On a horizon of `L` states the follower's best response to a leader
//! sequence is affine, `u^F = Ĝ u^L + Ĥ x0`, with
//! `Ĝ = -(G^F'Q̄^F G^F + R̄^F)^{-1} G^F'Q̄^F G^L` and `Ĥ` the same with `H`.
//! Substituting it into the leader's lifted cost leaves an unconstrained
//! quadratic in `u^L` whose normal matrix is SPD whenever `R^L > 0`.
//! All inverses are Cholesky solves.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lin_dyn::{LtiGameDynamics, Player, StackedMatrices};
use crate::lq_game::{QuadCostModel, StackelbergGame};
use crate::scalar::{lit, Real};

/// Affine open-loop best-response map of one follower model.
#[derive(Debug, Clone, PartialEq)]
pub struct OlBrMap<S: Real> {
    pub g_hat: DMatrix<S>,
    pub h_hat: DMatrix<S>,
    pub belief_label: String,
    pub horizon_len: usize,
}

impl<S: Real> OlBrMap<S> {
    /// Follower controls (stacked) answering the stacked leader controls.
    pub fn respond(&self, x0: &DVector<S>, u_leader: &DVector<S>) -> DVector<S> {
        &self.g_hat * u_leader + &self.h_hat * x0
    }
}

/// `Q̄ M` for block-diagonal `Q̄` built from `q`, without forming `Q̄`.
fn lifted_left_mul<S: Real>(q: &DMatrix<S>, m: &DMatrix<S>) -> DMatrix<S> {
    let n = q.nrows();
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for k in 0..m.nrows() / n {
        let block = q * m.rows(k * n, n);
        out.rows_mut(k * n, n).copy_from(&block);
    }
    out
}

fn lifted_left_mul_vec<S: Real>(q: &DMatrix<S>, v: &DVector<S>) -> DVector<S> {
    let n = q.nrows();
    let mut out = DVector::zeros(v.len());
    for k in 0..v.len() / n {
        let block = q * v.rows(k * n, n);
        out.rows_mut(k * n, n).copy_from(&block);
    }
    out
}

fn add_lifted_diag<S: Real>(target: &mut DMatrix<S>, r: &DMatrix<S>) {
    let m = r.nrows();
    for k in 0..target.nrows() / m {
        let mut view = target.view_mut((k * m, k * m), (m, m));
        view += r;
    }
}

fn steps_of(horizon_len: usize) -> usize {
    horizon_len.saturating_sub(1)
}

fn control_len<S: Real>(dynamics: &LtiGameDynamics<S>, player: Player, v: &DVector<S>, horizon_len: usize) -> Result<()> {
    let want = dynamics.m(player) * steps_of(horizon_len);
    if v.len() != want {
        return Err(Error::Dimension(format!(
            "{player:?} control vector has length {}, expected {want}",
            v.len()
        )));
    }
    Ok(())
}

fn horizon_from_leader<S: Real>(dynamics: &LtiGameDynamics<S>, u_leader: &DVector<S>) -> Result<usize> {
    let m = dynamics.m(Player::Leader);
    if !u_leader.len().is_multiple_of(m) {
        return Err(Error::Dimension(format!("leader controls of length {} not a multiple of {m}", u_leader.len())));
    }
    Ok(u_leader.len() / m + 1)
}

/// Builds the follower's open-loop best-response map for `follower_cost`
/// over `horizon_len` states.
pub fn build_ol_br<S: Real>(
    dynamics: &LtiGameDynamics<S>,
    follower_cost: &QuadCostModel<S>,
    horizon_len: usize,
) -> Result<OlBrMap<S>> {
    follower_cost.check_dims(dynamics, Player::Follower)?;
    let st = dynamics.stacked(horizon_len)?;
    let (mf, ml, n) = (dynamics.m(Player::Follower), dynamics.m(Player::Leader), dynamics.n());
    let steps = steps_of(horizon_len);
    if steps == 0 {
        return Ok(OlBrMap {
            g_hat: DMatrix::zeros(0, 0),
            h_hat: DMatrix::zeros(0, n),
            belief_label: follower_cost.label().to_string(),
            horizon_len,
        });
    }

    let qg = lifted_left_mul(follower_cost.q(), &st.g_follower);
    let mut normal = st.g_follower.transpose() * &qg;
    add_lifted_diag(&mut normal, follower_cost.r());
    let chol = normal
        .cholesky()
        .ok_or_else(|| Error::SingularBestResponse(follower_cost.label().to_string()))?;
    let qg_t = qg.transpose();
    let g_hat = -chol.solve(&(&qg_t * &st.g_leader));
    let h_hat = -chol.solve(&(&qg_t * &st.h));
    debug_assert_eq!(g_hat.shape(), (mf * steps, ml * steps));
    Ok(OlBrMap { g_hat, h_hat, belief_label: follower_cost.label().to_string(), horizon_len })
}

/// Gradient of the follower's lifted cost `x'Q̄x + u^F'R̄u^F` with respect to
/// its own stacked controls.
pub fn follower_lifted_gradient<S: Real>(
    dynamics: &LtiGameDynamics<S>,
    follower_cost: &QuadCostModel<S>,
    x0: &DVector<S>,
    u_leader: &DVector<S>,
    u_follower: &DVector<S>,
) -> Result<DVector<S>> {
    follower_cost.check_dims(dynamics, Player::Follower)?;
    dynamics.check_state(x0)?;
    let horizon_len = horizon_from_leader(dynamics, u_leader)?;
    control_len(dynamics, Player::Follower, u_follower, horizon_len)?;
    let st = dynamics.stacked(horizon_len)?;
    let x = st.states(x0, u_leader, u_follower);
    let qx = lifted_left_mul_vec(follower_cost.q(), &x);
    let ru = lifted_left_mul_vec(follower_cost.r(), u_follower);
    Ok((st.g_follower.transpose() * qx + ru) * lit::<S>(2.0))
}

/// Leader-side reduced problem: `x = W u^L + c` with the follower eliminated.
struct Reduced<S: Real> {
    w: DMatrix<S>,
    c: DVector<S>,
}

fn reduce<S: Real>(st: &StackedMatrices<S>, br: &OlBrMap<S>, x0: &DVector<S>) -> Reduced<S> {
    Reduced {
        w: &st.g_follower * &br.g_hat + &st.g_leader,
        c: &st.h * x0 + &st.g_follower * (&br.h_hat * x0),
    }
}

fn check_ol_inputs<S: Real>(
    dynamics: &LtiGameDynamics<S>,
    leader_cost: &QuadCostModel<S>,
    br: &OlBrMap<S>,
    x0: &DVector<S>,
) -> Result<()> {
    leader_cost.check_dims(dynamics, Player::Leader)?;
    dynamics.check_state(x0)
        .and_then(|_| if br.h_hat.ncols() == dynamics.n() { Ok(()) } else {
            Err(Error::Dimension("best-response map built for another system".into()))
        })
}

/// Leader's lifted cost when the follower answers `u_leader` through `br`.
pub fn leader_lifted_cost<S: Real>(
    dynamics: &LtiGameDynamics<S>,
    leader_cost: &QuadCostModel<S>,
    br: &OlBrMap<S>,
    x0: &DVector<S>,
    u_leader: &DVector<S>,
) -> Result<S> {
    check_ol_inputs(dynamics, leader_cost, br, x0)?;
    control_len(dynamics, Player::Leader, u_leader, br.horizon_len)?;
    let st = dynamics.stacked(br.horizon_len)?;
    let red = reduce(&st, br, x0);
    let x = &red.w * u_leader + &red.c;
    let qx = lifted_left_mul_vec(leader_cost.q(), &x);
    let ru = lifted_left_mul_vec(leader_cost.r(), u_leader);
    Ok(x.dot(&qx) + u_leader.dot(&ru))
}

/// Gradient of [`leader_lifted_cost`] in `u_leader`.
pub fn leader_lifted_gradient<S: Real>(
    dynamics: &LtiGameDynamics<S>,
    leader_cost: &QuadCostModel<S>,
    br: &OlBrMap<S>,
    x0: &DVector<S>,
    u_leader: &DVector<S>,
) -> Result<DVector<S>> {
    check_ol_inputs(dynamics, leader_cost, br, x0)?;
    control_len(dynamics, Player::Leader, u_leader, br.horizon_len)?;
    let st = dynamics.stacked(br.horizon_len)?;
    let red = reduce(&st, br, x0);
    let x = &red.w * u_leader + &red.c;
    let qx = lifted_left_mul_vec(leader_cost.q(), &x);
    let ru = lifted_left_mul_vec(leader_cost.r(), u_leader);
    Ok((red.w.transpose() * qx + ru) * lit::<S>(2.0))
}

/// Leader's OLSE control sequence (stacked) from `x0` over `horizon_len`
/// states, assuming the follower best-responds according to `belief`.
pub fn solve_olse<S: Real>(
    game: &StackelbergGame<S>,
    belief: &QuadCostModel<S>,
    x0: &DVector<S>,
    horizon_len: usize,
) -> Result<DVector<S>> {
    let br = build_ol_br(&game.dynamics, belief, horizon_len)?;
    solve_olse_with(&game.dynamics, &game.leader_cost, &br, x0)
}

/// [`solve_olse`] with a prebuilt best-response map.
pub fn solve_olse_with<S: Real>(
    dynamics: &LtiGameDynamics<S>,
    leader_cost: &QuadCostModel<S>,
    br: &OlBrMap<S>,
    x0: &DVector<S>,
) -> Result<DVector<S>> {
    check_ol_inputs(dynamics, leader_cost, br, x0)?;
    if steps_of(br.horizon_len) == 0 {
        return Ok(DVector::zeros(0));
    }
    let st = dynamics.stacked(br.horizon_len)?;
    let red = reduce(&st, br, x0);
    let qw = lifted_left_mul(leader_cost.q(), &red.w);
    let mut normal = red.w.transpose() * &qw;
    add_lifted_diag(&mut normal, leader_cost.r());
    let rhs = qw.transpose() * &red.c;
    let chol = normal.cholesky().ok_or(Error::SingularSystem("open-loop leader problem"))?;
    Ok(-chol.solve(&rhs))
}

/// Leader re-solve at `tau` from the realised state `x_tau` for the remaining
/// horizon `[tau, T]`. Empty when `tau == T`.
pub fn resolve_truncated_ol<S: Real>(
    game: &StackelbergGame<S>,
    belief: &QuadCostModel<S>,
    x_tau: &DVector<S>,
    tau: usize,
) -> Result<DVector<S>> {
    if tau == 0 || tau > game.horizon {
        return Err(Error::TauOutOfRange { tau, horizon: game.horizon });
    }
    solve_olse(game, belief, x_tau, game.horizon - tau + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lin_dyn::rollout_open_loop;
    use crate::lq_game::eval_cost;
    use crate::lin_dyn::split;

    fn example1() -> (StackelbergGame<f64>, QuadCostModel<f64>) {
        let d = LtiGameDynamics::scalar(1.7, 1.4, 0.5).unwrap();
        let game = StackelbergGame::new(
            d,
            QuadCostModel::scalar("L", 16.0, 17.0).unwrap(),
            QuadCostModel::scalar("b*", 7.0, 19.0).unwrap(),
            5,
        )
        .unwrap();
        (game, QuadCostModel::scalar("b'", 8.0, 9.0).unwrap())
    }

    #[test]
    fn zero_state_gives_zero_plan() {
        let (game, prime) = example1();
        let x0 = DVector::zeros(1);
        let u = solve_olse(&game, &prime, &x0, 6).unwrap();
        assert!(u.iter().all(|v| *v == 0.0));
        let br = build_ol_br(&game.dynamics, &game.follower_cost, 6).unwrap();
        assert!(br.respond(&x0, &DVector::zeros(5)).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn example1_leader_plans() {
        let (game, prime) = example1();
        let x0 = DVector::from_element(1, 7.6);
        let star = solve_olse(&game, &game.follower_cost, &x0, 6).unwrap();
        for (got, want) in star.iter().zip([-4.6, -0.86, 0.06, 0.19, 0.12]) {
            assert!((got - want).abs() <= 0.01, "{got} vs {want}");
        }
        let alt = solve_olse(&game, &prime, &x0, 6).unwrap();
        for (got, want) in alt.iter().zip([-2.28, 0.4, 0.73, 0.52, 0.25]) {
            assert!((got - want).abs() <= 0.01, "{got} vs {want}");
        }
    }

    #[test]
    fn leader_gradient_vanishes_at_solution() {
        let (game, prime) = example1();
        let x0 = DVector::from_element(1, 7.6);
        let br = build_ol_br(&game.dynamics, &prime, 6).unwrap();
        let u = solve_olse_with(&game.dynamics, &game.leader_cost, &br, &x0).unwrap();
        let g = leader_lifted_gradient(&game.dynamics, &game.leader_cost, &br, &x0, &u).unwrap();
        assert!(g.norm() < 1e-7, "{}", g.norm());
    }

    #[test]
    fn lifted_leader_cost_matches_rollout() {
        let (game, _) = example1();
        let x0 = DVector::from_element(1, 7.6);
        let br = build_ol_br(&game.dynamics, &game.follower_cost, 6).unwrap();
        let u = DVector::from_column_slice(&[0.3, -1.0, 2.0, 0.0, 0.5]);
        let uf = br.respond(&x0, &u);
        let t = rollout_open_loop(&game.dynamics, &x0, &split(&u, 1), &split(&uf, 1)).unwrap();
        let direct = eval_cost(&t, Player::Leader, &game.leader_cost, true).unwrap();
        let lifted = leader_lifted_cost(&game.dynamics, &game.leader_cost, &br, &x0, &u).unwrap();
        assert!((direct - lifted).abs() < 1e-9 * direct.abs().max(1.0));
    }

    #[test]
    fn truncated_resolve_at_horizon_is_empty() {
        let (game, _) = example1();
        let x = DVector::from_element(1, 1.0);
        assert_eq!(resolve_truncated_ol(&game, &game.follower_cost, &x, 5).unwrap().len(), 0);
        assert!(matches!(
            resolve_truncated_ol(&game, &game.follower_cost, &x, 6),
            Err(Error::TauOutOfRange { .. })
        ));
        assert!(resolve_truncated_ol(&game, &game.follower_cost, &x, 0).is_err());
    }

    #[test]
    fn wrong_belief_dimension_rejected() {
        let (game, _) = example1();
        let wide = QuadCostModel::new("w", DMatrix::identity(2, 2), DMatrix::identity(1, 1)).unwrap();
        assert!(solve_olse(&game, &wide, &DVector::from_element(1, 1.0), 3).is_err());
    }
}
