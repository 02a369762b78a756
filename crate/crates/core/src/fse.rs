//! Feedback Stackelberg equilibrium by backward recursion.
//!
//! At each stage the follower reacts to the predicted state
//! `x̃ = A x + B^L u^L` with `u^F = -K̃^F_t x̃`, where
//! `K̃^F_t = (R^F + B^F'V^F_{t+1}B^F)^{-1} B^F'V^F_{t+1}`. The leader picks
//! `K^L_t` knowing that reaction, so its next state is
//! `(I - B^F K̃^F_t)(A - B^L K^L_t) x`. The effective follower feedback gain
//! is `U_t = K̃^F_t (A - B^L K^L_t)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::lin_dyn::{rollout_feedback, LtiGameDynamics, Player};
use crate::lq_game::{eval_cost, quad, QuadCostModel, StackelbergGame};
use crate::scalar::{lit, Real};

/// Gains and value matrices of one FSE solve over `horizon_len` states.
///
/// `follower_reaction[t]` is `K̃^F_t` (acting on the predicted state);
/// `follower_gains[t]` is `U_t` (acting on `x_t`, so `u^F_t = -U_t x_t`).
/// Value sequences have one entry per state; the last one is `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackSolution<S: Real> {
    pub leader_gains: Vec<DMatrix<S>>,
    pub follower_reaction: Vec<DMatrix<S>>,
    pub follower_gains: Vec<DMatrix<S>>,
    pub leader_values: Vec<DMatrix<S>>,
    pub follower_values: Vec<DMatrix<S>>,
    pub belief_label: String,
}

impl<S: Real> FeedbackSolution<S> {
    pub fn horizon_len(&self) -> usize {
        self.leader_values.len()
    }

    /// Same solution restricted to the stages from `t` on.
    pub fn tail(&self, t: usize) -> FeedbackSolution<S> {
        FeedbackSolution {
            leader_gains: self.leader_gains[t..].to_vec(),
            follower_reaction: self.follower_reaction[t..].to_vec(),
            follower_gains: self.follower_gains[t..].to_vec(),
            leader_values: self.leader_values[t..].to_vec(),
            follower_values: self.follower_values[t..].to_vec(),
            belief_label: self.belief_label.clone(),
        }
    }
}

/// A follower's stage-wise best response to a fixed leader gain sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerResponse<S: Real> {
    pub reaction: Vec<DMatrix<S>>,
    pub gains: Vec<DMatrix<S>>,
    pub values: Vec<DMatrix<S>>,
}

fn symmetrize<S: Real>(m: DMatrix<S>) -> DMatrix<S> {
    (&m + m.transpose()) * lit::<S>(0.5)
}

fn reaction_gain<S: Real>(
    dynamics: &LtiGameDynamics<S>,
    follower: &QuadCostModel<S>,
    v_next: &DMatrix<S>,
) -> Result<DMatrix<S>> {
    let bf = dynamics.b(Player::Follower);
    let bf_v = bf.transpose() * v_next;
    let lhs = follower.r() + &bf_v * bf;
    let chol = lhs.cholesky().ok_or(Error::SingularSystem("follower stage problem"))?;
    Ok(chol.solve(&bf_v))
}

/// Closed-loop pieces of one stage given the follower reaction and leader gain.
struct Stage<S: Real> {
    /// `I - B^F K̃^F`
    react: DMatrix<S>,
    /// `A - B^L K^L`
    leader_closed: DMatrix<S>,
}

impl<S: Real> Stage<S> {
    fn new(dynamics: &LtiGameDynamics<S>, reaction: &DMatrix<S>, leader_gain: &DMatrix<S>) -> Self {
        let n = dynamics.n();
        Stage {
            react: DMatrix::identity(n, n) - dynamics.b(Player::Follower) * reaction,
            leader_closed: dynamics.a() - dynamics.b(Player::Leader) * leader_gain,
        }
    }

    /// `P_t`
    fn transition(&self) -> DMatrix<S> {
        &self.react * &self.leader_closed
    }
}

fn stackelberg_leader_gain<S: Real>(
    dynamics: &LtiGameDynamics<S>,
    leader: &QuadCostModel<S>,
    reaction: &DMatrix<S>,
    v_next: &DMatrix<S>,
) -> Result<DMatrix<S>> {
    let n = dynamics.n();
    let react = DMatrix::identity(n, n) - dynamics.b(Player::Follower) * reaction;
    let mb = &react * dynamics.b(Player::Leader);
    let mb_v = mb.transpose() * v_next;
    let lhs = &mb_v * &mb + leader.r();
    let chol = lhs.cholesky().ok_or(Error::SingularSystem("leader stage problem"))?;
    Ok(chol.solve(&(mb_v * react * dynamics.a())))
}

/// Feedback Stackelberg equilibrium over `horizon_len` states with the leader
/// assuming the follower's cost is `belief`.
pub fn solve_fse<S: Real>(
    dynamics: &LtiGameDynamics<S>,
    leader_cost: &QuadCostModel<S>,
    belief: &QuadCostModel<S>,
    horizon_len: usize,
) -> Result<FeedbackSolution<S>> {
    leader_cost.check_dims(dynamics, Player::Leader)?;
    belief.check_dims(dynamics, Player::Follower)?;
    if horizon_len == 0 {
        return Err(Error::Dimension("horizon_len must be at least 1".into()));
    }
    let steps = horizon_len - 1;
    let mut leader_gains = Vec::with_capacity(steps);
    let mut follower_reaction = Vec::with_capacity(steps);
    let mut follower_gains = Vec::with_capacity(steps);
    let mut leader_values = vec![leader_cost.q().clone()];
    let mut follower_values = vec![belief.q().clone()];

    for _ in 0..steps {
        let vl = leader_values.last().unwrap();
        let vf = follower_values.last().unwrap();
        let reaction = reaction_gain(dynamics, belief, vf)?;
        let kl = stackelberg_leader_gain(dynamics, leader_cost, &reaction, vl)?;
        let stage = Stage::new(dynamics, &reaction, &kl);
        let p = stage.transition();
        let u = &reaction * &stage.leader_closed;
        let vl_new = symmetrize(leader_cost.q() + p.transpose() * vl * &p + kl.transpose() * leader_cost.r() * &kl);
        let vf_new = symmetrize(belief.q() + p.transpose() * vf * &p + u.transpose() * belief.r() * &u);
        leader_gains.push(kl);
        follower_reaction.push(reaction);
        follower_gains.push(u);
        leader_values.push(vl_new);
        follower_values.push(vf_new);
    }

    for v in [&mut leader_gains, &mut follower_reaction, &mut follower_gains, &mut leader_values, &mut follower_values] {
        v.reverse();
    }
    Ok(FeedbackSolution {
        leader_gains,
        follower_reaction,
        follower_gains,
        leader_values,
        follower_values,
        belief_label: belief.label().to_string(),
    })
}

/// Stage-wise best response of `follower_cost` to announced leader gains.
pub fn follower_response<S: Real>(
    dynamics: &LtiGameDynamics<S>,
    follower_cost: &QuadCostModel<S>,
    leader_gains: &[DMatrix<S>],
) -> Result<FollowerResponse<S>> {
    follower_cost.check_dims(dynamics, Player::Follower)?;
    let (n, ml) = (dynamics.n(), dynamics.m(Player::Leader));
    if let Some(k) = leader_gains.iter().position(|g| g.shape() != (ml, n)) {
        return Err(Error::Dimension(format!("leader gain at stage {k} has shape {:?}", leader_gains[k].shape())));
    }
    let steps = leader_gains.len();
    let mut reaction = Vec::with_capacity(steps);
    let mut gains = Vec::with_capacity(steps);
    let mut values = vec![follower_cost.q().clone()];
    for kl in leader_gains.iter().rev() {
        let vf = values.last().unwrap();
        let r = reaction_gain(dynamics, follower_cost, vf)?;
        let stage = Stage::new(dynamics, &r, kl);
        let p = stage.transition();
        let u = &r * &stage.leader_closed;
        let vf_new = symmetrize(follower_cost.q() + p.transpose() * vf * &p + u.transpose() * follower_cost.r() * &u);
        reaction.push(r);
        gains.push(u);
        values.push(vf_new);
    }
    reaction.reverse();
    gains.reverse();
    values.reverse();
    Ok(FollowerResponse { reaction, gains, values })
}

/// Leader cost-to-go matrices when both players use the given feedback gains.
pub fn leader_values_under<S: Real>(
    dynamics: &LtiGameDynamics<S>,
    leader_cost: &QuadCostModel<S>,
    leader_gains: &[DMatrix<S>],
    follower_gains: &[DMatrix<S>],
) -> Result<Vec<DMatrix<S>>> {
    leader_cost.check_dims(dynamics, Player::Leader)?;
    if leader_gains.len() != follower_gains.len() {
        return Err(Error::Dimension("gain sequences differ in length".into()));
    }
    let mut values = vec![leader_cost.q().clone()];
    for (kl, kf) in leader_gains.iter().zip(follower_gains).rev() {
        let v = values.last().unwrap();
        let closed = dynamics.a() - dynamics.b(Player::Leader) * kl - dynamics.b(Player::Follower) * kf;
        values.push(symmetrize(
            leader_cost.q() + closed.transpose() * v * &closed + kl.transpose() * leader_cost.r() * kl,
        ));
    }
    values.reverse();
    Ok(values)
}

/// Leader's realised cost from `x0` when it plays the leader gains of
/// `solution` and the game's true follower best-responds stage by stage.
pub fn fse_cost<S: Real>(game: &StackelbergGame<S>, solution: &FeedbackSolution<S>, x0: &DVector<S>) -> Result<S> {
    let response = follower_response(&game.dynamics, &game.follower_cost, &solution.leader_gains)?;
    let traj = rollout_feedback(&game.dynamics, x0, &solution.leader_gains, &response.gains)?;
    eval_cost(&traj, Player::Leader, &game.leader_cost, true)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOptimalityReport<S> {
    pub stage: usize,
    pub passed: bool,
    /// Largest decrease of the leader's cost-to-go found by any perturbation.
    pub worst_improvement: S,
    pub perturbations: usize,
}

/// Largest cost-to-go decrease a perturbation may achieve before the stage
/// gain is declared non-optimal.
pub const STAGE_IMPROVEMENT_TOL: f64 = 1e-7;

/// Perturbs `K^L_t` only, keeps later gains fixed, lets the follower's stage
/// reaction answer the perturbed gain, and checks that the leader's
/// cost-to-go at random states never drops by more than
/// [`STAGE_IMPROVEMENT_TOL`].
pub fn check_stage_optimality<S: Real, R: Rng + ?Sized>(
    solution: &FeedbackSolution<S>,
    game: &StackelbergGame<S>,
    t: usize,
    n_perturb: usize,
    rng: &mut R,
) -> Result<StageOptimalityReport<S>> {
    let steps = solution.leader_gains.len();
    if t >= steps {
        return Err(Error::Dimension(format!("stage {t} outside [0, {steps})")));
    }
    let dynamics = &game.dynamics;
    let leader = &game.leader_cost;
    let v_next = &solution.leader_values[t + 1];
    let reaction = &solution.follower_reaction[t];
    let cost_to_go = |k: &DMatrix<S>, x: &DVector<S>| {
        let p = Stage::new(dynamics, reaction, k).transition();
        let x_next = &p * x;
        quad(x, leader.q()) + quad(&(k * x), leader.r()) + quad(&x_next, v_next)
    };

    let base = &solution.leader_gains[t];
    let (ml, n) = base.shape();
    let scales = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];
    let mut worst = S::zero();
    for i in 0..n_perturb {
        let scale = scales[i % scales.len()];
        let x = DVector::from_fn(n, |_, _| lit::<S>(rng.random_range(-1.0..1.0)));
        let delta = DMatrix::from_fn(ml, n, |_, _| lit::<S>(scale * rng.random_range(-1.0..1.0)));
        let improvement = cost_to_go(base, &x) - cost_to_go(&(base + delta), &x);
        if improvement > worst {
            worst = improvement;
        }
    }
    Ok(StageOptimalityReport {
        stage: t,
        passed: worst <= lit(STAGE_IMPROVEMENT_TOL),
        worst_improvement: worst,
        perturbations: n_perturb,
    })
}
