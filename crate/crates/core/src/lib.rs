//! Finite-horizon two-player linear-quadratic Stackelberg games in which the
//! leader's model of the follower's best response can change mid-game.
//!
//! The crate covers open-loop and feedback Stackelberg equilibria, the
//! belief-update play protocol (pre-update play, truncated re-solve, follower
//! re-response) and a multiple-model adaptive estimator over a finite set of
//! follower cost hypotheses.
//!
//! All solver code is generic over the scalar type through [`Real`]; the
//! `f64` aliases at the crate root are what the simulation crates use.

pub mod belief_protocol;
pub mod error;
pub mod fse;
pub mod lin_dyn;
pub mod lq_game;
pub mod mmae;
pub mod olse;
pub mod scalar;

pub use belief_protocol::{
    announce, compare_beliefs, pick_winner, respond, run_adaptive, run_fixed_periodic, run_schedule,
    run_with_update, AdaptiveRun, Announcement, BeliefComparison, BeliefSchedule, FollowerPlan,
    InfoStructure, RunRecord, RunSummary, SchemeKind, TIE_REL_TOL,
};
pub use error::{Error, Result};
pub use fse::{
    check_stage_optimality, follower_response, fse_cost, leader_values_under, solve_fse,
    FeedbackSolution, FollowerResponse, StageOptimalityReport,
};
pub use lin_dyn::{build_stacked, rollout_feedback, rollout_open_loop, LtiGameDynamics, Player,
    StackedMatrices, Trajectory};
pub use lq_game::{decompose_cost, eval_cost, lift_block_costs, CostBreakdown, CostRecord,
    QuadCostModel, StackelbergGame};
pub use mmae::{bayes_update, likelihoods, map_belief, predict_state, EstimatorConfig,
    EstimatorState, ResidualReport};
pub use olse::{build_ol_br, follower_lifted_gradient, leader_lifted_cost, leader_lifted_gradient,
    resolve_truncated_ol, solve_olse, OlBrMap};
pub use scalar::Real;

/// Double-precision dynamics.
pub type Dynamics = LtiGameDynamics<f64>;
/// Double-precision quadratic cost model (also used as a follower belief).
pub type CostModel = QuadCostModel<f64>;
/// Double-precision game.
pub type Game = StackelbergGame<f64>;
/// Double-precision trajectory.
pub type Traj = Trajectory<f64>;
/// Double-precision run record.
pub type Run = RunRecord<f64>;
/// Double-precision feedback solution.
pub type Feedback = FeedbackSolution<f64>;
/// Double-precision estimator state.
pub type Estimator = EstimatorState<f64>;
