//! Collision-avoidance scenario, Monte Carlo harness, config files, result
//! writers and the two scalar worked examples.

pub mod config;
pub mod error;
pub mod harness;
pub mod output;
pub mod scenario;
pub mod worked;

pub use config::{load_experiment, ExperimentFile, GameConfig, GameSetup};
pub use error::{Result, SimError};
pub use harness::{
    pct_above_winner, run_experiment, run_winner, summarize, tau_sweep, ExperimentConfig, ExperimentResult,
    RunGroup, Scheme, SchemeOutcome, StatsTable, TruthSelection,
};
pub use scenario::{
    build_intentions, build_joint_dynamics, build_leader_cost, run_rng, sample_initial, InitialSample, Intention,
    IntentionSet, Scenario, ScenarioParams,
};
