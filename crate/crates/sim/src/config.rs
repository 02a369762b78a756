//! TOML config files: Monte Carlo experiments and single games.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use stackbelief_core::{CostModel, CostRecord, Dynamics, Game, InfoStructure};

use crate::error::{io_err, Result, SimError};
use crate::harness::ExperimentConfig;
use crate::scenario::ScenarioParams;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub scenario: ScenarioParams,
}

impl ExperimentFile {
    pub fn into_config(self) -> ExperimentConfig {
        ExperimentConfig { scenario: self.scenario, ..self.experiment }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

pub fn parse_experiment(text: &str, origin: &str) -> Result<ExperimentConfig> {
    let file: ExperimentFile =
        toml::from_str(text).map_err(|source| SimError::Toml { path: origin.to_string(), source })?;
    Ok(file.into_config())
}

pub fn load_experiment(path: &Path) -> Result<ExperimentConfig> {
    parse_experiment(&read(path)?, &path.display().to_string())
}

/// A single game: dynamics, leader cost, the follower's true cost and the
/// beliefs to compare. Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub info_structure: InfoStructure,
    /// Control steps `T`.
    pub horizon: usize,
    /// Update time / period `τ`.
    pub tau: usize,
    pub x0: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "B_leader")]
    pub b_leader: Vec<f64>,
    #[serde(rename = "B_follower")]
    pub b_follower: Vec<f64>,
    pub leader: CostRecord,
    /// True follower cost `b⋆`.
    pub follower: CostRecord,
    /// Beliefs to compare; defaults to the true model alone.
    #[serde(default)]
    pub beliefs: Vec<CostRecord>,
}

fn scalar_cost(label: &str, q: f64, r: f64) -> CostRecord {
    CostRecord { label: label.into(), q: vec![q], r: vec![r] }
}

/// A built game plus its initial state and belief set.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSetup {
    pub game: Game,
    pub x0: DVector<f64>,
    pub beliefs: Vec<CostModel>,
}

impl GameConfig {
    /// Scalar open-loop example with `T = 5`, `τ = 3`, `x0 = 7.6`.
    pub fn example1() -> Self {
        Self {
            info_structure: InfoStructure::OpenLoop,
            horizon: 5,
            tau: 3,
            x0: vec![7.6],
            a: vec![1.7],
            b_leader: vec![1.4],
            b_follower: vec![0.5],
            leader: scalar_cost("L", 16.0, 17.0),
            follower: scalar_cost("b*", 7.0, 19.0),
            beliefs: vec![scalar_cost("b*", 7.0, 19.0), scalar_cost("b'", 8.0, 9.0)],
        }
    }

    /// Scalar feedback example with `T = 8`, `τ = 3`, `x0 = -5.6`.
    pub fn example2() -> Self {
        Self {
            info_structure: InfoStructure::Feedback,
            horizon: 8,
            tau: 3,
            x0: vec![-5.6],
            a: vec![1.4],
            b_leader: vec![1.7],
            b_follower: vec![1.7],
            leader: scalar_cost("L", 7.0, 16.0),
            follower: scalar_cost("b*", 4.0, 24.0),
            beliefs: vec![scalar_cost("b*", 4.0, 24.0), scalar_cost("b'", 29.0, 12.0)],
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        toml::from_str(&read(path)?).map_err(|source| SimError::Toml { path: path.display().to_string(), source })
    }

    pub fn build(&self) -> Result<GameSetup> {
        let n = self.x0.len();
        let shaped = |name: &str, data: &[f64]| -> Result<DMatrix<f64>> {
            if n == 0 || data.is_empty() || !data.len().is_multiple_of(n) {
                return Err(SimError::Config(format!("{name} has {} entries; expected a multiple of n = {n}", data.len())));
            }
            Ok(DMatrix::from_row_slice(n, data.len() / n, data))
        };
        let a = shaped("A", &self.a)?;
        if a.ncols() != n {
            return Err(SimError::Config(format!("A must be {n}x{n}")));
        }
        let dynamics = Dynamics::new(a, shaped("B_leader", &self.b_leader)?, shaped("B_follower", &self.b_follower)?)?;
        let leader = CostModel::try_from(&self.leader)?;
        let follower = CostModel::try_from(&self.follower)?;
        let beliefs = if self.beliefs.is_empty() {
            vec![follower.clone()]
        } else {
            self.beliefs.iter().map(CostModel::try_from).collect::<stackbelief_core::Result<_>>()?
        };
        if self.tau == 0 || self.tau > self.horizon {
            return Err(SimError::Config(format!("tau {} outside 1..={}", self.tau, self.horizon)));
        }
        let game = Game::new(dynamics, leader, follower, self.horizon)?;
        for b in &beliefs {
            game.check_belief(b)?;
        }
        Ok(GameSetup { game, x0: DVector::from_vec(self.x0.clone()), beliefs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_examples_build() {
        let s = GameConfig::example1().build().unwrap();
        assert_eq!(s.beliefs.len(), 2);
        assert_eq!(s.game.horizon, 5);
        assert!(GameConfig::example2().build().is_ok());
    }

    #[test]
    fn game_config_round_trips_through_toml() {
        let cfg = GameConfig::example2();
        let text = toml::to_string(&cfg).unwrap();
        let back: GameConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn experiment_file_defaults_and_errors() {
        let c = parse_experiment("", "inline").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        let c = parse_experiment("[experiment]\nn_runs = 7\n[scenario]\nhorizon = 10\nalpha = 0.3\n", "inline").unwrap();
        assert_eq!(c.n_runs, 7);
        assert_eq!(c.scenario.horizon, 10);
        assert_eq!(c.scenario.alpha, 0.3);
        let err = parse_experiment("[experiment]\nn_runz = 7\n", "cfg.toml").unwrap_err().to_string();
        assert!(err.contains("cfg.toml") && err.contains("n_runz"), "{err}");
    }

    #[test]
    fn bad_shapes_are_config_errors() {
        let mut cfg = GameConfig::example1();
        cfg.a = vec![1.0, 2.0, 3.0];
        assert!(matches!(cfg.build(), Err(SimError::Config(_))));
        let mut cfg = GameConfig::example1();
        cfg.tau = 6;
        assert!(cfg.build().is_err());
    }
}
