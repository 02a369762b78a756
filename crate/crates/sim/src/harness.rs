//! Monte Carlo runner. Every run index draws one `(x0, σ_L, σ_F)` sample
//! that is shared by every true intention, scheme and update period, so
//! costs within a run are directly comparable.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stackbelief_core::mmae::EstimatorConfig;
use stackbelief_core::{pick_winner, run_adaptive, run_fixed_periodic, InfoStructure, Run};

use crate::error::{Result, SimError};
use crate::scenario::{run_rng, sample_initial, InitialSample, Intention, Scenario, ScenarioParams};

/// How the leader picks its belief about the follower.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scheme {
    Fixed(Intention),
    Adaptive,
}

impl Scheme {
    pub const ALL: [Scheme; 4] =
        [Scheme::Fixed(Intention::T), Scheme::Fixed(Intention::I), Scheme::Fixed(Intention::A), Scheme::Adaptive];
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Fixed(i) => write!(f, "fixed-{i}"),
            Scheme::Adaptive => f.write_str("adaptive"),
        }
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "adaptive" | "Ad" | "ad" => Ok(Scheme::Adaptive),
            _ => s.strip_prefix("fixed-").unwrap_or(s).parse().map(Scheme::Fixed).map_err(|_| {
                format!("unknown scheme `{s}` (expected fixed-T, fixed-I, fixed-A or adaptive)")
            }),
        }
    }
}

impl TryFrom<String> for Scheme {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Scheme> for String {
    fn from(s: Scheme) -> Self {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TruthSelection {
    One(Intention),
    /// All three intentions on the same samples.
    Sweep,
}

impl TruthSelection {
    pub fn intentions(self) -> Vec<Intention> {
        match self {
            TruthSelection::One(i) => vec![i],
            TruthSelection::Sweep => Intention::ALL.to_vec(),
        }
    }
}

impl fmt::Display for TruthSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TruthSelection::One(i) => i.fmt(f),
            TruthSelection::Sweep => f.write_str("sweep"),
        }
    }
}

impl FromStr for TruthSelection {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.trim() == "sweep" {
            Ok(TruthSelection::Sweep)
        } else {
            s.parse().map(TruthSelection::One).map_err(|e| format!("{e}, or sweep"))
        }
    }
}

impl TryFrom<String> for TruthSelection {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<TruthSelection> for String {
    fn from(s: TruthSelection) -> Self {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip)]
    pub scenario: ScenarioParams,
    pub info_structure: InfoStructure,
    pub schemes: Vec<Scheme>,
    pub true_intention: TruthSelection,
    pub tau_values: Vec<usize>,
    pub n_runs: usize,
    pub master_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioParams::default(),
            info_structure: InfoStructure::OpenLoop,
            schemes: Scheme::ALL.to_vec(),
            true_intention: TruthSelection::Sweep,
            tau_values: vec![1, 2, 5, 10, 20],
            n_runs: 1000,
            master_seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.schemes.is_empty() {
            return bad("at least one scheme is required".into());
        }
        for (i, s) in self.schemes.iter().enumerate() {
            if self.schemes[..i].contains(s) {
                return bad(format!("scheme {s} listed twice"));
            }
        }
        if self.tau_values.is_empty() {
            return bad("at least one tau value is required".into());
        }
        let horizon = self.scenario.horizon;
        if let Some(t) = self.tau_values.iter().find(|&&t| t == 0 || t > horizon) {
            return bad(format!("tau {t} outside 1..={horizon}"));
        }
        if self.n_runs == 0 {
            return bad("n_runs must be at least 1".into());
        }
        self.scenario.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeOutcome {
    pub scheme: Scheme,
    pub record: Run,
    /// Posterior after each observation (adaptive scheme only).
    pub posterior_trace: Option<Vec<Vec<f64>>>,
}

/// All schemes played on one `(run index, true intention, tau)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RunGroup {
    pub run_index: usize,
    pub truth: Intention,
    pub tau: usize,
    pub sample: InitialSample,
    /// `Err` holds the failure message; the group is then excluded.
    pub outcome: std::result::Result<Vec<SchemeOutcome>, String>,
}

impl RunGroup {
    pub fn totals(&self) -> Option<Vec<f64>> {
        self.outcome.as_ref().ok().map(|v| v.iter().map(|o| o.record.total_cost()).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// Ordered by tau (config order), then true intention, then run index.
    pub groups: Vec<RunGroup>,
}

fn play_group(
    scenario: &Scenario,
    config: &ExperimentConfig,
    sample: &InitialSample,
    truth: Intention,
    tau: usize,
) -> Result<Vec<SchemeOutcome>> {
    let game = scenario.game(sample, truth)?;
    let x0 = sample.x0();
    let info = config.info_structure;
    config
        .schemes
        .iter()
        .map(|&scheme| {
            let (mut record, posterior_trace) = match scheme {
                Scheme::Fixed(b) => (run_fixed_periodic(&game, &x0, scenario.intentions.get(b), tau, info)?, None),
                Scheme::Adaptive => {
                    let est = EstimatorConfig::new(scenario.intentions.models.to_vec());
                    let run = run_adaptive(&game, &x0, &est, tau, info)?;
                    (run.record, Some(run.posterior_trace))
                }
            };
            record.seed = Some(config.master_seed);
            Ok(SchemeOutcome { scheme, record, posterior_trace })
        })
        .collect()
}

/// Plays every scheme on every `(tau, truth, run)` cell in the current rayon
/// pool. Failed cells are kept with their error and excluded from statistics.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let scenario = Scenario::new(config.scenario.clone())?;
    let samples: Vec<InitialSample> = (0..config.n_runs)
        .map(|k| sample_initial(&mut run_rng(config.master_seed, k as u64), &config.scenario))
        .collect();
    let truths = config.true_intention.intentions();
    let cells: Vec<(usize, Intention, usize)> = config
        .tau_values
        .iter()
        .flat_map(|&tau| truths.iter().flat_map(move |&t| (0..config.n_runs).map(move |k| (tau, t, k))))
        .collect();
    let groups = cells
        .into_par_iter()
        .map(|(tau, truth, run_index)| {
            let sample = samples[run_index].clone();
            let outcome = play_group(&scenario, config, &sample, truth, tau).map_err(|e| e.to_string());
            RunGroup { run_index, truth, tau, sample, outcome }
        })
        .collect();
    Ok(ExperimentResult { config: config.clone(), groups })
}

/// Winning scheme of one run: lowest total, ties to the scheme holding the
/// true belief, then by label.
pub fn run_winner(schemes: &[Scheme], totals: &[f64], truth: Intention) -> usize {
    let labels: Vec<String> = schemes.iter().map(Scheme::to_string).collect();
    let preferred = schemes.iter().position(|&s| s == Scheme::Fixed(truth));
    pick_winner(&labels, totals, preferred)
}

/// Percent by which each total exceeds the winner's. `None` when the
/// winning cost is not positive.
pub fn pct_above_winner(totals: &[f64], winner: usize) -> Option<Vec<f64>> {
    let best = totals[winner];
    if best.is_nan() || best <= 0.0 {
        return None;
    }
    Some(totals.iter().map(|&j| ((j - best) / best * 100.0).max(0.0)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsTable {
    pub tau: usize,
    pub info_structure: InfoStructure,
    pub truths: Vec<Intention>,
    pub schemes: Vec<Scheme>,
    /// `wins[truth][scheme]`.
    pub wins: Vec<Vec<usize>>,
    pub win_percent: Vec<Vec<f64>>,
    /// Mean percent above the per-run minimum.
    pub pct_higher: Vec<Vec<f64>>,
    /// Included runs per truth row.
    pub run_count: Vec<usize>,
    pub excluded_failed: Vec<usize>,
    pub excluded_zero_cost: Vec<usize>,
}

impl StatsTable {
    pub fn excluded(&self) -> usize {
        self.excluded_failed.iter().sum::<usize>() + self.excluded_zero_cost.iter().sum::<usize>()
    }

    pub fn attempted(&self) -> usize {
        self.run_count.iter().sum::<usize>() + self.excluded()
    }

    pub fn row(&self, truth: Intention) -> Option<usize> {
        self.truths.iter().position(|&t| t == truth)
    }

    pub fn col(&self, scheme: Scheme) -> Option<usize> {
        self.schemes.iter().position(|&s| s == scheme)
    }
}

/// Win-rate matrix and mean percent-above-minimum table for one tau.
pub fn summarize(groups: &[RunGroup], config: &ExperimentConfig, tau: usize) -> StatsTable {
    let truths = config.true_intention.intentions();
    let schemes = config.schemes.clone();
    let (nt, ns) = (truths.len(), schemes.len());
    let mut wins = vec![vec![0usize; ns]; nt];
    let mut pct_sum = vec![vec![0.0f64; ns]; nt];
    let mut run_count = vec![0usize; nt];
    let mut excluded_failed = vec![0usize; nt];
    let mut excluded_zero_cost = vec![0usize; nt];
    for g in groups.iter().filter(|g| g.tau == tau) {
        let Some(r) = truths.iter().position(|&t| t == g.truth) else { continue };
        let Some(totals) = g.totals() else {
            excluded_failed[r] += 1;
            continue;
        };
        let w = run_winner(&schemes, &totals, g.truth);
        let Some(pct) = pct_above_winner(&totals, w) else {
            excluded_zero_cost[r] += 1;
            continue;
        };
        wins[r][w] += 1;
        for (acc, p) in pct_sum[r].iter_mut().zip(pct) {
            *acc += p;
        }
        run_count[r] += 1;
    }
    let mean = |num: f64, n: usize| if n == 0 { 0.0 } else { num / n as f64 };
    let win_percent = wins
        .iter()
        .zip(&run_count)
        .map(|(row, &n)| row.iter().map(|&w| mean(100.0 * w as f64, n)).collect())
        .collect();
    let pct_higher =
        pct_sum.iter().zip(&run_count).map(|(row, &n)| row.iter().map(|&s| mean(s, n)).collect()).collect();
    StatsTable {
        tau,
        info_structure: config.info_structure,
        truths,
        schemes,
        wins,
        win_percent,
        pct_higher,
        run_count,
        excluded_failed,
        excluded_zero_cost,
    }
}

impl ExperimentResult {
    /// One table per configured tau, in config order.
    pub fn tables(&self) -> Vec<StatsTable> {
        self.config.tau_values.iter().map(|&tau| summarize(&self.groups, &self.config, tau)).collect()
    }
}

/// Runs the experiment once over all configured taus on shared samples.
pub fn tau_sweep(config: &ExperimentConfig) -> Result<Vec<StatsTable>> {
    Ok(run_experiment(config)?.tables())
}
