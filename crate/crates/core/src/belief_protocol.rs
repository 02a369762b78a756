//! Play under changing follower beliefs.
//!
//! At every update instant the leader re-solves the remaining game from the
//! realised state under its current belief and announces the new strategy;
//! the true follower immediately re-best-responds to that announcement.
//! Between updates both players execute what was last announced. The
//! two-belief protocol (`b1` on `[0, tau)`, `b2` on `[tau, T]`) is the
//! two-segment case; fixed-belief schemes re-solve periodically with one
//! belief, and the adaptive scheme takes the MAP hypothesis of an estimator.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fse::{follower_response, solve_fse};
use crate::lin_dyn::{split, stack, Player, Trajectory};
use crate::lq_game::{decompose_cost, CostBreakdown, QuadCostModel, StackelbergGame};
use crate::mmae::{bayes_update, map_belief, residual_report, EstimatorConfig, EstimatorState};
use crate::olse::{build_ol_br, follower_lifted_gradient, solve_olse};
use crate::scalar::{lit, to_f64, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InfoStructure {
    OpenLoop,
    Feedback,
}

impl fmt::Display for InfoStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InfoStructure::OpenLoop => "open-loop",
            InfoStructure::Feedback => "feedback",
        })
    }
}

impl FromStr for InfoStructure {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "open-loop" | "openloop" | "ol" => Ok(InfoStructure::OpenLoop),
            "feedback" | "fb" => Ok(InfoStructure::Feedback),
            other => Err(format!("unknown information structure `{other}` (expected open-loop or feedback)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    FixedBelief,
    Adaptive,
}

/// Belief held by the leader on each segment, keyed by absolute start time.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefSchedule<S: Real> {
    pub segments: Vec<(usize, QuadCostModel<S>)>,
    pub scheme: SchemeKind,
}

impl<S: Real> BeliefSchedule<S> {
    pub fn new(segments: Vec<(usize, QuadCostModel<S>)>, scheme: SchemeKind, horizon: usize) -> Result<Self> {
        match segments.first() {
            None => return Err(Error::InvalidSchedule("no segments".into())),
            Some((0, _)) => {}
            Some((t, _)) => return Err(Error::InvalidSchedule(format!("first segment starts at {t}, not 0"))),
        }
        for w in segments.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidSchedule(format!("start times {} and {} not increasing", w[0].0, w[1].0)));
            }
        }
        if let Some((t, _)) = segments.iter().find(|(t, _)| *t >= horizon) {
            return Err(Error::InvalidSchedule(format!("segment start {t} not before horizon {horizon}")));
        }
        Ok(Self { segments, scheme })
    }

    /// `b1` from 0 and `b2` from `tau`; a single segment when `tau == T`.
    pub fn two_belief(b1: QuadCostModel<S>, b2: QuadCostModel<S>, tau: usize, horizon: usize) -> Result<Self> {
        if tau == 0 || tau > horizon {
            return Err(Error::TauOutOfRange { tau, horizon });
        }
        let mut segments = vec![(0, b1)];
        if tau < horizon {
            segments.push((tau, b2));
        }
        Self::new(segments, SchemeKind::FixedBelief, horizon)
    }

    /// One belief, re-solved at every multiple of `period`.
    pub fn periodic(belief: QuadCostModel<S>, period: usize, horizon: usize) -> Result<Self> {
        if period == 0 || period > horizon {
            return Err(Error::TauOutOfRange { tau: period, horizon });
        }
        let segments = (0..horizon).step_by(period).map(|t| (t, belief.clone())).collect();
        Self::new(segments, SchemeKind::FixedBelief, horizon)
    }

    pub fn update_times(&self) -> impl Iterator<Item = usize> + '_ {
        self.segments.iter().map(|(t, _)| *t)
    }

    /// Time of the first re-solve, or `horizon` if there is none.
    pub fn first_update(&self, horizon: usize) -> usize {
        self.segments.get(1).map_or(horizon, |(t, _)| *t)
    }
}

/// What the leader announced at a re-solve.
#[derive(Debug, Clone, PartialEq)]
pub enum Announcement<S: Real> {
    OpenLoop { start: usize, controls: Vec<DVector<S>> },
    Feedback { start: usize, gains: Vec<DMatrix<S>> },
}

impl<S: Real> Announcement<S> {
    pub fn start(&self) -> usize {
        match self {
            Announcement::OpenLoop { start, .. } | Announcement::Feedback { start, .. } => *start,
        }
    }

    /// Leader control at absolute time `t` from state `x`.
    pub fn leader_control(&self, t: usize, x: &DVector<S>) -> DVector<S> {
        match self {
            Announcement::OpenLoop { start, controls } => controls[t - start].clone(),
            Announcement::Feedback { start, gains } => -(&gains[t - start] * x),
        }
    }
}

/// A follower's response to one announcement.
#[derive(Debug, Clone, PartialEq)]
pub enum FollowerPlan<S: Real> {
    OpenLoop { start: usize, controls: Vec<DVector<S>> },
    Feedback { start: usize, gains: Vec<DMatrix<S>> },
}

impl<S: Real> FollowerPlan<S> {
    pub fn control_at(&self, t: usize, x: &DVector<S>) -> DVector<S> {
        match self {
            FollowerPlan::OpenLoop { start, controls } => controls[t - start].clone(),
            FollowerPlan::Feedback { start, gains } => -(&gains[t - start] * x),
        }
    }
}

/// Leader re-solve from `x` at absolute time `start` under `belief`.
pub fn announce<S: Real>(
    game: &StackelbergGame<S>,
    info: InfoStructure,
    belief: &QuadCostModel<S>,
    x: &DVector<S>,
    start: usize,
) -> Result<Announcement<S>> {
    let len = game.horizon - start + 1;
    Ok(match info {
        InfoStructure::OpenLoop => {
            let u = solve_olse(game, belief, x, len)?;
            Announcement::OpenLoop { start, controls: split(&u, game.dynamics.m(Player::Leader)) }
        }
        InfoStructure::Feedback => {
            let sol = solve_fse(&game.dynamics, &game.leader_cost, belief, len)?;
            Announcement::Feedback { start, gains: sol.leader_gains }
        }
    })
}

/// Best response of `follower` to `announcement`, made from `x_start`.
pub fn respond<S: Real>(
    game: &StackelbergGame<S>,
    follower: &QuadCostModel<S>,
    announcement: &Announcement<S>,
    x_start: &DVector<S>,
) -> Result<FollowerPlan<S>> {
    let len = game.horizon - announcement.start() + 1;
    Ok(match announcement {
        Announcement::OpenLoop { start, controls } => {
            let br = build_ol_br(&game.dynamics, follower, len)?;
            let uf = br.respond(x_start, &stack(controls));
            FollowerPlan::OpenLoop { start: *start, controls: split(&uf, game.dynamics.m(Player::Follower)) }
        }
        Announcement::Feedback { start, gains } => {
            let resp = follower_response(&game.dynamics, follower, gains)?;
            FollowerPlan::Feedback { start: *start, gains: resp.gains }
        }
    })
}

/// Decides when the leader re-solves and under which belief.
trait BeliefSource<S: Real> {
    fn is_update(&self, t: usize) -> bool;
    fn belief(&mut self, t: usize) -> Result<QuadCostModel<S>>;
    fn on_announce(&mut self, _game: &StackelbergGame<S>, _ann: &Announcement<S>, _x: &DVector<S>) -> Result<()> {
        Ok(())
    }
    fn observe(
        &mut self,
        _game: &StackelbergGame<S>,
        _t: usize,
        _x_prev: &DVector<S>,
        _u_leader: &DVector<S>,
        _x_next: &DVector<S>,
    ) -> Result<()> {
        Ok(())
    }
}

struct FixedSource<'a, S: Real> {
    schedule: &'a BeliefSchedule<S>,
}

impl<S: Real> BeliefSource<S> for FixedSource<'_, S> {
    fn is_update(&self, t: usize) -> bool {
        self.schedule.update_times().any(|s| s == t)
    }

    fn belief(&mut self, t: usize) -> Result<QuadCostModel<S>> {
        self.schedule
            .segments
            .iter()
            .find(|(s, _)| *s == t)
            .map(|(_, b)| b.clone())
            .ok_or_else(|| Error::InvalidSchedule(format!("no segment starts at {t}")))
    }
}

struct AdaptiveSource<S: Real> {
    period: usize,
    estimator: EstimatorState<S>,
    plans: Vec<FollowerPlan<S>>,
    trace: Vec<Vec<S>>,
}

impl<S: Real> BeliefSource<S> for AdaptiveSource<S> {
    fn is_update(&self, t: usize) -> bool {
        t.is_multiple_of(self.period)
    }

    fn belief(&mut self, _t: usize) -> Result<QuadCostModel<S>> {
        Ok(map_belief(&self.estimator).clone())
    }

    fn on_announce(&mut self, game: &StackelbergGame<S>, ann: &Announcement<S>, x: &DVector<S>) -> Result<()> {
        self.plans = self
            .estimator
            .hypotheses
            .iter()
            .map(|h| respond(game, h, ann, x))
            .collect::<Result<_>>()?;
        Ok(())
    }

    fn observe(
        &mut self,
        game: &StackelbergGame<S>,
        t: usize,
        x_prev: &DVector<S>,
        u_leader: &DVector<S>,
        x_next: &DVector<S>,
    ) -> Result<()> {
        let report = residual_report(&game.dynamics, x_prev, u_leader, x_next, &self.plans, t)?;
        self.estimator = bayes_update(&self.estimator, &report.likelihoods)?;
        self.trace.push(self.estimator.probs.clone());
        Ok(())
    }
}

/// One simulated playthrough over `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord<S: Real> {
    pub trajectory: Trajectory<S>,
    pub schedule: BeliefSchedule<S>,
    pub info: InfoStructure,
    pub announcements: Vec<Announcement<S>>,
    /// The true follower's response to each announcement.
    pub follower_plans: Vec<FollowerPlan<S>>,
    pub breakdown: CostBreakdown<S>,
    pub seed: Option<u64>,
}

fn play<S: Real>(
    game: &StackelbergGame<S>,
    x0: &DVector<S>,
    info: InfoStructure,
    scheme: SchemeKind,
    source: &mut dyn BeliefSource<S>,
) -> Result<RunRecord<S>> {
    game.dynamics.check_state(x0)?;
    let horizon = game.horizon;
    let mut traj = Trajectory {
        states: Vec::with_capacity(horizon + 1),
        u_leader: Vec::with_capacity(horizon),
        u_follower: Vec::with_capacity(horizon),
        start_time: 0,
    };
    traj.states.push(x0.clone());
    let mut segments = Vec::new();
    let mut announcements: Vec<Announcement<S>> = Vec::new();
    let mut follower_plans: Vec<FollowerPlan<S>> = Vec::new();

    for t in 0..horizon {
        let x = traj.states.last().unwrap().clone();
        if t == 0 || source.is_update(t) {
            let belief = source.belief(t)?;
            game.check_belief(&belief)?;
            let ann = announce(game, info, &belief, &x, t)?;
            let plan = respond(game, &game.follower_cost, &ann, &x)?;
            source.on_announce(game, &ann, &x)?;
            segments.push((t, belief));
            announcements.push(ann);
            follower_plans.push(plan);
        }
        let ul = announcements.last().unwrap().leader_control(t, &x);
        let uf = follower_plans.last().unwrap().control_at(t, &x);
        let next = game.dynamics.step(&x, &ul, &uf);
        source.observe(game, t, &x, &ul, &next)?;
        traj.u_leader.push(ul);
        traj.u_follower.push(uf);
        traj.states.push(next);
    }

    let schedule = BeliefSchedule::new(segments, scheme, horizon)?;
    let breakdown = decompose_cost(&traj, &game.leader_cost, schedule.first_update(horizon))?;
    Ok(RunRecord { trajectory: traj, schedule, info, announcements, follower_plans, breakdown, seed: None })
}

/// Plays `schedule` against the game's true follower.
pub fn run_schedule<S: Real>(
    game: &StackelbergGame<S>,
    x0: &DVector<S>,
    schedule: &BeliefSchedule<S>,
    info: InfoStructure,
) -> Result<RunRecord<S>> {
    if let Some((t, _)) = schedule.segments.iter().find(|(t, _)| *t >= game.horizon) {
        return Err(Error::InvalidSchedule(format!("segment start {t} not before horizon {}", game.horizon)));
    }
    play(game, x0, info, schedule.scheme, &mut FixedSource { schedule })
}

/// Two-belief protocol: `b1` until `tau`, re-solve under `b2` at `tau`.
pub fn run_with_update<S: Real>(
    game: &StackelbergGame<S>,
    x0: &DVector<S>,
    b1: &QuadCostModel<S>,
    b2: &QuadCostModel<S>,
    tau: usize,
    info: InfoStructure,
) -> Result<RunRecord<S>> {
    let schedule = BeliefSchedule::two_belief(b1.clone(), b2.clone(), tau, game.horizon)?;
    run_schedule(game, x0, &schedule, info)
}

/// Fixed-belief scheme: re-solve under `belief` at every multiple of `period`.
pub fn run_fixed_periodic<S: Real>(
    game: &StackelbergGame<S>,
    x0: &DVector<S>,
    belief: &QuadCostModel<S>,
    period: usize,
    info: InfoStructure,
) -> Result<RunRecord<S>> {
    let schedule = BeliefSchedule::periodic(belief.clone(), period, game.horizon)?;
    run_schedule(game, x0, &schedule, info)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveRun<S: Real> {
    pub record: RunRecord<S>,
    /// Posterior after each observed state; entry 0 is the uniform prior.
    pub posterior_trace: Vec<Vec<S>>,
    pub final_estimator: EstimatorState<S>,
}

/// Adaptive scheme: the estimator updates after every step and the leader
/// re-solves under the MAP hypothesis at every multiple of `period`.
pub fn run_adaptive<S: Real>(
    game: &StackelbergGame<S>,
    x0: &DVector<S>,
    config: &EstimatorConfig<S>,
    period: usize,
    info: InfoStructure,
) -> Result<AdaptiveRun<S>> {
    if period == 0 || period > game.horizon {
        return Err(Error::TauOutOfRange { tau: period, horizon: game.horizon });
    }
    for h in &config.hypotheses {
        game.check_belief(h)?;
    }
    let estimator = EstimatorState::uniform(config)?;
    let mut source = AdaptiveSource { period, trace: vec![estimator.probs.clone()], estimator, plans: Vec::new() };
    let record = play(game, x0, info, SchemeKind::Adaptive, &mut source)?;
    Ok(AdaptiveRun { record, posterior_trace: source.trace, final_estimator: source.estimator })
}

impl<S: Real> RunRecord<S> {
    pub fn total_cost(&self) -> S {
        self.breakdown.total
    }

    pub fn leader_controls(&self) -> &[DVector<S>] {
        &self.trajectory.u_leader
    }

    pub fn follower_controls(&self) -> &[DVector<S>] {
        &self.trajectory.u_follower
    }

    /// Leader cost split at an arbitrary `tau`.
    pub fn decompose(&self, game: &StackelbergGame<S>, tau: usize) -> Result<CostBreakdown<S>> {
        decompose_cost(&self.trajectory, &game.leader_cost, tau)
    }

    fn segment_end(&self, i: usize) -> usize {
        self.announcements.get(i + 1).map_or(self.trajectory.end_time(), |a| a.start())
    }

    /// Executed leader gains over `[0, T)` (feedback runs only).
    pub fn composite_leader_gains(&self) -> Option<Vec<DMatrix<S>>> {
        let mut out = Vec::new();
        for (i, ann) in self.announcements.iter().enumerate() {
            let Announcement::Feedback { start, gains } = ann else { return None };
            out.extend(gains[..self.segment_end(i) - start].iter().cloned());
        }
        Some(out)
    }

    /// Executed follower gains over `[0, T)` (feedback runs only).
    pub fn composite_follower_gains(&self) -> Option<Vec<DMatrix<S>>> {
        let mut out = Vec::new();
        for (i, plan) in self.follower_plans.iter().enumerate() {
            let FollowerPlan::Feedback { start, gains } = plan else { return None };
            out.extend(gains[..self.segment_end(i) - start].iter().cloned());
        }
        Some(out)
    }

    /// Re-derives the true follower's response to every announcement and
    /// returns the worst deviation found: the norm of the follower's lifted
    /// gradient for open-loop segments, the largest gain mismatch for
    /// feedback segments, and any mismatch between planned and executed
    /// follower controls.
    pub fn verify_follower_truth(&self, game: &StackelbergGame<S>) -> Result<S> {
        let mut worst = S::zero();
        for (i, (ann, plan)) in self.announcements.iter().zip(&self.follower_plans).enumerate() {
            let start = ann.start();
            let x_start = self
                .trajectory
                .state_at(start)
                .ok_or_else(|| Error::Dimension(format!("no state at t={start}")))?;
            let dev = match (ann, plan) {
                (Announcement::OpenLoop { controls, .. }, FollowerPlan::OpenLoop { controls: uf, .. }) => {
                    follower_lifted_gradient(&game.dynamics, &game.follower_cost, x_start, &stack(controls), &stack(uf))?
                        .norm()
                }
                (Announcement::Feedback { gains, .. }, FollowerPlan::Feedback { gains: kf, .. }) => {
                    let resp = follower_response(&game.dynamics, &game.follower_cost, gains)?;
                    resp.gains.iter().zip(kf).map(|(a, b)| (a - b).amax()).fold(S::zero(), |a, b| a.max(b))
                }
                _ => return Err(Error::Dimension("announcement and plan disagree on information structure".into())),
            };
            worst = worst.max(dev);
            for t in start..self.segment_end(i) {
                let x = &self.trajectory.states[t];
                let executed = &self.trajectory.u_follower[t];
                worst = worst.max((plan.control_at(t, x) - executed).amax());
            }
        }
        Ok(worst)
    }

    /// Flat, serialisable summary.
    pub fn summary(&self) -> RunSummary {
        let rows = |vs: &[DVector<S>]| vs.iter().map(|v| v.iter().map(|&e| to_f64(e)).collect()).collect();
        RunSummary {
            info: self.info,
            scheme: self.schedule.scheme,
            schedule: self.schedule.segments.iter().map(|(t, b)| (*t, b.label().to_string())).collect(),
            seed: self.seed,
            tau: self.breakdown.tau,
            pre_update: to_f64(self.breakdown.pre_update),
            post_update: to_f64(self.breakdown.post_update),
            total: to_f64(self.breakdown.total),
            states: rows(&self.trajectory.states),
            u_leader: rows(&self.trajectory.u_leader),
            u_follower: rows(&self.trajectory.u_follower),
        }
    }
}

/// JSON-lines form of a [`RunRecord`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub info: InfoStructure,
    pub scheme: SchemeKind,
    pub schedule: Vec<(usize, String)>,
    pub seed: Option<u64>,
    pub tau: usize,
    pub pre_update: f64,
    pub post_update: f64,
    pub total: f64,
    pub states: Vec<Vec<f64>>,
    pub u_leader: Vec<Vec<f64>>,
    pub u_follower: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefComparison<S: Real> {
    pub labels: Vec<String>,
    pub totals: Vec<S>,
    pub winner: usize,
}

impl<S: Real> BeliefComparison<S> {
    pub fn winner_label(&self) -> &str {
        &self.labels[self.winner]
    }
}

/// Totals within this relative distance of the minimum count as tied.
pub const TIE_REL_TOL: f64 = 1e-12;

/// Index of the lowest total. Ties (see [`TIE_REL_TOL`]) go to `preferred`
/// when it is among the tied entries, then to the lexicographically
/// smallest label.
pub fn pick_winner<S: Real>(labels: &[String], totals: &[S], preferred: Option<usize>) -> usize {
    let min = totals.iter().copied().fold(totals[0], |a, b| a.min(b));
    let slack = min.abs() * lit::<S>(TIE_REL_TOL);
    let tied: Vec<usize> = (0..totals.len()).filter(|&i| totals[i] <= min + slack).collect();
    if let Some(p) = preferred.filter(|p| tied.contains(p)) {
        return p;
    }
    *tied.iter().min_by(|&&a, &&b| labels[a].cmp(&labels[b])).unwrap()
}

/// Runs every belief as a fixed-belief scheme with update period `tau` and
/// reports the leader's total cost for each.
pub fn compare_beliefs<S: Real>(
    game: &StackelbergGame<S>,
    x0: &DVector<S>,
    beliefs: &[QuadCostModel<S>],
    tau: usize,
    info: InfoStructure,
) -> Result<BeliefComparison<S>> {
    if beliefs.is_empty() {
        return Err(Error::InvalidSchedule("no beliefs to compare".into()));
    }
    let totals = beliefs
        .iter()
        .map(|b| run_fixed_periodic(game, x0, b, tau, info).map(|r| r.total_cost()))
        .collect::<Result<Vec<S>>>()?;
    let labels: Vec<String> = beliefs.iter().map(|b| b.label().to_string()).collect();
    let truth = beliefs
        .iter()
        .position(|b| b.q() == game.follower_cost.q() && b.r() == game.follower_cost.r());
    let winner = pick_winner(&labels, &totals, truth);
    Ok(BeliefComparison { labels, totals, winner })
}
