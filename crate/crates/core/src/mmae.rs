//! Multiple-model adaptive estimation over a finite bank of follower cost
//! hypotheses: one-step predictions per hypothesis, softmin residual
//! likelihoods, a recursive Bayes posterior and a MAP pick.

use nalgebra::DVector;

use crate::belief_protocol::FollowerPlan;
use crate::error::{Error, Result};
use crate::lin_dyn::LtiGameDynamics;
use crate::lq_game::QuadCostModel;
use crate::scalar::{lit, Real};

/// Posterior mass never drops below this before renormalisation, so a
/// hypothesis can recover if later residuals favour it.
pub const DEFAULT_PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig<S: Real> {
    pub hypotheses: Vec<QuadCostModel<S>>,
    pub prob_floor: S,
}

impl<S: Real> EstimatorConfig<S> {
    pub fn new(hypotheses: Vec<QuadCostModel<S>>) -> Self {
        Self { hypotheses, prob_floor: lit(DEFAULT_PROB_FLOOR) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState<S: Real> {
    pub hypotheses: Vec<QuadCostModel<S>>,
    pub probs: Vec<S>,
    pub step: usize,
    pub prob_floor: S,
}

impl<S: Real> EstimatorState<S> {
    /// Uniform prior over the configured hypotheses.
    pub fn uniform(config: &EstimatorConfig<S>) -> Result<Self> {
        if config.hypotheses.is_empty() {
            return Err(Error::EmptyHypotheses);
        }
        let k = config.hypotheses.len();
        let p = S::one() / lit::<S>(k as f64);
        Ok(Self { hypotheses: config.hypotheses.clone(), probs: vec![p; k], step: 0, prob_floor: config.prob_floor })
    }

    /// Index of the most probable hypothesis; ties go to the earliest.
    pub fn map_index(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate().skip(1) {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Per-hypothesis residuals `e_t(b) = x_t - x̂_t(b)` and their likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport<S: Real> {
    pub residuals: Vec<DVector<S>>,
    pub likelihoods: Vec<S>,
}

/// State the system would reach from `x_prev` at stage `t` had the follower
/// followed `plan` while the leader applied `leader_control`.
pub fn predict_state<S: Real>(
    dynamics: &LtiGameDynamics<S>,
    x_prev: &DVector<S>,
    leader_control: &DVector<S>,
    plan: &FollowerPlan<S>,
    t: usize,
) -> DVector<S> {
    dynamics.step(x_prev, leader_control, &plan.control_at(t, x_prev))
}

/// Softmin of residual norms: `exp(-‖e_b‖) / Σ exp(-‖e_β‖)`.
///
/// Evaluated with the smallest norm subtracted first, which leaves the
/// result unchanged but keeps large residuals from underflowing.
pub fn likelihoods<S: Real>(residual_norms: &[S]) -> Result<Vec<S>> {
    if residual_norms.is_empty() {
        return Err(Error::EmptyHypotheses);
    }
    if let Some(i) = residual_norms.iter().position(|r| r.partial_cmp(r).is_none()) {
        return Err(Error::NanResidual(i));
    }
    let min = residual_norms.iter().copied().fold(residual_norms[0], |a, b| a.min(b));
    let weights: Vec<S> = residual_norms.iter().map(|&r| (-(r - min)).exp()).collect();
    let total = weights.iter().copied().fold(S::zero(), |a, b| a + b);
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Residuals and likelihoods for every hypothesis plan at stage `t`.
pub fn residual_report<S: Real>(
    dynamics: &LtiGameDynamics<S>,
    x_prev: &DVector<S>,
    leader_control: &DVector<S>,
    x_observed: &DVector<S>,
    plans: &[FollowerPlan<S>],
    t: usize,
) -> Result<ResidualReport<S>> {
    let residuals: Vec<DVector<S>> = plans
        .iter()
        .map(|p| x_observed - predict_state(dynamics, x_prev, leader_control, p, t))
        .collect();
    let norms: Vec<S> = residuals.iter().map(|e| e.norm()).collect();
    Ok(ResidualReport { likelihoods: likelihoods(&norms)?, residuals })
}

/// `P(b | x_t) ∝ P(x_t | b) P(b | x_{t-1})`, floored and renormalised.
pub fn bayes_update<S: Real>(state: &EstimatorState<S>, likelihoods: &[S]) -> Result<EstimatorState<S>> {
    if likelihoods.len() != state.probs.len() {
        return Err(Error::Dimension(format!(
            "{} likelihoods for {} hypotheses",
            likelihoods.len(),
            state.probs.len()
        )));
    }
    let unnorm: Vec<S> = state.probs.iter().zip(likelihoods).map(|(p, l)| *p * *l).collect();
    let total = unnorm.iter().copied().fold(S::zero(), |a, b| a + b);
    if total <= S::zero() || !total.is_finite() {
        return Err(Error::EstimatorUnderflow);
    }
    let floored: Vec<S> = unnorm.iter().map(|p| (*p / total).max(state.prob_floor)).collect();
    let total = floored.iter().copied().fold(S::zero(), |a, b| a + b);
    Ok(EstimatorState {
        hypotheses: state.hypotheses.clone(),
        probs: floored.into_iter().map(|p| p / total).collect(),
        step: state.step + 1,
        prob_floor: state.prob_floor,
    })
}

/// MAP hypothesis, earliest on ties.
pub fn map_belief<S: Real>(state: &EstimatorState<S>) -> &QuadCostModel<S> {
    &state.hypotheses[state.map_index()]
}
