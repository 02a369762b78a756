//! Two double-integrator agents plus decaying reference states, a leader
//! that tracks its reference while keeping clear of the follower, and three
//! follower intentions: (T)racking the leader, (I)ndifferent, (A)voiding.
//!
//! State layout: `[x_L (2), x_F (2), r_L (2), r_F (2)]`. Cost matrices are
//! assembled from 2x2 sub-blocks on that 4x4 block grid.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use stackbelief_core::lq_game::PSD_TOL;
use stackbelief_core::{CostModel, Dynamics, Game};

use crate::error::{Result, SimError};

pub const STATE_DIM: usize = 8;

/// Amount added on top of `|λ_min|` when padding free diagonal blocks.
const PAD_MARGIN: f64 = 1e-6;
const MAX_PAD_ROUNDS: usize = 100;

/// A 2x2 sub-block, either a multiple of the identity or a full matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Block {
    Scaled(f64),
    Full([[f64; 2]; 2]),
}

impl Block {
    pub fn matrix(&self) -> Matrix2<f64> {
        match *self {
            Block::Scaled(s) => Matrix2::identity() * s,
            Block::Full([[a, b], [c, d]]) => Matrix2::new(a, b, c, d),
        }
    }

    /// Eigenvalues of the symmetric part, ascending.
    fn sym_eigs(&self) -> (f64, f64) {
        let m = self.matrix();
        let s = (m + m.transpose()) * 0.5;
        let e = s.symmetric_eigenvalues();
        (e[0].min(e[1]), e[0].max(e[1]))
    }

    fn is_pos_def(&self) -> bool {
        self.sym_eigs().0 > 0.0
    }

    fn is_neg_def(&self) -> bool {
        self.sym_eigs().1 < 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeaderWeights {
    pub q1: Block,
    pub q2: Block,
    pub q3: Block,
    pub q4: Block,
}

impl Default for LeaderWeights {
    fn default() -> Self {
        Self { q1: Block::Scaled(1.2), q2: Block::Scaled(0.1), q3: Block::Scaled(-1.0), q4: Block::Scaled(1.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingWeights {
    pub q1: Block,
    pub q2: Block,
    pub q3: Block,
}

impl Default for TrackingWeights {
    fn default() -> Self {
        Self { q1: Block::Scaled(1.0), q2: Block::Scaled(1.1), q3: Block::Scaled(-1.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndifferentWeights {
    pub q2: Block,
    pub q4: Block,
    pub q5: Block,
}

impl Default for IndifferentWeights {
    fn default() -> Self {
        Self { q2: Block::Scaled(1.1), q4: Block::Scaled(-1.0), q5: Block::Scaled(1.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AvoidingWeights {
    pub q2: Block,
    pub q3: Block,
    pub q4: Block,
    pub q5: Block,
}

impl Default for AvoidingWeights {
    fn default() -> Self {
        Self { q2: Block::Scaled(1.2), q3: Block::Scaled(0.1), q4: Block::Scaled(-1.0), q5: Block::Scaled(1.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    /// Control steps `T`.
    pub horizon: usize,
    /// Bound on `‖x0‖∞`.
    pub x0_bound: f64,
    /// Reference decay `σ` is drawn from `(lo, hi]`.
    pub sigma_range: [f64; 2],
    pub epsilon: f64,
    pub alpha: f64,
    pub r_leader: f64,
    pub r_follower: f64,
    pub leader: LeaderWeights,
    pub tracking: TrackingWeights,
    pub indifferent: IndifferentWeights,
    pub avoiding: AvoidingWeights,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            horizon: 20,
            x0_bound: 20.0,
            sigma_range: [0.0, 1.0],
            epsilon: 0.1,
            alpha: 0.1,
            r_leader: 1.0,
            r_follower: 1.0,
            leader: LeaderWeights::default(),
            tracking: TrackingWeights::default(),
            indifferent: IndifferentWeights::default(),
            avoiding: AvoidingWeights::default(),
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SimError::Config(msg));
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if !(self.x0_bound.is_finite() && self.x0_bound > 0.0) {
            return bad(format!("x0_bound must be positive and finite, got {}", self.x0_bound));
        }
        let [lo, hi] = self.sigma_range;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return bad(format!("sigma_range must satisfy 0 <= lo < hi <= 1, got [{lo}, {hi}]"));
        }
        for (name, v) in [("epsilon", self.epsilon), ("alpha", self.alpha)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("r_leader", self.r_leader), ("r_follower", self.r_follower)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        let signs = [
            ("leader.q2", self.leader.q2.is_pos_def(), "positive"),
            ("leader.q3", self.leader.q3.is_neg_def(), "negative"),
            ("tracking.q3", self.tracking.q3.is_neg_def(), "negative"),
            ("indifferent.q4", self.indifferent.q4.is_neg_def(), "negative"),
            ("avoiding.q4", self.avoiding.q4.is_neg_def(), "negative"),
        ];
        for (name, ok, kind) in signs {
            if !ok {
                return bad(format!("{name} must be {kind} definite"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Intention {
    T,
    I,
    A,
}

impl Intention {
    pub const ALL: [Intention; 3] = [Intention::T, Intention::I, Intention::A];

    pub fn label(self) -> &'static str {
        match self {
            Intention::T => "T",
            Intention::I => "I",
            Intention::A => "A",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Intention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Intention {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "T" | "t" | "tracking" => Ok(Intention::T),
            "I" | "i" | "indifferent" => Ok(Intention::I),
            "A" | "a" | "avoiding" => Ok(Intention::A),
            other => Err(format!("unknown intention `{other}` (expected T, I or A)")),
        }
    }
}

/// The three follower models, indexed by [`Intention::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct IntentionSet {
    pub models: [CostModel; 3],
}

impl IntentionSet {
    pub fn get(&self, i: Intention) -> &CostModel {
        &self.models[i.index()]
    }
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

/// Builds an 8x8 symmetric matrix from upper-triangle blocks (mirrored), then
/// pads the `free` diagonal blocks until the result is PSD.
fn assemble(label: &str, blocks: &[((usize, usize), Matrix2<f64>)], free: &[usize]) -> Result<DMatrix<f64>> {
    let mut q = DMatrix::zeros(STATE_DIM, STATE_DIM);
    for &((r, c), b) in blocks {
        q.fixed_view_mut::<2, 2>(2 * r, 2 * c).copy_from(&b);
        if r != c {
            q.fixed_view_mut::<2, 2>(2 * c, 2 * r).copy_from(&b.transpose());
        }
    }
    for _ in 0..MAX_PAD_ROUNDS {
        let lambda = min_eig(&q);
        if lambda >= PSD_TOL {
            return Ok(q);
        }
        if free.is_empty() {
            return Err(SimError::NotPsd { label: label.into(), eigenvalue: lambda });
        }
        for &k in free {
            for d in 2 * k..2 * k + 2 {
                q[(d, d)] += lambda.abs() + PAD_MARGIN;
            }
        }
    }
    Err(SimError::NotPsd { label: label.into(), eigenvalue: min_eig(&q) })
}

pub fn build_leader_cost(p: &ScenarioParams) -> Result<CostModel> {
    let w = &p.leader;
    let q = assemble(
        "L",
        &[
            ((0, 0), w.q1.matrix()),
            ((0, 1), w.q2.matrix()),
            ((0, 2), w.q3.matrix()),
            ((1, 1), Matrix2::identity() * p.epsilon),
            ((2, 2), w.q4.matrix()),
        ],
        &[0, 2],
    )?;
    Ok(CostModel::new("L", q, DMatrix::from_element(1, 1, p.r_leader))?)
}

pub fn build_intentions(p: &ScenarioParams) -> Result<IntentionSet> {
    let r = DMatrix::from_element(1, 1, p.r_follower);
    let t = &p.tracking;
    let qt = assemble("T", &[((0, 0), t.q1.matrix()), ((0, 1), t.q3.matrix()), ((1, 1), t.q2.matrix())], &[0, 1])?;
    let i = &p.indifferent;
    let qi = assemble("I", &[((1, 1), i.q2.matrix()), ((1, 3), i.q4.matrix()), ((3, 3), i.q5.matrix())], &[1, 3])?;
    let a = &p.avoiding;
    let qa = assemble(
        "A",
        &[
            ((0, 0), Matrix2::identity() * p.alpha),
            ((0, 1), a.q3.matrix()),
            ((1, 1), a.q2.matrix()),
            ((1, 3), a.q4.matrix()),
            ((3, 3), a.q5.matrix()),
        ],
        &[1, 3],
    )?;
    Ok(IntentionSet {
        models: [CostModel::new("T", qt, r.clone())?, CostModel::new("I", qi, r.clone())?, CostModel::new("A", qa, r)?],
    })
}

/// Joint dynamics for reference decay rates `σ_L`, `σ_F` in `(0, 1]`.
pub fn build_joint_dynamics(sigma_leader: f64, sigma_follower: f64) -> Result<Dynamics> {
    for s in [sigma_leader, sigma_follower] {
        if !(s > 0.0 && s <= 1.0) {
            return Err(SimError::Config(format!("reference decay {s} outside (0, 1]")));
        }
    }
    let agent_a = Matrix2::new(1.0, 1.0, 0.0, 1.0);
    let mut a = DMatrix::zeros(STATE_DIM, STATE_DIM);
    a.fixed_view_mut::<2, 2>(0, 0).copy_from(&agent_a);
    a.fixed_view_mut::<2, 2>(2, 2).copy_from(&agent_a);
    a.fixed_view_mut::<2, 2>(4, 4).copy_from(&(Matrix2::identity() * sigma_leader));
    a.fixed_view_mut::<2, 2>(6, 6).copy_from(&(Matrix2::identity() * sigma_follower));
    let mut bl = DMatrix::zeros(STATE_DIM, 1);
    bl[(0, 0)] = 0.5;
    bl[(1, 0)] = 1.0;
    let mut bf = DMatrix::zeros(STATE_DIM, 1);
    bf[(2, 0)] = 0.5;
    bf[(3, 0)] = 1.0;
    Ok(Dynamics::new(a, bl, bf)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialSample {
    pub x0: Vec<f64>,
    pub sigma_leader: f64,
    pub sigma_follower: f64,
}

impl InitialSample {
    pub fn x0(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x0)
    }
}

/// Per-run generator: one ChaCha stream per run index under the master seed,
/// so samples do not depend on scheduling or on how many runs are drawn.
pub fn run_rng(master_seed: u64, run_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(run_index);
    rng
}

/// `x0` uniform on the `∞`-ball, `σ_L` and `σ_F` independent on `(lo, hi]`.
pub fn sample_initial<R: Rng + ?Sized>(rng: &mut R, p: &ScenarioParams) -> InitialSample {
    let b = p.x0_bound;
    let x0 = (0..STATE_DIM).map(|_| rng.random_range(-b..=b)).collect();
    let [lo, hi] = p.sigma_range;
    let mut sigma = || hi - (hi - lo) * rng.random::<f64>();
    let sigma_leader = sigma();
    let sigma_follower = sigma();
    InitialSample { x0, sigma_leader, sigma_follower }
}

/// Validated scenario: parameters plus the assembled cost models.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: ScenarioParams,
    pub leader: CostModel,
    pub intentions: IntentionSet,
}

impl Scenario {
    pub fn new(params: ScenarioParams) -> Result<Self> {
        params.validate()?;
        let leader = build_leader_cost(&params)?;
        let intentions = build_intentions(&params)?;
        Ok(Self { params, leader, intentions })
    }

    /// Ground-truth game for one sampled run.
    pub fn game(&self, sample: &InitialSample, truth: Intention) -> Result<Game> {
        let dynamics = build_joint_dynamics(sample.sigma_leader, sample.sigma_follower)?;
        Ok(Game::new(dynamics, self.leader.clone(), self.intentions.get(truth).clone(), self.params.horizon)?)
    }
}
