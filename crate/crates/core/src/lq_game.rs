//! Quadratic cost models, the game container, and trajectory-level cost
//! evaluation including the pre-/post-update split of the leader's cost.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lin_dyn::{check_finite, LtiGameDynamics, Player, Trajectory};
use crate::scalar::{lit, to_f64, Real};

/// Largest tolerated `|Q - Q^T|` entry.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Smallest admissible eigenvalue of a state weight.
pub const PSD_TOL: f64 = -1e-9;

/// One player's `(Q, R)` pair. A follower-side instance doubles as a
/// best-response belief held by the leader.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadCostModel<S: Real> {
    label: String,
    q: DMatrix<S>,
    r: DMatrix<S>,
}

pub(crate) fn min_eigenvalue<S: Real>(m: &DMatrix<S>) -> S {
    let sym = (m + m.transpose()) * lit::<S>(0.5);
    SymmetricEigen::new(sym).eigenvalues.min()
}

fn max_asymmetry<S: Real>(m: &DMatrix<S>) -> S {
    (m - m.transpose()).amax()
}

impl<S: Real> QuadCostModel<S> {
    /// Validates symmetry, `Q >= 0` and `R > 0`.
    pub fn new(label: impl Into<String>, q: DMatrix<S>, r: DMatrix<S>) -> Result<Self> {
        let label = label.into();
        let bad = |reason: String| Error::InvalidCost { label: label.clone(), reason };
        if !q.is_square() || q.nrows() == 0 {
            return Err(bad(format!("Q must be square, got {:?}", q.shape())));
        }
        if !r.is_square() || r.nrows() == 0 {
            return Err(bad(format!("R must be square, got {:?}", r.shape())));
        }
        check_finite(&q, "Q")?;
        check_finite(&r, "R")?;
        for (name, m) in [("Q", &q), ("R", &r)] {
            let asym = max_asymmetry(m);
            if asym > lit(SYMMETRY_TOL) {
                return Err(bad(format!("{name} is not symmetric (max deviation {:e})", to_f64(asym))));
            }
        }
        let q_min = min_eigenvalue(&q);
        if q_min < lit(PSD_TOL) {
            return Err(bad(format!("Q is not positive semidefinite (min eigenvalue {:e})", to_f64(q_min))));
        }
        let r_min = min_eigenvalue(&r);
        if r_min <= S::zero() {
            return Err(bad(format!("R is not positive definite (min eigenvalue {:e})", to_f64(r_min))));
        }
        Ok(Self { label, q, r })
    }

    pub fn scalar(label: impl Into<String>, q: S, r: S) -> Result<Self> {
        Self::new(label, DMatrix::from_element(1, 1, q), DMatrix::from_element(1, 1, r))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn q(&self) -> &DMatrix<S> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<S> {
        &self.r
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub(crate) fn check_dims(&self, dynamics: &LtiGameDynamics<S>, player: Player) -> Result<()> {
        let (n, m) = (dynamics.n(), dynamics.m(player));
        if self.q.nrows() != n || self.r.nrows() != m {
            return Err(Error::Dimension(format!(
                "cost `{}` is ({}x{}, {}x{}) but the {:?} needs Q {n}x{n} and R {m}x{m}",
                self.label,
                self.q.nrows(),
                self.q.ncols(),
                self.r.nrows(),
                self.r.ncols(),
                player
            )));
        }
        Ok(())
    }

    /// `x'Qx + u'Ru`.
    pub fn stage(&self, x: &DVector<S>, u: &DVector<S>) -> S {
        quad(x, &self.q) + quad(u, &self.r)
    }
}

pub(crate) fn quad<S: Real>(x: &DVector<S>, m: &DMatrix<S>) -> S {
    x.dot(&(m * x))
}

/// Plain config form of a [`QuadCostModel`]: square matrices as row-major arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRecord {
    pub label: String,
    #[serde(rename = "Q")]
    pub q: Vec<f64>,
    #[serde(rename = "R")]
    pub r: Vec<f64>,
}

fn square_from_row_major<S: Real>(label: &str, name: &str, data: &[f64]) -> Result<DMatrix<S>> {
    let dim = (data.len() as f64).sqrt().round() as usize;
    if dim == 0 || dim * dim != data.len() {
        return Err(Error::InvalidCost {
            label: label.to_string(),
            reason: format!("{name} has {} entries, which is not a non-empty square", data.len()),
        });
    }
    Ok(DMatrix::from_row_iterator(dim, dim, data.iter().map(|&v| lit::<S>(v))))
}

impl<S: Real> TryFrom<&CostRecord> for QuadCostModel<S> {
    type Error = Error;

    fn try_from(rec: &CostRecord) -> Result<Self> {
        let q = square_from_row_major(&rec.label, "Q", &rec.q)?;
        let r = square_from_row_major(&rec.label, "R", &rec.r)?;
        QuadCostModel::new(rec.label.clone(), q, r)
    }
}

impl<S: Real> From<&QuadCostModel<S>> for CostRecord {
    fn from(c: &QuadCostModel<S>) -> Self {
        let row_major = |m: &DMatrix<S>| m.transpose().iter().map(|&v| to_f64(v)).collect();
        CostRecord { label: c.label.clone(), q: row_major(&c.q), r: row_major(&c.r) }
    }
}

/// Ground-truth game: shared dynamics, the leader's cost, the follower's true
/// cost (its actual best response) and the horizon `T` in control steps.
#[derive(Debug, Clone, PartialEq)]
pub struct StackelbergGame<S: Real> {
    pub dynamics: LtiGameDynamics<S>,
    pub leader_cost: QuadCostModel<S>,
    pub follower_cost: QuadCostModel<S>,
    pub horizon: usize,
}

impl<S: Real> StackelbergGame<S> {
    pub fn new(
        dynamics: LtiGameDynamics<S>,
        leader_cost: QuadCostModel<S>,
        follower_cost: QuadCostModel<S>,
        horizon: usize,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Dimension("horizon must be at least 1".into()));
        }
        leader_cost.check_dims(&dynamics, Player::Leader)?;
        follower_cost.check_dims(&dynamics, Player::Follower)?;
        Ok(Self { dynamics, leader_cost, follower_cost, horizon })
    }

    /// Checks that a follower belief fits this game's dimensions.
    pub fn check_belief(&self, belief: &QuadCostModel<S>) -> Result<()> {
        belief.check_dims(&self.dynamics, Player::Follower)
    }

    /// Same game against a different true follower.
    pub fn with_follower(&self, follower_cost: QuadCostModel<S>) -> Result<Self> {
        Self::new(self.dynamics.clone(), self.leader_cost.clone(), follower_cost, self.horizon)
    }
}

/// Leader cost split at the update time `tau`; the terminal term belongs to
/// the post-update part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown<S> {
    pub pre_update: S,
    pub post_update: S,
    pub total: S,
    pub tau: usize,
}

/// Sum of `x_t'Qx_t + u_t'Ru_t` over the trajectory's control steps, plus
/// `x_end'Q x_end` when `include_terminal` is set.
pub fn eval_cost<S: Real>(
    traj: &Trajectory<S>,
    player: Player,
    cost: &QuadCostModel<S>,
    include_terminal: bool,
) -> Result<S> {
    let controls = traj.controls(player);
    if traj.states.len() != controls.len() + 1 {
        return Err(Error::Dimension(format!(
            "trajectory has {} states but {} controls",
            traj.states.len(),
            controls.len()
        )));
    }
    let n = cost.q.nrows();
    let m = cost.r.nrows();
    if traj.states.iter().any(|x| x.len() != n) || controls.iter().any(|u| u.len() != m) {
        return Err(Error::Dimension(format!("cost `{}` does not match trajectory dimensions", cost.label)));
    }
    let mut total = S::zero();
    for (x, u) in traj.states.iter().zip(controls) {
        total += cost.stage(x, u);
    }
    if include_terminal {
        total += quad(traj.last_state(), &cost.q);
    }
    Ok(total)
}

/// Splits the leader's cost on a full `[0, T]` trajectory at `tau`:
/// stages `0..tau` before, stages `tau..T` plus the terminal term after.
pub fn decompose_cost<S: Real>(
    traj: &Trajectory<S>,
    leader_cost: &QuadCostModel<S>,
    tau: usize,
) -> Result<CostBreakdown<S>> {
    let horizon = traj.end_time();
    if traj.start_time != 0 {
        return Err(Error::Dimension("cost decomposition needs a trajectory starting at t=0".into()));
    }
    if tau == 0 || tau > horizon {
        return Err(Error::TauOutOfRange { tau, horizon });
    }
    let pre_update = eval_cost(&traj.slice(0, tau)?, Player::Leader, leader_cost, false)?;
    let post_update = eval_cost(&traj.slice(tau, horizon)?, Player::Leader, leader_cost, true)?;
    Ok(CostBreakdown { pre_update, post_update, total: pre_update + post_update, tau })
}

/// Block-diagonal lifts `Q̄ = blkdiag(Q, ..., Q)` with `steps + 1` blocks and
/// `R̄ = blkdiag(R, ..., R)` with `steps` blocks.
pub fn lift_block_costs<S: Real>(cost: &QuadCostModel<S>, steps: usize) -> (DMatrix<S>, DMatrix<S>) {
    (block_diag(&cost.q, steps + 1), block_diag(&cost.r, steps))
}

pub(crate) fn block_diag<S: Real>(block: &DMatrix<S>, count: usize) -> DMatrix<S> {
    let (r, c) = block.shape();
    let mut out = DMatrix::zeros(r * count, c * count);
    for k in 0..count {
        out.view_mut((k * r, k * c), (r, c)).copy_from(block);
    }
    out
}
