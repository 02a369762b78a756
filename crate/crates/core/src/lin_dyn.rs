//! Joint linear dynamics `x_{t+1} = A x_t + B^L u^L_t + B^F u^F_t`, the
//! stacked trajectory matrices `x = H x_0 + G^L u^L + G^F u^F`, and rollouts
//! under open-loop controls or feedback gains.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Largest admissible `n * horizon_len` for stacked matrices.
pub const MAX_STACKED_ROWS: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Player {
    Leader,
    Follower,
}

type StackedCache<S> = Arc<RwLock<HashMap<usize, Arc<StackedMatrices<S>>>>>;

/// Shared time-invariant system `(A, B^L, B^F)`.
///
/// Stacked matrices are memoised per horizon length; clones share the cache.
#[derive(Clone)]
pub struct LtiGameDynamics<S: Real> {
    a: DMatrix<S>,
    b_leader: DMatrix<S>,
    b_follower: DMatrix<S>,
    cache: StackedCache<S>,
}

impl<S: Real> fmt::Debug for LtiGameDynamics<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LtiGameDynamics")
            .field("a", &self.a)
            .field("b_leader", &self.b_leader)
            .field("b_follower", &self.b_follower)
            .finish()
    }
}

impl<S: Real> PartialEq for LtiGameDynamics<S> {
    fn eq(&self, other: &Self) -> bool {
        self.a == other.a && self.b_leader == other.b_leader && self.b_follower == other.b_follower
    }
}

pub(crate) fn check_finite<S: Real>(m: &DMatrix<S>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

impl<S: Real> LtiGameDynamics<S> {
    pub fn new(a: DMatrix<S>, b_leader: DMatrix<S>, b_follower: DMatrix<S>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::Dimension(format!("A must be square and non-empty, got {}x{}", n, a.ncols())));
        }
        if b_leader.nrows() != n || b_follower.nrows() != n {
            return Err(Error::Dimension(format!(
                "B^L has {} rows and B^F has {} rows, expected {}",
                b_leader.nrows(),
                b_follower.nrows(),
                n
            )));
        }
        if b_leader.ncols() == 0 || b_follower.ncols() == 0 {
            return Err(Error::Dimension("control dimensions must be positive".into()));
        }
        check_finite(&a, "A")?;
        check_finite(&b_leader, "B^L")?;
        check_finite(&b_follower, "B^F")?;
        Ok(Self { a, b_leader, b_follower, cache: Arc::default() })
    }

    /// Scalar system `x' = a x + b_l u^L + b_f u^F`.
    pub fn scalar(a: S, b_leader: S, b_follower: S) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b_leader),
            DMatrix::from_element(1, 1, b_follower),
        )
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self, player: Player) -> usize {
        self.b(player).ncols()
    }

    pub fn a(&self) -> &DMatrix<S> {
        &self.a
    }

    pub fn b(&self, player: Player) -> &DMatrix<S> {
        match player {
            Player::Leader => &self.b_leader,
            Player::Follower => &self.b_follower,
        }
    }

    /// One step of the joint recursion. Every rollout and every estimator
    /// prediction goes through here so that identical inputs give identical bits.
    pub fn step(&self, x: &DVector<S>, u_leader: &DVector<S>, u_follower: &DVector<S>) -> DVector<S> {
        &self.a * x + &self.b_leader * u_leader + &self.b_follower * u_follower
    }

    /// Memoised [`build_stacked`].
    pub fn stacked(&self, horizon_len: usize) -> Result<Arc<StackedMatrices<S>>> {
        if let Some(hit) = self.cache.read().expect("stacked cache poisoned").get(&horizon_len) {
            return Ok(Arc::clone(hit));
        }
        let built = Arc::new(build_stacked(self, horizon_len)?);
        let mut w = self.cache.write().expect("stacked cache poisoned");
        Ok(Arc::clone(w.entry(horizon_len).or_insert(built)))
    }

    pub(crate) fn check_state(&self, x: &DVector<S>) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::Dimension(format!("state has length {}, expected {}", x.len(), self.n())));
        }
        Ok(())
    }
}

/// `H`, `G^L`, `G^F` for a horizon of `horizon_len` states.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedMatrices<S: Real> {
    pub h: DMatrix<S>,
    pub g_leader: DMatrix<S>,
    pub g_follower: DMatrix<S>,
    pub horizon_len: usize,
}

impl<S: Real> StackedMatrices<S> {
    pub fn g(&self, player: Player) -> &DMatrix<S> {
        match player {
            Player::Leader => &self.g_leader,
            Player::Follower => &self.g_follower,
        }
    }

    /// Stacked state trajectory `H x0 + G^L u^L + G^F u^F`.
    pub fn states(&self, x0: &DVector<S>, u_leader: &DVector<S>, u_follower: &DVector<S>) -> DVector<S> {
        &self.h * x0 + &self.g_leader * u_leader + &self.g_follower * u_follower
    }
}

/// Builds the stacked matrices for a horizon of `horizon_len` states
/// (`horizon_len - 1` control steps).
///
/// Block row `r` of `H` is `A^r`; block `(r, c)` of `G^i` is `A^(r-c-1) B^i`
/// for `r > c` and zero otherwise.
pub fn build_stacked<S: Real>(dynamics: &LtiGameDynamics<S>, horizon_len: usize) -> Result<StackedMatrices<S>> {
    if horizon_len == 0 {
        return Err(Error::Dimension("horizon_len must be at least 1".into()));
    }
    let n = dynamics.n();
    let rows = n.saturating_mul(horizon_len);
    if rows > MAX_STACKED_ROWS {
        return Err(Error::InfeasibleSize { rows, cap: MAX_STACKED_ROWS });
    }
    let steps = horizon_len - 1;

    let mut powers = Vec::with_capacity(horizon_len);
    powers.push(DMatrix::<S>::identity(n, n));
    for k in 1..horizon_len {
        let next = dynamics.a() * &powers[k - 1];
        powers.push(next);
    }

    let mut h = DMatrix::zeros(rows, n);
    for (r, p) in powers.iter().enumerate() {
        h.view_mut((r * n, 0), (n, n)).copy_from(p);
    }

    let build_g = |b: &DMatrix<S>| {
        let m = b.ncols();
        let mut g = DMatrix::zeros(rows, m * steps);
        let pb: Vec<DMatrix<S>> = powers.iter().take(steps).map(|p| p * b).collect();
        for r in 1..horizon_len {
            for c in 0..r {
                g.view_mut((r * n, c * m), (n, m)).copy_from(&pb[r - c - 1]);
            }
        }
        g
    };

    Ok(StackedMatrices {
        g_leader: build_g(dynamics.b(Player::Leader)),
        g_follower: build_g(dynamics.b(Player::Follower)),
        h,
        horizon_len,
    })
}

/// States and both players' controls over an absolute time window
/// `[start_time, start_time + states.len() - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S: Real> {
    pub states: Vec<DVector<S>>,
    pub u_leader: Vec<DVector<S>>,
    pub u_follower: Vec<DVector<S>>,
    pub start_time: usize,
}

impl<S: Real> Trajectory<S> {
    /// Number of states.
    pub fn horizon_len(&self) -> usize {
        self.states.len()
    }

    /// Absolute time of the last state.
    pub fn end_time(&self) -> usize {
        self.start_time + self.states.len() - 1
    }

    pub fn controls(&self, player: Player) -> &[DVector<S>] {
        match player {
            Player::Leader => &self.u_leader,
            Player::Follower => &self.u_follower,
        }
    }

    /// State at absolute time `t`.
    pub fn state_at(&self, t: usize) -> Option<&DVector<S>> {
        t.checked_sub(self.start_time).and_then(|k| self.states.get(k))
    }

    pub fn last_state(&self) -> &DVector<S> {
        self.states.last().expect("trajectory has at least one state")
    }

    /// Largest absolute residual of the dynamics recursion over all steps.
    pub fn max_residual(&self, dynamics: &LtiGameDynamics<S>) -> S {
        let mut worst = S::zero();
        for k in 0..self.u_leader.len() {
            let pred = dynamics.step(&self.states[k], &self.u_leader[k], &self.u_follower[k]);
            let r = (pred - &self.states[k + 1]).amax();
            if r > worst {
                worst = r;
            }
        }
        worst
    }

    /// Sub-trajectory over absolute times `[c, d]` (inclusive).
    pub fn slice(&self, c: usize, d: usize) -> Result<Trajectory<S>> {
        if c < self.start_time || d > self.end_time() || c > d {
            return Err(Error::Dimension(format!(
                "window [{c}, {d}] outside trajectory span [{}, {}]",
                self.start_time,
                self.end_time()
            )));
        }
        let (i, j) = (c - self.start_time, d - self.start_time);
        Ok(Trajectory {
            states: self.states[i..=j].to_vec(),
            u_leader: self.u_leader[i..j].to_vec(),
            u_follower: self.u_follower[i..j].to_vec(),
            start_time: c,
        })
    }

    /// Appends a segment that starts where this one ends.
    pub fn append(&mut self, next: &Trajectory<S>) -> Result<()> {
        if next.start_time != self.end_time() || next.states[0] != *self.last_state() {
            return Err(Error::Dimension(format!(
                "segment starting at t={} does not continue trajectory ending at t={}",
                next.start_time,
                self.end_time()
            )));
        }
        self.states.extend(next.states[1..].iter().cloned());
        self.u_leader.extend(next.u_leader.iter().cloned());
        self.u_follower.extend(next.u_follower.iter().cloned());
        Ok(())
    }

    /// Concatenated states as one vector of length `n * horizon_len`.
    pub fn stacked_states(&self) -> DVector<S> {
        stack(&self.states)
    }
}

/// Concatenates per-step vectors.
pub fn stack<S: Real>(parts: &[DVector<S>]) -> DVector<S> {
    let len = parts.iter().map(|p| p.len()).sum();
    DVector::from_iterator(len, parts.iter().flat_map(|p| p.iter().copied()))
}

/// Splits a stacked vector into `dim`-sized pieces.
pub fn split<S: Real>(v: &DVector<S>, dim: usize) -> Vec<DVector<S>> {
    assert!(dim > 0 && v.len().is_multiple_of(dim), "cannot split length {} into blocks of {}", v.len(), dim);
    (0..v.len() / dim).map(|k| v.rows(k * dim, dim).into_owned()).collect()
}

fn check_controls<S: Real>(controls: &[DVector<S>], m: usize, who: &str) -> Result<()> {
    if let Some((k, bad)) = controls.iter().enumerate().find(|(_, u)| u.len() != m) {
        return Err(Error::Dimension(format!("{who} control at step {k} has length {}, expected {m}", bad.len())));
    }
    Ok(())
}

/// Rolls the recursion forward from `x0` under fixed control sequences.
pub fn rollout_open_loop<S: Real>(
    dynamics: &LtiGameDynamics<S>,
    x0: &DVector<S>,
    u_leader: &[DVector<S>],
    u_follower: &[DVector<S>],
) -> Result<Trajectory<S>> {
    dynamics.check_state(x0)?;
    if u_leader.len() != u_follower.len() {
        return Err(Error::Dimension(format!(
            "leader has {} controls, follower has {}",
            u_leader.len(),
            u_follower.len()
        )));
    }
    check_controls(u_leader, dynamics.m(Player::Leader), "leader")?;
    check_controls(u_follower, dynamics.m(Player::Follower), "follower")?;

    let mut states = Vec::with_capacity(u_leader.len() + 1);
    states.push(x0.clone());
    for (ul, uf) in u_leader.iter().zip(u_follower) {
        let next = dynamics.step(states.last().unwrap(), ul, uf);
        states.push(next);
    }
    Ok(Trajectory { states, u_leader: u_leader.to_vec(), u_follower: u_follower.to_vec(), start_time: 0 })
}

/// Rolls forward with `u^i_t = -K^i_t x_t`; the realised controls are stored.
pub fn rollout_feedback<S: Real>(
    dynamics: &LtiGameDynamics<S>,
    x0: &DVector<S>,
    k_leader: &[DMatrix<S>],
    k_follower: &[DMatrix<S>],
) -> Result<Trajectory<S>> {
    dynamics.check_state(x0)?;
    if k_leader.len() != k_follower.len() {
        return Err(Error::Dimension(format!(
            "leader has {} gains, follower has {}",
            k_leader.len(),
            k_follower.len()
        )));
    }
    let n = dynamics.n();
    for (who, gains, m) in [
        ("leader", k_leader, dynamics.m(Player::Leader)),
        ("follower", k_follower, dynamics.m(Player::Follower)),
    ] {
        if let Some(k) = gains.iter().position(|g| g.shape() != (m, n)) {
            return Err(Error::Dimension(format!(
                "{who} gain at step {k} is {:?}, expected ({m}, {n})",
                gains[k].shape()
            )));
        }
    }

    let steps = k_leader.len();
    let mut traj = Trajectory {
        states: Vec::with_capacity(steps + 1),
        u_leader: Vec::with_capacity(steps),
        u_follower: Vec::with_capacity(steps),
        start_time: 0,
    };
    traj.states.push(x0.clone());
    for (kl, kf) in k_leader.iter().zip(k_follower) {
        let x = traj.states.last().unwrap();
        let ul = -(kl * x);
        let uf = -(kf * x);
        let next = dynamics.step(x, &ul, &uf);
        traj.u_leader.push(ul);
        traj.u_follower.push(uf);
        traj.states.push(next);
    }
    Ok(traj)
}
