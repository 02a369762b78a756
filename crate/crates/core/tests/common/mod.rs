#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stackbelief_core::{CostModel, Dynamics, Game};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn mat(rng: &mut impl Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * rng.random_range(-1.0..1.0))
}

pub fn vec(rng: &mut impl Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * rng.random_range(-1.0..1.0))
}

/// Random PSD (PD when `shift > 0`) matrix.
pub fn spd(rng: &mut impl Rng, n: usize, shift: f64) -> DMatrix<f64> {
    let m = mat(rng, n, n, 1.0);
    &m * m.transpose() + DMatrix::identity(n, n) * shift
}

pub fn cost(rng: &mut impl Rng, label: &str, n: usize, m: usize) -> CostModel {
    CostModel::new(label, spd(rng, n, 0.05), spd(rng, m, 0.2)).unwrap()
}

pub fn dynamics(rng: &mut impl Rng, n: usize, ml: usize, mf: usize) -> Dynamics {
    Dynamics::new(mat(rng, n, n, 0.7), mat(rng, n, ml, 1.0), mat(rng, n, mf, 1.0)).unwrap()
}

pub fn game(rng: &mut impl Rng, n: usize, ml: usize, mf: usize, horizon: usize) -> Game {
    let d = dynamics(rng, n, ml, mf);
    let l = cost(rng, "L", n, ml);
    let f = cost(rng, "F", n, mf);
    Game::new(d, l, f, horizon).unwrap()
}

pub fn controls(rng: &mut impl Rng, m: usize, steps: usize) -> Vec<DVector<f64>> {
    (0..steps).map(|_| vec(rng, m, 2.0)).collect()
}

pub fn example1() -> (Game, CostModel) {
    let game = Game::new(
        Dynamics::scalar(1.7, 1.4, 0.5).unwrap(),
        CostModel::scalar("L", 16.0, 17.0).unwrap(),
        CostModel::scalar("b*", 7.0, 19.0).unwrap(),
        5,
    )
    .unwrap();
    (game, CostModel::scalar("b'", 8.0, 9.0).unwrap())
}

pub fn example2() -> (Game, CostModel) {
    let game = Game::new(
        Dynamics::scalar(1.4, 1.7, 1.7).unwrap(),
        CostModel::scalar("L", 7.0, 16.0).unwrap(),
        CostModel::scalar("b*", 4.0, 24.0).unwrap(),
        8,
    )
    .unwrap();
    (game, CostModel::scalar("b'", 29.0, 12.0).unwrap())
}

pub fn assert_close(got: f64, want: f64, tol: f64, what: &str) {
    assert!((got - want).abs() <= tol, "{what}: got {got}, want {want} ± {tol}");
}

pub fn scalars(v: &[DVector<f64>]) -> Vec<f64> {
    v.iter().map(|x| x[0]).collect()
}
