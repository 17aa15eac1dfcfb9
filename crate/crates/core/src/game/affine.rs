use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{FollowerOracle, GameSpec, Hyperbox, LeaderOracle, Strategy};
use crate::error::OracleError;

/// Affine follower sub-gradient `d(x, sigma, y) = own*x + aggregate*sigma + leader*y + offset`.
///
/// This is the sub-gradient of a quadratic cost; `own` must be positive definite
/// for strong convexity.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFollower {
    pub own: DMatrix<f64>,
    pub aggregate: DMatrix<f64>,
    pub leader: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineFollower {
    pub fn scalar(own: f64, aggregate: f64, leader: f64, offset: f64) -> Self {
        Self {
            own: DMatrix::from_element(1, 1, own),
            aggregate: DMatrix::from_element(1, 1, aggregate),
            leader: DMatrix::from_element(1, 1, leader),
            offset: DVector::from_element(1, offset),
        }
    }

    fn check(&self, x: &Strategy, sigma: &Strategy, y: &Strategy) -> Result<(), OracleError> {
        let m = self.own.nrows();
        if self.own.ncols() != x.len()
            || self.aggregate.ncols() != sigma.len()
            || self.leader.ncols() != y.len()
            || self.aggregate.nrows() != m
            || self.leader.nrows() != m
            || self.offset.len() != m
        {
            return Err(OracleError(format!(
                "affine coefficients do not match argument sizes (x {}, sigma {}, y {})",
                x.len(),
                sigma.len(),
                y.len()
            )));
        }
        Ok(())
    }
}

impl FollowerOracle for AffineFollower {
    fn subgradient(&self, x: &Strategy, sigma: &Strategy, y: &Strategy) -> Result<Strategy, OracleError> {
        self.check(x, sigma, y)?;
        Ok(&self.own * x + &self.aggregate * sigma + &self.leader * y + &self.offset)
    }
}

/// Affine leader sub-gradient `d0(y, sigma0) = own*y + aggregate*sigma0 + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLeader {
    pub own: DMatrix<f64>,
    pub aggregate: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineLeader {
    pub fn scalar(own: f64, aggregate: f64, offset: f64) -> Self {
        Self {
            own: DMatrix::from_element(1, 1, own),
            aggregate: DMatrix::from_element(1, 1, aggregate),
            offset: DVector::from_element(1, offset),
        }
    }
}

impl LeaderOracle for AffineLeader {
    fn subgradient(&self, y: &Strategy, sigma: &Strategy) -> Result<Strategy, OracleError> {
        let m = self.own.nrows();
        if self.own.ncols() != y.len()
            || self.aggregate.ncols() != sigma.len()
            || self.aggregate.nrows() != m
            || self.offset.len() != m
        {
            return Err(OracleError(format!(
                "affine coefficients do not match argument sizes (y {}, sigma {})",
                y.len(),
                sigma.len()
            )));
        }
        Ok(&self.own * y + &self.aggregate * sigma + &self.offset)
    }
}

/// Two scalar followers that see each other with weight 1, and a scalar leader
/// that averages them; every strategy lives in `[-1, 1]`.
///
/// Followers: `d_n = 5 x_n + sigma_n + y - 1`. Leader: `d_0 = 10 y + sigma_0`.
/// The unique equilibrium is interior: `x_1 = x_2 = 10/59`, `y = -1/59`.
pub fn quadratic_test_game() -> GameSpec {
    GameSpec {
        n_followers: 2,
        follower_dim: 1,
        leader_dim: 1,
        follower_sets: vec![Hyperbox::uniform(1, -1.0, 1.0); 2],
        leader_set: Hyperbox::uniform(1, -1.0, 1.0),
        adjacency: DMatrix::from_row_slice(2, 2, &[false, true, true, false]),
        weights: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
        leader_weights: DVector::from_vec(vec![0.5, 0.5]),
        follower_oracles: vec![
            Arc::new(AffineFollower::scalar(5.0, 1.0, 1.0, -1.0)),
            Arc::new(AffineFollower::scalar(5.0, 1.0, 1.0, -1.0)),
        ],
        leader_oracle: Arc::new(AffineLeader::scalar(10.0, 1.0, 0.0)),
    }
}

/// Game without coupling: follower `n` minimizes `(x_n - targets[n])^2 / 2` on
/// `[-1, 1]`, and the leader does the same with `leader_target`.
pub fn decoupled_game(targets: &[f64], leader_target: f64) -> GameSpec {
    let n = targets.len();
    let mut adjacency = DMatrix::from_element(n, n, false);
    let mut weights = DMatrix::zeros(n, n);
    // A ring keeps the weight invariants satisfied; the oracles ignore sigma.
    if n > 1 {
        for i in 0..n {
            let j = (i + 1) % n;
            adjacency[(i, j)] = true;
            weights[(i, j)] = 1.0;
        }
    }
    GameSpec {
        n_followers: n,
        follower_dim: 1,
        leader_dim: 1,
        follower_sets: vec![Hyperbox::uniform(1, -1.0, 1.0); n],
        leader_set: Hyperbox::uniform(1, -1.0, 1.0),
        adjacency,
        weights,
        leader_weights: DVector::from_element(n, 1.0 / n as f64),
        follower_oracles: targets
            .iter()
            .map(|&c| Arc::new(AffineFollower::scalar(1.0, 0.0, 0.0, -c)) as Arc<dyn FollowerOracle>)
            .collect(),
        leader_oracle: Arc::new(AffineLeader::scalar(1.0, 0.0, -leader_target)),
    }
}
