//! Small-cell power allocation: small-cell base stations (followers) pick
//! transmit powers, the macro base station (leader) prices interference.
//!
//! Utilities are negated into costs. SBS `n` with power `x`, normalized
//! interference aggregate `sigma` and price `lambda` pays
//! `lambda v_n x - A ln(1 + g_n x / (N0 + V'_n sigma))` with `g_n = r_n^-beta`;
//! the MBS pays `B0 lambda^2 - (sum v) sigma0 lambda`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, OracleError, Result};
use crate::game::{FollowerOracle, GameSpec, Hyperbox, LeaderOracle, Strategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmallCellParams {
    pub n_cells: usize,
    /// km
    pub region_radius: f64,
    /// km
    pub neighbor_radius: f64,
    pub bandwidth: f64,
    pub power_cap: f64,
    pub path_loss: f64,
    pub price_cap: f64,
    pub leader_penalty: f64,
    pub noise_density: f64,
    pub leader_period: usize,
    /// km
    pub user_distance_min: f64,
    /// km
    pub user_distance_max: f64,
    pub placement_seed: u64,
    pub max_placement_attempts: usize,
}

impl Default for SmallCellParams {
    fn default() -> Self {
        Self {
            n_cells: 10,
            region_radius: 4.0,
            neighbor_radius: 1.0,
            bandwidth: 2048.0,
            power_cap: 6.0,
            path_loss: 1.0,
            price_cap: 7.0,
            leader_penalty: 100.0,
            noise_density: 0.1,
            leader_period: 10,
            user_distance_min: 0.1,
            user_distance_max: 0.5,
            placement_seed: 1,
            max_placement_attempts: 100_000,
        }
    }
}

impl SmallCellParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("region_radius", self.region_radius),
            ("neighbor_radius", self.neighbor_radius),
            ("bandwidth", self.bandwidth),
            ("power_cap", self.power_cap),
            ("path_loss", self.path_loss),
            ("price_cap", self.price_cap),
            ("leader_penalty", self.leader_penalty),
            ("noise_density", self.noise_density),
            ("user_distance_min", self.user_distance_min),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Input(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.n_cells < 2 {
            return Err(Error::Input("n_cells must be at least 2".to_string()));
        }
        if self.leader_period == 0 {
            return Err(Error::Input("leader_period must be positive".to_string()));
        }
        if self.max_placement_attempts == 0 {
            return Err(Error::Input("max_placement_attempts must be positive".to_string()));
        }
        if !(self.user_distance_max >= self.user_distance_min && self.user_distance_max.is_finite()) {
            return Err(Error::Input(
                "user_distance_max must be finite and at least user_distance_min".to_string(),
            ));
        }
        Ok(())
    }
}

/// Placement and derived path-gain quantities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallCellGeometry {
    /// km, centered on the MBS
    pub positions: Vec<[f64; 2]>,
    /// `r_n`, average SBS-to-user distance
    pub user_distance: Vec<f64>,
    /// `r_nm`
    pub distances: Vec<Vec<f64>>,
    pub neighbors: Vec<Vec<usize>>,
    /// `v_n = sum_{m in N_n} r_mn^-beta`
    pub penalty_weights: Vec<f64>,
    /// `V'_n = sum_{m in N_n} r_nm^-beta`
    pub interference_gains: Vec<f64>,
    /// Placements drawn until none was isolated.
    pub attempts: usize,
}

impl SmallCellGeometry {
    /// Physical interference `sum_{m in N_n} r_nm^-beta x_m` at follower `n`.
    pub fn physical_interference(&self, n: usize, x: &[f64], path_loss: f64) -> f64 {
        self.neighbors[n]
            .iter()
            .map(|&m| self.distances[n][m].powf(-path_loss) * x[m])
            .sum()
    }
}

/// Sub-gradient and cost of one small-cell base station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbsOracle {
    /// `r_n^-beta`
    pub gain: f64,
    pub penalty_weight: f64,
    pub interference_gain: f64,
    pub bandwidth: f64,
    pub noise: f64,
}

impl SbsOracle {
    pub fn cost(&self, x: f64, sigma: f64, price: f64) -> f64 {
        let sinr = self.gain * x / (self.noise + self.interference_gain * sigma);
        price * self.penalty_weight * x - self.bandwidth * sinr.ln_1p()
    }

    pub fn gradient(&self, x: f64, sigma: f64, price: f64) -> f64 {
        price * self.penalty_weight
            - self.bandwidth * self.gain / (self.noise + self.interference_gain * sigma + self.gain * x)
    }
}

fn scalar(v: &Strategy, what: &str) -> Result<f64, OracleError> {
    if v.len() != 1 {
        return Err(OracleError(format!("{what} must be scalar, got dimension {}", v.len())));
    }
    Ok(v[0])
}

impl FollowerOracle for SbsOracle {
    fn subgradient(&self, x: &Strategy, sigma: &Strategy, y: &Strategy) -> Result<Strategy, OracleError> {
        let g = self.gradient(scalar(x, "power")?, scalar(sigma, "aggregate")?, scalar(y, "price")?);
        Ok(DVector::from_element(1, g))
    }
}

/// Sub-gradient and cost of the macro base station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MbsOracle {
    pub penalty: f64,
    /// `sum_n v_n`
    pub revenue_weight: f64,
}

impl MbsOracle {
    pub fn cost(&self, price: f64, sigma0: f64) -> f64 {
        self.penalty * price * price - self.revenue_weight * sigma0 * price
    }

    pub fn gradient(&self, price: f64, sigma0: f64) -> f64 {
        2.0 * self.penalty * price - self.revenue_weight * sigma0
    }
}

impl LeaderOracle for MbsOracle {
    fn subgradient(&self, y: &Strategy, sigma: &Strategy) -> Result<Strategy, OracleError> {
        let g = self.gradient(scalar(y, "price")?, scalar(sigma, "aggregate")?);
        Ok(DVector::from_element(1, g))
    }
}

/// Built game with the oracles kept in concrete form for cost evaluation.
#[derive(Debug, Clone)]
pub struct SmallCellScenario {
    pub params: SmallCellParams,
    pub spec: GameSpec,
    pub geometry: SmallCellGeometry,
    pub followers: Vec<SbsOracle>,
    pub leader: MbsOracle,
}

fn place<R: Rng>(params: &SmallCellParams, rng: &mut R) -> (Vec<[f64; 2]>, Vec<Vec<usize>>) {
    let positions: Vec<[f64; 2]> = (0..params.n_cells)
        .map(|_| {
            let r = params.region_radius * rng.gen::<f64>().sqrt();
            let theta = std::f64::consts::TAU * rng.gen::<f64>();
            [r * theta.cos(), r * theta.sin()]
        })
        .collect();
    let neighbors = (0..params.n_cells)
        .map(|n| {
            (0..params.n_cells)
                .filter(|&m| m != n && distance(&positions[n], &positions[m]) < params.neighbor_radius)
                .collect()
        })
        .collect();
    (positions, neighbors)
}

fn distance(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Places the cells uniformly in the disk, redrawing until every cell has a
/// neighbor, then derives weights and oracles.
pub fn build_scenario(params: &SmallCellParams) -> Result<SmallCellScenario> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.placement_seed);
    let mut attempts = 0;
    let (positions, neighbors) = loop {
        if attempts == params.max_placement_attempts {
            return Err(Error::Scenario(format!(
                "no placement without isolated cells after {attempts} attempts"
            )));
        }
        attempts += 1;
        let (p, nb) = place(params, &mut rng);
        if nb.iter().all(|v: &Vec<usize>| !v.is_empty()) {
            break (p, nb);
        }
    };
    let n = params.n_cells;
    let user_distance: Vec<f64> = (0..n)
        .map(|_| rng.gen_range(params.user_distance_min..=params.user_distance_max))
        .collect();
    let distances: Vec<Vec<f64>> = positions
        .iter()
        .map(|a| positions.iter().map(|b| distance(a, b)).collect())
        .collect();
    let beta = params.path_loss;
    let path_gain = |a: usize, b: usize| distances[a][b].powf(-beta);

    let interference_gains: Vec<f64> = (0..n)
        .map(|i| neighbors[i].iter().map(|&m| path_gain(i, m)).sum())
        .collect();
    let penalty_weights: Vec<f64> = (0..n)
        .map(|i| neighbors[i].iter().map(|&m| path_gain(m, i)).sum())
        .collect();
    let total: f64 = penalty_weights.iter().sum();

    let mut adjacency = DMatrix::from_element(n, n, false);
    let mut weights = DMatrix::zeros(n, n);
    for i in 0..n {
        for &m in &neighbors[i] {
            adjacency[(i, m)] = true;
            weights[(i, m)] = path_gain(i, m) / interference_gains[i];
        }
    }
    let followers: Vec<SbsOracle> = (0..n)
        .map(|i| SbsOracle {
            gain: user_distance[i].powf(-beta),
            penalty_weight: penalty_weights[i],
            interference_gain: interference_gains[i],
            bandwidth: params.bandwidth,
            noise: params.noise_density,
        })
        .collect();
    let leader = MbsOracle {
        penalty: params.leader_penalty,
        revenue_weight: total,
    };
    let spec = GameSpec {
        n_followers: n,
        follower_dim: 1,
        leader_dim: 1,
        follower_sets: vec![Hyperbox::uniform(1, 0.0, params.power_cap); n],
        leader_set: Hyperbox::uniform(1, 0.0, params.price_cap),
        adjacency,
        weights,
        leader_weights: DVector::from_iterator(n, penalty_weights.iter().map(|v| v / total)),
        follower_oracles: followers
            .iter()
            .map(|o| Arc::new(*o) as Arc<dyn FollowerOracle>)
            .collect(),
        leader_oracle: Arc::new(leader),
    };
    Ok(SmallCellScenario {
        params: params.clone(),
        spec,
        geometry: SmallCellGeometry {
            positions,
            user_distance,
            distances,
            neighbors,
            penalty_weights,
            interference_gains,
            attempts,
        },
        followers,
        leader,
    })
}
