//! Game definition: players, feasible boxes, aggregation weights and
//! sub-gradient oracles, plus the aggregation and projection primitives the
//! dynamics and the reference solver are built on.

mod affine;
mod bounds;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Agent, Error, OracleError, Result};

pub use affine::{decoupled_game, quadratic_test_game, AffineFollower, AffineLeader};
pub use bounds::{estimate_bounds, SubgradientBounds, DEFAULT_SAFETY_FACTOR};

/// Strategy vector of a single player.
pub type Strategy = DVector<f64>;

/// Tolerance on the unit-sum conditions for follower rows and leader weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Axis-aligned box `[lower, upper]` used as a feasible set.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperbox {
    lower: Strategy,
    upper: Strategy,
}

impl Hyperbox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Input(format!(
                "box bounds have different lengths ({} vs {})",
                lower.len(),
                upper.len()
            )));
        }
        Ok(Self {
            lower: DVector::from_vec(lower),
            upper: DVector::from_vec(upper),
        })
    }

    /// Same interval on every axis.
    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Self {
        Self {
            lower: DVector::from_element(dim, lower),
            upper: DVector::from_element(dim, upper),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &Strategy {
        &self.lower
    }

    pub fn upper(&self) -> &Strategy {
        &self.upper
    }

    pub fn center(&self) -> Strategy {
        (&self.lower + &self.upper) * 0.5
    }

    /// Length of the main diagonal, i.e. the largest distance between two points of the box.
    pub fn diameter(&self) -> f64 {
        (&self.upper - &self.lower).norm()
    }

    pub fn contains(&self, point: &Strategy) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(p, (lo, hi))| *lo <= *p && *p <= *hi)
    }

    /// Euclidean projection; for a box this is a per-coordinate clamp.
    pub fn project(&self, point: &Strategy) -> Result<Strategy> {
        if point.len() != self.dim() {
            return Err(Error::Input(format!(
                "cannot project a {}-vector onto a {}-dimensional box",
                point.len(),
                self.dim()
            )));
        }
        Ok(self.clamp(point))
    }

    fn clamp(&self, point: &Strategy) -> Strategy {
        DVector::from_iterator(
            point.len(),
            point
                .iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .map(|(p, (lo, hi))| p.max(*lo).min(*hi)),
        )
    }

    /// Uniform sample from the box.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Strategy {
        DVector::from_iterator(
            self.dim(),
            self.lower
                .iter()
                .zip(self.upper.iter())
                .map(|(lo, hi)| if lo < hi { rng.gen_range(*lo..=*hi) } else { *lo }),
        )
    }

    /// Weighted Minkowski sum `sum_i w_i * B_i` of boxes with nonnegative weights.
    /// This is exactly the set of values an aggregate can take.
    pub fn weighted_sum<'a>(dim: usize, terms: impl IntoIterator<Item = (f64, &'a Hyperbox)>) -> Hyperbox {
        let mut out = Hyperbox::uniform(dim, 0.0, 0.0);
        for (w, b) in terms {
            out.lower += &b.lower * w;
            out.upper += &b.upper * w;
        }
        out
    }
}

/// Componentwise projection of `point` onto `bounds`.
pub fn project_box(point: &Strategy, bounds: &Hyperbox) -> Result<Strategy> {
    bounds.project(point)
}

/// Sub-gradient `d_n(x_n, sigma_n, y)` of a follower's cost with respect to its own strategy.
pub trait FollowerOracle: Send + Sync {
    fn subgradient(&self, x: &Strategy, sigma: &Strategy, y: &Strategy) -> std::result::Result<Strategy, OracleError>;
}

/// Sub-gradient `d_0(y, sigma_0)` of the leader's cost with respect to its strategy.
pub trait LeaderOracle: Send + Sync {
    fn subgradient(&self, y: &Strategy, sigma: &Strategy) -> std::result::Result<Strategy, OracleError>;
}

impl<F> FollowerOracle for F
where
    F: Fn(&Strategy, &Strategy, &Strategy) -> std::result::Result<Strategy, OracleError> + Send + Sync,
{
    fn subgradient(&self, x: &Strategy, sigma: &Strategy, y: &Strategy) -> std::result::Result<Strategy, OracleError> {
        self(x, sigma, y)
    }
}

impl<F> LeaderOracle for F
where
    F: Fn(&Strategy, &Strategy) -> std::result::Result<Strategy, OracleError> + Send + Sync,
{
    fn subgradient(&self, y: &Strategy, sigma: &Strategy) -> std::result::Result<Strategy, OracleError> {
        self(y, sigma)
    }
}

/// Full definition of a leader-follower network aggregative game.
///
/// `adjacency[(n, m)]` is true when follower `n` hears from follower `m`;
/// `weights[(n, m)]` is the weight of `x_m` in `sigma_n`. Construction does not
/// check the structural invariants, [`validate_game`] does.
#[derive(Clone)]
pub struct GameSpec {
    pub n_followers: usize,
    pub follower_dim: usize,
    pub leader_dim: usize,
    pub follower_sets: Vec<Hyperbox>,
    pub leader_set: Hyperbox,
    pub adjacency: DMatrix<bool>,
    pub weights: DMatrix<f64>,
    pub leader_weights: DVector<f64>,
    pub follower_oracles: Vec<Arc<dyn FollowerOracle>>,
    pub leader_oracle: Arc<dyn LeaderOracle>,
}

impl fmt::Debug for GameSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameSpec")
            .field("n_followers", &self.n_followers)
            .field("follower_dim", &self.follower_dim)
            .field("leader_dim", &self.leader_dim)
            .field("follower_sets", &self.follower_sets)
            .field("leader_set", &self.leader_set)
            .field("adjacency", &self.adjacency)
            .field("weights", &self.weights)
            .field("leader_weights", &self.leader_weights)
            .finish_non_exhaustive()
    }
}

impl GameSpec {
    /// Neighbors of follower `n`, in increasing index order.
    pub fn neighbors(&self, n: usize) -> Vec<usize> {
        (0..self.n_followers).filter(|&m| self.adjacency[(n, m)]).collect()
    }

    /// Directed neighbor pairs `(n, m)` with `a_nm = 1`, row-major.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n_followers)
            .flat_map(|n| self.neighbors(n).into_iter().map(move |m| (n, m)))
            .collect()
    }

    /// The box of values `sigma_n` can take when every neighbor plays inside its own box.
    pub fn follower_aggregate_box(&self, n: usize) -> Hyperbox {
        Hyperbox::weighted_sum(
            self.follower_dim,
            (0..self.n_followers)
                .filter(|&m| self.weights[(n, m)] > 0.0)
                .map(|m| (self.weights[(n, m)], &self.follower_sets[m])),
        )
    }

    /// The box of values `sigma_0` can take.
    pub fn leader_aggregate_box(&self) -> Hyperbox {
        Hyperbox::weighted_sum(
            self.follower_dim,
            (0..self.n_followers)
                .filter(|&m| self.leader_weights[m] > 0.0)
                .map(|m| (self.leader_weights[m], &self.follower_sets[m])),
        )
    }

    pub fn follower_subgradient(&self, n: usize, x: &Strategy, sigma: &Strategy, y: &Strategy) -> Result<Strategy> {
        let g = self.follower_oracles[n]
            .subgradient(x, sigma, y)
            .map_err(|source| Error::Oracle {
                agent: Agent::Follower(n),
                location: format!("x={:?} sigma={:?} y={:?}", x.as_slice(), sigma.as_slice(), y.as_slice()),
                source,
            })?;
        if g.len() != self.follower_dim {
            return Err(Error::Oracle {
                agent: Agent::Follower(n),
                location: format!("x={:?}", x.as_slice()),
                source: OracleError(format!("returned a {}-vector, expected {}", g.len(), self.follower_dim)),
            });
        }
        Ok(g)
    }

    pub fn leader_subgradient(&self, y: &Strategy, sigma: &Strategy) -> Result<Strategy> {
        let g = self
            .leader_oracle
            .subgradient(y, sigma)
            .map_err(|source| Error::Oracle {
                agent: Agent::Leader,
                location: format!("y={:?} sigma0={:?}", y.as_slice(), sigma.as_slice()),
                source,
            })?;
        if g.len() != self.leader_dim {
            return Err(Error::Oracle {
                agent: Agent::Leader,
                location: format!("y={:?}", y.as_slice()),
                source: OracleError(format!("returned a {}-vector, expected {}", g.len(), self.leader_dim)),
            });
        }
        Ok(g)
    }

    /// Checks that a joint profile is feasible and correctly sized.
    pub fn check_profile(&self, x: &[Strategy], y: &Strategy) -> Result<()> {
        if x.len() != self.n_followers {
            return Err(Error::Input(format!(
                "expected {} follower strategies, got {}",
                self.n_followers,
                x.len()
            )));
        }
        for (n, (xn, set)) in x.iter().zip(&self.follower_sets).enumerate() {
            if !set.contains(xn) {
                return Err(Error::Input(format!(
                    "follower {n} strategy {:?} lies outside its feasible box",
                    xn.as_slice()
                )));
            }
        }
        if !self.leader_set.contains(y) {
            return Err(Error::Input(format!(
                "leader strategy {:?} lies outside its feasible box",
                y.as_slice()
            )));
        }
        Ok(())
    }
}

/// A violated structural invariant of a [`GameSpec`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Dimension {
        what: String,
        expected: usize,
        found: usize,
    },
    SelfLoop {
        n: usize,
    },
    WeightWithoutLink {
        n: usize,
        m: usize,
        weight: f64,
    },
    LinkWithoutWeight {
        n: usize,
        m: usize,
        weight: f64,
    },
    RowSum {
        n: usize,
        sum: f64,
    },
    NegativeLeaderWeight {
        n: usize,
        weight: f64,
    },
    LeaderWeightSum {
        sum: f64,
    },
    InvertedBox {
        agent: Agent,
        coord: usize,
    },
    UnboundedBox {
        agent: Agent,
        coord: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension { what, expected, found } => {
                write!(f, "{what}: expected dimension {expected}, found {found}")
            }
            Violation::SelfLoop { n } => write!(f, "adjacency[{n}][{n}] must be 0"),
            Violation::WeightWithoutLink { n, m, weight } => {
                write!(f, "w[{n}][{m}] = {weight} but a[{n}][{m}] = 0")
            }
            Violation::LinkWithoutWeight { n, m, weight } => {
                write!(f, "a[{n}][{m}] = 1 but w[{n}][{m}] = {weight} is not positive")
            }
            Violation::RowSum { n, sum } => write!(f, "row {n} of W sums to {sum}, expected 1"),
            Violation::NegativeLeaderWeight { n, weight } => {
                write!(f, "leader weight w0[{n}] = {weight} is negative")
            }
            Violation::LeaderWeightSum { sum } => {
                write!(f, "leader weights sum to {sum}, expected 1")
            }
            Violation::InvertedBox { agent, coord } => {
                write!(f, "{agent}: box lower > upper on coordinate {coord}")
            }
            Violation::UnboundedBox { agent, coord } => {
                write!(f, "{agent}: box bound on coordinate {coord} is not finite")
            }
        }
    }
}

/// Lists every violated invariant; an empty report means the game is well formed.
pub fn validate_game(spec: &GameSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = spec.n_followers;
    let mut dim = |what: &str, expected: usize, found: usize| {
        if expected != found {
            out.push(Violation::Dimension {
                what: what.to_string(),
                expected,
                found,
            });
            false
        } else {
            true
        }
    };
    let mut shapes_ok = dim("follower_sets", n, spec.follower_sets.len());
    shapes_ok &= dim("follower_oracles", n, spec.follower_oracles.len());
    shapes_ok &= dim("adjacency rows", n, spec.adjacency.nrows());
    shapes_ok &= dim("adjacency columns", n, spec.adjacency.ncols());
    shapes_ok &= dim("weight rows", n, spec.weights.nrows());
    shapes_ok &= dim("weight columns", n, spec.weights.ncols());
    shapes_ok &= dim("leader_weights", n, spec.leader_weights.len());
    dim("leader_set", spec.leader_dim, spec.leader_set.dim());
    for (i, set) in spec.follower_sets.iter().enumerate() {
        dim(&format!("follower_sets[{i}]"), spec.follower_dim, set.dim());
    }

    let boxes = spec
        .follower_sets
        .iter()
        .enumerate()
        .map(|(i, b)| (Agent::Follower(i), b))
        .chain(std::iter::once((Agent::Leader, &spec.leader_set)));
    for (agent, b) in boxes {
        for (coord, (lo, hi)) in b.lower.iter().zip(b.upper.iter()).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                out.push(Violation::UnboundedBox { agent, coord });
            } else if lo > hi {
                out.push(Violation::InvertedBox { agent, coord });
            }
        }
    }

    if !shapes_ok {
        return out;
    }

    for row in 0..n {
        if spec.adjacency[(row, row)] {
            out.push(Violation::SelfLoop { n: row });
        }
        for col in 0..n {
            let w = spec.weights[(row, col)];
            let linked = spec.adjacency[(row, col)];
            if linked && (w.is_nan() || w <= 0.0) {
                out.push(Violation::LinkWithoutWeight {
                    n: row,
                    m: col,
                    weight: w,
                });
            } else if !linked && w != 0.0 {
                out.push(Violation::WeightWithoutLink {
                    n: row,
                    m: col,
                    weight: w,
                });
            }
        }
        let sum: f64 = spec.weights.row(row).iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            out.push(Violation::RowSum { n: row, sum });
        }
    }

    for (i, &w) in spec.leader_weights.iter().enumerate() {
        if w < 0.0 {
            out.push(Violation::NegativeLeaderWeight { n: i, weight: w });
        }
    }
    let sum: f64 = spec.leader_weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        out.push(Violation::LeaderWeightSum { sum });
    }
    out
}

fn weighted_aggregate<'a>(
    dim: usize,
    terms: impl Iterator<Item = (usize, f64)>,
    lookup: impl Fn(usize) -> Option<&'a Strategy>,
) -> Result<Strategy> {
    let mut acc = DVector::zeros(dim);
    for (m, w) in terms {
        let xm = lookup(m).ok_or_else(|| Error::Input(format!("no strategy available for neighbor {m}")))?;
        if xm.len() != dim {
            return Err(Error::Input(format!(
                "strategy of player {m} has dimension {}, expected {dim}",
                xm.len()
            )));
        }
        acc.axpy(w, xm, 1.0);
    }
    Ok(acc)
}

/// `sigma_n = sum_m w_nm x_m` from a per-neighbor view; `view[m]` must be present
/// for every `m` with positive weight.
pub fn sigma_follower(spec: &GameSpec, n: usize, view: &[Option<Strategy>]) -> Result<Strategy> {
    if view.len() != spec.n_followers {
        return Err(Error::Input(format!(
            "view has {} entries, expected {}",
            view.len(),
            spec.n_followers
        )));
    }
    weighted_aggregate(
        spec.follower_dim,
        positive_weights(spec.weights.row(n).iter().copied()),
        |m| view[m].as_ref(),
    )
}

/// `sigma_n` evaluated on the true current strategies.
pub fn sigma_follower_true(spec: &GameSpec, n: usize, x_all: &[Strategy]) -> Result<Strategy> {
    if x_all.len() != spec.n_followers {
        return Err(Error::Input(format!(
            "expected {} follower strategies, got {}",
            spec.n_followers,
            x_all.len()
        )));
    }
    weighted_aggregate(
        spec.follower_dim,
        positive_weights(spec.weights.row(n).iter().copied()),
        |m| Some(&x_all[m]),
    )
}

/// `sigma_0 = sum_n w_0n x_n`.
pub fn sigma_leader(spec: &GameSpec, x_all: &[Strategy]) -> Result<Strategy> {
    if x_all.len() != spec.n_followers {
        return Err(Error::Input(format!(
            "expected {} follower strategies, got {}",
            spec.n_followers,
            x_all.len()
        )));
    }
    weighted_aggregate(
        spec.follower_dim,
        positive_weights(spec.leader_weights.iter().copied()),
        |m| Some(&x_all[m]),
    )
}

fn positive_weights(row: impl Iterator<Item = f64>) -> impl Iterator<Item = (usize, f64)> {
    row.enumerate().filter(|(_, w)| *w > 0.0)
}
