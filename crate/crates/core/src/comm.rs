//! Communication events between followers and the local views they induce.
//!
//! Every iteration draws a link matrix `L^k` (follower `n` receives `x_m` when
//! `links[(n, m)]`) and an activity vector `E^k` (follower `n` updates when
//! `activity[n]`). Followers decide from their last received copies of their
//! neighbors' strategies, which go stale whenever a link is missing.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameSpec, Strategy};

/// Random stream for run `run_id` of an experiment seeded with `seed`.
///
/// The key is the master seed and the ChaCha stream id is the run id, so runs
/// are independent and adding runs never changes the streams of existing ones.
pub fn run_stream(seed: u64, run_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run_id);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProtocolSpec {
    /// Every link and every follower is up at every iteration.
    Normal,
    /// Independent links with probability `p` and activities with probability `q`.
    Bernoulli { p: f64, q: f64 },
    /// One uniformly chosen follower wakes and exchanges with one uniformly chosen neighbor.
    Gossip,
}

impl ProtocolSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolSpec::Normal => "normal",
            ProtocolSpec::Bernoulli { .. } => "bernoulli",
            ProtocolSpec::Gossip => "gossip",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ProtocolSpec::Bernoulli { p, q } = *self {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Input(format!("link probability p = {p} not in (0, 1]")));
            }
            if !(q > 0.0 && q <= 1.0) {
                return Err(Error::Input(format!("activity probability q = {q} not in (0, 1]")));
            }
        }
        Ok(())
    }

    /// Lower bound `delta` on every follower's activity probability.
    pub fn activity_lower_bound(&self, spec: &GameSpec) -> Result<f64> {
        Ok(match *self {
            ProtocolSpec::Normal => 1.0,
            ProtocolSpec::Bernoulli { q, .. } => q,
            ProtocolSpec::Gossip => gossip_probabilities(&spec.adjacency)?
                .activity
                .into_iter()
                .fold(f64::INFINITY, f64::min),
        })
    }

    /// Lower bound `gamma` on the probability of every neighbor link.
    pub fn link_lower_bound(&self, spec: &GameSpec) -> Result<f64> {
        Ok(match *self {
            ProtocolSpec::Normal => 1.0,
            ProtocolSpec::Bernoulli { p, .. } => p,
            ProtocolSpec::Gossip => {
                let marginals = gossip_probabilities(&spec.adjacency)?;
                spec.edges()
                    .into_iter()
                    .map(|(n, m)| marginals.links[(n, m)])
                    .fold(f64::INFINITY, f64::min)
            }
        })
    }
}

/// One iteration's sampled connectivity and activity.
#[derive(Debug, Clone, PartialEq)]
pub struct CommEvent {
    pub links: DMatrix<bool>,
    pub activity: Vec<bool>,
    pub iteration: usize,
}

/// Draws [`CommEvent`]s for one protocol on one graph.
#[derive(Debug, Clone)]
pub struct EventSampler {
    protocol: ProtocolSpec,
    n: usize,
    adjacency: DMatrix<bool>,
    neighbors: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
}

impl EventSampler {
    pub fn new(protocol: ProtocolSpec, spec: &GameSpec) -> Result<Self> {
        protocol.validate()?;
        let neighbors: Vec<Vec<usize>> = (0..spec.n_followers).map(|n| spec.neighbors(n)).collect();
        if protocol == ProtocolSpec::Gossip {
            if let Some(n) = neighbors.iter().position(Vec::is_empty) {
                return Err(Error::Scenario(format!(
                    "gossip needs every follower to have a neighbor; follower {n} is isolated"
                )));
            }
            if spec.adjacency != spec.adjacency.transpose() {
                return Err(Error::Scenario(
                    "gossip needs an undirected (symmetric) adjacency".to_string(),
                ));
            }
        }
        Ok(Self {
            protocol,
            n: spec.n_followers,
            adjacency: spec.adjacency.clone(),
            edges: spec.edges(),
            neighbors,
        })
    }

    pub fn protocol(&self) -> ProtocolSpec {
        self.protocol
    }

    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> CommEvent {
        match self.protocol {
            ProtocolSpec::Normal => CommEvent {
                links: self.adjacency.clone(),
                activity: vec![true; self.n],
                iteration: k,
            },
            ProtocolSpec::Bernoulli { p, q } => {
                let mut links = DMatrix::from_element(self.n, self.n, false);
                for &(n, m) in &self.edges {
                    links[(n, m)] = rng.gen_bool(p);
                }
                let activity = (0..self.n).map(|_| rng.gen_bool(q)).collect();
                CommEvent {
                    links,
                    activity,
                    iteration: k,
                }
            }
            ProtocolSpec::Gossip => {
                let waker = rng.gen_range(0..self.n);
                let around = &self.neighbors[waker];
                let contact = around[rng.gen_range(0..around.len())];
                let mut links = DMatrix::from_element(self.n, self.n, false);
                links[(waker, contact)] = true;
                links[(contact, waker)] = true;
                let mut activity = vec![false; self.n];
                activity[waker] = true;
                activity[contact] = true;
                CommEvent {
                    links,
                    activity,
                    iteration: k,
                }
            }
        }
    }
}

/// Samples the event of iteration `k`.
pub fn sample_events<R: Rng + ?Sized>(
    protocol: ProtocolSpec,
    spec: &GameSpec,
    k: usize,
    rng: &mut R,
) -> Result<CommEvent> {
    Ok(EventSampler::new(protocol, spec)?.sample(k, rng))
}

/// Per-link and per-node marginal probabilities of the gossip protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct GossipMarginals {
    pub links: DMatrix<f64>,
    pub activity: Vec<f64>,
}

/// Closed-form gossip marginals on an undirected graph:
/// `p_nm = (1/|N_n| + 1/|N_m|) / N` for neighbors and
/// `q_n = (1 + sum_{m in N_n} 1/|N_m|) / N`.
pub fn gossip_probabilities(adjacency: &DMatrix<bool>) -> Result<GossipMarginals> {
    let n = adjacency.nrows();
    if adjacency.ncols() != n {
        return Err(Error::Input("adjacency must be square".to_string()));
    }
    if *adjacency != adjacency.transpose() {
        return Err(Error::Input("adjacency must be symmetric".to_string()));
    }
    let degree: Vec<usize> = (0..n)
        .map(|i| adjacency.row(i).iter().filter(|a| **a).count())
        .collect();
    if let Some(i) = degree.iter().position(|d| *d == 0) {
        return Err(Error::Input(format!("node {i} is isolated")));
    }
    let nf = n as f64;
    let links = DMatrix::from_fn(n, n, |i, j| {
        if adjacency[(i, j)] {
            (1.0 / degree[i] as f64 + 1.0 / degree[j] as f64) / nf
        } else {
            0.0
        }
    });
    let activity = (0..n)
        .map(|i| {
            let from_contacts: f64 = (0..n)
                .filter(|&j| adjacency[(i, j)])
                .map(|j| 1.0 / degree[j] as f64)
                .sum();
            (1.0 + from_contacts) / nf
        })
        .collect();
    Ok(GossipMarginals { links, activity })
}

/// Whether `event` belongs to the protocol's admissible set.
///
/// Gossip: exactly two active followers, which are neighbors, and
/// `l_nm = e_n e_m`. Other protocols: links only along edges.
pub fn check_constraint_set(event: &CommEvent, protocol: ProtocolSpec, spec: &GameSpec) -> bool {
    let n = spec.n_followers;
    if event.links.nrows() != n || event.links.ncols() != n || event.activity.len() != n {
        return false;
    }
    let links_on_edges = (0..n).all(|i| (0..n).all(|j| !event.links[(i, j)] || spec.adjacency[(i, j)]));
    match protocol {
        ProtocolSpec::Normal | ProtocolSpec::Bernoulli { .. } => links_on_edges,
        ProtocolSpec::Gossip => {
            let active = event.activity.iter().filter(|e| **e).count();
            active == 2
                && (0..n).all(|i| {
                    (0..n).all(|j| {
                        let both = event.activity[i] && event.activity[j];
                        let pair_ok = i == j || !both || spec.adjacency[(i, j)];
                        let link_ok = event.links[(i, j)] == (both && i != j);
                        pair_ok && link_ok
                    })
                })
        }
    }
}

/// Each follower's last received copy `x~_{n,m}` of every neighbor's strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalInfoState {
    /// `views[n][m]` is `Some` exactly when `a_nm = 1`.
    pub views: Vec<Vec<Option<Strategy>>>,
    pub iteration: usize,
}

impl LocalInfoState {
    /// Views initialized with the true initial strategies.
    pub fn new(spec: &GameSpec, x0: &[Strategy]) -> Self {
        let views = (0..spec.n_followers)
            .map(|n| {
                (0..spec.n_followers)
                    .map(|m| spec.adjacency[(n, m)].then(|| x0[m].clone()))
                    .collect()
            })
            .collect();
        Self { views, iteration: 0 }
    }

    /// `x~_{n,m} <- x_m^k` wherever `l_nm^k = 1`; the iteration advances.
    pub fn update(&mut self, event: &CommEvent, x_current: &[Strategy]) {
        debug_assert_eq!(self.iteration, event.iteration);
        for (n, row) in self.views.iter_mut().enumerate() {
            for (m, view) in row.iter_mut().enumerate() {
                if let Some(v) = view {
                    if event.links[(n, m)] {
                        v.copy_from(&x_current[m]);
                    }
                }
            }
        }
        self.iteration += 1;
    }

    /// `‖x~_{n,m} - x_m‖` for neighbors, zero elsewhere.
    pub fn staleness(&self, x_current: &[Strategy]) -> DMatrix<f64> {
        let n = self.views.len();
        DMatrix::from_fn(n, n, |i, j| {
            self.views[i][j].as_ref().map_or(0.0, |v| (v - &x_current[j]).norm())
        })
    }
}

/// Functional form of [`LocalInfoState::update`].
pub fn update_local_info(mut state: LocalInfoState, event: &CommEvent, x_current: &[Strategy]) -> LocalInfoState {
    state.update(event, x_current);
    state
}

pub fn staleness(state: &LocalInfoState, x_current: &[Strategy]) -> DMatrix<f64> {
    state.staleness(x_current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{quadratic_test_game, AffineFollower, AffineLeader, Hyperbox};
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use std::sync::Arc;

    fn path3() -> GameSpec {
        let adjacency = DMatrix::from_row_slice(3, 3, &[false, true, false, true, false, true, false, true, false]);
        let weights = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.5, 0.0, 0.5, 0.0, 1.0, 0.0]);
        GameSpec {
            n_followers: 3,
            follower_dim: 1,
            leader_dim: 1,
            follower_sets: vec![Hyperbox::uniform(1, -1.0, 1.0); 3],
            leader_set: Hyperbox::uniform(1, -1.0, 1.0),
            adjacency,
            weights,
            leader_weights: DVector::from_element(3, 1.0 / 3.0),
            follower_oracles: (0..3)
                .map(|_| Arc::new(AffineFollower::scalar(1.0, 0.0, 0.0, 0.0)) as _)
                .collect(),
            leader_oracle: Arc::new(AffineLeader::scalar(1.0, 0.0, 0.0)),
        }
    }

    #[test]
    fn normal_protocol_is_everything_on() {
        let g = path3();
        let e = sample_events(ProtocolSpec::Normal, &g, 4, &mut run_stream(1, 0)).unwrap();
        assert_eq!(e.links, g.adjacency);
        assert!(e.activity.iter().all(|a| *a));
        assert_eq!(e.iteration, 4);
    }

    #[test]
    fn gossip_on_path_when_node_zero_wakes() {
        let g = path3();
        let sampler = EventSampler::new(ProtocolSpec::Gossip, &g).unwrap();
        let mut rng = run_stream(3, 0);
        let mut seen = false;
        for k in 0..200 {
            let e = sampler.sample(k, &mut rng);
            if e.activity[0] {
                // node 0 can only pair with node 1
                assert_eq!(e.activity, vec![true, true, false]);
                assert!(e.links[(0, 1)] && e.links[(1, 0)]);
                assert_eq!(e.links.iter().filter(|l| **l).count(), 2);
                seen = true;
            }
        }
        assert!(seen);
    }

    #[test]
    fn gossip_rejects_isolated_nodes() {
        let mut g = path3();
        g.adjacency = DMatrix::from_element(3, 3, false);
        g.adjacency[(0, 1)] = true;
        g.adjacency[(1, 0)] = true;
        let err = EventSampler::new(ProtocolSpec::Gossip, &g).unwrap_err();
        assert!(matches!(err, Error::Scenario(_)));
        assert!(gossip_probabilities(&g.adjacency).is_err());
    }

    #[test]
    fn bernoulli_parameters_are_checked() {
        assert!(ProtocolSpec::Bernoulli { p: 0.0, q: 0.5 }.validate().is_err());
        assert!(ProtocolSpec::Bernoulli { p: 0.5, q: 1.5 }.validate().is_err());
        assert!(ProtocolSpec::Bernoulli { p: 1.0, q: 1.0 }.validate().is_ok());
    }

    /// Exact marginals by enumerating waking node and contact choice.
    fn enumerate_gossip(adjacency: &DMatrix<bool>) -> (DMatrix<f64>, Vec<f64>) {
        let n = adjacency.nrows();
        let mut p = DMatrix::zeros(n, n);
        let mut q = vec![0.0; n];
        for waker in 0..n {
            let nb: Vec<usize> = (0..n).filter(|&j| adjacency[(waker, j)]).collect();
            for &c in &nb {
                let prob = 1.0 / n as f64 / nb.len() as f64;
                p[(waker, c)] += prob;
                p[(c, waker)] += prob;
                q[waker] += prob;
                q[c] += prob;
            }
        }
        (p, q)
    }

    #[test]
    fn gossip_marginals_on_path_match_enumeration() {
        let g = path3();
        let m = gossip_probabilities(&g.adjacency).unwrap();
        assert_abs_diff_eq!(m.links[(0, 1)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.links[(0, 2)], 0.0);
        assert_abs_diff_eq!(m.activity[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.activity[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.activity[2], 0.5, epsilon = 1e-15);
        let (p, q) = enumerate_gossip(&g.adjacency);
        assert!((p - &m.links).abs().max() < 1e-15);
        for (a, b) in q.iter().zip(&m.activity) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn gossip_marginals_on_complete_graph() {
        for n in 2..7 {
            let adj = DMatrix::from_fn(n, n, |i, j| i != j);
            let m = gossip_probabilities(&adj).unwrap();
            let expect = 2.0 / (n as f64 * (n as f64 - 1.0));
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        assert_abs_diff_eq!(m.links[(i, j)], expect, epsilon = 1e-15);
                    }
                }
            }
            let (p, _) = enumerate_gossip(&adj);
            assert!((p - &m.links).abs().max() < 1e-15);
        }
    }

    #[test]
    fn constraint_set_rejections() {
        let g = path3();
        let mut three = CommEvent {
            links: DMatrix::from_element(3, 3, false),
            activity: vec![true, true, true],
            iteration: 0,
        };
        assert!(!check_constraint_set(&three, ProtocolSpec::Gossip, &g));

        // 0 and 2 are not neighbors
        three.activity = vec![true, false, true];
        three.links[(0, 2)] = true;
        three.links[(2, 0)] = true;
        assert!(!check_constraint_set(&three, ProtocolSpec::Gossip, &g));
        assert!(!check_constraint_set(&three, ProtocolSpec::Normal, &g));

        let ok = CommEvent {
            links: DMatrix::from_row_slice(3, 3, &[false, true, false, true, false, false, false, false, false]),
            activity: vec![true, true, false],
            iteration: 0,
        };
        assert!(check_constraint_set(&ok, ProtocolSpec::Gossip, &g));
        // a missing link between the active pair breaks l = e e
        let mut half = ok.clone();
        half.links[(1, 0)] = false;
        assert!(!check_constraint_set(&half, ProtocolSpec::Gossip, &g));
        assert!(check_constraint_set(&half, ProtocolSpec::Normal, &g));
    }

    #[test]
    fn every_sample_is_admissible() {
        let graphs = [path3(), quadratic_test_game()];
        for g in &graphs {
            for protocol in [
                ProtocolSpec::Normal,
                ProtocolSpec::Bernoulli { p: 0.7, q: 0.7 },
                ProtocolSpec::Gossip,
            ] {
                let sampler = EventSampler::new(protocol, g).unwrap();
                let mut rng = run_stream(11, 2);
                for k in 0..10_000 {
                    assert!(check_constraint_set(&sampler.sample(k, &mut rng), protocol, g));
                }
            }
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let g = path3();
        let sampler = EventSampler::new(ProtocolSpec::Bernoulli { p: 0.5, q: 0.5 }, &g).unwrap();
        let draw = |seed, run| {
            let mut rng = run_stream(seed, run);
            (0..200).map(|k| sampler.sample(k, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(5, 1), draw(5, 1));
        assert_ne!(draw(5, 1), draw(5, 2));
        assert_ne!(draw(5, 1), draw(6, 1));
    }

    #[test]
    fn bernoulli_link_frequency_within_four_sigma() {
        let g = path3();
        let p = 0.7;
        let sampler = EventSampler::new(ProtocolSpec::Bernoulli { p, q: 0.4 }, &g).unwrap();
        let mut rng = run_stream(9, 0);
        let samples = 100_000;
        let mut links = 0usize;
        let mut active = 0usize;
        for k in 0..samples {
            let e = sampler.sample(k, &mut rng);
            links += e.links[(1, 2)] as usize;
            active += e.activity[2] as usize;
        }
        let m = samples as f64;
        let sd = (p * (1.0 - p) / m).sqrt();
        assert!((links as f64 / m - p).abs() <= 4.0 * sd);
        let sdq = (0.4 * 0.6 / m).sqrt();
        assert!((active as f64 / m - 0.4).abs() <= 4.0 * sdq);
    }

    #[test]
    fn local_views_received_and_stale() {
        let g = path3();
        let x0: Vec<Strategy> = [0.1, 0.2, 0.3].iter().map(|v| DVector::from_element(1, *v)).collect();
        let mut state = LocalInfoState::new(&g, &x0);
        assert!(state.views[0][2].is_none());
        assert_eq!(state.staleness(&x0), DMatrix::zeros(3, 3));

        let x1: Vec<Strategy> = [0.5, -0.5, 0.9].iter().map(|v| DVector::from_element(1, *v)).collect();
        let mut links = DMatrix::from_element(3, 3, false);
        links[(0, 1)] = true;
        let event = CommEvent {
            links,
            activity: vec![true; 3],
            iteration: 0,
        };
        state = update_local_info(state, &event, &x1);
        assert_eq!(state.iteration, 1);
        assert_eq!(state.views[0][1].as_ref().unwrap()[0], -0.5);
        // no link 1 <- 0: still the initial copy
        assert_eq!(state.views[1][0].as_ref().unwrap()[0], 0.1);
        let s = staleness(&state, &x1);
        assert_eq!(s[(0, 1)], 0.0);
        assert_abs_diff_eq!(s[(1, 0)], 0.4, epsilon = 1e-15);
        assert_eq!(s[(0, 2)], 0.0);
    }

    #[test]
    fn unit_displacement_staleness() {
        let mut g = quadratic_test_game();
        g.follower_dim = 2;
        let origin = vec![DVector::zeros(2), DVector::from_vec(vec![1.0, 0.0])];
        let state = LocalInfoState::new(&g, &origin);
        let now = vec![DVector::zeros(2), DVector::zeros(2)];
        assert_abs_diff_eq!(state.staleness(&now)[(0, 1)], 1.0);
    }

    #[test]
    fn full_links_refresh_every_view() {
        let g = path3();
        let sampler = EventSampler::new(ProtocolSpec::Normal, &g).unwrap();
        let mut rng = run_stream(0, 0);
        let mut x: Vec<Strategy> = (0..3).map(|_| DVector::zeros(1)).collect();
        let mut state = LocalInfoState::new(&g, &x);
        for k in 0..50 {
            for (i, xi) in x.iter_mut().enumerate() {
                xi[0] = ((k * 7 + i * 3) % 11) as f64 / 11.0;
            }
            state.update(&sampler.sample(k, &mut rng), &x);
            assert_eq!(state.staleness(&x), DMatrix::zeros(3, 3));
        }
    }
}
