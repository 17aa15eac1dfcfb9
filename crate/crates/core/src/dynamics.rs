//! Projected sub-gradient dynamics with stale local views and a periodically
//! waking leader, and the diagnostics computed on the resulting traces.
//!
//! One iteration `k`:
//! 1. if `k` is a leader iteration, the leader steps on the true `sigma_0(x^k)`;
//! 2. an event `(L^k, E^k)` is drawn;
//! 3. every active follower steps from the views it held at the start of `k`;
//! 4. views are refreshed along the drawn links with the start-of-iteration `x^k`.

use nalgebra::DVector;
use serde::Serialize;

use crate::comm::{run_stream, CommEvent, EventSampler, LocalInfoState, ProtocolSpec};
use crate::equilibrium::ReferencePoint;
use crate::error::{Error, Result};
use crate::game::{sigma_follower, sigma_leader, GameSpec, Strategy, SubgradientBounds};
use crate::schedule::{LeaderSchedule, StepSchedule};

/// Slack added to `A_n alpha_n^k` before an increment counts as a violation.
pub const INCREMENT_SLACK: f64 = 1e-9;

/// A joint strategy profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub x: Vec<Strategy>,
    pub y: Strategy,
}

impl Profile {
    pub fn new(x: Vec<Strategy>, y: Strategy) -> Self {
        Self { x, y }
    }

    /// Every player at the lower corner of its box.
    pub fn lower_corner(spec: &GameSpec) -> Self {
        Self {
            x: spec.follower_sets.iter().map(|b| b.lower().clone()).collect(),
            y: spec.leader_set.lower().clone(),
        }
    }

    pub fn upper_corner(spec: &GameSpec) -> Self {
        Self {
            x: spec.follower_sets.iter().map(|b| b.upper().clone()).collect(),
            y: spec.leader_set.upper().clone(),
        }
    }

    pub fn center(spec: &GameSpec) -> Self {
        Self {
            x: spec.follower_sets.iter().map(|b| b.center()).collect(),
            y: spec.leader_set.center(),
        }
    }

    /// `‖y - y'‖² + sum_n ‖x_n - x_n'‖²`.
    pub fn squared_distance(&self, x: &[Strategy], y: &Strategy) -> f64 {
        let followers: f64 = self.x.iter().zip(x).map(|(a, b)| (a - b).norm_squared()).sum();
        followers + (&self.y - y).norm_squared()
    }

    pub fn norm(&self) -> f64 {
        (self.x.iter().map(|v| v.norm_squared()).sum::<f64>() + self.y.norm_squared()).sqrt()
    }
}

/// One follower's projected sub-gradient step from its local view.
///
/// Returns `x_n` unchanged when the follower is inactive.
#[allow(clippy::too_many_arguments)]
pub fn follower_step(
    spec: &GameSpec,
    n: usize,
    x_n: &Strategy,
    view: &[Option<Strategy>],
    y: &Strategy,
    active: bool,
    alpha: f64,
) -> Result<Strategy> {
    if !active {
        return Ok(x_n.clone());
    }
    let sigma = sigma_follower(spec, n, view)?;
    let g = spec.follower_subgradient(n, x_n, &sigma, y)?;
    spec.follower_sets[n].project(&(x_n - g * alpha))
}

/// Leader step on the true aggregate of the followers.
pub fn leader_step(spec: &GameSpec, y: &Strategy, x_all: &[Strategy], alpha: f64) -> Result<Strategy> {
    let sigma0 = sigma_leader(spec, x_all)?;
    let g = spec.leader_subgradient(y, &sigma0)?;
    spec.leader_set.project(&(y - g * alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub horizon: usize,
    pub seed: u64,
    pub run_id: u64,
    /// Full rows are kept for every `stride`-th iteration; metrics are always full rate.
    pub stride: usize,
}

impl RunOptions {
    pub fn new(horizon: usize, seed: u64) -> Self {
        Self {
            horizon,
            seed,
            run_id: 0,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMeta {
    pub seed: u64,
    pub run_id: u64,
    pub protocol: String,
    pub horizon: usize,
    pub stride: usize,
    pub leader_period: usize,
}

/// Snapshot of iteration `k`: `x^k`, the leader strategy in force during `k`,
/// the event, steps, and the resulting increments.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub x: Vec<Strategy>,
    pub y: Strategy,
    pub event: CommEvent,
    pub leader_active: bool,
    pub follower_steps: Vec<f64>,
    pub leader_step: f64,
    pub increments: Vec<f64>,
    pub max_staleness: f64,
    pub distance: Option<f64>,
    pub lyapunov: Option<f64>,
}

/// Value of the Lyapunov function at a leader wake-up, before the leader moves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LeaderRecord {
    pub j: usize,
    pub k: usize,
    pub lyapunov: Option<f64>,
}

/// Complete record of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub meta: RunMeta,
    pub n_followers: usize,
    pub rows: Vec<TraceRow>,
    /// Neighbor pairs `(n, m)` indexing the staleness columns.
    pub edges: Vec<(usize, usize)>,
    /// `‖x_n^{k+1} - x_n^k‖`, row-major `[k][n]`.
    increments: Vec<f64>,
    /// `‖x~_{n,m}^k - x_m^k‖` for each edge, row-major `[k][edge]`.
    staleness: Vec<f64>,
    /// Activity bits `[k][n]`.
    activity: Vec<bool>,
    /// Leader strategy in force during each iteration.
    pub leader_path: Vec<Strategy>,
    /// `‖z^k - z*‖` per iteration when a reference was supplied.
    pub distance: Option<Vec<f64>>,
    pub leader_records: Vec<LeaderRecord>,
    pub final_profile: Profile,
    pub final_distance: Option<f64>,
}

impl Trace {
    pub fn horizon(&self) -> usize {
        self.leader_path.len()
    }

    pub fn increment(&self, k: usize, n: usize) -> f64 {
        self.increments[k * self.n_followers + n]
    }

    pub fn increments_at(&self, k: usize) -> &[f64] {
        &self.increments[k * self.n_followers..(k + 1) * self.n_followers]
    }

    pub fn staleness_at(&self, k: usize) -> &[f64] {
        let e = self.edges.len();
        &self.staleness[k * e..(k + 1) * e]
    }

    pub fn active(&self, k: usize, n: usize) -> bool {
        self.activity[k * self.n_followers + n]
    }

    /// Squared distance to the reference per iteration, followed by the final state.
    pub fn squared_errors(&self) -> Option<Vec<f64>> {
        let d = self.distance.as_ref()?;
        let mut out: Vec<f64> = d.iter().map(|v| v * v).collect();
        out.extend(self.final_distance.map(|v| v * v));
        Some(out)
    }
}

/// Runs the dynamics from `initial` for `options.horizon` iterations.
pub fn run(
    spec: &GameSpec,
    protocol: ProtocolSpec,
    schedule: &StepSchedule,
    leader: &LeaderSchedule,
    initial: &Profile,
    options: RunOptions,
    reference: Option<&ReferencePoint>,
) -> Result<Trace> {
    if options.horizon == 0 {
        return Err(Error::Input("horizon must be at least 1".to_string()));
    }
    if options.stride == 0 {
        return Err(Error::Input("stride must be at least 1".to_string()));
    }
    if schedule.followers.len() != spec.n_followers {
        return Err(Error::Input(format!(
            "schedule has {} follower sequences, game has {} followers",
            schedule.followers.len(),
            spec.n_followers
        )));
    }
    spec.check_profile(&initial.x, &initial.y)?;
    let reference = reference.map(ReferencePoint::profile);

    let sampler = EventSampler::new(protocol, spec)?;
    let mut rng = run_stream(options.seed, options.run_id);
    let n = spec.n_followers;
    let horizon = options.horizon;
    let edges = spec.edges();

    let mut x = initial.x.clone();
    let mut y = initial.y.clone();
    let mut views = LocalInfoState::new(spec, &x);
    let mut leader_updates = 0usize;

    let mut increments = Vec::with_capacity(horizon * n);
    let mut staleness = Vec::with_capacity(horizon * edges.len());
    let mut activity = Vec::with_capacity(horizon * n);
    let mut leader_path = Vec::with_capacity(horizon);
    let mut distance = reference.as_ref().map(|_| Vec::with_capacity(horizon));
    let mut leader_records = Vec::new();
    let mut rows = Vec::with_capacity(horizon / options.stride + 1);
    let mut lyapunov = None;

    for k in 0..horizon {
        let leader_active = leader.is_leader_iteration(k);
        let leader_alpha = schedule.leader.at(leader_updates);
        if leader_active {
            lyapunov = reference.as_ref().map(|r| r.squared_distance(&x, &y));
            leader_records.push(LeaderRecord {
                j: leader_updates,
                k,
                lyapunov,
            });
            y = leader_step(spec, &y, &x, leader_alpha)?;
            leader_updates += 1;
        }

        let event = sampler.sample(k, &mut rng);
        let stale_k: Vec<f64> = edges
            .iter()
            .map(|&(a, b)| views.views[a][b].as_ref().map_or(0.0, |v| (v - &x[b]).norm()))
            .collect();

        let steps: Vec<f64> = schedule.followers.iter().map(|s| s.at(k)).collect();
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            next.push(follower_step(
                spec,
                i,
                &x[i],
                &views.views[i],
                &y,
                event.activity[i],
                steps[i],
            )?);
        }
        let inc_k: Vec<f64> = next.iter().zip(&x).map(|(a, b)| (a - b).norm()).collect();
        let dist_k = reference.as_ref().map(|r| r.squared_distance(&x, &y).sqrt());

        if k % options.stride == 0 {
            rows.push(TraceRow {
                k,
                x: x.clone(),
                y: y.clone(),
                event: event.clone(),
                leader_active,
                follower_steps: steps,
                leader_step: leader_alpha,
                increments: inc_k.clone(),
                max_staleness: stale_k.iter().copied().fold(0.0, f64::max),
                distance: dist_k,
                lyapunov,
            });
        }

        increments.extend_from_slice(&inc_k);
        staleness.extend_from_slice(&stale_k);
        activity.extend_from_slice(&event.activity);
        leader_path.push(y.clone());
        if let (Some(d), Some(v)) = (distance.as_mut(), dist_k) {
            d.push(v);
        }

        views.update(&event, &x);
        x = next;
    }

    let final_distance = reference.as_ref().map(|r| r.squared_distance(&x, &y).sqrt());
    Ok(Trace {
        meta: RunMeta {
            seed: options.seed,
            run_id: options.run_id,
            protocol: protocol.name().to_string(),
            horizon,
            stride: options.stride,
            leader_period: leader.period,
        },
        n_followers: n,
        rows,
        edges,
        increments,
        staleness,
        activity,
        leader_path,
        distance,
        leader_records,
        final_profile: Profile::new(x, y),
        final_distance,
    })
}

/// An iteration where a follower moved farther than its increment bound allows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IncrementViolation {
    pub n: usize,
    pub k: usize,
    pub increment: f64,
    pub bound: f64,
}

/// Every `(n, k)` with `‖x_n^{k+1} - x_n^k‖ > A_n alpha_n^k + 1e-9`.
pub fn check_increment_bound(
    trace: &Trace,
    bounds: &SubgradientBounds,
    schedule: &StepSchedule,
) -> Vec<IncrementViolation> {
    let mut out = Vec::new();
    for k in 0..trace.horizon() {
        for (n, &inc) in trace.increments_at(k).iter().enumerate() {
            let bound = bounds.follower_bound(n) * schedule.followers[n].at(k);
            if inc > bound + INCREMENT_SLACK {
                out.push(IncrementViolation {
                    n,
                    k,
                    increment: inc,
                    bound,
                });
            }
        }
    }
    out
}

/// Partial sums `S_nm(K) = sum_{k<K} alpha_n^k ‖x~_{n,m}^k - x_m^k‖` for each edge.
#[derive(Debug, Clone, PartialEq)]
pub struct StalenessSeries {
    pub edges: Vec<(usize, usize)>,
    /// `sums[e][K]` for `K = 0..=horizon`.
    pub sums: Vec<Vec<f64>>,
}

impl StalenessSeries {
    pub fn at(&self, edge: usize, upto: usize) -> f64 {
        self.sums[edge][upto]
    }
}

pub fn staleness_series(trace: &Trace, schedule: &StepSchedule) -> StalenessSeries {
    let horizon = trace.horizon();
    let sums = trace
        .edges
        .iter()
        .enumerate()
        .map(|(e, &(n, _))| {
            let mut acc = 0.0;
            let mut curve = Vec::with_capacity(horizon + 1);
            curve.push(0.0);
            for k in 0..horizon {
                acc += schedule.followers[n].at(k) * trace.staleness_at(k)[e];
                curve.push(acc);
            }
            curve
        })
        .collect();
    StalenessSeries {
        edges: trace.edges.clone(),
        sums,
    }
}

/// Leader strategy changes only at wake-ups: `y` during `k` equals `y` during
/// `k - 1` unless `k` is a leader iteration.
pub fn leader_changes_only_at_wake_ups(trace: &Trace, leader: &LeaderSchedule) -> bool {
    trace
        .leader_path
        .windows(2)
        .enumerate()
        .all(|(i, w)| leader.is_leader_iteration(i + 1) || w[0] == w[1])
}

/// First iteration from which the distance to the reference stays below
/// `threshold` for the rest of the run (including the final state).
pub fn settling_iteration(trace: &Trace, threshold: f64) -> Option<usize> {
    let d = trace.distance.as_ref()?;
    if trace.final_distance? >= threshold {
        return None;
    }
    let last_above = d.iter().rposition(|v| *v >= threshold);
    Some(last_above.map_or(0, |i| i + 1))
}

/// First iteration whose distance to the reference is below `threshold`.
pub fn first_hit_iteration(trace: &Trace, threshold: f64) -> Option<usize> {
    let d = trace.distance.as_ref()?;
    d.iter()
        .position(|v| *v < threshold)
        .or_else(|| (trace.final_distance? < threshold).then_some(d.len()))
}

/// Builds a profile from plain slices.
pub fn profile_from_slices(x: &[Vec<f64>], y: &[f64]) -> Profile {
    Profile::new(
        x.iter().map(|v| DVector::from_column_slice(v)).collect(),
        DVector::from_column_slice(y),
    )
}
