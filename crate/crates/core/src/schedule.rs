//! Diminishing step sizes `a / (b + t)^p` and the leader's periodic wake-up set.

use serde::{Deserialize, Serialize};

use crate::error::{Agent, Error, Result};

/// One power-law step sequence `scale / (offset + t)^exponent`.
///
/// With `exponent` in `(0.5, 1]` the sequence is non-increasing, its sum
/// diverges and its sum of squares converges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerStep {
    pub scale: f64,
    pub offset: f64,
    pub exponent: f64,
}

impl Default for PowerStep {
    fn default() -> Self {
        Self {
            scale: 1.0,
            offset: 1.0,
            exponent: 1.0,
        }
    }
}

impl PowerStep {
    pub fn new(scale: f64, offset: f64, exponent: f64) -> Result<Self> {
        let s = Self {
            scale,
            offset,
            exponent,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Input(format!("step scale {} must be positive", self.scale)));
        }
        if !(self.offset >= 1.0 && self.offset.is_finite()) {
            return Err(Error::Input(format!("step offset {} must be >= 1", self.offset)));
        }
        if !(self.exponent > 0.5 && self.exponent <= 1.0) {
            return Err(Error::Input(format!(
                "step exponent {} must lie in (0.5, 1]",
                self.exponent
            )));
        }
        Ok(())
    }

    pub fn at(&self, t: usize) -> f64 {
        self.scale / (self.offset + t as f64).powf(self.exponent)
    }
}

/// Per-follower sequences indexed by the global iteration `k`, and the leader's
/// sequence indexed by its own update count `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub followers: Vec<PowerStep>,
    pub leader: PowerStep,
}

impl StepSchedule {
    pub fn uniform(n_followers: usize, follower: PowerStep, leader: PowerStep) -> Self {
        Self {
            followers: vec![follower; n_followers],
            leader,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.followers
            .iter()
            .chain(std::iter::once(&self.leader))
            .try_for_each(PowerStep::validate)
    }

    /// Step of `agent` at iteration `k`. The leader's value depends only on
    /// `leader_updates_so_far`, which holds it constant between wake-ups.
    pub fn step_size(&self, agent: Agent, k: usize, leader_updates_so_far: usize) -> f64 {
        match agent {
            Agent::Follower(n) => self.followers[n].at(k),
            Agent::Leader => self.leader.at(leader_updates_so_far),
        }
    }

    /// Leader step in effect at iteration `k` under `leader`'s wake-up set.
    pub fn leader_step_at(&self, k: usize, leader: &LeaderSchedule) -> f64 {
        self.leader.at(leader.updates_before(k))
    }
}

/// Free-function form of [`StepSchedule::step_size`].
pub fn step_size(schedule: &StepSchedule, agent: Agent, k: usize, leader_updates_so_far: usize) -> f64 {
    schedule.step_size(agent, k, leader_updates_so_far)
}

/// Leader wakes at `0, T, 2T, ...`; the longest gap `K̄` equals `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaderSchedule {
    pub period: usize,
}

impl LeaderSchedule {
    pub fn new(period: usize) -> Result<Self> {
        if period == 0 {
            return Err(Error::Input("leader period must be positive".to_string()));
        }
        Ok(Self { period })
    }

    pub fn is_leader_iteration(&self, k: usize) -> bool {
        k.is_multiple_of(self.period)
    }

    /// Number of wake-ups strictly before iteration `k`.
    pub fn updates_before(&self, k: usize) -> usize {
        k.div_ceil(self.period)
    }

    pub fn max_gap(&self) -> usize {
        self.period
    }
}

/// `{0, T, 2T, ...}` restricted to `[0, horizon)`.
pub fn leader_iterations(schedule: &LeaderSchedule, horizon: usize) -> Vec<usize> {
    (0..horizon).step_by(schedule.period).collect()
}

/// Ratio bound between the largest and the smallest step in use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaReport {
    /// `max_k max_i alpha_i^k / min_i alpha_i^k` over the horizon.
    pub empirical: f64,
    /// Bound valid for every `k`, available when all sequences share one exponent.
    pub analytic: Option<f64>,
}

/// Empirical `kappa` over `k < horizon`, with the leader's realized (held) step.
pub fn kappa_bound(schedule: &StepSchedule, horizon: usize, leader: &LeaderSchedule) -> KappaReport {
    let mut empirical = 1.0f64;
    for k in 0..horizon.max(1) {
        let mut hi = schedule.leader_step_at(k, leader);
        let mut lo = hi;
        for s in &schedule.followers {
            let a = s.at(k);
            hi = hi.max(a);
            lo = lo.min(a);
        }
        empirical = empirical.max(hi / lo);
    }
    KappaReport {
        empirical,
        analytic: analytic_kappa(schedule, leader),
    }
}

/// For a shared exponent `p`:
/// follower/follower ratios are at most `(a_i/a_l) max(1, b_l/b_i)^p`;
/// leader over follower at most `(a_0/a_l) max(b_l/b_0, T)^p` since `j(k) >= k/T`;
/// follower over leader at most `(a_i/a_0) max((b_0+1-1/T)/b_i, 1/T)^p` since `j(k) <= (k+T-1)/T`.
fn analytic_kappa(schedule: &StepSchedule, leader: &LeaderSchedule) -> Option<f64> {
    let p = schedule.leader.exponent;
    if schedule.followers.iter().any(|s| s.exponent != p) {
        return None;
    }
    let t = leader.period as f64;
    let l = &schedule.leader;
    let mut bound = 1.0f64;
    for fi in &schedule.followers {
        for fl in &schedule.followers {
            let r = (fi.scale / fl.scale) * (fl.offset / fi.offset).max(1.0).powf(p);
            bound = bound.max(r);
        }
        let over = (l.scale / fi.scale) * (fi.offset / l.offset).max(t).powf(p);
        let under = (fi.scale / l.scale) * ((l.offset + 1.0 - 1.0 / t) / fi.offset).max(1.0 / t).powf(p);
        bound = bound.max(over).max(under);
    }
    Some(bound)
}
