//! Independent runs fanned out over threads and reduced in run order.
//!
//! Run `r` draws from the ChaCha stream `r` of the master seed, so adding runs
//! never changes the earlier ones.

use rayon::prelude::*;
use serde::Serialize;

use super::BuiltScenario;
use crate::comm::ProtocolSpec;
use crate::dynamics::{check_increment_bound, run, settling_iteration, RunOptions, Trace};
use crate::equilibrium::ReferencePoint;
use crate::error::{Error, Result};
use crate::game::SubgradientBounds;

fn run_many(
    built: &BuiltScenario,
    protocol: ProtocolSpec,
    horizon: usize,
    seed: u64,
    runs: usize,
    reference: Option<&ReferencePoint>,
) -> Vec<Result<Trace>> {
    (0..runs as u64)
        .into_par_iter()
        .map(|run_id| {
            let options = RunOptions {
                horizon,
                seed,
                run_id,
                stride: horizon,
            };
            run(
                &built.spec,
                protocol,
                &built.schedule,
                &built.leader,
                &built.initial,
                options,
                reference,
            )
            .map_err(|e| Error::Run {
                run_id,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Mean squared distance to the reference, `mse[k]` for `k = 0..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseCurve {
    pub mse: Vec<f64>,
    pub final_errors: Vec<f64>,
    pub runs: usize,
}

pub fn monte_carlo(
    built: &BuiltScenario,
    protocol: ProtocolSpec,
    horizon: usize,
    seed: u64,
    runs: usize,
    reference: &ReferencePoint,
) -> Result<MseCurve> {
    if runs < 2 {
        return Err(Error::Input(format!("Monte-Carlo needs at least 2 runs, got {runs}")));
    }
    let mut mse = vec![0.0; horizon + 1];
    let mut final_errors = Vec::with_capacity(runs);
    for trace in run_many(built, protocol, horizon, seed, runs, Some(reference)) {
        let trace = trace?;
        let errors = trace.squared_errors().expect("runs carry a reference");
        for (acc, e) in mse.iter_mut().zip(&errors) {
            *acc += e;
        }
        final_errors.push(trace.final_distance.expect("runs carry a reference"));
    }
    for v in &mut mse {
        *v /= runs as f64;
    }
    Ok(MseCurve {
        mse,
        final_errors,
        runs,
    })
}

/// Per-protocol results over the same `(seed, run)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolOutcome {
    pub protocol: String,
    pub final_errors: Vec<f64>,
    pub mean_final_error: f64,
    /// First iteration after which the distance stays below the threshold.
    pub iterations_to_threshold: Vec<Option<usize>>,
    pub increment_violations: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn compare_protocols(
    built: &BuiltScenario,
    protocols: &[ProtocolSpec],
    horizon: usize,
    seed: u64,
    runs: usize,
    reference: &ReferencePoint,
    threshold: f64,
    bounds: &SubgradientBounds,
) -> Result<Vec<ProtocolOutcome>> {
    protocols
        .iter()
        .map(|&protocol| {
            let mut final_errors = Vec::with_capacity(runs);
            let mut iterations = Vec::with_capacity(runs);
            let mut violations = 0;
            for trace in run_many(built, protocol, horizon, seed, runs, Some(reference)) {
                let trace = trace?;
                final_errors.push(trace.final_distance.expect("runs carry a reference"));
                iterations.push(settling_iteration(&trace, threshold));
                violations += check_increment_bound(&trace, bounds, &built.schedule).len();
            }
            Ok(ProtocolOutcome {
                protocol: protocol.name().to_string(),
                mean_final_error: final_errors.iter().sum::<f64>() / runs.max(1) as f64,
                final_errors,
                iterations_to_threshold: iterations,
                increment_violations: violations,
            })
        })
        .collect()
}

/// Runs where the protocols listed from fastest to slowest expected are
/// ordered by iterations-to-threshold (ties allowed; never reaching counts as slowest).
pub fn ordering_holds(ordered: &[&ProtocolOutcome]) -> Vec<bool> {
    let runs = ordered.first().map_or(0, |o| o.iterations_to_threshold.len());
    (0..runs)
        .map(|r| {
            ordered.windows(2).all(|w| {
                let key = |o: &ProtocolOutcome| o.iterations_to_threshold[r].unwrap_or(usize::MAX);
                key(w[0]) <= key(w[1])
            })
        })
        .collect()
}
