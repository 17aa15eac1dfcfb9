use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lfnag::comm::{run_stream, ProtocolSpec};
use lfnag::dynamics::{check_increment_bound, run, settling_iteration, RunOptions};
use lfnag::equilibrium::{check_theorem_conditions, monotonicity_probe, verify_gne, ReferencePoint};
use lfnag::harness::config::{GameChoice, ScenarioConfig};
use lfnag::harness::output::{
    write_json, write_mse, write_summary, write_trace, ConstantsSummary, ReferenceSummary, Summary,
};
use lfnag::harness::{
    absolute_threshold, build, compare_protocols, load, monte_carlo, ordering_holds, prepare_reference, BuiltScenario,
    ProtocolOutcome, PROBE_STREAM, VERIFY_STREAM,
};
use lfnag::schedule::kappa_bound;
use lfnag::smallcell::SmallCellParams;
use lfnag::Error;

/// Leader-follower network aggregative games under stochastic communication.
///
/// The master seed in a scenario file can be overridden with LFNAG_SEED.
#[derive(Parser)]
#[command(name = "lfnag", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a scenario and check the game's invariants.
    Validate { scenario: PathBuf },
    /// Solve and verify the reference equilibrium.
    Gne { scenario: PathBuf },
    /// Evaluate the sufficient convergence conditions and probe monotonicity.
    Check {
        scenario: PathBuf,
        /// Sampled pairs for the monotonicity probe.
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
        /// Override the step ratio bound.
        #[arg(long)]
        kappa: Option<f64>,
        /// Override the activity lower bound.
        #[arg(long)]
        delta: Option<f64>,
        /// Override the longest leader gap.
        #[arg(long)]
        k_bar: Option<usize>,
    },
    /// Run one trajectory and write its trace.
    Run { scenario: PathBuf },
    /// Run the Monte-Carlo mean-square study.
    Mc { scenario: PathBuf },
    /// Run the small-cell scenario under all three protocols.
    Smallcell {
        /// Scenario file with a small-cell game; built-in defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "smallcell-out")]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Scenario(_) | Error::Input(_) => 3,
        Error::NonConvergence { .. } => 4,
        Error::Run { source, .. } => exit_code(source),
        Error::Oracle { .. } | Error::Io { .. } => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { scenario } => validate(&scenario),
        Command::Gne { scenario } => gne(&scenario),
        Command::Check {
            scenario,
            pairs,
            kappa,
            delta,
            k_bar,
        } => check(&scenario, pairs, kappa, delta, k_bar),
        Command::Run { scenario } => single_run(&scenario),
        Command::Mc { scenario } => mc(&scenario),
        Command::Smallcell {
            config,
            out_dir,
            seed,
            runs,
            horizon,
        } => smallcell(config.as_deref(), &out_dir, seed, runs, horizon),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn summary_for(config: &ScenarioConfig, built: &BuiltScenario) -> Summary {
    Summary::new(
        config.game.kind(),
        config.run.seed,
        config.run.runs,
        config.run.horizon,
        built.leader.period,
    )
}

fn format_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.9}")).collect();
    format!("[{}]", parts.join(", "))
}

fn print_reference(r: &ReferencePoint) {
    let x: Vec<f64> = r.x_star.iter().flat_map(|v| v.iter().copied()).collect();
    let y: Vec<f64> = r.y_star.iter().copied().collect();
    println!("x* = {}", format_vec(&x));
    println!("y* = {}", format_vec(&y));
    println!("residual {:e} after {} iterations", r.residual, r.iterations_used);
}

fn validate(path: &Path) -> lfnag::Result<()> {
    let (config, built) = load(path)?;
    println!(
        "ok: {} game, {} followers, protocol {}, leader period {}",
        config.game.kind(),
        built.spec.n_followers,
        config.protocol.name(),
        built.leader.period
    );
    Ok(())
}

fn gne(path: &Path) -> lfnag::Result<()> {
    let (config, built) = load(path)?;
    let (constants, reference) = prepare_reference(&config, &built)?;
    print_reference(&reference);
    let check = verify_gne(
        &built.spec,
        &reference,
        1_000,
        &mut run_stream(config.run.seed, VERIFY_STREAM),
    )?;
    let (agent, worst) = check.worst();
    match agent {
        Some(a) => println!("most negative directional value {worst:e} ({a})"),
        None => println!("no negative directional value found"),
    }
    if let Some(out) = &config.output.summary {
        let mut s = summary_for(&config, &built);
        s.reference = Some(ReferenceSummary::new(&reference, Some(check)));
        s.constants = Some(ConstantsSummary::new(&constants));
        write_summary(&s, out)?;
    }
    Ok(())
}

fn check(path: &Path, pairs: usize, kappa: Option<f64>, delta: Option<f64>, k_bar: Option<usize>) -> lfnag::Result<()> {
    let (config, built) = load(path)?;
    let constants = lfnag::harness::game_constants(&config, &built.spec)?;
    let kappa_report = kappa_bound(&built.schedule, config.run.horizon, &built.leader);
    let kappa = kappa.unwrap_or(kappa_report.empirical);
    let delta = match delta {
        Some(d) => d,
        None => config.protocol.activity_lower_bound(&built.spec)?,
    };
    let k_bar = k_bar.unwrap_or(built.leader.max_gap());
    let report = check_theorem_conditions(&constants.coupling, kappa, delta, k_bar);
    let probe = monotonicity_probe(
        &built.spec,
        pairs,
        Some(&constants.coupling),
        &mut run_stream(config.run.seed, PROBE_STREAM),
    )?;

    println!("C_n = {}", format_vec(&report.strong_followers));
    println!(
        "C_0 = {:.9}  L = {:.9}  L_0 = {:.9}  L-bar = {:.9}",
        report.strong_leader, report.lipschitz_follower, report.lipschitz_leader, report.l_bar
    );
    println!("kappa = {kappa}  delta = {delta}  K-bar = {k_bar}");
    println!("follower margins {}", format_vec(&report.follower_margins));
    println!("leader margin {:.9}", report.leader_margin);
    println!("verdict: {}", if report.holds { "hold" } else { "do not hold" });
    println!("note: {}", report.note);
    println!(
        "monotonicity: min psi {:e} over {} pairs",
        probe.min_psi, probe.pairs_evaluated
    );

    if let Some(out) = &config.output.summary {
        let mut s = summary_for(&config, &built);
        s.constants = Some(ConstantsSummary::new(&constants));
        s.kappa = Some(kappa_report);
        s.conditions = Some(report);
        s.monotonicity = Some(probe);
        write_summary(&s, out)?;
    }
    Ok(())
}

fn single_run(path: &Path) -> lfnag::Result<()> {
    let (config, built) = load(path)?;
    let (constants, reference) = prepare_reference(&config, &built)?;
    let options = RunOptions {
        horizon: config.run.horizon,
        seed: config.run.seed,
        run_id: 0,
        stride: config.run.stride,
    };
    let trace = run(
        &built.spec,
        config.protocol,
        &built.schedule,
        &built.leader,
        &built.initial,
        options,
        Some(&reference),
    )?;
    let threshold = absolute_threshold(&config, &reference);
    let violations = check_increment_bound(&trace, &constants.bounds, &built.schedule);
    let final_error = trace.final_distance.unwrap_or(f64::NAN);
    let reached = settling_iteration(&trace, threshold);
    println!("final distance {final_error:e}");
    match reached {
        Some(k) => println!("below {threshold:e} from iteration {k}"),
        None => println!("did not settle below {threshold:e}"),
    }
    println!("increment bound violations: {}", violations.len());

    if let Some(out) = &config.output.trace {
        write_trace(&trace, out)?;
    }
    if let Some(out) = &config.output.summary {
        let mut s = summary_for(&config, &built);
        s.threshold = Some(threshold);
        s.reference = Some(ReferenceSummary::new(&reference, None));
        s.constants = Some(ConstantsSummary::new(&constants));
        s.protocols = vec![ProtocolOutcome {
            protocol: config.protocol.name().to_string(),
            final_errors: vec![final_error],
            mean_final_error: final_error,
            iterations_to_threshold: vec![reached],
            increment_violations: violations.len(),
        }];
        write_summary(&s, out)?;
    }
    Ok(())
}

fn mc(path: &Path) -> lfnag::Result<()> {
    let (config, built) = load(path)?;
    let (constants, reference) = prepare_reference(&config, &built)?;
    let curve = monte_carlo(
        &built,
        config.protocol,
        config.run.horizon,
        config.run.seed,
        config.run.runs,
        &reference,
    )?;
    let last = curve.mse.len() - 1;
    for k in [0, 1, 10, 100, 1_000, 10_000, 100_000, last] {
        if k <= last {
            println!("mse[{k}] = {:e}", curve.mse[k]);
        }
    }
    if let Some(out) = &config.output.mse {
        write_mse(&curve, out)?;
    }
    if let Some(out) = &config.output.summary {
        let mut s = summary_for(&config, &built);
        s.reference = Some(ReferenceSummary::new(&reference, None));
        s.constants = Some(ConstantsSummary::new(&constants));
        s.protocols = vec![ProtocolOutcome {
            protocol: config.protocol.name().to_string(),
            mean_final_error: curve.final_errors.iter().sum::<f64>() / curve.runs as f64,
            final_errors: curve.final_errors,
            iterations_to_threshold: Vec::new(),
            increment_violations: 0,
        }];
        write_summary(&s, out)?;
    }
    Ok(())
}

/// Built-in small-cell study: default parameters, harmonic steps, 1% relative threshold.
fn default_small_cell_config(seed: u64) -> ScenarioConfig {
    let mut c = ScenarioConfig::quadratic(seed);
    c.game = GameChoice::SmallCell(SmallCellParams::default());
    c.run.horizon = 20_000;
    c.run.runs = 20;
    c.run.threshold = 0.01;
    c.run.relative_threshold = true;
    c.run.reference_step = Some(1e-3);
    c.run.reference_tol = 1e-9;
    c
}

#[derive(serde::Serialize)]
struct SmallCellReport<'a> {
    summary: &'a Summary,
    /// Per run: gossip >= bernoulli >= normal in iterations to the threshold.
    ordering: Vec<bool>,
    geometry: &'a lfnag::smallcell::SmallCellGeometry,
}

fn smallcell(
    config_path: Option<&Path>,
    out_dir: &Path,
    seed: Option<u64>,
    runs: Option<usize>,
    horizon: Option<usize>,
) -> lfnag::Result<()> {
    let (mut config, base) = match config_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| Error::Io {
                path: p.to_path_buf(),
                source,
            })?;
            let c = lfnag::harness::parse_scenario(&text)?;
            if !matches!(c.game, GameChoice::SmallCell(_)) {
                return Err(Error::Scenario(format!(
                    "{} does not describe a small-cell game",
                    p.display()
                )));
            }
            (c, p.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        None => (default_small_cell_config(1), PathBuf::from(".")),
    };
    config.apply_env_overrides()?;
    if let Some(s) = seed {
        config.run.seed = s;
    }
    if let Some(r) = runs {
        config.run.runs = r;
    }
    if let Some(h) = horizon {
        config.run.horizon = h;
    }
    let built = build(&config, &base)?;
    let (constants, reference) = prepare_reference(&config, &built)?;
    let threshold = absolute_threshold(&config, &reference);
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let protocols = [
        ProtocolSpec::Normal,
        ProtocolSpec::Bernoulli { p: 0.7, q: 0.7 },
        ProtocolSpec::Gossip,
    ];
    for protocol in protocols {
        let options = RunOptions {
            horizon: config.run.horizon,
            seed: config.run.seed,
            run_id: 0,
            stride: config.run.stride,
        };
        let trace = run(
            &built.spec,
            protocol,
            &built.schedule,
            &built.leader,
            &built.initial,
            options,
            Some(&reference),
        )?;
        write_trace(&trace, &out_dir.join(format!("trace_{}.csv", protocol.name())))?;
    }
    let outcomes = compare_protocols(
        &built,
        &protocols,
        config.run.horizon,
        config.run.seed,
        config.run.runs,
        &reference,
        threshold,
        &constants.bounds,
    )?;
    let ordering = ordering_holds(&[&outcomes[0], &outcomes[1], &outcomes[2]]);

    print_reference(&reference);
    println!("threshold {threshold:e} (relative {})", config.run.relative_threshold);
    for o in &outcomes {
        let worst = o.final_errors.iter().copied().fold(0.0, f64::max);
        println!(
            "{:<9} mean final distance {:e}  worst {:e}  increment violations {}",
            o.protocol, o.mean_final_error, worst, o.increment_violations
        );
    }
    println!(
        "ordering holds in {}/{} runs",
        ordering.iter().filter(|b| **b).count(),
        ordering.len()
    );

    let mut s = summary_for(&config, &built);
    s.threshold = Some(threshold);
    s.reference = Some(ReferenceSummary::new(&reference, None));
    s.constants = Some(ConstantsSummary::new(&constants));
    s.protocols = outcomes;
    let geometry = &built.small_cell.as_ref().expect("small-cell game").geometry;
    write_json(
        &SmallCellReport {
            summary: &s,
            ordering,
            geometry,
        },
        &out_dir.join("summary.json"),
    )?;
    Ok(())
}
