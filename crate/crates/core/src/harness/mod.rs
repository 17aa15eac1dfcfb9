//! Scenario configuration, building, Monte-Carlo orchestration and output files.

pub mod config;
pub mod montecarlo;
pub mod output;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::comm::run_stream;
use crate::dynamics::Profile;
use crate::equilibrium::{
    default_reference_step, estimate_constants, solve_reference_gne, CouplingConstants, GameConstants, ReferencePoint,
    SolverOptions,
};
use crate::error::{Error, Result};
use crate::game::{
    estimate_bounds, quadratic_test_game, validate_game, AffineFollower, AffineLeader, FollowerOracle, GameSpec,
    Hyperbox,
};
use crate::schedule::{LeaderSchedule, StepSchedule};
use crate::smallcell::{build_scenario, SmallCellScenario};

pub use config::{parse_scenario, render_scenario, GameChoice, InitialPoint, ScenarioConfig};
pub use montecarlo::{compare_protocols, monte_carlo, ordering_holds, MseCurve, ProtocolOutcome};

/// Random stream ids reserved for analysis, far from the run ids `0, 1, 2, ...`.
pub const CONSTANTS_STREAM: u64 = u64::MAX;
pub const PROBE_STREAM: u64 = u64::MAX - 1;
pub const VERIFY_STREAM: u64 = u64::MAX - 2;

/// A scenario turned into a concrete game, schedules and starting point.
#[derive(Debug, Clone)]
pub struct BuiltScenario {
    pub spec: GameSpec,
    pub small_cell: Option<SmallCellScenario>,
    pub schedule: StepSchedule,
    pub leader: LeaderSchedule,
    pub initial: Profile,
}

/// Builds the game named by `config`; `base_dir` anchors relative custom-game paths.
pub fn build(config: &ScenarioConfig, base_dir: &Path) -> Result<BuiltScenario> {
    let (spec, small_cell) = match &config.game {
        GameChoice::QuadraticTest => (quadratic_test_game(), None),
        GameChoice::SmallCell(params) => {
            let s = build_scenario(params)?;
            (s.spec.clone(), Some(s))
        }
        GameChoice::Custom { path } => {
            let full = if path.is_absolute() {
                path.clone()
            } else {
                base_dir.join(path)
            };
            (load_custom_game(&full)?, None)
        }
    };
    let violations = validate_game(&spec);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(Error::Scenario(format!("invalid game: {}", list.join("; "))));
    }

    let schedule = match &config.schedule.followers {
        Some(list) => {
            if list.len() != spec.n_followers {
                return Err(Error::Scenario(format!(
                    "schedule.followers lists {} sequences for {} followers",
                    list.len(),
                    spec.n_followers
                )));
            }
            StepSchedule {
                followers: list.clone(),
                leader: config.schedule.leader,
            }
        }
        None => StepSchedule::uniform(spec.n_followers, config.schedule.follower, config.schedule.leader),
    };
    let leader = LeaderSchedule::new(config.leader_period())?;
    let initial = match config.run.initial {
        InitialPoint::Lower => Profile::lower_corner(&spec),
        InitialPoint::Upper => Profile::upper_corner(&spec),
        InitialPoint::Center => Profile::center(&spec),
    };
    Ok(BuiltScenario {
        spec,
        small_cell,
        schedule,
        leader,
        initial,
    })
}

/// Reads a scenario file, applies the environment override and builds it.
pub fn load(path: &Path) -> Result<(ScenarioConfig, BuiltScenario)> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut config = parse_scenario(&text)?;
    config.apply_env_overrides()?;
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let built = build(&config, &base)?;
    Ok((config, built))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomFollower {
    lower: Vec<f64>,
    upper: Vec<f64>,
    own: Vec<Vec<f64>>,
    aggregate: Vec<Vec<f64>>,
    leader: Vec<Vec<f64>>,
    offset: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomLeader {
    lower: Vec<f64>,
    upper: Vec<f64>,
    own: Vec<Vec<f64>>,
    aggregate: Vec<Vec<f64>>,
    offset: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomGame {
    adjacency: Vec<Vec<u8>>,
    weights: Vec<Vec<f64>>,
    leader_weights: Vec<f64>,
    leader: CustomLeader,
    followers: Vec<CustomFollower>,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Scenario(format!(
            "{what} must be a non-empty rectangular matrix"
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Loads an affine game: `d_n = own x + aggregate sigma + leader y + offset`,
/// `d_0 = own y + aggregate sigma_0 + offset`.
pub fn load_custom_game(path: &Path) -> Result<GameSpec> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let raw: CustomGame =
        toml::from_str(&text).map_err(|e| Error::Scenario(format!("{}: {}", path.display(), e.message())))?;
    custom_game(raw)
}

fn custom_game(raw: CustomGame) -> Result<GameSpec> {
    let n = raw.followers.len();
    if n == 0 {
        return Err(Error::Scenario("custom game has no followers".to_string()));
    }
    let follower_dim = raw.followers[0].lower.len();
    let leader_dim = raw.leader.lower.len();
    if raw.adjacency.len() != n || raw.adjacency.iter().any(|r| r.len() != n) {
        return Err(Error::Scenario(format!("adjacency must be {n}x{n}")));
    }
    let weights = matrix(&raw.weights, "weights")?;
    if weights.shape() != (n, n) || raw.leader_weights.len() != n {
        return Err(Error::Scenario(format!(
            "weights must be {n}x{n} and leader_weights of length {n}"
        )));
    }

    let mut follower_sets = Vec::with_capacity(n);
    let mut follower_oracles: Vec<Arc<dyn FollowerOracle>> = Vec::with_capacity(n);
    for (i, f) in raw.followers.iter().enumerate() {
        if f.lower.len() != follower_dim || f.offset.len() != follower_dim {
            return Err(Error::Scenario(format!("follower {i} has inconsistent dimensions")));
        }
        let own = matrix(&f.own, "own")?;
        let aggregate = matrix(&f.aggregate, "aggregate")?;
        let leader = matrix(&f.leader, "leader")?;
        if own.shape() != (follower_dim, follower_dim)
            || aggregate.shape() != (follower_dim, follower_dim)
            || leader.shape() != (follower_dim, leader_dim)
        {
            return Err(Error::Scenario(format!(
                "follower {i} coefficient shapes do not match the dimensions"
            )));
        }
        follower_sets.push(Hyperbox::new(f.lower.clone(), f.upper.clone()).map_err(to_scenario)?);
        follower_oracles.push(Arc::new(AffineFollower {
            own,
            aggregate,
            leader,
            offset: DVector::from_vec(f.offset.clone()),
        }));
    }
    let l = &raw.leader;
    let own = matrix(&l.own, "leader.own")?;
    let aggregate = matrix(&l.aggregate, "leader.aggregate")?;
    if own.shape() != (leader_dim, leader_dim)
        || aggregate.shape() != (leader_dim, follower_dim)
        || l.offset.len() != leader_dim
    {
        return Err(Error::Scenario(
            "leader coefficient shapes do not match the dimensions".to_string(),
        ));
    }
    Ok(GameSpec {
        n_followers: n,
        follower_dim,
        leader_dim,
        follower_sets,
        leader_set: Hyperbox::new(l.lower.clone(), l.upper.clone()).map_err(to_scenario)?,
        adjacency: DMatrix::from_fn(n, n, |i, j| raw.adjacency[i][j] != 0),
        weights,
        leader_weights: DVector::from_vec(raw.leader_weights),
        follower_oracles,
        leader_oracle: Arc::new(AffineLeader {
            own,
            aggregate,
            offset: DVector::from_vec(l.offset.clone()),
        }),
    })
}

fn to_scenario(e: Error) -> Error {
    match e {
        Error::Input(m) => Error::Scenario(m),
        other => other,
    }
}

/// Constants estimated from the game: coupling constants by sampling and
/// sub-gradient bounds on a grid.
pub fn game_constants(config: &ScenarioConfig, spec: &GameSpec) -> Result<GameConstants> {
    let mut rng = run_stream(config.run.seed, CONSTANTS_STREAM);
    let coupling = estimate_constants(spec, config.run.constant_samples, &mut rng)?;
    let bounds = estimate_bounds(spec, config.run.bound_grid, config.run.safety_factor)?;
    Ok(GameConstants { coupling, bounds })
}

/// Solver options from the config, deriving the step from `coupling` when unset.
pub fn solver_options(config: &ScenarioConfig, coupling: &CouplingConstants) -> SolverOptions {
    SolverOptions::new(
        config
            .run
            .reference_step
            .unwrap_or_else(|| default_reference_step(coupling)),
        config.run.reference_tol,
        config.run.reference_max_iter,
    )
}

/// Constants and reference equilibrium for a built scenario.
pub fn prepare_reference(config: &ScenarioConfig, built: &BuiltScenario) -> Result<(GameConstants, ReferencePoint)> {
    let constants = game_constants(config, &built.spec)?;
    let reference = solve_reference_gne(&built.spec, &solver_options(config, &constants.coupling))?;
    Ok((constants, reference))
}

/// Threshold in absolute distance units.
pub fn absolute_threshold(config: &ScenarioConfig, reference: &ReferencePoint) -> f64 {
    if config.run.relative_threshold {
        config.run.threshold * reference.profile().norm()
    } else {
        config.run.threshold
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smallcell::SmallCellParams;

    const CUSTOM: &str = r#"
adjacency = [[0, 1], [1, 0]]
weights = [[0.0, 1.0], [1.0, 0.0]]
leader_weights = [0.5, 0.5]

[leader]
lower = [-1.0]
upper = [1.0]
own = [[10.0]]
aggregate = [[1.0]]
offset = [0.0]

[[followers]]
lower = [-1.0]
upper = [1.0]
own = [[5.0]]
aggregate = [[1.0]]
leader = [[1.0]]
offset = [-1.0]

[[followers]]
lower = [-1.0]
upper = [1.0]
own = [[5.0]]
aggregate = [[1.0]]
leader = [[1.0]]
offset = [-1.0]
"#;

    #[test]
    fn custom_game_reproduces_the_quadratic_game() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("game.toml"), CUSTOM).unwrap();
        let mut config = ScenarioConfig::quadratic(1);
        config.game = GameChoice::Custom {
            path: "game.toml".into(),
        };
        config.run.reference_step = Some(0.01);
        let built = build(&config, dir.path()).unwrap();
        let (_, r) = prepare_reference(&config, &built).unwrap();
        assert!((r.x_star[0][0] - 10.0 / 59.0).abs() < 1e-9);
        assert!((r.y_star[0] + 1.0 / 59.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_custom_games_are_scenario_errors() {
        let dir = tempfile::tempdir().unwrap();
        let broken = CUSTOM.replace(
            "weights = [[0.0, 1.0], [1.0, 0.0]]",
            "weights = [[0.0, 0.5], [1.0, 0.0]]",
        );
        std::fs::write(dir.path().join("game.toml"), broken).unwrap();
        let mut config = ScenarioConfig::quadratic(1);
        config.game = GameChoice::Custom {
            path: "game.toml".into(),
        };
        assert!(matches!(build(&config, dir.path()), Err(Error::Scenario(_))));

        config.game = GameChoice::Custom {
            path: "missing.toml".into(),
        };
        assert!(matches!(build(&config, dir.path()), Err(Error::Io { .. })));
    }

    #[test]
    fn small_cell_leader_period_comes_from_the_game() {
        let mut config = ScenarioConfig::quadratic(1);
        config.game = GameChoice::SmallCell(SmallCellParams::default());
        let built = build(&config, Path::new(".")).unwrap();
        assert_eq!(built.leader.period, 10);
        assert!(built.small_cell.is_some());
        assert!(built.initial.x.iter().all(|v| v[0] == 0.0));
    }

    #[test]
    fn default_reference_step_solves_the_quadratic_game() {
        let config = ScenarioConfig::quadratic(1);
        let built = build(&config, Path::new(".")).unwrap();
        let (constants, r) = prepare_reference(&config, &built).unwrap();
        assert!((constants.l_bar() - 2.0).abs() < 1e-9);
        assert!(r.residual < config.run.reference_tol);
        assert!((absolute_threshold(&config, &r) - 0.1).abs() < 1e-15);
    }
}
