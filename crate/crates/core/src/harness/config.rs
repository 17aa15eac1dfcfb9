//! Scenario documents (TOML) with strict, path-addressed validation.
//!
//! ```toml
//! [game]
//! kind = "quadratic-test"      # or "small-cell" (plus any parameter) or "custom" (plus `path`)
//!
//! [protocol]
//! kind = "bernoulli"           # "normal" | "bernoulli" | "gossip"
//! p = 0.7
//! q = 0.7
//!
//! [schedule]
//! leader_period = 2
//! follower = { scale = 1.0, offset = 1.0, exponent = 1.0 }
//! leader = { scale = 1.0, offset = 1.0, exponent = 1.0 }
//!
//! [run]
//! seed = 42
//! horizon = 20000
//!
//! [output]
//! trace = "trace.csv"
//! ```

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::Deserialize;
use toml::{Table, Value};

use crate::comm::ProtocolSpec;
use crate::error::{Error, FieldError, Result};
use crate::schedule::PowerStep;
use crate::smallcell::SmallCellParams;

/// Overrides `run.seed` when set.
pub const SEED_ENV: &str = "LFNAG_SEED";

#[derive(Debug, Clone, PartialEq)]
pub enum GameChoice {
    QuadraticTest,
    SmallCell(SmallCellParams),
    /// Affine game read from a separate file; relative paths resolve against
    /// the scenario file's directory.
    Custom {
        path: PathBuf,
    },
}

impl GameChoice {
    pub fn kind(&self) -> &'static str {
        match self {
            GameChoice::QuadraticTest => "quadratic-test",
            GameChoice::SmallCell(_) => "small-cell",
            GameChoice::Custom { .. } => "custom",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScheduleConfig {
    /// Falls back to the small-cell `leader_period`, then to 1.
    pub leader_period: Option<usize>,
    pub follower: PowerStep,
    pub leader: PowerStep,
    /// Per-follower sequences replacing `follower` when present.
    pub followers: Option<Vec<PowerStep>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialPoint {
    Lower,
    Upper,
    Center,
}

impl InitialPoint {
    pub fn name(&self) -> &'static str {
        match self {
            InitialPoint::Lower => "lower",
            InitialPoint::Upper => "upper",
            InitialPoint::Center => "center",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "lower" => Some(Self::Lower),
            "upper" => Some(Self::Upper),
            "center" => Some(Self::Center),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub horizon: usize,
    pub runs: usize,
    pub stride: usize,
    pub initial: InitialPoint,
    /// Distance to the reference counted as "reached".
    pub threshold: f64,
    /// Threshold is relative to `‖z*‖` instead of absolute.
    pub relative_threshold: bool,
    /// Reference solver step; derived from the estimated constants when absent.
    pub reference_step: Option<f64>,
    pub reference_tol: f64,
    pub reference_max_iter: usize,
    pub constant_samples: usize,
    pub bound_grid: usize,
    pub safety_factor: f64,
}

impl RunConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            horizon: 10_000,
            runs: 1,
            stride: 1,
            initial: InitialPoint::Lower,
            threshold: 0.1,
            relative_threshold: false,
            reference_step: None,
            reference_tol: 1e-10,
            reference_max_iter: 1_000_000,
            constant_samples: 1_000,
            bound_grid: 5,
            safety_factor: crate::game::DEFAULT_SAFETY_FACTOR,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputConfig {
    pub trace: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub mse: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub game: GameChoice,
    pub protocol: ProtocolSpec,
    pub schedule: ScheduleConfig,
    pub run: RunConfig,
    pub output: OutputConfig,
}

impl ScenarioConfig {
    /// Quadratic test game under the normal protocol with default schedules.
    pub fn quadratic(seed: u64) -> Self {
        Self {
            game: GameChoice::QuadraticTest,
            protocol: ProtocolSpec::Normal,
            schedule: ScheduleConfig::default(),
            run: RunConfig::with_seed(seed),
            output: OutputConfig::default(),
        }
    }

    pub fn leader_period(&self) -> usize {
        match (&self.schedule.leader_period, &self.game) {
            (Some(t), _) => *t,
            (None, GameChoice::SmallCell(p)) => p.leader_period,
            (None, _) => 1,
        }
    }

    /// Applies `LFNAG_SEED` if it is set.
    pub fn apply_env_overrides(&mut self) -> Result<()> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            self.run.seed = raw.trim().parse().map_err(|_| {
                Error::Config(vec![FieldError::new(
                    SEED_ENV,
                    format!("expected an unsigned 64-bit integer, got {raw:?}"),
                )])
            })?;
        }
        Ok(())
    }
}

/// Key reader over one table that remembers which keys were consumed.
struct Section<'a> {
    path: String,
    table: &'a Table,
    seen: BTreeSet<&'a str>,
}

impl<'a> Section<'a> {
    fn new(path: impl Into<String>, table: &'a Table) -> Self {
        Self {
            path: path.into(),
            table,
            seen: BTreeSet::new(),
        }
    }

    fn at(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn raw(&mut self, key: &str) -> Option<&'a Value> {
        let (k, v) = self.table.get_key_value(key)?;
        self.seen.insert(k.as_str());
        Some(v)
    }

    fn typed<T>(
        &mut self,
        key: &str,
        errors: &mut Vec<FieldError>,
        expected: &str,
        convert: impl Fn(&'a Value) -> Option<T>,
    ) -> Option<T> {
        let v = self.raw(key)?;
        let out = convert(v);
        if out.is_none() {
            errors.push(FieldError::new(self.at(key), format!("expected {expected}")));
        }
        out
    }

    fn float(&mut self, key: &str, errors: &mut Vec<FieldError>) -> Option<f64> {
        self.typed(key, errors, "a number", |v| match v {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            _ => None,
        })
    }

    fn count(&mut self, key: &str, errors: &mut Vec<FieldError>) -> Option<usize> {
        self.typed(key, errors, "a non-negative integer", |v| {
            v.as_integer().and_then(|i| usize::try_from(i).ok())
        })
    }

    fn seed(&mut self, key: &str, errors: &mut Vec<FieldError>) -> Option<u64> {
        self.typed(key, errors, "a non-negative integer", |v| match v {
            Value::Integer(i) => u64::try_from(*i).ok(),
            // seeds above i64::MAX are written as strings
            Value::String(s) => s.parse().ok(),
            _ => None,
        })
    }

    fn boolean(&mut self, key: &str, errors: &mut Vec<FieldError>) -> Option<bool> {
        self.typed(key, errors, "true or false", Value::as_bool)
    }

    fn string(&mut self, key: &str, errors: &mut Vec<FieldError>) -> Option<&'a str> {
        self.typed(key, errors, "a string", Value::as_str)
    }

    fn required<T>(&self, key: &str, value: Option<T>, errors: &mut Vec<FieldError>) -> Option<T> {
        if value.is_none() && !self.table.contains_key(key) {
            errors.push(FieldError::new(self.at(key), "missing required field"));
        }
        value
    }

    fn not_applicable(&mut self, keys: &[&str], context: &str, errors: &mut Vec<FieldError>) {
        for key in keys {
            if self.raw(key).is_some() {
                errors.push(FieldError::new(
                    self.at(key),
                    format!("field not applicable to {context}"),
                ));
            }
        }
    }

    fn finish(self, errors: &mut Vec<FieldError>) {
        for key in self.table.keys() {
            if !self.seen.contains(key.as_str()) {
                errors.push(FieldError::new(self.at(key), "unknown field"));
            }
        }
    }
}

fn subtable<'a>(root: &'a Table, key: &str, errors: &mut Vec<FieldError>) -> Option<&'a Table> {
    match root.get(key) {
        None => None,
        Some(Value::Table(t)) => Some(t),
        Some(_) => {
            errors.push(FieldError::new(key, "expected a table"));
            None
        }
    }
}

fn input_error(path: &str, e: Error, errors: &mut Vec<FieldError>) {
    let message = match e {
        Error::Input(m) => m,
        other => other.to_string(),
    };
    errors.push(FieldError::new(path, message));
}

fn power_step(v: &Value, path: &str, errors: &mut Vec<FieldError>) -> Option<PowerStep> {
    let Value::Table(t) = v else {
        errors.push(FieldError::new(path, "expected a table"));
        return None;
    };
    let mut s = Section::new(path, t);
    let d = PowerStep::default();
    let step = PowerStep {
        scale: s.float("scale", errors).unwrap_or(d.scale),
        offset: s.float("offset", errors).unwrap_or(d.offset),
        exponent: s.float("exponent", errors).unwrap_or(d.exponent),
    };
    s.finish(errors);
    if let Err(e) = step.validate() {
        input_error(path, e, errors);
    }
    Some(step)
}

fn parse_game(root: &Table, errors: &mut Vec<FieldError>) -> Option<GameChoice> {
    let Some(table) = subtable(root, "game", errors) else {
        if !root.contains_key("game") {
            errors.push(FieldError::new("game", "missing required section"));
        }
        return None;
    };
    let mut s = Section::new("game", table);
    let kind = s.string("kind", errors);
    let kind = s.required("kind", kind, errors)?;
    match kind {
        "quadratic-test" => {
            s.not_applicable(&["path"], "game quadratic-test", errors);
            s.finish(errors);
            Some(GameChoice::QuadraticTest)
        }
        "custom" => {
            let path = s.string("path", errors);
            let path = s.required("path", path, errors);
            s.finish(errors);
            path.map(|p| GameChoice::Custom { path: p.into() })
        }
        "small-cell" => {
            s.not_applicable(&["path"], "game small-cell", errors);
            let known = match Value::try_from(SmallCellParams::default()) {
                Ok(Value::Table(t)) => t,
                _ => Table::new(),
            };
            let mut rest = Table::new();
            for (k, v) in table {
                if k == "kind" || k == "path" {
                    continue;
                }
                if known.contains_key(k) {
                    s.raw(k);
                    rest.insert(k.clone(), v.clone());
                }
            }
            s.finish(errors);
            match SmallCellParams::deserialize(Value::Table(rest)) {
                Ok(p) => {
                    if let Err(e) = p.validate() {
                        input_error("game", e, errors);
                    }
                    Some(GameChoice::SmallCell(p))
                }
                Err(e) => {
                    errors.push(FieldError::new("game", e.to_string().trim().to_string()));
                    None
                }
            }
        }
        other => {
            errors.push(FieldError::new(
                "game.kind",
                format!("unknown game {other:?}; expected quadratic-test, small-cell or custom"),
            ));
            None
        }
    }
}

fn parse_protocol(root: &Table, errors: &mut Vec<FieldError>) -> Option<ProtocolSpec> {
    let Some(table) = subtable(root, "protocol", errors) else {
        return (!root.contains_key("protocol")).then_some(ProtocolSpec::Normal);
    };
    let mut s = Section::new("protocol", table);
    let kind = s.string("kind", errors);
    let kind = s.required("kind", kind, errors)?;
    let protocol = match kind {
        "normal" => {
            s.not_applicable(&["p", "q"], "protocol normal", errors);
            ProtocolSpec::Normal
        }
        "gossip" => {
            s.not_applicable(&["p", "q"], "protocol gossip", errors);
            ProtocolSpec::Gossip
        }
        "bernoulli" => {
            let p = s.float("p", errors);
            let p = s.required("p", p, errors);
            let q = s.float("q", errors);
            let q = s.required("q", q, errors);
            match (p, q) {
                (Some(p), Some(q)) => ProtocolSpec::Bernoulli { p, q },
                _ => {
                    s.finish(errors);
                    return None;
                }
            }
        }
        other => {
            errors.push(FieldError::new(
                "protocol.kind",
                format!("unknown protocol {other:?}; expected normal, bernoulli or gossip"),
            ));
            return None;
        }
    };
    s.finish(errors);
    if let Err(e) = protocol.validate() {
        input_error("protocol", e, errors);
    }
    Some(protocol)
}

fn parse_schedule(root: &Table, errors: &mut Vec<FieldError>) -> ScheduleConfig {
    let mut out = ScheduleConfig::default();
    let Some(table) = subtable(root, "schedule", errors) else {
        return out;
    };
    let mut s = Section::new("schedule", table);
    out.leader_period = s.count("leader_period", errors);
    if out.leader_period == Some(0) {
        errors.push(FieldError::new("schedule.leader_period", "must be at least 1"));
    }
    if let Some(v) = s.raw("follower") {
        out.follower = power_step(v, "schedule.follower", errors).unwrap_or(out.follower);
    }
    if let Some(v) = s.raw("leader") {
        out.leader = power_step(v, "schedule.leader", errors).unwrap_or(out.leader);
    }
    if let Some(v) = s.raw("followers") {
        match v {
            Value::Array(items) => {
                let steps: Vec<Option<PowerStep>> = items
                    .iter()
                    .enumerate()
                    .map(|(i, v)| power_step(v, &format!("schedule.followers[{i}]"), errors))
                    .collect();
                out.followers = steps.into_iter().collect();
            }
            _ => errors.push(FieldError::new("schedule.followers", "expected an array of tables")),
        }
    }
    s.finish(errors);
    out
}

fn parse_run(root: &Table, errors: &mut Vec<FieldError>) -> Option<RunConfig> {
    let Some(table) = subtable(root, "run", errors) else {
        if !root.contains_key("run") {
            errors.push(FieldError::new("run.seed", "missing required field"));
        }
        return None;
    };
    let mut s = Section::new("run", table);
    let seed = s.seed("seed", errors);
    let seed = s.required("seed", seed, errors);
    let mut run = RunConfig::with_seed(seed.unwrap_or(0));
    macro_rules! field {
        ($name:ident, $reader:ident) => {
            if let Some(v) = s.$reader(stringify!($name), errors) {
                run.$name = v;
            }
        };
    }
    field!(horizon, count);
    field!(runs, count);
    field!(stride, count);
    field!(threshold, float);
    field!(relative_threshold, boolean);
    field!(reference_tol, float);
    field!(reference_max_iter, count);
    field!(constant_samples, count);
    field!(bound_grid, count);
    field!(safety_factor, float);
    run.reference_step = s.float("reference_step", errors);
    if let Some(name) = s.string("initial", errors) {
        match InitialPoint::parse(name) {
            Some(p) => run.initial = p,
            None => errors.push(FieldError::new(
                "run.initial",
                format!("unknown initial point {name:?}; expected lower, upper or center"),
            )),
        }
    }
    s.finish(errors);

    let checks: [(&str, bool, &str); 9] = [
        ("run.horizon", run.horizon >= 1, "must be at least 1"),
        ("run.runs", run.runs >= 1, "must be at least 1"),
        ("run.stride", run.stride >= 1, "must be at least 1"),
        ("run.threshold", run.threshold > 0.0, "must be positive"),
        ("run.reference_tol", run.reference_tol > 0.0, "must be positive"),
        (
            "run.reference_max_iter",
            run.reference_max_iter >= 1,
            "must be at least 1",
        ),
        (
            "run.constant_samples",
            run.constant_samples >= 100,
            "must be at least 100",
        ),
        ("run.bound_grid", run.bound_grid >= 2, "must be at least 2"),
        ("run.safety_factor", run.safety_factor >= 1.0, "must be at least 1"),
    ];
    for (path, ok, message) in checks {
        if !ok {
            errors.push(FieldError::new(path, message));
        }
    }
    if let Some(step) = run.reference_step {
        if !(step > 0.0 && step.is_finite()) {
            errors.push(FieldError::new("run.reference_step", "must be positive"));
        }
    }
    seed.map(|_| run)
}

fn parse_output(root: &Table, errors: &mut Vec<FieldError>) -> OutputConfig {
    let mut out = OutputConfig::default();
    let Some(table) = subtable(root, "output", errors) else {
        return out;
    };
    let mut s = Section::new("output", table);
    out.trace = s.string("trace", errors).map(PathBuf::from);
    out.summary = s.string("summary", errors).map(PathBuf::from);
    out.mse = s.string("mse", errors).map(PathBuf::from);
    s.finish(errors);
    out
}

/// Parses and validates a scenario document, collecting every field error.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(vec![FieldError::new("", e.message().to_string())]))?;
    let mut errors = Vec::new();
    for key in root.keys() {
        if !["game", "protocol", "schedule", "run", "output"].contains(&key.as_str()) {
            errors.push(FieldError::new(key.clone(), "unknown section"));
        }
    }
    let game = parse_game(&root, &mut errors);
    let protocol = parse_protocol(&root, &mut errors);
    let schedule = parse_schedule(&root, &mut errors);
    let run = parse_run(&root, &mut errors);
    let output = parse_output(&root, &mut errors);
    match (game, protocol, run) {
        (Some(game), Some(protocol), Some(run)) if errors.is_empty() => Ok(ScenarioConfig {
            game,
            protocol,
            schedule,
            run,
            output,
        }),
        _ => Err(Error::Config(errors)),
    }
}

fn step_table(s: &PowerStep) -> Value {
    let mut t = Table::new();
    t.insert("scale".into(), Value::Float(s.scale));
    t.insert("offset".into(), Value::Float(s.offset));
    t.insert("exponent".into(), Value::Float(s.exponent));
    Value::Table(t)
}

fn count(v: usize) -> Value {
    Value::Integer(v as i64)
}

/// Renders a config as a scenario document with every field explicit.
pub fn render_scenario(config: &ScenarioConfig) -> String {
    let mut root = Table::new();

    let mut game = Table::new();
    game.insert("kind".into(), Value::String(config.game.kind().into()));
    match &config.game {
        GameChoice::QuadraticTest => {}
        GameChoice::SmallCell(p) => {
            if let Ok(Value::Table(t)) = Value::try_from(p) {
                game.extend(t);
            }
        }
        GameChoice::Custom { path } => {
            game.insert("path".into(), Value::String(path.display().to_string()));
        }
    }
    root.insert("game".into(), Value::Table(game));

    let mut protocol = Table::new();
    protocol.insert("kind".into(), Value::String(config.protocol.name().into()));
    if let ProtocolSpec::Bernoulli { p, q } = config.protocol {
        protocol.insert("p".into(), Value::Float(p));
        protocol.insert("q".into(), Value::Float(q));
    }
    root.insert("protocol".into(), Value::Table(protocol));

    let mut schedule = Table::new();
    if let Some(t) = config.schedule.leader_period {
        schedule.insert("leader_period".into(), count(t));
    }
    schedule.insert("follower".into(), step_table(&config.schedule.follower));
    schedule.insert("leader".into(), step_table(&config.schedule.leader));
    if let Some(list) = &config.schedule.followers {
        schedule.insert("followers".into(), Value::Array(list.iter().map(step_table).collect()));
    }
    root.insert("schedule".into(), Value::Table(schedule));

    let r = &config.run;
    let mut run = Table::new();
    let seed = i64::try_from(r.seed).map_or_else(|_| Value::String(r.seed.to_string()), Value::Integer);
    run.insert("seed".into(), seed);
    run.insert("horizon".into(), count(r.horizon));
    run.insert("runs".into(), count(r.runs));
    run.insert("stride".into(), count(r.stride));
    run.insert("initial".into(), Value::String(r.initial.name().into()));
    run.insert("threshold".into(), Value::Float(r.threshold));
    run.insert("relative_threshold".into(), Value::Boolean(r.relative_threshold));
    if let Some(step) = r.reference_step {
        run.insert("reference_step".into(), Value::Float(step));
    }
    run.insert("reference_tol".into(), Value::Float(r.reference_tol));
    run.insert("reference_max_iter".into(), count(r.reference_max_iter));
    run.insert("constant_samples".into(), count(r.constant_samples));
    run.insert("bound_grid".into(), count(r.bound_grid));
    run.insert("safety_factor".into(), Value::Float(r.safety_factor));
    root.insert("run".into(), Value::Table(run));

    let mut output = Table::new();
    let paths = [
        ("trace", &config.output.trace),
        ("summary", &config.output.summary),
        ("mse", &config.output.mse),
    ];
    for (key, path) in paths {
        if let Some(p) = path {
            output.insert(key.into(), Value::String(p.display().to_string()));
        }
    }
    root.insert("output".into(), Value::Table(output));

    toml::to_string(&root).expect("tables of plain values always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn errors_of(text: &str) -> Vec<FieldError> {
        match parse_scenario(text) {
            Err(Error::Config(e)) => e,
            other => panic!("expected config errors, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_scenario("[game]\nkind = \"quadratic-test\"\n[run]\nseed = 7\n").unwrap();
        assert_eq!(c, ScenarioConfig::quadratic(7));
        assert_eq!(c.leader_period(), 1);
    }

    #[test]
    fn gossip_rejects_bernoulli_fields() {
        let e =
            errors_of("[game]\nkind = \"quadratic-test\"\n[protocol]\nkind = \"gossip\"\np = 0.7\n[run]\nseed = 1\n");
        assert_eq!(
            e,
            vec![FieldError::new("protocol.p", "field not applicable to protocol gossip")]
        );
    }

    #[test]
    fn unknown_and_missing_fields_are_all_listed() {
        let e = errors_of(
            "[game]\nkind = \"quadratic-test\"\ncolour = 1\n[protocol]\nkind = \"bernoulli\"\np = 0.5\n[run]\nhorizon = 0\n[extra]\n",
        );
        let paths: Vec<&str> = e.iter().map(|f| f.path.as_str()).collect();
        assert!(paths.contains(&"extra"));
        assert!(paths.contains(&"game.colour"));
        assert!(paths.contains(&"protocol.q"));
        assert!(paths.contains(&"run.seed"));
        assert!(paths.contains(&"run.horizon"));
    }

    #[test]
    fn seed_is_mandatory() {
        let e = errors_of("[game]\nkind = \"quadratic-test\"\n");
        assert_eq!(e, vec![FieldError::new("run.seed", "missing required field")]);
    }

    #[test]
    fn small_cell_defaults_with_stochastic_protocol() {
        let text = "[game]\nkind = \"small-cell\"\nn_cells = 10\nregion_radius = 4.0\nneighbor_radius = 1.0\n\
                    bandwidth = 2048.0\npower_cap = 6.0\npath_loss = 1.0\nprice_cap = 7.0\nleader_penalty = 100.0\n\
                    leader_period = 10\n[protocol]\nkind = \"bernoulli\"\np = 0.7\nq = 0.7\n[run]\nseed = 3\n";
        let c = parse_scenario(text).unwrap();
        assert_eq!(c.game, GameChoice::SmallCell(SmallCellParams::default()));
        assert_eq!(c.leader_period(), 10);
        let e = errors_of("[game]\nkind = \"small-cell\"\nn_cels = 10\n[run]\nseed = 3\n");
        assert_eq!(e, vec![FieldError::new("game.n_cels", "unknown field")]);
    }

    #[test]
    fn value_checks_carry_paths() {
        let e = errors_of(
            "[game]\nkind = \"quadratic-test\"\n[protocol]\nkind = \"bernoulli\"\np = 1.5\nq = 0.5\n\
             [schedule.follower]\nexponent = 0.4\n[run]\nseed = 1\ninitial = \"side\"\n",
        );
        let paths: Vec<&str> = e.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(paths, vec!["protocol", "schedule.follower", "run.initial"]);
    }

    #[test]
    fn render_round_trips() {
        let mut c = ScenarioConfig::quadratic(u64::MAX);
        c.protocol = ProtocolSpec::Bernoulli { p: 0.7, q: 0.3 };
        c.schedule.leader_period = Some(2);
        c.schedule.followers = Some(vec![PowerStep::default(), PowerStep::new(2.0, 3.0, 0.75).unwrap()]);
        c.run.reference_step = Some(0.01);
        c.run.initial = InitialPoint::Center;
        c.output.trace = Some("out/trace.csv".into());
        assert_eq!(parse_scenario(&render_scenario(&c)).unwrap(), c);

        let mut sc = ScenarioConfig::quadratic(5);
        sc.game = GameChoice::SmallCell(SmallCellParams {
            noise_density: 0.25,
            ..SmallCellParams::default()
        });
        sc.protocol = ProtocolSpec::Gossip;
        assert_eq!(parse_scenario(&render_scenario(&sc)).unwrap(), sc);

        let mut custom = ScenarioConfig::quadratic(5);
        custom.game = GameChoice::Custom {
            path: "games/mine.toml".into(),
        };
        assert_eq!(parse_scenario(&render_scenario(&custom)).unwrap(), custom);
    }

    #[test]
    fn malformed_documents_are_config_errors() {
        assert!(matches!(parse_scenario("[game\n"), Err(Error::Config(_))));
    }
}
