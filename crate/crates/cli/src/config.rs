//! Flat `key=value` experiment configs.
//!
//! Values are layered: built-in defaults, then the config file, then
//! `STALKER_<KEY>` environment variables, then command-line flags. Every
//! problem found is reported at once.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use stalker_core::opinion_game::{DriftRule, GameConfig, PriceFormula, SelectionMethod};
use stalker_core::phi_chain::{GeneratorMethod, HittingSpec, LevelSets, PhiState};
use stalker_core::stalker::{max_convergence_epsilon, DriftParams};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Stalker,
    Convergence,
    Hitting,
    Generator,
    OpinionGame,
    Stats,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Stalker,
        Experiment::Convergence,
        Experiment::Hitting,
        Experiment::Generator,
        Experiment::OpinionGame,
        Experiment::Stats,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Stalker => "stalker",
            Experiment::Convergence => "convergence",
            Experiment::Hitting => "hitting",
            Experiment::Generator => "generator",
            Experiment::OpinionGame => "opinion_game",
            Experiment::Stats => "stats",
        }
    }

    /// Accepted keys and their defaults, not counting `experiment`.
    pub fn keys(self) -> Vec<(&'static str, &'static str)> {
        let mut keys = COMMON_KEYS.to_vec();
        keys.extend_from_slice(match self {
            Experiment::Stalker => STALKER_KEYS,
            Experiment::Convergence => CONVERGENCE_KEYS,
            Experiment::Hitting => HITTING_KEYS,
            Experiment::Generator => GENERATOR_KEYS,
            Experiment::OpinionGame => &[("horizon", "1000000"), ("snapshot_steps", "")],
            Experiment::Stats => STATS_KEYS,
        });
        if matches!(self, Experiment::OpinionGame | Experiment::Stats) {
            keys.extend_from_slice(GAME_KEYS);
        }
        keys
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
                format!("unknown experiment `{s}` (expected one of: {})", names.join(", "))
            })
    }
}

const COMMON_KEYS: &[(&str, &str)] = &[("seed", "0"), ("threads", "1"), ("output_dir", "out")];

const STALKER_KEYS: &[(&str, &str)] = &[
    ("gamma", "1"),
    ("eps", "0.1"),
    ("horizon", "10"),
    ("origin", "0"),
    ("x0", "0"),
    ("y0", "0"),
];

const CONVERGENCE_KEYS: &[(&str, &str)] = &[
    ("gamma", "1"),
    ("eps", "0.02"),
    ("eps_prime", "0.01"),
    ("t_star", "1"),
    ("dt", "auto"),
    ("paths", "100"),
];

const HITTING_KEYS: &[(&str, &str)] = &[
    ("gamma", "0.5"),
    ("k", "1"),
    ("eps", "0.05"),
    ("replicas", "2000"),
    ("start_x", "auto"),
    ("start_y", "auto"),
    ("step_budget", "10000000"),
];

const GENERATOR_KEYS: &[(&str, &str)] = &[
    ("gamma", "2"),
    ("eps", "0.01"),
    ("x", "3"),
    ("y", "3"),
    ("method", "quadrature"),
    ("samples", "100000"),
];

const STATS_KEYS: &[(&str, &str)] = &[
    ("source", "opinion_game"),
    ("horizon", "1000000"),
    ("window", "100"),
    ("max_lag", "100"),
    ("eps", "0.05"),
    ("r", "1"),
    ("steps", "100000"),
    ("replicas", "50"),
    ("start_x", "1"),
    ("start_y", "1"),
];

const GAME_KEYS: &[(&str, &str)] = &[
    ("n_traders", "2000"),
    ("n_shares", "1000"),
    ("gamma", "1.5"),
    ("l", "4"),
    ("drift_magnitude", "0.1"),
    ("ext_mean", "0.12"),
    ("ext_rate_steps", "2000"),
    ("jump_away_min", "5"),
    ("jump_away_max", "20"),
    ("record_every", "100"),
    ("init_width", "400"),
    ("init_center", "0"),
    ("price_formula", "mid"),
    ("drift_rule", "sign"),
    ("selection", "banded"),
];

#[derive(Debug, Error)]
#[error("invalid config:\n  {}", .0.join("\n  "))]
pub struct ConfigError(pub Vec<String>);

/// Entries of a config file in order of appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub entries: Vec<(String, String)>,
}

pub fn parse_text(text: &str) -> Result<RawConfig, ConfigError> {
    let mut entries: Vec<(String, String)> = Vec::new();
    let mut errors = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(format!("line {}: expected key=value, got `{line}`", n + 1));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            errors.push(format!("line {}: empty key", n + 1));
        } else if entries.iter().any(|(k, _)| k == key) {
            errors.push(format!("line {}: duplicate key `{key}`", n + 1));
        } else {
            entries.push((key.to_string(), value.to_string()));
        }
    }
    if errors.is_empty() {
        Ok(RawConfig { entries })
    } else {
        Err(ConfigError(errors))
    }
}

/// Values given on the command line; they win over file and environment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StalkerPlan {
    pub gamma: f64,
    pub eps: f64,
    pub horizon: f64,
    pub origin: f64,
    pub x0: f64,
    pub y0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergencePlan {
    pub gamma: f64,
    pub eps: f64,
    pub eps_prime: f64,
    pub t_star: f64,
    pub dt: f64,
    pub paths: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorPlan {
    pub gamma: f64,
    pub eps: f64,
    pub state: PhiState,
    pub method: GeneratorMethod,
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GamePlan {
    pub game: GameConfig,
    pub horizon: u64,
    pub snapshot_steps: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatsSource {
    OpinionGame,
    PhiChain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrencePlan {
    pub gamma: f64,
    pub eps: f64,
    pub r: f64,
    pub steps: usize,
    pub replicas: u64,
    pub start: PhiState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsPlan {
    pub source: StatsSource,
    pub game: GameConfig,
    pub horizon: u64,
    pub window: usize,
    pub max_lag: usize,
    pub recurrence: RecurrencePlan,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    Stalker(StalkerPlan),
    Convergence(ConvergencePlan),
    Hitting(HittingSpec),
    Generator(GeneratorPlan),
    OpinionGame(GamePlan),
    Stats(StatsPlan),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub threads: usize,
    pub output_dir: PathBuf,
    pub plan: Plan,
    /// Every key with the value the run uses, derived defaults included.
    pub resolved: BTreeMap<String, String>,
}

impl ExperimentConfig {
    /// `key=value` lines, `experiment` first, that reproduce this run.
    pub fn manifest(&self) -> String {
        let mut out = format!("experiment={}\n", self.experiment);
        for (k, v) in &self.resolved {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }
}

/// Parses and validates a config file with no environment or flag
/// overrides.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    load(text, |_| None, &Overrides::default())
}

/// Reads `STALKER_<KEY>` from the process environment.
pub fn process_env(key: &str) -> Option<String> {
    std::env::var(format!("STALKER_{}", key.to_ascii_uppercase())).ok()
}

pub fn load(
    text: &str,
    env: impl Fn(&str) -> Option<String>,
    overrides: &Overrides,
) -> Result<ExperimentConfig, ConfigError> {
    let raw = parse_text(text)?;
    let file: BTreeMap<&str, &str> = raw.entries.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
    let experiment_text = env("experiment").or_else(|| file.get("experiment").map(|s| s.to_string()));
    let Some(experiment_text) = experiment_text else {
        let mut errors = vec!["missing experiment (set experiment=<name>)".to_string()];
        errors.extend(file.keys().map(|k| format!("`{k}` cannot be checked without an experiment")));
        return Err(ConfigError(errors));
    };
    let experiment: Experiment = experiment_text
        .parse()
        .map_err(|e: String| ConfigError(vec![format!("experiment: {e}")]))?;

    let schema = experiment.keys();
    let mut errors = Vec::new();
    for key in file.keys() {
        if *key != "experiment" && !schema.iter().any(|(k, _)| k == key) {
            errors.push(format!("unknown key `{key}` for experiment {experiment}"));
        }
    }

    let mut values = BTreeMap::new();
    for (key, default) in &schema {
        let value = env(key)
            .or_else(|| file.get(key).map(|s| s.to_string()))
            .unwrap_or_else(|| default.to_string());
        values.insert(key.to_string(), value);
    }
    if let Some(seed) = overrides.seed {
        values.insert("seed".into(), seed.to_string());
    }
    if let Some(threads) = overrides.threads {
        values.insert("threads".into(), threads.to_string());
    }
    if let Some(dir) = &overrides.output_dir {
        values.insert("output_dir".into(), dir.display().to_string());
    }

    let mut reader = Reader { values, errors };
    let seed = reader.parse::<u64>("seed", "a non-negative integer");
    let threads = reader.count("threads", 1) as usize;
    let output_dir = PathBuf::from(reader.text("output_dir"));
    if reader.text("output_dir").is_empty() {
        reader.fail("output_dir", "must not be empty");
    }
    let plan = match experiment {
        Experiment::Stalker => Plan::Stalker(read_stalker(&mut reader)),
        Experiment::Convergence => Plan::Convergence(read_convergence(&mut reader)),
        Experiment::Hitting => Plan::Hitting(read_hitting(&mut reader, seed)),
        Experiment::Generator => Plan::Generator(read_generator(&mut reader)),
        Experiment::OpinionGame => Plan::OpinionGame(read_game_plan(&mut reader)),
        Experiment::Stats => Plan::Stats(read_stats(&mut reader)),
    };
    if !reader.errors.is_empty() {
        return Err(ConfigError(reader.errors));
    }
    Ok(ExperimentConfig {
        experiment,
        seed,
        threads,
        output_dir,
        plan,
        resolved: reader.values,
    })
}

/// Typed access to resolved values. A bad value records an error and
/// yields a placeholder so that checking can go on.
struct Reader {
    values: BTreeMap<String, String>,
    errors: Vec<String>,
}

impl Reader {
    fn text(&self, key: &str) -> String {
        self.values[key].clone()
    }

    fn fail(&mut self, key: &str, reason: impl fmt::Display) {
        self.errors.push(format!("{key}: {reason} (got `{}`)", self.values[key]));
    }

    fn parse<T: FromStr + Default>(&mut self, key: &str, what: &str) -> T {
        match self.values[key].parse() {
            Ok(v) => v,
            Err(_) => {
                self.fail(key, format!("expected {what}"));
                T::default()
            }
        }
    }

    fn real(&mut self, key: &str) -> f64 {
        let v: f64 = self.parse(key, "a number");
        if !v.is_finite() {
            self.fail(key, "must be finite");
        }
        v
    }

    fn positive(&mut self, key: &str) -> f64 {
        let v = self.real(key);
        if v <= 0.0 && self.values[key].parse::<f64>().is_ok() {
            self.fail(key, "must be positive");
            return 1.0;
        }
        v
    }

    fn non_negative(&mut self, key: &str) -> f64 {
        let v = self.real(key);
        if v < 0.0 {
            self.fail(key, "must be non-negative");
            return 0.0;
        }
        v
    }

    fn count(&mut self, key: &str, min: u64) -> u64 {
        let v: u64 = self.parse(key, "a non-negative integer");
        if v < min && self.values[key].parse::<u64>().is_ok() {
            self.fail(key, format!("must be at least {min}"));
            return min;
        }
        v
    }

    fn integer(&mut self, key: &str) -> i64 {
        self.parse(key, "an integer")
    }

    fn keyword<T: FromStr<Err = String>>(&mut self, key: &str) -> Option<T> {
        match self.values[key].parse() {
            Ok(v) => Some(v),
            Err(e) => {
                self.fail(key, e);
                None
            }
        }
    }

    /// A real that may be `auto`, in which case `fallback` is used and
    /// recorded as the resolved value.
    fn real_or(&mut self, key: &str, fallback: impl FnOnce() -> f64) -> f64 {
        if self.values[key] == "auto" {
            let v = fallback();
            self.values.insert(key.to_string(), v.to_string());
            v
        } else {
            self.real(key)
        }
    }

    fn u64_list(&mut self, key: &str) -> Vec<u64> {
        let text = self.text(key);
        let mut out = Vec::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.parse() {
                Ok(v) => out.push(v),
                Err(_) => self.fail(key, "expected a comma-separated list of update counts"),
            }
        }
        out
    }
}

fn read_stalker(r: &mut Reader) -> StalkerPlan {
    let plan = StalkerPlan {
        gamma: r.positive("gamma"),
        eps: r.positive("eps"),
        horizon: r.positive("horizon"),
        origin: r.real("origin"),
        x0: r.real("x0"),
        y0: r.real("y0"),
    };
    if plan.x0 > plan.origin {
        r.fail("x0", format!("must not lie above origin = {}", plan.origin));
    }
    if plan.y0 < plan.origin {
        r.fail("y0", format!("must not lie below origin = {}", plan.origin));
    }
    plan
}

fn read_convergence(r: &mut Reader) -> ConvergencePlan {
    let gamma = r.positive("gamma");
    let eps = r.positive("eps");
    let eps_prime = r.positive("eps_prime");
    let t_star = r.positive("t_star");
    let dt = r.real_or("dt", || eps_prime * eps_prime / 100.0);
    let paths = r.count("paths", 1);
    if dt <= 0.0 {
        r.fail("dt", "must be positive");
    }
    if eps_prime >= eps {
        r.fail("eps_prime", format!("must be smaller than eps = {eps}"));
    }
    let limit = max_convergence_epsilon(gamma, t_star);
    if eps > limit {
        r.fail("eps", format!("must not exceed 0.1·exp(-gamma·t_star) = {limit}"));
    }
    ConvergencePlan {
        gamma,
        eps,
        eps_prime,
        t_star,
        dt,
        paths,
    }
}

fn read_hitting(r: &mut Reader, seed: u64) -> HittingSpec {
    let gamma = r.positive("gamma");
    let k: i32 = r.parse("k", "an integer");
    let eps = r.positive("eps");
    let replicas = r.count("replicas", 1);
    let mid = LevelSets::new(k).map(|l| l.mid()).unwrap_or(1.0);
    let x = r.real_or("start_x", || mid / 2.0);
    let y = r.real_or("start_y", || mid / 2.0);
    let step_budget = r.count("step_budget", 1);
    let start = PhiState { x, y };
    if let Ok(levels) = LevelSets::new(k) {
        if x < 0.0 || y < 0.0 || !levels.on_mid(&start) {
            r.fail("start_x", format!("start must be non-negative with start_x + start_y = 4^k = {mid}"));
        }
    } else {
        r.fail("k", "out of range");
    }
    HittingSpec {
        k,
        start,
        eps,
        gamma,
        replicas,
        step_budget,
        seed,
    }
}

fn read_generator(r: &mut Reader) -> GeneratorPlan {
    let gamma = r.positive("gamma");
    let eps = r.positive("eps");
    let x = r.non_negative("x");
    let y = r.non_negative("y");
    let method = match r.text("method").as_str() {
        "quadrature" => GeneratorMethod::Quadrature,
        "monte_carlo" => GeneratorMethod::MonteCarlo,
        _ => {
            r.fail("method", "expected one of: quadrature, monte_carlo");
            GeneratorMethod::Quadrature
        }
    };
    let samples = r.count("samples", 2);
    GeneratorPlan {
        gamma,
        eps,
        state: PhiState { x, y },
        method,
        samples,
    }
}

fn read_game(r: &mut Reader) -> GameConfig {
    let gamma = r.non_negative("gamma");
    let defaults = GameConfig::default();
    let game = GameConfig {
        n_traders: r.count("n_traders", 2) as usize,
        n_shares: r.count("n_shares", 0) as usize,
        gamma,
        l: r.count("l", 1).min(u32::MAX as u64) as u32,
        drift_magnitude: r.positive("drift_magnitude"),
        ext_mean: r.positive("ext_mean"),
        ext_rate_steps: r.count("ext_rate_steps", 1),
        jump_away_min: r.integer("jump_away_min"),
        jump_away_max: r.integer("jump_away_max"),
        record_every: r.count("record_every", 1),
        init_width: r.integer("init_width"),
        init_center: r.integer("init_center"),
        price_formula: r.keyword::<PriceFormula>("price_formula").unwrap_or(defaults.price_formula),
        drift_rule: r.keyword::<DriftRule>("drift_rule").unwrap_or(defaults.drift_rule),
        selection: r.keyword::<SelectionMethod>("selection").unwrap_or(defaults.selection),
    };
    if r.errors.is_empty() {
        if let Err(e) = game.validate() {
            r.errors.push(e.to_string());
        }
    }
    game
}

fn read_game_plan(r: &mut Reader) -> GamePlan {
    let game = read_game(r);
    let horizon = r.count("horizon", game.record_every.max(1));
    let snapshot_steps = r.u64_list("snapshot_steps");
    GamePlan {
        game,
        horizon,
        snapshot_steps,
    }
}

fn read_stats(r: &mut Reader) -> StatsPlan {
    let source = match r.text("source").as_str() {
        "opinion_game" => StatsSource::OpinionGame,
        "phi_chain" => StatsSource::PhiChain,
        _ => {
            r.fail("source", "expected one of: opinion_game, phi_chain");
            StatsSource::OpinionGame
        }
    };
    let game = read_game(r);
    let horizon = r.count("horizon", game.record_every.max(1));
    let window = r.count("window", 1) as usize;
    let max_lag = r.count("max_lag", 1) as usize;
    if source == StatsSource::OpinionGame {
        let returns = (horizon / game.record_every.max(1)).saturating_sub(1) as usize;
        if returns < 2 * window {
            r.fail("window", format!("needs horizon/record_every - 1 >= 2·window, have {returns} returns"));
        }
    }
    let recurrence = RecurrencePlan {
        gamma: game.gamma,
        eps: r.positive("eps"),
        r: r.positive("r"),
        steps: r.count("steps", 2) as usize,
        replicas: r.count("replicas", 1),
        start: PhiState {
            x: r.non_negative("start_x"),
            y: r.non_negative("start_y"),
        },
    };
    if source == StatsSource::PhiChain && DriftParams::new(recurrence.gamma).is_err() {
        r.fail("gamma", "must be positive for source=phi_chain");
    }
    StatsPlan {
        source,
        game,
        horizon,
        window,
        max_lag,
        recurrence,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hitting_config_parses() {
        let cfg = parse_config("experiment=hitting\nseed=7\ngamma=0.5\nk=1\neps=0.05\nreplicas=2000").unwrap();
        assert_eq!(cfg.experiment, Experiment::Hitting);
        assert_eq!(cfg.seed, 7);
        let Plan::Hitting(spec) = &cfg.plan else { panic!() };
        assert_eq!((spec.k, spec.gamma, spec.eps, spec.replicas), (1, 0.5, 0.05, 2000));
        assert_eq!((spec.start.x, spec.start.y), (2.0, 2.0));
        assert_eq!(spec.step_budget, HittingSpec::DEFAULT_STEP_BUDGET);
        assert_eq!(spec.seed, 7);
    }

    #[test]
    fn negative_gamma_is_named() {
        let err = parse_config("experiment=hitting\ngamma=-1").unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert!(err.0[0].starts_with("gamma: must be positive"), "{err}");
    }

    #[test]
    fn missing_experiment() {
        let err = parse_config("").unwrap_err();
        assert!(err.0[0].contains("missing experiment"));
        let err = parse_config("gamma=-1").unwrap_err();
        assert!(err.0[0].contains("missing experiment"));
        assert!(err.0.iter().any(|e| e.contains("gamma")));
    }

    #[test]
    fn every_bad_key_reported() {
        let err = parse_config("experiment=generator\ngamma=x\neps=0\nmethod=guess\nbogus=1\nx=-2").unwrap_err();
        let text = err.to_string();
        for key in ["gamma", "eps", "method", "bogus", "x:"] {
            assert!(text.contains(key), "{key} missing from {text}");
        }
        assert_eq!(err.0.len(), 5);
    }

    #[test]
    fn syntax_errors() {
        assert!(parse_text("a=1\nno equals sign").is_err());
        assert!(parse_text("a=1\na=2").is_err());
        assert!(parse_text("=1").is_err());
        let raw = parse_text("# comment\n\n a = 1 # trailing\n").unwrap();
        assert_eq!(raw.entries, vec![("a".to_string(), "1".to_string())]);
    }

    #[test]
    fn unknown_experiment() {
        let err = parse_config("experiment=nope").unwrap_err();
        assert!(err.to_string().contains("unknown experiment"));
    }

    #[test]
    fn precedence_file_env_flags() {
        let text = "experiment=generator\nseed=1\ngamma=0.5\neps=0.02";
        let env = |k: &str| match k {
            "seed" => Some("2".to_string()),
            "gamma" => Some("0.7".to_string()),
            _ => None,
        };
        let cfg = load(text, env, &Overrides::default()).unwrap();
        assert_eq!(cfg.seed, 2);
        let Plan::Generator(plan) = &cfg.plan else { panic!() };
        assert_eq!((plan.gamma, plan.eps), (0.7, 0.02));
        let flags = Overrides {
            seed: Some(3),
            threads: Some(4),
            output_dir: Some("elsewhere".into()),
        };
        let cfg = load(text, env, &flags).unwrap();
        assert_eq!((cfg.seed, cfg.threads), (3, 4));
        assert_eq!(cfg.output_dir, PathBuf::from("elsewhere"));
    }

    #[test]
    fn manifest_lists_every_default() {
        for e in Experiment::ALL {
            let cfg = parse_config(&format!("experiment={e}")).unwrap();
            let manifest = cfg.manifest();
            for (key, _) in e.keys() {
                assert!(manifest.lines().any(|l| l.starts_with(&format!("{key}="))), "{e}: {key}");
            }
            assert!(!manifest.contains("=auto"), "{manifest}");
            assert_eq!(parse_config(&manifest).unwrap(), cfg);
        }
    }

    #[test]
    fn derived_defaults_resolved() {
        let cfg = parse_config("experiment=convergence\neps_prime=0.005").unwrap();
        assert_eq!(cfg.resolved["dt"], (0.005f64 * 0.005 / 100.0).to_string());
        let cfg = parse_config("experiment=hitting\nk=3").unwrap();
        assert_eq!(cfg.resolved["start_x"], "32");
    }

    #[test]
    fn cross_field_checks() {
        assert!(parse_config("experiment=convergence\neps=0.01\neps_prime=0.02").is_err());
        assert!(parse_config("experiment=convergence\neps=0.05").is_err());
        assert!(parse_config("experiment=hitting\nk=1\nstart_x=1\nstart_y=1").is_err());
        assert!(parse_config("experiment=opinion_game\nn_traders=10\nn_shares=10").is_err());
        assert!(parse_config("experiment=stalker\nx0=1").is_err());
        assert!(parse_config("experiment=opinion_game\nhorizon=50").is_err());
        assert!(parse_config("experiment=opinion_game\nsnapshot_steps=10,x").is_err());
        assert!(parse_config("experiment=stats\nhorizon=10000").is_err());
        assert!(parse_config("experiment=opinion_game\nprice_formula=half_spread\nselection=flat").is_ok());
    }
}
