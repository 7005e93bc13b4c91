//! Batch front end: JSON experiment configs in, JSON/CSV results out.
//!
//! Config keys (strict, snake_case; unknown keys are rejected):
//!
//! | key         | required            | meaning                                         |
//! |-------------|---------------------|-------------------------------------------------|
//! | `model`     | yes                 | `"uniform"`, `"linear"` or `"custom"`           |
//! | `weights`   | for `custom`        | path to a weight document `{"0": 0, "1": …}`    |
//! | `a`         | yes                 | initial intensities; `N` is their sum           |
//! | `trials`    | for `run`           | ensemble size                                   |
//! | `seed`      | for `run`           | master seed (overridden by `BORNCHAIN_SEED`)    |
//! | `mode`      | no                  | `"absorb"` (default) or `"partial"`             |
//! | `k`         | for `partial`       | steps per partial trial                         |
//! | `max_steps` | no                  | step guard for absorption runs                  |
//! | `out`       | no                  | output directory (overridden by `--out`)        |

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::analytic::{self, AnalyticError, StepPrediction};
use crate::compositions::EnumerationError;
use crate::engine::{self, EngineError, Ensemble, EnsembleMode, TrialRecord};
use crate::model::{self, ModelError, ModelKind, ModelReport, TransitionModel};
use crate::oracle::{self, FormulaCheck, OracleError, SolverKind, SolverUsed};
use crate::rng::PRNG_ID;
use crate::state::{IntensityState, StateError};
use crate::stats::{self, EnsembleSummary, GoodnessOfFit};

/// Environment variable that overrides the config seed.
pub const SEED_ENV: &str = "BORNCHAIN_SEED";

/// Significance threshold for `--check` goodness-of-fit tests.
pub const CHECK_P_VALUE: f64 = 0.001;
/// Standard-error multiple for `--check` mean comparisons.
pub const CHECK_Z: f64 = 3.0;
/// Confidence level of the Wilson intervals used by `--check`.
pub const CHECK_LEVEL: f64 = 0.999;
/// Largest tolerated fraction of guard-hit trials under `--check`.
pub const CHECK_UNFINISHED: f64 = 1e-3;

pub const BORN_TOLERANCE: f64 = 1e-9;
pub const NONTRIVIAL_TOLERANCE: f64 = 1e-8;
pub const SECOND_DIFFERENCE_TOLERANCE: f64 = 1e-9;

const KNOWN_KEYS: [&str; 9] = ["model", "weights", "a", "trials", "seed", "mode", "k", "max_steps", "out"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config is not valid JSON: {0}")]
    Json(String),
    #[error("config must be a JSON object")]
    NotAnObject,
    #[error("unknown config keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("missing required config keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),
    #[error("invalid value for {key:?}: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("intensity a[{index}] = {value} is negative")]
    NegativeIntensity { index: usize, value: i64 },
    #[error("invalid intensity vector: {0}")]
    State(#[from] StateError),
    #[error("{0} is required for this command")]
    RequiredFor(&'static str),
    #[error("{var} is not a valid 64-bit seed: {value:?}")]
    SeedOverride { var: &'static str, value: String },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("weights file {path}: {source}")]
    Weights { path: PathBuf, source: ModelError },
    #[error("invalid model: {0}")]
    Model(ModelError),
    #[error("state space too large: {0}")]
    Guard(EnumerationError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Engine(EngineError),
    #[error(transparent)]
    Oracle(OracleError),
    #[error(transparent)]
    Analytic(AnalyticError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Weights { .. } | CliError::Model(_) => 2,
            CliError::Guard(_) => 3,
            CliError::Oracle(OracleError::Enumeration(_)) => 3,
            CliError::Oracle(OracleError::Model(_)) | CliError::Engine(EngineError::Model(_)) => 2,
            _ => 1,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Enumeration(g) => CliError::Guard(g),
            other => CliError::Model(other),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        CliError::Engine(e)
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Enumeration(g) => CliError::Guard(g),
            other => CliError::Oracle(other),
        }
    }
}

impl From<AnalyticError> for CliError {
    fn from(e: AnalyticError) -> Self {
        CliError::Analytic(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    pub a: Vec<u64>,
    /// Total intensity, derived as `Σ a`.
    pub n: u64,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub mode: EnsembleMode,
    pub max_steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

fn get_u64(obj: &Map<String, Value>, key: &'static str) -> Result<Option<u64>, ConfigError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_u64()
            .map(Some)
            .ok_or_else(|| invalid(key, format!("expected a nonnegative integer, got {v}"))),
    }
}

fn get_str<'a>(obj: &'a Map<String, Value>, key: &'static str) -> Result<Option<&'a str>, ConfigError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(v) => Err(invalid(key, format!("expected a string, got {v}"))),
    }
}

/// Parse and validate an experiment config document.
pub fn parse_config(document: &str) -> Result<ExperimentConfig, ConfigError> {
    let value: Value = serde_json::from_str(document).map_err(|e| ConfigError::Json(e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(ConfigError::NotAnObject);
    };

    let unknown: Vec<String> = obj
        .keys()
        .filter(|k| !KNOWN_KEYS.contains(&k.as_str()))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(ConfigError::UnknownKeys(unknown));
    }

    let model_name = get_str(&obj, "model")?;
    let mode_name = get_str(&obj, "mode")?;
    let mut missing = BTreeSet::new();
    if model_name.is_none() {
        missing.insert("model");
    }
    if !obj.contains_key("a") {
        missing.insert("a");
    }
    if model_name == Some("custom") && !obj.contains_key("weights") {
        missing.insert("weights");
    }
    if mode_name == Some("partial") && !obj.contains_key("k") {
        missing.insert("k");
    }
    if !missing.is_empty() {
        return Err(ConfigError::MissingKeys(missing.into_iter().map(String::from).collect()));
    }

    let model = match model_name.expect("checked") {
        "uniform" => ModelKind::Uniform,
        "linear" => ModelKind::Linear,
        "custom" => ModelKind::Custom,
        other => return Err(invalid("model", format!("unknown model {other:?}"))),
    };

    let Some(Value::Array(items)) = obj.get("a") else {
        return Err(invalid("a", "expected an array of integers"));
    };
    if items.is_empty() {
        return Err(StateError::Empty.into());
    }
    let mut a = Vec::with_capacity(items.len());
    for (index, item) in items.iter().enumerate() {
        if let Some(x) = item.as_u64() {
            a.push(x);
        } else if let Some(value) = item.as_i64() {
            return Err(ConfigError::NegativeIntensity { index, value });
        } else {
            return Err(invalid("a", format!("entry {index} is not an integer: {item}")));
        }
    }
    let n = IntensityState::new(a.clone())?.total();

    let mode = match mode_name {
        None | Some("absorb") => {
            if obj.contains_key("k") {
                return Err(invalid("k", "only meaningful with \"mode\": \"partial\""));
            }
            EnsembleMode::ToAbsorption
        }
        Some("partial") => EnsembleMode::Partial {
            k: get_u64(&obj, "k")?.ok_or_else(|| invalid("k", "must be an integer"))?,
        },
        Some(other) => return Err(invalid("mode", format!("expected \"absorb\" or \"partial\", got {other:?}"))),
    };

    let weights = get_str(&obj, "weights")?.map(PathBuf::from);
    if weights.is_some() && model != ModelKind::Custom {
        return Err(invalid("weights", "only meaningful with \"model\": \"custom\""));
    }
    let trials = get_u64(&obj, "trials")?;
    if trials == Some(0) {
        return Err(invalid("trials", "must be at least 1"));
    }
    let max_steps = get_u64(&obj, "max_steps")?;
    if max_steps == Some(0) {
        return Err(invalid("max_steps", "must be positive"));
    }

    Ok(ExperimentConfig {
        model,
        weights,
        a,
        n,
        trials,
        seed: get_u64(&obj, "seed")?,
        mode,
        max_steps,
        out: get_str(&obj, "out")?.map(PathBuf::from),
    })
}

/// Apply the seed override from [`SEED_ENV`], if set.
pub fn apply_seed_override(config: &mut ExperimentConfig, value: Option<String>) -> Result<(), ConfigError> {
    if let Some(v) = value {
        let seed = v.trim().parse().map_err(|_| ConfigError::SeedOverride {
            var: SEED_ENV,
            value: v.clone(),
        })?;
        config.seed = Some(seed);
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn state(&self) -> IntensityState {
        IntensityState::new(self.a.clone()).expect("validated at parse time")
    }

    fn weights_path(&self, base: &Path) -> Option<PathBuf> {
        self.weights.as_ref().map(|p| if p.is_relative() { base.join(p) } else { p.clone() })
    }

    fn read_weights(&self, base: &Path) -> Result<Option<(PathBuf, String)>, CliError> {
        let Some(path) = self.weights_path(base) else {
            return Ok(None);
        };
        let text = fs::read_to_string(&path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(Some((path, text)))
    }

    /// Build the model; weight paths resolve against `base` (the config file's directory).
    pub fn load_model(&self, base: &Path) -> Result<TransitionModel, CliError> {
        match self.read_weights(base)? {
            None => Ok(model::make_model(self.model, None)?),
            Some((path, text)) => {
                TransitionModel::custom_from_json(&text, self.n).map_err(|source| CliError::Weights { path, source })
            }
        }
    }

    /// Like [`ExperimentConfig::load_model`] but skips the admissibility check.
    pub fn load_model_unchecked(&self, base: &Path) -> Result<TransitionModel, CliError> {
        match self.read_weights(base)? {
            None => Ok(model::make_model(self.model, None)?),
            Some((path, text)) => model::parse_weight_document(&text, self.n)
                .map(TransitionModel::custom_unchecked)
                .map_err(|source| CliError::Weights { path, source }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Provenance<'a> {
    prng: &'static str,
    config: &'a ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    weight_table: Option<&'a [f64]>,
}

fn provenance<'a>(config: &'a ExperimentConfig, model: &'a TransitionModel) -> Provenance<'a> {
    Provenance {
        prng: PRNG_ID,
        config,
        weight_table: model.weight_table(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

fn all_passed(checks: &Option<Vec<Check>>) -> bool {
    checks.as_ref().is_none_or(|c| c.iter().all(|c| c.passed))
}

/// 17 significant digits, round-trip exact.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WinnerRow {
    /// 1-based component index.
    pub component: usize,
    pub count: u64,
    pub frequency: f64,
    pub born: f64,
    pub interval_95: (f64, f64),
    pub interval_999: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZScores {
    pub total_steps: Option<f64>,
    pub nontrivial_steps: Option<f64>,
    pub null_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_mean: Option<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct RunReport<'a> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    step_guard: Option<u64>,
    born: Vec<f64>,
    winners: Vec<WinnerRow>,
    gof: Option<GoodnessOfFit>,
    prediction: StepPrediction,
    null_fraction_target: Option<f64>,
    z: ZScores,
    summary: &'a EnsembleSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    checks: Option<Vec<Check>>,
}

pub struct RunOutput {
    pub summary: EnsembleSummary,
    pub summary_json: String,
    pub trials_csv: String,
    pub passed: bool,
}

/// z of `mean` against `target`; a zero-variance sample is exact.
fn z_or_exact(mean: f64, se: f64, target: f64) -> f64 {
    if se > 0.0 {
        (mean - target) / se
    } else if mean == target {
        0.0
    } else {
        f64::INFINITY
    }
}

pub fn trials_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from("trial,winner,total_steps,nontrivial_steps\n");
    for r in records {
        let winner = r.winner.map(|w| (w + 1).to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", r.trial, winner, r.total_steps, r.nontrivial_steps);
    }
    out
}

/// Run the ensemble and build the summary JSON and per-trial CSV.
pub fn cmd_run(config: &ExperimentConfig, model: &TransitionModel, check: bool) -> Result<RunOutput, CliError> {
    let trials = config.trials.ok_or(ConfigError::RequiredFor("trials"))?;
    let seed = config.seed.ok_or(ConfigError::RequiredFor("seed"))?;
    let state = config.state();
    let ensemble = Ensemble::new(state.clone(), model.clone(), trials, seed)
        .mode(config.mode)
        .max_steps(config.max_steps);
    let step_guard = match config.mode {
        EnsembleMode::ToAbsorption => Some(match config.max_steps {
            Some(g) => g,
            None => engine::default_step_guard(&state, model)?,
        }),
        EnsembleMode::Partial { .. } => None,
    };
    let records = ensemble.records()?;
    let summary = ensemble.summarize(&records);

    let born = analytic::born_probabilities(&state);
    let winners: Vec<WinnerRow> = summary
        .winner_counts
        .iter()
        .enumerate()
        .map(|(i, &count)| WinnerRow {
            component: i + 1,
            count,
            frequency: count as f64 / trials as f64,
            born: born[i],
            interval_95: stats::proportion_interval(count, trials, 0.95),
            interval_999: stats::proportion_interval(count, trials, CHECK_LEVEL),
        })
        .collect();

    let absorbing = matches!(config.mode, EnsembleMode::ToAbsorption);
    // Components with zero Born weight cannot win; test the occupied ones.
    let occupied: Vec<usize> = (0..born.len()).filter(|&i| born[i] > 0.0).collect();
    let gof = if absorbing && occupied.len() >= 2 && summary.unfinished == 0 {
        let obs: Vec<u64> = occupied.iter().map(|&i| summary.winner_counts[i]).collect();
        let exp: Vec<f64> = occupied.iter().map(|&i| born[i]).collect();
        let done = obs.iter().sum();
        Some(stats::chi_square_gof(&obs, &exp, done).expect("occupied categories are positive"))
    } else {
        None
    };
    let stray_winners: u64 = (0..born.len())
        .filter(|&i| born[i] == 0.0)
        .map(|i| summary.winner_counts[i])
        .sum();

    let prediction = analytic::mean_total_steps(&state, model)?;
    let null_fraction_target =
        (absorbing && !prediction.heuristic && prediction.total > 0.0).then(|| 1.0 - prediction.nontrivial / prediction.total);
    let counted = summary.counted();
    let z = ZScores {
        total_steps: (absorbing && !prediction.heuristic && counted > 1)
            .then(|| z_or_exact(summary.step_mean, summary.step_se(), prediction.total)),
        nontrivial_steps: (absorbing && counted > 1)
            .then(|| z_or_exact(summary.nontrivial_mean, summary.nontrivial_se(), prediction.nontrivial)),
        null_fraction: null_fraction_target
            .filter(|_| counted > 1)
            .map(|t| z_or_exact(summary.null_fraction, summary.null_fraction_se, t)),
        final_mean: summary.final_mean.as_ref().zip(summary.final_mean_se.as_ref()).map(|(m, se)| {
            m.iter()
                .zip(se)
                .zip(state.components())
                .map(|((&m, &se), &a)| z_or_exact(m, se, a as f64))
                .collect()
        }),
    };

    let checks = check.then(|| {
        let mut c = Vec::new();
        if absorbing {
            let frac = summary.unfinished as f64 / trials as f64;
            c.push(Check::new(
                "unfinished_fraction",
                frac < CHECK_UNFINISHED,
                format!("{} of {} trials hit the step guard", summary.unfinished, trials),
            ));
            c.push(Check::new(
                "no_stray_winners",
                stray_winners == 0,
                format!("{stray_winners} trials ended on an initially empty component"),
            ));
            if let Some(g) = &gof {
                c.push(Check::new(
                    "born_chi_square",
                    g.p_value > CHECK_P_VALUE,
                    format!("statistic {:.6}, dof {}, p {:.6}", g.statistic, g.dof, g.p_value),
                ));
            }
            for w in &winners {
                c.push(Check::new(
                    format!("born_interval_{}", w.component),
                    w.interval_999.0 <= w.born && w.born <= w.interval_999.1,
                    format!("born {} in [{}, {}]", w.born, w.interval_999.0, w.interval_999.1),
                ));
            }
        }
        for (name, value) in [
            ("total_steps_z", z.total_steps),
            ("nontrivial_steps_z", z.nontrivial_steps),
            ("null_fraction_z", z.null_fraction),
        ] {
            if let Some(v) = value {
                c.push(Check::new(name, v.abs() < CHECK_Z, format!("z = {v:.4}")));
            }
        }
        if let Some(zs) = &z.final_mean {
            for (i, v) in zs.iter().enumerate() {
                c.push(Check::new(format!("final_mean_z_{}", i + 1), v.abs() < CHECK_Z, format!("z = {v:.4}")));
            }
        }
        c
    });
    let passed = all_passed(&checks);

    let report = RunReport {
        provenance: provenance(config, model),
        step_guard,
        born,
        winners,
        gof,
        prediction,
        null_fraction_target,
        z,
        summary: &summary,
        checks,
    };
    Ok(RunOutput {
        summary_json: to_json(&report),
        trials_csv: trials_csv(&records),
        summary,
        passed,
    })
}

#[derive(Debug, Serialize)]
struct PredictReport<'a> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    born_probabilities: Vec<f64>,
    /// Per-component mean steps to reach 0 or N.
    v: Vec<f64>,
    mean_total_steps: f64,
    mean_total_steps_heuristic: bool,
    mean_nontrivial_steps: f64,
    max_nontrivial: f64,
}

pub fn cmd_predict(config: &ExperimentConfig, model: &TransitionModel) -> Result<String, CliError> {
    let state = config.state();
    let p = analytic::mean_total_steps(&state, model)?;
    Ok(to_json(&PredictReport {
        provenance: provenance(config, model),
        born_probabilities: analytic::born_probabilities(&state),
        mean_total_steps: p.total,
        mean_total_steps_heuristic: p.heuristic,
        mean_nontrivial_steps: p.nontrivial,
        v: p.v,
        max_nontrivial: analytic::max_nontrivial(state.len(), state.total()),
    }))
}

#[derive(Debug, Serialize)]
struct OracleReport<'a> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    m: usize,
    states: usize,
    solver: Option<SolverUsed>,
    residual: f64,
    second_difference: Option<f64>,
    formulas: FormulaCheck,
    /// Oracle values at the configured initial state.
    initial: OracleInitial,
    max_nontrivial_formula: f64,
    max_nontrivial_oracle: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    checks: Option<Vec<Check>>,
}

#[derive(Debug, Serialize)]
struct OracleInitial {
    absorb: Vec<f64>,
    expected_total: f64,
    expected_nontrivial: f64,
}

pub struct OracleOutput {
    pub csv: String,
    pub json: String,
    pub passed: bool,
}

/// Exact solution over the full state space of `(M, N)` from the config.
pub fn cmd_oracle(config: &ExperimentConfig, model: &TransitionModel, check: bool) -> Result<OracleOutput, CliError> {
    let state = config.state();
    let space = oracle::enumerate_states(state.len(), state.total())?;
    let chain = oracle::build_chain(model, &space)?;
    let solution = oracle::solve_chain(&chain, &space, SolverKind::Auto)?;
    let m = space.m();

    let mut csv = String::from("state");
    for j in 1..=m {
        let _ = write!(csv, ",absorb_{j}");
    }
    csv.push_str(",expected_total,expected_nontrivial\n");
    for (i, s) in space.states().iter().enumerate() {
        let label: Vec<String> = s.iter().map(u64::to_string).collect();
        csv.push_str(&label.join(" "));
        for x in &solution.absorb[i] {
            csv.push(',');
            csv.push_str(&fmt_float(*x));
        }
        let _ = writeln!(
            csv,
            ",{},{}",
            fmt_float(solution.expected_total[i]),
            fmt_float(solution.expected_nontrivial[i])
        );
    }

    let second_difference = (m == 2).then(|| oracle::second_difference_check(&solution, &space)).transpose()?;
    let formulas = oracle::compare_with_formulas(&solution, &space, model)?;
    let at = space.index_of(state.components()).expect("initial state in its own space");
    let max_nontrivial_oracle = solution.expected_nontrivial.iter().copied().fold(0.0, f64::max);
    let max_nontrivial_formula = analytic::max_nontrivial(m, space.n());

    let checks = check.then(|| {
        let mut c = vec![
            Check::new(
                "born_exact",
                formulas.born_abs <= BORN_TOLERANCE,
                format!("max |absorb - a/N| = {:e}", formulas.born_abs),
            ),
            Check::new(
                "nontrivial_exact",
                formulas.nontrivial_abs <= NONTRIVIAL_TOLERANCE,
                format!("max |nontrivial - sum a_i a_j| = {:e}", formulas.nontrivial_abs),
            ),
            Check::new(
                "solver_residual",
                solution.residual <= oracle::solver::SOLVER_TOLERANCE,
                format!("residual {:e}", solution.residual),
            ),
        ];
        if let Some(d) = second_difference {
            c.push(Check::new(
                "second_difference",
                d <= SECOND_DIFFERENCE_TOLERANCE,
                format!("max second difference {d:e}"),
            ));
        }
        c
    });
    let passed = all_passed(&checks);

    let report = OracleReport {
        provenance: provenance(config, model),
        m,
        states: space.len(),
        solver: solution.solver,
        residual: solution.residual,
        second_difference,
        formulas,
        initial: OracleInitial {
            absorb: solution.absorb[at].clone(),
            expected_total: solution.expected_total[at],
            expected_nontrivial: solution.expected_nontrivial[at],
        },
        max_nontrivial_formula,
        max_nontrivial_oracle,
        checks,
    };
    Ok(OracleOutput {
        csv,
        json: to_json(&report),
        passed,
    })
}

#[derive(Debug, Serialize)]
struct ValidateReport<'a> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    m: usize,
    n: u64,
    report: ModelReport,
}

/// Exhaustive admissibility check over all configurations of `(M, N)`.
pub fn cmd_validate_model(config: &ExperimentConfig, model: &TransitionModel) -> Result<(String, bool), CliError> {
    let m = config.a.len();
    let report = model::validate_model(model, m, config.n)?;
    let valid = report.valid;
    Ok((
        to_json(&ValidateReport {
            provenance: provenance(config, model),
            m,
            n: config.n,
            report,
        }),
        valid,
    ))
}

/// Where command output goes.
#[derive(Debug, Clone)]
pub enum Destination {
    Stdout,
    Directory(PathBuf),
}

impl Destination {
    pub fn resolve(flag: Option<PathBuf>, config: &ExperimentConfig) -> Self {
        match flag.or_else(|| config.out.clone()) {
            Some(dir) => Destination::Directory(dir),
            None => Destination::Stdout,
        }
    }

    /// Write `files` into the directory, or print the first to stdout.
    pub fn emit(&self, files: &[(&str, &str)]) -> Result<(), CliError> {
        match self {
            Destination::Stdout => {
                if let Some((_, body)) = files.first() {
                    print!("{body}");
                }
                Ok(())
            }
            Destination::Directory(dir) => {
                fs::create_dir_all(dir).map_err(|source| CliError::Io {
                    path: dir.clone(),
                    source,
                })?;
                for (name, body) in files {
                    let path = dir.join(name);
                    fs::write(&path, body).map_err(|source| CliError::Io { path, source })?;
                }
                Ok(())
            }
        }
    }
}

/// Read and parse a config file, applying the seed override.
pub fn load_config(path: &Path, seed_override: Option<String>) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut config = parse_config(&text)?;
    apply_seed_override(&mut config, seed_override)?;
    Ok(config)
}
