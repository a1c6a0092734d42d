//! Command-line front end: strict config parsing, dispatch and run manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::de::{self, Deserializer, MapAccess, SeqAccess, Visitor};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::bounds::{
    self, expectation_bound, expectation_bound_opt, BoundKind, BoundReport, ExpectationInput, MgfMode,
};
use crate::counterexample::{
    counterexample_expectation_bound, counterexample_tail_bound, scaling_study, RRule, ScoInstance, TailSample,
};
use crate::error::{Error, Result};
use crate::info::{BallSearchConfig, Channel, Pmf};
use crate::learning::{gibbs_2x2, gibbs_4x4, FiniteLearningProblem, Gibbs};
use crate::matrix::Matrix;
use crate::rd::{rd_curve_grid, Distortion};
use crate::report::{fmt_f64, to_canonical_json, to_csv, write_output, write_report, OutputEntry};
use crate::trajectory::{lr_sweep, TrajectorySpec};
use crate::validation::{
    covering_2x2, covering_failure_estimate, disintegrated_rate, mc_tail_validate, CoveringSummary,
    COVERING_2X2_DELTA, COVERING_2X2_EPSILON,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Name of the manifest written next to the outputs.
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Bound,
    Rd,
    McValidate,
    Covering,
    Trajectory,
    Counterexample,
    Sweep,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// A fully merged run description. `params` is checked against the typed
/// parameter set of `command` during parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: CommandKind,
    pub config: RunConfig,
    pub version: String,
    pub seed: u64,
    pub wall_time_secs: f64,
    pub outputs: Vec<OutputEntry>,
    pub status: RunStatus,
}

impl RunManifest {
    pub fn exit_code(&self) -> i32 {
        match self.status {
            RunStatus::Pass => 0,
            RunStatus::Fail => 2,
        }
    }
}

fn json_or_string(s: &str) -> std::result::Result<Value, String> {
    let t = s.trim_start();
    if t.starts_with('{') || t.starts_with('[') {
        serde_json::from_str(s).map_err(|e| e.to_string())
    } else {
        Ok(Value::String(s.to_string()))
    }
}

#[derive(Debug, Parser)]
#[command(name = "genbound", version, about = "Generalization bounds, rate-distortion and Monte Carlo checks")]
pub struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: CommandArgs,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum CommandArgs {
    /// Evaluate one bound.
    Bound(BoundArgs),
    /// Rate-distortion curve of a finite source.
    Rd(RdArgs),
    /// Monte Carlo check of a tail bound on a finite problem.
    McValidate(ValidateArgs),
    /// Covering failure exponents of random hypothesis books.
    Covering(CoveringArgs),
    /// Learning-rate sweep of the toy trajectory model.
    Trajectory(TrajectoryArgs),
    /// Scaling study of the convex counter-example.
    Counterexample(CounterexampleArgs),
    /// Bound value against sample size.
    Sweep(SweepArgs),
}

impl CommandArgs {
    fn kind(&self) -> CommandKind {
        match self {
            CommandArgs::Bound(_) => CommandKind::Bound,
            CommandArgs::Rd(_) => CommandKind::Rd,
            CommandArgs::McValidate(_) => CommandKind::McValidate,
            CommandArgs::Covering(_) => CommandKind::Covering,
            CommandArgs::Trajectory(_) => CommandKind::Trajectory,
            CommandArgs::Counterexample(_) => CommandKind::Counterexample,
            CommandArgs::Sweep(_) => CommandKind::Sweep,
        }
    }

    fn params(&self) -> Result<Map<String, Value>> {
        match self {
            CommandArgs::Bound(a) => flag_params(a),
            CommandArgs::Rd(a) => flag_params(a),
            CommandArgs::McValidate(a) => flag_params(a),
            CommandArgs::Covering(a) => flag_params(a),
            CommandArgs::Trajectory(a) => flag_params(a),
            CommandArgs::Counterexample(a) => flag_params(a),
            CommandArgs::Sweep(a) => flag_params(a),
        }
    }
}

fn flag_params<T: Serialize>(args: &T) -> Result<Map<String, Value>> {
    match serde_json::to_value(args).map_err(|e| Error::Io(e.to_string()))? {
        Value::Object(map) => Ok(map.into_iter().filter(|(_, v)| !v.is_null()).collect()),
        _ => Ok(Map::new()),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct BoundArgs {
    #[arg(long)]
    pub kind: Option<BoundKind>,
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub emp_risk: Option<f64>,
    #[arg(long)]
    pub sup_mi: Option<f64>,
    #[arg(long)]
    pub sample_means_sq_sum: Option<f64>,
    #[arg(long)]
    pub lipschitz: Option<f64>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub rd_sup: Option<f64>,
    /// Builtin name (`gibbs_4x4`, `gibbs_2x2`), JSON file path or inline JSON.
    #[arg(long, value_parser = json_or_string)]
    pub problem: Option<Value>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub pi: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub q: Option<Vec<f64>>,
    #[arg(long)]
    pub log_mgf: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct RdArgs {
    #[arg(long, value_delimiter = ',')]
    pub source: Option<Vec<f64>>,
    /// `hamming`, `absolute` or a JSON matrix of rows.
    #[arg(long, value_parser = json_or_string)]
    pub distortion: Option<Value>,
    #[arg(long, value_delimiter = ',')]
    pub eps_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateArgs {
    #[arg(long, value_parser = json_or_string)]
    pub problem: Option<Value>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// `variable_size` or `fixed_size`.
    #[arg(long)]
    pub bound: Option<BoundKind>,
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct CoveringArgs {
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Constant per-symbol rate.
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub m_grid: Option<Vec<usize>>,
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryArgs {
    /// `toy_logistic`, JSON file path or inline JSON.
    #[arg(long, value_parser = json_or_string)]
    pub spec: Option<Value>,
    #[arg(long, value_delimiter = ',')]
    pub lr_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct CounterexampleArgs {
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// `min` (r = 1 - 1/n^2) or `one`.
    #[arg(long)]
    pub r_rule: Option<RRule>,
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct SweepArgs {
    /// `variable_size` or `fixed_size`.
    #[arg(long)]
    pub kind: Option<BoundKind>,
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
}

/// JSON value that rejects duplicate object keys.
struct StrictValue(Value);

impl<'de> Deserialize<'de> for StrictValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        d.deserialize_any(StrictVisitor).map(StrictValue)
    }
}

struct StrictVisitor;

impl<'de> Visitor<'de> for StrictVisitor {
    type Value = Value;

    fn expecting(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("a JSON value")
    }
    fn visit_bool<E>(self, v: bool) -> std::result::Result<Value, E> {
        Ok(Value::Bool(v))
    }
    fn visit_i64<E>(self, v: i64) -> std::result::Result<Value, E> {
        Ok(Value::from(v))
    }
    fn visit_u64<E>(self, v: u64) -> std::result::Result<Value, E> {
        Ok(Value::from(v))
    }
    fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Value, E> {
        serde_json::Number::from_f64(v)
            .map(Value::Number)
            .ok_or_else(|| E::custom("non-finite number"))
    }
    fn visit_str<E>(self, v: &str) -> std::result::Result<Value, E> {
        Ok(Value::String(v.to_string()))
    }
    fn visit_string<E>(self, v: String) -> std::result::Result<Value, E> {
        Ok(Value::String(v))
    }
    fn visit_unit<E>(self) -> std::result::Result<Value, E> {
        Ok(Value::Null)
    }
    fn visit_none<E>(self) -> std::result::Result<Value, E> {
        Ok(Value::Null)
    }
    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<Value, A::Error> {
        let mut out = Vec::new();
        while let Some(StrictValue(v)) = seq.next_element()? {
            out.push(v);
        }
        Ok(Value::Array(out))
    }
    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Value, A::Error> {
        let mut out = Map::new();
        while let Some(key) = map.next_key::<String>()? {
            if out.contains_key(&key) {
                return Err(de::Error::custom(format!("duplicate key `{key}`")));
            }
            let StrictValue(v) = map.next_value()?;
            out.insert(key, v);
        }
        Ok(Value::Object(out))
    }
}

fn config_error(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

/// Parses JSON text, rejecting duplicate keys anywhere in the document.
pub fn parse_strict_json(text: &str) -> Result<Value> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let StrictValue(v) = serde_path_to_error::deserialize(&mut *de)
        .map_err(|e| config_error(e.path().to_string(), e.inner().to_string()))?;
    de.end().map_err(|e| config_error("", e.to_string()))?;
    Ok(v)
}

/// Values given on the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub command: Option<CommandKind>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub params: Map<String, Value>,
}

impl Overrides {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        Ok(Self {
            command: Some(cli.command.kind()),
            seed: cli.seed,
            out: cli.out.clone(),
            threads: cli.threads,
            params: cli.command.params()?,
        })
    }
}

/// Merges config text (possibly empty) with flag overrides and validates the
/// result, including the typed parameters of the chosen command.
pub fn parse_config(file_text: Option<&str>, flags: &Overrides) -> Result<RunConfig> {
    let mut root = match file_text.map(str::trim) {
        None | Some("") => Map::new(),
        Some(text) => match parse_strict_json(text)? {
            Value::Object(m) => m,
            _ => return Err(config_error("", "config must be a JSON object")),
        },
    };
    if let Some(cmd) = flags.command {
        let v = serde_json::to_value(cmd).expect("enum serializes");
        if let Some(existing) = root.get("command") {
            if existing != &v {
                return Err(config_error(
                    "command",
                    format!("config file names {existing} but the command line runs {v}"),
                ));
            }
        }
        root.insert("command".into(), v);
    }
    if let Some(seed) = flags.seed {
        root.insert("seed".into(), Value::from(seed));
    }
    if let Some(out) = &flags.out {
        root.insert("out".into(), Value::String(out.to_string_lossy().into_owned()));
    }
    if let Some(t) = flags.threads {
        root.insert("threads".into(), Value::from(t));
    }
    if !flags.params.is_empty() {
        let params = root
            .entry("params")
            .or_insert_with(|| Value::Object(Map::new()));
        let Value::Object(params) = params else {
            return Err(config_error("params", "expected an object"));
        };
        for (k, v) in &flags.params {
            params.insert(k.clone(), v.clone());
        }
    }
    let config: RunConfig = serde_path_to_error::deserialize(Value::Object(root))
        .map_err(|e| config_error(e.path().to_string(), e.inner().to_string()))?;
    if config.threads == Some(0) {
        return Err(config_error("threads", "must be at least 1"));
    }
    config.job()?;
    Ok(config)
}

/// Typed parameters of a run.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Job {
    Bound(BoundArgs),
    Rd(RdArgs),
    McValidate(ValidateArgs),
    Covering(CoveringArgs),
    Trajectory(TrajectoryArgs),
    Counterexample(CounterexampleArgs),
    Sweep(SweepArgs),
}

fn typed<T: for<'de> Deserialize<'de>>(params: &BTreeMap<String, Value>) -> Result<T> {
    let map: Map<String, Value> = params.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    serde_path_to_error::deserialize(Value::Object(map))
        .map_err(|e| config_error(format!("params.{}", e.path()), e.inner().to_string()))
}

impl RunConfig {
    pub fn job(&self) -> Result<Job> {
        let p = &self.params;
        let job = match self.command {
            CommandKind::Bound => {
                let a: BoundArgs = typed(p)?;
                check_bound_keys(&a, p)?;
                Job::Bound(a)
            }
            CommandKind::Rd => {
                require(p, &["source", "eps_grid"])?;
                Job::Rd(typed(p)?)
            }
            CommandKind::McValidate => Job::McValidate(typed(p)?),
            CommandKind::Covering => Job::Covering(typed(p)?),
            CommandKind::Trajectory => Job::Trajectory(typed(p)?),
            CommandKind::Counterexample => Job::Counterexample(typed(p)?),
            CommandKind::Sweep => {
                require(p, &["n_list", "rate", "sigma", "delta"])?;
                Job::Sweep(typed(p)?)
            }
        };
        Ok(job)
    }

    /// Canonical JSON text of the config.
    pub fn to_canonical(&self) -> Result<String> {
        to_canonical_json(self)
    }
}

/// Required and optional parameter keys per bound kind.
fn bound_keys(kind: BoundKind) -> Option<(&'static [&'static str], &'static [&'static str])> {
    use BoundKind::*;
    Some(match kind {
        VariableSize | FixedSize => (&["rate", "sigma", "n", "delta"], &["epsilon"]),
        FastRate => (&["emp_risk", "sup_mi", "sigma", "n", "delta"], &[]),
        ToyGaussian => (&["sample_means_sq_sum", "lipschitz", "d", "sigma", "n", "delta"], &[]),
        TrajectorySup => (&["rd_sup", "n", "delta"], &["epsilon"]),
        PacBayes => (&["pi", "q", "log_mgf", "delta"], &[]),
        RdTail => (&["n", "delta"], &["problem", "beta", "sigma", "epsilon"]),
        Expectation => (&["n"], &["problem", "beta", "lambda"]),
        CounterexampleExpectation => (&["n"], &["r"]),
        CounterexampleTail => (&["n"], &["r", "delta"]),
        LossyPacBayes | LossyDisintegrated | ExpectationRenyi | TrajectoryData => return None,
    })
}

fn check_bound_keys(a: &BoundArgs, params: &BTreeMap<String, Value>) -> Result<()> {
    let kind = a.kind.ok_or_else(|| config_error("params.kind", "missing required field"))?;
    let (required, optional) = bound_keys(kind).ok_or_else(|| {
        config_error(
            "params.kind",
            format!("`{kind}` takes distribution-valued inputs and is available through the library only"),
        )
    })?;
    require(params, required)?;
    for key in params.keys().filter(|k| k.as_str() != "kind") {
        if !required.contains(&key.as_str()) && !optional.contains(&key.as_str()) {
            return Err(config_error(
                format!("params.{key}"),
                format!("not used by bound kind `{kind}`"),
            ));
        }
    }
    Ok(())
}

fn require(params: &BTreeMap<String, Value>, keys: &[&str]) -> Result<()> {
    match keys.iter().find(|k| !params.contains_key(**k)) {
        Some(k) => Err(config_error(format!("params.{k}"), "missing required field")),
        None => Ok(()),
    }
}

fn need<T: Clone>(v: &Option<T>, name: &str) -> Result<T> {
    v.clone()
        .ok_or_else(|| config_error(format!("params.{name}"), "missing required field"))
}

fn load_problem(v: Option<&Value>) -> Result<FiniteLearningProblem> {
    match v {
        None => Ok(gibbs_4x4()),
        Some(Value::String(s)) => match s.as_str() {
            "gibbs_4x4" => Ok(gibbs_4x4()),
            "gibbs_2x2" => Ok(gibbs_2x2()),
            path => FiniteLearningProblem::from_json(&read_text(Path::new(path))?),
        },
        Some(obj @ Value::Object(_)) => FiniteLearningProblem::from_json(&obj.to_string()),
        Some(_) => Err(config_error("params.problem", "expected a name, path or object")),
    }
}

fn load_spec(v: Option<&Value>) -> Result<TrajectorySpec> {
    match v {
        None => Ok(TrajectorySpec::toy_logistic()),
        Some(Value::String(s)) if s == "toy_logistic" => Ok(TrajectorySpec::toy_logistic()),
        Some(Value::String(path)) => TrajectorySpec::from_json(&read_text(Path::new(path))?),
        Some(obj @ Value::Object(_)) => TrajectorySpec::from_json(&obj.to_string()),
        Some(_) => Err(config_error("params.spec", "expected a name, path or object")),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn gibbs_for(prob: &FiniteLearningProblem, beta: Option<f64>) -> Gibbs {
    Gibbs {
        prior: Pmf::uniform(prob.w_size()),
        beta: beta.unwrap_or(1.0),
    }
}

fn sigma_for(prob: &FiniteLearningProblem, sigma: Option<f64>) -> Result<f64> {
    sigma.or_else(|| prob.subgaussian_sigma()).ok_or_else(|| {
        config_error(
            "params.sigma",
            "required when the problem declares no loss bound `B`",
        )
    })
}

/// Evaluates the bound described by `a`.
pub fn evaluate_bound(a: &BoundArgs, seed: u64) -> Result<BoundReport> {
    let kind = need(&a.kind, "kind")?;
    let eps = a.epsilon.unwrap_or(0.0);
    match kind {
        BoundKind::VariableSize => bounds::variable_size_bound(
            need(&a.rate, "rate")?,
            need(&a.sigma, "sigma")?,
            need(&a.n, "n")?,
            need(&a.delta, "delta")?,
            eps,
        ),
        BoundKind::FixedSize => bounds::fixed_size_bound(
            need(&a.rate, "rate")?,
            need(&a.sigma, "sigma")?,
            need(&a.n, "n")?,
            need(&a.delta, "delta")?,
            eps,
        ),
        BoundKind::FastRate => bounds::fast_rate_bound(
            need(&a.emp_risk, "emp_risk")?,
            need(&a.sup_mi, "sup_mi")?,
            need(&a.sigma, "sigma")?,
            need(&a.n, "n")?,
            need(&a.delta, "delta")?,
        ),
        BoundKind::ToyGaussian => bounds::toy_example_bound(
            need(&a.sample_means_sq_sum, "sample_means_sq_sum")?,
            need(&a.lipschitz, "lipschitz")?,
            need(&a.d, "d")?,
            need(&a.sigma, "sigma")?,
            need(&a.n, "n")?,
            need(&a.delta, "delta")?,
        ),
        BoundKind::TrajectorySup => bounds::trajectory_sup_bound(
            need(&a.rd_sup, "rd_sup")?,
            need(&a.delta, "delta")?,
            need(&a.n, "n")?,
            eps,
        ),
        BoundKind::PacBayes => bounds::pac_bayes_bound(
            &Pmf::new(need(&a.pi, "pi")?)?,
            &Pmf::new(need(&a.q, "q")?)?,
            need(&a.log_mgf, "log_mgf")?,
            need(&a.delta, "delta")?,
        ),
        BoundKind::RdTail => {
            let prob = load_problem(a.problem.as_ref())?;
            let sigma = sigma_for(&prob, a.sigma)?;
            bounds::rd_tail_bound(
                &prob,
                &gibbs_for(&prob, a.beta),
                need(&a.n, "n")?,
                sigma,
                need(&a.delta, "delta")?,
                eps,
                BallSearchConfig {
                    seed,
                    ..BallSearchConfig::default()
                },
            )
        }
        BoundKind::Expectation => {
            let prob = load_problem(a.problem.as_ref())?;
            let induced = prob.induced_joint(&gibbs_for(&prob, a.beta), need(&a.n, "n")?)?;
            let marginal = Channel::constant(induced.joint.rows(), &induced.joint.col_marginal());
            let input = ExpectationInput {
                p: &induced.joint,
                p_hat: &induced.posterior,
                q_hat: &marginal,
                f: &induced.gen,
                g: &induced.gen,
                epsilon: 0.0,
            };
            match a.lambda {
                Some(l) => expectation_bound(&input, l, MgfMode::Exact),
                None => expectation_bound_opt(&input, MgfMode::Exact, 1e-3, 1e4),
            }
        }
        BoundKind::CounterexampleExpectation => {
            let inst = ScoInstance::new(need(&a.n, "n")?)?;
            counterexample_expectation_bound(&inst, a.r.unwrap_or(RRule::Min.r(inst.n)))
        }
        BoundKind::CounterexampleTail => {
            let inst = ScoInstance::new(need(&a.n, "n")?)?;
            let r = a.r.unwrap_or(RRule::Min.r(inst.n));
            counterexample_tail_bound(&inst, r, a.delta.unwrap_or(0.1), TailSample::typical(&inst, r)?)
        }
        other => Err(config_error(
            "params.kind",
            format!("`{other}` is available through the library only"),
        )),
    }
}

fn parse_distortion(v: &Value, k: usize) -> Result<Distortion> {
    match v {
        Value::String(s) if s == "hamming" => Ok(Distortion::hamming(k)),
        Value::String(s) if s == "absolute" => {
            let points: Vec<f64> = (0..k).map(|i| i as f64).collect();
            Ok(Distortion::absolute(&points))
        }
        Value::Array(_) => {
            let rows: Vec<Vec<f64>> = serde_json::from_value(v.clone())
                .map_err(|e| config_error("params.distortion", e.to_string()))?;
            Distortion::from_rows(rows)
        }
        _ => Err(config_error(
            "params.distortion",
            "expected `hamming`, `absolute` or a matrix of rows",
        )),
    }
}

struct Outcome {
    outputs: Vec<OutputEntry>,
    pass: bool,
}

fn run_job(job: &Job, seed: u64, out: &Path) -> Result<Outcome> {
    let mut outputs = Vec::new();
    let pass = match job {
        Job::Bound(a) => {
            let report = evaluate_bound(a, seed)?;
            outputs.push(write_report(out, "report.json", &report)?);
            true
        }
        Job::Rd(a) => {
            let source = Pmf::new(need(&a.source, "source")?)?;
            let dist = parse_distortion(
                a.distortion.as_ref().unwrap_or(&Value::String("hamming".into())),
                source.len(),
            )?;
            let grid = need(&a.eps_grid, "eps_grid")?;
            let sols = rd_curve_grid(&source, &dist, &grid)?;
            let rows: Vec<Vec<String>> = grid
                .iter()
                .zip(&sols)
                .map(|(e, s)| {
                    vec![
                        fmt_f64(*e),
                        fmt_f64(s.rate_nats),
                        fmt_f64(s.achieved_distortion),
                        s.iterations.to_string(),
                        s.converged.to_string(),
                    ]
                })
                .collect();
            let csv = to_csv(
                &["epsilon", "rate_nats", "achieved_distortion", "iterations", "converged"],
                &rows,
            );
            outputs.push(write_output(out, "rd.csv", &csv)?);
            true
        }
        Job::McValidate(a) => {
            let prob = load_problem(a.problem.as_ref())?;
            let alg = gibbs_for(&prob, a.beta);
            let sigma = sigma_for(&prob, a.sigma)?;
            let n = a.n.unwrap_or(25);
            let delta = a.delta.unwrap_or(0.1);
            let kind = a.bound.unwrap_or(BoundKind::VariableSize);
            if !matches!(kind, BoundKind::VariableSize | BoundKind::FixedSize) {
                return Err(config_error(
                    "params.bound",
                    "expected `variable_size` or `fixed_size`",
                ));
            }
            let prior = alg.prior.clone();
            let report = mc_tail_validate(
                &prob,
                &alg,
                |_, post, w| {
                    let rate = disintegrated_rate(post, &prior, w);
                    let b = match kind {
                        BoundKind::VariableSize => bounds::variable_size_bound(rate, sigma, n, delta, 0.0)?,
                        _ => bounds::fixed_size_bound(rate, sigma, n, delta, 0.0)?,
                    };
                    Ok(b.bound_value)
                },
                n,
                delta,
                a.trials.unwrap_or(10_000),
                seed,
            )?;
            outputs.push(write_report(out, "validation.json", &report)?);
            report.pass
        }
        Job::Covering(a) => {
            let mut inst = covering_2x2();
            if let Some(r) = a.rate {
                inst = inst.with_rates(Matrix::filled(2, 2, r))?;
            }
            let eps = a.epsilon.unwrap_or(COVERING_2X2_EPSILON);
            let delta = a.delta.unwrap_or(COVERING_2X2_DELTA);
            let m_grid = a.m_grid.clone().unwrap_or_else(|| vec![4, 8, 12]);
            let rows = covering_failure_estimate(&inst, eps, &m_grid, a.trials.unwrap_or(10_000), seed)?;
            let csv_rows: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.m.to_string(),
                        r.trials.to_string(),
                        r.failures.to_string(),
                        fmt_f64(r.exponent),
                        r.censored.to_string(),
                    ]
                })
                .collect();
            let csv = to_csv(&["m", "trials", "failures", "exponent", "censored"], &csv_rows);
            outputs.push(write_output(out, "covering.csv", &csv)?);
            let summary = CoveringSummary::of(&rows, delta);
            #[derive(Serialize)]
            struct Summary<'a> {
                rows: &'a [crate::validation::CoveringRow],
                summary: &'a CoveringSummary,
            }
            outputs.push(write_report(
                out,
                "covering_summary.json",
                &Summary {
                    rows: &rows,
                    summary: &summary,
                },
            )?);
            summary.pass
        }
        Job::Trajectory(a) => {
            let spec = load_spec(a.spec.as_ref())?;
            let grid = a.lr_grid.clone().unwrap_or_else(TrajectorySpec::toy_lr_grid);
            let table = lr_sweep(&spec, &grid, a.trials.unwrap_or(50), a.epsilon, seed)?;
            outputs.push(write_output(out, "sweep.csv", &table.to_csv())?);
            let mut curve_rows = Vec::new();
            for row in &table.rows {
                for (e, r) in table.eps_grid.iter().zip(&row.rd_curve) {
                    curve_rows.push(vec![fmt_f64(row.lr), fmt_f64(*e), fmt_f64(*r)]);
                }
            }
            let curves = to_csv(&["lr", "epsilon", "rate_nats"], &curve_rows);
            outputs.push(write_output(out, "rd_curves.csv", &curves)?);
            outputs.push(write_report(out, "trajectory.json", &table)?);
            true
        }
        Job::Counterexample(a) => {
            let n_list = a.n_list.clone().unwrap_or_else(|| (4..=10).collect());
            let study = scaling_study(
                &n_list,
                a.trials.unwrap_or(2000),
                a.r_rule.unwrap_or(RRule::Min),
                a.delta.unwrap_or(0.1),
                seed,
            )?;
            outputs.push(write_output(out, "scaling.csv", &study.to_csv())?);
            outputs.push(write_report(out, "scaling.json", &study)?);
            study.pass()
        }
        Job::Sweep(a) => {
            let kind = a.kind.unwrap_or(BoundKind::VariableSize);
            let n_list = need(&a.n_list, "n_list")?;
            let (rate, sigma, delta) = (need(&a.rate, "rate")?, need(&a.sigma, "sigma")?, need(&a.delta, "delta")?);
            let eps = a.epsilon.unwrap_or(0.0);
            let mut rows = Vec::with_capacity(n_list.len());
            for &n in &n_list {
                let b = match kind {
                    BoundKind::VariableSize => bounds::variable_size_bound(rate, sigma, n, delta, eps)?,
                    BoundKind::FixedSize => bounds::fixed_size_bound(rate, sigma, n, delta, eps)?,
                    _ => {
                        return Err(config_error(
                            "params.kind",
                            "expected `variable_size` or `fixed_size`",
                        ))
                    }
                };
                rows.push(vec![n.to_string(), fmt_f64(b.bound_value)]);
            }
            outputs.push(write_output(out, "bound_sweep.csv", &to_csv(&["n", "bound_value"], &rows))?);
            true
        }
    };
    Ok(Outcome { outputs, pass })
}

/// Runs a validated config, writes its outputs and `manifest.json` into
/// `config.out`.
pub fn run(config: &RunConfig) -> Result<RunManifest> {
    let job = config.job()?;
    let start = Instant::now();
    let exec = || run_job(&job, config.seed, &config.out);
    let outcome = match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Io(e.to_string()))?
            .install(exec)?,
        None => exec()?,
    };
    let manifest = RunManifest {
        command: config.command,
        config: config.clone(),
        version: VERSION.to_string(),
        seed: config.seed,
        wall_time_secs: start.elapsed().as_secs_f64(),
        outputs: outcome.outputs,
        status: if outcome.pass {
            RunStatus::Pass
        } else {
            RunStatus::Fail
        },
    };
    write_report(&config.out, MANIFEST_FILE, &manifest)?;
    Ok(manifest)
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = (|| -> Result<RunManifest> {
        let text = cli.config.as_deref().map(read_text).transpose()?;
        let config = parse_config(text.as_deref(), &Overrides::from_cli(&cli)?)?;
        run(&config)
    })();
    match result {
        Ok(m) => {
            for o in &m.outputs {
                println!("{}  {}", o.sha256, o.path);
            }
            if m.status == RunStatus::Fail {
                eprintln!("validation failed");
            }
            m.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
