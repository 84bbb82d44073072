//! The `mimal` command line: argument parsing, configuration resolution and
//! the five subcommands.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{load_multisource_csv, write_multisource_csv, ColumnSchema, MultiSourceDataset};
use crate::error::{MimalError, Result};
use crate::inference::{estimate_importance, exposure_blocks, loco_scan, write_estimates_csv, ImportanceEstimate, LocoEntry};
use crate::learners::{Activation, Basis, Inputs, LearnerSpec};
use crate::oracle::{oracle_equivalence, random_linear_l2_instance, OracleCheck};
use crate::problem::ProblemSpec;
use crate::rewards::LossKind;
use crate::rng::derive_seed;
use crate::sim::{emit_report, run_replications, ReportFormat, ScenarioId, SimulationScenario, SIM3_INIT_SEED};

/// Environment variable read when `--seed` is absent.
pub const SEED_ENV: &str = "MIMAL_SEED";
pub const CONFIG_ECHO: &str = "config-echo.json";
const DEFAULT_REPS: usize = 100;
const DEFAULT_INSTANCES: usize = 20;
const DEFAULT_INSTANCE_ROWS: usize = 5000;

#[derive(Debug, Parser)]
#[command(name = "mimal", version, about = "Multi-source maximin variable importance")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Importance of one exposure block in a multi-source CSV.
    Analyze {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Leave-one-covariate-out scan over every predictor (or group).
    Scan {
        #[command(flatten)]
        data: DataArgs,
        /// Treat columns jointly: `name:col1,col2,...`. Repeatable.
        #[arg(long = "exposure-group", value_name = "NAME:COLS")]
        exposure_group: Vec<String>,
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Draw one dataset from a scenario and estimate its importance.
    Simulate {
        #[arg(long)]
        scenario: Option<ScenarioId>,
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Replication study of interval coverage for a scenario.
    Coverage {
        #[arg(long)]
        scenario: Option<ScenarioId>,
        #[arg(long)]
        reps: Option<usize>,
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compare the saddle solver with the closed-form squared-error oracle.
    OracleCheck {
        #[arg(long)]
        instances: Option<usize>,
        /// Rows per source of each random instance.
        #[arg(long)]
        rows: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON file whose entries override the flags (a config echo or a
    /// problem specification).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; falls back to MIMAL_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for folds, replications and scan targets.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    outcome: Option<String>,
    #[arg(long)]
    source: Option<String>,
    /// Exposure columns (comma separated or repeated).
    #[arg(long, value_delimiter = ',')]
    exposure: Vec<String>,
    /// Adjustment columns; defaults to every other column.
    #[arg(long, value_delimiter = ',')]
    adjust: Vec<String>,
    /// Time key aligning rows across sources; implies a paired design.
    #[arg(long)]
    time: Option<String>,
    /// Require a paired (time-aligned) design.
    #[arg(long)]
    paired: bool,
}

#[derive(Debug, Args, Default)]
struct SpecArgs {
    #[arg(long = "loss-kind", visible_alias = "loss")]
    loss_kind: Option<String>,
    /// linear | lasso | krr | mlp | spline
    #[arg(long = "learner-f")]
    learner_f: Option<String>,
    /// Adjustment and baseline family: linear | intercept | none | lasso | krr
    #[arg(long = "learner-g")]
    learner_g: Option<String>,
    #[arg(short = 'K', long = "K")]
    k: Option<usize>,
    #[arg(long = "ridge-delta", visible_alias = "ridge-q")]
    ridge_delta: Option<f64>,
    #[arg(long = "inflation-tau", visible_alias = "tau")]
    inflation_tau: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "cross-fit", num_args = 0..=1, default_missing_value = "true")]
    cross_fit: Option<bool>,
    #[arg(long = "no-cross-fit")]
    no_cross_fit: bool,
    /// Iteration budget T of the saddle solver.
    #[arg(long = "max-iter", visible_alias = "T")]
    max_iter: Option<usize>,
    #[arg(long = "grad-tol")]
    grad_tol: Option<f64>,
    #[arg(long = "lasso-penalty")]
    lasso_penalty: Option<f64>,
    #[arg(long = "krr-sigma")]
    krr_sigma: Option<f64>,
    #[arg(long = "krr-ridge")]
    krr_ridge: Option<f64>,
    #[arg(long = "mlp-hidden", value_delimiter = ',')]
    mlp_hidden: Vec<usize>,
    #[arg(long = "mlp-learning-rate")]
    mlp_learning_rate: Option<f64>,
    #[arg(long = "spline-knots")]
    spline_knots: Option<usize>,
    #[arg(long = "spline-range", value_delimiter = ',', num_args = 2)]
    spline_range: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    Analyze,
    Scan,
    Simulate,
    Coverage,
    OracleCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureGroup {
    pub name: String,
    pub columns: Vec<String>,
}

/// The fully resolved run configuration, echoed next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandName,
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub schema: Option<ColumnSchema>,
    #[serde(default)]
    pub paired: bool,
    #[serde(default)]
    pub exposure_groups: Vec<ExposureGroup>,
    #[serde(default)]
    pub scenario: Option<ScenarioId>,
    #[serde(default)]
    pub reps: Option<usize>,
    #[serde(default)]
    pub instances: Option<usize>,
    #[serde(default)]
    pub rows: Option<usize>,
    pub spec: ProblemSpec,
    pub seed: u64,
    /// Invocation settings that do not affect results; not echoed.
    #[serde(skip)]
    pub jobs: Option<usize>,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub verbose: u8,
}

fn parse_enum<T: serde::de::DeserializeOwned>(what: &str, s: &str) -> Result<T> {
    serde_json::from_value(Value::String(s.to_string()))
        .map_err(|_| MimalError::Config(format!("unknown {what} '{s}'")))
}

fn exposure_learner(name: &str, kind: LossKind, current: &LearnerSpec) -> Result<LearnerSpec> {
    let mut spec = match name {
        "linear" => LearnerSpec::linear(Inputs::X, false),
        "lasso" => LearnerSpec::lasso(Inputs::X, None, false),
        "krr" => LearnerSpec::krr(Inputs::X, crate::learners::DEFAULT_KRR_SIGMA, None),
        "mlp" => {
            let out = if kind == LossKind::Logistic { Activation::Sigmoid } else { Activation::Identity };
            let hidden = if current.hyper.mlp_hidden.is_empty() { vec![6, 4] } else { current.hyper.mlp_hidden.clone() };
            LearnerSpec::mlp(Inputs::X, hidden, out, SIM3_INIT_SEED)
        }
        "spline" => LearnerSpec::linear(Inputs::X, false).with_basis(Basis::CubicBspline {
            num_knots: 20,
            range: [-2.0, 2.0],
        }),
        other => return Err(MimalError::Config(format!("unknown exposure learner '{other}'"))),
    };
    if spec.family == current.family && spec.basis == current.basis {
        spec.hyper = current.hyper.clone();
    }
    Ok(spec)
}

fn adjustment_learner(name: &str) -> Result<LearnerSpec> {
    Ok(match name {
        "linear" => LearnerSpec::linear(Inputs::Z, true),
        "intercept" => LearnerSpec::intercept_only(),
        "none" => LearnerSpec::linear(Inputs::Z, false),
        "lasso" => LearnerSpec::lasso(Inputs::Z, None, true),
        "krr" => LearnerSpec::krr(Inputs::Z, crate::learners::DEFAULT_KRR_SIGMA, None),
        other => return Err(MimalError::Config(format!("unknown adjustment learner '{other}'"))),
    })
}

impl SpecArgs {
    /// Applies the flags that were given on top of `base`.
    fn apply(&self, mut spec: ProblemSpec) -> Result<ProblemSpec> {
        if let Some(s) = &self.loss_kind {
            spec.loss_kind = parse_enum("loss kind", s)?;
        }
        if let Some(s) = &self.learner_f {
            let f = exposure_learner(s, spec.loss_kind, &spec.learner_f)?;
            spec = spec.with_exposure_model(f);
        }
        if let Some(s) = &self.learner_g {
            spec = spec.with_adjustment_model(adjustment_learner(s)?);
        }
        let h = &mut spec.learner_f.hyper;
        if self.lasso_penalty.is_some() {
            h.lasso_penalty = self.lasso_penalty;
        }
        if self.krr_sigma.is_some() {
            h.krr_sigma = self.krr_sigma;
        }
        if self.krr_ridge.is_some() {
            h.krr_ridge = self.krr_ridge;
        }
        if !self.mlp_hidden.is_empty() {
            h.mlp_hidden = self.mlp_hidden.clone();
        }
        if self.mlp_learning_rate.is_some() {
            h.mlp_learning_rate = self.mlp_learning_rate;
        }
        if self.spline_knots.is_some() || !self.spline_range.is_empty() {
            let (mut knots, mut range) = match spec.learner_f.basis {
                Basis::CubicBspline { num_knots, range } => (num_knots, range),
                _ => return Err(MimalError::Config("spline options need --learner-f spline".into())),
            };
            if let Some(k) = self.spline_knots {
                knots = k;
            }
            if let [lo, hi] = self.spline_range[..] {
                range = [lo, hi];
            }
            spec.learner_f.basis = Basis::CubicBspline { num_knots: knots, range };
        }
        if let Some(k) = self.k {
            spec.k = k;
        }
        if let Some(d) = self.ridge_delta {
            spec.ridge_delta = d;
        }
        if let Some(t) = self.inflation_tau {
            spec.inflation_tau = t;
        }
        if let Some(a) = self.alpha {
            spec.alpha = a;
        }
        if let Some(c) = self.cross_fit {
            spec.cross_fit = c;
        }
        if self.no_cross_fit {
            spec.cross_fit = false;
        }
        if let Some(t) = self.max_iter {
            spec.optimizer.max_iter = t;
        }
        if let Some(t) = self.grad_tol {
            spec.optimizer.grad_tol = t;
        }
        Ok(spec)
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| MimalError::Config(format!("{SEED_ENV}='{v}' is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Overlays a JSON file on `cfg`. Files carrying `command` or `spec` are run
/// configurations; anything else is read as problem-specification entries.
fn apply_config_file(cfg: RunConfig, path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| MimalError::io(path.display().to_string(), e))?;
    let file: Value = serde_json::from_str(&text)
        .map_err(|e| MimalError::Config(format!("{}: {e}", path.display())))?;
    if !file.is_object() {
        return Err(MimalError::Config(format!("{}: expected a JSON object", path.display())));
    }
    let command = cfg.command;
    let mut value = serde_json::to_value(&cfg).map_err(|e| MimalError::Config(e.to_string()))?;
    let is_run = file.get("command").is_some() || file.get("spec").is_some();
    if is_run {
        merge(&mut value, file);
    } else {
        merge(&mut value["spec"], file);
    }
    let mut merged: RunConfig =
        serde_json::from_value(value).map_err(|e| MimalError::Config(format!("{}: {e}", path.display())))?;
    merged.jobs = cfg.jobs;
    merged.out = cfg.out.clone();
    merged.verbose = cfg.verbose;
    if merged.command != command {
        return Err(MimalError::Config(format!(
            "{} is a configuration for `{}`",
            path.display(),
            serde_json::to_value(merged.command).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
        )));
    }
    Ok(merged)
}

fn data_schema(d: &DataArgs) -> Option<ColumnSchema> {
    let any = d.outcome.is_some() || d.source.is_some() || !d.exposure.is_empty() || !d.adjust.is_empty() || d.time.is_some();
    any.then(|| ColumnSchema {
        source: d.source.clone().unwrap_or_else(|| "source".into()),
        outcome: d.outcome.clone().unwrap_or_else(|| "y".into()),
        exposure: d.exposure.clone(),
        adjust: d.adjust.clone(),
        time: d.time.clone(),
    })
}

fn parse_group(s: &str) -> Result<ExposureGroup> {
    let (name, cols) = s
        .split_once(':')
        .ok_or_else(|| MimalError::Config(format!("exposure group '{s}' is not of the form name:col1,col2")))?;
    let columns: Vec<String> = cols.split(',').map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect();
    if name.trim().is_empty() || columns.is_empty() {
        return Err(MimalError::Config(format!("exposure group '{s}' needs a name and at least one column")));
    }
    Ok(ExposureGroup {
        name: name.trim().to_string(),
        columns,
    })
}

fn build_config(cmd: Cmd) -> Result<(RunConfig, Option<PathBuf>)> {
    let base = ProblemSpec::linear(LossKind::SquaredError);
    let scenario_spec = |id: Option<ScenarioId>, s: &SpecArgs| -> Result<ProblemSpec> {
        match id {
            Some(id) => s.apply(SimulationScenario::new(id).problem()),
            None => s.apply(base.clone()),
        }
    };
    let empty = RunConfig {
        command: CommandName::Analyze,
        data: None,
        schema: None,
        paired: false,
        exposure_groups: vec![],
        scenario: None,
        reps: None,
        instances: None,
        rows: None,
        spec: base.clone(),
        seed: 0,
        jobs: None,
        out: None,
        verbose: 0,
    };
    let (cfg, common) = match cmd {
        Cmd::Analyze { data, spec, common } => (
            RunConfig {
                command: CommandName::Analyze,
                schema: data_schema(&data),
                data: data.data,
                paired: data.paired,
                spec: spec.apply(base.clone())?,
                ..empty
            },
            common,
        ),
        Cmd::Scan {
            data,
            exposure_group,
            spec,
            common,
        } => (
            RunConfig {
                command: CommandName::Scan,
                schema: data_schema(&data),
                data: data.data,
                paired: data.paired,
                exposure_groups: exposure_group.iter().map(|g| parse_group(g)).collect::<Result<_>>()?,
                spec: spec.apply(base.clone())?,
                ..empty
            },
            common,
        ),
        Cmd::Simulate { scenario, spec, common } => (
            RunConfig {
                command: CommandName::Simulate,
                scenario,
                spec: scenario_spec(scenario, &spec)?,
                ..empty
            },
            common,
        ),
        Cmd::Coverage {
            scenario,
            reps,
            spec,
            common,
        } => (
            RunConfig {
                command: CommandName::Coverage,
                scenario,
                reps: Some(reps.unwrap_or(DEFAULT_REPS)),
                spec: scenario_spec(scenario, &spec)?,
                ..empty
            },
            common,
        ),
        Cmd::OracleCheck { instances, rows, common } => (
            RunConfig {
                command: CommandName::OracleCheck,
                instances: Some(instances.unwrap_or(DEFAULT_INSTANCES)),
                rows: Some(rows.unwrap_or(DEFAULT_INSTANCE_ROWS)),
                ..empty
            },
            common,
        ),
    };
    let cfg = RunConfig {
        seed: resolve_seed(common.seed)?,
        jobs: common.jobs,
        out: common.out,
        verbose: common.verbose,
        ..cfg
    };
    Ok((cfg, common.config))
}

/// Reads the CSV header and fills unspecified schema entries: adjustment
/// columns default to every column not otherwise bound, and a scan uses all
/// predictors.
fn resolve_schema(cfg: &mut RunConfig) -> Result<(PathBuf, ColumnSchema)> {
    let path = cfg
        .data
        .clone()
        .ok_or_else(|| MimalError::Config("--data is required".into()))?;
    let mut schema = cfg.schema.clone().unwrap_or(ColumnSchema {
        source: "source".into(),
        outcome: "y".into(),
        ..Default::default()
    });
    if cfg.paired && schema.time.is_none() {
        return Err(MimalError::Config("--paired needs a --time column to align rows".into()));
    }
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => MimalError::io(path.display().to_string(), io),
        other => MimalError::Parse {
            row: 1,
            message: format!("{other:?}"),
        },
    })?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| MimalError::Parse {
            row: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let bound = |c: &String, s: &ColumnSchema| {
        *c == s.source || *c == s.outcome || Some(c) == s.time.as_ref() || s.exposure.contains(c) || s.adjust.contains(c)
    };
    match cfg.command {
        CommandName::Scan => {
            if schema.exposure.is_empty() && schema.adjust.is_empty() {
                schema.exposure = header.iter().filter(|c| !bound(c, &schema)).cloned().collect();
            } else {
                let mut all = schema.exposure.clone();
                all.append(&mut schema.adjust);
                schema.exposure = all;
            }
        }
        _ => {
            if schema.exposure.is_empty() {
                return Err(MimalError::Config("--exposure is required".into()));
            }
            if schema.adjust.is_empty() {
                schema.adjust = header.iter().filter(|c| !bound(c, &schema)).cloned().collect();
            }
        }
    }
    cfg.schema = Some(schema.clone());
    Ok((path, schema))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| MimalError::Input(format!("serialization: {e}")))?;
    std::fs::write(path, text + "\n").map_err(|e| MimalError::io(path.display().to_string(), e))
}

fn out_file(out: &Path, name: &str) -> Result<std::io::BufWriter<std::fs::File>> {
    let path = out.join(name);
    std::fs::File::create(&path)
        .map(std::io::BufWriter::new)
        .map_err(|e| MimalError::io(path.display().to_string(), e))
}

fn prepare_out(cfg: &RunConfig) -> Result<Option<PathBuf>> {
    let Some(out) = &cfg.out else { return Ok(None) };
    std::fs::create_dir_all(out).map_err(|e| MimalError::io(out.display().to_string(), e))?;
    write_json(&out.join(CONFIG_ECHO), cfg)?;
    Ok(Some(out.clone()))
}

fn print_json<T: Serialize, W: Write>(w: &mut W, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| MimalError::Input(format!("serialization: {e}")))?;
    writeln!(w, "{text}").map_err(|e| MimalError::io("stdout", e))
}

fn scenario_of(cfg: &RunConfig) -> Result<SimulationScenario> {
    cfg.scenario
        .map(SimulationScenario::new)
        .ok_or_else(|| MimalError::Config("--scenario is required".into()))
}

#[derive(Serialize)]
struct ScanRow<'a> {
    target: &'a str,
    columns: &'a [String],
    estimate: Option<crate::inference::EstimateSummary>,
    source_estimates: Vec<Option<crate::inference::EstimateSummary>>,
    errors: &'a [String],
}

fn scan_table<W: Write>(w: &mut W, entries: &[LocoEntry]) -> std::io::Result<()> {
    writeln!(w, "{:<16} {:>12} {:>12} {:>12}   per-source i_hat", "target", "i_hat", "ci_lo", "ci_hi")?;
    for e in entries {
        let per: Vec<String> = e
            .source_estimates
            .iter()
            .map(|s| s.as_ref().map_or("-".into(), |s| format!("{:.4}", s.i_hat)))
            .collect();
        match &e.estimate {
            Some(est) => writeln!(
                w,
                "{:<16} {:>12.5} {:>12.5} {:>12.5}   {}",
                e.target,
                est.i_hat,
                est.ci_lo,
                est.ci_hi,
                per.join(" ")
            )?,
            None => writeln!(w, "{:<16} {:>12} {:>12} {:>12}   {}", e.target, "failed", "-", "-", per.join(" "))?,
        }
    }
    Ok(())
}

/// Executes a resolved configuration, writing human output to `stdout`.
pub fn execute<W: Write>(mut cfg: RunConfig, stdout: &mut W) -> Result<()> {
    let start = Instant::now();
    let loaded: Option<MultiSourceDataset> = match cfg.command {
        CommandName::Analyze | CommandName::Scan => {
            let (path, schema) = resolve_schema(&mut cfg)?;
            let data = load_multisource_csv(&path, &schema)?;
            if cfg.paired && !data.paired {
                return Err(MimalError::Pairing("the data do not form a paired design".into()));
            }
            Some(data)
        }
        _ => None,
    };
    cfg.spec.validate()?;
    let out = prepare_out(&cfg)?;
    let io = |e: std::io::Error| MimalError::io("stdout", e);
    match cfg.command {
        CommandName::Analyze => {
            let data = loaded.expect("loaded above");
            let est = estimate_importance(&data, &cfg.spec, cfg.seed)?;
            print_json(stdout, &est.summary())?;
            if let Some(out) = out {
                write_json(&out.join("report.json"), &est.summary())?;
                write_estimates_csv(std::slice::from_ref(&est), out_file(&out, "estimates.csv")?)?;
            }
        }
        CommandName::Scan => {
            let data = loaded.expect("loaded above");
            let groups: Vec<(String, Vec<String>)> =
                cfg.exposure_groups.iter().map(|g| (g.name.clone(), g.columns.clone())).collect();
            let blocks = exposure_blocks(&data, &groups)?;
            let entries = loco_scan(&data, &blocks, &cfg.spec, cfg.seed)?;
            scan_table(stdout, &entries).map_err(io)?;
            for e in &entries {
                for msg in &e.errors {
                    writeln!(stdout, "warning: {msg}").map_err(io)?;
                }
            }
            if let Some(out) = out {
                let rows: Vec<ScanRow> = entries
                    .iter()
                    .map(|e| ScanRow {
                        target: &e.target,
                        columns: &e.columns,
                        estimate: e.estimate.as_ref().map(ImportanceEstimate::summary),
                        source_estimates: e.source_estimates.iter().map(|s| s.as_ref().map(ImportanceEstimate::summary)).collect(),
                        errors: &e.errors,
                    })
                    .collect();
                write_json(&out.join("report.json"), &rows)?;
                let all: Vec<ImportanceEstimate> = entries
                    .iter()
                    .flat_map(|e| e.estimate.iter().chain(e.source_estimates.iter().flatten()))
                    .cloned()
                    .collect();
                write_estimates_csv(&all, out_file(&out, "scan.csv")?)?;
            }
        }
        CommandName::Simulate => {
            let scenario = scenario_of(&cfg)?;
            let data = scenario.generate(cfg.seed)?;
            let est = estimate_importance(&data, &cfg.spec, derive_seed(cfg.seed, "estimate", 0))?;
            print_json(stdout, &est.summary())?;
            if let Some(out) = out {
                write_multisource_csv(&data, out_file(&out, "data.csv")?)?;
                write_json(&out.join("report.json"), &est.summary())?;
            }
        }
        CommandName::Coverage => {
            let scenario = scenario_of(&cfg)?;
            let reps = cfg.reps.unwrap_or(DEFAULT_REPS);
            let report = run_replications(&scenario, reps, &cfg.spec, cfg.seed)?;
            writeln!(
                stdout,
                "{}: coverage {:.3} over {} replications ({} failed), truth {:.5}, mean i_hat {:.5}, sd {:.5}, mean q_hat {:.4?}",
                scenario.id,
                report.coverage,
                report.replications,
                report.failures,
                report.truth.value,
                report.i_hat_mean.unwrap_or(f64::NAN),
                report.i_hat_sd.unwrap_or(f64::NAN),
                report.mean_q_hat
            )
            .map_err(io)?;
            if let Some(out) = out {
                emit_report(&report, ReportFormat::Json, out.join("report.json"))?;
                emit_report(&report, ReportFormat::Csv, out.join("replications.csv"))?;
            }
        }
        CommandName::OracleCheck => {
            let n = cfg.instances.unwrap_or(DEFAULT_INSTANCES);
            let rows = cfg.rows.unwrap_or(DEFAULT_INSTANCE_ROWS);
            let mut checks: Vec<OracleCheck> = Vec::with_capacity(n);
            for i in 0..n {
                let seed = derive_seed(cfg.seed, "oracle-check", i as u64);
                let data = random_linear_l2_instance(seed, rows)?;
                let c = oracle_equivalence(&data, seed)?;
                writeln!(
                    stdout,
                    "instance {i:>3} M={} d={} value rel err {:.2e} q linf {:.2e}{} {}",
                    c.num_sources,
                    c.dim,
                    c.value_rel_err,
                    c.q_linf,
                    if c.flat { " (flat)" } else { "" },
                    if c.passed { "PASS" } else { "FAIL" }
                )
                .map_err(io)?;
                checks.push(c);
            }
            if let Some(out) = out {
                write_json(&out.join("report.json"), &checks)?;
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(MimalError::Oracle(format!("{failed} of {n} instances disagree with the oracle")));
            }
        }
    }
    if cfg.verbose > 0 {
        eprintln!("finished in {:.2}s", start.elapsed().as_secs_f64());
    }
    Ok(())
}

fn run_config(cfg: RunConfig, stdout: &mut impl Write) -> Result<()> {
    match cfg.jobs {
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j.max(1))
                .build()
                .map_err(|e| MimalError::Config(format!("--jobs: {e}")))?;
            let mut buf = Vec::new();
            let result = pool.install(|| execute(cfg, &mut buf));
            stdout.write_all(&buf).map_err(|e| MimalError::io("stdout", e))?;
            result
        }
        None => execute(cfg, stdout),
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Errors are reported on `stderr` as one
/// `error[kind]: message` line.
pub fn run<I, T>(argv: I, stdout: &mut impl Write, stderr: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = write!(stdout, "{}", e.render());
                return 0;
            }
            let text = e.render().to_string();
            let line = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            let _ = writeln!(stderr, "error[usage]: {line}");
            return 1;
        }
    };
    let result = build_config(cli.command).and_then(|(cfg, file)| {
        let cfg = match file {
            Some(p) => apply_config_file(cfg, &p)?,
            None => cfg,
        };
        run_config(cfg, stdout)
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            let _ = writeln!(stderr, "error[{}]: {msg}", e.kind());
            e.exit_code()
        }
    }
}
