use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ScenarioId, SimulationScenario};
use crate::error::{MimalError, Result};
use crate::inference::{estimate_importance, inflate_variance, normal_quantile};
use crate::oracle::{monte_carlo_truth, MonteCarloTruth, MIN_TRUTH_ROWS};
use crate::problem::ProblemSpec;
use crate::rng::{derive_seed, replication_seed};

/// Where a scenario's target value comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthSource {
    Published,
    /// Stored large-sample Monte Carlo value shipped with the crate.
    Cached { mc_se: f64, n_large: usize },
    /// Large-sample Monte Carlo value computed for this run.
    Computed { mc_se: f64, n_large: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub value: f64,
    pub source: TruthSource,
}

const SIM3_TRUTH_JSON: &str = include_str!("../../data/sim3_truth.json");

/// The stored large-sample truth, for scenarios that ship one.
pub fn cached_truth(id: ScenarioId) -> Option<MonteCarloTruth> {
    match id {
        ScenarioId::Sim3Mlp => serde_json::from_str(SIM3_TRUTH_JSON).ok(),
        _ => None,
    }
}

/// Published value if there is one, then the cached Monte Carlo value, and
/// otherwise a fresh [`monte_carlo_truth`] at the minimum large-sample size.
pub fn resolve_truth(scenario: &SimulationScenario, seed: u64) -> Result<Truth> {
    if let Some(v) = scenario.truth.i_star {
        return Ok(Truth {
            value: v,
            source: TruthSource::Published,
        });
    }
    if let Some(t) = cached_truth(scenario.id) {
        return Ok(Truth {
            value: t.estimate,
            source: TruthSource::Cached {
                mc_se: t.mc_se,
                n_large: t.n_large,
            },
        });
    }
    let t = monte_carlo_truth(scenario, MIN_TRUTH_ROWS, &scenario.truth_problem(), derive_seed(seed, "truth", 0))?;
    Ok(Truth {
        value: t.estimate,
        source: TruthSource::Computed {
            mc_se: t.mc_se,
            n_large: t.n_large,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub i_hat: f64,
    pub se: f64,
    pub se_inflated: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub covered: bool,
    pub converged: bool,
    /// Fold-averaged `q̂`.
    pub q_hat: Vec<f64>,
    pub n_min: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub seed: u64,
    pub outcome: Option<ReplicationOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub total_secs: f64,
    pub mean_secs: f64,
    pub max_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub scenario: ScenarioId,
    pub replications: usize,
    pub master_seed: u64,
    pub truth: Truth,
    pub alpha: f64,
    pub tau: f64,
    /// Fraction of successful replications whose interval contains the truth.
    pub coverage: f64,
    pub failures: usize,
    pub convergence_rate: f64,
    pub i_hat_mean: Option<f64>,
    pub i_hat_sd: Option<f64>,
    pub mean_se: Option<f64>,
    pub mean_q_hat: Vec<f64>,
    /// Sample skewness of `(Î - truth) / ŜE`.
    pub standardized_skewness: Option<f64>,
    /// Sample excess kurtosis of `(Î - truth) / ŜE`.
    pub standardized_excess_kurtosis: Option<f64>,
    pub records: Vec<ReplicationRecord>,
    pub runtime: RuntimeStats,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn sd(v: &[f64]) -> Option<f64> {
    let m = mean(v)?;
    (v.len() > 1).then(|| (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

fn central_moment(v: &[f64], m: f64, k: i32) -> f64 {
    v.iter().map(|x| (x - m).powi(k)).sum::<f64>() / v.len() as f64
}

impl CoverageReport {
    /// Aggregates replication records.
    pub fn assemble(
        scenario: ScenarioId,
        master_seed: u64,
        truth: Truth,
        spec: &ProblemSpec,
        num_sources: usize,
        records: Vec<ReplicationRecord>,
    ) -> Self {
        let ok: Vec<&ReplicationOutcome> = records.iter().filter_map(|r| r.outcome.as_ref()).collect();
        let i_hats: Vec<f64> = ok.iter().map(|o| o.i_hat).collect();
        let ses: Vec<f64> = ok.iter().map(|o| o.se).collect();
        let frac = |pred: &dyn Fn(&ReplicationOutcome) -> bool| {
            if ok.is_empty() {
                0.0
            } else {
                ok.iter().filter(|o| pred(o)).count() as f64 / ok.len() as f64
            }
        };
        let mut mean_q_hat = vec![0.0; num_sources];
        for o in &ok {
            for (acc, v) in mean_q_hat.iter_mut().zip(&o.q_hat) {
                *acc += v / ok.len() as f64;
            }
        }
        let z: Vec<f64> = ok
            .iter()
            .filter(|o| o.se > 0.0)
            .map(|o| (o.i_hat - truth.value) / o.se)
            .collect();
        let (skew, kurt) = match (mean(&z), z.len() > 2) {
            (Some(m), true) => {
                let m2 = central_moment(&z, m, 2);
                if m2 > 0.0 {
                    (
                        Some(central_moment(&z, m, 3) / m2.powf(1.5)),
                        Some(central_moment(&z, m, 4) / (m2 * m2) - 3.0),
                    )
                } else {
                    (None, None)
                }
            }
            _ => (None, None),
        };
        let secs: Vec<f64> = records.iter().map(|r| r.seconds).collect();
        CoverageReport {
            scenario,
            replications: records.len(),
            master_seed,
            coverage: frac(&|o| o.covered),
            failures: records.len() - ok.len(),
            convergence_rate: frac(&|o| o.converged),
            i_hat_mean: mean(&i_hats),
            i_hat_sd: sd(&i_hats),
            mean_se: mean(&ses),
            mean_q_hat,
            standardized_skewness: skew,
            standardized_excess_kurtosis: kurt,
            alpha: spec.alpha,
            tau: spec.inflation_tau,
            truth,
            runtime: RuntimeStats {
                total_secs: secs.iter().sum(),
                mean_secs: mean(&secs).unwrap_or(0.0),
                max_secs: secs.iter().copied().fold(0.0, f64::max),
            },
            records,
        }
    }

    /// Coverage recomputed with a different inflation constant.
    pub fn coverage_with_tau(&self, tau: f64) -> Result<f64> {
        let z = normal_quantile(1.0 - self.alpha / 2.0);
        let mut hit = 0usize;
        let mut total = 0usize;
        for o in self.records.iter().filter_map(|r| r.outcome.as_ref()) {
            let se = inflate_variance(o.se, tau, o.n_min)?;
            total += 1;
            if (o.i_hat - self.truth.value).abs() <= z * se {
                hit += 1;
            }
        }
        Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
    }

    /// Monte Carlo standard error of the replication mean of `Î`.
    pub fn i_hat_mc_se(&self) -> Option<f64> {
        let ok = self.records.iter().filter(|r| r.outcome.is_some()).count();
        self.i_hat_sd.map(|s| s / (ok as f64).sqrt())
    }
}

/// Runs `reps` independent replications of `scenario` under `spec` with
/// truth resolved by [`resolve_truth`].
pub fn run_replications(
    scenario: &SimulationScenario,
    reps: usize,
    spec: &ProblemSpec,
    master_seed: u64,
) -> Result<CoverageReport> {
    let truth = resolve_truth(scenario, master_seed)?;
    run_replications_with_truth(scenario, reps, spec, truth, master_seed)
}

/// Replication `r` draws its data from `replication_seed(master_seed, r)`;
/// failures are recorded in the report, not raised.
pub fn run_replications_with_truth(
    scenario: &SimulationScenario,
    reps: usize,
    spec: &ProblemSpec,
    truth: Truth,
    master_seed: u64,
) -> Result<CoverageReport> {
    if reps == 0 {
        return Err(MimalError::Config("at least one replication is required".into()));
    }
    spec.validate()?;
    let z = normal_quantile(1.0 - spec.alpha / 2.0);
    let records: Vec<ReplicationRecord> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let seed = replication_seed(master_seed, r as u64);
            let start = Instant::now();
            let result = scenario
                .generate(seed)
                .and_then(|data| estimate_importance(&data, spec, derive_seed(seed, "estimate", 0)));
            let seconds = start.elapsed().as_secs_f64();
            match result {
                Ok(e) => ReplicationRecord {
                    replication: r,
                    seed,
                    outcome: Some(ReplicationOutcome {
                        covered: (e.i_hat - truth.value).abs() <= z * e.se_inflated,
                        converged: e.converged(),
                        q_hat: e.mean_q_hat(),
                        i_hat: e.i_hat,
                        se: e.se,
                        se_inflated: e.se_inflated,
                        ci_lo: e.ci_lo,
                        ci_hi: e.ci_hi,
                        n_min: e.n_min,
                    }),
                    error: None,
                    seconds,
                },
                Err(e) => ReplicationRecord {
                    replication: r,
                    seed,
                    outcome: None,
                    error: Some(format!("error[{}]: {e}", e.kind())),
                    seconds,
                },
            }
        })
        .collect();
    Ok(CoverageReport::assemble(scenario.id, master_seed, truth, spec, scenario.num_sources, records))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = MimalError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(MimalError::Config(format!("unknown report format '{other}' (json or csv)"))),
        }
    }
}

/// JSON: the whole report. CSV: one row per replication.
pub fn write_report<W: Write>(report: &CoverageReport, format: ReportFormat, writer: W) -> Result<()> {
    match format {
        ReportFormat::Json => serde_json::to_writer_pretty(writer, report)
            .map_err(|e| MimalError::Input(format!("report serialization: {e}"))),
        ReportFormat::Csv => write_replications_csv(report, writer),
    }
}

pub fn emit_report(report: &CoverageReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| MimalError::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    write_report(report, format, &mut w)?;
    w.flush().map_err(|e| MimalError::io(path.display().to_string(), e))
}

fn write_replications_csv<W: Write>(report: &CoverageReport, writer: W) -> Result<()> {
    let m = report.mean_q_hat.len();
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| MimalError::Input(format!("csv export: {e}"));
    let mut header: Vec<String> = ["replication", "seed", "i_hat", "se", "se_inflated", "ci_lo", "ci_hi", "covered", "converged"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=m).map(|j| format!("q_{j}")));
    header.push("error".into());
    w.write_record(&header).map_err(err)?;
    for r in &report.records {
        let mut row = vec![r.replication.to_string(), r.seed.to_string()];
        match &r.outcome {
            Some(o) => {
                row.extend([o.i_hat, o.se, o.se_inflated, o.ci_lo, o.ci_hi].iter().map(|v| format!("{v:?}")));
                row.push(o.covered.to_string());
                row.push(o.converged.to_string());
                row.extend(o.q_hat.iter().map(|v| format!("{v:?}")));
            }
            None => row.extend(std::iter::repeat_n(String::new(), 7 + m)),
        }
        row.push(r.error.clone().unwrap_or_default());
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| MimalError::io("csv export", e))
}
