//! Simulation scenarios and replication studies.

mod report;
mod scenario;

pub use report::{
    cached_truth, emit_report, resolve_truth, run_replications, run_replications_with_truth, write_report,
    CoverageReport, ReplicationOutcome, ReplicationRecord, ReportFormat, RuntimeStats, Truth, TruthSource,
};
pub use scenario::{OutcomeLaw, ScenarioId, ScenarioTruth, SimulationScenario, SIM3_INIT_SEED, SIM3_TRUTH_SEED};
