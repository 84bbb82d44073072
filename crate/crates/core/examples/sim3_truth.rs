//! Recomputes the cached large-sample truth for the MLP scenario.
//!
//! Usage: `cargo run --release --example sim3_truth -- [rows_per_source] [seed] [out.json]`

use mimal::oracle::monte_carlo_truth;
use mimal::sim::{ScenarioId, SimulationScenario, SIM3_TRUTH_SEED};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_large: usize = args.first().map_or(Ok(100_000), |s| s.parse())?;
    let seed: u64 = args.get(1).map_or(Ok(SIM3_TRUTH_SEED), |s| s.parse())?;
    let out = args.get(2).cloned().unwrap_or_else(|| "crates/core/data/sim3_truth.json".into());

    let scenario = SimulationScenario::new(ScenarioId::Sim3Mlp);
    let truth = monte_carlo_truth(&scenario, n_large, &scenario.truth_problem(), seed)?;
    println!(
        "I* = {:.5} (MC SE {:.5}), repetitions {:?}, converged {:?}",
        truth.estimate, truth.mc_se, truth.repetitions, truth.converged
    );
    std::fs::write(&out, serde_json::to_string_pretty(&truth)?)?;
    println!("wrote {out}");
    Ok(())
}
