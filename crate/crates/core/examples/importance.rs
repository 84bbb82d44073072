//! Cross-fitted importance of the exposure block on a simulated logistic
//! dataset, pooled and per source.
//!
//! Usage: `cargo run --release --example importance -- [seed]`

use mimal::inference::{estimate_importance, source_specific_importance};
use mimal::sim::{ScenarioId, SimulationScenario};

fn main() -> mimal::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let scenario = SimulationScenario::new(ScenarioId::Sim5LogisticGlm);
    let data = scenario.generate(seed)?;
    let spec = scenario.problem();

    let pooled = estimate_importance(&data, &spec, seed)?;
    println!(
        "{}: I = {:.4}, SE = {:.4}, 95% CI [{:.4}, {:.4}], mean q = {:.3?}",
        pooled.target,
        pooled.i_hat,
        pooled.se,
        pooled.ci_lo,
        pooled.ci_hi,
        pooled.mean_q_hat()
    );
    for m in 0..data.num_sources() {
        let e = source_specific_importance(&data, m, &spec, seed)?;
        println!("{}: I = {:.4} [{:.4}, {:.4}]", e.target, e.i_hat, e.ci_lo, e.ci_hi);
    }
    println!("{}", serde_json::to_string_pretty(&pooled.summary()).expect("summary serializes"));
    Ok(())
}
