//! One full-sample saddle solve on the lasso scenario: the adversarial
//! weights, the per-source rewards and the minimax gap at the solution.

use mimal::oracle::{fit_full_sample, minimax_gap_audit};
use mimal::sim::{ScenarioId, SimulationScenario};

fn main() -> mimal::Result<()> {
    let scenario = SimulationScenario::new(ScenarioId::Sim1Lasso);
    let data = scenario.generate(5)?;
    let spec = scenario.problem();
    let (baselines, saddle) = fit_full_sample(&data, &spec, 5)?;

    println!("q = {:.4?}", saddle.q_hat.as_slice());
    println!("per-source rewards = {:.3?}", saddle.per_source_reward);
    println!(
        "reward {:.3} after {} iterations (converged: {})",
        saddle.reward_at_solution, saddle.iterations_used, saddle.converged
    );
    let gap = minimax_gap_audit(&saddle, &data, spec.loss_kind, &baselines)?;
    println!("minimax gap {gap:.2e}");
    let theta = &saddle.bundle.f.params;
    let nonzero = theta.iter().filter(|v| v.abs() > 1e-8).count();
    println!("{nonzero} nonzero exposure coefficients, the first five {:.3?}", &theta[..5]);
    Ok(())
}
