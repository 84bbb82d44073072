//! Leave-one-covariate-out scan: every predictor in turn is the exposure,
//! with the two adjustment columns merged into one block.

use mimal::inference::{exposure_blocks, loco_scan};
use mimal::problem::ProblemSpec;
use mimal::rewards::LossKind;
use mimal::sim::{ScenarioId, SimulationScenario};

fn main() -> mimal::Result<()> {
    let data = SimulationScenario::new(ScenarioId::Sim2Krr).generate(3)?;
    let groups = vec![("Z".to_string(), vec!["z1".to_string(), "z2".to_string()])];
    let blocks = exposure_blocks(&data, &groups)?;
    let spec = ProblemSpec::linear(LossKind::SquaredError);

    println!("{:<8} {:>9} {:>9} {:>9}   per-source", "target", "I", "ci_lo", "ci_hi");
    for entry in loco_scan(&data, &blocks, &spec, 3)? {
        let Some(e) = &entry.estimate else {
            println!("{:<8} failed: {:?}", entry.target, entry.errors);
            continue;
        };
        let per: Vec<String> = entry
            .source_estimates
            .iter()
            .map(|s| s.as_ref().map_or("-".into(), |s| format!("{:.3}", s.i_hat)))
            .collect();
        println!("{:<8} {:>9.4} {:>9.4} {:>9.4}   {}", entry.target, e.i_hat, e.ci_lo, e.ci_hi, per.join(" "));
    }
    Ok(())
}
