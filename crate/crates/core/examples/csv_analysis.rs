//! Round trip through the multi-source CSV format: write a simulated kernel
//! ridge dataset, load it back with an explicit column schema, analyze it and
//! print the estimates table.

use mimal::data::{load_multisource_csv, write_multisource_csv, ColumnSchema};
use mimal::inference::{estimate_importance, write_estimates_csv};
use mimal::sim::{ScenarioId, SimulationScenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = SimulationScenario::new(ScenarioId::Sim2Krr);
    let path = std::env::temp_dir().join("mimal_csv_analysis.csv");
    let file = std::fs::File::create(&path)?;
    write_multisource_csv(&scenario.generate(11)?, file)?;

    let schema = ColumnSchema {
        source: "source".into(),
        outcome: "y".into(),
        exposure: vec!["x1".into(), "x2".into(), "x3".into()],
        adjust: vec!["z1".into(), "z2".into()],
        time: None,
    };
    let data = load_multisource_csv(&path, &schema)?;
    println!("loaded {} sources with sizes {:?} from {}", data.num_sources(), data.sizes(), path.display());

    let estimate = estimate_importance(&data, &scenario.problem(), 11)?;
    write_estimates_csv(&[estimate], std::io::stdout().lock())?;
    Ok(())
}
