//! Time-aligned sources (for example monitoring stations observed at the same
//! hours) use the paired standard error, which accounts for the covariance of
//! the reward differences across sources.

use mimal::data::{read_multisource_csv, ColumnSchema};
use mimal::inference::{exposure_blocks, loco_scan};
use mimal::problem::ProblemSpec;
use mimal::rewards::LossKind;
use mimal::rng::rng_from_seed;
use rand_distr::{Distribution, Normal};

fn main() -> mimal::Result<()> {
    // three stations sharing a weather signal, 300 common hours
    let mut rng = rng_from_seed(8);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let mut csv = String::from("station,hour,pm,temp,dewp,wind_n,wind_e\n");
    let hours: Vec<[f64; 4]> = (0..300).map(|_| std::array::from_fn(|_| unit.sample(&mut rng))).collect();
    for (s, slope) in [("north", 1.0), ("centre", 0.6), ("south", 0.3)].iter().copied() {
        for (h, w) in hours.iter().enumerate() {
            let pm = slope * w[0] - 0.5 * w[1] + 0.4 * w[2] + 0.2 * w[3] + 0.5 * unit.sample(&mut rng);
            csv.push_str(&format!("{s},{h},{pm},{},{},{},{}\n", w[0], w[1], w[2], w[3]));
        }
    }
    let schema = ColumnSchema {
        source: "station".into(),
        outcome: "pm".into(),
        exposure: vec!["temp".into(), "dewp".into(), "wind_n".into(), "wind_e".into()],
        adjust: vec![],
        time: Some("hour".into()),
    };
    let data = read_multisource_csv(csv.as_bytes(), &schema)?;

    let groups = vec![("wind".to_string(), vec!["wind_n".to_string(), "wind_e".to_string()])];
    let blocks = exposure_blocks(&data, &groups)?;
    let mut spec = ProblemSpec::linear(LossKind::SquaredError);
    spec.ridge_delta = 1e-3;
    for entry in loco_scan(&data, &blocks, &spec, 8)? {
        if let Some(e) = entry.estimate {
            println!("{:<6} {:?}: I = {:.4} [{:.4}, {:.4}]", e.target, e.design, e.i_hat, e.ci_lo, e.ci_hi);
        }
    }
    Ok(())
}
