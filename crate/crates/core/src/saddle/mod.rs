//! Two-timescale projected gradient descent-ascent for the maximin problem
//! `min_q max_{f,g} Σ_m q_m R_m(f, g_m) + δ‖q‖²`.

mod schedule;
mod simplex;
mod solver;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{MimalError, Result};
use crate::learners::ModelBundle;
use crate::rewards::RewardBreakdown;

pub use schedule::{OptimizerSchedule, StepRule, DEFAULT_STEP_OFFSET};
pub use simplex::{project_simplex, SimplexWeights};
pub use solver::solve_saddle;

/// Gradient of `R̂(q, ·) + δ‖q‖²` in `q`. The weight player descends along it.
pub fn q_ascent_direction(breakdown: &RewardBreakdown, q: &SimplexWeights, delta: f64) -> Vec<f64> {
    breakdown
        .per_source_reward
        .iter()
        .zip(q.as_slice())
        .map(|(r, qm)| r + 2.0 * delta * qm)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub iteration: usize,
    pub reward: f64,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectorySummary {
    /// q-optimality gaps over the final window of iterations.
    pub q_gaps: Vec<f64>,
    /// Learner stationarity residuals over the same window.
    pub param_residuals: Vec<f64>,
    /// Set when some `q̂_m` is positive but below 1e-4, i.e. the support of
    /// `q̂` may still be changing.
    pub small_weight: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Per-iteration records, kept only when the schedule asks for them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub records: Vec<TrajectoryRecord>,
}

impl TrajectorySummary {
    /// Writes `iteration,reward,q_1..q_M` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let m = self.records.first().map_or(0, |r| r.q.len());
        let io = |e| MimalError::io("trajectory", e);
        let header: Vec<String> = ["iteration".to_string(), "reward".to_string()]
            .into_iter()
            .chain((1..=m).map(|j| format!("q_{j}")))
            .collect();
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        for r in &self.records {
            let q: Vec<String> = r.q.iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{},{:?},{}", r.iteration, r.reward, q.join(",")).map_err(io)?;
        }
        Ok(())
    }
}

/// The outcome of one adversarial solve on a training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddlePoint {
    pub q_hat: SimplexWeights,
    pub bundle: ModelBundle,
    /// `R̂(q̂, f̂, ĝ; b̂) + δ‖q̂‖²` on the training rows.
    pub reward_at_solution: f64,
    /// Training-sample `R̂_m(f̂, ĝ_m)` at the solution.
    pub per_source_reward: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
    pub trajectory_summary: TrajectorySummary,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direction_examples() {
        let b = RewardBreakdown {
            per_source_reward: vec![2.0, 4.0],
            per_source_n: vec![1, 1],
        };
        let q = SimplexWeights::uniform(2);
        assert_eq!(q_ascent_direction(&b, &q, 0.0), vec![2.0, 4.0]);
        let q2 = SimplexWeights::new(vec![0.9, 0.1]).unwrap();
        assert_eq!(q_ascent_direction(&b, &q2, 0.0), vec![2.0, 4.0]);
        let zero = RewardBreakdown {
            per_source_reward: vec![0.0, 0.0],
            per_source_n: vec![1, 1],
        };
        let d = q_ascent_direction(&zero, &q, 0.001);
        assert!(d.iter().all(|v| (v - 0.001).abs() < 1e-18));
    }

    #[test]
    fn trajectory_csv_has_one_row_per_record() {
        let s = TrajectorySummary {
            records: vec![
                TrajectoryRecord {
                    iteration: 1,
                    reward: 0.5,
                    q: vec![0.5, 0.5],
                },
                TrajectoryRecord {
                    iteration: 2,
                    reward: 0.25,
                    q: vec![0.75, 0.25],
                },
            ],
            ..Default::default()
        };
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("iteration,reward,q_1,q_2\n"));
    }
}
