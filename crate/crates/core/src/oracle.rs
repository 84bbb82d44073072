//! Independent reference computations: the closed-form squared-error saddle,
//! exhaustive simplex search, finite differences, equilibrium audits and
//! large-sample truths.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::data::{MultiSourceDataset, SourceDataset};
use crate::error::{MimalError, Result};
use crate::learners::{fit_baseline, FittedModel, Inputs, LearnerSpec};
use crate::problem::ProblemSpec;
use crate::rewards::{empirical_reward, LossKind};
use crate::rng::{derive_seed, rng_from_seed};
use crate::saddle::{project_simplex, solve_saddle, SaddlePoint, SimplexWeights};
use crate::sim::SimulationScenario;

/// Weight below which a source counts as inactive in equilibrium checks.
pub const ACTIVE_WEIGHT: f64 = 1e-6;
const POLISH_STEP: f64 = 1e-4;
const POLISH_RADIUS: i64 = 20;
const FLAT_TOL: f64 = 1e-8;

/// Per-source second moments `A_m = E[Φ Φᵀ]`, `c_m = E[Φ y]` of a shared design.
/// With `ℓ(y, u) = -(y - u)²` and a null baseline, the reward of `θ` on source
/// `m` is `2 θᵀ c_m - θᵀ A_m θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticReward {
    pub a: Vec<DMatrix<f64>>,
    pub c: Vec<DVector<f64>>,
}

impl QuadraticReward {
    pub fn new(a: Vec<DMatrix<f64>>, c: Vec<DVector<f64>>) -> Result<Self> {
        if a.is_empty() || a.len() != c.len() {
            return Err(MimalError::Shape(format!("{} moment matrices and {} cross moments", a.len(), c.len())));
        }
        let d = c[0].len();
        for (m, (am, cm)) in a.iter().zip(&c).enumerate() {
            if am.nrows() != d || am.ncols() != d || cm.len() != d {
                return Err(MimalError::Shape(format!("source {m}: moments are not {d}-dimensional")));
            }
            if (am - am.transpose()).amax() > 1e-10 * (1.0 + am.amax()) {
                return Err(MimalError::Input(format!("source {m}: A is not symmetric")));
            }
        }
        Ok(QuadraticReward { a, c })
    }

    /// Empirical moments `ΦᵀΦ / n`, `Φᵀ y / n` per source.
    pub fn from_rows(designs: &[DMatrix<f64>], outcomes: &[DVector<f64>]) -> Result<Self> {
        if designs.len() != outcomes.len() {
            return Err(MimalError::Shape("designs and outcomes differ in length".into()));
        }
        let mut a = Vec::with_capacity(designs.len());
        let mut c = Vec::with_capacity(designs.len());
        for (d, y) in designs.iter().zip(outcomes) {
            if d.nrows() != y.len() {
                return Err(MimalError::Shape(format!("{} design rows for {} outcomes", d.nrows(), y.len())));
            }
            let n = y.len() as f64;
            let g = d.tr_mul(d) / n;
            a.push((&g + g.transpose()) * 0.5);
            c.push(d.tr_mul(y) / n);
        }
        Self::new(a, c)
    }

    pub fn num_sources(&self) -> usize {
        self.a.len()
    }

    pub fn dim(&self) -> usize {
        self.c[0].len()
    }

    /// `θ*(q) = (Σ q_m A_m)⁻¹ Σ q_m c_m`.
    pub fn mixture_solution(&self, q: &[f64]) -> Result<DVector<f64>> {
        let d = self.dim();
        let mut a = DMatrix::zeros(d, d);
        let mut c = DVector::zeros(d);
        for (m, &w) in q.iter().enumerate() {
            a += &self.a[m] * w;
            c += &self.c[m] * w;
        }
        let chol = a
            .cholesky()
            .ok_or_else(|| MimalError::Oracle(format!("mixture moment matrix is singular at q = {q:?}")))?;
        Ok(chol.solve(&c))
    }

    pub fn reward(&self, m: usize, theta: &DVector<f64>) -> f64 {
        2.0 * theta.dot(&self.c[m]) - theta.dot(&(&self.a[m] * theta))
    }

    pub fn rewards(&self, theta: &DVector<f64>) -> Vec<f64> {
        (0..self.num_sources()).map(|m| self.reward(m, theta)).collect()
    }

    /// `λ*(q) = max_θ Σ q_m R_m(θ)`.
    pub fn outer_value(&self, q: &[f64]) -> Result<f64> {
        let theta = self.mixture_solution(q)?;
        Ok(q.iter().zip(self.rewards(&theta)).map(|(w, r)| w * r).sum())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub q: Vec<f64>,
    pub theta: Vec<f64>,
    pub value: f64,
    pub per_source_reward: Vec<f64>,
    /// The outer objective is flat around `q`, so the minimizing weights are
    /// not unique.
    pub flat: bool,
    /// Final projected-gradient residual of the outer problem.
    pub residual: f64,
}

/// Solves `min_q max_θ Σ q_m (2 θᵀ c_m - θᵀ A_m θ)` with exact inner solves.
///
/// The outer function `λ*(q)` is convex with gradient `R_m(θ*(q))`; it is
/// minimized by projected gradient with backtracking, then polished on a
/// local lattice of spacing 1e-4 when `M <= 3`.
pub fn linear_l2_saddle_oracle(moments: &QuadraticReward) -> Result<OracleSolution> {
    let m_src = moments.num_sources();
    let mut q = vec![1.0 / m_src as f64; m_src];
    let mut value = moments.outer_value(&q)?;
    let mut step = 1.0 / (1.0 + value.abs());
    let mut residual = f64::INFINITY;
    for _ in 0..50_000 {
        let grad = moments.rewards(&moments.mixture_solution(&q)?);
        let full = project_simplex(&q.iter().zip(&grad).map(|(a, g)| a - g * step).collect::<Vec<_>>())?;
        residual = full.as_slice().iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / step;
        if residual * step < 1e-15 {
            break;
        }
        // Armijo backtracking on the projection arc
        loop {
            let cand = project_simplex(&q.iter().zip(&grad).map(|(a, g)| a - g * step).collect::<Vec<_>>())?;
            let diff: Vec<f64> = cand.as_slice().iter().zip(&q).map(|(a, b)| a - b).collect();
            let slope: f64 = grad.iter().zip(&diff).map(|(g, d)| g * d).sum();
            let sq: f64 = diff.iter().map(|d| d * d).sum();
            let cv = moments.outer_value(cand.as_slice());
            match cv {
                Ok(v) if v <= value + slope + sq / (2.0 * step) + 1e-15 * (1.0 + value.abs()) => {
                    q = cand.into_vec();
                    value = v;
                    step *= 1.5;
                    break;
                }
                _ => {
                    step *= 0.5;
                    if step < 1e-300 {
                        return Err(MimalError::Oracle("outer line search underflow".into()));
                    }
                }
            }
        }
    }
    if m_src <= 3 {
        let (pq, pv) = polish(moments, &q)?;
        if pv < value {
            q = pq;
            value = pv;
        }
    }
    let flat = is_flat(moments, &q, value)?;
    let theta = moments.mixture_solution(&q)?;
    let per_source_reward = moments.rewards(&theta);
    Ok(OracleSolution {
        q,
        theta: theta.iter().copied().collect(),
        value,
        per_source_reward,
        flat,
        residual,
    })
}

fn polish(moments: &QuadraticReward, q: &[f64]) -> Result<(Vec<f64>, f64)> {
    let m_src = q.len();
    let mut best = (q.to_vec(), moments.outer_value(q)?);
    if m_src == 1 {
        return Ok(best);
    }
    let last = m_src - 1;
    let range = -POLISH_RADIUS..=POLISH_RADIUS;
    let second: Vec<i64> = if m_src == 3 { range.clone().collect() } else { vec![0] };
    for a in range {
        for &b in &second {
            let mut cand = q.to_vec();
            cand[0] += a as f64 * POLISH_STEP;
            if m_src == 3 {
                cand[1] += b as f64 * POLISH_STEP;
            }
            cand[last] = 1.0 - cand[..last].iter().sum::<f64>();
            if cand.iter().any(|v| *v < 0.0) {
                continue;
            }
            if let Ok(v) = moments.outer_value(&cand) {
                if v < best.1 {
                    best = (cand, v);
                }
            }
        }
    }
    Ok(best)
}

/// Flat when moving weight between some pair of sources by
/// `POLISH_STEP · POLISH_RADIUS` changes the outer value by less than 1e-8
/// (relative to its scale).
fn is_flat(moments: &QuadraticReward, q: &[f64], value: f64) -> Result<bool> {
    let h = POLISH_STEP * POLISH_RADIUS as f64;
    let tol = FLAT_TOL * value.abs().max(1.0);
    for i in 0..q.len() {
        for j in 0..q.len() {
            if i == j || q[j] < h {
                continue;
            }
            let mut cand = q.to_vec();
            cand[i] += h;
            cand[j] -= h;
            if (moments.outer_value(&cand)? - value).abs() < tol {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Exhaustive minimization of `f` over the lattice of `Δ^M` with spacing
/// `resolution`, for `M ∈ {2, 3}`.
pub fn brute_force_simplex_min<F: Fn(&[f64]) -> f64>(f: F, m: usize, resolution: f64) -> Result<(Vec<f64>, f64)> {
    if !(2..=3).contains(&m) {
        return Err(MimalError::Unsupported(format!("brute-force simplex search for M = {m}")));
    }
    if !(resolution > 0.0 && resolution <= 1e-2) {
        return Err(MimalError::Config(format!("resolution must lie in (0, 0.01], got {resolution}")));
    }
    let steps = (1.0 / resolution).round() as usize;
    let h = 1.0 / steps as f64;
    let mut best = (vec![], f64::INFINITY);
    let mut q = [0.0; 3];
    for i in 0..=steps {
        let inner = if m == 2 { 0 } else { steps - i };
        for j in 0..=inner {
            q[0] = i as f64 * h;
            if m == 2 {
                q[1] = (steps - i) as f64 * h;
            } else {
                q[1] = j as f64 * h;
                q[2] = (steps - i - j) as f64 * h;
            }
            let v = f(&q[..m]);
            if v < best.1 {
                best = (q[..m].to_vec(), v);
            }
        }
    }
    Ok(best)
}

/// Worst coordinate-wise relative error between `grad` and central differences
/// of `f` at `point`. The denominator is `max(|analytic|, |numeric|, 1e-6)`,
/// so coordinates whose gradient is essentially zero are compared absolutely.
pub fn finite_diff_check<F: FnMut(&[f64]) -> f64>(mut f: F, grad: &[f64], point: &[f64], step: f64) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&step) {
        return Err(MimalError::Config(format!("finite-difference step must lie in [1e-7, 1e-3], got {step}")));
    }
    if grad.len() != point.len() {
        return Err(MimalError::Shape(format!("{} gradient entries at a {}-dimensional point", grad.len(), point.len())));
    }
    let mut x = point.to_vec();
    let mut worst: f64 = 0.0;
    for j in 0..x.len() {
        x[j] = point[j] + step;
        let up = f(&x);
        x[j] = point[j] - step;
        let down = f(&x);
        x[j] = point[j];
        let numeric = (up - down) / (2.0 * step);
        let denom = grad[j].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((grad[j] - numeric).abs() / denom);
    }
    Ok(worst)
}

/// `max_{m : q_m > 1e-6} r_m - Σ q_m r_m`. Zero when every active source
/// attains the same reward.
pub fn minimax_gap(q: &[f64], rewards: &[f64]) -> f64 {
    let weighted: f64 = q.iter().zip(rewards).map(|(w, r)| w * r).sum();
    q.iter()
        .zip(rewards)
        .filter(|(w, _)| **w > ACTIVE_WEIGHT)
        .map(|(_, r)| r - weighted)
        .fold(0.0, f64::max)
}

/// Recomputes the per-source training rewards of `saddle` on `data` and
/// returns their [`minimax_gap`].
pub fn minimax_gap_audit(
    saddle: &SaddlePoint,
    data: &MultiSourceDataset,
    kind: LossKind,
    baselines: &[FittedModel],
) -> Result<f64> {
    let mut u_full = Vec::with_capacity(data.num_sources());
    let mut u_base = Vec::with_capacity(data.num_sources());
    for (m, s) in data.sources.iter().enumerate() {
        u_full.push(saddle.bundle.linear_predictor(m, &s.x, &s.z)?);
        u_base.push(baselines[m].linear_predictor(&s.x, &s.z)?);
    }
    let ys: Vec<&DVector<f64>> = data.sources.iter().map(|s| &s.y).collect();
    let (_, breakdown) = empirical_reward(kind, &saddle.q_hat, &u_full, &u_base, &ys)?;
    Ok(minimax_gap(saddle.q_hat.as_slice(), &breakdown.per_source_reward))
}

/// Baselines on every source followed by one saddle solve, all on `data`.
pub fn fit_full_sample(data: &MultiSourceDataset, spec: &ProblemSpec, seed: u64) -> Result<(Vec<FittedModel>, SaddlePoint)> {
    let baselines = data
        .sources
        .iter()
        .map(|s| fit_baseline(&spec.learner_b, spec.loss_kind, s))
        .collect::<Result<Vec<_>>>()?;
    let saddle = solve_saddle(
        spec.loss_kind,
        data,
        &spec.learner_f,
        &spec.learner_g,
        &spec.schedule(),
        &baselines,
        seed,
    )?;
    Ok((baselines, saddle))
}

/// Relative tolerance on the saddle value in [`oracle_equivalence`].
pub const VALUE_REL_TOL: f64 = 1e-3;
/// `ℓ∞` tolerance on `q̂` in [`oracle_equivalence`], applied to non-flat instances.
pub const WEIGHT_TOL: f64 = 1e-2;

/// A random squared-error instance without adjustment covariates: `M ∈ {2, 3}`
/// sources, `d ∈ 1..=5` standard normal exposures and
/// `y = Xᵀθ_m + N(0, 1)` with `θ_m` scattered around a common centre.
pub fn random_linear_l2_instance(seed: u64, n: usize) -> Result<MultiSourceDataset> {
    let mut rng = rng_from_seed(derive_seed(seed, "oracle-instance", 0));
    let m_src = rng.random_range(2..=3usize);
    let d = rng.random_range(1..=5usize);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let centre: Vec<f64> = (0..d).map(|_| 2.0 * std.sample(&mut rng)).collect();
    let spread = rng.random_range(0.5..2.0);
    let sources = (0..m_src)
        .map(|m| {
            let theta = DVector::from_iterator(d, centre.iter().map(|c| c + spread * std.sample(&mut rng)));
            let x = DMatrix::from_fn(n, d, |_, _| std.sample(&mut rng));
            let y = &x * theta + DVector::from_fn(n, |_, _| std.sample(&mut rng));
            SourceDataset::new(m, format!("source{}", m + 1), y, x, DMatrix::zeros(n, 0))
        })
        .collect::<Result<Vec<_>>>()?;
    MultiSourceDataset::new(sources, (1..=d).map(|j| format!("x{j}")).collect(), vec![], false)
}

/// Solver run against the closed-form oracle on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub num_sources: usize,
    pub dim: usize,
    pub solver_value: f64,
    pub oracle_value: f64,
    pub value_rel_err: f64,
    pub q_solver: Vec<f64>,
    pub q_oracle: Vec<f64>,
    pub q_linf: f64,
    pub flat: bool,
    pub converged: bool,
    pub passed: bool,
}

/// Solves the linear squared-error saddle on `data` (no adjustment model, null
/// baselines) and compares it with [`linear_l2_saddle_oracle`] on the sample
/// moments.
pub fn oracle_equivalence(data: &MultiSourceDataset, seed: u64) -> Result<OracleCheck> {
    let none = LearnerSpec::linear(Inputs::Z, false);
    if data.num_adjust() != 0 {
        return Err(MimalError::Config("oracle instances carry no adjustment covariates".into()));
    }
    let spec = ProblemSpec::linear(LossKind::SquaredError).with_adjustment_model(none);
    let (_, saddle) = fit_full_sample(data, &spec, seed)?;
    let designs: Vec<DMatrix<f64>> = data.sources.iter().map(|s| s.x.clone()).collect();
    let outcomes: Vec<DVector<f64>> = data.sources.iter().map(|s| s.y.clone()).collect();
    let moments = QuadraticReward::from_rows(&designs, &outcomes)?;
    let oracle = linear_l2_saddle_oracle(&moments)?;
    // zero-valued saddles (opposing effects) are compared on the scale of the
    // best single-source reward
    let signal = (0..moments.num_sources())
        .map(|m| {
            let own = moments.mixture_solution(&SimplexWeights::vertex(moments.num_sources(), m).into_vec())?;
            Ok(moments.reward(m, &own))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let value_rel_err = (saddle.reward_at_solution - oracle.value).abs() / oracle.value.abs().max(1e-6 * signal).max(1e-300);
    let q_linf = saddle
        .q_hat
        .as_slice()
        .iter()
        .zip(&oracle.q)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(OracleCheck {
        num_sources: data.num_sources(),
        dim: data.num_exposures(),
        solver_value: saddle.reward_at_solution,
        oracle_value: oracle.value,
        value_rel_err,
        q_solver: saddle.q_hat.as_slice().to_vec(),
        q_oracle: oracle.q.clone(),
        q_linf,
        flat: oracle.flat,
        converged: saddle.converged,
        passed: value_rel_err < VALUE_REL_TOL && (oracle.flat || q_linf < WEIGHT_TOL),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloTruth {
    pub estimate: f64,
    /// Standard error of `estimate` across the repetitions.
    pub mc_se: f64,
    pub repetitions: Vec<f64>,
    pub q_mean: Vec<f64>,
    pub n_large: usize,
    pub converged: Vec<bool>,
}

pub const MIN_TRUTH_ROWS: usize = 100_000;
pub const TRUTH_REPETITIONS: usize = 5;

/// Approximates `I*_X` by solving the saddle problem on large synthetic
/// draws without cross-fitting, repeated five times.
pub fn monte_carlo_truth(
    scenario: &SimulationScenario,
    n_large: usize,
    spec: &ProblemSpec,
    seed: u64,
) -> Result<MonteCarloTruth> {
    if n_large < MIN_TRUTH_ROWS {
        return Err(MimalError::Config(format!(
            "Monte Carlo truth needs at least {MIN_TRUTH_ROWS} rows per source, got {n_large}"
        )));
    }
    let mut repetitions = Vec::with_capacity(TRUTH_REPETITIONS);
    let mut converged = Vec::with_capacity(TRUTH_REPETITIONS);
    let mut q_mean = vec![0.0; scenario.num_sources];
    for r in 0..TRUTH_REPETITIONS {
        let data = scenario.generate_with_size(n_large, derive_seed(seed, "truth", r as u64))?;
        let (_, saddle) = fit_full_sample(&data, spec, derive_seed(seed, "truth-solve", r as u64))?;
        repetitions.push(saddle.reward_at_solution - spec.ridge_delta * saddle.q_hat.norm_squared());
        converged.push(saddle.converged);
        for (acc, v) in q_mean.iter_mut().zip(saddle.q_hat.as_slice()) {
            *acc += v / TRUTH_REPETITIONS as f64;
        }
    }
    let k = repetitions.len() as f64;
    let estimate = repetitions.iter().sum::<f64>() / k;
    let var = repetitions.iter().map(|v| (v - estimate).powi(2)).sum::<f64>() / (k - 1.0);
    Ok(MonteCarloTruth {
        estimate,
        mc_se: (var / k).sqrt(),
        repetitions,
        q_mean,
        n_large,
        converged,
    })
}

/// The minimizing weights of an oracle solution as simplex weights.
pub fn oracle_weights(sol: &OracleSolution) -> Result<SimplexWeights> {
    SimplexWeights::new(sol.q.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim1_population() -> QuadraticReward {
        let thetas = [
            [5.78, -4.45, 1.26, 1.58, -1.14],
            [2.26, -1.05, 5.78, 6.43, -1.26],
            [1.83, -2.35, 1.34, 2.59, -6.45],
        ];
        let a = vec![DMatrix::identity(5, 5) * 3.0; 3];
        let c = thetas.iter().map(|t| DVector::from_row_slice(t) * 3.0).collect();
        QuadraticReward::new(a, c).unwrap()
    }

    #[test]
    fn lasso_simulation_population_saddle() {
        let sol = linear_l2_saddle_oracle(&sim1_population()).unwrap();
        let q_ref = [0.43, 0.16, 0.41];
        let t_ref = [3.60, -3.04, 2.03, 2.78, -3.32];
        for (a, b) in sol.q.iter().zip(q_ref) {
            assert!((a - b).abs() < 0.006, "{:?}", sol.q);
        }
        for (a, b) in sol.theta.iter().zip(t_ref) {
            assert!((a - b).abs() < 0.006, "{:?}", sol.theta);
        }
        assert!((sol.value - 135.243).abs() < 5e-3, "{}", sol.value);
        assert!(!sol.flat);
    }

    #[test]
    fn opposite_effects_give_zero() {
        let t = DVector::from_row_slice(&[1.0, 1.0, 1.0, 1.0]);
        let a = vec![DMatrix::identity(4, 4) * 3.0; 2];
        let moments = QuadraticReward::new(a, vec![&t * 3.0, &t * -3.0]).unwrap();
        let sol = linear_l2_saddle_oracle(&moments).unwrap();
        assert!(sol.theta.iter().all(|v| v.abs() < 1e-8));
        assert!(sol.value.abs() < 1e-12);
    }

    #[test]
    fn identical_sources_are_flat() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let c = DVector::from_row_slice(&[1.0, -1.0]);
        let moments = QuadraticReward::new(vec![a.clone(), a.clone()], vec![c.clone(), c.clone()]).unwrap();
        let sol = linear_l2_saddle_oracle(&moments).unwrap();
        assert!(sol.flat);
        let single = c.dot(&a.cholesky().unwrap().solve(&c));
        assert!((sol.value - single).abs() < 1e-12);
    }

    #[test]
    fn brute_force_examples() {
        let (q, v) = brute_force_simplex_min(|q| 2.0 * q[0] + 4.0 * q[1], 2, 1e-2).unwrap();
        assert_eq!(q, vec![1.0, 0.0]);
        assert_eq!(v, 2.0);
        let (q, _) = brute_force_simplex_min(|q| q.iter().map(|v| v * v).sum(), 2, 1e-2).unwrap();
        assert!((q[0] - 0.5).abs() < 1e-12);
        assert!(brute_force_simplex_min(|_| 0.0, 4, 1e-2).is_err());
    }

    #[test]
    fn brute_force_agrees_with_oracle() {
        let moments = sim1_population();
        let sol = linear_l2_saddle_oracle(&moments).unwrap();
        let (_, v) = brute_force_simplex_min(|q| moments.outer_value(q).unwrap(), 3, 1e-2).unwrap();
        // outer gradient entries are bounded by max_m |R_m| ≈ 200 here
        assert!(v >= sol.value - 1e-9 && v - sol.value < 200.0 * 1e-2);
    }

    #[test]
    fn finite_differences() {
        assert_eq!(finite_diff_check(|_| 3.0, &[0.0, 0.0], &[1.0, 2.0], 1e-5).unwrap(), 0.0);
        let e = finite_diff_check(|x| 2.0 * x[0] - x[1], &[2.0, -1.0], &[0.3, 0.1], 1e-5).unwrap();
        assert!(e < 1e-10);
        assert!(finite_diff_check(|_| 0.0, &[0.0], &[0.0], 1e-2).is_err());
    }

    #[test]
    fn gap_is_zero_for_one_source() {
        assert_eq!(minimax_gap(&[1.0], &[5.0]), 0.0);
        assert!((minimax_gap(&[0.5, 0.5], &[1.0, 3.0]) - 1.0).abs() < 1e-15);
        assert_eq!(minimax_gap(&[1.0, 0.0], &[1.0, 3.0]), 0.0);
    }
}
