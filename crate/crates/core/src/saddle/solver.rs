use std::collections::VecDeque;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::index::sample;

use super::simplex::project_unchecked;
use super::{OptimizerSchedule, SaddlePoint, SimplexWeights, TrajectoryRecord, TrajectorySummary};
use crate::data::MultiSourceDataset;
use crate::error::{MimalError, Result};
use crate::learners::mlp::{self, Forward};
use crate::learners::{check_separation, Activation, Evaluator, Family, FittedModel, LearnerSpec, ModelBundle};
use crate::linalg::{cholesky_with_retry, soft_threshold, top_eigenvalue, vstack};
use crate::rewards::LossKind;
use crate::rng::{derive_seed, rng_from_seed, Rng};

/// Largest allowed change of the linear predictor per learner step for
/// losses with unbounded curvature ratios.
const MAX_DU: f64 = 1.0;
/// Target size of the first weight move when initializing the curvature scale.
const FIRST_Q_MOVE: f64 = 0.05;
const CURVATURE_DECAY: f64 = 0.98;
/// Width limit for the sufficient-statistics path.
const MOMENT_PATH_MAX_PARAMS: usize = 512;

/// Solves the empirical maximin problem on `data` (the training rows).
///
/// Each iteration takes one preconditioned ascent step on the learners
/// (adjustment models first, then the exposure model) at the current `q`,
/// then one projected descent step on `q`. The baselines must have been fit
/// on the same rows.
pub fn solve_saddle(
    kind: LossKind,
    data: &MultiSourceDataset,
    learner_f: &LearnerSpec,
    learner_g: &LearnerSpec,
    schedule: &OptimizerSchedule,
    baselines: &[FittedModel],
    seed: u64,
) -> Result<SaddlePoint> {
    Solver::build(kind, data, learner_f, learner_g, schedule, baselines, seed, false)?.run()
}

#[cfg(test)]
pub(crate) fn solve_saddle_rows(
    kind: LossKind,
    data: &MultiSourceDataset,
    learner_f: &LearnerSpec,
    learner_g: &LearnerSpec,
    schedule: &OptimizerSchedule,
    baselines: &[FittedModel],
) -> Result<SaddlePoint> {
    Solver::build(kind, data, learner_f, learner_g, schedule, baselines, 0, true)?.run()
}

enum FBlock {
    Linear,
    Lasso {
        lambda: f64,
        penalized: Vec<bool>,
        eigvec: DVector<f64>,
    },
    Krr {
        lambda: f64,
        cbar: f64,
        icpt: bool,
        gram: DMatrix<f64>,
        chol: Option<Cholesky<f64, Dyn>>,
        q_ref: Vec<f64>,
    },
    Mlp {
        sizes: Vec<usize>,
        act: Activation,
        lr: f64,
        first: DVector<f64>,
        second: DVector<f64>,
        steps: i32,
    },
}

enum GBlock {
    Linear {
        chol: Option<Cholesky<f64, Dyn>>,
    },
    Lasso {
        lambda: f64,
        penalized: Vec<bool>,
        lip: Option<f64>,
    },
    Krr {
        lambda: f64,
        cbar: f64,
        icpt: bool,
        chol: Cholesky<f64, Dyn>,
    },
}

enum Engine {
    /// Squared error with linear learners: everything through per-source
    /// second moments of `[Φ_f | Φ_g]`.
    Moments {
        gram: Vec<DMatrix<f64>>,
        cross: Vec<DVector<f64>>,
        yy: Vec<f64>,
    },
    Rows {
        f_eval: Vec<Evaluator>,
        g_design: Vec<DMatrix<f64>>,
        u_f: Vec<DVector<f64>>,
        u_g: Vec<DVector<f64>>,
        fwd: Vec<Forward>,
    },
}

struct Solver<'a> {
    kind: LossKind,
    data: &'a MultiSourceDataset,
    sched: &'a OptimizerSchedule,
    ns: Vec<usize>,
    base: Vec<f64>,
    f_model: FittedModel,
    g_models: Vec<FittedModel>,
    theta_f: DVector<f64>,
    theta_g: Vec<DVector<f64>>,
    f_block: FBlock,
    g_blocks: Vec<GBlock>,
    engine: Engine,
    rng: Rng,
    warnings: Vec<String>,
}

fn penalized_mask(spec: &LearnerSpec, np: usize) -> Vec<bool> {
    (0..np).map(|j| !(spec.include_intercept && j + 1 == np)).collect()
}

fn mean(v: &DVector<f64>) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.mean()
    }
}

impl<'a> Solver<'a> {
    #[allow(clippy::too_many_arguments)]
    fn build(
        kind: LossKind,
        data: &'a MultiSourceDataset,
        learner_f: &LearnerSpec,
        learner_g: &LearnerSpec,
        sched: &'a OptimizerSchedule,
        baselines: &[FittedModel],
        seed: u64,
        force_rows: bool,
    ) -> Result<Self> {
        sched.validate()?;
        learner_f.validate()?;
        learner_g.validate()?;
        let m_src = data.num_sources();
        if baselines.len() != m_src {
            return Err(MimalError::Shape(format!(
                "{} baselines for {m_src} sources",
                baselines.len()
            )));
        }
        if learner_g.family == Family::Mlp {
            return Err(MimalError::Unsupported("neural-network adjustment models".into()));
        }
        if kind == LossKind::Poisson && (learner_f.family == Family::Krr || learner_g.family == Family::Krr) {
            return Err(MimalError::Unsupported("kernel ridge with the poisson loss".into()));
        }
        if learner_f.family == Family::Mlp && learner_f.mlp_output() == Activation::Sigmoid && kind != LossKind::Logistic {
            return Err(MimalError::Config("a sigmoid network output requires the logistic loss".into()));
        }
        let (p, k) = (data.num_exposures(), data.num_adjust());
        check_separation(learner_f, learner_g, p, k)?;
        let ns = data.sizes();
        let mut base = Vec::with_capacity(m_src);
        for (m, src) in data.sources.iter().enumerate() {
            kind.check_outcomes(&src.y)?;
            let ub = baselines[m].linear_predictor(&src.x, &src.z)?;
            base.push(src.y.iter().zip(ub.iter()).map(|(y, u)| kind.value(*y, *u)).sum::<f64>() / src.n() as f64);
        }

        let mut f_spec = learner_f.clone();
        if f_spec.family == Family::Mlp && f_spec.hyper.mlp_init_seed.is_none() {
            f_spec.hyper.mlp_init_seed = Some(derive_seed(seed, "mlp-init", 0));
        }
        let xs: Vec<&DMatrix<f64>> = data.sources.iter().map(|s| &s.x).collect();
        let zs: Vec<&DMatrix<f64>> = data.sources.iter().map(|s| &s.z).collect();
        let f_model = FittedModel::initial(&f_spec, &vstack(&xs), &vstack(&zs))?;
        let mut g_models = Vec::with_capacity(m_src);
        for (m, src) in data.sources.iter().enumerate() {
            let warm = &baselines[m];
            if warm.spec == *learner_g && warm.anchors.as_ref().is_none_or(|a| a.nrows() == src.n()) {
                let mut g = warm.clone();
                g.diagnostics = Default::default();
                g_models.push(g);
            } else {
                g_models.push(FittedModel::initial(learner_g, &src.x, &src.z)?);
            }
        }
        let f_eval: Vec<Evaluator> = data
            .sources
            .iter()
            .map(|s| Evaluator::new(&f_model, &s.x, &s.z))
            .collect::<Result<_>>()?;
        let g_design: Vec<DMatrix<f64>> = data
            .sources
            .iter()
            .zip(&g_models)
            .map(|(s, g)| match Evaluator::new(g, &s.x, &s.z)? {
                Evaluator::Dense(d) => Ok(d),
                Evaluator::Mlp { .. } => unreachable!("adjustment models are linear in their parameters"),
            })
            .collect::<Result<_>>()?;

        let theta_f = DVector::from_column_slice(&f_model.params);
        let theta_g: Vec<DVector<f64>> = g_models.iter().map(|g| DVector::from_column_slice(&g.params)).collect();
        let nf = theta_f.len();
        let n1 = ns[0];

        let f_block = match f_spec.family {
            Family::LinearBasis => FBlock::Linear,
            Family::Lasso => FBlock::Lasso {
                lambda: f_spec.lasso_penalty(n1),
                penalized: penalized_mask(&f_spec, nf),
                eigvec: DVector::zeros(0),
            },
            Family::Krr => {
                let parts: Vec<DMatrix<f64>> = f_eval
                    .iter()
                    .map(|e| match e {
                        Evaluator::Dense(d) => d.columns(0, d.ncols() - usize::from(f_spec.include_intercept)).into_owned(),
                        Evaluator::Mlp { .. } => unreachable!(),
                    })
                    .collect();
                FBlock::Krr {
                    lambda: f_spec.krr_ridge(n1),
                    cbar: kind.curvature_bound().expect("checked above"),
                    icpt: f_spec.include_intercept,
                    gram: vstack(&parts.iter().collect::<Vec<_>>()),
                    chol: None,
                    q_ref: vec![],
                }
            }
            Family::Mlp => FBlock::Mlp {
                sizes: mlp::layer_sizes(f_spec.feature_count(p, k), &f_spec.hyper.mlp_hidden),
                act: f_spec.mlp_activation(),
                lr: f_spec.mlp_learning_rate(),
                first: DVector::zeros(nf),
                second: DVector::zeros(nf),
                steps: 0,
            },
        };

        let mut g_blocks = Vec::with_capacity(m_src);
        for (m, g) in g_models.iter().enumerate() {
            let np = g.num_params();
            g_blocks.push(match learner_g.family {
                Family::LinearBasis => GBlock::Linear { chol: None },
                Family::Lasso => GBlock::Lasso {
                    lambda: learner_g.lasso_penalty(ns[m]),
                    penalized: penalized_mask(learner_g, np),
                    lip: None,
                },
                Family::Krr => {
                    let icpt = learner_g.include_intercept;
                    let na = np - usize::from(icpt);
                    let cbar = kind.curvature_bound().expect("checked above");
                    let lambda = learner_g.krr_ridge(ns[m]);
                    let mut s = g_design[m].columns(0, na) * cbar;
                    for i in 0..na {
                        s[(i, i)] += 2.0 * ns[m] as f64 * lambda;
                    }
                    let (chol, _) = cholesky_with_retry(&s, 1e-10).ok_or_else(|| MimalError::Numeric {
                        iteration: 0,
                        message: "adjustment kernel system is not positive definite".into(),
                    })?;
                    GBlock::Krr {
                        lambda,
                        cbar,
                        icpt,
                        chol,
                    }
                }
                Family::Mlp => unreachable!(),
            });
        }

        let linear_fg = matches!(f_spec.family, Family::LinearBasis | Family::Lasso)
            && matches!(learner_g.family, Family::LinearBasis | Family::Lasso);
        let width = nf + theta_g.iter().map(|t| t.len()).max().unwrap_or(0);
        let engine = if kind == LossKind::SquaredError && linear_fg && !force_rows && width <= MOMENT_PATH_MAX_PARAMS {
            let mut gram = Vec::with_capacity(m_src);
            let mut cross = Vec::with_capacity(m_src);
            let mut yy = Vec::with_capacity(m_src);
            for (m, src) in data.sources.iter().enumerate() {
                let Evaluator::Dense(df) = &f_eval[m] else { unreachable!() };
                let psi = crate::data::hcat(df, &g_design[m]);
                let n = src.n() as f64;
                gram.push(psi.tr_mul(&psi) / n);
                cross.push(psi.tr_mul(&src.y) / n);
                yy.push(src.y.norm_squared() / n);
            }
            Engine::Moments { gram, cross, yy }
        } else {
            let u_f: Vec<DVector<f64>> = f_eval.iter().map(|e| e.link(&f_model.params)).collect();
            let u_g: Vec<DVector<f64>> = g_design.iter().zip(&theta_g).map(|(d, t)| d * t).collect();
            let fwd = match &f_block {
                FBlock::Mlp { sizes, act, .. } => f_eval
                    .iter()
                    .map(|e| match e {
                        Evaluator::Mlp { input, .. } => mlp::forward(sizes, *act, theta_f.as_slice(), input),
                        Evaluator::Dense(_) => unreachable!(),
                    })
                    .collect(),
                _ => vec![],
            };
            Engine::Rows {
                f_eval,
                g_design,
                u_f,
                u_g,
                fwd,
            }
        };

        Ok(Solver {
            kind,
            data,
            sched,
            ns,
            base,
            f_model,
            g_models,
            theta_f,
            theta_g,
            f_block,
            g_blocks,
            engine,
            rng: rng_from_seed(derive_seed(seed, "saddle", 0)),
            warnings: vec![],
        })
    }

    fn num_sources(&self) -> usize {
        self.ns.len()
    }

    fn nf(&self) -> usize {
        self.theta_f.len()
    }

    /// `ℓ'(y, u)` on source `m` (row engine only).
    fn lprime(&self, m: usize) -> DVector<f64> {
        let Engine::Rows { u_f, u_g, .. } = &self.engine else {
            unreachable!("row quantities requested from the moment engine")
        };
        let y = &self.data.sources[m].y;
        DVector::from_iterator(
            y.len(),
            y.iter().zip(u_f[m].iter().zip(u_g[m].iter())).map(|(y, (a, b))| self.kind.grad(*y, a + b)),
        )
    }

    fn curvature(&self, m: usize) -> DVector<f64> {
        let Engine::Rows { u_f, u_g, .. } = &self.engine else { unreachable!() };
        DVector::from_iterator(
            u_f[m].len(),
            u_f[m].iter().zip(u_g[m].iter()).map(|(a, b)| self.kind.curvature(a + b)),
        )
    }

    /// Moment-path gradient `2(c - Gβ)` of `mean_m ℓ` in `β = (θ_f, θ_gm)`.
    fn moment_grad(&self, m: usize) -> DVector<f64> {
        let Engine::Moments { gram, cross, .. } = &self.engine else { unreachable!() };
        let nf = self.nf();
        let mut beta = DVector::zeros(nf + self.theta_g[m].len());
        beta.rows_mut(0, nf).copy_from(&self.theta_f);
        beta.rows_mut(nf, self.theta_g[m].len()).copy_from(&self.theta_g[m]);
        (&cross[m] - &gram[m] * beta) * 2.0
    }

    /// Gradient of `mean_m ℓ` in `θ_gm`.
    fn grad_g(&self, m: usize) -> DVector<f64> {
        match &self.engine {
            Engine::Moments { .. } => self.moment_grad(m).rows(self.nf(), self.theta_g[m].len()).into_owned(),
            Engine::Rows { g_design, .. } => g_design[m].tr_mul(&self.lprime(m)) / self.ns[m] as f64,
        }
    }

    /// Negative Hessian of `mean_m ℓ` in `θ_gm` (linear families).
    fn hess_g(&self, m: usize) -> DMatrix<f64> {
        match &self.engine {
            Engine::Moments { gram, .. } => {
                let (nf, ng) = (self.nf(), self.theta_g[m].len());
                gram[m].view((nf, nf), (ng, ng)) * 2.0
            }
            Engine::Rows { g_design, .. } => weighted_gram(&g_design[m], &self.curvature(m), 1.0 / self.ns[m] as f64),
        }
    }

    /// Gradient of `Σ_m q_m mean_m ℓ` in `θ_f` for families linear in their parameters.
    fn grad_f(&self, q: &[f64]) -> DVector<f64> {
        let nf = self.nf();
        let mut g = DVector::zeros(nf);
        for (m, &qm) in q.iter().enumerate() {
            if qm == 0.0 {
                continue;
            }
            match &self.engine {
                Engine::Moments { .. } => g += self.moment_grad(m).rows(0, nf) * qm,
                Engine::Rows { f_eval, .. } => {
                    let Evaluator::Dense(d) = &f_eval[m] else { unreachable!() };
                    g += d.tr_mul(&self.lprime(m)) * (qm / self.ns[m] as f64);
                }
            }
        }
        g
    }

    fn hess_f(&self, q: &[f64]) -> DMatrix<f64> {
        let nf = self.nf();
        let mut h = DMatrix::zeros(nf, nf);
        for (m, &qm) in q.iter().enumerate() {
            if qm == 0.0 {
                continue;
            }
            match &self.engine {
                Engine::Moments { gram, .. } => h += gram[m].view((0, 0), (nf, nf)) * (2.0 * qm),
                Engine::Rows { f_eval, .. } => {
                    let Evaluator::Dense(d) = &f_eval[m] else { unreachable!() };
                    h += weighted_gram(d, &self.curvature(m), qm / self.ns[m] as f64);
                }
            }
        }
        h
    }

    /// Shrinks `delta` so that no linear predictor moves by more than
    /// `MAX_DU` (only for losses other than squared error).
    fn cap(&self, design: &DMatrix<f64>, delta: DVector<f64>) -> DVector<f64> {
        if self.kind == LossKind::SquaredError {
            return delta;
        }
        let du = (design * &delta).amax();
        if du > MAX_DU {
            delta * (MAX_DU / du)
        } else {
            delta
        }
    }

    fn cap_f(&self, delta: DVector<f64>) -> DVector<f64> {
        if self.kind == LossKind::SquaredError {
            return delta;
        }
        let Engine::Rows { f_eval, .. } = &self.engine else { return delta };
        let du = f_eval
            .iter()
            .map(|e| match e {
                Evaluator::Dense(d) => (d * &delta).amax(),
                Evaluator::Mlp { .. } => 0.0,
            })
            .fold(0.0, f64::max);
        if du > MAX_DU {
            delta * (MAX_DU / du)
        } else {
            delta
        }
    }

    fn apply_g(&mut self, m: usize, delta: &DVector<f64>) {
        self.theta_g[m] += delta;
        if let Engine::Rows { g_design, u_g, .. } = &mut self.engine {
            u_g[m] += &g_design[m] * delta;
        }
    }

    fn apply_f(&mut self, delta: &DVector<f64>) {
        self.theta_f += delta;
        if let Engine::Rows { f_eval, u_f, fwd, .. } = &mut self.engine {
            for (m, e) in f_eval.iter().enumerate() {
                match e {
                    Evaluator::Dense(d) => u_f[m] += d * delta,
                    Evaluator::Mlp { input, sizes, act } => {
                        fwd[m] = mlp::forward(sizes, *act, self.theta_f.as_slice(), input);
                        u_f[m] = DVector::from_vec(fwd[m].output());
                    }
                }
            }
        }
    }

    fn mean_losses(&self) -> Vec<f64> {
        match &self.engine {
            Engine::Moments { gram, cross, yy } => (0..self.num_sources())
                .map(|m| {
                    let nf = self.nf();
                    let mut beta = DVector::zeros(nf + self.theta_g[m].len());
                    beta.rows_mut(0, nf).copy_from(&self.theta_f);
                    beta.rows_mut(nf, self.theta_g[m].len()).copy_from(&self.theta_g[m]);
                    -(yy[m] - 2.0 * cross[m].dot(&beta) + beta.dot(&(&gram[m] * &beta)))
                })
                .collect(),
            Engine::Rows { u_f, u_g, .. } => (0..self.num_sources())
                .map(|m| {
                    let y = &self.data.sources[m].y;
                    y.iter()
                        .zip(u_f[m].iter().zip(u_g[m].iter()))
                        .map(|(y, (a, b))| self.kind.value(*y, a + b))
                        .sum::<f64>()
                        / self.ns[m] as f64
                })
                .collect(),
        }
    }

    fn g_design(&self, m: usize) -> Option<&DMatrix<f64>> {
        match &self.engine {
            Engine::Rows { g_design, .. } => Some(&g_design[m]),
            Engine::Moments { .. } => None,
        }
    }

    /// One preconditioned ascent step on `θ_gm`; returns its stationarity residual.
    fn step_g(&mut self, m: usize, qm: f64, eta: f64) -> Result<f64> {
        let ng = self.theta_g[m].len();
        if ng == 0 {
            return Ok(0.0);
        }
        let sq = self.kind == LossKind::SquaredError;
        match &self.g_blocks[m] {
            GBlock::Linear { .. } => {
                let grad = self.grad_g(m);
                let res = qm * grad.amax();
                let cached = matches!(&self.g_blocks[m], GBlock::Linear { chol: Some(_) });
                if !(sq && cached) {
                    let h = self.hess_g(m);
                    let (c, _) = cholesky_with_retry(&h, 1e-10).ok_or_else(|| numeric(0, "adjustment Hessian"))?;
                    self.g_blocks[m] = GBlock::Linear { chol: Some(c) };
                }
                let GBlock::Linear { chol: Some(c) } = &self.g_blocks[m] else { unreachable!() };
                let mut delta = c.solve(&grad) * eta;
                if let Some(d) = self.g_design(m) {
                    delta = self.cap(d, delta);
                }
                self.apply_g(m, &delta);
                Ok(res)
            }
            GBlock::Lasso { lambda, penalized, lip } => {
                let (lambda, penalized) = (*lambda, penalized.clone());
                let grad = self.grad_g(m);
                let l = match lip {
                    Some(l) if sq => *l,
                    _ => {
                        let h = self.hess_g(m);
                        let mut v = DVector::zeros(0);
                        top_eigenvalue(&h, &mut v, 1000).max(1e-12)
                    }
                };
                self.g_blocks[m] = GBlock::Lasso {
                    lambda,
                    penalized: penalized.clone(),
                    lip: Some(l),
                };
                let theta = &self.theta_g[m];
                let full = prox_step(theta, &grad, l, lambda, 1.0, &penalized);
                let res = qm * l * (&full - theta).amax();
                let mut delta = prox_step(theta, &grad, l, lambda, eta, &penalized) - theta;
                if let Some(d) = self.g_design(m) {
                    delta = self.cap(d, delta);
                }
                self.apply_g(m, &delta);
                Ok(res)
            }
            GBlock::Krr { lambda, cbar, icpt, chol } => {
                let n = self.ns[m] as f64;
                let na = ng - usize::from(*icpt);
                let lp = self.lprime(m);
                let alpha = self.theta_g[m].rows(0, na);
                let r = &lp - alpha * (2.0 * n * lambda);
                let mut delta = DVector::zeros(ng);
                delta.rows_mut(0, na).copy_from(&(chol.solve(&r) * eta));
                let mut res = r.lp_norm(1) / n;
                if *icpt {
                    let rb = mean(&lp);
                    delta[na] = eta * rb / cbar;
                    res += rb.abs();
                }
                self.apply_g(m, &delta);
                Ok(qm * res)
            }
        }
    }

    /// One ascent step on `θ_f`; returns its stationarity residual.
    fn step_f(&mut self, q: &[f64], eta: f64) -> Result<f64> {
        if self.nf() == 0 {
            return Ok(0.0);
        }
        match &mut self.f_block {
            FBlock::Linear => {
                let grad = self.grad_f(q);
                let h = self.hess_f(q);
                let (c, _) = cholesky_with_retry(&h, 1e-10).ok_or_else(|| numeric(0, "exposure-model Hessian"))?;
                let delta = self.cap_f(c.solve(&grad) * eta);
                self.apply_f(&delta);
                Ok(grad.amax())
            }
            FBlock::Lasso { .. } => {
                let grad = self.grad_f(q);
                let h = self.hess_f(q);
                let FBlock::Lasso { lambda, penalized, eigvec } = &mut self.f_block else { unreachable!() };
                let l = top_eigenvalue(&h, eigvec, 1000).max(1e-12) * 1.01;
                let (lambda, penalized) = (*lambda, penalized.clone());
                let theta = &self.theta_f;
                let full = prox_step(theta, &grad, l, lambda, 1.0, &penalized);
                let res = l * (&full - theta).amax();
                let delta = prox_step(theta, &grad, l, lambda, eta, &penalized) - theta;
                let delta = self.cap_f(delta);
                self.apply_f(&delta);
                Ok(res)
            }
            FBlock::Krr { .. } => self.step_krr_f(q, eta),
            FBlock::Mlp { .. } => self.step_mlp_f(q, eta),
        }
    }

    fn step_krr_f(&mut self, q: &[f64], eta: f64) -> Result<f64> {
        let m_src = self.num_sources();
        let lps: Vec<DVector<f64>> = (0..m_src).map(|m| self.lprime(m)).collect();
        let ns = self.ns.clone();
        let nf = self.nf();
        let FBlock::Krr {
            lambda,
            cbar,
            icpt,
            gram,
            chol,
            q_ref,
        } = &mut self.f_block
        else {
            unreachable!()
        };
        let na = nf - usize::from(*icpt);
        let floor = 0.01 / m_src as f64;
        let qf: Vec<f64> = q.iter().map(|v| v.max(floor)).collect();
        let stale = chol.is_none() || qf.iter().zip(q_ref.iter()).any(|(a, b)| a / b > 1.5 || b / a > 1.5);
        if stale {
            let mut s = &*gram * *cbar;
            let mut i = 0;
            for (m, &n) in ns.iter().enumerate() {
                for _ in 0..n {
                    s[(i, i)] += 2.0 * *lambda * n as f64 / qf[m];
                    i += 1;
                }
            }
            let (c, _) = cholesky_with_retry(&s, 1e-10).ok_or_else(|| numeric(0, "kernel preconditioner"))?;
            *chol = Some(c);
            *q_ref = qf.clone();
        }
        // functional gradient r = W ℓ' - 2λα, preconditioned by (c̄K + 2λ W_ref⁻¹)⁻¹ W_ref⁻¹
        let mut r = DVector::zeros(na);
        let mut scaled = DVector::zeros(na);
        let mut rb = 0.0;
        let mut i = 0;
        for (m, lp) in lps.iter().enumerate() {
            let w = q[m] / ns[m] as f64;
            let wref = q_ref[m] / ns[m] as f64;
            for v in lp.iter() {
                r[i] = w * v - 2.0 * *lambda * self.theta_f[i];
                scaled[i] = r[i] / wref;
                rb += w * v;
                i += 1;
            }
        }
        let mut delta = DVector::zeros(nf);
        delta
            .rows_mut(0, na)
            .copy_from(&(chol.as_ref().expect("factor refreshed above").solve(&scaled) * eta));
        let mut res = r.lp_norm(1);
        if *icpt {
            delta[na] = eta * rb / *cbar;
            res += rb.abs();
        }
        self.apply_f(&delta);
        Ok(res)
    }

    fn step_mlp_f(&mut self, q: &[f64], eta: f64) -> Result<f64> {
        let nf = self.nf();
        let lps: Vec<DVector<f64>> = (0..self.num_sources()).map(|m| self.lprime(m)).collect();
        let Engine::Rows { f_eval, fwd, .. } = &self.engine else { unreachable!() };
        let FBlock::Mlp { sizes, act, .. } = &self.f_block else { unreachable!() };
        let mut full = DVector::zeros(nf);
        let mut batch = DVector::zeros(nf);
        let minibatch = self.sched.minibatch;
        for (m, lp) in lps.iter().enumerate() {
            if q[m] == 0.0 {
                continue;
            }
            let n = self.ns[m];
            let s: Vec<f64> = lp.iter().map(|v| v * q[m] / n as f64).collect();
            let gm = DVector::from_vec(mlp::backward(sizes, *act, self.theta_f.as_slice(), &fwd[m], &s));
            full += &gm;
            if let Some(b) = minibatch.filter(|b| *b < n) {
                let Evaluator::Mlp { input, .. } = &f_eval[m] else { unreachable!() };
                let idx = sample(&mut self.rng, n, b).into_vec();
                let sub = input.select_rows(idx.iter());
                let sub_fwd = mlp::forward(sizes, *act, self.theta_f.as_slice(), &sub);
                let s_sub: Vec<f64> = idx.iter().map(|&i| lp[i] * q[m] / b as f64).collect();
                batch += DVector::from_vec(mlp::backward(sizes, *act, self.theta_f.as_slice(), &sub_fwd, &s_sub));
            } else {
                batch += gm;
            }
        }
        if full.iter().any(|v| !v.is_finite()) {
            return Err(numeric(0, "non-finite network gradient"));
        }
        let FBlock::Mlp {
            lr,
            first,
            second,
            steps,
            ..
        } = &mut self.f_block
        else {
            unreachable!()
        };
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        *steps += 1;
        *first = &*first * B1 + &batch * (1.0 - B1);
        *second = &*second * B2 + batch.map(|v| v * v) * (1.0 - B2);
        let c1 = 1.0 - B1.powi(*steps);
        let c2 = 1.0 - B2.powi(*steps);
        let step = *lr * eta;
        let delta = first.zip_map(second, |a, b| step * (a / c1) / ((b / c2).sqrt() + 1e-8));
        self.apply_f(&delta);
        Ok(full.amax())
    }

    fn run(mut self) -> Result<SaddlePoint> {
        let m_src = self.num_sources();
        let sched = self.sched;
        let delta_q = sched.ridge_delta;
        let mut q: Vec<f64> = match &sched.q_init {
            Some(v) => {
                if v.len() != m_src {
                    return Err(MimalError::Config(format!("q_init has {} entries for {m_src} sources", v.len())));
                }
                SimplexWeights::new(v.clone())?.into_vec()
            }
            None => SimplexWeights::uniform(m_src).into_vec(),
        };
        let window = sched.patience;
        let mut q_gaps = VecDeque::with_capacity(window);
        let mut residuals = VecDeque::with_capacity(window);
        let mut records = Vec::new();
        let mut curv: Option<f64> = None;
        let mut prev: Option<(DVector<f64>, Vec<f64>)> = None;
        let mut streak = 0;
        let mut converged = false;
        let mut used = 0;

        for t in 1..=sched.max_iter {
            used = t;
            let eta_fg = sched.eta_fg.at(t);
            let mut res: f64 = 0.0;
            for m in 0..m_src {
                res = res.max(self.step_g(m, q[m], eta_fg).map_err(|e| at_iteration(e, t))?);
            }
            res = res.max(self.step_f(&q, eta_fg).map_err(|e| at_iteration(e, t))?);
            if !res.is_finite()
                || self.theta_f.iter().any(|v| !v.is_finite())
                || self.theta_g.iter().any(|g| g.iter().any(|v| !v.is_finite()))
            {
                return Err(numeric(t, "non-finite learner parameters"));
            }

            let rewards: Vec<f64> = self.mean_losses().iter().zip(&self.base).map(|(l, b)| l - b).collect();
            let reward: f64 = rewards.iter().zip(&q).map(|(r, qm)| r * qm).sum();
            if !reward.is_finite() || reward.abs() > 1e12 {
                return Err(MimalError::Optimizer {
                    iterations: t,
                    message: format!(
                        "reward {reward:e} at q = {q:?}; last q-gaps {:?}, last residuals {:?}",
                        q_gaps.iter().collect::<Vec<_>>(),
                        residuals.iter().collect::<Vec<_>>()
                    ),
                });
            }
            if sched.record_trajectory {
                records.push(TrajectoryRecord {
                    iteration: t,
                    reward: reward + delta_q * q.iter().map(|v| v * v).sum::<f64>(),
                    q: q.clone(),
                });
            }

            let d = DVector::from_iterator(m_src, rewards.iter().zip(&q).map(|(r, qm)| r + 2.0 * delta_q * qm));
            let tangent = &d - DVector::from_element(m_src, mean(&d));
            if let Some((d_prev, q_prev)) = &prev {
                let dq: f64 = q.iter().zip(q_prev).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                if dq > 1e-13 {
                    let dd = &d - d_prev;
                    let dd_t = &dd - DVector::from_element(m_src, mean(&dd));
                    let secant = dd_t.norm() / dq;
                    curv = Some(curv.map_or(secant, |c| (c * CURVATURE_DECAY).max(secant)));
                }
            }
            if curv.is_none() && m_src > 1 && tangent.amax() > 1e-14 * (1.0 + d.amax()) {
                curv = Some(tangent.amax() / FIRST_Q_MOVE);
            }
            let mut gap = 0.0;
            let q_old = q.clone();
            if let Some(c) = curv.filter(|c| *c > 0.0) {
                let full: Vec<f64> = q.iter().zip(d.iter()).map(|(a, b)| a - b / c).collect();
                let pq = project_unchecked(&full);
                gap = pq.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let eta_q = sched.eta_q.at(t);
                let step: Vec<f64> = q.iter().zip(d.iter()).map(|(a, b)| a - eta_q * b / c).collect();
                q = project_unchecked(&step);
            } else if m_src > 1 {
                gap = tangent.amax();
            }
            prev = Some((d, q_old));

            if q_gaps.len() == window {
                q_gaps.pop_front();
                residuals.pop_front();
            }
            q_gaps.push_back(gap);
            residuals.push_back(res);
            if gap < sched.grad_tol && res < sched.grad_tol {
                streak += 1;
                if streak >= sched.patience {
                    converged = true;
                    break;
                }
            } else {
                streak = 0;
            }
        }

        let rewards: Vec<f64> = self.mean_losses().iter().zip(&self.base).map(|(l, b)| l - b).collect();
        let q_hat = SimplexWeights::new(q)?;
        let reward_at_solution = rewards.iter().zip(q_hat.as_slice()).map(|(r, qm)| r * qm).sum::<f64>()
            + delta_q * q_hat.norm_squared();
        let small_weight = q_hat.as_slice().iter().any(|v| *v > 0.0 && *v < 1e-4);
        if !converged {
            self.warnings.push(format!("not converged after {used} iterations"));
        }
        self.f_model.params = self.theta_f.iter().copied().collect();
        for (g, t) in self.g_models.iter_mut().zip(&self.theta_g) {
            g.params = t.iter().copied().collect();
        }
        let bundle = ModelBundle::new(self.f_model, self.g_models)?;
        Ok(SaddlePoint {
            q_hat,
            bundle,
            reward_at_solution,
            per_source_reward: rewards,
            iterations_used: used,
            converged,
            trajectory_summary: TrajectorySummary {
                q_gaps: q_gaps.into(),
                param_residuals: residuals.into(),
                small_weight,
                warnings: self.warnings,
                records,
            },
        })
    }
}

fn weighted_gram(d: &DMatrix<f64>, w: &DVector<f64>, scale: f64) -> DMatrix<f64> {
    let mut wd = d.clone();
    for (i, mut row) in wd.row_iter_mut().enumerate() {
        row *= w[i] * scale;
    }
    d.tr_mul(&wd)
}

fn prox_step(
    theta: &DVector<f64>,
    grad: &DVector<f64>,
    lip: f64,
    lambda: f64,
    eta: f64,
    penalized: &[bool],
) -> DVector<f64> {
    DVector::from_iterator(
        theta.len(),
        (0..theta.len()).map(|j| {
            let v = theta[j] + eta * grad[j] / lip;
            if penalized[j] {
                soft_threshold(v, eta * lambda / lip)
            } else {
                v
            }
        }),
    )
}

fn numeric(iteration: usize, message: &str) -> MimalError {
    MimalError::Numeric {
        iteration,
        message: message.into(),
    }
}

fn at_iteration(e: MimalError, t: usize) -> MimalError {
    match e {
        MimalError::Numeric { message, .. } => MimalError::Numeric { iteration: t, message },
        other => other,
    }
}
