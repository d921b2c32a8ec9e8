//! Penalized logistic regression by calibrated CCCP.
//!
//! Each convex subproblem
//!
//! ```text
//! n⁻¹ Σ_i [log(1 + exp(η_i)) − y_i η_i] + Σ_j g_j β_j + λ Σ_j |β_j|,   η = b₀ + Xβ
//! ```
//!
//! is solved by IRLS: a weighted quadratic expansion at the current iterate
//! is minimized by coordinate descent, and the step is halved until the
//! subproblem objective does not increase.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{support_of, Design};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, max_abs, wdot};
use crate::penalty::{soft_threshold, PenaltySpec};
use crate::solver::{check_grid, lambda_grid_from, SolverConfig, TauRule};

const MAX_IRLS_ROUNDS: usize = 100;
const MAX_HALVINGS: usize = 20;
const SEPARATION_WEIGHT: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct BinaryDataset {
    pub design: Design,
    pub y: Vec<f64>,
    pub intercept: bool,
}

impl BinaryDataset {
    pub fn new(design: Design, y: Vec<f64>, intercept: bool) -> Result<Self> {
        if y.len() != design.n() {
            return Err(Error::DimensionMismatch(format!(
                "X has {} rows but y has {} entries",
                design.n(),
                y.len()
            )));
        }
        if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(Error::InvalidArgument("binary response must be 0 or 1".into()));
        }
        let ones = y.iter().filter(|v| **v == 1.0).count();
        if ones == 0 || ones == y.len() {
            return Err(Error::InvalidArgument("response needs both classes".into()));
        }
        Ok(BinaryDataset { design, y, intercept })
    }

    /// Standardizes the columns; they are centered when an intercept is fit.
    pub fn standardize(raw_x: &DMatrix<f64>, y: &[f64], intercept: bool) -> Result<Self> {
        let design = Design::standardize(raw_x, intercept)?;
        Self::new(design, y.to_vec(), intercept)
    }

    pub fn n(&self) -> usize {
        self.design.n()
    }

    pub fn p(&self) -> usize {
        self.design.p()
    }

    fn linear_predictor(&self, beta: &[f64], b0: f64) -> Vec<f64> {
        let mut eta = vec![b0; self.n()];
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                axpy(b, self.design.col(j), &mut eta);
            }
        }
        eta
    }

    /// `‖n⁻¹Xᵀ(y − μ₀)‖_∞` at the null model: `μ₀ = ȳ` with an intercept,
    /// `μ₀ = ½` without.
    pub fn lambda_max(&self) -> f64 {
        let mu0 = if self.intercept {
            self.y.iter().sum::<f64>() / self.n() as f64
        } else {
            0.5
        };
        let r: Vec<f64> = self.y.iter().map(|v| v - mu0).collect();
        max_abs(&self.design.xt_r(&r))
    }
}

/// `log(1 + e^η)` without overflow.
#[inline]
fn log1pexp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn nll_from_eta(eta: &[f64], y: &[f64]) -> f64 {
    eta.iter()
        .zip(y)
        .map(|(e, yi)| log1pexp(*e) - yi * e)
        .sum::<f64>()
        / eta.len() as f64
}

/// Average negative log-likelihood `n⁻¹ Σ [log(1 + exp(η_i)) − y_i η_i]`.
pub fn neg_loglik(beta: &[f64], intercept: f64, data: &BinaryDataset) -> f64 {
    nll_from_eta(&data.linear_predictor(beta, intercept), &data.y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    /// Coefficients on the internal (standardized) scale.
    pub beta: Vec<f64>,
    pub intercept_value: f64,
    pub support: Vec<usize>,
    /// `−2 Σ log-likelihood`.
    pub deviance: f64,
    pub iterations_outer: usize,
    pub iterations_inner: usize,
    pub lambda: f64,
    pub tau: Option<f64>,
    pub converged: bool,
    pub kkt_residual: f64,
    pub step1: Option<Vec<f64>>,
}

impl LogisticFit {
    pub fn model_size(&self) -> usize {
        self.support.len()
    }

    /// Coefficients and intercept on the input scale of `design`.
    pub fn original_coefficients(&self, design: &Design) -> (Vec<f64>, f64) {
        let beta = design.to_original(&self.beta);
        let shift: f64 = beta.iter().zip(design.col_center()).map(|(b, c)| b * c).sum();
        (beta, self.intercept_value - shift)
    }
}

/// 1 iff `xᵀβ + b₀ > 0`, i.e. the fitted probability strictly exceeds ½.
pub fn predict_class(beta: &[f64], intercept: f64, x: &[f64]) -> u8 {
    let eta = intercept + dot(beta, x);
    u8::from(eta > 0.0)
}

/// Fraction of rows of `x` (input scale) whose predicted class differs from `y`.
pub fn misclassification(beta: &[f64], intercept: f64, x: &DMatrix<f64>, y: &[f64]) -> f64 {
    let mut wrong = 0usize;
    let mut row = vec![0.0; x.ncols()];
    for i in 0..x.nrows() {
        for (j, r) in row.iter_mut().enumerate() {
            *r = x[(i, j)];
        }
        if f64::from(predict_class(beta, intercept, &row)) != y[i] {
            wrong += 1;
        }
    }
    wrong as f64 / x.nrows() as f64
}

/// `deviance / n + model_size · C_n · log(p) / n`.
pub fn hbic_logistic(deviance: f64, model_size: usize, n: usize, p: usize, c_n: f64) -> f64 {
    let nf = n as f64;
    deviance / nf + model_size as f64 * c_n * (p as f64).ln() / nf
}

struct SubSolution {
    beta: Vec<f64>,
    b0: f64,
    rounds: usize,
    sweeps: usize,
    converged: bool,
}

fn subproblem_objective(eta: &[f64], data: &BinaryDataset, beta: &[f64], offsets: &[f64], lambda: f64) -> f64 {
    nll_from_eta(eta, &data.y)
        + beta
            .iter()
            .zip(offsets)
            .map(|(b, g)| g * b + lambda * b.abs())
            .sum::<f64>()
}

#[inline]
fn weighted_update(
    data: &BinaryDataset,
    w: &[f64],
    v: &[f64],
    offsets: &[f64],
    lambda: f64,
    j: usize,
    beta: &mut [f64],
    r: &mut [f64],
) -> f64 {
    let xj = data.design.col(j);
    let old = beta[j];
    let u = wdot(w, xj, r) / data.n() as f64 + v[j] * old;
    let new = soft_threshold(u - offsets[j], lambda) / v[j];
    if new != old {
        axpy(old - new, xj, r);
        beta[j] = new;
    }
    (new - old).abs()
}

#[inline]
fn intercept_update(w: &[f64], w_total: f64, b0: &mut f64, r: &mut [f64]) -> f64 {
    let shift = w.iter().zip(r.iter()).map(|(wi, ri)| wi * ri).sum::<f64>() / w_total;
    *b0 += shift;
    r.iter_mut().for_each(|ri| *ri -= shift);
    shift.abs()
}

/// Coordinate descent on the weighted quadratic expansion. `r` holds the
/// working residual `z − η` and is kept in sync.
#[allow(clippy::too_many_arguments)]
fn weighted_cd(
    data: &BinaryDataset,
    w: &[f64],
    v: &[f64],
    offsets: &[f64],
    lambda: f64,
    beta: &mut [f64],
    b0: &mut f64,
    r: &mut [f64],
    cfg: &SolverConfig,
) -> (usize, bool) {
    let p = data.p();
    let w_total: f64 = w.iter().sum();
    let mut sweeps = 0;
    let mut active = Vec::with_capacity(p);
    loop {
        let mut change = 0.0f64;
        if data.intercept {
            change = change.max(intercept_update(w, w_total, b0, r));
        }
        for j in 0..p {
            change = change.max(weighted_update(data, w, v, offsets, lambda, j, beta, r));
        }
        sweeps += 1;
        if change <= cfg.tol || sweeps >= cfg.max_iter {
            return (sweeps, change <= cfg.tol);
        }
        active.clear();
        active.extend((0..p).filter(|&j| beta[j] != 0.0));
        for _ in 0..cfg.active_set_cycles {
            let mut c = 0.0f64;
            if data.intercept {
                c = c.max(intercept_update(w, w_total, b0, r));
            }
            for &j in &active {
                c = c.max(weighted_update(data, w, v, offsets, lambda, j, beta, r));
            }
            sweeps += 1;
            if c <= cfg.tol || sweeps >= cfg.max_iter {
                break;
            }
        }
    }
}

fn solve_subproblem(
    data: &BinaryDataset,
    offsets: &[f64],
    lambda: f64,
    warm_beta: &[f64],
    warm_b0: f64,
    cfg: &SolverConfig,
) -> Result<SubSolution> {
    let n = data.n();
    let nf = n as f64;
    let mut beta = warm_beta.to_vec();
    let mut b0 = if data.intercept { warm_b0 } else { 0.0 };
    let mut eta = data.linear_predictor(&beta, b0);
    let mut obj = subproblem_objective(&eta, data, &beta, offsets, lambda);
    let mut sweeps = 0;
    let mut rounds = 0;
    let mut converged = false;
    while rounds < MAX_IRLS_ROUNDS {
        rounds += 1;
        let mu: Vec<f64> = eta.iter().map(|e| sigmoid(*e)).collect();
        let w: Vec<f64> = mu.iter().map(|m| m * (1.0 - m)).collect();
        if w.iter().fold(0.0f64, |a, b| a.max(*b)) < SEPARATION_WEIGHT {
            return Err(Error::Separation);
        }
        let w: Vec<f64> = w.into_iter().map(|wi| wi.max(SEPARATION_WEIGHT)).collect();
        let v: Vec<f64> = (0..data.p())
            .map(|j| {
                let c = data.design.col(j);
                wdot(&w, c, c) / nf
            })
            .collect();
        let mut r: Vec<f64> = data.y.iter().zip(&mu).zip(&w).map(|((yi, m), wi)| (yi - m) / wi).collect();
        let mut new_beta = beta.clone();
        let mut new_b0 = b0;
        let (s, _) = weighted_cd(data, &w, &v, offsets, lambda, &mut new_beta, &mut new_b0, &mut r, cfg);
        sweeps += s;

        // step-halving on the exact subproblem objective
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = beta.iter().zip(&new_beta).map(|(a, b)| a + t * (b - a)).collect();
            let cand_b0 = b0 + t * (new_b0 - b0);
            let cand_eta = data.linear_predictor(&cand, cand_b0);
            let cand_obj = subproblem_objective(&cand_eta, data, &cand, offsets, lambda);
            if cand_obj <= obj + 1e-14 * obj.abs().max(1.0) {
                accepted = Some((cand, cand_b0, cand_eta, cand_obj));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, cand_b0, cand_eta, cand_obj)) = accepted else {
            // no descent direction left at working precision
            converged = true;
            break;
        };
        let step = beta
            .iter()
            .zip(&cand)
            .fold((cand_b0 - b0).abs(), |m, (a, b)| m.max((a - b).abs()));
        beta = cand;
        b0 = cand_b0;
        eta = cand_eta;
        obj = cand_obj;
        if step <= cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(SubSolution {
        beta,
        b0,
        rounds,
        sweeps,
        converged,
    })
}

/// Stationarity residual with generic penalty slopes.
///
/// For `β_j ≠ 0` the score `n⁻¹x_jᵀ(y − μ)` must equal `sign(β_j)·slope(|β_j|)`;
/// for `β_j = 0` its magnitude must not exceed `slope(0)`. The intercept
/// score is included when an intercept is fit.
fn kkt_generic(data: &BinaryDataset, beta: &[f64], b0: f64, slope: impl Fn(usize, f64) -> (f64, f64)) -> f64 {
    let eta = data.linear_predictor(beta, b0);
    let resid: Vec<f64> = data.y.iter().zip(&eta).map(|(yi, e)| yi - sigmoid(*e)).collect();
    let n = data.n() as f64;
    let mut worst = if data.intercept {
        (resid.iter().sum::<f64>() / n).abs()
    } else {
        0.0
    };
    for (j, &b) in beta.iter().enumerate() {
        let score = dot(data.design.col(j), &resid) / n;
        let (shift, level) = slope(j, b);
        let s = score - shift;
        let v = if b != 0.0 {
            (s - b.signum() * level).abs()
        } else {
            (s.abs() - level).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// KKT residual of the penalized logistic objective at `(beta, b0)`.
pub fn logistic_kkt_violation(data: &BinaryDataset, spec: &PenaltySpec, lambda: f64, beta: &[f64], b0: f64) -> f64 {
    kkt_generic(data, beta, b0, |_, b| (0.0, spec.deriv(b.abs(), lambda)))
}

/// KKT residual of one convex subproblem (linear offsets plus `λ‖β‖₁`).
pub fn logistic_surrogate_kkt(data: &BinaryDataset, offsets: &[f64], lambda: f64, beta: &[f64], b0: f64) -> f64 {
    kkt_generic(data, beta, b0, |j, _| (offsets[j], lambda))
}

fn check_binary(data: &BinaryDataset, lambda: f64, tau: f64) -> Result<()> {
    if !data.design.is_standardized() {
        return Err(Error::NotStandardized);
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be > 0, got {lambda}")));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidArgument(format!("tau must lie in (0, 1], got {tau}")));
    }
    Ok(())
}

/// Penalized logistic objective `n⁻¹ Σ [log(1+e^η) − yη] + Σ p_λ(|β_j|)`.
pub fn logistic_objective(data: &BinaryDataset, spec: &PenaltySpec, lambda: f64, beta: &[f64], b0: f64) -> f64 {
    neg_loglik(beta, b0, data) + spec.total(beta, lambda)
}

/// Two calibrated CCCP steps with IRLS inner solves.
pub fn logistic_calibrated_cccp(
    data: &BinaryDataset,
    spec: &PenaltySpec,
    lambda: f64,
    tau: f64,
    cfg: &SolverConfig,
) -> Result<LogisticFit> {
    logistic_calibrated_cccp_warm(data, spec, lambda, tau, None, cfg)
}

/// [`logistic_calibrated_cccp`] with a warm start `(beta, intercept)` for step 1.
pub fn logistic_calibrated_cccp_warm(
    data: &BinaryDataset,
    spec: &PenaltySpec,
    lambda: f64,
    tau: f64,
    step1_warm: Option<(&[f64], f64)>,
    cfg: &SolverConfig,
) -> Result<LogisticFit> {
    cfg.validate()?;
    check_binary(data, lambda, tau)?;
    let p = data.p();
    let zeros = vec![0.0; p];
    let (wb, wb0) = step1_warm.unwrap_or((&zeros, null_intercept(data)));
    if wb.len() != p {
        return Err(Error::DimensionMismatch("warm start length differs from p".into()));
    }
    let step1 = solve_subproblem(data, &zeros, tau * lambda, wb, wb0, cfg)?;
    let offsets: Vec<f64> = step1.beta.iter().map(|&b| spec.concave_grad(b, lambda)).collect();
    let step2 = solve_subproblem(data, &offsets, lambda, &step1.beta, step1.b0, cfg)?;
    let nll = neg_loglik(&step2.beta, step2.b0, data);
    Ok(LogisticFit {
        support: support_of(&step2.beta),
        kkt_residual: logistic_kkt_violation(data, spec, lambda, &step2.beta, step2.b0),
        deviance: 2.0 * data.n() as f64 * nll,
        iterations_outer: step1.rounds + step2.rounds,
        iterations_inner: step1.sweeps + step2.sweeps,
        lambda,
        tau: Some(tau),
        converged: step1.converged && step2.converged,
        step1: Some(step1.beta),
        beta: step2.beta,
        intercept_value: step2.b0,
    })
}

/// L1-penalized logistic regression, i.e. one convex subproblem with zero offsets.
pub fn logistic_lasso(data: &BinaryDataset, lambda: f64, cfg: &SolverConfig) -> Result<LogisticFit> {
    check_binary(data, lambda, 1.0)?;
    let zeros = vec![0.0; data.p()];
    let sol = solve_subproblem(data, &zeros, lambda, &zeros, null_intercept(data), cfg)?;
    let nll = neg_loglik(&sol.beta, sol.b0, data);
    Ok(LogisticFit {
        support: support_of(&sol.beta),
        kkt_residual: logistic_surrogate_kkt(data, &zeros, lambda, &sol.beta, sol.b0),
        deviance: 2.0 * data.n() as f64 * nll,
        iterations_outer: sol.rounds,
        iterations_inner: sol.sweeps,
        lambda,
        tau: None,
        converged: sol.converged,
        step1: None,
        beta: sol.beta,
        intercept_value: sol.b0,
    })
}

fn null_intercept(data: &BinaryDataset) -> f64 {
    if data.intercept {
        let ybar = data.y.iter().sum::<f64>() / data.n() as f64;
        (ybar / (1.0 - ybar)).ln()
    } else {
        0.0
    }
}

/// Log-spaced grid from the logistic `λ_max` down to `ratio · λ_max`.
pub fn logistic_lambda_grid(data: &BinaryDataset, n_points: usize, ratio: f64) -> Result<Vec<f64>> {
    lambda_grid_from(data.lambda_max(), n_points, ratio)
}

/// Calibrated CCCP along a decreasing grid. The path ends early at the first
/// point that separates the data or whose support exceeds `max_support`.
pub fn logistic_path(
    data: &BinaryDataset,
    spec: &PenaltySpec,
    grid: &[f64],
    tau_rule: TauRule,
    cfg: &SolverConfig,
    max_support: Option<usize>,
) -> Result<Vec<LogisticFit>> {
    path_until(data, spec, grid, tau_rule, cfg, |f| {
        max_support.is_some_and(|m| f.model_size() > m)
    })
}

fn path_until(
    data: &BinaryDataset,
    spec: &PenaltySpec,
    grid: &[f64],
    tau_rule: TauRule,
    cfg: &SolverConfig,
    mut stop_after: impl FnMut(&LogisticFit) -> bool,
) -> Result<Vec<LogisticFit>> {
    check_grid(grid)?;
    let mut fits: Vec<LogisticFit> = Vec::with_capacity(grid.len());
    let mut warm: Option<(Vec<f64>, f64)> = None;
    for &lambda in grid {
        let tau = tau_rule.resolve(data.n(), lambda);
        let fit = match logistic_calibrated_cccp_warm(
            data,
            spec,
            lambda,
            tau,
            warm.as_ref().map(|(b, b0)| (&b[..], *b0)),
            cfg,
        ) {
            Ok(f) => f,
            Err(Error::Separation) if !fits.is_empty() => break,
            Err(e) => return Err(e),
        };
        // the step-1 intercept is not kept; the step-2 one serves as warm start
        warm = fit.step1.clone().map(|b| (b, fit.intercept_value));
        let stop = stop_after(&fit);
        fits.push(fit);
        if stop {
            break;
        }
    }
    Ok(fits)
}

/// Path with HBIC selection. Since the deviance is nonnegative, a fit of
/// size `s` scores at least `s·C_n·log(p)/n`; the path stops at the first
/// fit whose size exceeds `K_n` or whose lower bound exceeds the best score
/// so far. Returns the computed fits and the selected index.
pub fn logistic_path_hbic(
    data: &BinaryDataset,
    spec: &PenaltySpec,
    grid: &[f64],
    tau_rule: TauRule,
    cfg: &SolverConfig,
    c_n: f64,
    k_n: usize,
) -> Result<(Vec<LogisticFit>, usize)> {
    let (n, p) = (data.n(), data.p());
    let per_var = c_n * (p as f64).ln() / n as f64;
    let mut best = f64::INFINITY;
    let fits = path_until(data, spec, grid, tau_rule, cfg, |f| {
        let size = f.model_size();
        if size <= k_n {
            best = best.min(hbic_logistic(f.deviance, size, n, p, c_n));
        }
        size > k_n || size as f64 * per_var > best
    })?;
    let idx = select_hbic_logistic(&fits, n, p, c_n, k_n)?;
    Ok((fits, idx))
}

/// Index minimizing [`hbic_logistic`] among fits with support at most `k_n`;
/// ties go to the earlier (larger λ) point.
pub fn select_hbic_logistic(fits: &[LogisticFit], n: usize, p: usize, c_n: f64, k_n: usize) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, f) in fits.iter().enumerate() {
        if f.model_size() > k_n {
            continue;
        }
        let s = hbic_logistic(f.deviance, f.model_size(), n, p, c_n);
        if best.is_none_or(|(_, b)| s < b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::AllExcluded { k_n })
}

/// Unpenalized logistic maximum likelihood on `support` (plus intercept if
/// the dataset has one), by damped Newton iterations.
pub fn logistic_oracle_fit(data: &BinaryDataset, support: &[usize]) -> Result<LogisticFit> {
    let mut cols = support.to_vec();
    cols.sort_unstable();
    cols.dedup();
    if cols.iter().any(|&j| j >= data.p()) {
        return Err(Error::DimensionMismatch("support index out of range".into()));
    }
    let n = data.n();
    let k = cols.len() + usize::from(data.intercept);
    if k > n {
        return Err(Error::SupportTooLarge { size: k, limit: n });
    }
    // design of the reduced model, intercept column last
    let z = DMatrix::from_fn(n, k, |i, c| {
        if c < cols.len() {
            data.design.col(cols[c])[i]
        } else {
            1.0
        }
    });
    let mut theta = DVector::<f64>::zeros(k);
    let objective = |th: &DVector<f64>| -> f64 {
        let eta = &z * th;
        nll_from_eta(eta.as_slice(), &data.y)
    };
    let mut obj = objective(&theta);
    let mut rounds = 0;
    let mut converged = false;
    while rounds < MAX_IRLS_ROUNDS {
        rounds += 1;
        let eta = &z * &theta;
        let mu: Vec<f64> = eta.iter().map(|e| sigmoid(*e)).collect();
        let w: Vec<f64> = mu.iter().map(|m| m * (1.0 - m)).collect();
        if w.iter().fold(0.0f64, |a, b| a.max(*b)) < SEPARATION_WEIGHT {
            return Err(Error::Separation);
        }
        let resid = DVector::from_iterator(n, data.y.iter().zip(&mu).map(|(y, m)| y - m));
        let grad = z.transpose() * resid;
        let mut h = DMatrix::<f64>::zeros(k, k);
        for a in 0..k {
            for b in a..k {
                let s: f64 = (0..n).map(|i| w[i] * z[(i, a)] * z[(i, b)]).sum();
                h[(a, b)] = s;
                h[(b, a)] = s;
            }
        }
        let Some(chol) = h.cholesky() else {
            return Err(Error::RankDeficient);
        };
        let dir = chol.solve(&grad);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = &theta + &dir * t;
            let c_obj = objective(&cand);
            if c_obj <= obj + 1e-14 * obj.max(1.0) {
                accepted = Some((cand, c_obj));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, c_obj)) = accepted else {
            converged = true;
            break;
        };
        let step = (&cand - &theta).amax();
        theta = cand;
        obj = c_obj;
        if step <= 1e-10 {
            converged = true;
            break;
        }
    }
    let mut beta = vec![0.0; data.p()];
    for (c, &j) in cols.iter().enumerate() {
        beta[j] = theta[c];
    }
    let b0 = if data.intercept { theta[k - 1] } else { 0.0 };
    Ok(LogisticFit {
        support: support_of(&beta),
        // only the support's scores are constrained
        kkt_residual: kkt_generic(data, &beta, b0, |j, _| {
            (0.0, if cols.contains(&j) { 0.0 } else { f64::INFINITY })
        }),
        deviance: 2.0 * n as f64 * obj,
        iterations_outer: rounds,
        iterations_inner: 0,
        lambda: 0.0,
        tau: None,
        converged,
        step1: None,
        beta,
        intercept_value: b0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn simulate(n: usize, p: usize, beta: &[(usize, f64)], seed: u64, intercept: bool) -> BinaryDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let eta: f64 = beta.iter().map(|&(j, b)| b * x[(i, j)]).sum();
                f64::from(rng.random::<f64>() < sigmoid(eta))
            })
            .collect();
        BinaryDataset::standardize(&x, &y, intercept).unwrap()
    }

    #[test]
    fn loglik_at_zero_is_log_two() {
        let ds = simulate(50, 5, &[(0, 1.0)], 1, false);
        assert!((neg_loglik(&[0.0; 5], 0.0, &ds) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn loglik_hand_example() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, -1.0, 2.0, 0.3, -0.7, 2.0, 1.0]);
        let y = [1.0, 0.0, 1.0, 0.0];
        let ds = BinaryDataset::new(Design::raw(x.clone()), y.to_vec(), false).unwrap();
        let beta = [0.8, -1.2];
        let b0 = 0.1;
        let mut direct = 0.0;
        for i in 0..4 {
            let eta = b0 + x[(i, 0)] * beta[0] + x[(i, 1)] * beta[1];
            let prob = 1.0 / (1.0 + (-eta as f64).exp());
            direct -= y[i] * prob.ln() + (1.0 - y[i]) * (1.0 - prob).ln();
        }
        direct /= 4.0;
        assert!((neg_loglik(&beta, b0, &ds) - direct).abs() < 1e-12);
    }

    #[test]
    fn loglik_stable_and_decreasing_under_separation() {
        let x = DMatrix::from_column_slice(4, 1, &[-2.0, -1.0, 1.0, 2.0]);
        let ds = BinaryDataset::new(Design::raw(x), vec![0.0, 0.0, 1.0, 1.0], false).unwrap();
        let mut prev = f64::INFINITY;
        for scale in [1.0, 10.0, 100.0, 350.0] {
            let v = neg_loglik(&[scale], 0.0, &ds);
            assert!(v.is_finite() && v >= 0.0 && v < prev);
            prev = v;
        }
        assert!(prev < 1e-100);
        assert!(log1pexp(700.0).is_finite() && (log1pexp(700.0) - 700.0).abs() < 1e-12);
    }

    #[test]
    fn dataset_validation() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert!(BinaryDataset::new(Design::raw(x.clone()), vec![0.0, 2.0, 1.0], false).is_err());
        assert!(BinaryDataset::new(Design::raw(x), vec![1.0; 3], false).is_err());
    }

    #[test]
    fn null_model_above_lambda_max() {
        for intercept in [false, true] {
            let ds = simulate(120, 30, &[(0, 2.0), (4, -1.5)], 3, intercept);
            let lmax = ds.lambda_max();
            let fit = logistic_calibrated_cccp(&ds, &PenaltySpec::default(), lmax * 1.0001, 1.0, &SolverConfig::default())
                .unwrap();
            assert!(fit.support.is_empty(), "intercept={intercept}");
            let fit = logistic_lasso(&ds, 0.9 * lmax, &SolverConfig::default()).unwrap();
            assert!(!fit.support.is_empty());
        }
    }

    #[test]
    fn subproblem_kkt_at_exit() {
        let ds = simulate(150, 40, &[(1, 2.0), (7, -1.0), (20, 1.5)], 5, true);
        let cfg = SolverConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lambda = 0.05;
        let offsets: Vec<f64> = (0..40).map(|_| rng.random_range(-lambda..lambda)).collect();
        let sol = solve_subproblem(&ds, &offsets, lambda, &vec![0.0; 40], 0.0, &cfg).unwrap();
        assert!(sol.converged);
        let kkt = logistic_surrogate_kkt(&ds, &offsets, lambda, &sol.beta, sol.b0);
        assert!(kkt <= 10.0 * cfg.tol, "{kkt}");
    }

    #[test]
    fn calibrated_objective_does_not_increase_across_steps() {
        let ds = simulate(200, 50, &[(0, 3.0), (1, 1.5), (4, 2.0)], 8, false);
        let spec = PenaltySpec::default();
        let lambda = 0.08;
        let cfg = SolverConfig::default();
        let fit = logistic_calibrated_cccp(&ds, &spec, lambda, 1.0 / (200f64).ln(), &cfg).unwrap();
        let step1 = fit.step1.clone().unwrap();
        let before = logistic_objective(&ds, &spec, lambda, &step1, 0.0);
        let after = logistic_objective(&ds, &spec, lambda, &fit.beta, fit.intercept_value);
        assert!(after <= before + 1e-10, "{after} > {before}");
        let offsets: Vec<f64> = step1.iter().map(|&b| spec.concave_grad(b, lambda)).collect();
        let kkt = logistic_surrogate_kkt(&ds, &offsets, lambda, &fit.beta, fit.intercept_value);
        assert!(kkt <= 10.0 * cfg.tol, "{kkt}");
    }

    #[test]
    fn flipping_labels_negates_fit() {
        let ds = simulate(150, 20, &[(0, 2.0), (3, -1.0)], 11, true);
        let flipped = BinaryDataset {
            y: ds.y.iter().map(|v| 1.0 - v).collect(),
            ..ds.clone()
        };
        let spec = PenaltySpec::default();
        let cfg = SolverConfig {
            tol: 1e-10,
            ..SolverConfig::default()
        };
        let a = logistic_calibrated_cccp(&ds, &spec, 0.05, 0.3, &cfg).unwrap();
        let b = logistic_calibrated_cccp(&flipped, &spec, 0.05, 0.3, &cfg).unwrap();
        for (u, v) in a.beta.iter().zip(&b.beta) {
            assert!((u + v).abs() < 1e-6);
        }
        assert!((a.intercept_value + b.intercept_value).abs() < 1e-6);
    }

    #[test]
    fn predict_class_boundary_and_scaling() {
        assert_eq!(predict_class(&[0.0, 0.0], 0.0, &[1.0, 2.0]), 0);
        assert_eq!(predict_class(&[1.0, 1.0], 0.0, &[1.0, 2.0]), 1);
        let beta = [0.7, -1.3];
        let x = [0.4, 0.9];
        for c in [0.01, 1.0, 1e3] {
            let scaled: Vec<f64> = beta.iter().map(|b| c * b).collect();
            assert_eq!(predict_class(&scaled, c * 0.2, &x), predict_class(&beta, 0.2, &x));
        }
    }

    #[test]
    fn hbic_logistic_arithmetic() {
        assert_eq!(hbic_logistic(120.0, 0, 60, 10, 1.3), 2.0);
        assert!(hbic_logistic(50.0, 1, 60, 10, 1.0) < hbic_logistic(50.0, 2, 60, 10, 1.0));
    }

    #[test]
    fn oracle_fit_matches_penalized_fit_with_tiny_lambda() {
        let ds = simulate(200, 6, &[(0, 1.5), (2, -1.0)], 21, true);
        let oracle = logistic_oracle_fit(&ds, &[0, 2]).unwrap();
        assert!(oracle.converged);
        assert!(oracle.kkt_residual < 1e-8);
        assert_eq!(oracle.support, vec![0, 2]);
        // the full-model lasso at a tiny level approaches the full MLE, whose
        // deviance cannot exceed the oracle's
        let full = logistic_oracle_fit(&ds, &[0, 1, 2, 3, 4, 5]).unwrap();
        assert!(full.deviance <= oracle.deviance + 1e-9);
    }

    #[test]
    fn original_scale_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(100, 3, |_, j| 3.0 + (j as f64 + 1.0) * rng.sample::<f64, _>(StandardNormal));
        let y: Vec<f64> = (0..100).map(|i| f64::from(x[(i, 0)] > 3.0)).collect();
        let ds = BinaryDataset::standardize(&x, &y, true).unwrap();
        let fit = logistic_lasso(&ds, 0.05, &SolverConfig::default()).unwrap();
        let (bo, b0o) = fit.original_coefficients(&ds.design);
        let internal = ds.design.transform(&x).unwrap();
        for i in 0..100 {
            let row_int: Vec<f64> = (0..3).map(|j| internal[(i, j)]).collect();
            let row_raw: Vec<f64> = (0..3).map(|j| x[(i, j)]).collect();
            let e1 = fit.intercept_value + dot(&fit.beta, &row_int);
            let e2 = b0o + dot(&bo, &row_raw);
            assert!((e1 - e2).abs() < 1e-9);
        }
    }
}
