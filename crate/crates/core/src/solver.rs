//! Coordinate descent for the convex CCCP surrogate and the CCCP drivers.
//!
//! Given a linearization point `β⁽ᵏ⁾`, the surrogate is
//!
//! ```text
//! Q(β | β⁽ᵏ⁾, λ) = (2n)⁻¹‖y − Xβ‖² + Σ_j g_j β_j + λ Σ_j |β_j|,
//! g_j = ∇J_λ(|β_j⁽ᵏ⁾|) (signed),
//! ```
//!
//! which is convex. With unit-norm columns its exact coordinate minimizer is
//! `β_j ← S(β_j + n⁻¹x_jᵀr − g_j, λ)` where `S` is soft-thresholding.

use serde::{Deserialize, Serialize};

use crate::data::{support_of, Dataset};
use crate::diagnostics::kkt_violation;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm2_sq};
use crate::penalty::{soft_threshold, PenaltySpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Convergence threshold on the largest coordinate change in a full sweep.
    pub tol: f64,
    /// Cap on coordinate sweeps (full and active-set) per convex solve.
    pub max_iter: usize,
    /// Active-set sweeps between full sweeps.
    pub active_set_cycles: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-7,
            max_iter: 10_000,
            active_set_cycles: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// One coefficient vector with convergence and diagnostic metadata.
///
/// Coefficients are on the dataset's internal (standardized) scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta: Vec<f64>,
    pub support: Vec<usize>,
    /// Coordinate sweeps performed, summed over all convex solves.
    pub iterations: usize,
    /// Largest coordinate change in the final full sweep.
    pub max_coord_change: f64,
    /// Stationarity residual of the problem that produced the fit. For
    /// penalized fits this is the KKT violation of the (possibly nonconvex)
    /// penalized objective; for unpenalized refits it is the largest
    /// normal-equation residual on the support.
    pub kkt_residual: f64,
    /// Penalty level, zero for unpenalized fits.
    pub lambda: f64,
    pub tau: Option<f64>,
    pub converged: bool,
    /// Lasso solution from the first calibrated step.
    pub step1: Option<Vec<f64>>,
    /// Convex surrogate solves performed (CCCP drivers only).
    pub outer_iterations: usize,
    /// Penalized objective after each outer iteration, starting at the
    /// initial point (full CCCP only).
    pub objective_trace: Vec<f64>,
}

impl FitResult {
    pub(crate) fn unpenalized(beta: Vec<f64>, kkt_residual: f64) -> Self {
        FitResult {
            support: support_of(&beta),
            beta,
            iterations: 0,
            max_coord_change: 0.0,
            kkt_residual,
            lambda: 0.0,
            tau: None,
            converged: true,
            step1: None,
            outer_iterations: 0,
            objective_trace: Vec::new(),
        }
    }

    pub fn model_size(&self) -> usize {
        self.support.len()
    }
}

/// Convex surrogate `Q(β | β⁽ᵏ⁾, λ)` with the linear offsets already evaluated.
#[derive(Debug, Clone, Copy)]
pub struct SurrogateProblem<'a> {
    pub data: &'a Dataset,
    pub offsets: &'a [f64],
    pub lambda: f64,
}

impl<'a> SurrogateProblem<'a> {
    pub fn new(data: &'a Dataset, offsets: &'a [f64], lambda: f64) -> Result<Self> {
        if offsets.len() != data.p() {
            return Err(Error::DimensionMismatch(format!(
                "{} offsets for p = {}",
                offsets.len(),
                data.p()
            )));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be > 0, got {lambda}")));
        }
        if let Some(j) = offsets.iter().position(|g| g.abs() > lambda * (1.0 + 1e-12)) {
            return Err(Error::Precondition(format!(
                "|g[{j}]| = {} exceeds lambda = {lambda}",
                offsets[j].abs()
            )));
        }
        Ok(SurrogateProblem { data, offsets, lambda })
    }

    /// Surrogate objective value.
    pub fn objective(&self, beta: &[f64]) -> f64 {
        let n = self.data.n() as f64;
        norm2_sq(&self.data.residual(beta)) / (2.0 * n)
            + beta
                .iter()
                .zip(self.offsets)
                .map(|(b, g)| g * b + self.lambda * b.abs())
                .sum::<f64>()
    }

    /// Largest KKT violation of the convex surrogate at `beta`, given the
    /// residual `r = y − Xβ`.
    pub fn kkt_residual(&self, beta: &[f64], r: &[f64]) -> f64 {
        let n = self.data.n() as f64;
        let mut worst = 0.0f64;
        for (j, &b) in beta.iter().enumerate() {
            let grad = dot(self.data.design.col(j), r) / n - self.offsets[j];
            let v = if b != 0.0 {
                (grad - self.lambda * b.signum()).abs()
            } else {
                (grad.abs() - self.lambda).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }
}

struct CdOutcome {
    sweeps: usize,
    last_full_change: f64,
    converged: bool,
}

#[inline]
fn update_coordinate(
    data: &Dataset,
    offsets: &[f64],
    lambda: f64,
    j: usize,
    beta: &mut [f64],
    r: &mut [f64],
) -> f64 {
    let xj = data.design.col(j);
    let old = beta[j];
    let z = old + dot(xj, r) / data.n() as f64;
    let new = soft_threshold(z - offsets[j], lambda);
    if new != old {
        axpy(old - new, xj, r);
        beta[j] = new;
    }
    (new - old).abs()
}

/// Cyclic coordinate descent with an active-set strategy. `r` must equal
/// `y − Xβ` on entry and is kept in sync.
fn coordinate_descent(
    prob: &SurrogateProblem<'_>,
    beta: &mut [f64],
    r: &mut [f64],
    cfg: &SolverConfig,
) -> CdOutcome {
    let p = prob.data.p();
    let mut sweeps = 0;
    let mut active = Vec::with_capacity(p);
    loop {
        let mut full_change = 0.0f64;
        for j in 0..p {
            let c = update_coordinate(prob.data, prob.offsets, prob.lambda, j, beta, r);
            full_change = full_change.max(c);
        }
        sweeps += 1;
        if full_change <= cfg.tol || sweeps >= cfg.max_iter {
            return CdOutcome {
                sweeps,
                last_full_change: full_change,
                converged: full_change <= cfg.tol,
            };
        }
        active.clear();
        active.extend((0..p).filter(|&j| beta[j] != 0.0));
        for _ in 0..cfg.active_set_cycles {
            let mut change = 0.0f64;
            for &j in &active {
                let c = update_coordinate(prob.data, prob.offsets, prob.lambda, j, beta, r);
                change = change.max(c);
            }
            sweeps += 1;
            if change <= cfg.tol || sweeps >= cfg.max_iter {
                break;
            }
        }
        if sweeps >= cfg.max_iter {
            // One last full sweep decides the convergence flag.
            let mut full_change = 0.0f64;
            for j in 0..p {
                let c = update_coordinate(prob.data, prob.offsets, prob.lambda, j, beta, r);
                full_change = full_change.max(c);
            }
            return CdOutcome {
                sweeps: sweeps + 1,
                last_full_change: full_change,
                converged: full_change <= cfg.tol,
            };
        }
    }
}

fn check_data(data: &Dataset, warm: &[f64]) -> Result<()> {
    if !data.design.is_standardized() {
        return Err(Error::NotStandardized);
    }
    if warm.len() != data.p() {
        return Err(Error::DimensionMismatch(format!(
            "warm start has length {}, p = {}",
            warm.len(),
            data.p()
        )));
    }
    Ok(())
}

/// Minimizes the convex surrogate by coordinate descent from `warm_start`.
///
/// Hitting `max_iter` is not an error: the iterate is returned with
/// `converged = false`.
pub fn solve_surrogate(
    prob: &SurrogateProblem<'_>,
    warm_start: &[f64],
    cfg: &SolverConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    check_data(prob.data, warm_start)?;
    let mut beta = warm_start.to_vec();
    let mut r = prob.data.residual(&beta);
    let out = coordinate_descent(prob, &mut beta, &mut r, cfg);
    let kkt = prob.kkt_residual(&beta, &r);
    Ok(FitResult {
        support: support_of(&beta),
        beta,
        iterations: out.sweeps,
        max_coord_change: out.last_full_change,
        kkt_residual: kkt,
        lambda: prob.lambda,
        tau: None,
        converged: out.converged,
        step1: None,
        outer_iterations: 1,
        objective_trace: Vec::new(),
    })
}

/// L1-penalized least squares at level `lambda`.
pub fn lasso(
    data: &Dataset,
    lambda: f64,
    warm_start: Option<&[f64]>,
    cfg: &SolverConfig,
) -> Result<FitResult> {
    let zeros = vec![0.0; data.p()];
    let prob = SurrogateProblem::new(data, &zeros, lambda)?;
    solve_surrogate(&prob, warm_start.unwrap_or(&zeros), cfg)
}

/// `(2n)⁻¹‖y − Xβ‖² + Σ_j p_λ(|β_j|)`.
pub fn penalized_objective(data: &Dataset, spec: &PenaltySpec, lambda: f64, beta: &[f64]) -> f64 {
    data.sse(beta) / (2.0 * data.n() as f64) + spec.total(beta, lambda)
}

fn linearize(spec: &PenaltySpec, beta: &[f64], lambda: f64) -> Vec<f64> {
    beta.iter().map(|&b| spec.concave_grad(b, lambda)).collect()
}

/// Two-step calibrated CCCP.
///
/// Step 1 is the Lasso at level `tau * lambda` (the surrogate at `β⁽⁰⁾ = 0`).
/// Step 2 minimizes the surrogate linearized at the step-1 solution, at
/// level `lambda`, warm-started from it.
pub fn calibrated_cccp(
    data: &Dataset,
    spec: &PenaltySpec,
    lambda: f64,
    tau: f64,
    cfg: &SolverConfig,
) -> Result<FitResult> {
    calibrated_cccp_warm(data, spec, lambda, tau, None, cfg)
}

/// [`calibrated_cccp`] with a warm start for the step-1 Lasso solve.
pub fn calibrated_cccp_warm(
    data: &Dataset,
    spec: &PenaltySpec,
    lambda: f64,
    tau: f64,
    step1_warm: Option<&[f64]>,
    cfg: &SolverConfig,
) -> Result<FitResult> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidArgument(format!("tau must lie in (0, 1], got {tau}")));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be > 0, got {lambda}")));
    }
    let step1 = lasso(data, tau * lambda, step1_warm, cfg)?;
    let offsets = linearize(spec, &step1.beta, lambda);
    let prob = SurrogateProblem::new(data, &offsets, lambda)?;
    let mut fit = solve_surrogate(&prob, &step1.beta, cfg)?;
    fit.iterations += step1.iterations;
    fit.converged &= step1.converged;
    fit.kkt_residual = kkt_violation(&fit.beta, data, spec, lambda).max_violation();
    fit.tau = Some(tau);
    fit.outer_iterations = 2;
    fit.step1 = Some(step1.beta);
    Ok(fit)
}

/// Uncalibrated CCCP from `β⁽⁰⁾ = 0`, iterated until the iterates stop moving.
pub fn cccp_full(
    data: &Dataset,
    spec: &PenaltySpec,
    lambda: f64,
    cfg: &SolverConfig,
    max_outer: usize,
) -> Result<FitResult> {
    let zeros = vec![0.0; data.p()];
    cccp_from(data, spec, lambda, &zeros, None, cfg, max_outer)
}

/// Uncalibrated CCCP from an arbitrary starting point.
///
/// `first_warm` optionally warm-starts the first convex solve (it does not
/// change the linearization point). Iteration stops once
/// `‖β⁽ᵏ⁺¹⁾ − β⁽ᵏ⁾‖_∞ ≤ tol` or after `max_outer` surrogate solves.
pub fn cccp_from(
    data: &Dataset,
    spec: &PenaltySpec,
    lambda: f64,
    init: &[f64],
    first_warm: Option<&[f64]>,
    cfg: &SolverConfig,
    max_outer: usize,
) -> Result<FitResult> {
    check_data(data, init)?;
    if max_outer < 1 {
        return Err(Error::InvalidArgument("max_outer must be >= 1".into()));
    }
    let mut beta = init.to_vec();
    let mut trace = vec![penalized_objective(data, spec, lambda, &beta)];
    let mut sweeps = 0;
    let mut converged = false;
    let mut last_change = 0.0;
    let mut outer = 0;
    let mut inner_ok = true;
    while outer < max_outer {
        let offsets = linearize(spec, &beta, lambda);
        let prob = SurrogateProblem::new(data, &offsets, lambda)?;
        let warm = match (outer, first_warm) {
            (0, Some(w)) => w,
            _ => &beta[..],
        };
        let fit = solve_surrogate(&prob, warm, cfg)?;
        outer += 1;
        sweeps += fit.iterations;
        last_change = fit.max_coord_change;
        inner_ok &= fit.converged;
        let step = beta
            .iter()
            .zip(&fit.beta)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        beta = fit.beta;
        trace.push(penalized_objective(data, spec, lambda, &beta));
        if step <= cfg.tol {
            converged = true;
            break;
        }
    }
    let kkt = kkt_violation(&beta, data, spec, lambda).max_violation();
    Ok(FitResult {
        support: support_of(&beta),
        beta,
        iterations: sweeps,
        max_coord_change: last_change,
        kkt_residual: kkt,
        lambda,
        tau: None,
        converged: converged && inner_ok,
        step1: None,
        outer_iterations: outer,
        objective_trace: trace,
    })
}

/// Log-spaced grid from `λ_max = ‖n⁻¹Xᵀy‖_∞` down to `ratio · λ_max`.
pub fn lambda_grid(data: &Dataset, n_points: usize, ratio: f64) -> Result<Vec<f64>> {
    lambda_grid_from(data.lambda_max(), n_points, ratio)
}

pub(crate) fn lambda_grid_from(lambda_max: f64, n_points: usize, ratio: f64) -> Result<Vec<f64>> {
    if n_points == 0 {
        return Err(Error::InvalidArgument("grid needs at least one point".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("grid ratio must lie in (0, 1), got {ratio}")));
    }
    if !(lambda_max > 0.0) || !lambda_max.is_finite() {
        return Err(Error::InvalidArgument(
            "lambda_max is zero: response is orthogonal to every column".into(),
        ));
    }
    if n_points == 1 {
        return Ok(vec![lambda_max]);
    }
    let step = ratio.ln() / (n_points - 1) as f64;
    Ok((0..n_points)
        .map(|k| lambda_max * (step * k as f64).exp())
        .collect())
}

/// How the step-1 level `tau` is chosen at each grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TauRule {
    /// `tau = 1 / log n`.
    InvLogN,
    /// `tau = lambda`, capped at 1.
    EqualsLambda,
    Fixed(f64),
}

impl Default for TauRule {
    fn default() -> Self {
        TauRule::InvLogN
    }
}

impl TauRule {
    pub fn resolve(&self, n: usize, lambda: f64) -> f64 {
        match *self {
            TauRule::InvLogN => (1.0 / (n as f64).ln()).min(1.0),
            TauRule::EqualsLambda => lambda.min(1.0),
            TauRule::Fixed(t) => t,
        }
    }
}

impl std::str::FromStr for TauRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "invlogn" => Ok(TauRule::InvLogN),
            "lambda" => Ok(TauRule::EqualsLambda),
            other => match other.parse::<f64>() {
                Ok(t) if t > 0.0 && t <= 1.0 => Ok(TauRule::Fixed(t)),
                _ => Err(Error::InvalidArgument(format!(
                    "tau must be invlogn, lambda or a number in (0, 1], got '{s}'"
                ))),
            },
        }
    }
}

/// Ordered sequence of per-λ fits along a decreasing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionPath {
    pub lambdas: Vec<f64>,
    pub fits: Vec<FitResult>,
    /// `σ̂²_λ = n⁻¹ SSE_λ`.
    pub sigma2: Vec<f64>,
    pub hbic: Vec<Option<f64>>,
    pub n: usize,
    pub p: usize,
    /// `‖y‖²` of the (centered) response, used to flag interpolating fits.
    pub y_norm2: f64,
}

impl SolutionPath {
    pub fn len(&self) -> usize {
        self.fits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fits.is_empty()
    }

    pub(crate) fn from_fits(data: &Dataset, lambdas: Vec<f64>, fits: Vec<FitResult>) -> Self {
        let nf = data.n() as f64;
        let sigma2 = fits.iter().map(|f| data.sse(&f.beta) / nf).collect();
        SolutionPath {
            hbic: vec![None; fits.len()],
            lambdas,
            fits,
            sigma2,
            n: data.n(),
            p: data.p(),
            y_norm2: norm2_sq(&data.y),
        }
    }
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    if grid.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidArgument("grid values must be positive".into()));
    }
    if grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("grid must be strictly decreasing".into()));
    }
    Ok(())
}

/// Calibrated CCCP along a decreasing grid, warm-starting each step-1 Lasso
/// from the previous grid point.
pub fn path(
    data: &Dataset,
    spec: &PenaltySpec,
    grid: &[f64],
    tau_rule: TauRule,
    cfg: &SolverConfig,
) -> Result<SolutionPath> {
    path_limited(data, spec, grid, tau_rule, cfg, None)
}

/// [`path`] that stops after the first fit whose support exceeds
/// `max_support`. Points past that one are not computed.
pub fn path_limited(
    data: &Dataset,
    spec: &PenaltySpec,
    grid: &[f64],
    tau_rule: TauRule,
    cfg: &SolverConfig,
    max_support: Option<usize>,
) -> Result<SolutionPath> {
    check_grid(grid)?;
    let mut fits: Vec<FitResult> = Vec::with_capacity(grid.len());
    let mut warm: Option<Vec<f64>> = None;
    for &lambda in grid {
        let tau = tau_rule.resolve(data.n(), lambda);
        let fit = calibrated_cccp_warm(data, spec, lambda, tau, warm.as_deref(), cfg)?;
        warm = fit.step1.clone();
        let stop = max_support.is_some_and(|m| fit.model_size() > m);
        fits.push(fit);
        if stop {
            break;
        }
    }
    let lambdas = grid[..fits.len()].to_vec();
    Ok(SolutionPath::from_fits(data, lambdas, fits))
}

/// Lasso along a decreasing grid with warm starts, stopping after the first
/// fit whose support exceeds `max_support`.
pub fn lasso_path(
    data: &Dataset,
    grid: &[f64],
    cfg: &SolverConfig,
    max_support: Option<usize>,
) -> Result<Vec<FitResult>> {
    check_grid(grid)?;
    let mut fits: Vec<FitResult> = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let fit = lasso(data, lambda, fits.last().map(|f| &f.beta[..]), cfg)?;
        let stop = max_support.is_some_and(|m| fit.model_size() > m);
        fits.push(fit);
        if stop {
            break;
        }
    }
    Ok(fits)
}

/// Full CCCP along a decreasing grid. Each point starts its CCCP iteration
/// at zero; the first convex solve is warm-started from the previous
/// point's Lasso solution.
pub fn cccp_path(
    data: &Dataset,
    spec: &PenaltySpec,
    grid: &[f64],
    cfg: &SolverConfig,
    max_outer: usize,
    max_support: Option<usize>,
) -> Result<Vec<FitResult>> {
    check_grid(grid)?;
    let zeros = vec![0.0; data.p()];
    let mut lasso_warm: Option<Vec<f64>> = None;
    let mut fits = Vec::with_capacity(grid.len());
    for &lambda in grid {
        // The first CCCP iterate from zero is the Lasso at lambda.
        let first = lasso(data, lambda, lasso_warm.as_deref(), cfg)?;
        let fit = cccp_from(data, spec, lambda, &zeros, Some(&first.beta), cfg, max_outer)?;
        lasso_warm = Some(first.beta);
        let stop = max_support.is_some_and(|m| fit.model_size() > m);
        fits.push(fit);
        if stop {
            break;
        }
    }
    Ok(fits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::standardize;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_problem(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut y = vec![0.0; n];
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = 2.0 * x[(i, 0)] - 1.5 * x[(i, p.min(3) - 1)] + rng.sample::<f64, _>(StandardNormal);
        }
        standardize(&x, &y, false).unwrap()
    }

    fn tight() -> SolverConfig {
        SolverConfig {
            tol: 1e-12,
            max_iter: 100_000,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn single_column_soft_threshold() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, -1.0, 1.0, -1.0]);
        let y = [3.0, -3.0, 3.0, -3.0];
        let ds = standardize(&x, &y, false).unwrap();
        let fit = lasso(&ds, 1.0, None, &SolverConfig::default()).unwrap();
        assert!((fit.beta[0] - 2.0).abs() < 1e-12);
        assert!(fit.converged);
    }

    #[test]
    fn lasso_zero_at_lambda_max() {
        let ds = random_problem(50, 20, 3);
        let lmax = ds.lambda_max();
        let fit = lasso(&ds, lmax, None, &SolverConfig::default()).unwrap();
        assert!(fit.beta.iter().all(|b| *b == 0.0));
        let fit = lasso(&ds, 1.5 * lmax, None, &SolverConfig::default()).unwrap();
        assert!(fit.support.is_empty());
    }

    #[test]
    fn surrogate_rejects_bad_offsets_and_raw_data() {
        let ds = random_problem(20, 3, 1);
        let g = [0.0, 2.0, 0.0];
        assert!(matches!(
            SurrogateProblem::new(&ds, &g, 1.0),
            Err(Error::Precondition(_))
        ));
        assert!(SurrogateProblem::new(&ds, &[0.0; 3], 0.0).is_err());
        let raw = Dataset {
            design: crate::data::Design::raw(ds.design.matrix().clone()),
            ..ds.clone()
        };
        assert_eq!(
            lasso(&raw, 0.1, None, &SolverConfig::default()).unwrap_err(),
            Error::NotStandardized
        );
    }

    #[test]
    fn max_iter_flags_without_failing() {
        let ds = random_problem(30, 10, 5);
        let cfg = SolverConfig {
            tol: 1e-14,
            max_iter: 1,
            active_set_cycles: 10,
        };
        let fit = lasso(&ds, 0.01, None, &cfg).unwrap();
        assert!(!fit.converged);
        assert!(fit.iterations <= 2);
    }

    #[test]
    fn surrogate_solution_satisfies_convex_kkt() {
        let ds = random_problem(60, 40, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lambda = 0.2;
        let g: Vec<f64> = (0..40).map(|_| rng.random_range(-lambda..lambda)).collect();
        let cfg = SolverConfig::default();
        let prob = SurrogateProblem::new(&ds, &g, lambda).unwrap();
        let fit = solve_surrogate(&prob, &vec![0.0; 40], &cfg).unwrap();
        assert!(fit.converged);
        assert!(fit.kkt_residual <= 10.0 * cfg.tol, "{}", fit.kkt_residual);
    }

    #[test]
    fn warm_start_matches_cold_start() {
        let ds = random_problem(60, 30, 9);
        let cfg = SolverConfig::default();
        let cold = lasso(&ds, 0.05, None, &cfg).unwrap();
        let warm0 = lasso(&ds, 0.3, None, &cfg).unwrap();
        let warm = lasso(&ds, 0.05, Some(&warm0.beta), &cfg).unwrap();
        for (a, b) in cold.beta.iter().zip(&warm.beta) {
            assert!((a - b).abs() <= 10.0 * cfg.tol);
        }
    }

    #[test]
    fn scaling_equivariance() {
        let ds = random_problem(40, 15, 4);
        let c = 2.5;
        let scaled = Dataset {
            y: ds.y.iter().map(|v| c * v).collect(),
            ..ds.clone()
        };
        let spec = PenaltySpec::default();
        let (lam, tau) = (0.2, 0.3);
        let a = calibrated_cccp(&ds, &spec, lam, tau, &tight()).unwrap();
        let b = calibrated_cccp(&scaled, &spec, c * lam, tau, &tight()).unwrap();
        let scale = a.beta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.beta.iter().zip(&b.beta) {
            assert!((c * x - y).abs() <= 1e-10 * c * scale.max(1.0), "{x} {y}");
        }
    }

    #[test]
    fn orthonormal_unbiasedness() {
        // columns 1..8 of an 8×8 Sylvester-Hadamard matrix, n⁻¹XᵀX = I
        let x = DMatrix::from_fn(8, 7, |i, j| {
            if (i & (j + 1)).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        });
        let z = [6.0, -5.5, 0.3, 0.0, 0.0, 0.0, 0.0];
        // y = X z so that n⁻¹Xᵀy = z
        let y: Vec<f64> = (0..8).map(|i| (0..7).map(|j| x[(i, j)] * z[j]).sum()).collect();
        let ds = standardize(&x, &y, false).unwrap();
        let spec = PenaltySpec::default();
        let lambda = 1.0;
        // |z_j| > (a + 1) λ = 4.7 for the first two coordinates
        let fit = calibrated_cccp(&ds, &spec, lambda, 0.25, &tight()).unwrap();
        assert!((fit.beta[0] - 6.0).abs() < 1e-10);
        assert!((fit.beta[1] + 5.5).abs() < 1e-10);
        assert!(fit.beta[2..].iter().all(|b| *b == 0.0));
        assert_eq!(fit.tau, Some(0.25));
        let step1 = fit.step1.unwrap();
        assert!((step1[0] - 5.75).abs() < 1e-10);
    }

    #[test]
    fn zero_response_gives_zero_fit() {
        let ds = random_problem(30, 8, 6);
        let zero = Dataset {
            y: vec![0.0; 30],
            ..ds
        };
        let fit = calibrated_cccp(&zero, &PenaltySpec::default(), 0.3, 0.5, &SolverConfig::default())
            .unwrap();
        assert!(fit.beta.iter().all(|b| *b == 0.0));
        assert!(calibrated_cccp(&zero, &PenaltySpec::default(), 0.3, 1.5, &SolverConfig::default())
            .is_err());
    }

    #[test]
    fn cccp_full_null_model_in_one_step() {
        let ds = random_problem(40, 12, 7);
        let fit = cccp_full(&ds, &PenaltySpec::default(), ds.lambda_max() * 1.01, &SolverConfig::default(), 50)
            .unwrap();
        assert_eq!(fit.outer_iterations, 1);
        assert!(fit.support.is_empty());
        assert!(fit.converged);
    }

    #[test]
    fn cccp_full_objective_nonincreasing_and_stationary() {
        for seed in 0..5 {
            let ds = random_problem(50, 25, 100 + seed);
            let spec = PenaltySpec::mcp(3.0).unwrap();
            let cfg = SolverConfig::default();
            let fit = cccp_full(&ds, &spec, 0.15, &cfg, 100).unwrap();
            for w in fit.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-10, "{:?}", fit.objective_trace);
            }
            assert!(fit.kkt_residual <= 10.0 * cfg.tol, "{}", fit.kkt_residual);
        }
    }

    #[test]
    fn grid_shapes() {
        let ds = random_problem(30, 5, 1);
        let lmax = ds.lambda_max();
        assert_eq!(lambda_grid(&ds, 1, 0.01).unwrap(), vec![lmax]);
        let g = lambda_grid(&ds, 3, 0.01).unwrap();
        assert!((g[0] - lmax).abs() < 1e-15);
        assert!((g[1] - 0.1 * lmax).abs() < 1e-12 * lmax);
        assert!((g[2] - 0.01 * lmax).abs() < 1e-12 * lmax);
        assert!(lambda_grid(&ds, 0, 0.01).is_err());
        assert!(lambda_grid(&ds, 5, 1.5).is_err());
        let fit = lasso(&ds, g[0], None, &SolverConfig::default()).unwrap();
        assert!(fit.support.is_empty());
    }

    #[test]
    fn tau_rules() {
        assert!((TauRule::InvLogN.resolve(100, 0.3) - 1.0 / 100f64.ln()).abs() < 1e-15);
        assert_eq!(TauRule::EqualsLambda.resolve(100, 0.3), 0.3);
        assert_eq!(TauRule::EqualsLambda.resolve(100, 3.0), 1.0);
        assert_eq!("0.5".parse::<TauRule>().unwrap(), TauRule::Fixed(0.5));
        assert_eq!("lambda".parse::<TauRule>().unwrap(), TauRule::EqualsLambda);
        assert!("2".parse::<TauRule>().is_err());
    }

    #[test]
    fn path_single_point_and_monotone_sigma() {
        let ds = random_problem(80, 40, 12);
        let spec = PenaltySpec::default();
        let cfg = SolverConfig::default();
        let p1 = path(&ds, &spec, &[ds.lambda_max()], TauRule::InvLogN, &cfg).unwrap();
        assert_eq!(p1.len(), 1);
        assert!(p1.fits[0].support.is_empty());
        let ynorm = ds.y.iter().map(|v| v * v).sum::<f64>() / 80.0;
        assert!((p1.sigma2[0] - ynorm).abs() < 1e-12);

        let grid = lambda_grid(&ds, 30, 0.05).unwrap();
        let full = path(&ds, &spec, &grid, TauRule::InvLogN, &cfg).unwrap();
        assert_eq!(full.len(), 30);
        for w in full.sigma2.windows(2) {
            assert!(w[1] <= w[0] + 1e-8);
        }
        assert!(path(&ds, &spec, &[0.1, 0.2], TauRule::InvLogN, &cfg).is_err());
    }

    #[test]
    fn path_limit_truncates() {
        let ds = random_problem(40, 60, 13);
        let grid = lambda_grid(&ds, 40, 0.01).unwrap();
        let p = path_limited(
            &ds,
            &PenaltySpec::default(),
            &grid,
            TauRule::InvLogN,
            &SolverConfig::default(),
            Some(3),
        )
        .unwrap();
        assert!(p.len() < grid.len());
        assert!(p.fits.last().unwrap().model_size() > 3);
        assert!(p.fits[..p.len() - 1].iter().all(|f| f.model_size() <= 3));
    }
}
