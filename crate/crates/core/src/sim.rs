//! Monte Carlo designs, the replication driver and report aggregation.
//!
//! Every replication draws its data from its own ChaCha8 stream, keyed by
//! `(seed, rep)`, so results do not depend on thread count or on which
//! methods are run.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{hlasso_path_select, HlassoConfig};
use crate::data::{oracle_fit, standardize, Dataset, Metrics, SelectionOutcome, TrueModel};
use crate::error::{Error, Result};
use crate::logistic::{
    logistic_lambda_grid, logistic_oracle_fit, logistic_path_hbic, misclassification,
    BinaryDataset, LogisticFit,
};
use crate::penalty::PenaltySpec;
use crate::selection::{cv_select, select_hbic, CvConfig, HbicConfig};
use crate::solver::{
    cccp_path, lambda_grid, lasso_path, path_limited, FitResult, SolverConfig, TauRule,
};

pub const BLOCK_SIZE: usize = 20;
pub const SIGNAL_BLOCKS: usize = 10;
/// Nonzero pattern of the three-signal designs, linear and logistic.
pub const EXAMPLE1_SIGNAL: [f64; 5] = [3.0, 1.5, 0.0, 0.0, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DesignKind {
    /// `Σ_ij = ρ^|i−j|`.
    Ar1 { rho: f64 },
    /// `Σ_ij = ρ` off the diagonal.
    CompoundSymmetry { rho: f64 },
    /// AR(1) columns with 10 randomly placed signal blocks of size 20.
    Example2Blocks { rho: f64 },
}

impl DesignKind {
    fn rho(&self) -> f64 {
        match *self {
            DesignKind::Ar1 { rho }
            | DesignKind::CompoundSymmetry { rho }
            | DesignKind::Example2Blocks { rho } => rho,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ResponseKind {
    Gaussian { sigma: f64 },
    Logistic { test_size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub kind: DesignKind,
    pub n: usize,
    pub p: usize,
    /// Fixed truth; `None` for [`DesignKind::Example2Blocks`], whose truth
    /// is drawn per replication.
    pub beta_star: Option<TrueModel>,
    pub response: ResponseKind,
    pub seed: u64,
}

fn example1_truth(p: usize) -> TrueModel {
    let mut beta = vec![0.0; p];
    let k = EXAMPLE1_SIGNAL.len().min(p);
    beta[..k].copy_from_slice(&EXAMPLE1_SIGNAL[..k]);
    TrueModel::new(beta)
}

impl SimDesign {
    /// Three-signal design with the given correlation structure: `n = 100`, `p = 3000`, `σ = 2`.
    pub fn example1(kind: DesignKind, seed: u64) -> Self {
        SimDesign {
            kind,
            n: 100,
            p: 3000,
            beta_star: Some(example1_truth(3000)),
            response: ResponseKind::Gaussian { sigma: 2.0 },
            seed,
        }
    }

    /// Block design with `σ = 1` and AR(0.5) columns.
    pub fn example2(n: usize, p: usize, seed: u64) -> Self {
        SimDesign {
            kind: DesignKind::Example2Blocks { rho: 0.5 },
            n,
            p,
            beta_star: None,
            response: ResponseKind::Gaussian { sigma: 1.0 },
            seed,
        }
    }

    /// Logistic design: AR(0.5) columns, `n = 300`, `p = 2000`, 1000 test rows.
    pub fn logistic(seed: u64) -> Self {
        SimDesign {
            kind: DesignKind::Ar1 { rho: 0.5 },
            n: 300,
            p: 2000,
            beta_star: Some(example1_truth(2000)),
            response: ResponseKind::Logistic { test_size: 1000 },
            seed,
        }
    }

    /// Same design at a different size, keeping the three-signal truth.
    pub fn resized(mut self, n: usize, p: usize) -> Self {
        self.n = n;
        self.p = p;
        if self.beta_star.is_some() {
            self.beta_star = Some(example1_truth(p));
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidDesign(m));
        let rho = self.kind.rho();
        if !(0.0..1.0).contains(&rho) {
            return bad(format!("rho must lie in [0, 1), got {rho}"));
        }
        if self.n < 2 || self.p < 1 {
            return bad(format!("need n >= 2 and p >= 1, got n = {}, p = {}", self.n, self.p));
        }
        match (&self.kind, &self.beta_star) {
            (DesignKind::Example2Blocks { .. }, Some(_)) => {
                return bad("block designs draw their own truth; beta_star must be absent".into())
            }
            (DesignKind::Example2Blocks { .. }, None) => {
                if self.p % BLOCK_SIZE != 0 || self.p / BLOCK_SIZE < SIGNAL_BLOCKS {
                    return bad(format!(
                        "p = {} must split into blocks of {BLOCK_SIZE} with at least {SIGNAL_BLOCKS} blocks",
                        self.p
                    ));
                }
            }
            (_, None) => return bad("beta_star is required".into()),
            (_, Some(t)) => {
                if t.p() != self.p {
                    return bad(format!("beta_star has length {}, p = {}", t.p(), self.p));
                }
            }
        }
        match self.response {
            ResponseKind::Gaussian { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                bad(format!("sigma must be finite and >= 0, got {sigma}"))
            }
            ResponseKind::Logistic { test_size: 0 } => bad("test_size must be >= 1".into()),
            _ => Ok(()),
        }
    }

    pub fn is_logistic(&self) -> bool {
        matches!(self.response, ResponseKind::Logistic { .. })
    }
}

/// Named presets for the standard scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Case1a,
    Case1b,
    Case1c,
    Case2a,
    Case2b,
    Logit,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Case1a,
        Scenario::Case1b,
        Scenario::Case1c,
        Scenario::Case2a,
        Scenario::Case2b,
        Scenario::Logit,
    ];

    pub fn design(self, seed: u64) -> SimDesign {
        match self {
            Scenario::Case1a => SimDesign::example1(DesignKind::Ar1 { rho: 0.5 }, seed),
            Scenario::Case1b => SimDesign::example1(DesignKind::Ar1 { rho: 0.8 }, seed),
            Scenario::Case1c => SimDesign::example1(DesignKind::CompoundSymmetry { rho: 0.5 }, seed),
            Scenario::Case2a => SimDesign::example2(200, 3000, seed),
            Scenario::Case2b => SimDesign::example2(300, 4000, seed),
            Scenario::Logit => SimDesign::logistic(seed),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Scenario::Case1a => "case1a",
            Scenario::Case1b => "case1b",
            Scenario::Case1c => "case1c",
            Scenario::Case2a => "case2a",
            Scenario::Case2b => "case2b",
            Scenario::Logit => "logit",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                Error::InvalidDesign(format!(
                    "unknown scenario '{s}' (expected case1a|case1b|case1c|case2a|case2b|logit)"
                ))
            })
    }
}

/// Data for one replication.
#[derive(Debug, Clone)]
pub enum Generated {
    Linear {
        data: Dataset,
        truth: TrueModel,
    },
    Binary {
        data: BinaryDataset,
        truth: TrueModel,
        test_x: DMatrix<f64>,
        test_y: Vec<f64>,
    },
}

impl Generated {
    pub fn truth(&self) -> &TrueModel {
        match self {
            Generated::Linear { truth, .. } | Generated::Binary { truth, .. } => truth,
        }
    }
}

/// The RNG stream of replication `rep`.
pub fn rep_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

/// `rows × p` predictor matrix with rows drawn from `N(0, Σ)`.
pub fn draw_predictors<R: Rng>(kind: &DesignKind, rows: usize, p: usize, rng: &mut R) -> DMatrix<f64> {
    let mut x = DMatrix::<f64>::zeros(rows, p);
    let rho = kind.rho();
    let mut row = vec![0.0; p];
    for i in 0..rows {
        match kind {
            DesignKind::Ar1 { .. } | DesignKind::Example2Blocks { .. } => {
                let s = (1.0 - rho * rho).sqrt();
                let mut prev: f64 = rng.sample(StandardNormal);
                row[0] = prev;
                for v in row.iter_mut().skip(1) {
                    let z: f64 = rng.sample(StandardNormal);
                    prev = rho * prev + s * z;
                    *v = prev;
                }
            }
            DesignKind::CompoundSymmetry { .. } => {
                let z0: f64 = rng.sample(StandardNormal);
                let common = rho.sqrt() * z0;
                let s = (1.0 - rho).sqrt();
                for v in row.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = common + s * z;
                }
            }
        }
        for (j, v) in row.iter().enumerate() {
            x[(i, j)] = *v;
        }
    }
    x
}

/// Block-design truth: 10 distinct blocks, each set to `(3, 1.5, 0, 0, 2, 0, …)/1.5`.
pub fn draw_block_truth<R: Rng>(p: usize, rng: &mut R) -> Result<TrueModel> {
    let blocks = p / BLOCK_SIZE;
    if p % BLOCK_SIZE != 0 || blocks < SIGNAL_BLOCKS {
        return Err(Error::InvalidDesign(format!("p = {p} does not hold {SIGNAL_BLOCKS} blocks")));
    }
    let mut chosen = sample(rng, blocks, SIGNAL_BLOCKS).into_vec();
    chosen.sort_unstable();
    let mut beta = vec![0.0; p];
    for b in chosen {
        for (k, v) in EXAMPLE1_SIGNAL.iter().enumerate() {
            beta[b * BLOCK_SIZE + k] = v / 1.5;
        }
    }
    let truth = TrueModel::new(beta);
    assert_eq!(truth.q, 30, "block truth must have 30 nonzeros");
    Ok(truth)
}

fn linear_response<R: Rng>(x: &DMatrix<f64>, beta: &TrueModel, sigma: f64, rng: &mut R) -> Vec<f64> {
    let mut y = vec![0.0; x.nrows()];
    for &j in &beta.support {
        let b = beta.beta_star[j];
        for (yi, xij) in y.iter_mut().zip(x.column(j).iter()) {
            *yi += b * xij;
        }
    }
    for yi in y.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *yi += sigma * e;
    }
    y
}

fn binary_response<R: Rng>(x: &DMatrix<f64>, beta: &TrueModel, rng: &mut R) -> Vec<f64> {
    (0..x.nrows())
        .map(|i| {
            let eta: f64 = beta.support.iter().map(|&j| beta.beta_star[j] * x[(i, j)]).sum();
            let prob = 1.0 / (1.0 + (-eta).exp());
            f64::from(rng.random::<f64>() < prob)
        })
        .collect()
}

/// Generates replication `rep`. Columns are scaled to unit mean square
/// without centering; the truth is on the input scale.
pub fn gen_design(design: &SimDesign, rep: usize) -> Result<Generated> {
    design.validate()?;
    let mut rng = rep_rng(design.seed, rep);
    let truth = match &design.beta_star {
        Some(t) => t.clone(),
        None => draw_block_truth(design.p, &mut rng)?,
    };
    let x = draw_predictors(&design.kind, design.n, design.p, &mut rng);
    match design.response {
        ResponseKind::Gaussian { sigma } => {
            let y = linear_response(&x, &truth, sigma, &mut rng);
            let data = standardize(&x, &y, false)?;
            Ok(Generated::Linear { data, truth })
        }
        ResponseKind::Logistic { test_size } => {
            let y = binary_response(&x, &truth, &mut rng);
            let test_x = draw_predictors(&design.kind, test_size, design.p, &mut rng);
            let test_y = binary_response(&test_x, &truth, &mut rng);
            let data = BinaryDataset::standardize(&x, &y, false)?;
            Ok(Generated::Binary {
                data,
                truth,
                test_x,
                test_y,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Calibrated CCCP path tuned by HBIC.
    New,
    /// Lasso tuned by cross-validation.
    LassoCv,
    /// Full CCCP (SCAD local solution) tuned by cross-validation.
    ScadCv,
    /// Hard-thresholded Lasso with refit, tuned by HBIC.
    Hlasso,
    /// Least squares (or ML) on the true support.
    Oracle,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::New,
        Method::LassoCv,
        Method::ScadCv,
        Method::Hlasso,
        Method::Oracle,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::New => "new",
            Method::LassoCv => "lasso-cv",
            Method::ScadCv => "scad-cv",
            Method::Hlasso => "hlasso",
            Method::Oracle => "oracle",
        }
    }

    pub fn supports_logistic(self) -> bool {
        matches!(self, Method::New | Method::Oracle)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let alias = match s.as_str() {
            "lasso" => "lasso-cv",
            "scad" => "scad-cv",
            other => other,
        };
        Method::ALL
            .into_iter()
            .find(|m| m.label() == alias)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown method '{s}' (expected new|lasso-cv|scad-cv|hlasso|oracle)"
                ))
            })
    }
}

/// Estimation and tuning settings shared by all replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub solver: SolverConfig,
    pub penalty: PenaltySpec,
    pub tau: TauRule,
    pub grid_points: usize,
    pub grid_ratio: f64,
    /// Overrides for `C_n` and `K_n`; defaults follow [`HbicConfig::for_n`].
    pub c_n: Option<f64>,
    pub k_n: Option<usize>,
    pub cv: CvConfig,
    pub hlasso: HlassoConfig,
    /// Outer iteration cap for full CCCP.
    pub max_outer: usize,
    /// Paths stop after the first point whose support exceeds this size.
    /// Defaults to `K_n` for HBIC-tuned paths and `n` for cross-validated ones.
    pub path_cap: Option<usize>,
    /// Worker threads; `None` uses the global pool. Not part of the output.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            solver: SolverConfig::default(),
            penalty: PenaltySpec::default(),
            tau: TauRule::default(),
            grid_points: 100,
            grid_ratio: 0.01,
            c_n: None,
            k_n: None,
            cv: CvConfig::default(),
            hlasso: HlassoConfig::default(),
            max_outer: 100,
            path_cap: None,
            threads: None,
        }
    }
}

impl SimConfig {
    pub fn hbic_for(&self, n: usize) -> HbicConfig {
        let d = HbicConfig::for_n(n);
        HbicConfig {
            c_n: self.c_n.unwrap_or(d.c_n),
            k_n: self.k_n.unwrap_or(d.k_n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.grid_points == 0 {
            return Err(Error::InvalidArgument("grid_points must be >= 1".into()));
        }
        if !(self.grid_ratio > 0.0 && self.grid_ratio < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "grid_ratio must lie in (0, 1), got {}",
                self.grid_ratio
            )));
        }
        if let Some(c) = self.c_n {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument(format!("C_n must be > 0, got {c}")));
            }
        }
        if self.k_n == Some(0) {
            return Err(Error::InvalidArgument("K_n must be >= 1".into()));
        }
        if self.max_outer == 0 {
            return Err(Error::InvalidArgument("max_outer must be >= 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidArgument("threads must be >= 1".into()));
        }
        Ok(())
    }
}

/// Result of one method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub method: Method,
    /// `None` when the method failed hard.
    pub outcome: Option<SelectionOutcome>,
    pub misclassification: Option<f64>,
    pub lambda: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

impl RepRecord {
    fn failed(rep: usize, method: Method, e: &Error) -> Self {
        RepRecord {
            rep,
            method,
            outcome: None,
            misclassification: None,
            lambda: None,
            converged: false,
            error: Some(e.to_string()),
        }
    }
}

/// A method's fitted coefficients on the input scale.
struct Estimate {
    beta: Vec<f64>,
    intercept: f64,
    lambda: Option<f64>,
    converged: bool,
}

impl Estimate {
    fn linear(data: &Dataset, fit: &FitResult, lambda: Option<f64>) -> Self {
        Estimate {
            beta: data.design.to_original(&fit.beta),
            intercept: 0.0,
            lambda,
            converged: fit.converged,
        }
    }

    fn binary(data: &BinaryDataset, fit: &LogisticFit, lambda: Option<f64>) -> Self {
        let (beta, intercept) = fit.original_coefficients(&data.design);
        Estimate {
            beta,
            intercept,
            lambda,
            converged: fit.converged,
        }
    }
}

fn fit_linear(data: &Dataset, truth: &TrueModel, method: Method, cfg: &SimConfig, rep: usize) -> Result<Estimate> {
    let hbic = cfg.hbic_for(data.n());
    let grid = || lambda_grid(data, cfg.grid_points, cfg.grid_ratio);
    let cv = CvConfig {
        folds: cfg.cv.folds,
        seed: cfg.cv.seed.wrapping_add(rep as u64),
    };
    let cv_cap = Some(cfg.path_cap.unwrap_or(data.n()));
    match method {
        Method::New => {
            let cap = Some(cfg.path_cap.unwrap_or(hbic.k_n));
            let path = path_limited(data, &cfg.penalty, &grid()?, cfg.tau, &cfg.solver, cap)?;
            let (lambda, fit) = select_hbic(&path, &hbic)?;
            Ok(Estimate::linear(data, &fit, Some(lambda)))
        }
        Method::LassoCv => {
            let sel = cv_select(data, |d, g| lasso_path(d, g, &cfg.solver, cv_cap), &grid()?, &cv)?;
            Ok(Estimate::linear(data, &sel.fit, Some(sel.lambda)))
        }
        Method::ScadCv => {
            let sel = cv_select(
                data,
                |d, g| cccp_path(d, &cfg.penalty, g, &cfg.solver, cfg.max_outer, cv_cap),
                &grid()?,
                &cv,
            )?;
            Ok(Estimate::linear(data, &sel.fit, Some(sel.lambda)))
        }
        Method::Hlasso => {
            let (lambda, fit) = hlasso_path_select(data, &grid()?, &cfg.hlasso, &hbic, &cfg.solver)?;
            Ok(Estimate::linear(data, &fit, Some(lambda)))
        }
        Method::Oracle => {
            let fit = oracle_fit(data, &truth.support)?;
            Ok(Estimate::linear(data, &fit, None))
        }
    }
}

fn fit_binary(data: &BinaryDataset, truth: &TrueModel, method: Method, cfg: &SimConfig) -> Result<Estimate> {
    match method {
        Method::New => {
            let hbic = cfg.hbic_for(data.n());
            let k_n = cfg.path_cap.map_or(hbic.k_n, |c| c.min(hbic.k_n));
            let grid = logistic_lambda_grid(data, cfg.grid_points, cfg.grid_ratio)?;
            let (fits, idx) =
                logistic_path_hbic(data, &cfg.penalty, &grid, cfg.tau, &cfg.solver, hbic.c_n, k_n)?;
            Ok(Estimate::binary(data, &fits[idx], Some(grid[idx])))
        }
        Method::Oracle => {
            let fit = logistic_oracle_fit(data, &truth.support)?;
            Ok(Estimate::binary(data, &fit, None))
        }
        other => Err(Error::InvalidArgument(format!(
            "method {other} is not available for logistic designs"
        ))),
    }
}

/// Runs every method on replication `rep`.
pub fn run_rep(design: &SimDesign, methods: &[Method], cfg: &SimConfig, rep: usize) -> Vec<RepRecord> {
    let generated = match gen_design(design, rep) {
        Ok(g) => g,
        Err(e) => return methods.iter().map(|&m| RepRecord::failed(rep, m, &e)).collect(),
    };
    methods
        .iter()
        .map(|&method| {
            let est = match &generated {
                Generated::Linear { data, truth } => fit_linear(data, truth, method, cfg, rep),
                Generated::Binary { data, truth, .. } => fit_binary(data, truth, method, cfg),
            };
            let est = match est {
                Ok(e) => e,
                Err(e) => return RepRecord::failed(rep, method, &e),
            };
            let misclass = match &generated {
                Generated::Binary { test_x, test_y, .. } => {
                    Some(misclassification(&est.beta, est.intercept, test_x, test_y))
                }
                Generated::Linear { .. } => None,
            };
            match SelectionOutcome::of(&est.beta, generated.truth()) {
                Ok(outcome) => RepRecord {
                    rep,
                    method,
                    outcome: Some(outcome),
                    misclassification: misclass,
                    lambda: est.lambda,
                    converged: est.converged,
                    error: None,
                },
                Err(e) => RepRecord::failed(rep, method, &e),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepFailure {
    pub rep: usize,
    pub message: String,
}

/// One row of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub reps: usize,
    /// Averages over successful replications; `None` if every rep failed.
    pub metrics: Option<Metrics>,
    pub misclassification: Option<f64>,
    pub n_ok: usize,
    pub n_not_converged: usize,
    pub failures: Vec<RepFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub design: SimDesign,
    pub config: SimConfig,
    pub reps: usize,
    pub methods: Vec<MethodSummary>,
    pub records: Vec<RepRecord>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl SimReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }
}

/// Aggregates per-rep records. Records are sorted by `(rep, method)` first,
/// so input order does not matter.
pub fn aggregate_report(
    design: &SimDesign,
    config: &SimConfig,
    methods: &[Method],
    reps: usize,
    mut records: Vec<RepRecord>,
) -> Result<SimReport> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be >= 1".into()));
    }
    records.sort_by_key(|r| (r.rep, r.method));
    let mut rows = Vec::with_capacity(methods.len());
    for &method in methods {
        let mine: Vec<&RepRecord> = records.iter().filter(|r| r.method == method).collect();
        let outcomes: Vec<SelectionOutcome> = mine.iter().filter_map(|r| r.outcome).collect();
        let misclass: Vec<f64> = mine.iter().filter_map(|r| r.misclassification).collect();
        rows.push(MethodSummary {
            method,
            reps,
            metrics: Metrics::from_outcomes(&outcomes).ok(),
            misclassification: if misclass.is_empty() {
                None
            } else {
                Some(misclass.iter().sum::<f64>() / misclass.len() as f64)
            },
            n_ok: outcomes.len(),
            n_not_converged: mine.iter().filter(|r| r.outcome.is_some() && !r.converged).count(),
            failures: mine
                .iter()
                .filter_map(|r| {
                    r.error.as_ref().map(|m| RepFailure {
                        rep: r.rep,
                        message: m.clone(),
                    })
                })
                .collect(),
        });
    }
    Ok(SimReport {
        design: design.clone(),
        config: config.clone(),
        reps,
        methods: rows,
        records,
        wall_time: Duration::ZERO,
    })
}

/// Runs `reps` replications of `design` for each method and aggregates.
pub fn run_monte_carlo(design: &SimDesign, methods: &[Method], reps: usize, cfg: &SimConfig) -> Result<SimReport> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be >= 1".into()));
    }
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods requested".into()));
    }
    design.validate()?;
    cfg.validate()?;
    if design.is_logistic() {
        if let Some(m) = methods.iter().find(|m| !m.supports_logistic()) {
            return Err(Error::InvalidArgument(format!(
                "method {m} is not available for logistic designs"
            )));
        }
    }
    let mut methods = methods.to_vec();
    methods.sort_unstable();
    methods.dedup();

    let start = Instant::now();
    let work = || -> Vec<RepRecord> {
        (0..reps)
            .into_par_iter()
            .flat_map_iter(|rep| run_rep(design, &methods, cfg, rep))
            .collect()
    };
    let records = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut report = aggregate_report(design, cfg, &methods, reps, records)?;
    report.wall_time = start.elapsed();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(x: &DMatrix<f64>, a: usize, b: usize) -> f64 {
        let n = x.nrows() as f64;
        let (ca, cb) = (x.column(a), x.column(b));
        let (ma, mb) = (ca.mean(), cb.mean());
        let cov = ca.iter().zip(cb.iter()).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>() / n;
        let va = ca.iter().map(|u| (u - ma).powi(2)).sum::<f64>() / n;
        let vb = cb.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / n;
        cov / (va * vb).sqrt()
    }

    #[test]
    fn ar1_correlations_match_powers() {
        let mut rng = rep_rng(11, 0);
        let x = draw_predictors(&DesignKind::Ar1 { rho: 0.5 }, 10_000, 8, &mut rng);
        for lag in 0..=5 {
            let c = corr(&x, 1, 1 + lag);
            assert!((c - 0.5f64.powi(lag as i32)).abs() < 0.02, "lag {lag}: {c}");
        }
        let var = x.column(7).iter().map(|v| v * v).sum::<f64>() / 10_000.0;
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn compound_symmetry_correlation() {
        let mut rng = rep_rng(12, 0);
        let x = draw_predictors(&DesignKind::CompoundSymmetry { rho: 0.5 }, 10_000, 6, &mut rng);
        for (a, b) in [(0, 1), (2, 5), (3, 4)] {
            assert!((corr(&x, a, b) - 0.5).abs() < 0.02);
        }
    }

    #[test]
    fn rho_zero_is_independent() {
        for kind in [DesignKind::Ar1 { rho: 0.0 }, DesignKind::CompoundSymmetry { rho: 0.0 }] {
            let mut rng = rep_rng(13, 0);
            let x = draw_predictors(&kind, 10_000, 4, &mut rng);
            assert!(corr(&x, 0, 1).abs() < 0.03);
            assert!(corr(&x, 1, 3).abs() < 0.03);
        }
    }

    #[test]
    fn block_truth_has_thirty_nonzeros() {
        for rep in 0..5 {
            let t = draw_block_truth(3000, &mut rep_rng(1, rep)).unwrap();
            assert_eq!(t.q, 30);
            for &j in &t.support {
                let k = j % BLOCK_SIZE;
                assert!(k == 0 || k == 1 || k == 4);
            }
            assert!((t.beta_star[t.support[0]] - 2.0).abs() < 1e-15);
        }
        assert!(draw_block_truth(190, &mut rep_rng(1, 0)).is_err());
    }

    #[test]
    fn generation_is_deterministic_per_rep() {
        let d = Scenario::Case1a.design(5).resized(30, 40);
        let (a, b, c) = (gen_design(&d, 3).unwrap(), gen_design(&d, 3).unwrap(), gen_design(&d, 4).unwrap());
        let (Generated::Linear { data: a, .. }, Generated::Linear { data: b, .. }, Generated::Linear { data: c, .. }) =
            (a, b, c)
        else {
            panic!("expected linear data");
        };
        assert_eq!(a.y, b.y);
        assert_eq!(a.design.matrix(), b.design.matrix());
        assert_ne!(a.y, c.y);
    }

    #[test]
    fn invalid_designs_rejected() {
        let mut d = Scenario::Case1a.design(0);
        d.kind = DesignKind::Ar1 { rho: 1.0 };
        assert!(matches!(d.validate(), Err(Error::InvalidDesign(_))));
        let mut d = Scenario::Case2a.design(0);
        d.p = 3010;
        assert!(d.validate().is_err());
        let mut d = Scenario::Case1a.design(0);
        d.p = 10;
        assert!(d.validate().is_err());
        assert!("case9".parse::<Scenario>().is_err());
        assert_eq!("Case2B".parse::<Scenario>().unwrap(), Scenario::Case2b);
    }

    #[test]
    fn methods_parse() {
        assert_eq!("lasso".parse::<Method>().unwrap(), Method::LassoCv);
        assert_eq!("hlasso".parse::<Method>().unwrap(), Method::Hlasso);
        assert!("alasso".parse::<Method>().is_err());
    }

    fn record(rep: usize, method: Method, tp: usize, fp: usize, sq_err: f64) -> RepRecord {
        RepRecord {
            rep,
            method,
            outcome: Some(SelectionOutcome {
                tp,
                fp,
                exact: tp == 3 && fp == 0,
                sq_err,
            }),
            misclassification: None,
            lambda: None,
            converged: true,
            error: None,
        }
    }

    #[test]
    fn aggregate_single_and_means() {
        let d = Scenario::Case1a.design(0);
        let cfg = SimConfig::default();
        let one = aggregate_report(&d, &cfg, &[Method::New], 1, vec![record(0, Method::New, 3, 1, 0.5)]).unwrap();
        let m = one.methods[0].metrics.unwrap();
        assert_eq!((m.tp, m.fp, m.tm, m.mse), (3.0, 1.0, 0.0, 0.5));

        let recs = vec![
            record(0, Method::New, 3, 0, 0.2),
            record(1, Method::New, 2, 2, 0.6),
            record(2, Method::New, 3, 1, 0.4),
            record(3, Method::New, 3, 0, 0.2),
        ];
        let rep = aggregate_report(&d, &cfg, &[Method::New], 4, recs.clone()).unwrap();
        let m = rep.methods[0].metrics.unwrap();
        assert_eq!(m.tp, 2.75);
        assert_eq!(m.fp, 0.75);
        assert_eq!(m.tm, 0.5);
        assert!((m.mse - 0.35).abs() < 1e-15);

        let mut shuffled = recs;
        shuffled.reverse();
        shuffled.swap(0, 2);
        assert_eq!(aggregate_report(&d, &cfg, &[Method::New], 4, shuffled).unwrap(), rep);
    }

    #[test]
    fn failures_are_counted_not_fatal() {
        let d = Scenario::Case1a.design(0);
        let recs = vec![
            record(0, Method::Oracle, 3, 0, 0.1),
            RepRecord::failed(1, Method::Oracle, &Error::RankDeficient),
        ];
        let r = aggregate_report(&d, &SimConfig::default(), &[Method::Oracle], 2, recs).unwrap();
        assert_eq!(r.methods[0].n_ok, 1);
        assert_eq!(r.methods[0].failures.len(), 1);
        assert_eq!(r.methods[0].reps, 2);
    }

    #[test]
    fn small_monte_carlo_runs_and_repeats() {
        let d = Scenario::Case1a.design(21).resized(60, 40);
        let cfg = SimConfig {
            grid_points: 30,
            ..SimConfig::default()
        };
        let methods = [Method::New, Method::Oracle, Method::Hlasso];
        let a = run_monte_carlo(&d, &methods, 3, &cfg).unwrap();
        let b = run_monte_carlo(&d, &methods, 3, &SimConfig { threads: Some(1), ..cfg }).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.methods, b.methods);
        for m in &a.methods {
            assert_eq!(m.n_ok, 3, "{:?}", m.failures);
        }
        assert_eq!(a.summary(Method::Oracle).unwrap().metrics.unwrap().tm, 1.0);
        assert!(run_monte_carlo(&d, &methods, 0, &cfg).is_err());
    }

    #[test]
    fn logistic_rejects_cv_methods() {
        let d = Scenario::Logit.design(0);
        assert!(run_monte_carlo(&d, &[Method::LassoCv], 1, &SimConfig::default()).is_err());
    }

    #[test]
    fn small_logistic_run() {
        let d = Scenario::Logit.design(3).resized(200, 30);
        let cfg = SimConfig {
            grid_points: 30,
            ..SimConfig::default()
        };
        let r = run_monte_carlo(&d, &[Method::New, Method::Oracle], 2, &cfg).unwrap();
        for m in &r.methods {
            assert_eq!(m.n_ok, 2, "{:?}", m.failures);
            assert!(m.misclassification.unwrap() < 0.3);
        }
    }
}
