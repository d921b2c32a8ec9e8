//! Tuning-parameter selection: high-dimensional BIC over a solution path and
//! k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{standardize, Dataset};
use crate::error::{Error, Result};
use crate::solver::{FitResult, SolutionPath};

/// Fits below this fraction of `‖y‖²` count as interpolating.
const DEGENERATE_SSE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HbicConfig {
    /// Penalty multiplier `C_n`.
    pub c_n: f64,
    /// Largest admissible model size `K_n`.
    pub k_n: usize,
}

impl HbicConfig {
    /// `C_n = log log n`, `K_n = ⌈n / log n⌉`.
    pub fn for_n(n: usize) -> Self {
        let nf = n as f64;
        HbicConfig {
            c_n: nf.ln().ln(),
            k_n: (nf / nf.ln()).ceil() as usize,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_n > 0.0) {
            return Err(Error::InvalidArgument(format!("C_n must be > 0, got {}", self.c_n)));
        }
        if self.k_n < 1 {
            return Err(Error::InvalidArgument("K_n must be >= 1".into()));
        }
        Ok(())
    }
}

/// `log(sse / n) + model_size · C_n · log(p) / n`.
pub fn hbic_score(sse: f64, model_size: usize, n: usize, p: usize, c_n: f64) -> Result<f64> {
    if !(sse > 0.0) || !sse.is_finite() {
        return Err(Error::DegenerateSse);
    }
    let nf = n as f64;
    Ok((sse / nf).ln() + model_size as f64 * c_n * (p as f64).ln() / nf)
}

/// HBIC of every path point; `None` for interpolating fits.
pub fn hbic_scores(path: &SolutionPath, c_n: f64) -> Vec<Option<f64>> {
    let nf = path.n as f64;
    path.fits
        .iter()
        .zip(&path.sigma2)
        .map(|(fit, s2)| {
            let sse = s2 * nf;
            if sse <= DEGENERATE_SSE_RTOL * path.y_norm2 {
                return None;
            }
            hbic_score(sse, fit.model_size(), path.n, path.p, c_n).ok()
        })
        .collect()
}

/// Minimizes HBIC over path points with `|M_λ| ≤ K_n`. Ties go to the larger λ.
pub fn select_hbic(path: &SolutionPath, cfg: &HbicConfig) -> Result<(f64, FitResult)> {
    let idx = select_hbic_index(path, cfg)?;
    Ok((path.lambdas[idx], path.fits[idx].clone()))
}

pub fn select_hbic_index(path: &SolutionPath, cfg: &HbicConfig) -> Result<usize> {
    cfg.validate()?;
    if path.is_empty() {
        return Err(Error::InvalidArgument("empty solution path".into()));
    }
    let scores = hbic_scores(path, cfg.c_n);
    let mut best: Option<(usize, f64)> = None;
    for (i, score) in scores.iter().enumerate() {
        let Some(s) = *score else { continue };
        if path.fits[i].model_size() > cfg.k_n {
            continue;
        }
        let better = match best {
            None => true,
            Some((bi, bs)) => s < bs || (s == bs && path.lambdas[i] > path.lambdas[bi]),
        };
        if better {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
        .ok_or(Error::AllExcluded { k_n: cfg.k_n })
}

/// Fills `path.hbic` in place.
pub fn score_path(path: &mut SolutionPath, c_n: f64) {
    path.hbic = hbic_scores(path, c_n);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { folds: 5, seed: 0 }
    }
}

/// Deterministic fold label for every observation.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 || folds > n {
        return Err(Error::InvalidArgument(format!(
            "folds must satisfy 2 <= folds <= n = {n}, got {folds}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut label = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        label[i] = pos % folds;
    }
    Ok(label)
}

/// Outcome of [`cv_select`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSelection {
    pub lambda: f64,
    pub index: usize,
    pub fit: FitResult,
    /// Mean held-out squared error per evaluated grid point.
    pub cv_error: Vec<f64>,
}

/// K-fold cross-validation over a decreasing grid.
///
/// `fitter(train, grid)` returns fits along a prefix of `grid` (a fitter may
/// stop early). Only grid points reached in every fold are candidates. The
/// selected λ is refitted on the full data.
pub fn cv_select<F>(data: &Dataset, fitter: F, grid: &[f64], cfg: &CvConfig) -> Result<CvSelection>
where
    F: Fn(&Dataset, &[f64]) -> Result<Vec<FitResult>>,
{
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    let n = data.n();
    let labels = fold_assignment(n, cfg.folds, cfg.seed)?;
    let mut err_sum = vec![0.0; grid.len()];
    let mut reached = grid.len();
    for fold in 0..cfg.folds {
        let train: Vec<usize> = (0..n).filter(|&i| labels[i] != fold).collect();
        let test: Vec<usize> = (0..n).filter(|&i| labels[i] == fold).collect();
        let train_y: Vec<f64> = train.iter().map(|&i| data.y[i]).collect();
        let train_ds = standardize(&data.design.select_rows(&train), &train_y, data.centered)?;
        let test_x = data.design.select_rows(&test);
        let fits = fitter(&train_ds, grid)?;
        reached = reached.min(fits.len());
        for (k, fit) in fits.iter().enumerate().take(reached) {
            let pred = train_ds.predict(&test_x, &fit.beta)?;
            let sse: f64 = test
                .iter()
                .zip(&pred)
                .map(|(&i, yhat)| (data.y[i] - yhat).powi(2))
                .sum();
            err_sum[k] += sse;
        }
    }
    if reached == 0 {
        return Err(Error::InvalidArgument("fitter returned no fits".into()));
    }
    let cv_error: Vec<f64> = err_sum[..reached].iter().map(|s| s / n as f64).collect();
    let mut index = 0;
    for (k, e) in cv_error.iter().enumerate() {
        if *e < cv_error[index] {
            index = k;
        }
    }
    let full = fitter(data, &grid[..=index])?;
    let fit = full
        .into_iter()
        .nth(index)
        .ok_or_else(|| Error::InvalidArgument("refit on full data stopped early".into()))?;
    Ok(CvSelection {
        lambda: grid[index],
        index,
        fit,
        cv_error,
    })
}
