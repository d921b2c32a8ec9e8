//! Comparison estimators: the hard-thresholded Lasso with least squares
//! refit, tuned by HBIC.

use serde::{Deserialize, Serialize};

use crate::data::{oracle_fit, Dataset};
use crate::error::{Error, Result};
use crate::selection::{select_hbic_index, HbicConfig};
use crate::solver::{lasso, lasso_path, FitResult, SolutionPath, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HlassoConfig {
    /// Threshold multiplier: coefficients with `|β_j| ≤ c·λ` are dropped.
    pub c: f64,
}

impl Default for HlassoConfig {
    fn default() -> Self {
        HlassoConfig { c: 2.0 }
    }
}

fn threshold_and_refit(data: &Dataset, lasso_fit: &FitResult, lambda: f64, c: f64) -> Result<FitResult> {
    let eta = c * lambda;
    let survivors: Vec<usize> = lasso_fit
        .support
        .iter()
        .copied()
        .filter(|&j| lasso_fit.beta[j].abs() > eta)
        .collect();
    let limit = data.n() - 1;
    if survivors.len() > limit {
        return Err(Error::TooManySurvivors {
            count: survivors.len(),
            limit,
        });
    }
    let mut fit = oracle_fit(data, &survivors)?;
    fit.lambda = lambda;
    fit.iterations = lasso_fit.iterations;
    fit.converged = lasso_fit.converged;
    fit.max_coord_change = lasso_fit.max_coord_change;
    Ok(fit)
}

/// Lasso at `lambda`, hard threshold at `c·lambda`, then least squares on
/// the survivors.
pub fn hlasso_fit(
    data: &Dataset,
    lambda: f64,
    cfg: &HlassoConfig,
    solver_cfg: &SolverConfig,
) -> Result<FitResult> {
    if !(cfg.c > 0.0) {
        return Err(Error::InvalidArgument(format!("c must be > 0, got {}", cfg.c)));
    }
    let l = lasso(data, lambda, None, solver_cfg)?;
    threshold_and_refit(data, &l, lambda, cfg.c)
}

/// Builds the thresholded-and-refitted path along `grid` and selects by HBIC.
///
/// Grid points whose survivor count exceeds `K_n` are inadmissible for HBIC
/// and are not refitted; the underlying Lasso path stops once its own
/// support exceeds `max(n − 1, K_n)`.
pub fn hlasso_path_select(
    data: &Dataset,
    grid: &[f64],
    cfg: &HlassoConfig,
    hbic_cfg: &HbicConfig,
    solver_cfg: &SolverConfig,
) -> Result<(f64, FitResult)> {
    if !(cfg.c > 0.0) {
        return Err(Error::InvalidArgument(format!("c must be > 0, got {}", cfg.c)));
    }
    let cap = (data.n() - 1).max(hbic_cfg.k_n);
    let lasso_fits = lasso_path(data, grid, solver_cfg, Some(cap))?;
    let mut lambdas = Vec::new();
    let mut fits = Vec::new();
    for (l, &lambda) in lasso_fits.iter().zip(grid) {
        let eta = cfg.c * lambda;
        let count = l.support.iter().filter(|&&j| l.beta[j].abs() > eta).count();
        if count > hbic_cfg.k_n {
            continue;
        }
        match threshold_and_refit(data, l, lambda, cfg.c) {
            Ok(fit) => {
                lambdas.push(lambda);
                fits.push(fit);
            }
            Err(Error::RankDeficient) => continue,
            Err(e) => return Err(e),
        }
    }
    if fits.is_empty() {
        return Err(Error::AllExcluded { k_n: hbic_cfg.k_n });
    }
    let path = SolutionPath::from_fits(data, lambdas, fits);
    let idx = select_hbic_index(&path, hbic_cfg)?;
    Ok((path.lambdas[idx], path.fits[idx].clone()))
}
