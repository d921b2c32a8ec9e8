//! Core data model: datasets, column standardization, the oracle least
//! squares estimator and variable-selection metrics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm2_sq};
use crate::solver::FitResult;

/// Rank test threshold: smallest singular value relative to the largest.
const RANK_RTOL: f64 = 1e-10;

/// A design matrix together with the affine map from the input scale.
///
/// Columns are stored column-major so `col(j)` is a contiguous slice. When
/// `standardized` is set, every column satisfies `x_jᵀx_j / n = 1`.
#[derive(Debug, Clone)]
pub struct Design {
    x: DMatrix<f64>,
    col_scale: Vec<f64>,
    col_center: Vec<f64>,
    standardized: bool,
}

impl Design {
    /// Wraps a matrix as-is, without standardization.
    pub fn raw(x: DMatrix<f64>) -> Self {
        let p = x.ncols();
        Design {
            x,
            col_scale: vec![1.0; p],
            col_center: vec![0.0; p],
            standardized: false,
        }
    }

    /// Scales (and optionally centers) every column so that `x_jᵀx_j / n = 1`.
    pub fn standardize(raw: &DMatrix<f64>, center: bool) -> Result<Self> {
        let (n, p) = raw.shape();
        if n < 2 {
            return Err(Error::DimensionMismatch(format!("need n >= 2 rows, got {n}")));
        }
        if p < 1 {
            return Err(Error::DimensionMismatch("need at least one column".into()));
        }
        let mut x = raw.clone();
        let mut col_scale = Vec::with_capacity(p);
        let mut col_center = Vec::with_capacity(p);
        let nf = n as f64;
        for j in 0..p {
            let col = &mut x.as_mut_slice()[j * n..(j + 1) * n];
            let mean = col.iter().sum::<f64>() / nf;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
            if !(var.sqrt() > 1e-12 * (1.0 + mean.abs())) {
                return Err(Error::ConstantColumn(j));
            }
            let shift = if center { mean } else { 0.0 };
            col.iter_mut().for_each(|v| *v -= shift);
            let scale = (norm2_sq(col) / nf).sqrt();
            col.iter_mut().for_each(|v| *v /= scale);
            col_scale.push(scale);
            col_center.push(shift);
        }
        Ok(Design {
            x,
            col_scale,
            col_center,
            standardized: true,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.x.as_slice()[j * n..(j + 1) * n]
    }

    pub fn col_scale(&self) -> &[f64] {
        &self.col_scale
    }

    pub fn col_center(&self) -> &[f64] {
        &self.col_center
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// `n⁻¹ Xᵀ r`.
    pub fn xt_r(&self, r: &[f64]) -> Vec<f64> {
        let nf = self.n() as f64;
        (0..self.p()).map(|j| dot(self.col(j), r) / nf).collect()
    }

    /// `X β` on the internal (standardized) scale.
    pub fn mul(&self, beta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                axpy(b, self.col(j), &mut out);
            }
        }
        out
    }

    /// Converts internal coefficients to the input scale.
    pub fn to_original(&self, beta: &[f64]) -> Vec<f64> {
        beta.iter().zip(&self.col_scale).map(|(b, s)| b / s).collect()
    }

    /// Converts input-scale coefficients to the internal scale.
    pub fn to_internal(&self, beta: &[f64]) -> Vec<f64> {
        beta.iter().zip(&self.col_scale).map(|(b, s)| b * s).collect()
    }

    /// Maps input-scale rows (n_new × p) into the internal scale.
    pub fn transform(&self, raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if raw.ncols() != self.p() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} columns, got {}",
                self.p(),
                raw.ncols()
            )));
        }
        let mut out = raw.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (c, s) = (self.col_center[j], self.col_scale[j]);
            col.iter_mut().for_each(|v| *v = (*v - c) / s);
        }
        Ok(out)
    }

    /// Copies the listed rows into a new, unstandardized design on the
    /// current internal scale.
    pub fn select_rows(&self, rows: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), self.p(), |i, j| self.x[(rows[i], j)])
    }
}

/// Response vector and design of a linear model.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub design: Design,
    pub y: Vec<f64>,
    pub y_center: f64,
    pub centered: bool,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.design.n()
    }

    pub fn p(&self) -> usize {
        self.design.p()
    }

    /// `y − Xβ` for internal-scale coefficients.
    pub fn residual(&self, beta: &[f64]) -> Vec<f64> {
        let mut r = self.y.clone();
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                axpy(-b, self.design.col(j), &mut r);
            }
        }
        r
    }

    pub fn sse(&self, beta: &[f64]) -> f64 {
        norm2_sq(&self.residual(beta))
    }

    /// `‖n⁻¹Xᵀy‖_∞`, the smallest level at which the Lasso is identically zero.
    pub fn lambda_max(&self) -> f64 {
        self.design
            .xt_r(&self.y)
            .into_iter()
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// Intercept on the input scale implied by centering.
    pub fn intercept(&self, beta: &[f64]) -> f64 {
        let orig = self.design.to_original(beta);
        self.y_center
            - orig
                .iter()
                .zip(self.design.col_center())
                .map(|(b, c)| b * c)
                .sum::<f64>()
    }

    /// Predicts the input-scale response for input-scale rows.
    pub fn predict(&self, raw: &DMatrix<f64>, beta: &[f64]) -> Result<Vec<f64>> {
        if raw.ncols() != self.p() || beta.len() != self.p() {
            return Err(Error::DimensionMismatch(
                "prediction rows or coefficients do not match p".into(),
            ));
        }
        let orig = self.design.to_original(beta);
        let b0 = self.intercept(beta);
        Ok((0..raw.nrows())
            .map(|i| b0 + (0..raw.ncols()).map(|j| raw[(i, j)] * orig[j]).sum::<f64>())
            .collect())
    }
}

/// Builds a [`Dataset`] with unit-norm columns.
///
/// With `center`, the response and columns are mean-centered, which fits an
/// unpenalized intercept implicitly.
pub fn standardize(raw_x: &DMatrix<f64>, raw_y: &[f64], center: bool) -> Result<Dataset> {
    if raw_x.nrows() != raw_y.len() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} rows but y has {} entries",
            raw_x.nrows(),
            raw_y.len()
        )));
    }
    let design = Design::standardize(raw_x, center)?;
    let y_center = if center {
        raw_y.iter().sum::<f64>() / raw_y.len() as f64
    } else {
        0.0
    };
    Ok(Dataset {
        design,
        y: raw_y.iter().map(|v| v - y_center).collect(),
        y_center,
        centered: center,
    })
}

/// The true coefficient vector of a simulation and its support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    pub beta_star: Vec<f64>,
    pub support: Vec<usize>,
    pub q: usize,
    pub d_star: f64,
}

impl TrueModel {
    pub fn new(beta_star: Vec<f64>) -> Self {
        let support = support_of(&beta_star);
        let d_star = support
            .iter()
            .map(|&j| beta_star[j].abs())
            .fold(f64::INFINITY, f64::min);
        TrueModel {
            q: support.len(),
            d_star: if support.is_empty() { 0.0 } else { d_star },
            beta_star,
            support,
        }
    }

    pub fn p(&self) -> usize {
        self.beta_star.len()
    }
}

pub(crate) fn support_of(beta: &[f64]) -> Vec<usize> {
    beta.iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(j, _)| j)
        .collect()
}

/// Averages of TP, FP, TM and squared L2 error over a set of estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: f64,
    pub fp: f64,
    pub tm: f64,
    pub mse: f64,
}

/// Per-estimate selection outcome used to build [`Metrics`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub tp: usize,
    pub fp: usize,
    pub exact: bool,
    pub sq_err: f64,
}

impl SelectionOutcome {
    pub fn of(estimate: &[f64], truth: &TrueModel) -> Result<Self> {
        if estimate.len() != truth.p() {
            return Err(Error::DimensionMismatch(format!(
                "estimate has length {}, truth has p = {}",
                estimate.len(),
                truth.p()
            )));
        }
        let mut tp = 0;
        let mut fp = 0;
        let mut sq_err = 0.0;
        for (b, t) in estimate.iter().zip(&truth.beta_star) {
            match (*b != 0.0, *t != 0.0) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                _ => {}
            }
            sq_err += (b - t) * (b - t);
        }
        Ok(SelectionOutcome {
            tp,
            fp,
            exact: tp == truth.q && fp == 0,
            sq_err,
        })
    }
}

impl Metrics {
    /// Mean of per-estimate outcomes. Summation runs in the given order.
    pub fn from_outcomes(outcomes: &[SelectionOutcome]) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::EmptyList);
        }
        let m = outcomes.len() as f64;
        Ok(Metrics {
            tp: outcomes.iter().map(|o| o.tp as f64).sum::<f64>() / m,
            fp: outcomes.iter().map(|o| o.fp as f64).sum::<f64>() / m,
            tm: outcomes.iter().filter(|o| o.exact).count() as f64 / m,
            mse: outcomes.iter().map(|o| o.sq_err).sum::<f64>() / m,
        })
    }
}

pub fn selection_metrics(estimates: &[Vec<f64>], truth: &TrueModel) -> Result<Metrics> {
    let outcomes = estimates
        .iter()
        .map(|e| SelectionOutcome::of(e, truth))
        .collect::<Result<Vec<_>>>()?;
    Metrics::from_outcomes(&outcomes)
}

/// Unpenalized least squares of `y` on the columns in `support`.
///
/// Returns the coefficients in support order.
pub(crate) fn least_squares(design: &Design, y: &[f64], support: &[usize]) -> Result<Vec<f64>> {
    let n = design.n();
    if support.is_empty() {
        return Ok(Vec::new());
    }
    if support.len() > n {
        return Err(Error::SupportTooLarge {
            size: support.len(),
            limit: n,
        });
    }
    let xs = DMatrix::from_fn(n, support.len(), |i, k| design.col(support[k])[i]);
    let svd = xs.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > RANK_RTOL * smax) {
        return Err(Error::RankDeficient);
    }
    let b = DVector::from_column_slice(y);
    let sol = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(sol.iter().copied().collect())
}

/// Least squares on the given support, zero elsewhere.
pub fn oracle_fit(data: &Dataset, support: &[usize]) -> Result<FitResult> {
    let p = data.p();
    if let Some(&j) = support.iter().find(|&&j| j >= p) {
        return Err(Error::DimensionMismatch(format!("support index {j} out of range")));
    }
    let mut sorted = support.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let coef = least_squares(&data.design, &data.y, &sorted)?;
    let mut beta = vec![0.0; p];
    for (&j, c) in sorted.iter().zip(coef) {
        beta[j] = c;
    }
    let r = data.residual(&beta);
    let nf = data.n() as f64;
    let kkt = sorted
        .iter()
        .map(|&j| (dot(data.design.col(j), &r) / nf).abs())
        .fold(0.0, f64::max);
    Ok(FitResult::unpenalized(beta, kkt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, p, |_, _| rng.random_range(-2.0..3.0))
    }

    #[test]
    fn unit_norm_column_is_unchanged() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, -1.0, 1.0, -1.0]);
        let ds = standardize(&x, &[0.0, 1.0, 2.0, 3.0], false).unwrap();
        assert!((ds.design.col_scale()[0] - 1.0).abs() < 1e-15);
        assert_eq!(ds.design.col(0), &[1.0, -1.0, 1.0, -1.0]);
        assert_eq!(ds.y_center, 0.0);
    }

    #[test]
    fn constant_column_rejected() {
        let x = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 2.0, 2.0, 2.0]);
        assert_eq!(
            standardize(&x, &[0.0; 3], false).unwrap_err(),
            Error::ConstantColumn(1)
        );
        assert_eq!(
            standardize(&x, &[0.0; 3], true).unwrap_err(),
            Error::ConstantColumn(1)
        );
    }

    #[test]
    fn dimension_mismatch_and_small_n() {
        let x = random_matrix(5, 3, 1);
        assert!(matches!(
            standardize(&x, &[0.0; 4], true),
            Err(Error::DimensionMismatch(_))
        ));
        let one = random_matrix(1, 3, 1);
        assert!(matches!(
            standardize(&one, &[0.0], true),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn random_columns_have_unit_mean_square() {
        for center in [false, true] {
            let ds = standardize(&random_matrix(5, 3, 7), &[1.0; 5], center).unwrap();
            for j in 0..3 {
                let c = ds.design.col(j);
                let ms = c.iter().map(|v| v * v).sum::<f64>() / 5.0;
                assert!((ms - 1.0).abs() <= 1e-10);
                if center {
                    assert!(c.iter().sum::<f64>().abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn standardize_is_idempotent() {
        let ds = standardize(&random_matrix(20, 4, 3), &[0.5; 20], true).unwrap();
        let again = standardize(ds.design.matrix(), &ds.y, true).unwrap();
        for j in 0..4 {
            assert!((again.design.col_scale()[j] - 1.0).abs() < 1e-12);
            assert!(again.design.col_center()[j].abs() < 1e-12);
            for (a, b) in again.design.col(j).iter().zip(ds.design.col(j)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn oracle_recovers_noiseless_coefficients() {
        let ds0 = standardize(&random_matrix(30, 6, 11), &[0.0; 30], false).unwrap();
        let beta = [1.5, 0.0, -2.0, 0.0, 0.0, 0.7];
        let y = ds0.design.mul(&beta);
        let ds = Dataset { y, ..ds0 };
        let fit = oracle_fit(&ds, &[5, 0, 2]).unwrap();
        for j in 0..6 {
            assert!((fit.beta[j] - beta[j]).abs() < 1e-8);
        }
        assert_eq!(fit.support, vec![0, 2, 5]);
    }

    #[test]
    fn oracle_empty_support_is_zero() {
        let ds = standardize(&random_matrix(10, 3, 2), &[1.0; 10], false).unwrap();
        let fit = oracle_fit(&ds, &[]).unwrap();
        assert_eq!(fit.beta, vec![0.0; 3]);
        assert!((ds.sse(&fit.beta) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_residual_orthogonal_to_support() {
        let x = random_matrix(40, 8, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ds = standardize(&x, &y, true).unwrap();
        let support = [1, 3, 4];
        let fit = oracle_fit(&ds, &support).unwrap();
        let r = ds.residual(&fit.beta);
        for &j in &support {
            assert!(dot(ds.design.col(j), &r).abs() <= 1e-8 * 40.0);
        }
        assert!(fit.kkt_residual < 1e-10);
    }

    #[test]
    fn oracle_rank_deficient_and_too_large() {
        let mut x = random_matrix(10, 3, 4);
        let c0: Vec<f64> = x.column(0).iter().map(|v| 2.0 * v).collect();
        x.column_mut(2).copy_from_slice(&c0);
        let ds = standardize(&x, &[1.0; 10], false).unwrap();
        assert_eq!(oracle_fit(&ds, &[0, 2]).unwrap_err(), Error::RankDeficient);

        let wide = standardize(&random_matrix(3, 5, 4), &[1.0; 3], false).unwrap();
        assert!(matches!(
            oracle_fit(&wide, &[0, 1, 2, 3]),
            Err(Error::SupportTooLarge { size: 4, limit: 3 })
        ));
    }

    #[test]
    fn metrics_exact_support_and_zero_estimate() {
        let truth = TrueModel::new(vec![3.0, 0.0, -1.5, 0.0]);
        assert_eq!(truth.q, 2);
        assert_eq!(truth.d_star, 1.5);
        let exact = selection_metrics(&[vec![2.9, 0.0, -1.4, 0.0]], &truth).unwrap();
        assert_eq!((exact.tp, exact.fp, exact.tm), (2.0, 0.0, 1.0));
        let zero = selection_metrics(&[vec![0.0; 4]], &truth).unwrap();
        assert_eq!((zero.tp, zero.fp, zero.tm), (0.0, 0.0, 0.0));
        assert!((zero.mse - 11.25).abs() < 1e-12);
        assert_eq!(selection_metrics(&[], &truth).unwrap_err(), Error::EmptyList);
    }

    #[test]
    fn metrics_permutation_invariant() {
        let truth = TrueModel::new(vec![1.0, 0.0, 2.0]);
        let ests = vec![
            vec![1.0, 0.5, 0.0],
            vec![0.0, 0.0, 2.0],
            vec![1.1, 0.0, 1.9],
            vec![0.0, 0.0, 0.0],
        ];
        let a = selection_metrics(&ests, &truth).unwrap();
        let mut rev = ests.clone();
        rev.reverse();
        let b = selection_metrics(&rev, &truth).unwrap();
        assert_eq!((a.tp, a.fp, a.tm), (b.tp, b.fp, b.tm));
        assert!((a.mse - b.mse).abs() < 1e-14);
        assert!(a.tp <= truth.q as f64 && a.tm <= 1.0);
    }

    #[test]
    fn predict_uses_original_scale_and_intercept() {
        let x = random_matrix(25, 2, 8);
        let y: Vec<f64> = (0..25).map(|i| 1.0 + 2.0 * x[(i, 0)] - x[(i, 1)]).collect();
        let ds = standardize(&x, &y, true).unwrap();
        let fit = oracle_fit(&ds, &[0, 1]).unwrap();
        let pred = ds.predict(&x, &fit.beta).unwrap();
        for (a, b) in pred.iter().zip(&y) {
            assert!((a - b).abs() < 1e-9);
        }
        let orig = ds.design.to_original(&fit.beta);
        assert!((orig[0] - 2.0).abs() < 1e-9 && (orig[1] + 1.0).abs() < 1e-9);
        assert!((ds.intercept(&fit.beta) - 1.0).abs() < 1e-9);
    }
}
