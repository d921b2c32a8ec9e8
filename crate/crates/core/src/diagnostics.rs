//! Optimality certificates and finite-sample checks for sparse local minima.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{oracle_fit, Dataset, TrueModel};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm2_sq};
use crate::penalty::PenaltySpec;

/// Exhaustive sparse-eigenvalue search is limited to this many columns.
pub const BRUTE_FORCE_MAX_P: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `max_{β_j ≠ 0} |n⁻¹x_jᵀr − sign(β_j) ṗ_λ(|β_j|)|`
    pub max_violation_nonzero: f64,
    /// `max_{β_j = 0} (|n⁻¹x_jᵀr| − λ)₊`
    pub max_violation_zero: f64,
    pub worst_index: Option<usize>,
    pub tolerance: f64,
    pub satisfied: bool,
}

impl KktReport {
    pub fn max_violation(&self) -> f64 {
        self.max_violation_nonzero.max(self.max_violation_zero)
    }

    /// Re-evaluates `satisfied` at a different tolerance.
    pub fn at_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self.satisfied = self.max_violation() <= tolerance;
        self
    }
}

/// Stationarity check for the penalized least squares objective.
///
/// The report's `satisfied` flag uses tolerance 0; call
/// [`KktReport::at_tolerance`] to judge at a working tolerance.
pub fn kkt_violation(beta: &[f64], data: &Dataset, spec: &PenaltySpec, lambda: f64) -> KktReport {
    let n = data.n() as f64;
    let r = data.residual(beta);
    let mut nonzero = 0.0f64;
    let mut zero = 0.0f64;
    let mut worst: Option<(usize, f64)> = None;
    for (j, &b) in beta.iter().enumerate() {
        let c = dot(data.design.col(j), &r) / n;
        let v = if b != 0.0 {
            let v = (c - b.signum() * spec.deriv(b.abs(), lambda)).abs();
            nonzero = nonzero.max(v);
            v
        } else {
            let v = (c.abs() - lambda).max(0.0);
            zero = zero.max(v);
            v
        };
        if worst.is_none_or(|(_, w)| v > w) {
            worst = Some((j, v));
        }
    }
    KktReport {
        max_violation_nonzero: nonzero,
        max_violation_zero: zero,
        worst_index: worst.map(|(j, _)| j),
        tolerance: 0.0,
        satisfied: nonzero.max(zero) <= 0.0,
    }
}

fn gram_min_eigen(data: &Dataset, cols: &[usize]) -> f64 {
    let n = data.n() as f64;
    let k = cols.len();
    let g = DMatrix::from_fn(k, k, |a, b| {
        dot(data.design.col(cols[a]), data.design.col(cols[b])) / n
    });
    SymmetricEigen::new(g).eigenvalues.min().max(0.0)
}

/// Smallest eigenvalue of `n⁻¹X_BᵀX_B` over every `B ⊇ A₀` with `|B| ≤ m`,
/// by exhaustive enumeration.
pub fn xi_min(data: &Dataset, a0: &[usize], m: usize) -> Result<f64> {
    let p = data.p();
    if p > BRUTE_FORCE_MAX_P {
        return Err(Error::TooLargeForBruteForce {
            p,
            cap: BRUTE_FORCE_MAX_P,
        });
    }
    let mut base = a0.to_vec();
    base.sort_unstable();
    base.dedup();
    if base.iter().any(|&j| j >= p) {
        return Err(Error::DimensionMismatch("support index out of range".into()));
    }
    if m < base.len() {
        return Err(Error::Precondition(format!(
            "m = {m} is smaller than |A0| = {}",
            base.len()
        )));
    }
    if m == 0 {
        return Err(Error::Precondition("m must be >= 1".into()));
    }
    let rest: Vec<usize> = (0..p).filter(|j| !base.contains(j)).collect();
    let extra_max = (m - base.len()).min(rest.len());
    let mut best = f64::INFINITY;
    // Enumerate subsets of `rest` of size 0..=extra_max via bitmasks.
    for mask in 0u32..(1u32 << rest.len()) {
        let extra = mask.count_ones() as usize;
        if extra > extra_max || (extra == 0 && base.is_empty()) {
            continue;
        }
        let mut cols = base.clone();
        cols.extend(
            rest.iter()
                .enumerate()
                .filter(|(k, _)| mask & (1 << k) != 0)
                .map(|(_, &j)| j),
        );
        best = best.min(gram_min_eigen(data, &cols));
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L2BoundCheck {
    /// `‖β̂ − β̂⁽ᵒ⁾‖₂`
    pub lhs: f64,
    /// `2λ √(q u*) / ξ_min(q u*)` with `u* = u_n + 1`.
    pub rhs: f64,
    pub holds: bool,
    /// Sparse-eigenvalue order `m = ⌊q u*⌋` (capped at p).
    pub m: usize,
    pub xi_min: f64,
}

/// Compares the distance from a sparse local solution to the oracle
/// estimator against the sparse-eigenvalue bound.
pub fn l2_bound_check(
    beta_hat: &[f64],
    data: &Dataset,
    truth: &TrueModel,
    lambda: f64,
    u_n: f64,
) -> Result<L2BoundCheck> {
    if beta_hat.len() != data.p() || truth.p() != data.p() {
        return Err(Error::DimensionMismatch("beta_hat, truth and data disagree on p".into()));
    }
    if !(u_n > 0.0) {
        return Err(Error::InvalidArgument(format!("u_n must be > 0, got {u_n}")));
    }
    let q = truth.q as f64;
    let nnz = beta_hat.iter().filter(|b| **b != 0.0).count();
    if nnz as f64 > q * u_n {
        return Err(Error::Precondition(format!(
            "estimate has {nnz} nonzeros, more than q * u_n = {}",
            q * u_n
        )));
    }
    let u_star = u_n + 1.0;
    let m = ((q * u_star).floor() as usize).min(data.p()).max(truth.q.max(1));
    let xi = xi_min(data, &truth.support, m)?;
    let oracle = oracle_fit(data, &truth.support)?;
    let diff: Vec<f64> = beta_hat.iter().zip(&oracle.beta).map(|(a, b)| a - b).collect();
    let lhs = norm2_sq(&diff).sqrt();
    let rhs = if xi > 0.0 {
        2.0 * lambda * (q * u_star).sqrt() / xi
    } else {
        f64::INFINITY
    };
    Ok(L2BoundCheck {
        lhs,
        rhs,
        holds: lhs <= rhs,
        m,
        xi_min: xi,
    })
}
