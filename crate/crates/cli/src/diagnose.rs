//! `diagnose`.

use serde::Serialize;
use sparsepen::diagnostics::{kkt_violation, l2_bound_check, xi_min, KktReport, L2BoundCheck};
use sparsepen::logistic::{logistic_kkt_violation, BinaryDataset};
use sparsepen::{oracle_fit, standardize, TrueModel};

use crate::args::DiagnoseArgs;
use crate::error::{CliError, CliResult};
use crate::fit::FitReport;
use crate::io::{read_table, write_json, Table};

#[derive(Debug, Serialize)]
struct LogisticKkt {
    max_violation: f64,
    tolerance: f64,
    satisfied: bool,
}

#[derive(Debug, Serialize)]
struct XiMin {
    support: Vec<usize>,
    m: usize,
    xi_min: f64,
}

#[derive(Debug, Default, Serialize)]
struct Diagnosis {
    #[serde(skip_serializing_if = "Option::is_none")]
    kkt: Option<KktReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    logistic_kkt: Option<LogisticKkt>,
    #[serde(skip_serializing_if = "Option::is_none")]
    xi_min: Option<XiMin>,
    #[serde(skip_serializing_if = "Option::is_none")]
    l2_bound: Option<L2BoundCheck>,
}

/// Resolves `--support` entries given as column names or 0-based indices.
fn parse_support(spec: &str, table: &Table) -> CliResult<Vec<usize>> {
    let mut out = Vec::new();
    for tok in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let j = match table.predictors.iter().position(|h| h == tok) {
            Some(j) => j,
            None => tok
                .parse::<usize>()
                .ok()
                .filter(|&j| j < table.predictors.len())
                .ok_or_else(|| CliError::usage(format!("--support: unknown column '{tok}'")))?,
        };
        out.push(j);
    }
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        return Err(CliError::usage("--support is empty"));
    }
    Ok(out)
}

pub fn cmd_diagnose(args: &DiagnoseArgs) -> CliResult<()> {
    if !(args.kkt || args.xi_min || args.l2_bound) {
        return Err(CliError::usage("choose at least one of --kkt, --xi-min, --l2-bound"));
    }
    let text = std::fs::read_to_string(&args.fit)
        .map_err(|e| CliError::usage(format!("{}: {e}", args.fit.display())))?;
    let fit: FitReport = serde_json::from_str(&text)?;
    let table = read_table(&args.data, args.response.as_deref().or(Some(&fit.response)))?;
    if table.predictors != fit.predictors {
        return Err(CliError::usage("data columns do not match the fit"));
    }
    let support = args.support.as_deref().map(|s| parse_support(s, &table)).transpose()?;
    if (args.xi_min || args.l2_bound || args.oracle) && support.is_none() {
        return Err(CliError::usage("--xi-min, --l2-bound and --oracle need --support"));
    }
    let mut out = Diagnosis::default();

    if fit.family == "logistic" {
        if args.xi_min || args.l2_bound {
            return Err(CliError::usage("--xi-min and --l2-bound apply to gaussian fits only"));
        }
        let data = BinaryDataset::standardize(&table.x, &table.y, fit.centered)?;
        let beta = data.design.to_internal(&fit.coefficients);
        let b0 = fit.intercept + dot_center(&data.design, &fit.coefficients);
        let v = logistic_kkt_violation(&data, &fit.penalty, fit.lambda, &beta, b0);
        let k = LogisticKkt {
            max_violation: v,
            tolerance: args.tol,
            satisfied: v <= args.tol,
        };
        println!("kkt max violation {:.3e} (tol {:.1e}): {}", k.max_violation, k.tolerance, verdict(k.satisfied));
        out.logistic_kkt = Some(k);
    } else {
        let data = standardize(&table.x, &table.y, fit.centered)?;
        let beta = match (&support, args.oracle) {
            (Some(s), true) => oracle_fit(&data, s)?.beta,
            _ => data.design.to_internal(&fit.coefficients),
        };
        if args.kkt {
            let k = kkt_violation(&beta, &data, &fit.penalty, fit.lambda).at_tolerance(args.tol);
            println!(
                "kkt nonzero {:.3e}, zero {:.3e} (tol {:.1e}): {}",
                k.max_violation_nonzero,
                k.max_violation_zero,
                k.tolerance,
                verdict(k.satisfied)
            );
            out.kkt = Some(k);
        }
        if args.xi_min {
            let s = support.clone().unwrap_or_default();
            let m = args.m.unwrap_or(s.len() + 1);
            let xi = xi_min(&data, &s, m)?;
            println!("xi_min(m = {m}) = {xi:.6}");
            out.xi_min = Some(XiMin { support: s, m, xi_min: xi });
        }
        if args.l2_bound {
            let s = support.clone().unwrap_or_default();
            let mut b = vec![0.0; data.p()];
            for &j in &s {
                b[j] = 1.0;
            }
            let c = l2_bound_check(&beta, &data, &TrueModel::new(b), fit.lambda, args.u_n)?;
            println!(
                "l2 bound: |beta - oracle| = {:.6e} <= {:.6e} (m = {}, xi_min = {:.6}): {}",
                c.lhs,
                c.rhs,
                c.m,
                c.xi_min,
                verdict(c.holds)
            );
            out.l2_bound = Some(c);
        }
    }
    if let Some(path) = &args.out {
        write_json(path, &out)?;
    }
    Ok(())
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "satisfied"
    } else {
        "violated"
    }
}

/// `Σ_j c_j m_j`: converts an input-scale intercept back to the internal one.
fn dot_center(design: &sparsepen::Design, coef: &[f64]) -> f64 {
    design.col_center().iter().zip(coef).map(|(m, c)| m * c).sum()
}
