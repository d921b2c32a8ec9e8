//! `fit` and `path`.

use serde::{Deserialize, Serialize};
use sparsepen::logistic::{
    hbic_logistic, logistic_calibrated_cccp, logistic_lambda_grid, logistic_path,
    logistic_path_hbic, misclassification, BinaryDataset, LogisticFit,
};
use sparsepen::selection::{cv_select, hbic_scores, select_hbic_index, CvConfig, HbicConfig};
use sparsepen::solver::{lambda_grid, path_limited};
use sparsepen::{standardize, Dataset, FitResult, PenaltySpec, SolutionPath, TauRule};

use crate::args::{Family, FitArgs, ModelArgs, Select};
use crate::error::{CliError, CliResult};
use crate::io::{read_matching, read_table, write_coefficients, write_json, Table};

/// One row of the tuning table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub lambda: f64,
    pub size: usize,
    /// `σ̂²` for least squares, deviance / n for logistic fits.
    pub loss: f64,
    pub hbic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub rows: usize,
    pub mse: Option<f64>,
    pub misclassification: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub family: String,
    pub response: String,
    pub predictors: Vec<String>,
    pub centered: bool,
    pub penalty: PenaltySpec,
    pub tau_rule: TauRule,
    pub selection: String,
    pub lambda: f64,
    pub tau: Option<f64>,
    pub intercept: f64,
    /// Input-scale coefficients, one per predictor.
    pub coefficients: Vec<f64>,
    pub support: Vec<String>,
    pub support_index: Vec<usize>,
    pub sigma2: Option<f64>,
    pub deviance: Option<f64>,
    pub kkt_residual: f64,
    pub converged: bool,
    pub hbic: HbicConfig,
    pub path: Vec<PathRow>,
    pub cv_error: Option<Vec<f64>>,
    pub test: Option<TestSummary>,
}

/// A path point with its input-scale coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    #[serde(flatten)]
    pub row: PathRow,
    pub tau: Option<f64>,
    pub intercept: f64,
    pub support: Vec<String>,
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub family: String,
    pub response: String,
    pub predictors: Vec<String>,
    pub centered: bool,
    pub penalty: PenaltySpec,
    pub tau_rule: TauRule,
    pub hbic: HbicConfig,
    pub points: Vec<PathPoint>,
}

fn hbic_config(model: &ModelArgs, n: usize) -> HbicConfig {
    let d = HbicConfig::for_n(n);
    HbicConfig {
        c_n: model.cn.unwrap_or(d.c_n),
        k_n: model.kn.unwrap_or(d.k_n),
    }
}

fn family_name(f: Family) -> String {
    match f {
        Family::Gaussian => "gaussian".into(),
        Family::Logistic => "logistic".into(),
    }
}

fn names(table: &Table, idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&j| table.predictors[j].clone()).collect()
}

fn path_rows(path: &SolutionPath, c_n: f64) -> Vec<PathRow> {
    let scores = hbic_scores(path, c_n);
    (0..path.len())
        .map(|i| PathRow {
            lambda: path.lambdas[i],
            size: path.fits[i].model_size(),
            loss: path.sigma2[i],
            hbic: scores[i],
        })
        .collect()
}

fn logistic_rows(fits: &[LogisticFit], grid: &[f64], n: usize, p: usize, hbic: &HbicConfig) -> Vec<PathRow> {
    fits.iter()
        .zip(grid)
        .map(|(f, &lambda)| PathRow {
            lambda,
            size: f.model_size(),
            loss: f.deviance / n as f64,
            hbic: (f.model_size() <= hbic.k_n).then(|| hbic_logistic(f.deviance, f.model_size(), n, p, hbic.c_n)),
        })
        .collect()
}

fn print_rows(rows: &[PathRow], loss_name: &str, selected: Option<usize>) {
    println!("{:>4} {:>14} {:>6} {:>14} {:>14}", "", "lambda", "size", loss_name, "hbic");
    for (i, r) in rows.iter().enumerate() {
        let mark = if Some(i) == selected { "*" } else { "" };
        let h = r.hbic.map_or("-".to_string(), |h| format!("{h:.6}"));
        println!("{:>4} {:>14.6e} {:>6} {:>14.6} {:>14}", mark, r.lambda, r.size, r.loss, h);
    }
}

fn print_fit(report: &FitReport) {
    println!("family     {}", report.family);
    println!("penalty    {} (a = {})", report.penalty.family(), report.penalty.a());
    println!("selection  {}", report.selection);
    println!("lambda     {:.6e}", report.lambda);
    if let Some(s2) = report.sigma2 {
        println!("sigma^2    {s2:.6}");
    }
    if let Some(d) = report.deviance {
        println!("deviance   {d:.6}");
    }
    println!("support    {} of {}", report.support.len(), report.predictors.len());
    println!("{:>16} {:>20}", "term", "coefficient");
    println!("{:>16} {:>20.10}", "(intercept)", report.intercept);
    for &j in &report.support_index {
        println!("{:>16} {:>20.10}", report.predictors[j], report.coefficients[j]);
    }
    if let Some(t) = &report.test {
        if let Some(m) = t.mse {
            println!("test mse   {m:.6} ({} rows)", t.rows);
        }
        if let Some(m) = t.misclassification {
            println!("test error {m:.6} ({} rows)", t.rows);
        }
    }
}

struct Selected {
    fit: FitResult,
    lambda: f64,
    rows: Vec<PathRow>,
    selected_row: Option<usize>,
    cv_error: Option<Vec<f64>>,
    selection: &'static str,
}

fn select_gaussian(args: &FitArgs, data: &Dataset, spec: &PenaltySpec, hbic: &HbicConfig) -> CliResult<Selected> {
    let m = &args.model;
    let cfg = m.solver()?;
    if let Some(lambda) = args.lambda {
        if !(lambda > 0.0) {
            return Err(CliError::usage("--lambda must be > 0"));
        }
        let path = path_limited(data, spec, &[lambda], m.tau, &cfg, None)?;
        return Ok(Selected {
            rows: path_rows(&path, hbic.c_n),
            fit: path.fits[0].clone(),
            lambda,
            selected_row: Some(0),
            cv_error: None,
            selection: "fixed",
        });
    }
    let grid = lambda_grid(data, m.grid_points, m.grid_ratio)?;
    match args.select {
        Select::Hbic => {
            let path = path_limited(data, spec, &grid, m.tau, &cfg, Some(hbic.k_n))?;
            let idx = select_hbic_index(&path, hbic)?;
            Ok(Selected {
                rows: path_rows(&path, hbic.c_n),
                fit: path.fits[idx].clone(),
                lambda: path.lambdas[idx],
                selected_row: Some(idx),
                cv_error: None,
                selection: "hbic",
            })
        }
        Select::Cv => {
            let cv = CvConfig {
                folds: args.folds,
                seed: m.seed,
            };
            let cap = Some(data.n());
            let sel = cv_select(
                data,
                |d, g| Ok(path_limited(d, spec, g, m.tau, &cfg, cap)?.fits),
                &grid,
                &cv,
            )?;
            let path = path_limited(data, spec, &grid[..sel.cv_error.len()], m.tau, &cfg, cap)?;
            Ok(Selected {
                rows: path_rows(&path, hbic.c_n),
                fit: sel.fit,
                lambda: sel.lambda,
                selected_row: Some(sel.index),
                cv_error: Some(sel.cv_error),
                selection: "cv",
            })
        }
    }
}

fn fit_gaussian(args: &FitArgs, table: &Table) -> CliResult<(FitReport, Option<usize>)> {
    let spec = args.model.penalty_spec()?;
    let data = standardize(&table.x, &table.y, !args.no_center)?;
    let hbic = hbic_config(&args.model, data.n());
    let s = select_gaussian(args, &data, &spec, &hbic)?;
    let coefficients = data.design.to_original(&s.fit.beta);
    let test = match &args.test {
        Some(path) => {
            let t = read_matching(path, table)?;
            let pred = data.predict(&t.x, &s.fit.beta)?;
            let mse = pred.iter().zip(&t.y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / t.y.len() as f64;
            Some(TestSummary {
                rows: t.y.len(),
                mse: Some(mse),
                misclassification: None,
            })
        }
        None => None,
    };
    let report = FitReport {
        family: family_name(Family::Gaussian),
        response: table.response.clone(),
        predictors: table.predictors.clone(),
        centered: data.centered,
        penalty: spec,
        tau_rule: args.model.tau,
        selection: s.selection.into(),
        lambda: s.lambda,
        tau: s.fit.tau,
        intercept: data.intercept(&s.fit.beta),
        support: names(table, &s.fit.support),
        support_index: s.fit.support.clone(),
        sigma2: Some(data.sse(&s.fit.beta) / data.n() as f64),
        deviance: None,
        kkt_residual: s.fit.kkt_residual,
        converged: s.fit.converged,
        hbic,
        path: s.rows,
        cv_error: s.cv_error,
        test,
        coefficients,
    };
    Ok((report, s.selected_row))
}

fn fit_logistic(args: &FitArgs, table: &Table) -> CliResult<(FitReport, Option<usize>)> {
    if args.select == Select::Cv && args.lambda.is_none() {
        return Err(CliError::usage("--select cv is only available for the gaussian family"));
    }
    let m = &args.model;
    let spec = m.penalty_spec()?;
    let cfg = m.solver()?;
    let data = BinaryDataset::standardize(&table.x, &table.y, !args.no_center)?;
    let (n, p) = (data.n(), data.p());
    let hbic = hbic_config(m, n);
    let (fit, rows, idx, selection) = match args.lambda {
        Some(lambda) => {
            if !(lambda > 0.0) {
                return Err(CliError::usage("--lambda must be > 0"));
            }
            let fit = logistic_calibrated_cccp(&data, &spec, lambda, m.tau.resolve(n, lambda), &cfg)?;
            let rows = logistic_rows(std::slice::from_ref(&fit), &[lambda], n, p, &hbic);
            (fit, rows, 0, "fixed")
        }
        None => {
            let grid = logistic_lambda_grid(&data, m.grid_points, m.grid_ratio)?;
            let (fits, idx) = logistic_path_hbic(&data, &spec, &grid, m.tau, &cfg, hbic.c_n, hbic.k_n)?;
            let rows = logistic_rows(&fits, &grid, n, p, &hbic);
            (fits[idx].clone(), rows, idx, "hbic")
        }
    };
    let (coefficients, intercept) = fit.original_coefficients(&data.design);
    let test = match &args.test {
        Some(path) => {
            let t = read_matching(path, table)?;
            Some(TestSummary {
                rows: t.y.len(),
                mse: None,
                misclassification: Some(misclassification(&coefficients, intercept, &t.x, &t.y)),
            })
        }
        None => None,
    };
    let report = FitReport {
        family: family_name(Family::Logistic),
        response: table.response.clone(),
        predictors: table.predictors.clone(),
        centered: data.intercept,
        penalty: spec,
        tau_rule: m.tau,
        selection: selection.into(),
        lambda: fit.lambda,
        tau: fit.tau,
        intercept,
        support: names(table, &fit.support),
        support_index: fit.support.clone(),
        sigma2: None,
        deviance: Some(fit.deviance),
        kkt_residual: fit.kkt_residual,
        converged: fit.converged,
        hbic,
        path: rows,
        cv_error: None,
        test,
        coefficients,
    };
    Ok((report, Some(idx)))
}

pub fn cmd_fit(args: &FitArgs) -> CliResult<()> {
    args.model.validate_grid()?;
    let table = read_table(&args.data, args.response.as_deref())?;
    let (report, selected) = match args.family {
        Family::Gaussian => fit_gaussian(args, &table)?,
        Family::Logistic => fit_logistic(args, &table)?,
    };
    print_fit(&report);
    println!();
    let loss = if args.family == Family::Gaussian { "sigma^2" } else { "deviance/n" };
    print_rows(&report.path, loss, selected);
    if let Some(path) = &args.coef {
        write_coefficients(path, &report.predictors, report.intercept, &report.coefficients)?;
    }
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    Ok(())
}

pub fn cmd_path(args: &FitArgs) -> CliResult<()> {
    let m = &args.model;
    m.validate_grid()?;
    if args.lambda.is_some() {
        return Err(CliError::usage("--lambda is not used by `path`; use `fit --lambda`"));
    }
    let table = read_table(&args.data, args.response.as_deref())?;
    let spec = m.penalty_spec()?;
    let cfg = m.solver()?;
    let (points, hbic) = match args.family {
        Family::Gaussian => {
            let data = standardize(&table.x, &table.y, !args.no_center)?;
            let hbic = hbic_config(m, data.n());
            let grid = lambda_grid(&data, m.grid_points, m.grid_ratio)?;
            let path = path_limited(&data, &spec, &grid, m.tau, &cfg, None)?;
            let rows = path_rows(&path, hbic.c_n);
            let points = rows
                .into_iter()
                .zip(&path.fits)
                .map(|(row, f)| PathPoint {
                    row,
                    tau: f.tau,
                    intercept: data.intercept(&f.beta),
                    support: names(&table, &f.support),
                    coefficients: data.design.to_original(&f.beta),
                })
                .collect::<Vec<_>>();
            (points, hbic)
        }
        Family::Logistic => {
            let data = BinaryDataset::standardize(&table.x, &table.y, !args.no_center)?;
            let hbic = hbic_config(m, data.n());
            let grid = logistic_lambda_grid(&data, m.grid_points, m.grid_ratio)?;
            let fits = logistic_path(&data, &spec, &grid, m.tau, &cfg, None)?;
            let rows = logistic_rows(&fits, &grid, data.n(), data.p(), &hbic);
            let points = rows
                .into_iter()
                .zip(&fits)
                .map(|(row, f)| {
                    let (coefficients, intercept) = f.original_coefficients(&data.design);
                    PathPoint {
                        row,
                        tau: f.tau,
                        intercept,
                        support: names(&table, &f.support),
                        coefficients,
                    }
                })
                .collect::<Vec<_>>();
            (points, hbic)
        }
    };
    let rows: Vec<PathRow> = points.iter().map(|p| p.row.clone()).collect();
    let best = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.hbic.map(|h| (i, h)))
        .fold(None, |acc: Option<(usize, f64)>, (i, h)| match acc {
            Some((_, b)) if b <= h => acc,
            _ => Some((i, h)),
        })
        .map(|(i, _)| i);
    let loss = if args.family == Family::Gaussian { "sigma^2" } else { "deviance/n" };
    print_rows(&rows, loss, best);
    if let Some(path) = &args.coef {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["lambda".to_string(), "(intercept)".to_string()];
        header.extend(table.predictors.iter().cloned());
        w.write_record(&header)?;
        for p in &points {
            let mut rec = vec![crate::io::full(p.row.lambda), crate::io::full(p.intercept)];
            rec.extend(p.coefficients.iter().map(|c| crate::io::full(*c)));
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    if let Some(path) = &args.out {
        let report = PathReport {
            family: family_name(args.family),
            response: table.response.clone(),
            predictors: table.predictors.clone(),
            centered: !args.no_center,
            penalty: spec,
            tau_rule: m.tau,
            hbic,
            points,
        };
        write_json(path, &report)?;
    }
    Ok(())
}
