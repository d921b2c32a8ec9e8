//! `simulate`.

use sparsepen::selection::CvConfig;
use sparsepen::sim::{run_monte_carlo, Method, ResponseKind, SimConfig, SimReport};
use sparsepen::baselines::HlassoConfig;

use crate::args::SimulateArgs;
use crate::error::{CliError, CliResult};
use crate::io::write_json;

pub fn parse_methods(list: &str) -> CliResult<Vec<Method>> {
    let methods = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Method>().map_err(|e| CliError::usage(e.to_string())))
        .collect::<CliResult<Vec<_>>>()?;
    if methods.is_empty() {
        return Err(CliError::usage("--methods is empty"));
    }
    Ok(methods)
}

fn print_report(report: &SimReport) {
    let logistic = report.design.is_logistic();
    print!("{:<10} {:>5} {:>8} {:>8} {:>8} {:>10}", "method", "ok", "TP", "FP", "TM", "MSE");
    if logistic {
        print!(" {:>10}", "misclass");
    }
    println!();
    for s in &report.methods {
        print!("{:<10} {:>5}", s.method.label(), s.n_ok);
        match &s.metrics {
            Some(m) => print!(" {:>8.3} {:>8.3} {:>8.3} {:>10.4}", m.tp, m.fp, m.tm, m.mse),
            None => print!(" {:>8} {:>8} {:>8} {:>10}", "-", "-", "-", "-"),
        }
        if logistic {
            match s.misclassification {
                Some(e) => print!(" {e:>10.4}"),
                None => print!(" {:>10}", "-"),
            }
        }
        println!();
        for f in &s.failures {
            eprintln!("  {} rep {}: {}", s.method.label(), f.rep, f.message);
        }
    }
    eprintln!(
        "{} reps in {:.1} s",
        report.reps,
        report.wall_time.as_secs_f64()
    );
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let scenario = args
        .scenario
        .or(args.scenario_key)
        .ok_or_else(|| CliError::usage("missing scenario (case1a, case1b, case1c, case2a, case2b, logit)"))?;
    if args.reps == 0 {
        return Err(CliError::usage("--reps must be >= 1"));
    }
    if args.threads == Some(0) {
        return Err(CliError::usage("--threads must be >= 1"));
    }
    let m = &args.model;
    m.validate_grid()?;
    let mut design = scenario.design(m.seed);
    if args.n.is_some() || args.p.is_some() {
        let (n, p) = (args.n.unwrap_or(design.n), args.p.unwrap_or(design.p));
        design = design.resized(n, p);
    }
    if let Some(sigma) = args.sigma {
        match &mut design.response {
            ResponseKind::Gaussian { sigma: s } => *s = sigma,
            ResponseKind::Logistic { .. } => {
                return Err(CliError::usage("--sigma does not apply to the logistic scenario"))
            }
        }
    }
    let methods = parse_methods(&args.methods)?;
    let cfg = SimConfig {
        solver: m.solver()?,
        penalty: m.penalty_spec()?,
        tau: m.tau,
        grid_points: m.grid_points,
        grid_ratio: m.grid_ratio,
        c_n: m.cn,
        k_n: m.kn,
        cv: CvConfig {
            folds: args.folds,
            seed: m.seed,
        },
        hlasso: HlassoConfig { c: args.hlasso_c },
        threads: args.threads,
        ..SimConfig::default()
    };
    let report = run_monte_carlo(&design, &methods, args.reps, &cfg)?;
    print_report(&report);
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    Ok(())
}
