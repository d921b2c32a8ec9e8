//! Command-line definitions and `key = value` config files.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sparsepen::sim::Scenario;
use sparsepen::{PenaltyFamily, PenaltySpec, SolverConfig, TauRule};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "sparsepen", version, about = "Sparse regression with calibrated SCAD/MCP penalties")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a penalized model to CSV data and select the tuning parameter.
    Fit(FitArgs),
    /// Compute and print the full solution path.
    Path(FitArgs),
    /// Run a Monte Carlo campaign.
    Simulate(SimulateArgs),
    /// Check optimality conditions and sparse-eigenvalue bounds for a fit.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Gaussian,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Select {
    Hbic,
    Cv,
}

/// Settings shared by every estimation command.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Penalty family: scad, mcp or l1.
    #[arg(long, default_value = "scad")]
    pub penalty: PenaltyFamily,
    /// Concavity parameter (default 3.7 for SCAD, 3 for MCP).
    #[arg(long)]
    pub a: Option<f64>,
    /// Step-1 calibration: invlogn, lambda or a number in (0, 1].
    #[arg(long, default_value = "invlogn")]
    pub tau: TauRule,
    #[arg(long, default_value_t = 100)]
    pub grid_points: usize,
    #[arg(long, default_value_t = 0.01)]
    pub grid_ratio: f64,
    /// Largest model size admitted by HBIC (default ceil(n / ln n)).
    #[arg(long)]
    pub kn: Option<usize>,
    /// HBIC penalty multiplier (default ln ln n).
    #[arg(long)]
    pub cn: Option<f64>,
    /// Coordinate descent tolerance.
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    /// Defaults file of `key = value` lines; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ModelArgs {
    pub fn penalty_spec(&self) -> CliResult<PenaltySpec> {
        match self.a {
            Some(a) => Ok(PenaltySpec::new(self.penalty, a)?),
            None => Ok(PenaltySpec::with_default_a(self.penalty)),
        }
    }

    pub fn solver(&self) -> CliResult<SolverConfig> {
        let cfg = SolverConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            ..SolverConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate_grid(&self) -> CliResult<()> {
        if self.grid_points == 0 {
            return Err(CliError::usage("--grid-points must be >= 1"));
        }
        if !(self.grid_ratio > 0.0 && self.grid_ratio < 1.0) {
            return Err(CliError::usage("--grid-ratio must lie in (0, 1)"));
        }
        if self.kn == Some(0) {
            return Err(CliError::usage("--kn must be >= 1"));
        }
        if self.cn.is_some_and(|c| !(c > 0.0)) {
            return Err(CliError::usage("--cn must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Training data (CSV with header).
    #[arg(long)]
    pub data: PathBuf,
    /// Response column (default: first column).
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub family: Family,
    #[arg(long, value_enum, default_value = "hbic")]
    pub select: Select,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Fit at this single λ and skip selection.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Held-out CSV with the same columns.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Do not center (no intercept).
    #[arg(long)]
    pub no_center: bool,
    /// JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Coefficient CSV.
    #[arg(long)]
    pub coef: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// case1a | case1b | case1c | case2a | case2b | logit
    pub scenario: Option<Scenario>,
    /// Same as the positional scenario; used by config files.
    #[arg(long = "scenario", hide = true)]
    pub scenario_key: Option<Scenario>,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Comma-separated: new, lasso-cv, scad-cv, hlasso, oracle.
    #[arg(long, default_value = "new,oracle")]
    pub methods: String,
    /// Override the sample size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Override the dimension.
    #[arg(long)]
    pub p: Option<usize>,
    /// Override the noise level.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Hard-threshold multiplier for hlasso.
    #[arg(long, default_value_t = 2.0)]
    pub hlasso_c: f64,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    /// JSON report written by `fit --out`.
    #[arg(long)]
    pub fit: PathBuf,
    /// The data the fit was computed on.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub response: Option<String>,
    /// Report KKT residuals.
    #[arg(long)]
    pub kkt: bool,
    /// Report the smallest sparse eigenvalue over supersets of --support.
    #[arg(long)]
    pub xi_min: bool,
    /// Check the local-solution L2 bound against the oracle on --support.
    #[arg(long)]
    pub l2_bound: bool,
    /// True support, as column names or 0-based indices, comma-separated.
    #[arg(long)]
    pub support: Option<String>,
    /// Subset size for --xi-min (default |support| + 1).
    #[arg(long)]
    pub m: Option<usize>,
    /// Sparsity multiplier for --l2-bound.
    #[arg(long, default_value_t = 1.0)]
    pub u_n: f64,
    /// Replace the fitted coefficients by the oracle estimate on --support.
    #[arg(long)]
    pub oracle: bool,
    /// KKT tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Splices `--config FILE` entries into `argv` just after the subcommand.
/// Keys also given explicitly on the command line are dropped.
pub fn expand_config(argv: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = Some(
                argv.get(i + 1)
                    .ok_or_else(|| CliError::usage("--config needs a file"))?
                    .clone(),
            );
        } else if let Some(rest) = s.strip_prefix("--config=") {
            path = Some(OsString::from(rest));
        }
    }
    let Some(path) = path else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::usage(format!("{}: {e}", PathBuf::from(&path).display())))?;
    let given: Vec<String> = argv
        .iter()
        .filter_map(|a| a.to_str())
        .filter(|a| a.starts_with("--"))
        .map(|a| a.split('=').next().unwrap_or_default().to_string())
        .collect();
    let mut out = argv[..2.min(argv.len())].to_vec();
    for (key, value) in config_entries(&text)? {
        if given.contains(&key) {
            continue;
        }
        out.push(key.into());
        out.extend(value.map(OsString::from));
    }
    out.extend(argv.into_iter().skip(2));
    Ok(out)
}

/// Translates `key = value` lines into flags with optional values.
/// `#` starts a comment; `true`/`false` toggle switches.
fn config_entries(text: &str) -> CliResult<Vec<(String, Option<String>)>> {
    let mut flags = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected key = value", lineno + 1)))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            return Err(CliError::usage(format!("config line {}: invalid key", lineno + 1)));
        }
        match value {
            "true" => flags.push((format!("--{key}"), None)),
            "false" => {}
            v => flags.push((format!("--{key}"), Some(v.to_string()))),
        }
    }
    Ok(flags)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    fn config_flags(text: &str) -> CliResult<Vec<String>> {
        Ok(config_entries(text)?
            .into_iter()
            .flat_map(|(k, v)| std::iter::once(k).chain(v))
            .collect())
    }

    #[test]
    fn config_lines_become_flags() {
        let f = config_flags("# defaults\npenalty = mcp\ngrid_points=20 # short\nno_center = true\nverbose = false\n")
            .unwrap();
        assert_eq!(f, ["--penalty", "mcp", "--grid-points", "20", "--no-center"]);
        assert!(config_flags("just words").is_err());
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "penalty = mcp\ngrid-points = 20\n").unwrap();
        let argv = os(&["sparsepen", "fit", "--data", "d.csv", "--grid-points", "7"]);
        let mut argv = argv;
        argv.push("--config".into());
        argv.push(cfg.clone().into());
        let cli = Cli::try_parse_from(expand_config(argv).unwrap()).unwrap();
        let Command::Fit(a) = cli.command else { panic!() };
        assert_eq!(a.model.grid_points, 7);
        assert_eq!(a.model.penalty, PenaltyFamily::Mcp);
    }

    #[test]
    fn parses_tau_and_penalty() {
        let cli = Cli::try_parse_from(["sparsepen", "fit", "--data", "x.csv", "--tau", "0.3", "--penalty", "l1"]).unwrap();
        let Command::Fit(a) = cli.command else { panic!() };
        assert_eq!(a.model.tau, TauRule::Fixed(0.3));
        assert_eq!(a.model.penalty, PenaltyFamily::L1);
        assert!(Cli::try_parse_from(["sparsepen", "fit", "--data", "x.csv", "--tau", "2"]).is_err());
    }
}
