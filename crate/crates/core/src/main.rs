//! `mcfdm` command-line harness.
//!
//! Exit codes: 0 success, 1 invalid arguments, 2 solver failure, 3 stability
//! rejection.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mcfdm::bench::{
    job_from_json, price_report, render, run_convergence, run_table, run_theta_study, run_timing,
    GridConfig, JobError, JobSpec, MethodSelection, OutputFormat, TableReport, STANDARD_MATURITIES,
};
use mcfdm::monte_carlo::McConfig;
use mcfdm::scheme::ThetaConfig;
use mcfdm::{AlphaProfile, OptionKind, SMaxPolicy};

const EXIT_INVALID: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_STABILITY: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "mcfdm", version, about = "European option pricing: MCFDM vs Crank-Nicolson vs Monte Carlo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Price one contract with one or all methods.
    Price(Common),
    /// Methods-by-maturity comparison table.
    Table(Common),
    /// Median solve time per method.
    Timing {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
    /// MCFDM accuracy as the convection term is enhanced or weakened.
    ThetaStudy {
        #[command(flatten)]
        common: Common,
        /// Theta scalings, comma separated (0 disables convection).
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 1.0, 2.0])]
        scales: Vec<f64>,
    },
    /// Error against the closed form over a family of grids.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Grid as N_SPACExN_TIME; repeatable.
        #[arg(long = "grid", value_parser = parse_grid, default_values = ["50x2000", "100x2000", "200x2000"])]
        grids: Vec<(usize, usize)>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Call,
    Put,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ThetaMode {
    Normalized,
    Literal,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AlphaArg {
    Constant,
    Proportional,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Table,
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct Common {
    /// Base job from a JSON file (a job spec or an emitted JSON report).
    /// Contract, market and solver flags are ignored when given.
    #[arg(long)]
    job: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "call")]
    kind: KindArg,
    #[arg(long, default_value_t = 7.0)]
    spot: f64,
    #[arg(long, default_value_t = 7.5)]
    strike: f64,
    #[arg(long, default_value_t = 0.05)]
    rate: f64,
    #[arg(long, default_value_t = 0.25)]
    vol: f64,
    /// Years to maturity; repeatable for `table`.
    #[arg(long)]
    maturity: Vec<f64>,
    /// MCFDM, CFDM, MonteCarlo, Exact or All.
    #[arg(long, default_value = "All")]
    method: MethodSelection,
    #[arg(long, default_value_t = 100)]
    n_space: usize,
    #[arg(long, default_value_t = 1000)]
    n_time: usize,
    /// `auto` or an explicit upper price bound.
    #[arg(long, default_value = "auto", value_parser = parse_s_max)]
    s_max: SMaxPolicy,
    #[arg(long, default_value_t = 1.0)]
    theta_scale: f64,
    #[arg(long, value_enum, default_value = "normalized")]
    theta_mode: ThetaMode,
    #[arg(long, value_enum, default_value = "constant")]
    alpha: AlphaArg,
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Log-Euler steps per Monte Carlo path.
    #[arg(long, default_value_t = 1)]
    mc_steps: usize,
    #[arg(long)]
    antithetic: bool,
    #[arg(long, value_enum, default_value = "table")]
    format: FormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run explicit steps beyond the stability limit.
    #[arg(long)]
    allow_unstable: bool,
}

fn parse_s_max(s: &str) -> Result<SMaxPolicy, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(SMaxPolicy::Auto);
    }
    s.parse::<f64>()
        .map(SMaxPolicy::Explicit)
        .map_err(|_| format!("expected 'auto' or a number, got '{s}'"))
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected N_SPACExN_TIME, got '{s}'"))?;
    let a = a.trim().parse().map_err(|_| format!("bad n_space in '{s}'"))?;
    let b = b.trim().parse().map_err(|_| format!("bad n_time in '{s}'"))?;
    Ok((a, b))
}

impl Common {
    /// Job plus the maturity list it was built with.
    fn job(&self) -> Result<(JobSpec, Vec<f64>), String> {
        if let Some(path) = &self.job {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            let mut job = job_from_json(&text).map_err(|e| e.to_string())?;
            job.format = self.format.into();
            job.out = self.out.clone();
            let maturities = if self.maturity.is_empty() {
                vec![job.maturity]
            } else {
                self.maturity.clone()
            };
            job.maturity = maturities[0];
            return Ok((job, maturities));
        }

        let maturities = if self.maturity.is_empty() {
            vec![1.0]
        } else {
            self.maturity.clone()
        };
        let kind = match self.kind {
            KindArg::Call => OptionKind::Call,
            KindArg::Put => OptionKind::Put,
        };
        let job = JobSpec {
            method: self.method,
            kind,
            spot: self.spot,
            strike: self.strike,
            maturity: maturities[0],
            rate: self.rate,
            sigma: self.vol,
            alpha: match self.alpha {
                AlphaArg::Constant => AlphaProfile::Constant,
                AlphaArg::Proportional => AlphaProfile::Proportional,
            },
            grid: GridConfig {
                n_space: self.n_space,
                n_time: self.n_time,
                s_max: self.s_max,
            },
            theta: ThetaConfig {
                scaling: self.theta_scale,
                normalize: matches!(self.theta_mode, ThetaMode::Normalized),
                ..Default::default()
            },
            mc: McConfig {
                n_paths: self.paths,
                seed: self.seed,
                n_time_steps: self.mc_steps,
                antithetic: self.antithetic,
            },
            allow_unstable: self.allow_unstable,
            format: self.format.into(),
            out: self.out.clone(),
        };
        Ok((job, maturities))
    }
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Table => OutputFormat::Table,
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

fn emit(report: &TableReport, job: &JobSpec) -> ExitCode {
    let text = match render(report, job.format) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_SOLVER);
        }
    };
    match &job.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(EXIT_INVALID);
            }
        }
        None => print!("{text}"),
    }
    for failure in report.failures() {
        eprintln!("row failed: {}", failure.message);
    }
    if report.has_stability_failure() {
        ExitCode::from(EXIT_STABILITY)
    } else if report.failures().next().is_some() {
        ExitCode::from(EXIT_SOLVER)
    } else {
        ExitCode::SUCCESS
    }
}

fn job_failure(e: JobError) -> ExitCode {
    eprintln!("error: {e}");
    match e.source {
        mcfdm::PricingError::Stability { .. } => ExitCode::from(EXIT_STABILITY),
        mcfdm::PricingError::InvalidInput(_) => ExitCode::from(EXIT_INVALID),
        _ => ExitCode::from(EXIT_SOLVER),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let common = match &cli.command {
        Command::Price(c) | Command::Table(c) => c,
        Command::Timing { common, .. }
        | Command::ThetaStudy { common, .. }
        | Command::Convergence { common, .. } => common,
    };
    let (job, maturities) = match common.job() {
        Ok(j) => j,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_INVALID);
        }
    };

    let report = match &cli.command {
        Command::Price(_) => price_report(&job),
        Command::Table(c) if c.maturity.is_empty() && c.job.is_none() => {
            run_table(&STANDARD_MATURITIES, &job)
        }
        Command::Table(_) => run_table(&maturities, &job),
        Command::Timing { repeats, .. } => run_timing(&job, *repeats),
        Command::ThetaStudy { scales, .. } => run_theta_study(scales, &job),
        Command::Convergence { grids, .. } => run_convergence(grids, &job),
    };
    match report {
        Ok(report) => emit(&report, &job),
        Err(e) => job_failure(e),
    }
}
