//! Benchmark harness: pricing jobs, comparison tables, timing, theta and
//! convergence studies, and the report formats the CLI emits.

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crank_nicolson::solve_crank_nicolson;
use crate::error::PricingError;
use crate::model::{
    build_grid, AlphaProfile, MarketParams, Method, OptionContract, OptionKind, PricingResult,
    SMaxPolicy,
};
use crate::monte_carlo::{price_monte_carlo, McConfig};
use crate::oracle::black_scholes_price;
use crate::scheme::{solve_mcfdm, SolveOptions, ThetaConfig};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Maturity labels used in the comparison tables.
pub const STANDARD_MATURITIES: [f64; 3] = [0.25, 0.5, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum MethodSelection {
    #[serde(rename = "MCFDM")]
    Mcfdm,
    #[serde(rename = "CFDM")]
    Cfdm,
    #[serde(rename = "MonteCarlo")]
    MonteCarlo,
    #[serde(rename = "Exact")]
    Exact,
    #[default]
    #[serde(rename = "All")]
    All,
}

impl MethodSelection {
    pub fn methods(&self) -> Vec<Method> {
        match self {
            MethodSelection::Mcfdm => vec![Method::Mcfdm],
            MethodSelection::Cfdm => vec![Method::Cfdm],
            MethodSelection::MonteCarlo => vec![Method::MonteCarlo],
            MethodSelection::Exact => vec![Method::Exact],
            MethodSelection::All => vec![Method::Exact, Method::Mcfdm, Method::Cfdm, Method::MonteCarlo],
        }
    }
}

impl std::str::FromStr for MethodSelection {
    type Err = PricingError;

    fn from_str(s: &str) -> Result<Self, PricingError> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(MethodSelection::All);
        }
        Ok(match s.parse::<Method>()? {
            Method::Mcfdm => MethodSelection::Mcfdm,
            Method::Cfdm => MethodSelection::Cfdm,
            Method::MonteCarlo => MethodSelection::MonteCarlo,
            Method::Exact => MethodSelection::Exact,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Table,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub n_space: usize,
    pub n_time: usize,
    pub s_max: SMaxPolicy,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n_space: 100,
            n_time: 1000,
            s_max: SMaxPolicy::Auto,
        }
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    #[serde(default)]
    pub method: MethodSelection,
    pub kind: OptionKind,
    pub spot: f64,
    pub strike: f64,
    pub maturity: f64,
    pub rate: f64,
    pub sigma: f64,
    #[serde(default)]
    pub alpha: AlphaProfile,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub theta: ThetaConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub allow_unstable: bool,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub out: Option<std::path::PathBuf>,
}

impl JobSpec {
    /// Default job for a contract: 100 x 1000 grid, neutral theta, 100k paths.
    pub fn new(kind: OptionKind, spot: f64, strike: f64, maturity: f64, rate: f64, sigma: f64) -> Self {
        JobSpec {
            method: MethodSelection::All,
            kind,
            spot,
            strike,
            maturity,
            rate,
            sigma,
            alpha: AlphaProfile::Constant,
            grid: GridConfig::default(),
            theta: ThetaConfig::default(),
            mc: McConfig::default(),
            allow_unstable: false,
            format: OutputFormat::Table,
            out: None,
        }
    }

    pub fn with_method(mut self, method: MethodSelection) -> Self {
        self.method = method;
        self
    }

    pub fn with_maturity(&self, maturity: f64) -> Self {
        JobSpec {
            maturity,
            ..self.clone()
        }
    }

    pub fn contract(&self) -> Result<OptionContract, PricingError> {
        OptionContract::new(self.kind, self.strike, self.maturity, self.spot)
    }

    pub fn market(&self) -> Result<MarketParams, PricingError> {
        MarketParams::with_profile(self.rate, self.sigma, self.alpha)
    }

    pub fn validate(&self) -> Result<(), PricingError> {
        self.contract()?;
        self.market()?;
        self.theta.validate()?;
        self.mc.validate()?;
        build_grid(&self.contract()?, self.grid.n_space, self.grid.n_time, self.grid.s_max)?;
        Ok(())
    }

    /// Closed-form price for this job's contract and market.
    pub fn exact_price(&self) -> Result<f64, PricingError> {
        Ok(black_scholes_price(&self.contract()?, &self.market()?))
    }

    fn echo(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|_| format!("{self:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{source} [job: {job}]")]
pub struct JobError {
    pub job: String,
    #[source]
    pub source: PricingError,
}

impl JobError {
    fn new(job: &JobSpec, source: PricingError) -> Self {
        JobError {
            job: job.echo(),
            source,
        }
    }

    pub fn is_stability(&self) -> bool {
        matches!(self.source, PricingError::Stability { .. })
    }
}

fn run_method(job: &JobSpec, method: Method) -> Result<PricingResult, PricingError> {
    let contract = job.contract()?;
    let market = job.market()?;
    let grid = || build_grid(&contract, job.grid.n_space, job.grid.n_time, job.grid.s_max);
    match method {
        Method::Exact => {
            let start = Instant::now();
            let price = black_scholes_price(&contract, &market);
            let elapsed = start.elapsed().as_secs_f64();
            Ok(PricingResult {
                method: Method::Exact,
                price,
                abs_error: Some(0.0),
                elapsed_seconds: elapsed,
                diagnostics: Default::default(),
            })
        }
        Method::Mcfdm => {
            let disc = grid()?;
            let options = SolveOptions {
                allow_unstable: job.allow_unstable,
                keep_surface: false,
            };
            Ok(solve_mcfdm(&contract, &market, &disc, &job.theta, options)?.result)
        }
        Method::Cfdm => solve_crank_nicolson(&contract, &market, &grid()?),
        Method::MonteCarlo => price_monte_carlo(&contract, &market, &job.mc),
    }
}

/// Run the job's selected method(s). `All` yields Exact, MCFDM, CFDM and
/// Monte Carlo in that order.
pub fn run_price(job: &JobSpec) -> Result<Vec<PricingResult>, JobError> {
    job.validate().map_err(|e| JobError::new(job, e))?;
    job.method
        .methods()
        .into_iter()
        .map(|m| run_method(job, m).map_err(|e| JobError::new(job, e)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportKind {
    Price,
    Table,
    Timing,
    ThetaStudy,
    Convergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureKind {
    Stability,
    Solver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowFailure {
    pub kind: FailureKind,
    pub message: String,
}

impl From<&PricingError> for RowFailure {
    fn from(e: &PricingError) -> Self {
        let kind = match e {
            PricingError::Stability { .. } => FailureKind::Stability,
            _ => FailureKind::Solver,
        };
        RowFailure {
            kind,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: Method,
    pub maturity_years: f64,
    pub price: Option<f64>,
    pub abs_error: Option<f64>,
    pub elapsed_seconds: Option<f64>,
    pub se: Option<f64>,
    pub theta_scale: Option<f64>,
    pub n_space: Option<usize>,
    pub n_time: Option<usize>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub oscillation: Option<bool>,
    #[serde(default)]
    pub cfl_margin: Option<f64>,
    #[serde(default)]
    pub error: Option<RowFailure>,
}

impl ReportRow {
    fn empty(method: Method, maturity: f64) -> Self {
        ReportRow {
            method,
            maturity_years: maturity,
            price: None,
            abs_error: None,
            elapsed_seconds: None,
            se: None,
            theta_scale: None,
            n_space: None,
            n_time: None,
            paths: None,
            seed: None,
            oscillation: None,
            cfl_margin: None,
            error: None,
        }
    }

    /// Row for a finished solve. `abs_error` is recomputed from the closed
    /// form for the row's own inputs.
    fn from_result(job: &JobSpec, maturity: f64, result: &PricingResult) -> Self {
        let exact = job.with_maturity(maturity).exact_price().ok();
        let d = &result.diagnostics;
        ReportRow {
            method: result.method,
            maturity_years: maturity,
            price: Some(result.price),
            abs_error: exact.map(|e| (result.price - e).abs()),
            elapsed_seconds: Some(result.elapsed_seconds),
            se: d.std_error,
            theta_scale: d.theta_scale,
            n_space: d.n_space,
            n_time: d.n_time,
            paths: d.paths,
            seed: d.seed,
            oscillation: d.oscillation,
            cfl_margin: d.cfl_margin,
            error: None,
        }
    }

    fn failed(job: &JobSpec, method: Method, maturity: f64, e: &PricingError) -> Self {
        let mut row = ReportRow::empty(method, maturity);
        match method {
            Method::Mcfdm => {
                row.theta_scale = Some(job.theta.scaling);
                row.n_space = Some(job.grid.n_space);
                row.n_time = Some(job.grid.n_time);
            }
            Method::Cfdm => {
                row.n_space = Some(job.grid.n_space);
                row.n_time = Some(job.grid.n_time);
            }
            Method::MonteCarlo => {
                row.paths = Some(job.mc.n_paths);
                row.seed = Some(job.mc.seed);
            }
            Method::Exact => {}
        }
        row.error = Some(e.into());
        row
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub generated_unix: u64,
    pub job: JobSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub report: ReportKind,
    pub provenance: Provenance,
    pub rows: Vec<ReportRow>,
    /// Observed orders between consecutive rows of a convergence study.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub observed_orders: Vec<Option<f64>>,
}

impl TableReport {
    fn new(report: ReportKind, job: &JobSpec, rows: Vec<ReportRow>) -> Self {
        let generated_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        TableReport {
            report,
            provenance: Provenance {
                tool_version: TOOL_VERSION.to_string(),
                generated_unix,
                job: job.clone(),
            },
            rows,
            observed_orders: Vec::new(),
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &RowFailure> {
        self.rows.iter().filter_map(|r| r.error.as_ref())
    }

    pub fn has_stability_failure(&self) -> bool {
        self.failures().any(|f| f.kind == FailureKind::Stability)
    }

    pub fn rows_for(&self, method: Method) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(move |r| r.method == method)
    }
}

/// Report for a single `price` run.
pub fn price_report(job: &JobSpec) -> Result<TableReport, JobError> {
    let results = run_price(job)?;
    let rows = results
        .iter()
        .map(|r| ReportRow::from_result(job, job.maturity, r))
        .collect();
    Ok(TableReport::new(ReportKind::Price, job, rows))
}

/// One row per (maturity, method). Failed rows carry the error and the
/// remaining rows are still produced.
pub fn run_table(maturities: &[f64], base: &JobSpec) -> Result<TableReport, JobError> {
    if maturities.is_empty() {
        return Err(JobError::new(base, PricingError::invalid("no maturities given")));
    }
    let cells: Vec<(f64, Method)> = maturities
        .iter()
        .flat_map(|&t| base.method.methods().into_iter().map(move |m| (t, m)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(t, method)| {
            let job = base.with_maturity(t);
            match job.validate().and_then(|_| run_method(&job, method)) {
                Ok(result) => ReportRow::from_result(&job, t, &result),
                Err(e) => ReportRow::failed(&job, method, t, &e),
            }
        })
        .collect();
    Ok(TableReport::new(ReportKind::Table, base, rows))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median solve time per method over `repeats` runs after one warm-up.
///
/// Compares MCFDM, CFDM and Monte Carlo unless the job selects a single
/// method.
pub fn run_timing(job: &JobSpec, repeats: usize) -> Result<TableReport, JobError> {
    if repeats < 3 {
        return Err(JobError::new(job, PricingError::invalid("timing needs at least 3 repeats")));
    }
    job.validate().map_err(|e| JobError::new(job, e))?;
    let methods = match job.method {
        MethodSelection::All => vec![Method::Mcfdm, Method::Cfdm, Method::MonteCarlo],
        other => other.methods(),
    };
    let mut rows = Vec::with_capacity(methods.len());
    for method in methods {
        let row = match run_method(job, method) {
            Err(e) => ReportRow::failed(job, method, job.maturity, &e),
            Ok(_) => {
                let mut times = Vec::with_capacity(repeats);
                let mut last = None;
                for _ in 0..repeats {
                    let result = run_method(job, method).map_err(|e| JobError::new(job, e))?;
                    times.push(result.elapsed_seconds);
                    last = Some(result);
                }
                let result = last.expect("repeats >= 3");
                let mut row = ReportRow::from_result(job, job.maturity, &result);
                row.elapsed_seconds = Some(median(&mut times));
                row
            }
        };
        rows.push(row);
    }
    Ok(TableReport::new(ReportKind::Timing, job, rows))
}

/// One MCFDM row per theta scaling, sorted by scaling. A scaling of 0 turns
/// the convection term off.
pub fn run_theta_study(scalings: &[f64], base: &JobSpec) -> Result<TableReport, JobError> {
    if scalings.is_empty() {
        return Err(JobError::new(base, PricingError::invalid("no theta scalings given")));
    }
    if let Some(bad) = scalings.iter().find(|k| !(k.is_finite() && **k >= 0.0)) {
        return Err(JobError::new(
            base,
            PricingError::invalid(format!("theta scaling must be >= 0, got {bad}")),
        ));
    }
    let mut sorted = scalings.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rows = sorted
        .par_iter()
        .map(|&k| {
            let mut job = base.clone();
            job.method = MethodSelection::Mcfdm;
            job.theta.scaling = k;
            match job.validate().and_then(|_| run_method(&job, Method::Mcfdm)) {
                Ok(result) => ReportRow::from_result(&job, job.maturity, &result),
                Err(e) => ReportRow::failed(&job, Method::Mcfdm, job.maturity, &e),
            }
        })
        .collect();
    Ok(TableReport::new(ReportKind::ThetaStudy, base, rows))
}

/// Error against the closed form for each grid in the family, plus observed
/// orders `ln(e_coarse / e_fine) / ln(n_fine / n_coarse)` between
/// consecutive rows that both succeeded.
///
/// Uses the job's method; `All` runs MCFDM and CFDM.
pub fn run_convergence(grids: &[(usize, usize)], base: &JobSpec) -> Result<TableReport, JobError> {
    if grids.is_empty() {
        return Err(JobError::new(base, PricingError::invalid("no grids given")));
    }
    let methods = match base.method {
        MethodSelection::Mcfdm => vec![Method::Mcfdm],
        MethodSelection::Cfdm => vec![Method::Cfdm],
        MethodSelection::All => vec![Method::Mcfdm, Method::Cfdm],
        _ => {
            return Err(JobError::new(
                base,
                PricingError::invalid("convergence studies need a grid method (MCFDM or CFDM)"),
            ))
        }
    };
    let mut rows = Vec::new();
    let mut orders = Vec::new();
    for method in methods {
        let method_rows: Vec<ReportRow> = grids
            .par_iter()
            .map(|&(n_space, n_time)| {
                let mut job = base.clone();
                job.grid.n_space = n_space;
                job.grid.n_time = n_time;
                match job.validate().and_then(|_| run_method(&job, method)) {
                    Ok(result) => ReportRow::from_result(&job, job.maturity, &result),
                    Err(e) => ReportRow::failed(&job, method, job.maturity, &e),
                }
            })
            .collect();
        for pair in method_rows.windows(2) {
            let order = match (pair[0].abs_error, pair[1].abs_error, pair[0].n_space, pair[1].n_space) {
                (Some(ec), Some(ef), Some(nc), Some(nf)) if nc != nf && ef > 0.0 && ec > 0.0 => {
                    Some((ec / ef).ln() / (nf as f64 / nc as f64).ln())
                }
                _ => None,
            };
            orders.push(order);
        }
        rows.extend(method_rows);
    }
    let mut report = TableReport::new(ReportKind::Convergence, base, rows);
    report.observed_orders = orders;
    Ok(report)
}

/// Scientific notation with three significant digits, e.g. `2.39E-3`.
pub fn format_error(value: f64) -> String {
    format!("{value:.2E}")
}

pub const CSV_HEADER: [&str; 11] = [
    "method",
    "maturity_years",
    "price",
    "abs_error",
    "elapsed_seconds",
    "se",
    "theta_scale",
    "n_space",
    "n_time",
    "paths",
    "seed",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn to_csv(report: &TableReport) -> Result<String, PricingError> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let io = |e: csv::Error| PricingError::invalid(format!("csv: {e}"));
    writer.write_record(CSV_HEADER).map_err(io)?;
    for row in &report.rows {
        writer
            .write_record([
                row.method.label().to_string(),
                row.maturity_years.to_string(),
                opt(row.price),
                opt(row.abs_error),
                opt(row.elapsed_seconds),
                opt(row.se),
                opt(row.theta_scale),
                opt(row.n_space),
                opt(row.n_time),
                opt(row.paths),
                opt(row.seed),
            ])
            .map_err(io)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| PricingError::invalid(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| PricingError::invalid(format!("csv: {e}")))
}

pub fn to_json(report: &TableReport) -> Result<String, PricingError> {
    serde_json::to_string_pretty(report).map_err(|e| PricingError::invalid(format!("json: {e}")))
}

fn maturity_label(t: f64) -> String {
    let months = t * 12.0;
    if (t - t.round()).abs() < 1e-12 {
        format!("{}Y", t.round())
    } else if (months - months.round()).abs() < 1e-9 {
        format!("{}M", months.round())
    } else {
        format!("{t}y")
    }
}

fn cell(row: &ReportRow) -> String {
    match (&row.error, row.price, row.abs_error) {
        (Some(f), _, _) => format!("failed ({:?})", f.kind).to_lowercase(),
        (None, Some(p), Some(e)) if row.method != Method::Exact => format!("{p:.5} ({})", format_error(e)),
        (None, Some(p), _) => format!("{p:.5}"),
        _ => String::new(),
    }
}

fn render_grid(header: Vec<String>, body: Vec<Vec<String>>) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for line in &body {
        for (w, c) in widths.iter_mut().zip(line) {
            *w = (*w).max(c.len());
        }
    }
    let fmt_line = |cells: &[String]| {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            if i + 1 == cols {
                s.push_str(c);
            } else {
                s.push_str(&format!("{c:<w$}", w = widths[i]));
            }
        }
        s.trim_end().to_string()
    };
    let mut out = fmt_line(&header);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (cols - 1)));
    out.push('\n');
    for line in &body {
        out.push_str(&fmt_line(line));
        out.push('\n');
    }
    out
}

/// Human-readable rendering. Tables use the methods-by-maturity layout with
/// `price (error)` cells; everything else lists rows.
pub fn to_human(report: &TableReport) -> String {
    let job = &report.provenance.job;
    let mut out = format!(
        "{} {}: S0={} K={} r={} sigma={} | grid {}x{} ({:?}) | theta k={} ({}) | paths={} seed={}\n\n",
        job.kind,
        match report.report {
            ReportKind::Price => "price",
            ReportKind::Table => "table",
            ReportKind::Timing => "timing",
            ReportKind::ThetaStudy => "theta study",
            ReportKind::Convergence => "convergence",
        },
        job.spot,
        job.strike,
        job.rate,
        job.sigma,
        job.grid.n_space,
        job.grid.n_time,
        job.grid.s_max,
        job.theta.scaling,
        if job.theta.normalize { "normalized" } else { "literal" },
        job.mc.n_paths,
        job.mc.seed,
    );

    if report.report == ReportKind::Table {
        let mut maturities: Vec<f64> = Vec::new();
        let mut methods: Vec<Method> = Vec::new();
        for row in &report.rows {
            if !maturities.contains(&row.maturity_years) {
                maturities.push(row.maturity_years);
            }
            if !methods.contains(&row.method) {
                methods.push(row.method);
            }
        }
        let mut header = vec![format!("S0={}", job.spot)];
        header.extend(maturities.iter().map(|t| format!("T: {}", maturity_label(*t))));
        let body = methods
            .iter()
            .map(|m| {
                let mut line = vec![if *m == Method::Exact {
                    m.label().to_string()
                } else {
                    format!("{} (Error)", m.label())
                }];
                for t in &maturities {
                    let c = report
                        .rows
                        .iter()
                        .find(|r| r.method == *m && r.maturity_years == *t)
                        .map(cell)
                        .unwrap_or_default();
                    line.push(c);
                }
                line
            })
            .collect();
        out.push_str(&render_grid(header, body));
    } else {
        let header = ["method", "T", "k", "grid", "price", "abs_error", "elapsed_s", "se", "note"]
            .map(String::from)
            .to_vec();
        let body = report
            .rows
            .iter()
            .map(|r| {
                let grid = match (r.n_space, r.n_time) {
                    (Some(a), Some(b)) => format!("{a}x{b}"),
                    _ => r.paths.map(|p| format!("{p} paths")).unwrap_or_default(),
                };
                let note = match (&r.error, r.oscillation) {
                    (Some(f), _) => f.message.clone(),
                    (None, Some(true)) => "oscillation".to_string(),
                    _ => String::new(),
                };
                vec![
                    r.method.label().to_string(),
                    maturity_label(r.maturity_years),
                    opt(r.theta_scale),
                    grid,
                    r.price.map(|p| format!("{p:.6}")).unwrap_or_default(),
                    r.abs_error.map(format_error).unwrap_or_default(),
                    r.elapsed_seconds.map(|e| format!("{e:.4}")).unwrap_or_default(),
                    r.se.map(format_error).unwrap_or_default(),
                    note,
                ]
            })
            .collect();
        out.push_str(&render_grid(header, body));
        if !report.observed_orders.is_empty() {
            let orders: Vec<String> = report
                .observed_orders
                .iter()
                .map(|o| o.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into()))
                .collect();
            out.push_str(&format!("\nobserved order (consecutive rows): {}\n", orders.join(", ")));
        }
    }
    out
}

pub fn render(report: &TableReport, format: OutputFormat) -> Result<String, PricingError> {
    match format {
        OutputFormat::Table => Ok(to_human(report)),
        OutputFormat::Csv => to_csv(report),
        OutputFormat::Json => to_json(report).map(|mut s| {
            s.push('\n');
            s
        }),
    }
}

/// Parse a JSON document that is either a bare job or a full report, and
/// return the job it describes.
pub fn job_from_json(text: &str) -> Result<JobSpec, PricingError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| PricingError::invalid(format!("json: {e}")))?;
    let job = match value.get("provenance").and_then(|p| p.get("job")) {
        Some(job) => job.clone(),
        None => value,
    };
    serde_json::from_value(job).map_err(|e| PricingError::invalid(format!("job spec: {e}")))
}
