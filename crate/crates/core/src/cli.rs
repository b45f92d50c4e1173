//! Command-line frontend: `compute`, `audit` and `gen`.
//!
//! Exit codes: 0 success or all checks passed, 1 some audit record failed, 2 input error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::audit::{self, AuditConfig, CheckRecord};
use crate::divergences::{DivergenceSpec, LogBase};
use crate::error::{Error, Result};
use crate::linalg::{c, ComplexMatrix};
use crate::quantities::{compute, Family, OptimizerConfig, QuantityKind};
use crate::sampling::{random_bipartite, random_state, TrialRng};
use crate::states::{BipartiteState, DensityOperator};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "qinv", version, about = "Divergence-based information quantities and their invariance audit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate one quantity on a state file.
    Compute(ComputeArgs),
    /// Run randomized invariance checks and write a report.
    Audit(AuditArgs),
    /// Write a state file.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DivergenceArg {
    Umegaki,
    Petz,
    Sandwiched,
    Geometric,
    Dmax,
    Dh,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LogBaseArg {
    #[value(name = "2")]
    Two,
    #[value(name = "e")]
    E,
}

#[derive(Debug, clap::Args)]
struct ComputeArgs {
    /// I1, I2, I3, I4, H1, H2 or H3.
    #[arg(long)]
    quantity: Family,
    #[arg(long, value_enum)]
    divergence: DivergenceArg,
    /// Order of the Rényi divergences.
    #[arg(long)]
    alpha: Option<f64>,
    /// Smoothing radius; required by I3, I4 and H3. Also the hypothesis-testing
    /// parameter of dh when --test-epsilon is absent.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Hypothesis-testing parameter of dh.
    #[arg(long)]
    test_epsilon: Option<f64>,
    #[arg(long)]
    state: PathBuf,
    #[arg(long, value_enum, default_value = "2")]
    log_base: LogBaseArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Convergence tolerance of the σ_B solver.
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Debug, clap::Args)]
struct AuditArgs {
    /// Comma-separated check names, or `all`.
    #[arg(long, default_value = "all", value_delimiter = ',')]
    checks: Vec<String>,
    /// Trials per record for every check (replaces the per-check defaults).
    #[arg(long)]
    samples: Option<usize>,
    /// Restrict sampled bipartite dimensions to one pair, `AxB`.
    #[arg(long, value_parser = parse_dims)]
    dims: Option<(usize, usize)>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; the report goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall-clock seconds per check (makes reports run-dependent).
    #[arg(long)]
    timing: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StateKind {
    Random,
    Bell,
    Product,
    Maxmixed,
}

#[derive(Debug, clap::Args)]
struct GenArgs {
    #[arg(long, value_parser = parse_dims)]
    dims: (usize, usize),
    #[arg(long, value_enum, default_value = "random")]
    kind: StateKind,
    /// Rank of a random state.
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; the state goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_dims(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected AxB, got '{s}'"))?;
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("expected AxB, got '{s}'"));
    let (a, b) = (parse(a)?, parse(b)?);
    if a == 0 || b == 0 {
        return Err("dimensions must be positive".into());
    }
    Ok((a, b))
}

/// Bipartite state on disk: dims `[A, B]` and a row-major matrix of `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFile {
    pub dims: [usize; 2],
    pub matrix: Vec<Vec<[f64; 2]>>,
}

impl StateFile {
    pub fn from_state(state: &BipartiteState) -> Self {
        let m = state.state().matrix();
        let matrix = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
            .collect();
        Self {
            dims: [state.dim_a(), state.dim_b()],
            matrix,
        }
    }

    pub fn to_state(&self) -> Result<BipartiteState> {
        let [a, b] = self.dims;
        if a == 0 || b == 0 {
            return Err(Error::Validation(format!("dims must be positive, got [{a}, {b}]")));
        }
        let d = a * b;
        if self.matrix.len() != d {
            return Err(Error::Validation(format!(
                "matrix must have {d} rows for dims [{a}, {b}], got {}",
                self.matrix.len()
            )));
        }
        for (i, row) in self.matrix.iter().enumerate() {
            if row.len() != d {
                return Err(Error::Validation(format!("row {i} must have {d} entries, got {}", row.len())));
            }
            if let Some(j) = row.iter().position(|z| !z[0].is_finite() || !z[1].is_finite()) {
                return Err(Error::Validation(format!("entry ({i}, {j}) is not finite")));
            }
        }
        let m = ComplexMatrix::from_fn(d, d, |i, j| c(self.matrix[i][j][0], self.matrix[i][j][1]));
        let worst = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .max_by(|&(i, j), &(k, l)| {
                (m[(i, j)] - m[(j, i)].conj()).norm().total_cmp(&(m[(k, l)] - m[(l, k)].conj()).norm())
            })
            .expect("d ≥ 1");
        let state = DensityOperator::new(m.clone()).map_err(|e| match e {
            Error::Validation(msg) if msg.contains("Hermitian") => {
                Error::Validation(format!("{msg} (largest asymmetry at entry ({}, {}))", worst.0, worst.1))
            }
            other => other,
        })?;
        BipartiteState::new(state, a, b)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

/// Audit report on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub version: String,
    pub config: AuditConfig,
    pub checks: Vec<String>,
    pub records: Vec<CheckRecord>,
    pub pass: bool,
    pub suite_pass: bool,
    /// Seconds per check; present only when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<BTreeMap<String, f64>>,
}

impl ReportFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Runs the whole audit the way the `audit` command does.
pub fn build_report(checks: &[&str], cfg: &AuditConfig, timing: bool) -> Result<ReportFile> {
    cfg.validate()?;
    let mut records = Vec::new();
    let mut timings = BTreeMap::new();
    for check in checks {
        let start = Instant::now();
        records.extend(audit::run_check(check, cfg)?);
        timings.insert(check.to_string(), start.elapsed().as_secs_f64());
    }
    let report = audit::AuditReport {
        master_seed: cfg.master_seed,
        pass: records.iter().all(|r| r.pass),
        suite_pass: records.iter().all(|r| r.pass != r.expected_failure),
        records,
    };
    Ok(ReportFile {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        checks: checks.iter().map(|c| c.to_string()).collect(),
        records: report.records,
        pass: report.pass,
        suite_pass: report.suite_pass,
        timings: timing.then_some(timings),
    })
}

/// `x` with 12 significant digits, trailing zeros dropped; `inf`, `-inf`, `nan` otherwise.
pub fn format_value(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn divergence_spec(args: &ComputeArgs) -> Result<DivergenceSpec> {
    let alpha = || {
        args.alpha
            .ok_or_else(|| Error::Parameter(format!("--alpha is required for {:?}", args.divergence).to_lowercase()))
    };
    let spec = match args.divergence {
        DivergenceArg::Umegaki => DivergenceSpec::umegaki(),
        DivergenceArg::Dmax => DivergenceSpec::max_relative(),
        DivergenceArg::Petz => DivergenceSpec::petz(alpha()?)?,
        DivergenceArg::Sandwiched => DivergenceSpec::sandwiched(alpha()?)?,
        DivergenceArg::Geometric => DivergenceSpec::geometric(alpha()?)?,
        DivergenceArg::Dh => {
            let eps = args.test_epsilon.or(args.epsilon).ok_or_else(|| {
                Error::Parameter("dh needs --test-epsilon (or --epsilon)".into())
            })?;
            DivergenceSpec::hypothesis_testing(eps)?
        }
    };
    let base = match args.log_base {
        LogBaseArg::Two => LogBase::Two,
        LogBaseArg::E => LogBase::E,
    };
    Ok(spec.with_log_base(base))
}

fn cmd_compute(args: &ComputeArgs, out: &mut dyn Write) -> Result<i32> {
    let family = args.quantity;
    if family.is_smoothed() && args.epsilon.is_none() {
        return Err(Error::Parameter(format!("{family} is smoothed and needs --epsilon")));
    }
    let smoothing = if family.is_smoothed() { args.epsilon } else { None };
    let kind = QuantityKind::new(family, smoothing)?;
    let spec = divergence_spec(args)?;
    let rho = StateFile::read(&args.state)?.to_state()?;
    let mut cfg = OptimizerConfig {
        seed: args.seed,
        ..OptimizerConfig::default()
    };
    if let Some(t) = args.tolerance {
        cfg.sigma_tolerance = t;
    }
    cfg.validate()?;
    let result = compute(&kind, &spec, &rho, &cfg)?;
    let unit = match spec.log_base {
        LogBase::Two => "bits",
        LogBase::E => "nats",
    };
    let _ = writeln!(out, "quantity: {family}");
    let _ = writeln!(out, "divergence: {spec}");
    if let Some(e) = smoothing {
        let _ = writeln!(out, "epsilon: {}", format_value(e));
    }
    let _ = writeln!(out, "value: {} {unit}", format_value(result.value));
    let _ = writeln!(out, "exactness: {}", result.exactness.name());
    let _ = writeln!(out, "converged: {}", result.converged);
    Ok(EXIT_OK)
}

fn cmd_audit(args: &AuditArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let checks = audit::resolve_checks(&args.checks)?;
    let mut cfg = AuditConfig {
        master_seed: args.seed,
        ..AuditConfig::default()
    };
    if let Some(n) = args.samples {
        cfg.samples = n;
        cfg.check_samples.clear();
    }
    if let Some((a, b)) = args.dims {
        cfg.dims_a = vec![a];
        cfg.dims_b = vec![b];
    }
    let report = build_report(&checks, &cfg, args.timing)?;
    let summary: &mut dyn Write = if args.out.is_some() { out } else { err };
    for r in &report.records {
        let status = match (r.pass, r.expected_failure) {
            (true, _) => "pass",
            (false, true) => "FAIL (expected)",
            (false, false) => "FAIL",
        };
        let worst = r.worst_violation.map_or("none".to_string(), format_value);
        let _ = writeln!(
            summary,
            "{status:<16} {:<48} worst {worst} (threshold {}, {} samples, {} skipped)",
            r.name,
            format_value(r.threshold),
            r.samples,
            r.skipped
        );
    }
    let json = report.to_json();
    match &args.out {
        Some(path) => std::fs::write(path, json)
            .map_err(|e| Error::Parse(format!("cannot write {}: {e}", path.display())))?,
        None => {
            let _ = out.write_all(json.as_bytes());
        }
    }
    Ok(if report.pass { EXIT_OK } else { EXIT_VIOLATION })
}

fn generate(args: &GenArgs) -> Result<BipartiteState> {
    let (a, b) = args.dims;
    if a * b > 36 {
        return Err(Error::Parameter(format!("dims {a}x{b} exceed desk scale (d_A·d_B ≤ 36)")));
    }
    if args.rank.is_some() && !matches!(args.kind, StateKind::Random) {
        return Err(Error::Parameter("--rank applies only to --kind random".into()));
    }
    let mut rng = TrialRng::new(args.seed);
    Ok(match args.kind {
        StateKind::Random => {
            if let Some(r) = args.rank.filter(|&r| r == 0 || r > a * b) {
                return Err(Error::Parameter(format!("rank {r} outside 1..={}", a * b)));
            }
            random_bipartite(&mut rng, (a, b), args.rank)
        }
        StateKind::Bell => {
            if a != b {
                return Err(Error::Parameter(format!("bell needs equal dimensions, got {a}x{b}")));
            }
            BipartiteState::maximally_entangled(a)
        }
        StateKind::Product => {
            let rho_a = random_state(&mut rng, a, None);
            let rho_b = random_state(&mut rng, b, None);
            BipartiteState::product(&rho_a, &rho_b)
        }
        StateKind::Maxmixed => BipartiteState::maximally_mixed(a, b),
    })
}

fn cmd_gen(args: &GenArgs, out: &mut dyn Write) -> Result<i32> {
    let mut json = StateFile::from_state(&generate(args)?).to_json();
    json.push('\n');
    match &args.out {
        Some(path) => std::fs::write(path, json)
            .map_err(|e| Error::Parse(format!("cannot write {}: {e}", path.display())))?,
        None => {
            let _ = out.write_all(json.as_bytes());
        }
    }
    Ok(EXIT_OK)
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Compute(a) => cmd_compute(a, out),
        Command::Audit(a) => cmd_audit(a, out, err),
        Command::Gen(a) => cmd_gen(a, out),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INPUT
        }
    }
}

/// Process entry point used by the `qinv` binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
