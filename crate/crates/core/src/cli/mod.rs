//! Command-line front end: argument parsing, problem loading and output.

pub mod examples;
pub mod problem;
pub mod report;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::expr::parse;
use crate::obstruction::{characteristic_ode_trace, OdeConfig, OdeTrace};
use problem::{config_for, Options, ProblemError, ProblemFile};
use report::{check_report, verify_report, Report};

/// Exit code for unreadable or invalid input.
pub const EXIT_INPUT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "sympres", version, about = "Checks symplectic resolutions of Poisson structures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Args)]
struct RunFlags {
    #[arg(long)]
    seed: Option<u64>,
    /// Random samples per piece.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Grid nodes per axis, comma separated; one value applies to every axis.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    /// Skip the Jacobi identity check on the declared brackets.
    #[arg(long)]
    no_jacobi: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

impl RunFlags {
    fn options(&self) -> Options {
        Options { seed: self.seed, samples: self.samples, tol: self.tol, grid: self.grid.clone(), ode_step: None }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analyse the target structure only: Jacobi, singular locus, obstruction.
    Check {
        file: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Verify the candidate pieces against the target.
    Verify {
        file: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Integrate du/dp = f(u, v0), with `x` for u and `y` for v0.
    #[command(allow_negative_numbers = true)]
    Ode {
        #[arg(short, long)]
        f: String,
        #[arg(long, default_value_t = 0.0)]
        v0: f64,
        #[arg(long, default_value_t = 0.0)]
        u0: f64,
        /// Start and end of the p interval.
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 10.0])]
        span: Vec<f64>,
        #[arg(long)]
        step: Option<f64>,
        /// Print every stride-th step.
        #[arg(long, default_value_t = 100)]
        stride: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run a bundled example, or all of them as a summary table.
    Examples {
        name: Option<String>,
        #[arg(long, default_value_t = 2)]
        n: u32,
        #[arg(long, default_value_t = 1)]
        m: u32,
        /// Print the example's problem file instead of running it.
        #[arg(long)]
        emit: bool,
        #[command(flatten)]
        flags: RunFlags,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Check,
    Verify,
}

fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn build_report(text: &str, mode: Mode, flags: &RunFlags) -> Result<Report, ProblemError> {
    let file = ProblemFile::from_json(text)?;
    let mut problem = file.build()?;
    problem.options = problem.options.merged(&flags.options());
    let mut cfg = config_for(&problem.options, problem.target.dim())?;
    cfg.check_jacobi = !flags.no_jacobi;
    match mode {
        Mode::Check => check_report(&problem, &cfg, digest(text)),
        Mode::Verify => verify_report(&problem, &cfg, digest(text)),
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    version: &'a str,
    status: &'a str,
    exit_code: i32,
    error: String,
}

fn input_error(out: &mut dyn Write, format: Format, msg: String) -> i32 {
    if format == Format::Json {
        let body = ErrorBody { version: report::VERSION, status: "InputError", exit_code: EXIT_INPUT, error: msg };
        let _ = writeln!(out, "{}", serde_json::to_string_pretty(&body).expect("error bodies serialize"));
    } else {
        eprintln!("error: {msg}");
    }
    EXIT_INPUT
}

fn emit_report(out: &mut dyn Write, format: Format, r: &Report) -> i32 {
    let text = match format {
        Format::Json => r.to_json(),
        Format::Text => r.to_text(),
    };
    let _ = out.write_all(text.as_bytes());
    r.exit_code
}

fn run_text(out: &mut dyn Write, text: &str, mode: Mode, flags: &RunFlags) -> i32 {
    match build_report(text, mode, flags) {
        Ok(r) => emit_report(out, flags.format, &r),
        Err(e) => input_error(out, flags.format, e.to_string()),
    }
}

fn run_file(out: &mut dyn Write, path: &PathBuf, mode: Mode, flags: &RunFlags) -> i32 {
    match std::fs::read_to_string(path) {
        Ok(text) => run_text(out, &text, mode, flags),
        Err(e) => input_error(out, flags.format, format!("cannot read {}: {e}", path.display())),
    }
}

#[derive(Serialize)]
struct OdeOutput<'a> {
    version: &'a str,
    f: String,
    v0: f64,
    u0: f64,
    span: [f64; 2],
    step: f64,
    trace: OdeTrace,
}

fn ode_text(o: &OdeOutput) -> String {
    let mut s = format!("# du/dp = {}, v0 = {}, u0 = {}, step = {}\n", o.f, o.v0, o.u0, o.step);
    s.push_str(&format!("{:>14}  {:>24}\n", "p", "u"));
    for (p, u) in &o.trace.trajectory {
        s.push_str(&format!("{p:>14.6}  {u:>24.15e}\n"));
    }
    let t = &o.trace;
    s.push_str(&format!("# steps {}, max |u| {:e}, blow-up {}\n", t.steps, t.max_abs_u, t.blow_up));
    if let Some(p) = t.stopped_at {
        s.push_str(&format!("# stopped at p = {p}\n"));
    }
    if let Some(e) = &t.domain_error {
        s.push_str(&format!("# domain error: {e}\n"));
    }
    s
}

#[allow(clippy::too_many_arguments)]
fn run_ode(
    out: &mut dyn Write,
    f: &str,
    v0: f64,
    u0: f64,
    span: &[f64],
    step: Option<f64>,
    stride: usize,
    format: Format,
) -> i32 {
    let [p0, p1] = span else {
        return input_error(out, format, format!("--span needs two values, got {}", span.len()));
    };
    let expr = match parse(f) {
        Ok(e) => e,
        Err(e) => return input_error(out, format, format!("equation: {e}")),
    };
    let defaults = OdeConfig::default();
    let cfg = OdeConfig { step: step.unwrap_or(defaults.step), stride, ..defaults };
    let trace = match characteristic_ode_trace(&expr, v0, u0, (*p0, *p1), &cfg) {
        Ok(t) => t,
        Err(e) => return input_error(out, format, e.to_string()),
    };
    let o =
        OdeOutput { version: report::VERSION, f: expr.to_string(), v0, u0, span: [*p0, *p1], step: cfg.step, trace };
    let text = match format {
        Format::Json => serde_json::to_string_pretty(&o).expect("traces serialize") + "\n",
        Format::Text => ode_text(&o),
    };
    let _ = out.write_all(text.as_bytes());
    0
}

/// Status each bundled example is expected to reach. With `n = m` the
/// powers map is a morphism, but its box is too small to cover the target.
fn expected(name: &str, n: u32, m: u32) -> &'static str {
    match name {
        "powers" if n != m => "Refuted",
        "powers" => "Inconclusive",
        _ => "Verified",
    }
}

fn run_examples(out: &mut dyn Write, name: Option<&str>, n: u32, m: u32, emit: bool, flags: &RunFlags) -> i32 {
    if let Some(name) = name {
        let text = match examples::source(name, n, m) {
            Ok(t) => t,
            Err(e) => return input_error(out, flags.format, e),
        };
        if emit {
            let _ = out.write_all(text.as_bytes());
            return 0;
        }
        return run_text(out, &text, Mode::Verify, flags);
    }
    if emit {
        return input_error(out, flags.format, "--emit needs an example name".into());
    }
    let mut reports = Vec::new();
    for name in examples::NAMES {
        let text = examples::source(name, n, m).expect("bundled examples exist");
        match build_report(&text, Mode::Verify, flags) {
            Ok(r) => reports.push((name, r)),
            Err(e) => return input_error(out, flags.format, format!("example {name}: {e}")),
        }
    }
    let all_expected = reports.iter().all(|(name, r)| r.status == expected(name, n, m));
    match flags.format {
        Format::Json => {
            let list: Vec<&Report> = reports.iter().map(|(_, r)| r).collect();
            let _ = out.write_all((serde_json::to_string_pretty(&list).expect("reports serialize") + "\n").as_bytes());
        }
        Format::Text => {
            let _ = writeln!(out, "{:<10} {:<14} {:<14} {:>9}", "example", "status", "expected", "coverage");
            for (name, r) in &reports {
                let cov = r.coverage.as_ref().map(|c| format!("{:.4}", c.covered_fraction)).unwrap_or_default();
                let _ = writeln!(out, "{:<10} {:<14} {:<14} {:>9}", name, r.status, expected(name, n, m), cov);
            }
        }
    }
    if all_expected {
        0
    } else {
        1
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Reports go to `out`; diagnostics go to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { 0 };
        }
    };
    match &cli.command {
        Command::Check { file, flags } => run_file(out, file, Mode::Check, flags),
        Command::Verify { file, flags } => run_file(out, file, Mode::Verify, flags),
        Command::Ode { f, v0, u0, span, step, stride, format } => {
            run_ode(out, f, *v0, *u0, span, *step, *stride, *format)
        }
        Command::Examples { name, n, m, emit, flags } => run_examples(out, name.as_deref(), *n, *m, *emit, flags),
    }
}
