//! Command-line interface behind the `monosplit` binary.
//!
//! Three subcommands: `run` drives one method on one problem and can write a
//! per-iteration trace CSV, `bench` runs a method-by-problem matrix and
//! writes a report CSV, `validate` runs the sampling-based operator checks.
//!
//! Exit codes: 0 success, 1 non-convergence (or failed validation),
//! 2 usage error, 3 i/o error.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::bench::{
    assemble, emit_report, emit_trace_csv, materialize, registry, registry_problem, run_matrix,
    start_point, MatrixOverrides, ProblemSpec,
};
use crate::error::{Error, Result};
use crate::splitting::{default_gamma, run, Method, RunConfig, StopRule};

#[derive(Parser, Debug)]
#[command(
    name = "monosplit",
    about = "Operator-splitting solvers for monotone inclusions",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one method on one problem.
    Run(RunArgs),
    /// Run a method-by-problem benchmark matrix.
    Bench(BenchArgs),
    /// Run the sampling validators on a problem's operators.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// One of: fbs, fbfs, frbs, rfbs, srfb.
    #[arg(long)]
    method: String,
    /// A registry problem name (see `bench --problems all`) unless a config
    /// file supplies a custom problem.
    #[arg(long, default_value = "")]
    problem: String,
    /// Stepsize: a number, or `auto` for 0.9x the method's admissible bound.
    #[arg(long, default_value = "auto")]
    gamma: String,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    /// Write the per-iteration trace CSV here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Accept a stepsize outside the method's admissible range.
    #[arg(long, default_value_t = false)]
    unsafe_gamma: bool,
    /// Stop on `natural_residual` (default) or `step_norm`.
    #[arg(long, default_value = "natural_residual")]
    stop_rule: String,
    /// JSON config document; its fields override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Comma-separated list of methods, or `all`.
    #[arg(long, default_value = "all")]
    methods: String,
    /// Comma-separated list of registry problems, or `all`.
    #[arg(long, default_value = "all")]
    problems: String,
    /// Write the machine-readable report CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fixed stepsize for every cell (default: per-cell 0.9x bound).
    #[arg(long)]
    gamma: Option<f64>,
    /// Run type-incompatible cells anyway to demonstrate divergence.
    #[arg(long, default_value_t = false)]
    divergence_demo: bool,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// A registry problem name, or `all`.
    #[arg(long, default_value = "all")]
    problem: String,
}

/// Overridable run settings accepted in the JSON config document.
#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSettings {
    gamma: Option<f64>,
    max_iter: Option<usize>,
    tol: Option<f64>,
    stop_rule: Option<String>,
    epsilon: Option<f64>,
    zeta: Option<f64>,
    xi: Option<f64>,
    unsafe_gamma: Option<bool>,
}

/// The JSON config document: an optional custom problem plus optional run
/// settings. Unknown keys are rejected.
#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    problem: Option<ProblemSpec>,
    run: Option<RunSettings>,
}

fn load_config(path: &PathBuf) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))
}

fn parse_stop_rule(name: &str) -> Result<StopRule> {
    match name {
        "natural_residual" => Ok(StopRule::NaturalResidual),
        "step_norm" => Ok(StopRule::StepNorm),
        other => Err(Error::Config(format!(
            "unknown stop rule '{other}' (expected natural_residual or step_norm)"
        ))),
    }
}

fn parse_methods(list: &str) -> Result<Vec<Method>> {
    if list == "all" {
        return Ok(Method::ALL.to_vec());
    }
    list.split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.trim().parse())
        .collect()
}

fn parse_problems(list: &str) -> Result<Vec<ProblemSpec>> {
    if list == "all" {
        return Ok(registry());
    }
    list.split(',')
        .filter(|s| !s.is_empty())
        .map(|s| registry_problem(s.trim()))
        .collect()
}

fn cmd_run(args: &RunArgs) -> Result<i32> {
    let method: Method = args.method.parse()?;
    let config_file = match &args.config {
        Some(path) => load_config(path)?,
        None => ConfigFile::default(),
    };
    let spec = match config_file.problem {
        Some(spec) => spec,
        None => {
            if args.problem.is_empty() {
                return Err(Error::Config(
                    "pass --problem <name> or a --config with a problem".into(),
                ));
            }
            registry_problem(&args.problem)?
        }
    };

    let mut config = RunConfig::new(1.0);
    config.tol = args.tol;
    config.max_iter = args.max_iter;
    config.stop_rule = parse_stop_rule(&args.stop_rule)?;
    config.allow_unsafe_gamma = args.unsafe_gamma;
    let mut gamma_request = args.gamma.clone();
    if let Some(run_settings) = config_file.run {
        if let Some(g) = run_settings.gamma {
            gamma_request = format!("{g}");
        }
        if let Some(v) = run_settings.max_iter {
            config.max_iter = v;
        }
        if let Some(v) = run_settings.tol {
            config.tol = v;
        }
        if let Some(v) = run_settings.stop_rule {
            config.stop_rule = parse_stop_rule(&v)?;
        }
        if let Some(v) = run_settings.epsilon {
            config.epsilon = v;
        }
        if let Some(v) = run_settings.zeta {
            config.zeta = v;
        }
        if let Some(v) = run_settings.xi {
            config.xi = v;
        }
        if let Some(v) = run_settings.unsafe_gamma {
            config.allow_unsafe_gamma = v;
        }
    }

    // resolve the stepsize, then rebuild with factor caches primed for it
    let probe = materialize(&spec, &[])?;
    let assembled = assemble(method, &probe)?;
    config.gamma = match gamma_request.as_str() {
        "auto" => default_gamma(method, &assembled, &config)?,
        text => text
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("--gamma expects a number or 'auto', got '{text}'")))?,
    };
    let mat = materialize(&spec, &[config.gamma])?;
    let problem = assemble(method, &mat)?;

    // record the descent diagnostic when a solution is on file
    if let Some(sol) = &mat.known_solution {
        if sol.dim() == problem.dim() {
            config.record_lyapunov = Some(sol.clone());
        }
    }

    let start = start_point(&mat, problem.dim());
    let trace = run(method, &problem, (start.clone(), start), &config)?;

    if let Some(path) = &args.trace {
        emit_trace_csv(&trace, path)?;
    }
    let residual = trace.final_residual().unwrap_or(f64::NAN);
    println!(
        "{} on {}: {} after {} iterations (residual {:.3e}, gamma {:.6}, B-calls {}, C-calls {})",
        method,
        mat.name,
        if trace.converged { "converged" } else { "NOT converged" },
        trace.iterations(),
        residual,
        config.gamma,
        trace.forward_calls_b,
        trace.forward_calls_c,
    );
    Ok(if trace.converged { 0 } else { 1 })
}

fn cmd_bench(args: &BenchArgs) -> Result<i32> {
    let methods = parse_methods(&args.methods)?;
    let problems = parse_problems(&args.problems)?;
    let overrides = MatrixOverrides {
        gamma: args.gamma,
        divergence_demo: args.divergence_demo,
        max_iter: args.max_iter,
        tol: args.tol,
    };
    let report = run_matrix(&methods, &problems, &overrides)?;
    print!("{}", report.to_text_table());
    if let Some(path) = &args.out {
        emit_report(&report, path)?;
        println!("report written to {}", path.display());
    }
    Ok(0)
}

fn cmd_validate(args: &ValidateArgs) -> Result<i32> {
    let problems = parse_problems(&args.problem)?;
    let mut all_passed = true;
    for spec in &problems {
        let mat = materialize(spec, &[0.1, 1.0, 10.0])?;
        println!("== {}", spec.name);
        for report in crate::bench::validate_problem(&mat)? {
            println!("  {report}");
            all_passed &= report.passed;
        }
    }
    Ok(if all_passed { 0 } else { 1 })
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Io(_) => 3,
        Error::Diverged { .. } => 1,
        _ => 2,
    }
}

/// Parses `args` and executes; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            // clap prints its own message; --help/--version are successes
            let code = if err.use_stderr() { 2 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Validate(args) => cmd_validate(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}
