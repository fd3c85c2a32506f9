use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use volterra::harness::{
    evaluate_checks, run_strong_error_study, run_trajectory_demo, write_study_outputs, write_trajectories,
    ExperimentConfig,
};
use volterra::model::validate_noise_regularity;
use volterra::special_functions::{ml_eval, MlParams};
use volterra::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "volterra", version, about = "Strong-error studies for stochastic Volterra equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a strong-error study and write errors.csv, slopes.csv and meta.json.
    Run {
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Compare the fitted slopes with the `[check]` thresholds; exit 4 on failure.
        #[arg(long)]
        check: bool,
        /// Override the worker count from the config (0 = all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Write sample trajectories on the single configured grid.
    Demo {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check a config and report on the noise regularity.
    Validate { config: PathBuf },
    /// Evaluate E_{a,b}(x).
    #[command(hide = true)]
    MlEval {
        a: f64,
        b: f64,
        #[arg(allow_hyphen_values = true)]
        x: f64,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InsufficientLevels(_) | Error::InvalidParameter(_) => EXIT_CONFIG,
        e if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_FAILURE,
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Error> {
    ExperimentConfig::from_file(path)
}

fn run(config: &Path, out: &Path, check: bool, workers: Option<usize>) -> Result<u8, Error> {
    let mut cfg = load(config)?;
    if let Some(w) = workers {
        cfg.study.workers = w;
    }
    let result = run_strong_error_study(&cfg)?;
    let table = result.table();
    println!("metric {}, sampler {}", table.metric.as_str(), result.sampler.as_str());
    println!("{:<6} {:>8} {:>14} {:>12}", "method", "steps", "strong_error", "stderr");
    for r in &table.rows {
        println!("{:<6} {:>8} {:>14.6e} {:>12.3e}", r.method.as_str(), r.steps, r.strong_error, r.stderr);
    }
    for (m, fit) in &table.slopes {
        match fit {
            Some(f) => println!("slope {m}: {:.4} (90% CI {:.4} .. {:.4})", f.slope, f.ci_lo, f.ci_hi),
            None => println!("slope {m}: no fit"),
        }
    }
    for c in &result.clamp_events {
        println!("clamped covariance for mode {} (lambda {}): {:e}", c.mode, c.lambda, c.clamp);
    }
    for n in &result.notes {
        println!("note: {n}");
    }
    for p in write_study_outputs(out, &cfg, &result)? {
        println!("wrote {}", p.display());
    }
    if check {
        let outcome = evaluate_checks(&cfg, &result);
        for line in &outcome.lines {
            println!("{line}");
        }
        if !outcome.passed {
            return Ok(EXIT_CHECK);
        }
    }
    Ok(0)
}

fn demo(config: &Path, out: &Path) -> Result<u8, Error> {
    let cfg = load(config)?;
    let trajectories = run_trajectory_demo(&cfg)?;
    for p in write_trajectories(out, &trajectories)? {
        println!("wrote {}", p.display());
    }
    Ok(0)
}

fn validate(config: &Path) -> Result<u8, Error> {
    let cfg = load(config)?;
    let inst = cfg.instance()?;
    println!("config ok, hash {}", cfg.hash());
    println!(
        "rho {}, {} modes, lambda {:?}",
        inst.kernel.rho(),
        inst.modes(),
        inst.spectrum.lambdas()
    );
    let report = validate_noise_regularity(&inst.spectrum, &inst.kernel)?;
    println!("noise trace {}", report.trace);
    println!("beta estimate {:.6}", report.beta_estimate);
    println!("predicted temporal rate {:.6}", report.predicted_temporal_rate);
    if !report.notes.is_empty() {
        println!("notes: {}", report.notes);
    }
    if let Err(e) = cfg.validate_study() {
        println!("not usable for a convergence study: {e}");
    }
    Ok(0)
}

fn ml(a: f64, b: f64, x: f64) -> Result<u8, Error> {
    println!("{:.16e}", ml_eval(MlParams::new(a, b)?, x)?);
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run {
            config,
            out,
            check,
            workers,
        } => run(config, out, *check, *workers),
        Command::Demo { config, out } => demo(config, out),
        Command::Validate { config } => validate(config),
        Command::MlEval { a, b, x } => ml(*a, *b, *x),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
