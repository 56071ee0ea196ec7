//! `aenlm`: batch runner for guaranteed AE-NLM upper bounds.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use aenlm::engine::{self, EngineState};
use aenlm::suites;
use aenlm::surrogate::fit_minimax;
use aenlm::{Dataset, Error};
use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig, OutputKind};

const EXIT_FAILURE: u8 = 1;
const EXIT_PLANT: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;

#[derive(Parser)]
#[command(name = "aenlm", version, about = "Guaranteed upper bounds on the additive-error nonlinearity measure")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sampling algorithm described by a JSON experiment config.
    Run {
        config: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Fit the minimax causal LTI surrogate to a dataset.
    Fit {
        dataset: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Where to write the surrogate JSON (stdout if absent).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the oracle soundness suites.
    Check {
        #[arg(value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of random relaxation instances.
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        /// Iterations per plant in the 1-D engine suite.
        #[arg(long, default_value_t = 100)]
        iterations: usize,
        /// Multiplies the true Lipschitz constants in the engine suite.
        #[arg(long, default_value_t = 1.0)]
        lipschitz_scale: f64,
    },
    /// Estimate the Lipschitz constant of a dataset from pairwise slopes.
    EstimateL {
        dataset: PathBuf,
        #[arg(long, default_value_t = 1.1)]
        safety: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Relaxation,
    Engine1d,
    All,
}

#[derive(Serialize)]
struct Summary {
    final_phi: f64,
    final_lower: f64,
    iterations: usize,
    plant_queries: u64,
    wall_time_seconds: f64,
    lipschitz: f64,
    all_cells_certified: bool,
}

fn main() -> ExitCode {
    // Usage errors exit 3 so that 2 stays reserved for plant failures.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    let code = match cli.command {
        Command::Run { config, resume } => cmd_run(&config, resume.as_deref()),
        Command::Fit {
            dataset,
            tol,
            output,
        } => cmd_fit(&dataset, tol, output.as_deref()),
        Command::Check {
            suite,
            seed,
            instances,
            iterations,
            lipschitz_scale,
        } => cmd_check(suite, seed, instances, iterations, lipschitz_scale),
        Command::EstimateL { dataset, safety } => cmd_estimate_l(&dataset, safety),
    };
    ExitCode::from(code)
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Plant(_) | Error::TrajectoryDiverged { .. } => EXIT_PLANT,
        Error::InvalidConfig(_)
        | Error::Json(_)
        | Error::Io(_)
        | Error::InvalidInputSet(_)
        | Error::DegenerateBasis { .. }
        | Error::DimensionMismatch { .. } => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    }
}

fn cmd_run(config: &Path, resume: Option<&Path>) -> u8 {
    let started = Instant::now();
    let exp = match ExperimentConfig::load(config).and_then(ExperimentConfig::build) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: invalid config {}: {e}", config.display());
            return EXIT_CONFIG;
        }
    };
    let out = &exp.config.output_dir;
    if let Err(e) = std::fs::create_dir_all(out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return EXIT_CONFIG;
    }

    let mut state = match resume {
        Some(path) => match load_checkpoint(path, &exp) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: cannot resume from {}: {e:#}", path.display());
                return EXIT_CONFIG;
            }
        },
        None => match engine::initialize(&exp.plant, &exp.basis, &exp.config.engine) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: initialisation failed: {e}");
                if let Some(ds) = &e.partial {
                    if let Err(w) = write_file(out, "dataset.json", &ds.to_json().unwrap_or_default()) {
                        eprintln!("error: {w:#}");
                    }
                }
                return exit_code_for(&e.error);
            }
        },
    };

    let mut code = 0;
    while !state.finished() {
        if let Err(e) = state.step(&exp.plant) {
            eprintln!("error: iteration {} failed: {e}", state.k + 1);
            code = exit_code_for(&e);
            break;
        }
    }
    if let Err(e) = write_outputs(&exp, &state, started.elapsed().as_secs_f64()) {
        eprintln!("error: {e:#}");
        return EXIT_FAILURE;
    }
    if code == 0 {
        println!(
            "phi = {:.6e}, lower = {:.6e}, iterations = {}, plant queries = {}",
            state.phi(),
            state.lower,
            state.k,
            state.plant_queries
        );
    }
    code
}

fn load_checkpoint(path: &Path, exp: &Experiment) -> anyhow::Result<EngineState> {
    let text = std::fs::read_to_string(path)?;
    let mut state = EngineState::from_checkpoint(&text)?;
    anyhow::ensure!(
        state.basis == exp.basis,
        "checkpoint input set differs from the config's"
    );
    // The iteration budget and stopping gap may be changed on resume.
    state.config.max_iters = exp.config.engine.max_iters;
    state.config.gap_tol = exp.config.engine.gap_tol;
    Ok(state)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn write_outputs(exp: &Experiment, state: &EngineState, wall: f64) -> anyhow::Result<()> {
    let dir = &exp.config.output_dir;
    let cfg = &exp.config;
    if cfg.wants(OutputKind::History) {
        write_file(dir, "history.csv", &state.history_csv())?;
    }
    if cfg.wants(OutputKind::Cells) {
        write_file(dir, "cells.json", &state.cells_json()?)?;
    }
    if cfg.wants(OutputKind::Dataset) {
        write_file(dir, "dataset.json", &state.dataset.to_json()?)?;
    }
    if cfg.wants(OutputKind::Surrogate) {
        write_file(dir, "surrogate.json", &state.surrogate.to_json()?)?;
    }
    if cfg.wants(OutputKind::Checkpoint) {
        write_file(dir, "checkpoint.json", &state.to_checkpoint()?)?;
    }
    if cfg.wants(OutputKind::Summary) {
        let last = state.history.last().expect("history has the initial row");
        let summary = Summary {
            final_phi: last.phi,
            final_lower: last.lower,
            iterations: state.k,
            plant_queries: state.plant_queries,
            wall_time_seconds: wall,
            lipschitz: state.dataset.lipschitz(),
            all_cells_certified: last.gap_met,
        };
        write_file(dir, "summary.json", &serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(())
}

fn read_dataset(path: &Path) -> Result<Dataset, Error> {
    Dataset::from_json(&std::fs::read_to_string(path)?, None)
}

fn cmd_fit(dataset: &Path, tol: f64, output: Option<&Path>) -> u8 {
    if !(tol > 0.0) {
        eprintln!("error: --tol must be positive");
        return EXIT_CONFIG;
    }
    let ds = match read_dataset(dataset) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", dataset.display());
            return EXIT_CONFIG;
        }
    };
    let fit = match fit_minimax(&ds, tol) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: fit failed: {e}");
            return EXIT_FAILURE;
        }
    };
    let json = match fit.surrogate.to_json() {
        Ok(j) => j,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    };
    match output {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &json) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return EXIT_FAILURE;
            }
        }
        None => println!("{json}"),
    }
    eprintln!(
        "objective = {:.12e}, lower bound = {:.12e}, gap = {:.3e}",
        fit.objective, fit.lower_bound, fit.gap
    );
    if fit.converged {
        0
    } else {
        eprintln!("error: gap {:.3e} exceeds tolerance {tol:.3e}", fit.gap);
        EXIT_NOT_CONVERGED
    }
}

fn cmd_check(suite: Suite, seed: u64, instances: usize, iterations: usize, scale: f64) -> u8 {
    if !(scale > 0.0) {
        eprintln!("error: --lipschitz-scale must be positive");
        return EXIT_CONFIG;
    }
    let mut reports = Vec::new();
    if matches!(suite, Suite::Relaxation | Suite::All) {
        reports.push(suites::relaxation_suite(instances, seed));
    }
    if matches!(suite, Suite::Engine1d | Suite::All) {
        reports.push(suites::engine_1d_suite(seed, iterations, scale));
    }
    let mut ok = true;
    for r in &reports {
        println!(
            "{}: {} checks, {} violations, {} consistency warnings, {} errors: {}",
            r.name,
            r.checks,
            r.violations,
            r.consistency_warnings,
            r.errors.len(),
            if r.passed() { "PASS" } else { "FAIL" }
        );
        for e in &r.errors {
            println!("  {e}");
        }
        ok &= r.passed();
    }
    if ok {
        0
    } else {
        EXIT_FAILURE
    }
}

fn cmd_estimate_l(dataset: &Path, safety: f64) -> u8 {
    let result = read_dataset(dataset).and_then(|ds| ds.estimate_lipschitz(safety));
    match result {
        Ok(l) => {
            println!("{l:.12e}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
