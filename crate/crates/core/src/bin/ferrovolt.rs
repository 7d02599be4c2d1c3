use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use ferrovolt::case::{self, CaseError, MeshVariant, SolvedState, LOG_FILE, STATE_FILE, SUMMARY_FILE};
use ferrovolt::config::CaseConfig;
use ferrovolt::magnetostatics::Outcome;
use ferrovolt::mesh::quality::check_quality;
use ferrovolt::mesh::MultiRegionMesh;
use ferrovolt::oracles::AnalyticCase;
use ferrovolt::postproc;

const OK: u8 = 0;
const USAGE: u8 = 1;
const DIVERGED: u8 = 2;
const MAX_ITERATIONS: u8 = 3;
const IO: u8 = 4;
const VERIFY_FAILED: u8 = 5;

/// Multi-region finite volume magnetostatics.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// error, warn, info, debug or trace
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CaseArgs {
    /// Case directory holding case.toml
    #[arg(long = "case", value_name = "DIR")]
    dir: PathBuf,
    /// Configuration override, e.g. solver.lambda_div=0.8 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Load the mesh and configuration and report mesh quality
    Check(CaseArgs),
    /// Solve a case and write the log, summary, state, VTK and samples
    Solve(CaseArgs),
    /// Write the configured line samples from a solved state
    Sample(CaseArgs),
    /// Write VTK files from a solved state
    Export(CaseArgs),
    /// Solve a built-in analytic case and compare with the closed form
    Verify {
        /// magnetized_cylinder, current_wire or permeable_cylinder
        name: String,
        /// triangles, orthogonal or perturbed
        #[arg(long, default_value = "triangles")]
        mesh: String,
        /// Edge length on and inside the cylinder [default: 0.0035 for
        /// current_wire, else 0.005]
        #[arg(long)]
        h: Option<f64>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<CaseError> for Failure {
    fn from(e: CaseError) -> Self {
        Failure {
            code: if e.is_io() { IO } else { USAGE },
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: USAGE,
        message: message.into(),
    }
}

fn io(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: IO,
        message: format!("{}: {e}", path.display()),
    }
}

fn load(args: &CaseArgs) -> Result<(CaseConfig, MultiRegionMesh), Failure> {
    let config = CaseConfig::load(&args.dir, &args.overrides).map_err(CaseError::from)?;
    let mesh = case::build_mesh(&config, &args.dir)?;
    Ok((config, mesh))
}

fn output_dir(args: &CaseArgs, config: &CaseConfig) -> Result<PathBuf, Failure> {
    let dir = args.dir.join(&config.outputs.dir);
    std::fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
    Ok(dir)
}

fn check(args: &CaseArgs) -> Result<u8, Failure> {
    let (config, mesh) = load(args)?;
    let report = check_quality(&mesh, config.mesh.thresholds());
    print!("{report}");
    let fields = case::build_fields(&config, &mesh);
    if report.has_errors() {
        return Err(usage("mesh quality errors"));
    }
    fields?;
    println!("{} regions, {} cells, {} interfaces: ok", mesh.regions.len(), mesh.n_cells(), mesh.interfaces.len());
    Ok(OK)
}

fn solve(args: &CaseArgs) -> Result<u8, Failure> {
    let (config, mesh) = load(args)?;
    let quality = check_quality(&mesh, config.mesh.thresholds());
    if quality.has_errors() {
        print!("{quality}");
        return Err(usage("mesh quality errors"));
    }
    let out = output_dir(args, &config)?;
    log::info!("solving {} cells in {} regions", mesh.n_cells(), mesh.regions.len());
    let solved = case::solve(&config, &mesh)?;
    let s = &solved.summary;

    let log_path = out.join(LOG_FILE);
    std::fs::write(&log_path, &solved.log).map_err(|e| io(&log_path, e))?;
    let jumps = solved.jump_report(&mesh);
    let summary = json!({
        "title": config.title,
        "converged": s.outcome == Outcome::Converged,
        "outcome": s.outcome,
        "iterations": s.iterations,
        "final_residuals": s.final_residuals,
        "wall_time_s": s.wall_time_s,
        "lambda_div": s.lambda_div,
        "lambda_k": s.lambda_k,
        "relaxation_mode": s.relaxation_mode,
        "non_orth_correctors": s.non_orth_correctors,
        "cells": mesh.n_cells(),
        "max_non_orth_deg": quality.max_non_orth_deg,
        "interface_jumps": {
            "max_normal_jump": jumps.max_normal_jump,
            "l2_normal_jump": jumps.l2_normal_jump,
            "max_residual": jumps.max_residual,
            "l2_residual": jumps.l2_residual,
            "l2_mu0_k": jumps.l2_mu0_k,
            "max_b": jumps.max_b,
        },
    });
    let summary_path = out.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&summary).expect("summary serialises");
    std::fs::write(&summary_path, text + "\n").map_err(|e| io(&summary_path, e))?;
    SolvedState::capture(&mesh, &solved.fields, &solved.k).save(&out.join(STATE_FILE))?;
    if config.outputs.vtk {
        postproc::write_vtk(&mesh, &solved.fields, &out, "solution").map_err(CaseError::from)?;
    }
    if config.outputs.csv {
        case::write_samples(&config, &mesh, &solved.fields, &out)?;
    }

    let residual = s.final_residuals.iter().flat_map(|(_, r)| r.iter().copied()).fold(0.0, f64::max);
    match &s.outcome {
        Outcome::Converged => {
            println!("converged in {} outer iterations ({:.2} s), residual {residual:.3e}", s.iterations, s.wall_time_s);
            Ok(OK)
        }
        Outcome::MaxIterations => {
            println!("not converged after {} outer iterations, residual {residual:.3e}", s.iterations);
            Ok(MAX_ITERATIONS)
        }
        Outcome::Diverged(report) => {
            eprintln!("{report}");
            Ok(DIVERGED)
        }
    }
}

fn load_solved(args: &CaseArgs) -> Result<(CaseConfig, MultiRegionMesh, Vec<ferrovolt::field::RegionFields>, PathBuf), Failure> {
    let (config, mesh) = load(args)?;
    let out = args.dir.join(&config.outputs.dir);
    let state_path = out.join(STATE_FILE);
    if !state_path.is_file() {
        return Err(io(&state_path, "no solved state; run `solve` first"));
    }
    let state = SolvedState::load(&state_path)?;
    let mut fields = case::build_fields(&config, &mesh)?;
    state.restore(&mesh, &mut fields)?;
    Ok((config, mesh, fields, out))
}

fn sample(args: &CaseArgs) -> Result<u8, Failure> {
    let (config, mesh, fields, out) = load_solved(args)?;
    if config.samples.is_empty() {
        println!("no samples configured");
    }
    for p in case::write_samples(&config, &mesh, &fields, &out)? {
        println!("{}", p.display());
    }
    Ok(OK)
}

fn export(args: &CaseArgs) -> Result<u8, Failure> {
    let (_, mesh, fields, out) = load_solved(args)?;
    for p in postproc::write_vtk(&mesh, &fields, &out, "solution").map_err(CaseError::from)? {
        println!("{}", p.display());
    }
    Ok(OK)
}

fn verify(name: &str, mesh: &str, h: Option<f64>) -> Result<u8, Failure> {
    let case = AnalyticCase::by_name(name).map_err(|e| usage(format!("{e}; known: {}", AnalyticCase::KINDS.join(", "))))?;
    let h = h.unwrap_or_else(|| case::default_h(&case));
    let variant = MeshVariant::by_name(mesh).ok_or_else(|| usage(format!("unknown mesh `{mesh}`; known: {}", MeshVariant::NAMES.join(", "))))?;
    if !(h > 0.0 && h < case.radius()) {
        return Err(usage(format!("h = {h} must be positive and below the radius")));
    }
    let report = case::verify(&case, variant, h)?;
    print!("{report}");
    Ok(match report.outcome {
        Outcome::Diverged(_) => DIVERGED,
        Outcome::MaxIterations => MAX_ITERATIONS,
        Outcome::Converged if report.passed() => OK,
        Outcome::Converged => VERIFY_FAILED,
    })
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("FERROVOLT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("FERROVOLT_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| usage(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Check(a) => check(a),
        Command::Solve(a) => solve(a),
        Command::Sample(a) => sample(a),
        Command::Export(a) => export(a),
        Command::Verify { name, mesh, h } => verify(name, mesh, *h),
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
