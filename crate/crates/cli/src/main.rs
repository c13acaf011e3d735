//! `sgdd solve | verify | study`.
//!
//! Exit status: 0 on success, 1 on numerical failure or a verification band
//! violation, 2 on usage or configuration errors.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use sgdd::bench::{run_study, write_study};
use sgdd::config::{RunConfig, StudySpec};
use sgdd::io::{write_field_vtk, write_moments_csv, write_report_json, write_solution_vtk};
use sgdd::mcs::{compare_probes, run_mcs, write_comparison_csv, VERIFY_PROBES};
use sgdd::mesh::TriMesh;
use sgdd::solvers::{solve, solve_linear_stochastic, solve_nonlinear_stochastic, Solution};
use sgdd::Error;

#[derive(Parser)]
#[command(
    name = "sgdd",
    version,
    about = "Stochastic Galerkin solvers with two-grid Schwarz preconditioning"
)]
struct Cli {
    /// Worker threads (overrides the config; 0 uses all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured problem and write VTK, moments CSV and report JSON.
    Solve { config: PathBuf },
    /// Compare the stochastic Galerkin solution with Monte Carlo sampling.
    Verify { config: PathBuf },
    /// Run a parameter study and write its CSV table and manifest.
    Study { spec: PathBuf },
}

enum Failure {
    Usage(anyhow::Error),
    Numerical(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::Io(_) => Failure::Usage(e.into()),
            _ => Failure::Numerical(e.into()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numerical(e.into())
    }
}

type Outcome = Result<bool, Failure>;

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    RunConfig::load(path)
        .with_context(|| format!("loading {}", path.display()))
        .map_err(Failure::Usage)
}

fn init_threads(threads: usize) -> Result<(), Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring the thread pool")
        .map_err(Failure::Numerical)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Numerical(e.into()))?;
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(Failure::Numerical)
}

fn cmd_solve(cli: &Cli, path: &Path) -> Outcome {
    let mut cfg = load_config(path)?;
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    init_threads(cli.threads.unwrap_or(cfg.threads))?;
    let (sol, report) = solve(&cfg)?;
    let mesh = TriMesh::unit_square(cfg.mesh_n)?;
    let (mean, std) = sol.moments();
    let mut w = create(&cfg.output, "solution.vtk")?;
    match &sol {
        Solution::Stochastic(s) => write_solution_vtk(&mut w, &mesh, s, &cfg)?,
        Solution::Deterministic(u) => write_field_vtk(&mut w, &mesh, "u", u, &cfg)?,
    }
    w.flush()?;
    let mut w = create(&cfg.output, "moments.csv")?;
    write_moments_csv(&mut w, &mesh, &mean, &std, &cfg)?;
    w.flush()?;
    let mut w = create(&cfg.output, "report.json")?;
    write_report_json(&mut w, &cfg, &report)?;
    w.flush()?;
    println!(
        "{}: {} outer iterations, picard {}, converged {}",
        report.preconditioner, report.outer_iterations, report.picard_iterations, report.converged
    );
    Ok(report.converged)
}

fn cmd_verify(cli: &Cli, path: &Path) -> Outcome {
    let mut cfg = load_config(path)?;
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    if !cfg.problem.is_stochastic() {
        return Err(Failure::Usage(anyhow::anyhow!(
            "invalid configuration field `problem`: verify needs a stochastic problem"
        )));
    }
    init_threads(cli.threads.unwrap_or(cfg.threads))?;
    let (sol, report) = if cfg.problem.is_nonlinear() {
        solve_nonlinear_stochastic(&cfg)?
    } else {
        solve_linear_stochastic(&cfg)?
    };
    if !report.converged {
        eprintln!("stochastic Galerkin solve did not converge");
        return Ok(false);
    }
    let mesh = TriMesh::unit_square(cfg.mesh_n)?;
    let mcs = run_mcs(&cfg, cfg.mcs_samples, cfg.seed, &VERIFY_PROBES)?;
    // Both solves stop at finite tolerances, so the bands never shrink below
    // the outer solver tolerance.
    let rows = compare_probes(
        &sol,
        &mesh,
        &mcs,
        10.0 * cfg.tolerances.outer,
        cfg.seed.wrapping_add(1),
    )?;
    let mut w = create(&cfg.output, "verify.csv")?;
    write_comparison_csv(&mut w, &rows, &cfg)?;
    w.flush()?;
    let mut w = create(&cfg.output, "mcs_probes.csv")?;
    writeln!(w, "{}", sgdd::io::config_line(&cfg)?)?;
    mcs.write_probe_csv(&mut w)?;
    w.flush()?;
    let mut ok = true;
    for (i, r) in rows.iter().enumerate() {
        println!(
            "probe {i} ({}, {}): mean {:.6e} vs {:.6e} ± {:.2e}, std {:.6e} vs {:.6e} ± {:.2e}, ks {:.4}",
            r.x, r.y, r.sg_mean, r.mcs_mean, r.mean_band, r.sg_std, r.mcs_std, r.std_band, r.ks
        );
        if !r.in_band() {
            eprintln!("probe {i} ({}, {}) outside the 3-sigma band", r.x, r.y);
            ok = false;
        }
    }
    Ok(ok)
}

fn cmd_study(cli: &Cli, path: &Path) -> Outcome {
    let mut spec = StudySpec::load(path)
        .with_context(|| format!("loading {}", path.display()))
        .map_err(Failure::Usage)?;
    if let Some(out) = &cli.out {
        spec.output = out.clone();
    }
    init_threads(cli.threads.unwrap_or(spec.base.threads))?;
    let table = run_study(&spec)?;
    let csv = write_study(&spec, &table, &spec.output)?;
    println!("{} rows written to {}", table.len(), csv.display());
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve { config } => cmd_solve(&cli, config),
        Command::Verify { config } => cmd_verify(&cli, config),
        Command::Study { spec } => cmd_study(&cli, spec),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Numerical(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
