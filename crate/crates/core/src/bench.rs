//! Desk-scale scalability, coarse-ratio and condition-number studies.
//!
//! Each study sweeps one parameter of `spec.base` and solves once per sweep
//! point and preconditioner. Iteration columns are reproducible; timing
//! columns depend on the machine.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_deterministic, assemble_stochastic_linear, BcSpec};
use crate::chaos::{ChaosBasis, TripleTensor};
use crate::config::{PreconditionerKind, RunConfig, StudyKind, StudySpec};
use crate::io::config_line;
use crate::mesh::TriMesh;
use crate::randomfield::{kle_2d, lognormal_pce, ExpKernel};
use crate::solvers::solve;
use crate::sparsela::condition_number;
use crate::Result;

/// Boundary penalty weight of the condition-number study.
pub const COND_PENALTY: f64 = 1e7;

/// One solve of a scaling, parameter or coarse-ratio study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRow {
    pub preconditioner: String,
    pub mesh_n: usize,
    pub nsub: usize,
    #[serde(rename = "M")]
    pub nvars: usize,
    pub p_out: usize,
    pub terms: usize,
    pub ndofs: usize,
    pub coarse_ratio: usize,
    pub outer_iterations: usize,
    pub coarse_iterations: f64,
    pub picard_iterations: usize,
    pub pc_setup_seconds: f64,
    pub solve_seconds: f64,
    pub total_seconds: f64,
    /// `T_first / T` against the first sweep point of the same preconditioner.
    pub speedup: f64,
    /// Strong: `S · nsub_first / nsub`. Weak: `T_first / T`. Otherwise empty.
    pub efficiency: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondRow {
    #[serde(rename = "M")]
    pub nvars: usize,
    pub terms: usize,
    pub dim: usize,
    pub cond_stochastic: f64,
    pub cond_deterministic: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StudyTable {
    Solve(Vec<SolveRow>),
    Cond(Vec<CondRow>),
}

impl StudyTable {
    pub fn len(&self) -> usize {
        match self {
            StudyTable::Solve(r) => r.len(),
            StudyTable::Cond(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn solve_rows(&self) -> Option<&[SolveRow]> {
        match self {
            StudyTable::Solve(r) => Some(r),
            StudyTable::Cond(_) => None,
        }
    }

    pub fn cond_rows(&self) -> Option<&[CondRow]> {
        match self {
            StudyTable::Cond(r) => Some(r),
            StudyTable::Solve(_) => None,
        }
    }

    /// Rows of one preconditioner, in sweep order.
    pub fn for_preconditioner(&self, kind: PreconditionerKind) -> Vec<&SolveRow> {
        self.solve_rows()
            .unwrap_or_default()
            .iter()
            .filter(|r| r.preconditioner == kind.label())
            .collect()
    }

    /// Header row, then one line per row, after a `# config:` line.
    pub fn write_csv<W: Write, C: Serialize>(&self, mut w: W, cfg: &C) -> Result<()> {
        writeln!(w, "{}", config_line(cfg)?)?;
        let mut out = csv::Writer::from_writer(w);
        match self {
            StudyTable::Solve(rows) => rows.iter().try_for_each(|r| out.serialize(r)),
            StudyTable::Cond(rows) => rows.iter().try_for_each(|r| out.serialize(r)),
        }
        .map_err(std::io::Error::other)?;
        out.flush()?;
        Ok(())
    }
}

fn run_sweep(spec: &StudySpec, point: impl Fn(&mut RunConfig, &[usize])) -> Result<Vec<SolveRow>> {
    let mut rows = Vec::new();
    for &kind in &spec.preconditioners {
        for values in &spec.sweep {
            let mut cfg = spec.base.clone();
            cfg.preconditioner = kind;
            point(&mut cfg, values);
            cfg.validate()?;
            let (_, rep) = solve(&cfg)?;
            let terms = if cfg.problem.is_stochastic() {
                ChaosBasis::new(cfg.nvars, cfg.p_out)?.len()
            } else {
                1
            };
            rows.push(SolveRow {
                preconditioner: kind.label().to_string(),
                mesh_n: cfg.mesh_n,
                nsub: cfg.nsub,
                nvars: cfg.nvars,
                p_out: cfg.p_out,
                terms,
                ndofs: rep.ndofs,
                coarse_ratio: cfg.coarse_ratio,
                outer_iterations: rep.outer_iterations,
                coarse_iterations: rep.coarse_iterations,
                picard_iterations: rep.picard_iterations,
                pc_setup_seconds: rep.pc_setup_seconds,
                solve_seconds: rep.solve_seconds,
                total_seconds: rep.pc_setup_seconds + rep.solve_seconds,
                speedup: 1.0,
                efficiency: None,
                converged: rep.converged,
            });
        }
    }
    Ok(rows)
}

fn fill_speedup(rows: &mut [SolveRow], weak: bool) {
    for chunk in rows.chunk_by_mut(|a, b| a.preconditioner == b.preconditioner) {
        let (t0, p0) = (chunk[0].total_seconds, chunk[0].nsub as f64);
        for r in chunk {
            r.speedup = t0 / r.total_seconds;
            r.efficiency = Some(if weak {
                r.speedup
            } else {
                r.speedup * p0 / r.nsub as f64
            });
        }
    }
}

/// Fixed problem, subdomain count swept.
pub fn run_strong(spec: &StudySpec) -> Result<StudyTable> {
    let mut rows = run_sweep(spec, |c, v| c.nsub = v[0])?;
    fill_speedup(&mut rows, false);
    Ok(StudyTable::Solve(rows))
}

/// `[mesh_n, nsub]` pairs swept.
pub fn run_weak(spec: &StudySpec) -> Result<StudyTable> {
    let mut rows = run_sweep(spec, |c, v| {
        c.mesh_n = v[0];
        c.nsub = v[1];
    })?;
    fill_speedup(&mut rows, true);
    Ok(StudyTable::Solve(rows))
}

/// Number of random variables (`random-vars`) or output order (`order`) swept.
pub fn run_param_scaling(spec: &StudySpec) -> Result<StudyTable> {
    let rows = if spec.study == StudyKind::Order {
        run_sweep(spec, |c, v| c.p_out = v[0])?
    } else {
        run_sweep(spec, |c, v| c.nvars = v[0])?
    };
    Ok(StudyTable::Solve(rows))
}

/// Fine-to-coarse vertex ratio swept on a fixed fine mesh.
pub fn run_coarse_ratio(spec: &StudySpec) -> Result<StudyTable> {
    Ok(StudyTable::Solve(run_sweep(spec, |c, v| {
        c.coarse_ratio = v[0]
    })?))
}

/// Condition number of the stochastic Galerkin matrix over that of the
/// deterministic mean-coefficient matrix, both with penalty boundary
/// conditions on all four edges, for each swept M.
pub fn run_cond_ratio(spec: &StudySpec) -> Result<StudyTable> {
    let base = &spec.base;
    let mesh = TriMesh::unit_square(base.mesh_n)?;
    let bc = BcSpec::all_dirichlet(0.0).with_penalty(COND_PENALTY)?;
    let f = vec![0.0; mesh.nvertices()];
    let mut rows = Vec::new();
    for values in &spec.sweep {
        let nvars = values[0];
        let mut cfg = base.clone();
        cfg.nvars = nvars;
        cfg.validate()?;
        let kle = kle_2d(ExpKernel::new(cfg.sigma, cfg.bx, cfg.by)?, cfg.g0, nvars)?;
        let input = ChaosBasis::new(nvars, cfg.p_in)?;
        let output = ChaosBasis::new(nvars, cfg.p_out)?;
        let c = lognormal_pce(&kle, &input, &mesh)?;
        let m = TripleTensor::new(&input, &output)?;
        let stoch = assemble_stochastic_linear(&mesh, &c, &m, &output, &f, &bc)?;
        let det = assemble_deterministic(&mesh, c.field(0), &f, &bc)?;
        let cond_stochastic = condition_number(&stoch.matrix)?;
        let cond_deterministic = condition_number(&det.matrix)?;
        rows.push(CondRow {
            nvars,
            terms: output.len(),
            dim: stoch.matrix.nrows(),
            cond_stochastic,
            cond_deterministic,
            ratio: cond_stochastic / cond_deterministic,
        });
    }
    Ok(StudyTable::Cond(rows))
}

pub fn run_study(spec: &StudySpec) -> Result<StudyTable> {
    spec.validate()?;
    match spec.study {
        StudyKind::Strong => run_strong(spec),
        StudyKind::Weak => run_weak(spec),
        StudyKind::RandomVars | StudyKind::Order => run_param_scaling(spec),
        StudyKind::CoarseRatio => run_coarse_ratio(spec),
        StudyKind::CondRatio => run_cond_ratio(spec),
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    spec: &'a StudySpec,
    csv: &'a Path,
    rows: &'a StudyTable,
}

/// Writes `<dir>/<study>.csv` and `<dir>/manifest.json`; returns the CSV path.
pub fn write_study(spec: &StudySpec, table: &StudyTable, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let name = serde_json::to_value(spec.study)?
        .as_str()
        .unwrap_or("study")
        .to_string();
    let csv_path = dir.join(format!("{name}.csv"));
    let mut w = BufWriter::new(File::create(&csv_path)?);
    table.write_csv(&mut w, spec)?;
    w.flush()?;
    let manifest = Manifest {
        spec,
        csv: Path::new(csv_path.file_name().unwrap_or_default()),
        rows: table,
    };
    let mut w = BufWriter::new(File::create(dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.flush()?;
    Ok(csv_path)
}
