//! Artifact writers. CSV files start with a `# config: {...}` line carrying
//! the resolved configuration as JSON, followed by a fixed header row.

use std::io::Write;

use serde::Serialize;

use crate::config::RunConfig;
use crate::mesh::TriMesh;
use crate::solvers::{moments, PdfEstimate, SolutionPce, SolveReport};
use crate::Result;

pub fn config_line<C: Serialize>(cfg: &C) -> Result<String> {
    Ok(format!("# config: {}", serde_json::to_string(cfg)?))
}

/// Short run description for the VTK title line.
pub fn vtk_title(cfg: &RunConfig) -> String {
    format!(
        "sgdd problem={:?} mesh_n={} M={} p_in={} p_out={} sigma={} bx={} by={} g0={} seed={}",
        cfg.problem,
        cfg.mesh_n,
        cfg.nvars,
        cfg.p_in,
        cfg.p_out,
        cfg.sigma,
        cfg.bx,
        cfg.by,
        cfg.g0,
        cfg.seed
    )
}

/// Mean, standard deviation and every PC coefficient field.
pub fn write_solution_vtk<W: Write>(
    w: W,
    mesh: &TriMesh,
    sol: &SolutionPce,
    cfg: &RunConfig,
) -> Result<()> {
    let (mean, std) = moments(sol);
    let names: Vec<String> = (0..sol.basis().len()).map(|j| format!("u{j}")).collect();
    let mut fields: Vec<(&str, &[f64])> = vec![("mean", &mean), ("std", &std)];
    for (name, f) in names.iter().zip(sol.fields()) {
        fields.push((name, f));
    }
    mesh.write_vtk(w, &vtk_title(cfg), &fields)
}

pub fn write_field_vtk<W: Write>(
    w: W,
    mesh: &TriMesh,
    name: &str,
    field: &[f64],
    cfg: &RunConfig,
) -> Result<()> {
    mesh.write_vtk(w, &vtk_title(cfg), &[(name, field)])
}

/// Header `x,y,mean,std`, one row per mesh vertex.
pub fn write_moments_csv<W: Write>(
    mut w: W,
    mesh: &TriMesh,
    mean: &[f64],
    std: &[f64],
    cfg: &RunConfig,
) -> Result<()> {
    writeln!(w, "{}", config_line(cfg)?)?;
    writeln!(w, "x,y,mean,std")?;
    for ((p, m), s) in mesh.vertices().iter().zip(mean).zip(std) {
        writeln!(w, "{},{},{:.17e},{:.17e}", p[0], p[1], m, s)?;
    }
    Ok(())
}

/// Header `u,density` on `npoints` equally spaced values spanning the draws
/// padded by three bandwidths.
pub fn write_pdf_csv<W: Write>(
    mut w: W,
    pdf: &PdfEstimate,
    npoints: usize,
    cfg: &RunConfig,
) -> Result<()> {
    writeln!(w, "{}", config_line(cfg)?)?;
    writeln!(w, "u,density")?;
    let lo = pdf.draws.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * pdf.bandwidth;
    let hi = pdf.draws.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * pdf.bandwidth;
    let npoints = npoints.max(2);
    for i in 0..npoints {
        let u = lo + (hi - lo) * i as f64 / (npoints - 1) as f64;
        writeln!(w, "{:.17e},{:.17e}", u, pdf.density(u))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ReportFile<'a, C: Serialize> {
    config: &'a C,
    report: &'a SolveReport,
}

pub fn write_report_json<W: Write, C: Serialize>(
    w: W,
    cfg: &C,
    report: &SolveReport,
) -> Result<()> {
    serde_json::to_writer_pretty(
        w,
        &ReportFile {
            config: cfg,
            report,
        },
    )?;
    Ok(())
}

/// Reads back the `# config:` line of a CSV artifact.
pub fn read_config_line(text: &str) -> Option<serde_json::Value> {
    let line = text.lines().next()?.strip_prefix("# config: ")?;
    serde_json::from_str(line).ok()
}
