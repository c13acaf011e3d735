//! Monte Carlo reference statistics for the stochastic problems.
//!
//! Sample `s` draws its germ from a ChaCha20 stream keyed by `(seed, s)`, so
//! every sample is reproducible independently of scheduling. Samples are
//! solved in parallel chunks and folded into the running moments in index
//! order. Each sample system is solved by GMRES preconditioned with an exact
//! LU factorization of the nominal (`ξ = 0`) operator.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::assembly::{BcSpec, ScalarAssembler};
use crate::config::RunConfig;
use crate::mesh::TriMesh;
use crate::randomfield::{kle_2d, sample_from_nodal_modes, ExpKernel};
use crate::solvers::{ks_distance, pdf_at_point, SolutionPce, PICARD_MAX_ITERS};
use crate::sparsela::{gmres, norm2, CsrMatrix, KrylovConfig, SparseLu};
use crate::{Error, Result};

/// Relative residual of every per-sample linear solve.
pub const SAMPLE_SOLVE_TOL: f64 = 1e-10;
/// Picard update tolerance of every per-sample nonlinear solve.
pub const SAMPLE_PICARD_TOL: f64 = 1e-8;
/// Residual reduction of each Picard correction solve (inexact Picard).
pub const SAMPLE_PICARD_INNER_TOL: f64 = 1e-4;
const CHUNK: usize = 64;

/// Probe points used by the verification workflow.
pub const VERIFY_PROBES: [[f64; 2]; 5] = [
    [0.5, 0.5],
    [0.3, 0.7],
    [0.25, 0.25],
    [0.75, 0.75],
    [0.7, 0.3],
];

/// One-pass mean and variance (Welford).
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningStats {
    pub fn new(len: usize) -> Self {
        RunningStats {
            count: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.mean.len(), "sample length");
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.mean.len()];
        }
        let d = (self.count - 1) as f64;
        self.m2.iter().map(|s| (s / d).max(0.0)).collect()
    }

    pub fn std(&self) -> Vec<f64> {
        self.variance().into_iter().map(f64::sqrt).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct McsResult {
    pub nsamples: usize,
    pub seed: u64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub probes: Vec<[f64; 2]>,
    /// `probe_samples[p][s]`: solution of sample `s` at probe `p`.
    pub probe_samples: Vec<Vec<f64>>,
    pub mean_solver_iterations: f64,
}

impl McsResult {
    /// CSV with header `sample,p0,p1,...`, one row per sample.
    pub fn write_probe_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.probes.len()).map(|p| format!("p{p}")).collect();
        writeln!(w, "sample,{}", header.join(","))?;
        for s in 0..self.nsamples {
            let row: Vec<String> = self
                .probe_samples
                .iter()
                .map(|v| format!("{:.17e}", v[s]))
                .collect();
            writeln!(w, "{s},{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Standard Gaussian germ of sample `index`.
pub fn sample_germ(seed: u64, index: usize, nvars: usize) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    (0..nvars)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect()
}

struct SampleSolver {
    assembler: ScalarAssembler,
    /// LU of the nominal linear operator and its solution.
    lu_lin: SparseLu,
    u_lin: Vec<f64>,
    /// LU of the nominal Picard operator at the nominal nonlinear solution.
    lu_nonlin: Option<SparseLu>,
}

fn krylov_cfg(rel_tol: f64) -> KrylovConfig {
    KrylovConfig {
        rel_tol,
        max_iters: 500,
        restart: 100,
    }
}

/// `q(u) = c (1 + u)`.
fn diffusion(c: &[f64], u: &[f64]) -> Vec<f64> {
    c.iter().zip(u).map(|(ci, ui)| ci * (1.0 + ui)).collect()
}

impl SampleSolver {
    fn new(mesh: &TriMesh, c_nom: f64, nonlinear: bool) -> Result<Self> {
        let nn = mesh.nvertices();
        let assembler = ScalarAssembler::new(mesh, &vec![0.0; nn], &BcSpec::left_right(0.0, 1.0))?;
        let c = vec![c_nom; nn];
        let sys = assembler.assemble(&c)?;
        let lu_lin = SparseLu::new(&sys.matrix)?;
        let u_lin = lu_lin.solve(&sys.rhs)?;
        let mut lu_nonlin = None;
        if nonlinear {
            let mut u = u_lin.clone();
            for _ in 0..PICARD_MAX_ITERS {
                let sys = assembler.assemble(&diffusion(&c, &u))?;
                let lu = SparseLu::new(&sys.matrix)?;
                let next = lu.solve(&sys.rhs)?;
                let d: f64 = next
                    .iter()
                    .zip(&u)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let done = d <= SAMPLE_PICARD_TOL * norm2(&u);
                u = next;
                lu_nonlin = Some(lu);
                if done {
                    break;
                }
            }
        }
        Ok(SampleSolver {
            assembler,
            lu_lin,
            u_lin,
            lu_nonlin,
        })
    }

    /// Returns the nodal solution and the number of Krylov iterations.
    fn solve(&self, c: &[f64]) -> Result<(Vec<f64>, usize)> {
        let sys = self.assembler.assemble(c)?;
        let (lin, rep) = gmres(
            &sys.matrix,
            &sys.rhs,
            Some(&self.u_lin),
            &self.lu_lin,
            &krylov_cfg(SAMPLE_SOLVE_TOL),
        )?;
        if !rep.converged {
            return Err(Error::invalid("mcs", "per-sample GMRES did not converge"));
        }
        let Some(lu) = &self.lu_nonlin else {
            return Ok((lin, rep.iterations));
        };
        let mut iters = rep.iterations;
        // With f = 0, w = u + u²/2 solves the linear problem with boundary
        // values 0 and 3/2, so the linear solution gives a close start.
        let mut u: Vec<f64> = lin
            .iter()
            .map(|&l| (1.0 + 3.0 * l).max(0.0).sqrt() - 1.0)
            .collect();
        let mut r = vec![0.0; u.len()];
        for _ in 0..PICARD_MAX_ITERS {
            let sys = self.assembler.assemble(&diffusion(c, &u))?;
            let a: &CsrMatrix = &sys.matrix;
            a.residual(&sys.rhs, &u, &mut r);
            if norm2(&r) == 0.0 {
                return Ok((u, iters));
            }
            let (d, rep) = gmres(a, &r, None, lu, &krylov_cfg(SAMPLE_PICARD_INNER_TOL))?;
            iters += rep.iterations;
            let dn = norm2(&d);
            u.iter_mut().zip(&d).for_each(|(ui, di)| *ui += di);
            if dn <= SAMPLE_PICARD_TOL * norm2(&u) {
                return Ok((u, iters));
            }
        }
        Err(Error::invalid(
            "mcs",
            "per-sample Picard iteration did not converge",
        ))
    }
}

/// Monte Carlo statistics of the problem described by `cfg` (its `problem`,
/// mesh, KLE and `g0` settings), on the same boundary conditions as the
/// stochastic Galerkin solvers.
pub fn run_mcs(
    cfg: &RunConfig,
    nsamples: usize,
    seed: u64,
    probes: &[[f64; 2]],
) -> Result<McsResult> {
    if nsamples == 0 {
        return Err(Error::invalid("nsamples", "must be >= 1"));
    }
    cfg.validate()?;
    let mesh = TriMesh::unit_square(cfg.mesh_n)?;
    for p in probes {
        if mesh.locate(p[0], p[1]).is_none() {
            return Err(Error::invalid(
                "probes",
                format!("point {p:?} lies outside the domain"),
            ));
        }
    }
    let kle = kle_2d(
        ExpKernel::new(cfg.sigma, cfg.bx, cfg.by)?,
        cfg.g0,
        cfg.nvars,
    )?;
    let g = kle.nodal_modes(&mesh);
    let solver = SampleSolver::new(&mesh, cfg.g0.exp(), cfg.problem.is_nonlinear())?;
    let mut stats = RunningStats::new(mesh.nvertices());
    let mut probe_samples = vec![Vec::with_capacity(nsamples); probes.len()];
    let mut total_iters = 0usize;
    let mut start = 0;
    while start < nsamples {
        let end = (start + CHUNK).min(nsamples);
        let solved: Vec<Result<(Vec<f64>, usize)>> = (start..end)
            .into_par_iter()
            .map(|s| {
                let xi = sample_germ(seed, s, cfg.nvars);
                let c = sample_from_nodal_modes(cfg.g0, &g, &xi)?;
                solver.solve(&c).map_err(|e| Error::Sample {
                    sample: s,
                    source: Box::new(e),
                })
            })
            .collect();
        for out in solved {
            let (u, it) = out?;
            total_iters += it;
            stats.push(&u);
            for (p, samples) in probes.iter().zip(probe_samples.iter_mut()) {
                samples.push(mesh.interpolate(&u, p[0], p[1])?);
            }
        }
        start = end;
    }
    Ok(McsResult {
        nsamples,
        seed,
        mean: stats.mean().to_vec(),
        std: stats.std(),
        probes: probes.to_vec(),
        probe_samples,
        mean_solver_iterations: total_iters as f64 / nsamples as f64,
    })
}

/// Stochastic Galerkin against Monte Carlo statistics at one probe point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeComparison {
    pub x: f64,
    pub y: f64,
    pub sg_mean: f64,
    pub sg_std: f64,
    pub mcs_mean: f64,
    pub mcs_std: f64,
    /// Three standard errors of the sample mean.
    pub mean_band: f64,
    /// Three standard errors of the sample standard deviation.
    pub std_band: f64,
    pub mean_in_band: bool,
    pub std_in_band: bool,
    /// Two-sample KS distance between surrogate draws and the MC samples.
    pub ks: f64,
}

impl ProbeComparison {
    pub fn in_band(&self) -> bool {
        self.mean_in_band && self.std_in_band
    }
}

/// `3 s / √N` for the mean and `3 s √((κ − 1) / (4N))` for the standard
/// deviation, with κ the sample kurtosis. Both bands are widened to at least
/// `floor`. The surrogate pdf is sampled with as many draws as there are MC
/// samples.
pub fn compare_probes(
    sol: &SolutionPce,
    mesh: &TriMesh,
    mcs: &McsResult,
    floor: f64,
    seed: u64,
) -> Result<Vec<ProbeComparison>> {
    let n = mcs.nsamples as f64;
    let mut out = Vec::with_capacity(mcs.probes.len());
    for (p, samples) in mcs.probes.iter().zip(&mcs.probe_samples) {
        let coeffs = sol.coefficients_at(mesh, p[0], p[1])?;
        let norms = sol.basis().norms_sq();
        let sg_mean = coeffs[0];
        let sg_std = coeffs
            .iter()
            .zip(&norms)
            .skip(1)
            .fold(0.0, |s, (c, w)| s + c * c * w)
            .sqrt();
        let mut st = RunningStats::new(1);
        samples.iter().for_each(|&v| st.push(&[v]));
        let (mcs_mean, mcs_std) = (st.mean()[0], st.std()[0]);
        let m2 = samples.iter().map(|v| (v - mcs_mean).powi(2)).sum::<f64>() / n;
        let m4 = samples.iter().map(|v| (v - mcs_mean).powi(4)).sum::<f64>() / n;
        let kurtosis = if m2 > 0.0 { m4 / (m2 * m2) } else { 1.0 };
        let mean_band = (3.0 * mcs_std / n.sqrt()).max(floor);
        let std_band = (3.0 * mcs_std * ((kurtosis - 1.0).max(0.0) / (4.0 * n)).sqrt()).max(floor);
        let draws = pdf_at_point(sol, mesh, *p, mcs.nsamples, seed)?;
        out.push(ProbeComparison {
            x: p[0],
            y: p[1],
            sg_mean,
            sg_std,
            mcs_mean,
            mcs_std,
            mean_band,
            std_band,
            mean_in_band: (sg_mean - mcs_mean).abs() <= mean_band,
            std_in_band: (sg_std - mcs_std).abs() <= std_band,
            ks: ks_distance(&draws.draws, samples),
        });
    }
    Ok(out)
}

/// Header `x,y,sg_mean,...,ks` after a `# config:` line.
pub fn write_comparison_csv<W: Write, C: Serialize>(
    mut w: W,
    rows: &[ProbeComparison],
    cfg: &C,
) -> Result<()> {
    writeln!(w, "{}", crate::io::config_line(cfg)?)?;
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(std::io::Error::other)?;
    }
    out.flush()?;
    Ok(())
}
