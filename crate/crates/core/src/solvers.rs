//! End-to-end solves: stochastic Galerkin (linear and Picard-nonlinear),
//! deterministic reference problems, and post-processing of the solution
//! chaos expansion.
//!
//! Every linear system is solved by FGMRES with the configured Schwarz
//! preconditioner. Picard iterations start from `u⁰ = 0`, so the first
//! iterate is the linear solution, and each step solves for the correction
//! `A(uᵏ) δ = b − A(uᵏ) uᵏ`.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::amg::{AmgConfig, AmgSummary};
use crate::assembly::{
    assemble_stochastic_linear, assemble_stochastic_picard, BcSpec, ScalarAssembler,
};
use crate::chaos::{ChaosBasis, QuadTensor, TripleTensor};
use crate::config::{PreconditionerKind, Problem, RunConfig};
use crate::dd::{
    build_twogrid, partition_overlap, CoarseVariant, LocalSolver, OneLevelRas, Partition,
    TwoGridOptions,
};
use crate::mesh::{NestedPair, TriMesh};
use crate::randomfield::{kle_2d, lognormal_pce, ExpKernel, KlExpansion, LognormalPce};
use crate::sparsela::{fgmres, norm2, CsrMatrix, KrylovConfig, KrylovReport, Preconditioner};
use crate::{Error, Result};

pub const PICARD_MAX_ITERS: usize = 50;
/// Consecutive non-decreasing update norms that count as stagnation.
pub const PICARD_STAGNATION: usize = 5;

/// `u(x, ξ) = Σ_j ū_j(x) Ψ_j(ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPce {
    basis: ChaosBasis,
    fields: Vec<Vec<f64>>,
}

impl SolutionPce {
    pub fn from_fields(basis: ChaosBasis, fields: Vec<Vec<f64>>) -> Result<Self> {
        if fields.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                context: "solution fields",
                expected: basis.len(),
                actual: fields.len(),
            });
        }
        let nn = fields.first().map_or(0, Vec::len);
        if fields.iter().any(|f| f.len() != nn) {
            return Err(Error::invalid(
                "fields",
                "all coefficient fields must have the same length",
            ));
        }
        Ok(SolutionPce { basis, fields })
    }

    /// Splits a node-interleaved block vector.
    pub fn from_interleaved(basis: ChaosBasis, x: &[f64]) -> Result<Self> {
        let nb = basis.len();
        if !x.len().is_multiple_of(nb) {
            return Err(Error::DimensionMismatch {
                context: "interleaved solution",
                expected: (x.len() / nb + 1) * nb,
                actual: x.len(),
            });
        }
        let fields = (0..nb)
            .map(|k| x.iter().skip(k).step_by(nb).copied().collect())
            .collect();
        Ok(SolutionPce { basis, fields })
    }

    pub fn to_interleaved(&self) -> Vec<f64> {
        let nb = self.basis.len();
        let mut x = vec![0.0; nb * self.nnodes()];
        for (k, f) in self.fields.iter().enumerate() {
            for (v, &val) in f.iter().enumerate() {
                x[v * nb + k] = val;
            }
        }
        x
    }

    pub fn basis(&self) -> &ChaosBasis {
        &self.basis
    }

    pub fn fields(&self) -> &[Vec<f64>] {
        &self.fields
    }

    pub fn field(&self, j: usize) -> &[f64] {
        &self.fields[j]
    }

    pub fn nnodes(&self) -> usize {
        self.fields.first().map_or(0, Vec::len)
    }

    /// PC coefficients at a point, interpolated from the nodal fields.
    pub fn coefficients_at(&self, mesh: &TriMesh, x: f64, y: f64) -> Result<Vec<f64>> {
        self.fields
            .iter()
            .map(|f| mesh.interpolate(f, x, y))
            .collect()
    }
}

/// Pointwise mean `ū₀` and standard deviation `√(Σ_{j≥1} ū_j² ⟨Ψ_j²⟩)`.
pub fn moments(sol: &SolutionPce) -> (Vec<f64>, Vec<f64>) {
    let norms = sol.basis.norms_sq();
    let mean = sol.fields[0].clone();
    let std = (0..sol.nnodes())
        .map(|v| {
            sol.fields
                .iter()
                .zip(&norms)
                .skip(1)
                .fold(0.0, |s, (f, n)| s + f[v] * f[v] * n)
                .sqrt()
        })
        .collect();
    (mean, std)
}

/// `‖u_truth − u_num‖₂ / ‖u_truth‖₂` over the mesh vertices.
pub fn relative_error(
    mesh: &TriMesh,
    u_num: &[f64],
    u_truth: impl Fn(f64, f64) -> f64,
) -> Result<f64> {
    if u_num.len() != mesh.nvertices() {
        return Err(Error::DimensionMismatch {
            context: "relative_error",
            expected: mesh.nvertices(),
            actual: u_num.len(),
        });
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (p, &u) in mesh.vertices().iter().zip(u_num) {
        let t = u_truth(p[0], p[1]);
        num += (t - u) * (t - u);
        den += t * t;
    }
    if den == 0.0 {
        return Err(Error::invalid(
            "u_truth",
            "reference solution has zero norm",
        ));
    }
    Ok((num / den).sqrt())
}

/// Exact solution of `-(q(u) u')' = 0`, `q(u) = (1 + u)^m`, `u(0) = 0`, `u(1) = 1`.
pub fn analytic_nonlinear(m: usize, x: f64) -> f64 {
    let e = (m + 1) as f64;
    ((2f64.powf(e) - 1.0) * x + 1.0).powf(1.0 / e) - 1.0
}

/// Surrogate samples at one point with a Gaussian kernel density estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct PdfEstimate {
    pub draws: Vec<f64>,
    /// Silverman bandwidth `0.9 · min(s, IQR/1.34) · n^(-1/5)`.
    pub bandwidth: f64,
}

impl PdfEstimate {
    pub fn from_draws(draws: Vec<f64>) -> Self {
        let bandwidth = silverman_bandwidth(&draws);
        PdfEstimate { draws, bandwidth }
    }

    /// Kernel density at `x`; a zero bandwidth yields a point mass.
    pub fn density(&self, x: f64) -> f64 {
        let n = self.draws.len() as f64;
        if self.bandwidth == 0.0 {
            return if self.draws.contains(&x) {
                f64::INFINITY
            } else {
                0.0
            };
        }
        let h = self.bandwidth;
        let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
        norm * self
            .draws
            .iter()
            .map(|&d| (-0.5 * ((x - d) / h).powi(2)).exp())
            .sum::<f64>()
    }

    pub fn mean(&self) -> f64 {
        self.draws.iter().sum::<f64>() / self.draws.len() as f64
    }
}

fn quantile_sorted(s: &[f64], q: f64) -> f64 {
    let pos = q * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

pub fn silverman_bandwidth(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 || x.iter().all(|&v| v == x[0]) {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (n as f64).powf(-0.2)
}

/// Pushes `ndraws` standard Gaussian germs through the surrogate at `point`.
pub fn pdf_at_point(
    sol: &SolutionPce,
    mesh: &TriMesh,
    point: [f64; 2],
    ndraws: usize,
    seed: u64,
) -> Result<PdfEstimate> {
    let coeffs = sol.coefficients_at(mesh, point[0], point[1])?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let m = sol.basis.nvars();
    let mut xi = vec![0.0; m];
    let mut draws = Vec::with_capacity(ndraws);
    for _ in 0..ndraws {
        for v in xi.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let psi = sol.basis.eval_all(&xi)?;
        draws.push(coeffs.iter().zip(&psi).map(|(c, p)| c * p).sum());
    }
    Ok(PdfEstimate::from_draws(draws))
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub preconditioner: String,
    pub ndofs: usize,
    pub nblocks: usize,
    /// Outer FGMRES iterations summed over all linear solves.
    pub outer_iterations: usize,
    pub outer_iterations_per_solve: Vec<usize>,
    /// Mean inner iterations per coarse solve (0 for exact or absent coarse solves).
    pub coarse_iterations: f64,
    pub coarse_unconverged: usize,
    pub picard_iterations: usize,
    /// `‖u^{k+1} − u^k‖ / ‖u^k‖` for every Picard step with `u^k ≠ 0`.
    pub picard_updates: Vec<f64>,
    pub picard_stagnated: bool,
    /// Update norms strictly decreasing from the second recorded step on.
    pub picard_monotone: bool,
    pub pc_setup_seconds: f64,
    pub solve_seconds: f64,
    /// Relative residual history of the last linear solve.
    pub residual_history: Vec<f64>,
    pub final_rel_residual: f64,
    pub converged: bool,
    pub amg: Option<AmgSummary>,
    #[serde(skip)]
    coarse_applications: usize,
    #[serde(skip)]
    coarse_total: usize,
}

impl SolveReport {
    fn new(kind: PreconditionerKind, ndofs: usize, nblocks: usize) -> Self {
        SolveReport {
            preconditioner: kind.label().to_string(),
            ndofs,
            nblocks,
            converged: true,
            picard_monotone: true,
            ..Default::default()
        }
    }

    fn absorb(&mut self, rep: &KrylovReport) {
        self.outer_iterations += rep.iterations;
        self.outer_iterations_per_solve.push(rep.iterations);
        self.residual_history = rep.residual_history.clone();
        self.final_rel_residual = rep.final_rel_residual;
        self.converged &= rep.converged;
    }
}

/// Linear-solver settings shared by every solve of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSetup {
    pub preconditioner: PreconditionerKind,
    pub nsub: usize,
    pub overlap: usize,
    /// Fine-to-coarse refinement factor per direction.
    pub refinement: usize,
    pub local_solver: LocalSolver,
    pub outer: KrylovConfig,
    pub coarse_tol: f64,
    pub amg: AmgConfig,
}

impl SolverSetup {
    pub fn from_config(cfg: &RunConfig) -> Self {
        SolverSetup {
            preconditioner: cfg.preconditioner,
            nsub: cfg.nsub,
            overlap: cfg.overlap,
            refinement: cfg.refinement_factor(),
            local_solver: LocalSolver::Ilu0,
            outer: KrylovConfig {
                rel_tol: cfg.tolerances.outer,
                ..KrylovConfig::default()
            },
            coarse_tol: cfg.tolerances.coarse,
            amg: AmgConfig::default(),
        }
    }
}

/// Partition and mesh hierarchy for one mesh and block count, reused across
/// the linear solves of a Picard loop.
pub struct LinearEngine {
    setup: SolverSetup,
    nblocks: usize,
    partition: Partition,
    pair: Option<NestedPair>,
}

impl LinearEngine {
    pub fn new(mesh: &TriMesh, nblocks: usize, setup: SolverSetup) -> Result<Self> {
        setup.outer.validate()?;
        let partition = partition_overlap(mesh, nblocks, setup.nsub, setup.overlap)?;
        let pair = if setup.preconditioner.is_two_grid() {
            Some(NestedPair::from_fine(mesh.clone(), setup.refinement)?)
        } else {
            None
        };
        Ok(LinearEngine {
            setup,
            nblocks,
            partition,
            pair,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// Solves `a x = b` from a zero initial guess, accumulating into `report`.
    pub fn solve(&self, a: &CsrMatrix, b: &[f64], report: &mut SolveReport) -> Result<Vec<f64>> {
        let t0 = Instant::now();
        let variant = match self.setup.preconditioner {
            PreconditionerKind::Ras1 => None,
            PreconditionerKind::TwoGridLu => Some(CoarseVariant::Lu),
            PreconditionerKind::TwoGridV2 => Some(CoarseVariant::GmresRas),
            PreconditionerKind::TwoGridV3 => Some(CoarseVariant::GmresAmg),
        };
        let (x, rep) = match variant {
            None => {
                let pc = OneLevelRas::new(a, &self.partition, self.setup.local_solver)?;
                report.pc_setup_seconds += t0.elapsed().as_secs_f64();
                self.krylov(a, b, &pc, report)?
            }
            Some(variant) => {
                let mut opts = TwoGridOptions::new(variant, self.setup.coarse_tol);
                opts.local_solver = self.setup.local_solver;
                opts.amg = self.setup.amg;
                let pair = self.pair.as_ref().expect("two-grid engine has a mesh pair");
                let pc = build_twogrid(a, self.nblocks, pair, &self.partition, &opts)?;
                report.pc_setup_seconds += t0.elapsed().as_secs_f64();
                let out = self.krylov(a, b, &pc, report)?;
                let st = pc.stats();
                report.coarse_applications += st.applications;
                report.coarse_total += st.iterations;
                report.coarse_unconverged += st.unconverged;
                report.coarse_iterations = if report.coarse_applications == 0 {
                    0.0
                } else {
                    report.coarse_total as f64 / report.coarse_applications as f64
                };
                if let Some(h) = pc.amg() {
                    report.amg = Some(h.summary());
                }
                out
            }
        };
        report.absorb(&rep);
        Ok(x)
    }

    fn krylov(
        &self,
        a: &CsrMatrix,
        b: &[f64],
        pc: &dyn Preconditioner,
        report: &mut SolveReport,
    ) -> Result<(Vec<f64>, KrylovReport)> {
        let t0 = Instant::now();
        let out = fgmres(a, b, None, pc, &self.setup.outer)?;
        report.solve_seconds += t0.elapsed().as_secs_f64();
        Ok(out)
    }
}

/// Picard loop on correction equations. `assemble(u)` returns the system
/// linearized at `u`.
fn picard(
    n: usize,
    tol: f64,
    engine: &LinearEngine,
    report: &mut SolveReport,
    mut assemble: impl FnMut(&[f64]) -> Result<(CsrMatrix, Vec<f64>)>,
) -> Result<Vec<f64>> {
    let mut u = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut picard_ok = false;
    let mut rising = 0;
    for it in 1..=PICARD_MAX_ITERS {
        let (a, b) = assemble(&u)?;
        a.residual(&b, &u, &mut r);
        let delta = engine.solve(&a, &r, report)?;
        let dn = norm2(&delta);
        let un = norm2(&u);
        u.iter_mut().zip(&delta).for_each(|(ui, di)| *ui += di);
        report.picard_iterations = it;
        if dn == 0.0 {
            picard_ok = true;
            break;
        }
        if un == 0.0 {
            continue;
        }
        let upd = dn / un;
        if let Some(&prev) = report.picard_updates.last() {
            if upd >= prev {
                rising += 1;
                report.picard_monotone = false;
            } else {
                rising = 0;
            }
        }
        report.picard_updates.push(upd);
        if upd <= tol {
            picard_ok = true;
            break;
        }
        if rising >= PICARD_STAGNATION {
            report.picard_stagnated = true;
            break;
        }
    }
    report.converged &= picard_ok;
    Ok(u)
}

/// Discrete stochastic problem on the unit square: lognormal coefficient
/// from a truncated KLE, `u = 0` on the left edge, `u = 1` on the right edge,
/// zero flux on top and bottom.
pub struct StochasticProblem {
    pub mesh: TriMesh,
    pub kle: KlExpansion,
    pub input: ChaosBasis,
    pub output: ChaosBasis,
    pub c_pce: LognormalPce,
    pub m: TripleTensor,
    pub t: Option<QuadTensor>,
    pub f: Vec<f64>,
    pub bc: BcSpec,
}

impl StochasticProblem {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let mesh = TriMesh::unit_square(cfg.mesh_n)?;
        let kernel = ExpKernel::new(cfg.sigma, cfg.bx, cfg.by)?;
        let kle = kle_2d(kernel, cfg.g0, cfg.nvars)?;
        let input = ChaosBasis::new(cfg.nvars, cfg.p_in)?;
        let output = ChaosBasis::new(cfg.nvars, cfg.p_out)?;
        let c_pce = lognormal_pce(&kle, &input, &mesh)?;
        let m = TripleTensor::new(&input, &output)?;
        let t = if cfg.problem.is_nonlinear() {
            Some(QuadTensor::new(&input, &output)?)
        } else {
            None
        };
        let f = vec![0.0; mesh.nvertices()];
        Ok(StochasticProblem {
            mesh,
            kle,
            input,
            output,
            c_pce,
            m,
            t,
            f,
            bc: BcSpec::left_right(0.0, 1.0),
        })
    }

    pub fn ndofs(&self) -> usize {
        self.mesh.nvertices() * self.output.len()
    }

    pub fn solve_linear(&self, setup: &SolverSetup) -> Result<(SolutionPce, SolveReport)> {
        let nb = self.output.len();
        let mut report = SolveReport::new(setup.preconditioner, self.ndofs(), nb);
        let engine = LinearEngine::new(&self.mesh, nb, *setup)?;
        let sys = assemble_stochastic_linear(
            &self.mesh,
            &self.c_pce,
            &self.m,
            &self.output,
            &self.f,
            &self.bc,
        )?;
        let x = engine.solve(&sys.matrix, &sys.rhs, &mut report)?;
        Ok((
            SolutionPce::from_interleaved(self.output.clone(), &x)?,
            report,
        ))
    }

    pub fn solve_nonlinear(
        &self,
        setup: &SolverSetup,
        picard_tol: f64,
    ) -> Result<(SolutionPce, SolveReport)> {
        let t = match &self.t {
            Some(t) => t.clone(),
            None => QuadTensor::new(&self.input, &self.output)?,
        };
        let nb = self.output.len();
        let mut report = SolveReport::new(setup.preconditioner, self.ndofs(), nb);
        let engine = LinearEngine::new(&self.mesh, nb, *setup)?;
        let x = picard(self.ndofs(), picard_tol, &engine, &mut report, |u| {
            let sys = assemble_stochastic_picard(
                &self.mesh,
                &self.c_pce,
                u,
                &self.m,
                &t,
                &self.output,
                &self.f,
                &self.bc,
            )?;
            Ok((sys.matrix, sys.rhs))
        })?;
        Ok((
            SolutionPce::from_interleaved(self.output.clone(), &x)?,
            report,
        ))
    }
}

pub fn solve_linear_stochastic(cfg: &RunConfig) -> Result<(SolutionPce, SolveReport)> {
    StochasticProblem::from_config(cfg)?.solve_linear(&SolverSetup::from_config(cfg))
}

pub fn solve_nonlinear_stochastic(cfg: &RunConfig) -> Result<(SolutionPce, SolveReport)> {
    StochasticProblem::from_config(cfg)?
        .solve_nonlinear(&SolverSetup::from_config(cfg), cfg.tolerances.picard)
}

/// Solution of any configured problem.
#[derive(Debug, Clone)]
pub enum Solution {
    Stochastic(SolutionPce),
    Deterministic(Vec<f64>),
}

impl Solution {
    /// Nodal mean and standard deviation (zero for deterministic solutions).
    pub fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Solution::Stochastic(s) => moments(s),
            Solution::Deterministic(u) => (u.clone(), vec![0.0; u.len()]),
        }
    }
}

/// Runs the problem selected by `cfg.problem`.
pub fn solve(cfg: &RunConfig) -> Result<(Solution, SolveReport)> {
    match cfg.problem {
        Problem::LinearStochastic => {
            solve_linear_stochastic(cfg).map(|(s, r)| (Solution::Stochastic(s), r))
        }
        Problem::NonlinearStochastic => {
            solve_nonlinear_stochastic(cfg).map(|(s, r)| (Solution::Stochastic(s), r))
        }
        Problem::LinearDeterministic => {
            solve_deterministic(cfg, 0).map(|(u, r)| (Solution::Deterministic(u), r))
        }
        Problem::NonlinearDeterministic => {
            solve_deterministic(cfg, cfg.m_nonlin).map(|(u, r)| (Solution::Deterministic(u), r))
        }
    }
}

/// Deterministic `-∇·(e^{g₀} (1 + u)^m ∇u) = 0` with `u = 0` on the left
/// edge, `u = 1` on the right edge and zero flux elsewhere.
pub fn solve_deterministic(cfg: &RunConfig, m_nonlin: usize) -> Result<(Vec<f64>, SolveReport)> {
    cfg.validate()?;
    let mesh = TriMesh::unit_square(cfg.mesh_n)?;
    let setup = SolverSetup::from_config(cfg);
    let nn = mesh.nvertices();
    let assembler = ScalarAssembler::new(&mesh, &vec![0.0; nn], &BcSpec::left_right(0.0, 1.0))?;
    let c = cfg.g0.exp();
    let engine = LinearEngine::new(&mesh, 1, setup)?;
    let mut report = SolveReport::new(setup.preconditioner, nn, 1);
    let u = if m_nonlin == 0 {
        let sys = assembler.assemble(&vec![c; nn])?;
        engine.solve(&sys.matrix, &sys.rhs, &mut report)?
    } else {
        picard(nn, cfg.tolerances.picard, &engine, &mut report, |u| {
            let q: Vec<f64> = u
                .iter()
                .map(|&ui| c * (1.0 + ui).powi(m_nonlin as i32))
                .collect();
            let sys = assembler.assemble(&q)?;
            Ok((sys.matrix, sys.rhs))
        })?
    };
    Ok((u, report))
}
