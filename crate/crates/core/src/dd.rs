//! Overlapping domain decomposition: structured subdomain partitions, the
//! one-level restricted additive Schwarz (RAS) preconditioner and the
//! two-grid RAS preconditioner with a Galerkin coarse operator.
//!
//! The vertex grid is cut into an `r × c` array of blocks (`r·c = nsub`,
//! `c ≥ r`, as square as the factorization allows). Each block is grown by
//! whole element layers to form the overlapping subdomain; the original block
//! is the subdomain's owned set, so the ownership weights `Dᵢ` form a partition
//! of unity. Unknowns are node-blocked: a node brings all `nblocks` PC
//! coefficients with it.

use std::io::Write;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amg::{AmgConfig, AmgHierarchy};
use crate::mesh::{NestedPair, TriMesh};
use crate::sparsela::{gmres, norm2, CsrMatrix, Ilu0, KrylovConfig, Preconditioner, SparseLu};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Subdomain {
    /// Mesh vertices, ascending.
    pub nodes: Vec<usize>,
    /// Global unknowns, ascending (`node·nblocks + k`).
    pub dofs: Vec<usize>,
    /// Ownership weight (0/1) per entry of `dofs`.
    pub owned: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub nsub: usize,
    /// Block array `(rows, cols)` of the vertex grid.
    pub layout: (usize, usize),
    pub overlap: usize,
    pub nblocks: usize,
    pub ndofs: usize,
    pub subdomains: Vec<Subdomain>,
}

/// `(rows, cols)` with `rows·cols = nsub`, `rows ≤ cols`, rows maximal.
pub fn block_layout(nsub: usize) -> (usize, usize) {
    let mut r = (nsub as f64).sqrt().floor() as usize;
    while r > 1 && !nsub.is_multiple_of(r) {
        r -= 1;
    }
    let r = r.max(1);
    (r, nsub / r)
}

/// Splits `0..len` into `parts` contiguous chunks of near-equal size.
fn cuts(len: usize, parts: usize) -> Vec<usize> {
    (0..=parts).map(|k| (k * len + parts / 2) / parts).collect()
}

pub fn partition_overlap(
    mesh: &TriMesh,
    nblocks: usize,
    nsub: usize,
    overlap: usize,
) -> Result<Partition> {
    if nsub == 0 {
        return Err(Error::Partition("nsub must be >= 1".into()));
    }
    if overlap == 0 {
        return Err(Error::Partition("overlap must be >= 1".into()));
    }
    if nblocks == 0 {
        return Err(Error::Partition(
            "need at least one PC coefficient per node".into(),
        ));
    }
    let (rows, cols) = block_layout(nsub);
    let np = mesh.n() + 1;
    if cols > np || rows > np {
        return Err(Error::Partition(format!(
            "{nsub} subdomains need a {rows}x{cols} block array but the mesh has only {np} vertex rows/columns"
        )));
    }
    let cx = cuts(np, cols);
    let cy = cuts(np, rows);
    let adj = mesh.vertex_neighbors();
    let nn = mesh.nvertices();
    let mut mark = vec![usize::MAX; nn];
    let mut subdomains = Vec::with_capacity(nsub);
    for by in 0..rows {
        for bx in 0..cols {
            let s = by * cols + bx;
            let mut core = Vec::new();
            for j in cy[by]..cy[by + 1] {
                for i in cx[bx]..cx[bx + 1] {
                    core.push(mesh.vertex_index(i, j));
                }
            }
            for &v in &core {
                mark[v] = s;
            }
            let mut nodes = core.clone();
            let mut frontier = core.clone();
            for _ in 0..overlap {
                let mut next = Vec::new();
                for &v in &frontier {
                    for &w in &adj[v] {
                        if mark[w] != s {
                            mark[w] = s;
                            next.push(w);
                        }
                    }
                }
                nodes.extend_from_slice(&next);
                frontier = next;
            }
            nodes.sort_unstable();
            core.sort_unstable();
            let mut dofs = Vec::with_capacity(nodes.len() * nblocks);
            let mut owned = Vec::with_capacity(nodes.len() * nblocks);
            for &v in &nodes {
                let own = core.binary_search(&v).is_ok();
                for k in 0..nblocks {
                    dofs.push(v * nblocks + k);
                    owned.push(own);
                }
            }
            subdomains.push(Subdomain { nodes, dofs, owned });
        }
    }
    Ok(Partition {
        nsub,
        layout: (rows, cols),
        overlap,
        nblocks,
        ndofs: nn * nblocks,
        subdomains,
    })
}

impl Partition {
    /// Owning subdomain of every unknown.
    pub fn owner(&self) -> Vec<usize> {
        let mut owner = vec![usize::MAX; self.ndofs];
        for (s, sub) in self.subdomains.iter().enumerate() {
            for (&d, &o) in sub.dofs.iter().zip(&sub.owned) {
                if o {
                    owner[d] = s;
                }
            }
        }
        owner
    }

    /// Every unknown owned exactly once.
    pub fn is_partition_of_unity(&self) -> bool {
        let mut count = vec![0usize; self.ndofs];
        for sub in &self.subdomains {
            for (&d, &o) in sub.dofs.iter().zip(&sub.owned) {
                count[d] += o as usize;
            }
        }
        count.iter().all(|&c| c == 1)
    }

    /// CSV `dof,node,pc,owner,multiplicity`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let owner = self.owner();
        let mut mult = vec![0usize; self.ndofs];
        for sub in &self.subdomains {
            for &d in &sub.dofs {
                mult[d] += 1;
            }
        }
        writeln!(w, "dof,node,pc,owner,multiplicity")?;
        for d in 0..self.ndofs {
            writeln!(
                w,
                "{},{},{},{},{}",
                d,
                d / self.nblocks,
                d % self.nblocks,
                owner[d],
                mult[d]
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocalSolver {
    Ilu0,
    Lu,
}

enum LocalFactor {
    Ilu(Ilu0),
    Lu(SparseLu),
}

impl LocalFactor {
    fn solve_in_place(&self, x: &mut [f64]) {
        match self {
            LocalFactor::Ilu(f) => f.solve_in_place(x),
            LocalFactor::Lu(f) => f.solve_in_place(x),
        }
    }
}

struct LocalProblem {
    dofs: Vec<usize>,
    owned: Vec<bool>,
    factor: LocalFactor,
}

/// `M⁻¹ = Σᵢ Rᵢᵀ Dᵢ (Rᵢ A Rᵢᵀ)⁻¹ Rᵢ`, local solves run concurrently and are
/// combined in ascending subdomain order.
pub struct OneLevelRas {
    n: usize,
    locals: Vec<LocalProblem>,
}

impl OneLevelRas {
    pub fn new(a: &CsrMatrix, partition: &Partition, solver: LocalSolver) -> Result<Self> {
        if a.nrows() != partition.ndofs {
            return Err(Error::DimensionMismatch {
                context: "RAS partition",
                expected: partition.ndofs,
                actual: a.nrows(),
            });
        }
        let locals = partition
            .subdomains
            .iter()
            .map(|sub| {
                let local = a.submatrix(&sub.dofs);
                let factor = match solver {
                    LocalSolver::Ilu0 => LocalFactor::Ilu(Ilu0::new(&local)?),
                    LocalSolver::Lu => LocalFactor::Lu(SparseLu::new(&local)?),
                };
                Ok(LocalProblem {
                    dofs: sub.dofs.clone(),
                    owned: sub.owned.clone(),
                    factor,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(OneLevelRas {
            n: a.nrows(),
            locals,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nsub(&self) -> usize {
        self.locals.len()
    }
}

impl Preconditioner for OneLevelRas {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let parts: Vec<Vec<f64>> = self
            .locals
            .par_iter()
            .map(|l| {
                let mut x: Vec<f64> = l.dofs.iter().map(|&d| r[d]).collect();
                l.factor.solve_in_place(&mut x);
                x
            })
            .collect();
        z.iter_mut().for_each(|v| *v = 0.0);
        for (l, x) in self.locals.iter().zip(&parts) {
            for ((&d, &own), &v) in l.dofs.iter().zip(&l.owned).zip(x) {
                if own {
                    z[d] += v;
                }
            }
        }
    }
}

/// Coarse-grid solver of the two-grid preconditioner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoarseVariant {
    /// Exact sparse LU (2G-LU).
    Lu,
    /// Inner GMRES preconditioned by one-level RAS on the coarse mesh (2GV2).
    GmresRas,
    /// Inner GMRES preconditioned by one AMG V-cycle (2GV3).
    GmresAmg,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoGridOptions {
    pub variant: CoarseVariant,
    pub local_solver: LocalSolver,
    /// Inner GMRES settings (ignored for the LU variant).
    pub coarse_krylov: KrylovConfig,
    pub amg: AmgConfig,
}

impl TwoGridOptions {
    /// Defaults per variant: V2 stops the inner solve at 1e-2 or 100
    /// iterations, V3 at `coarse_tol`.
    pub fn new(variant: CoarseVariant, coarse_tol: f64) -> Self {
        let coarse_krylov = match variant {
            CoarseVariant::GmresRas => KrylovConfig {
                rel_tol: 1e-2,
                max_iters: 100,
                restart: 200,
            },
            _ => KrylovConfig {
                rel_tol: coarse_tol,
                max_iters: 1000,
                restart: 200,
            },
        };
        TwoGridOptions {
            variant,
            local_solver: LocalSolver::Ilu0,
            coarse_krylov,
            amg: AmgConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CoarseStats {
    pub applications: usize,
    pub iterations: usize,
    pub unconverged: usize,
}

impl CoarseStats {
    pub fn mean_iterations(&self) -> f64 {
        if self.applications == 0 {
            0.0
        } else {
            self.iterations as f64 / self.applications as f64
        }
    }
}

enum CoarseSolver {
    Lu(SparseLu),
    Ras(OneLevelRas, KrylovConfig),
    Amg(Box<AmgHierarchy>, KrylovConfig),
}

/// Two-grid RAS: pre-smoothing, Galerkin coarse correction, post-smoothing.
pub struct TwoGridPreconditioner<'a> {
    a: &'a CsrMatrix,
    smoother: OneLevelRas,
    r0: CsrMatrix,
    p0: CsrMatrix,
    ac: CsrMatrix,
    coarse: CoarseSolver,
    stats: Mutex<CoarseStats>,
}

/// Builds the two-grid preconditioner for `a` on `pair.fine()` with
/// `nblocks` unknowns per node. The coarse problem is split over the same
/// number of subdomains as the fine one.
pub fn build_twogrid<'a>(
    a: &'a CsrMatrix,
    nblocks: usize,
    pair: &NestedPair,
    partition: &Partition,
    opts: &TwoGridOptions,
) -> Result<TwoGridPreconditioner<'a>> {
    let expected = pair.fine().nvertices() * nblocks;
    if a.nrows() != expected {
        return Err(Error::DimensionMismatch {
            context: "two-grid fine operator",
            expected,
            actual: a.nrows(),
        });
    }
    let smoother = OneLevelRas::new(a, partition, opts.local_solver)?;
    let p0 = pair.interpolation_matrix()?.block_expand(nblocks);
    let r0 = p0.transpose();
    let ac = r0.matmul(&a.matmul(&p0)?)?;
    let coarse = match opts.variant {
        CoarseVariant::Lu => CoarseSolver::Lu(SparseLu::new(&ac)?),
        CoarseVariant::GmresRas => {
            let cpart =
                partition_overlap(pair.coarse(), nblocks, partition.nsub, partition.overlap)?;
            CoarseSolver::Ras(
                OneLevelRas::new(&ac, &cpart, LocalSolver::Ilu0)?,
                opts.coarse_krylov,
            )
        }
        CoarseVariant::GmresAmg => CoarseSolver::Amg(
            Box::new(AmgHierarchy::new(&ac, &opts.amg)?),
            opts.coarse_krylov,
        ),
    };
    Ok(TwoGridPreconditioner {
        a,
        smoother,
        r0,
        p0,
        ac,
        coarse,
        stats: Mutex::new(CoarseStats::default()),
    })
}

impl TwoGridPreconditioner<'_> {
    pub fn coarse_operator(&self) -> &CsrMatrix {
        &self.ac
    }

    /// `R₀`, coarse × fine.
    pub fn restriction(&self) -> &CsrMatrix {
        &self.r0
    }

    pub fn smoother(&self) -> &OneLevelRas {
        &self.smoother
    }

    pub fn stats(&self) -> CoarseStats {
        *self.stats.lock().unwrap()
    }

    pub fn reset_stats(&self) {
        *self.stats.lock().unwrap() = CoarseStats::default();
    }

    pub fn amg(&self) -> Option<&AmgHierarchy> {
        match &self.coarse {
            CoarseSolver::Amg(h, _) => Some(h),
            _ => None,
        }
    }

    fn coarse_solve(&self, rc: &[f64]) -> Vec<f64> {
        match &self.coarse {
            CoarseSolver::Lu(lu) => {
                let mut x = rc.to_vec();
                lu.solve_in_place(&mut x);
                self.record(0, true);
                x
            }
            CoarseSolver::Ras(pc, cfg) => self.inner(pc, cfg, rc),
            CoarseSolver::Amg(h, cfg) => self.inner(h.as_ref(), cfg, rc),
        }
    }

    fn inner(&self, pc: &dyn Preconditioner, cfg: &KrylovConfig, rc: &[f64]) -> Vec<f64> {
        if norm2(rc) == 0.0 {
            self.record(0, true);
            return vec![0.0; rc.len()];
        }
        match gmres(&self.ac, rc, None, pc, cfg) {
            Ok((x, rep)) => {
                self.record(rep.iterations, rep.converged);
                x
            }
            Err(_) => {
                self.record(0, false);
                vec![0.0; rc.len()]
            }
        }
    }

    fn record(&self, iterations: usize, converged: bool) {
        let mut s = self.stats.lock().unwrap();
        s.applications += 1;
        s.iterations += iterations;
        s.unconverged += (!converged) as usize;
    }
}

impl Preconditioner for TwoGridPreconditioner<'_> {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        let mut t = vec![0.0; n];
        // Pre-smoothing.
        self.smoother.apply(r, z);
        // Coarse correction of the smoothed residual.
        self.a.residual(r, z, &mut t);
        let rc = self.r0.spmv(&t).expect("restriction dimensions");
        let ec = self.coarse_solve(&rc);
        let corr = self.p0.spmv(&ec).expect("prolongation dimensions");
        z.iter_mut().zip(&corr).for_each(|(zi, ci)| *zi += ci);
        // Post-smoothing.
        self.a.residual(r, z, &mut t);
        let mut post = vec![0.0; n];
        self.smoother.apply(&t, &mut post);
        z.iter_mut().zip(&post).for_each(|(zi, pi)| *zi += pi);
    }
}
