//! P1 finite element assembly of deterministic and stochastic Galerkin
//! diffusion operators.
//!
//! Stochastic systems use a node-interleaved layout: unknown `node·(N+1) + k`
//! holds PC coefficient `k` of `node`. Block `(k, j)` is the stiffness matrix
//! of a nodal coefficient field, and within an element every coefficient is
//! taken as the average of its three vertex values.

use std::collections::BTreeMap;

use crate::chaos::{ChaosBasis, QuadTensor, TripleTensor};
use crate::mesh::{Edge, TriMesh};
use crate::randomfield::LognormalPce;
use crate::sparsela::CsrMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BcMode {
    /// Symmetric elimination of Dirichlet unknowns.
    Eliminate,
    /// Adds `weight · <Ψk²>` to the diagonal of every boundary unknown.
    Penalty(f64),
}

/// Boundary conditions; edges without a Dirichlet value are homogeneous
/// Neumann. Dirichlet data is deterministic, so it only enters PC
/// coefficient 0 and higher coefficients vanish on the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcSpec {
    pub mode: BcMode,
    /// Indexed in [`Edge::ALL`] order: left, right, bottom, top.
    pub dirichlet: [Option<f64>; 4],
}

impl BcSpec {
    /// `u = 0` on the left edge, `u = 1` on the right edge, zero flux elsewhere.
    pub fn left_right(left: f64, right: f64) -> Self {
        BcSpec {
            mode: BcMode::Eliminate,
            dirichlet: [Some(left), Some(right), None, None],
        }
    }

    pub fn all_dirichlet(value: f64) -> Self {
        BcSpec {
            mode: BcMode::Eliminate,
            dirichlet: [Some(value); 4],
        }
    }

    /// Pure Neumann (unconstrained operator).
    pub fn natural() -> Self {
        BcSpec {
            mode: BcMode::Eliminate,
            dirichlet: [None; 4],
        }
    }

    pub fn with_penalty(mut self, weight: f64) -> Result<Self> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::invalid(
                "penalty",
                format!("weight must be > 0, got {weight}"),
            ));
        }
        self.mode = BcMode::Penalty(weight);
        Ok(self)
    }

    fn edge_value(&self, e: Edge) -> Option<f64> {
        self.dirichlet[Edge::ALL.iter().position(|&x| x == e).unwrap()]
    }

    /// Dirichlet value per vertex. Where two Dirichlet edges meet, the left
    /// or right edge takes precedence.
    pub fn nodal_values(&self, mesh: &TriMesh) -> Vec<Option<f64>> {
        (0..mesh.nvertices())
            .map(|v| {
                Edge::ALL
                    .iter()
                    .filter(|&&e| mesh.on_edge(v, e))
                    .find_map(|&e| self.edge_value(e))
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct CsrSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BlockCsrSystem {
    pub nblocks: usize,
    pub block_dim: usize,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

impl BlockCsrSystem {
    /// Block `(k, j)` as a `block_dim × block_dim` matrix.
    pub fn block(&self, k: usize, j: usize) -> CsrMatrix {
        let nb = self.nblocks;
        let mut t = Vec::new();
        for r in 0..self.block_dim {
            let (cols, vals) = self.matrix.row(r * nb + k);
            for (&c, &v) in cols.iter().zip(vals) {
                if c % nb == j {
                    t.push((r, c / nb, v));
                }
            }
        }
        CsrMatrix::from_triplets(self.block_dim, self.block_dim, &t).expect("in-range block")
    }
}

/// Reference-element stiffness `area · ∇φa·∇φb`.
fn local_stiffness(mesh: &TriMesh, t: usize) -> [[f64; 3]; 3] {
    let tri = mesh.triangles()[t];
    let p: Vec<[f64; 2]> = tri.iter().map(|&v| mesh.vertices()[v]).collect();
    let area = mesh.area(t);
    // ∇φa = (y_b − y_c, x_c − x_b) / (2·area) for (a, b, c) cyclic.
    let mut g = [[0.0; 2]; 3];
    for a in 0..3 {
        let b = (a + 1) % 3;
        let c = (a + 2) % 3;
        g[a] = [
            (p[b][1] - p[c][1]) / (2.0 * area),
            (p[c][0] - p[b][0]) / (2.0 * area),
        ];
    }
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
        }
    }
    k
}

/// Consistent mass-matrix load vector `∫ f_h φ_i`.
pub fn load_vector(mesh: &TriMesh, f: &[f64]) -> Vec<f64> {
    let mut b = vec![0.0; mesh.nvertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.area(t);
        let sum: f64 = tri.iter().map(|&v| f[v]).sum();
        for &v in tri {
            b[v] += area / 12.0 * (sum + f[v]);
        }
    }
    b
}

/// Coefficient field of block `(k, j)`.
struct Coupling {
    k: usize,
    j: usize,
    field: Vec<f64>,
}

fn node_graph(mesh: &TriMesh) -> Vec<Vec<usize>> {
    let mut adj = mesh.vertex_neighbors();
    for (v, list) in adj.iter_mut().enumerate() {
        let p = list.binary_search(&v).unwrap_err();
        list.insert(p, v);
    }
    adj
}

/// Assembles the block operator for `couplings` (sorted by `(k, j)`), then
/// applies loads and boundary conditions.
fn assemble_blocks(
    mesh: &TriMesh,
    nb: usize,
    couplings: &[Coupling],
    norms_sq: &[f64],
    f: &[f64],
    bc: &BcSpec,
) -> Result<(CsrMatrix, Vec<f64>)> {
    let nn = mesh.nvertices();
    if f.len() != nn {
        return Err(Error::DimensionMismatch {
            context: "load field",
            expected: nn,
            actual: f.len(),
        });
    }
    let adj = node_graph(mesh);
    // Column-block pattern of every row block k.
    let mut pattern: Vec<Vec<usize>> = vec![Vec::new(); nb];
    let mut slot_of = Vec::with_capacity(couplings.len());
    for c in couplings {
        slot_of.push(pattern[c.k].len());
        pattern[c.k].push(c.j);
    }
    let mut indptr = Vec::with_capacity(nn * nb + 1);
    indptr.push(0usize);
    for list in &adj {
        for pk in &pattern {
            let next = indptr.last().unwrap() + list.len() * pk.len();
            indptr.push(next);
        }
    }
    let nnz = *indptr.last().unwrap();
    let mut indices = Vec::with_capacity(nnz);
    for list in &adj {
        for pk in &pattern {
            for &s in list {
                for &j in pk {
                    indices.push(s * nb + j);
                }
            }
        }
    }
    let mut data = vec![0.0; nnz];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let ke = local_stiffness(mesh, t);
        let mut pos = [[0usize; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                pos[a][b] = adj[tri[a]].binary_search(&tri[b]).unwrap();
            }
        }
        for (c, &slot) in couplings.iter().zip(&slot_of) {
            let avg = (c.field[tri[0]] + c.field[tri[1]] + c.field[tri[2]]) / 3.0;
            let width = pattern[c.k].len();
            for a in 0..3 {
                let base = indptr[tri[a] * nb + c.k] + slot;
                for b in 0..3 {
                    data[base + pos[a][b] * width] += ke[a][b] * avg;
                }
            }
        }
    }
    let matrix = CsrMatrix::from_parts(nn * nb, nn * nb, indptr, indices, data);
    let mut rhs = vec![0.0; nn * nb];
    for (v, bv) in load_vector(mesh, f).into_iter().enumerate() {
        rhs[v * nb] = bv;
    }
    apply_bc(mesh, nb, matrix, rhs, norms_sq, bc)
}

fn apply_bc(
    mesh: &TriMesh,
    nb: usize,
    mut a: CsrMatrix,
    mut rhs: Vec<f64>,
    norms_sq: &[f64],
    bc: &BcSpec,
) -> Result<(CsrMatrix, Vec<f64>)> {
    let values = bc.nodal_values(mesh);
    match bc.mode {
        BcMode::Penalty(w) => {
            for (v, g) in values.iter().enumerate() {
                let Some(g) = g else { continue };
                for k in 0..nb {
                    let row = v * nb + k;
                    let (s, e) = (a.indptr()[row], a.indptr()[row + 1]);
                    let p = s + a.indices()[s..e].binary_search(&row).map_err(|_| {
                        Error::invalid("penalty", format!("row {row} has no diagonal entry"))
                    })?;
                    a.data_mut()[p] += w * norms_sq[k];
                    if k == 0 {
                        rhs[row] += w * g;
                    }
                }
            }
            Ok((a, rhs))
        }
        BcMode::Eliminate => {
            if values.iter().all(Option::is_none) {
                return Ok((a, rhs));
            }
            let fixed = |dof: usize| -> Option<f64> {
                values[dof / nb].map(|g| if dof.is_multiple_of(nb) { g } else { 0.0 })
            };
            let n = a.nrows();
            let mut indptr = Vec::with_capacity(n + 1);
            let mut indices = Vec::with_capacity(a.nnz());
            let mut data = Vec::with_capacity(a.nnz());
            indptr.push(0);
            for row in 0..n {
                if let Some(g) = fixed(row) {
                    indices.push(row);
                    data.push(1.0);
                    rhs[row] = g;
                } else {
                    let (cols, vals) = a.row(row);
                    for (&c, &v) in cols.iter().zip(vals) {
                        match fixed(c) {
                            Some(g) => rhs[row] -= v * g,
                            None => {
                                indices.push(c);
                                data.push(v);
                            }
                        }
                    }
                }
                indptr.push(indices.len());
            }
            Ok((CsrMatrix::from_parts(n, n, indptr, indices, data), rhs))
        }
    }
}

fn check_nodal(name: &'static str, mesh: &TriMesh, len: usize) -> Result<()> {
    if len != mesh.nvertices() {
        return Err(Error::DimensionMismatch {
            context: name,
            expected: mesh.nvertices(),
            actual: len,
        });
    }
    Ok(())
}

fn check_positive(field: &[f64]) -> Result<()> {
    match field.iter().position(|&c| !(c > 0.0 && c.is_finite())) {
        Some(node) => Err(Error::NonPositiveCoefficient {
            node,
            value: field[node],
        }),
        None => Ok(()),
    }
}

/// Scalar P1 system `∫ c ∇u·∇v = ∫ f v` with boundary conditions applied.
pub fn assemble_deterministic(
    mesh: &TriMesh,
    coeff: &[f64],
    f: &[f64],
    bc: &BcSpec,
) -> Result<CsrSystem> {
    ScalarAssembler::new(mesh, f, bc)?.assemble(coeff)
}

#[derive(Debug, Clone, Copy)]
enum Target {
    Data(usize),
    /// Column eliminated with Dirichlet value `g`: moves to the right-hand side.
    Rhs(usize, f64),
    Drop,
}

/// Scalar assembler with the sparsity pattern, element stiffness matrices,
/// load vector and boundary treatment precomputed, for repeated assembly
/// with different coefficient fields.
#[derive(Debug, Clone)]
pub struct ScalarAssembler {
    n: usize,
    triangles: Vec<[usize; 3]>,
    ke: Vec<[[f64; 3]; 3]>,
    targets: Vec<[[Target; 3]; 3]>,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    /// Entries present before any element contribution (identity rows, penalty).
    base_data: Vec<f64>,
    base_rhs: Vec<f64>,
}

impl ScalarAssembler {
    pub fn new(mesh: &TriMesh, f: &[f64], bc: &BcSpec) -> Result<Self> {
        let n = mesh.nvertices();
        check_nodal("load field", mesh, f.len())?;
        let values = bc.nodal_values(mesh);
        let eliminate = bc.mode == BcMode::Eliminate;
        let fixed = |v: usize| if eliminate { values[v] } else { None };
        let adj = node_graph(mesh);
        let mut indptr = vec![0usize];
        let mut indices = Vec::new();
        for (v, list) in adj.iter().enumerate() {
            if fixed(v).is_some() {
                indices.push(v);
            } else {
                indices.extend(list.iter().copied().filter(|&c| fixed(c).is_none()));
            }
            indptr.push(indices.len());
        }
        let find = |r: usize, c: usize| {
            indptr[r] + indices[indptr[r]..indptr[r + 1]].binary_search(&c).unwrap()
        };
        let mut base_data = vec![0.0; indices.len()];
        let mut base_rhs = load_vector(mesh, f);
        for v in 0..n {
            match (bc.mode, values[v]) {
                (BcMode::Eliminate, Some(g)) => {
                    base_data[find(v, v)] = 1.0;
                    base_rhs[v] = g;
                }
                (BcMode::Penalty(w), Some(g)) => {
                    base_data[find(v, v)] += w;
                    base_rhs[v] += w * g;
                }
                _ => {}
            }
        }
        let triangles = mesh.triangles().to_vec();
        let ke = (0..triangles.len())
            .map(|t| local_stiffness(mesh, t))
            .collect();
        let targets = triangles
            .iter()
            .map(|tri| {
                let mut tg = [[Target::Drop; 3]; 3];
                for a in 0..3 {
                    if fixed(tri[a]).is_some() {
                        continue;
                    }
                    for b in 0..3 {
                        tg[a][b] = match fixed(tri[b]) {
                            Some(g) => Target::Rhs(tri[a], g),
                            None => Target::Data(find(tri[a], tri[b])),
                        };
                    }
                }
                tg
            })
            .collect();
        Ok(ScalarAssembler {
            n,
            triangles,
            ke,
            targets,
            indptr,
            indices,
            base_data,
            base_rhs,
        })
    }

    pub fn assemble(&self, coeff: &[f64]) -> Result<CsrSystem> {
        if coeff.len() != self.n {
            return Err(Error::DimensionMismatch {
                context: "coefficient field",
                expected: self.n,
                actual: coeff.len(),
            });
        }
        check_positive(coeff)?;
        let mut data = self.base_data.clone();
        let mut rhs = self.base_rhs.clone();
        for ((tri, ke), tg) in self.triangles.iter().zip(&self.ke).zip(&self.targets) {
            let avg = (coeff[tri[0]] + coeff[tri[1]] + coeff[tri[2]]) / 3.0;
            for a in 0..3 {
                for b in 0..3 {
                    match tg[a][b] {
                        Target::Data(p) => data[p] += ke[a][b] * avg,
                        Target::Rhs(r, g) => rhs[r] -= ke[a][b] * avg * g,
                        Target::Drop => {}
                    }
                }
            }
        }
        let matrix = CsrMatrix::from_parts(
            self.n,
            self.n,
            self.indptr.clone(),
            self.indices.clone(),
            data,
        );
        Ok(CsrSystem { matrix, rhs })
    }
}

fn check_bases(
    c_pce: &LognormalPce,
    output: &ChaosBasis,
    input_len: usize,
    output_len: usize,
) -> Result<()> {
    if c_pce.basis().len() != input_len {
        return Err(Error::DimensionMismatch {
            context: "tensor input basis",
            expected: input_len,
            actual: c_pce.basis().len(),
        });
    }
    if output.len() != output_len {
        return Err(Error::DimensionMismatch {
            context: "tensor output basis",
            expected: output_len,
            actual: output.len(),
        });
    }
    if c_pce.basis().nvars() != output.nvars() {
        return Err(Error::DimensionMismatch {
            context: "random variable count",
            expected: output.nvars(),
            actual: c_pce.basis().nvars(),
        });
    }
    Ok(())
}

fn into_couplings(map: BTreeMap<(usize, usize), Vec<f64>>) -> Vec<Coupling> {
    map.into_iter()
        .map(|((k, j), field)| Coupling { k, j, field })
        .collect()
}

/// Coefficient fields `Σ_i m_ijk c̄_i` of the linear stochastic blocks.
fn linear_fields(
    c_pce: &LognormalPce,
    m: &TripleTensor,
    nn: usize,
) -> BTreeMap<(usize, usize), Vec<f64>> {
    let mut map: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for (i, j, k, v) in m.entries() {
        let field = map.entry((k, j)).or_insert_with(|| vec![0.0; nn]);
        for (fx, cx) in field.iter_mut().zip(c_pce.field(i)) {
            *fx += v * cx;
        }
    }
    map
}

/// Stochastic Galerkin system for `-∇·(c ∇u) = f` with `c = Σ_i c̄_i Ψ_i`.
pub fn assemble_stochastic_linear(
    mesh: &TriMesh,
    c_pce: &LognormalPce,
    m: &TripleTensor,
    output: &ChaosBasis,
    f: &[f64],
    bc: &BcSpec,
) -> Result<BlockCsrSystem> {
    check_bases(c_pce, output, m.input_len(), m.output_len())?;
    check_nodal("coefficient field", mesh, c_pce.nnodes())?;
    let nb = output.len();
    let couplings = into_couplings(linear_fields(c_pce, m, mesh.nvertices()));
    let (matrix, rhs) = assemble_blocks(mesh, nb, &couplings, &output.norms_sq(), f, bc)?;
    Ok(BlockCsrSystem {
        nblocks: nb,
        block_dim: mesh.nvertices(),
        matrix,
        rhs,
    })
}

/// Picard-linearized system for `-∇·(c (1 + u) ∇u) = f`, frozen at `u_prev`
/// (interleaved block vector). Block `(l, k)` carries
/// `Σ_i m_ikl c̄_i + Σ_ij t_ijkl c̄_i ū_j`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_stochastic_picard(
    mesh: &TriMesh,
    c_pce: &LognormalPce,
    u_prev: &[f64],
    m: &TripleTensor,
    t: &QuadTensor,
    output: &ChaosBasis,
    f: &[f64],
    bc: &BcSpec,
) -> Result<BlockCsrSystem> {
    check_bases(c_pce, output, m.input_len(), m.output_len())?;
    check_bases(c_pce, output, t.input_len(), t.output_len())?;
    check_nodal("coefficient field", mesh, c_pce.nnodes())?;
    let nb = output.len();
    let nn = mesh.nvertices();
    if u_prev.len() != nn * nb {
        return Err(Error::DimensionMismatch {
            context: "previous Picard iterate",
            expected: nn * nb,
            actual: u_prev.len(),
        });
    }
    let mut map = linear_fields(c_pce, m, nn);
    // Group by (i, j) so each product field c̄_i ū_j is formed once.
    let mut by_ij: BTreeMap<(usize, usize), Vec<(usize, usize, f64)>> = BTreeMap::new();
    for (i, j, k, l, v) in t.entries() {
        by_ij.entry((i, j)).or_default().push((k, l, v));
    }
    let mut prod = vec![0.0; nn];
    for ((i, j), list) in by_ij {
        let ci = c_pce.field(i);
        let mut nonzero = false;
        for x in 0..nn {
            prod[x] = ci[x] * u_prev[x * nb + j];
            nonzero |= prod[x] != 0.0;
        }
        if !nonzero {
            continue;
        }
        for (k, l, v) in list {
            let field = map.entry((l, k)).or_insert_with(|| vec![0.0; nn]);
            for (fx, px) in field.iter_mut().zip(&prod) {
                *fx += v * px;
            }
        }
    }
    for k in 0..nb {
        if let Some(field) = map.get(&(k, k)) {
            check_positive(field)?;
        }
    }
    let couplings = into_couplings(map);
    let (matrix, rhs) = assemble_blocks(mesh, nb, &couplings, &output.norms_sq(), f, bc)?;
    Ok(BlockCsrSystem {
        nblocks: nb,
        block_dim: nn,
        matrix,
        rhs,
    })
}
