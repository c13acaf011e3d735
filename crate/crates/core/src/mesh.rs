//! Structured P1 triangulations of the unit square and nested coarse/fine
//! pairs.
//!
//! Vertex `(i, j)` of an `n × n` grid has index `j·(n+1) + i` and sits at
//! `(i/n, j/n)`. Cell `(i, j)` is split along its rising diagonal into
//! triangles `2c` = (v00, v10, v11) and `2c+1` = (v00, v11, v01),
//! `c = j·n + i`, both counter-clockwise.

use std::io::Write;

use crate::sparsela::CsrMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top];
}

/// Per-vertex boundary classification. Corners carry the tag of their
/// vertical edge (left or right).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Interior,
    Boundary(Edge),
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    n: usize,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_tags: Vec<BoundaryTag>,
}

impl TriMesh {
    pub fn unit_square(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("mesh_n", "must be >= 1"));
        }
        let np = n + 1;
        let h = 1.0 / n as f64;
        let mut vertices = Vec::with_capacity(np * np);
        let mut boundary_tags = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                let x = if i == n { 1.0 } else { i as f64 * h };
                let y = if j == n { 1.0 } else { j as f64 * h };
                vertices.push([x, y]);
                let tag = if i == 0 {
                    BoundaryTag::Boundary(Edge::Left)
                } else if i == n {
                    BoundaryTag::Boundary(Edge::Right)
                } else if j == 0 {
                    BoundaryTag::Boundary(Edge::Bottom)
                } else if j == n {
                    BoundaryTag::Boundary(Edge::Top)
                } else {
                    BoundaryTag::Interior
                };
                boundary_tags.push(tag);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let v00 = j * np + i;
                let v10 = v00 + 1;
                let v01 = v00 + np;
                let v11 = v01 + 1;
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        Ok(TriMesh {
            n,
            vertices,
            triangles,
            boundary_tags,
        })
    }

    /// Cells per side.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nvertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn ntriangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_tags(&self) -> &[BoundaryTag] {
        &self.boundary_tags
    }

    pub fn vertex_index(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }

    /// Grid coordinates `(i, j)` of a vertex.
    pub fn grid_coords(&self, v: usize) -> (usize, usize) {
        (v % (self.n + 1), v / (self.n + 1))
    }

    /// Whether vertex `v` lies on `edge` (corners lie on two edges).
    pub fn on_edge(&self, v: usize, edge: Edge) -> bool {
        let (i, j) = self.grid_coords(v);
        match edge {
            Edge::Left => i == 0,
            Edge::Right => i == self.n,
            Edge::Bottom => j == 0,
            Edge::Top => j == self.n,
        }
    }

    /// Signed area (positive for counter-clockwise triangles).
    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    /// Barycentric coordinates of `(x, y)` in triangle `t`.
    pub fn barycentric(&self, t: usize, x: f64, y: f64) -> [f64; 3] {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        let det = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
        let l1 = ((x - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (y - pa[1])) / det;
        let l2 = ((pb[0] - pa[0]) * (y - pa[1]) - (x - pa[0]) * (pb[1] - pa[1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Lowest-index triangle containing `(x, y)` and the barycentric weights
    /// there, or `None` outside the square.
    pub fn locate(&self, x: f64, y: f64) -> Option<(usize, [f64; 3])> {
        const EPS: f64 = 1e-12;
        if !(-EPS..=1.0 + EPS).contains(&x) || !(-EPS..=1.0 + EPS).contains(&y) {
            return None;
        }
        let n = self.n as f64;
        let cells = |s: f64| -> Vec<usize> {
            let f = (s * n).floor().clamp(0.0, n - 1.0) as usize;
            let mut c = vec![f];
            if f > 0 && (s * n - f as f64).abs() < 1e-9 {
                c.insert(0, f - 1);
            }
            if f + 1 < self.n && ((f + 1) as f64 - s * n).abs() < 1e-9 {
                c.push(f + 1);
            }
            c
        };
        let mut best: Option<(usize, [f64; 3])> = None;
        for cj in cells(y) {
            for ci in cells(x) {
                for t in [2 * (cj * self.n + ci), 2 * (cj * self.n + ci) + 1] {
                    let w = self.barycentric(t, x, y);
                    if w.iter().all(|&l| l >= -EPS) && best.is_none_or(|(b, _)| t < b) {
                        best = Some((t, w));
                    }
                }
            }
        }
        best.map(|(t, w)| (t, clean_weights(w)))
    }

    /// P1 interpolant of a nodal field at `(x, y)`.
    pub fn interpolate(&self, field: &[f64], x: f64, y: f64) -> Result<f64> {
        if field.len() != self.nvertices() {
            return Err(Error::DimensionMismatch {
                context: "interpolate",
                expected: self.nvertices(),
                actual: field.len(),
            });
        }
        let (t, w) = self.locate(x, y).ok_or_else(|| {
            Error::invalid("point", format!("({x}, {y}) lies outside the unit square"))
        })?;
        let tri = self.triangles[t];
        Ok((0..3).map(|k| w[k] * field[tri[k]]).sum())
    }

    /// Vertex adjacency through triangle edges, sorted, excluding self.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nvertices()];
        for tri in &self.triangles {
            for a in 0..3 {
                for b in 0..3 {
                    if a != b {
                        adj[tri[a]].push(tri[b]);
                    }
                }
            }
        }
        for list in adj.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Legacy ASCII VTK unstructured grid with point-data scalar fields. The
    /// title line is truncated to the format's 255 characters.
    pub fn write_vtk<W: Write>(
        &self,
        mut w: W,
        title: &str,
        fields: &[(&str, &[f64])],
    ) -> Result<()> {
        for (name, f) in fields {
            if f.len() != self.nvertices() {
                return Err(Error::DimensionMismatch {
                    context: "vtk field",
                    expected: self.nvertices(),
                    actual: f.len(),
                });
            }
            if name.contains(char::is_whitespace) {
                return Err(Error::invalid(
                    "vtk field",
                    format!("name `{name}` contains whitespace"),
                ));
            }
        }
        let title: String = title.replace(['\n', '\r'], " ").chars().take(255).collect();
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "{title}")?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
        writeln!(w, "POINTS {} double", self.nvertices())?;
        for p in &self.vertices {
            writeln!(w, "{} {} 0", p[0], p[1])?;
        }
        writeln!(w, "CELLS {} {}", self.ntriangles(), 4 * self.ntriangles())?;
        for t in &self.triangles {
            writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
        }
        writeln!(w, "CELL_TYPES {}", self.ntriangles())?;
        for _ in &self.triangles {
            writeln!(w, "5")?;
        }
        if !fields.is_empty() {
            writeln!(w, "POINT_DATA {}", self.nvertices())?;
            for (name, f) in fields {
                writeln!(w, "SCALARS {name} double 1")?;
                writeln!(w, "LOOKUP_TABLE default")?;
                for v in *f {
                    writeln!(w, "{v:.17e}")?;
                }
            }
        }
        Ok(())
    }
}

fn clean_weights(mut w: [f64; 3]) -> [f64; 3] {
    for l in w.iter_mut() {
        if l.abs() < 1e-12 {
            *l = 0.0;
        } else if (*l - 1.0).abs() < 1e-12 {
            *l = 1.0;
        }
    }
    w
}

/// A coarse mesh whose vertices are a subset of the fine mesh's.
#[derive(Debug, Clone)]
pub struct NestedPair {
    coarse: TriMesh,
    fine: TriMesh,
    refinement_factor: usize,
}

impl NestedPair {
    pub fn new(coarse: TriMesh, fine: TriMesh) -> Result<Self> {
        if !fine.n.is_multiple_of(coarse.n) {
            return Err(Error::NotNested(format!(
                "fine resolution {} is not a multiple of coarse resolution {}",
                fine.n, coarse.n
            )));
        }
        let refinement_factor = fine.n / coarse.n;
        Ok(NestedPair {
            coarse,
            fine,
            refinement_factor,
        })
    }

    /// Coarse mesh obtained by coarsening `fine` by `factor` per direction.
    pub fn from_fine(fine: TriMesh, factor: usize) -> Result<Self> {
        if factor == 0 || !fine.n.is_multiple_of(factor) {
            return Err(Error::NotNested(format!(
                "refinement factor {factor} does not divide resolution {}",
                fine.n
            )));
        }
        let coarse = TriMesh::unit_square(fine.n / factor)?;
        NestedPair::new(coarse, fine)
    }

    pub fn coarse(&self) -> &TriMesh {
        &self.coarse
    }

    pub fn fine(&self) -> &TriMesh {
        &self.fine
    }

    pub fn refinement_factor(&self) -> usize {
        self.refinement_factor
    }

    /// `R₀ᵀ`: fine × coarse matrix whose row `f` holds the coarse P1 basis
    /// functions evaluated at fine vertex `f`.
    pub fn interpolation_matrix(&self) -> Result<CsrMatrix> {
        let mut triplets = Vec::with_capacity(3 * self.fine.nvertices());
        for (f, p) in self.fine.vertices.iter().enumerate() {
            let (t, w) = self.coarse.locate(p[0], p[1]).ok_or_else(|| {
                Error::NotNested(format!("fine vertex {f} outside the coarse mesh"))
            })?;
            let tri = self.coarse.triangles[t];
            for k in 0..3 {
                if w[k] != 0.0 {
                    triplets.push((f, tri[k], w[k]));
                }
            }
        }
        Ok(CsrMatrix::from_triplets(
            self.fine.nvertices(),
            self.coarse.nvertices(),
            &triplets,
        )?)
    }
}
