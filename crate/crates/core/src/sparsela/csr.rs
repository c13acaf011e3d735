use rayon::prelude::*;

use super::{LinalgError, LinearOperator};

const PAR_ROWS: usize = 8192;

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(
        nrows: usize,
        ncols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        data: Vec<f64>,
    ) -> Result<Self, LinalgError> {
        if indptr.len() != nrows + 1 || indptr[0] != 0 {
            return Err(LinalgError::InvalidStructure("row pointer length".into()));
        }
        if indices.len() != data.len() || *indptr.last().unwrap() != indices.len() {
            return Err(LinalgError::InvalidStructure("nonzero count".into()));
        }
        for r in 0..nrows {
            if indptr[r] > indptr[r + 1] {
                return Err(LinalgError::InvalidStructure(format!(
                    "row {r} pointers decrease"
                )));
            }
            let row = &indices[indptr[r]..indptr[r + 1]];
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(LinalgError::InvalidStructure(format!(
                    "row {r} columns unsorted or duplicated"
                )));
            }
            if row.last().is_some_and(|&c| c >= ncols) {
                return Err(LinalgError::InvalidStructure(format!(
                    "row {r} column out of range"
                )));
            }
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        })
    }

    /// Internal constructor for arrays already known to be valid.
    pub(crate) fn from_parts(
        nrows: usize,
        ncols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        data: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(indptr.len(), nrows + 1);
        debug_assert_eq!(indices.len(), data.len());
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    /// Builds from `(row, col, value)` triplets, summing duplicates. Explicit
    /// zeros are kept so the sparsity pattern stays structural.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, LinalgError> {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(LinalgError::InvalidStructure(format!(
                    "triplet ({r},{c}) outside {nrows}x{ncols}"
                )));
            }
            counts[r + 1] += 1;
        }
        for r in 0..nrows {
            counts[r + 1] += counts[r];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for r in 0..nrows {
            order.clear();
            order.extend(counts[r]..counts[r + 1]);
            order.sort_by_key(|&p| cols[p]);
            for &p in &order {
                if indices.len() > indptr[r] && *indices.last().unwrap() == cols[p] {
                    *data.last_mut().unwrap() += vals[p];
                } else {
                    indices.push(cols[p]);
                    data.push(vals[p]);
                }
            }
            indptr.push(indices.len());
        }
        Ok(CsrMatrix::from_parts(nrows, ncols, indptr, indices, data))
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix::from_diag(&vec![1.0; n])
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let n = d.len();
        CsrMatrix::from_parts(n, n, (0..=n).collect(), (0..n).collect(), d.to_vec())
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix::from_parts(nrows, ncols, vec![0; nrows + 1], Vec::new(), Vec::new())
    }

    pub fn from_dense(a: &nalgebra::DMatrix<f64>) -> Self {
        let mut t = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    t.push((i, j, a[(i, j)]));
                }
            }
        }
        CsrMatrix::from_triplets(a.nrows(), a.ncols(), &t).expect("in-range triplets")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.data[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|p| vals[p]).unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols))
            .map(|i| self.get(i, i))
            .collect()
    }

    /// `y = A x`.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if x.len() != self.ncols {
            return Err(LinalgError::DimensionMismatch {
                expected: self.ncols,
                actual: x.len(),
            });
        }
        let mut y = vec![0.0; self.nrows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// `y = A x` into a caller buffer. Row-parallel for large matrices; each
    /// row is summed sequentially so results do not depend on thread count.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols, "spmv input length");
        assert_eq!(y.len(), self.nrows, "spmv output length");
        let row = |i: usize| -> f64 {
            let (a, b) = (self.indptr[i], self.indptr[i + 1]);
            let mut s = 0.0;
            for p in a..b {
                s += self.data[p] * x[self.indices[p]];
            }
            s
        };
        if self.nrows >= PAR_ROWS {
            y.par_iter_mut()
                .enumerate()
                .for_each(|(i, yi)| *yi = row(i));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = row(i);
            }
        }
    }

    /// `r = b - A x`.
    pub fn residual(&self, b: &[f64], x: &[f64], r: &mut [f64]) {
        self.spmv_into(x, r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut indices = vec![0usize; self.nnz()];
        let mut data = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[p];
                indices[next[c]] = r;
                data[next[c]] = self.data[p];
                next[c] += 1;
            }
        }
        CsrMatrix::from_parts(self.ncols, self.nrows, counts, indices, data)
    }

    /// Sparse product `A B` (Gustavson).
    pub fn matmul(&self, other: &CsrMatrix) -> Result<CsrMatrix, LinalgError> {
        if self.ncols != other.nrows {
            return Err(LinalgError::DimensionMismatch {
                expected: self.ncols,
                actual: other.nrows,
            });
        }
        let n = other.ncols;
        let mut marker = vec![usize::MAX; n];
        let mut acc = vec![0.0; n];
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        let mut row_cols: Vec<usize> = Vec::new();
        indptr.push(0);
        for i in 0..self.nrows {
            row_cols.clear();
            for p in self.indptr[i]..self.indptr[i + 1] {
                let k = self.indices[p];
                let a = self.data[p];
                for q in other.indptr[k]..other.indptr[k + 1] {
                    let j = other.indices[q];
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = 0.0;
                        row_cols.push(j);
                    }
                    acc[j] += a * other.data[q];
                }
            }
            row_cols.sort_unstable();
            for &j in &row_cols {
                indices.push(j);
                data.push(acc[j]);
            }
            indptr.push(indices.len());
        }
        Ok(CsrMatrix::from_parts(self.nrows, n, indptr, indices, data))
    }

    /// Principal submatrix `A[idx, idx]`; `idx` must be strictly increasing.
    pub fn submatrix(&self, idx: &[usize]) -> CsrMatrix {
        debug_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        let mut local = vec![usize::MAX; self.ncols];
        for (l, &g) in idx.iter().enumerate() {
            local[g] = l;
        }
        let mut indptr = Vec::with_capacity(idx.len() + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for &g in idx {
            for p in self.indptr[g]..self.indptr[g + 1] {
                let l = local[self.indices[p]];
                if l != usize::MAX {
                    indices.push(l);
                    data.push(self.data[p]);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix::from_parts(idx.len(), idx.len(), indptr, indices, data)
    }

    /// `A ⊗ I_nb` in interleaved layout: entry `(r, c)` becomes the diagonal
    /// block `(r·nb + k, c·nb + k)` for every `k`.
    pub fn block_expand(&self, nb: usize) -> CsrMatrix {
        let mut indptr = Vec::with_capacity(self.nrows * nb + 1);
        let mut indices = Vec::with_capacity(self.nnz() * nb);
        let mut data = Vec::with_capacity(self.nnz() * nb);
        indptr.push(0);
        for r in 0..self.nrows {
            for k in 0..nb {
                for p in self.indptr[r]..self.indptr[r + 1] {
                    indices.push(self.indices[p] * nb + k);
                    data.push(self.data[p]);
                }
                indptr.push(indices.len());
            }
        }
        CsrMatrix::from_parts(self.nrows * nb, self.ncols * nb, indptr, indices, data)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                d[(i, self.indices[p])] += self.data[p];
            }
        }
        d
    }

    /// Largest `|a_ij - a_ji|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[p];
                worst = worst.max((self.data[p] - t.get(i, j)).abs());
            }
        }
        worst
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.spmv_into(x, y);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CsrMatrix {
        CsrMatrix::from_triplets(
            3,
            4,
            &[
                (0, 0, 1.0),
                (0, 3, 2.0),
                (1, 1, 3.0),
                (2, 0, 4.0),
                (2, 2, 5.0),
                (2, 0, 1.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = sample();
        assert_eq!(a.get(2, 0), 5.0);
        assert_eq!(a.nnz(), 5);
    }

    #[test]
    fn spmv_identity_and_zero() {
        let x = vec![1.0, -2.0, 3.5];
        assert_eq!(CsrMatrix::identity(3).spmv(&x).unwrap(), x);
        assert_eq!(CsrMatrix::zeros(2, 3).spmv(&x).unwrap(), vec![0.0, 0.0]);
        assert!(CsrMatrix::identity(2).spmv(&x).is_err());
    }

    #[test]
    fn transpose_and_matmul_match_dense() {
        let a = sample();
        let at = a.transpose();
        assert_eq!(at.to_dense(), a.to_dense().transpose());
        let p = a.matmul(&at).unwrap();
        assert!((p.to_dense() - a.to_dense() * a.to_dense().transpose()).amax() < 1e-14);
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn block_expand_is_kronecker() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, -1.0), (1, 1, 3.0)]).unwrap();
        let e = a.block_expand(2).to_dense();
        assert_eq!(e[(0, 2)], -1.0);
        assert_eq!(e[(1, 3)], -1.0);
        assert_eq!(e[(0, 3)], 0.0);
        assert_eq!(e[(3, 3)], 3.0);
    }

    #[test]
    fn new_validates() {
        assert!(CsrMatrix::new(1, 2, vec![0, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::new(1, 2, vec![0, 1], vec![2], vec![1.0]).is_err());
        assert!(CsrMatrix::new(1, 2, vec![0, 2], vec![0, 1], vec![1.0, 1.0]).is_ok());
    }
}
