//! Left-looking sparse LU (Gilbert–Peierls) with threshold partial pivoting.
//!
//! Columns are processed in an approximate-minimum-degree order of `A + Aᵀ`.
//! For each column a sparse triangular solve against the partial `L` gives the
//! new column of `U` and `L`; the diagonal entry is preferred as pivot unless
//! it is smaller than `PIVOT_TOL` times the largest candidate.

use super::{CsrMatrix, LinalgError};

const PIVOT_TOL: f64 = 0.1;

/// Column-compressed factor storage.
#[derive(Debug, Clone, Default)]
struct Csc {
    colptr: Vec<usize>,
    rows: Vec<usize>,
    vals: Vec<f64>,
}

/// `P A Q = L U` with unit-diagonal `L`.
#[derive(Debug, Clone)]
pub struct SparseLu {
    n: usize,
    /// `q[k]`: original column eliminated at step `k`.
    q: Vec<usize>,
    /// `p[k]`: original row chosen as pivot at step `k`.
    p: Vec<usize>,
    l: Csc,
    u: Csc,
}

impl SparseLu {
    pub fn new(a: &CsrMatrix) -> Result<Self, LinalgError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                actual: a.ncols(),
            });
        }
        if n == 0 {
            return Ok(SparseLu {
                n,
                q: Vec::new(),
                p: Vec::new(),
                l: Csc {
                    colptr: vec![0],
                    ..Default::default()
                },
                u: Csc {
                    colptr: vec![0],
                    ..Default::default()
                },
            });
        }
        let q = ordering(a);
        // Column access to A is row access to Aᵀ.
        let at = a.transpose();
        let (ap, ai, ax) = (at.indptr(), at.indices(), at.data());

        let mut l = Csc {
            colptr: Vec::with_capacity(n + 1),
            rows: Vec::with_capacity(4 * a.nnz()),
            vals: Vec::with_capacity(4 * a.nnz()),
        };
        let mut u = Csc {
            colptr: Vec::with_capacity(n + 1),
            rows: Vec::with_capacity(4 * a.nnz()),
            vals: Vec::with_capacity(4 * a.nnz()),
        };
        let mut pinv = vec![usize::MAX; n];
        let mut x = vec![0.0; n];
        let mut xi = vec![0usize; n];
        let mut stack = vec![0usize; n];
        let mut pstack = vec![0usize; n];
        let mut mark = vec![usize::MAX; n];

        for k in 0..n {
            l.colptr.push(l.rows.len());
            u.colptr.push(u.rows.len());
            let col = q[k];
            let (b0, b1) = (ap[col], ap[col + 1]);

            // Reach of column `col` through the graph of L.
            let mut top = n;
            for &start in &ai[b0..b1] {
                if mark[start] == k {
                    continue;
                }
                top = dfs(
                    start,
                    k,
                    &l,
                    &pinv,
                    &mut mark,
                    &mut xi,
                    top,
                    &mut stack,
                    &mut pstack,
                );
            }
            for &i in &xi[top..n] {
                x[i] = 0.0;
            }
            for p in b0..b1 {
                x[ai[p]] = ax[p];
            }
            // Sparse triangular solve x = L \ A(:, col).
            for px in top..n {
                let j = xi[px];
                let jl = pinv[j];
                if jl == usize::MAX {
                    continue;
                }
                let xj = x[j];
                for p in l.colptr[jl] + 1..l.colptr[jl + 1] {
                    x[l.rows[p]] -= l.vals[p] * xj;
                }
            }

            let mut ipiv = usize::MAX;
            let mut amax = -1.0;
            for &i in &xi[top..n] {
                if pinv[i] == usize::MAX {
                    let t = x[i].abs();
                    if t > amax {
                        amax = t;
                        ipiv = i;
                    }
                } else {
                    u.rows.push(pinv[i]);
                    u.vals.push(x[i]);
                }
            }
            if ipiv == usize::MAX || amax <= 0.0 || !amax.is_finite() {
                return Err(LinalgError::Singular { column: col });
            }
            if pinv[col] == usize::MAX && x[col].abs() >= amax * PIVOT_TOL {
                ipiv = col;
            }
            let pivot = x[ipiv];
            u.rows.push(k);
            u.vals.push(pivot);
            pinv[ipiv] = k;
            l.rows.push(ipiv);
            l.vals.push(1.0);
            for &i in &xi[top..n] {
                if pinv[i] == usize::MAX {
                    l.rows.push(i);
                    l.vals.push(x[i] / pivot);
                }
                x[i] = 0.0;
            }
        }
        l.colptr.push(l.rows.len());
        u.colptr.push(u.rows.len());
        for r in l.rows.iter_mut() {
            *r = pinv[*r];
        }
        let mut p = vec![0usize; n];
        for (i, &k) in pinv.iter().enumerate() {
            p[k] = i;
        }
        Ok(SparseLu { n, q, p, l, u })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Fill of the factors, `nnz(L) + nnz(U)`.
    pub fn nnz(&self) -> usize {
        self.l.rows.len() + self.u.rows.len()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if b.len() != self.n {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n,
                actual: b.len(),
            });
        }
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        Ok(x)
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let mut y: Vec<f64> = self.p.iter().map(|&i| b[i]).collect();
        for k in 0..n {
            let yk = y[k];
            if yk != 0.0 {
                for p in self.l.colptr[k] + 1..self.l.colptr[k + 1] {
                    y[self.l.rows[p]] -= self.l.vals[p] * yk;
                }
            }
        }
        for k in (0..n).rev() {
            let last = self.u.colptr[k + 1] - 1;
            y[k] /= self.u.vals[last];
            let yk = y[k];
            if yk != 0.0 {
                for p in self.u.colptr[k]..last {
                    y[self.u.rows[p]] -= self.u.vals[p] * yk;
                }
            }
        }
        for (k, &c) in self.q.iter().enumerate() {
            b[c] = y[k];
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    start: usize,
    stamp: usize,
    l: &Csc,
    pinv: &[usize],
    mark: &mut [usize],
    xi: &mut [usize],
    mut top: usize,
    stack: &mut [usize],
    pstack: &mut [usize],
) -> usize {
    let ncols_done = l.colptr.len() - 1;
    let mut head = 0usize;
    stack[0] = start;
    loop {
        let j = stack[head];
        let jl = pinv[j];
        if mark[j] != stamp {
            mark[j] = stamp;
            pstack[head] = if jl == usize::MAX { 0 } else { l.colptr[jl] };
        }
        let end = if jl == usize::MAX || jl >= ncols_done {
            0
        } else {
            l.colptr[jl + 1]
        };
        let mut done = true;
        let mut p = pstack[head];
        while p < end {
            let i = l.rows[p];
            p += 1;
            if mark[i] == stamp {
                continue;
            }
            pstack[head] = p;
            head += 1;
            stack[head] = i;
            done = false;
            break;
        }
        if done {
            top -= 1;
            xi[top] = j;
            if head == 0 {
                return top;
            }
            head -= 1;
        }
    }
}

fn ordering(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let ap: Vec<usize> = a.indptr().to_vec();
    let ai: Vec<usize> = a.indices().to_vec();
    match amd::order::<usize>(n, &ap, &ai, &amd::Control::default()) {
        Ok((p, _, _)) => p,
        Err(_) => (0..n).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_permuted_diagonal() {
        let f = SparseLu::new(&CsrMatrix::identity(4)).unwrap();
        assert_eq!(
            f.solve(&[1.0, 2.0, 3.0, 4.0]).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0]
        );

        let a = CsrMatrix::from_triplets(3, 3, &[(0, 2, 2.0), (1, 0, 4.0), (2, 1, -1.0)]).unwrap();
        let f = SparseLu::new(&a).unwrap();
        let x = f.solve(&[2.0, 8.0, 3.0]).unwrap();
        assert_eq!(x, vec![2.0, -3.0, 1.0]);
    }

    #[test]
    fn singular_is_reported() {
        let a =
            CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 4.0)])
                .unwrap();
        assert!(matches!(
            SparseLu::new(&a),
            Err(LinalgError::Singular { .. })
        ));
        let empty_col = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 1.0)]).unwrap();
        assert!(SparseLu::new(&empty_col).is_err());
    }
}
