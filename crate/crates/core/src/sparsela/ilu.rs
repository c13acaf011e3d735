use super::{CsrMatrix, LinalgError};

/// ILU(0): `L` (unit lower) and `U` share the sparsity pattern of `A`.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self, LinalgError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                actual: a.ncols(),
            });
        }
        let mut lu = a.clone();
        let indptr = lu.indptr().to_vec();
        let indices = lu.indices().to_vec();
        let mut diag = vec![0usize; n];
        for i in 0..n {
            let row = &indices[indptr[i]..indptr[i + 1]];
            match row.binary_search(&i) {
                Ok(p) => diag[i] = indptr[i] + p,
                Err(_) => return Err(LinalgError::ZeroPivot { row: i }),
            }
        }
        let mut pos = vec![usize::MAX; n];
        let vals = lu.data_mut();
        for i in 0..n {
            for p in indptr[i]..indptr[i + 1] {
                pos[indices[p]] = p;
            }
            for p in indptr[i]..diag[i] {
                let k = indices[p];
                let pivot = vals[diag[k]];
                let lik = vals[p] / pivot;
                vals[p] = lik;
                for q in diag[k] + 1..indptr[k + 1] {
                    let j = indices[q];
                    let slot = pos[j];
                    if slot != usize::MAX {
                        vals[slot] -= lik * vals[q];
                    }
                }
            }
            if vals[diag[i]] == 0.0 || !vals[diag[i]].is_finite() {
                return Err(LinalgError::ZeroPivot { row: i });
            }
            for p in indptr[i]..indptr[i + 1] {
                pos[indices[p]] = usize::MAX;
            }
        }
        Ok(Ilu0 { lu, diag })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Overwrites `x` with `(LU)⁻¹ x`.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.dim();
        let (ip, ix, v) = (self.lu.indptr(), self.lu.indices(), self.lu.data());
        for i in 0..n {
            let mut s = x[i];
            for p in ip[i]..self.diag[i] {
                s -= v[p] * x[ix[p]];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for p in self.diag[i] + 1..ip[i + 1] {
                s -= v[p] * x[ix[p]];
            }
            x[i] = s / v[self.diag[i]];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_and_triangular_are_exact() {
        let d = CsrMatrix::from_diag(&[2.0, 4.0, -1.0]);
        let f = Ilu0::new(&d).unwrap();
        let mut x = vec![2.0, 2.0, 3.0];
        f.solve_in_place(&mut x);
        assert_eq!(x, vec![1.0, 0.5, -3.0]);

        let t = CsrMatrix::from_triplets(
            3,
            3,
            &[
                (0, 0, 2.0),
                (1, 0, 1.0),
                (1, 1, 1.0),
                (2, 1, 3.0),
                (2, 2, 4.0),
            ],
        )
        .unwrap();
        let f = Ilu0::new(&t).unwrap();
        let xs = vec![1.0, -2.0, 0.5];
        let mut b = t.spmv(&xs).unwrap();
        f.solve_in_place(&mut b);
        for (a, e) in b.iter().zip(&xs) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_pivot_names_row() {
        let a =
            CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)])
                .unwrap();
        match Ilu0::new(&a) {
            Err(LinalgError::ZeroPivot { row }) => assert_eq!(row, 1),
            other => panic!("expected zero pivot, got {other:?}"),
        }
        let missing = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 1.0)]).unwrap();
        assert!(matches!(
            Ilu0::new(&missing),
            Err(LinalgError::ZeroPivot { row: 1 })
        ));
    }
}
