use super::{CsrMatrix, LinalgError};

/// Largest dimension accepted for the dense SVD.
pub const CONDITION_DIM_LIMIT: usize = 20_000;

/// 2-norm condition number `σ_max / σ_min` from a dense SVD.
pub fn condition_number(a: &CsrMatrix) -> Result<f64, LinalgError> {
    let dim = a.nrows().max(a.ncols());
    if dim > CONDITION_DIM_LIMIT {
        return Err(LinalgError::TooLarge {
            dim,
            limit: CONDITION_DIM_LIMIT,
        });
    }
    let sv = a.to_dense().singular_values();
    let max = sv.max();
    let min = sv.min();
    Ok(if min == 0.0 { f64::INFINITY } else { max / min })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_values() {
        assert!((condition_number(&CsrMatrix::identity(5)).unwrap() - 1.0).abs() < 1e-14);
        let d = CsrMatrix::from_diag(&[1.0, 10.0]);
        assert!((condition_number(&d).unwrap() - 10.0).abs() < 1e-12);
    }
}
