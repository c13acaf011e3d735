//! Test-only oracles: Gauss–Hermite quadrature and dense linear algebra.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Probabilists' Hermite polynomial by its own recurrence.
pub fn he(k: usize, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, x);
    if k == 0 {
        return a;
    }
    for n in 1..k {
        let c = x * b - n as f64 * a;
        a = b;
        b = c;
    }
    b
}

/// `n`-point Gauss–Hermite rule for the standard normal density (weights
/// sum to one). Golub–Welsch start, Newton-polished nodes.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let s = (k as f64).sqrt();
        j[(k, k - 1)] = s;
        j[(k - 1, k)] = s;
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(j).eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let d = n as f64 * he(n - 1, *x);
            if d != 0.0 {
                *x -= he(n, *x) / d;
            }
        }
        let h = he(n - 1, *x);
        weights.push(fact / (n as f64 * n as f64 * h * h));
    }
    (nodes, weights)
}

/// Tensor-product rule in `dim` variables: (points, weights).
pub fn tensor_rule(dim: usize, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (x, w) = gauss_hermite(n);
    let mut pts = vec![vec![]];
    let mut wts = vec![1.0];
    for _ in 0..dim {
        let mut np = Vec::with_capacity(pts.len() * n);
        let mut nw = Vec::with_capacity(pts.len() * n);
        for (p, pw) in pts.iter().zip(&wts) {
            for (xi, wi) in x.iter().zip(&w) {
                let mut q = p.clone();
                q.push(*xi);
                np.push(q);
                nw.push(pw * wi);
            }
        }
        pts = np;
        wts = nw;
    }
    (pts, wts)
}

/// Multivariate chaos polynomial from raw degrees.
pub fn psi(degrees: &[usize], xi: &[f64]) -> f64 {
    degrees.iter().zip(xi).map(|(&d, &x)| he(d, x)).product()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

pub fn dense_solve(a: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    a.clone()
        .lu()
        .solve(&DVector::from_column_slice(b))
        .expect("nonsingular")
        .iter()
        .copied()
        .collect()
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

/// Worst relative deviation of the triple and quadruple tensors from
/// tensorized Gauss–Hermite quadrature over a full `M`-dimensional grid, and
/// whether every quadrature-nonzero entry is stored (and nothing else).
pub struct TensorCheck {
    pub triple_err: f64,
    pub quad_err: f64,
    pub sparsity_ok: bool,
}

pub fn check_tensors(nvars: usize, p_in: usize, p_out: usize) -> TensorCheck {
    use sgdd::chaos::{ChaosBasis, QuadTensor, TripleTensor};
    use std::collections::HashMap;

    let input = ChaosBasis::new(nvars, p_in).unwrap();
    let output = ChaosBasis::new(nvars, p_out).unwrap();
    let m = TripleTensor::new(&input, &output).unwrap();
    let t = QuadTensor::new(&input, &output).unwrap();
    let npts = (p_in + 3 * p_out) / 2 + 1;
    let (pts, w) = tensor_rule(nvars, npts);
    let eval = |b: &ChaosBasis| -> Vec<Vec<f64>> {
        b.indices()
            .iter()
            .map(|a| pts.iter().map(|x| psi(a.degrees(), x)).collect())
            .collect()
    };
    let pin = eval(&input);
    let pout = eval(&output);
    let (li, lo) = (input.len(), output.len());
    let zero_tol = 1e-9;
    let rel = |got: f64, want: f64| (got - want).abs() / want.abs().max(f64::MIN_POSITIVE);
    let mut sparsity_ok = true;

    let mut triple_err = 0.0f64;
    let mut triple_nnz = 0;
    for i in 0..li {
        let wi: Vec<f64> = w.iter().zip(&pin[i]).map(|(a, b)| a * b).collect();
        for j in 0..lo {
            let wij: Vec<f64> = wi.iter().zip(&pout[j]).map(|(a, b)| a * b).collect();
            for k in 0..lo {
                let o: f64 = wij.iter().zip(&pout[k]).map(|(a, b)| a * b).sum();
                let got = m.get(i, j, k);
                if o.abs() > zero_tol {
                    triple_nnz += 1;
                    triple_err = triple_err.max(rel(got, o));
                } else if got != 0.0 {
                    sparsity_ok = false;
                }
            }
        }
    }
    sparsity_ok &= triple_nnz == m.nnz();

    // t is symmetric in (j, k, l); evaluate sorted triples once.
    let mut quad_err = 0.0f64;
    let mut oracle: HashMap<(usize, usize, usize, usize), f64> = HashMap::new();
    for i in 0..li {
        let wi: Vec<f64> = w.iter().zip(&pin[i]).map(|(a, b)| a * b).collect();
        for j in 0..lo {
            let wij: Vec<f64> = wi.iter().zip(&pout[j]).map(|(a, b)| a * b).collect();
            for k in j..lo {
                let wijk: Vec<f64> = wij.iter().zip(&pout[k]).map(|(a, b)| a * b).collect();
                for l in k..lo {
                    let o: f64 = wijk.iter().zip(&pout[l]).map(|(a, b)| a * b).sum();
                    if o.abs() > zero_tol {
                        oracle.insert((i, j, k, l), o);
                    }
                }
            }
        }
    }
    let mut quad_nnz = 0;
    for (&(i, j, k, l), &o) in &oracle {
        let mut perms = vec![
            [j, k, l],
            [j, l, k],
            [k, j, l],
            [k, l, j],
            [l, j, k],
            [l, k, j],
        ];
        perms.sort();
        perms.dedup();
        quad_nnz += perms.len();
        for p in perms {
            quad_err = quad_err.max(rel(t.get(i, p[0], p[1], p[2]), o));
        }
    }
    for (i, j, k, l, _) in t.entries() {
        let mut s = [j, k, l];
        s.sort();
        if !oracle.contains_key(&(i, s[0], s[1], s[2])) {
            sparsity_ok = false;
        }
    }
    sparsity_ok &= quad_nnz == t.nnz();
    TensorCheck {
        triple_err,
        quad_err,
        sparsity_ok,
    }
}

/// Top `count` eigenpairs of the midpoint-rule Nyström discretization of
/// `exp(-|s-t|/b)` on `[0, length]` with `n` points. Eigenvectors are
/// normalized to unit discrete L² norm; returns (nodes, pairs).
pub fn nystrom_1d(b: f64, length: f64, n: usize, count: usize) -> (Vec<f64>, Vec<(f64, Vec<f64>)>) {
    let h = length / n as f64;
    let s: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
    let k = DMatrix::from_fn(n, n, |i, j| (-(s[i] - s[j]).abs() / b).exp() * h);
    let e = SymmetricEigen::new(k);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| e.eigenvalues[c].total_cmp(&e.eigenvalues[a]));
    let pairs = order[..count]
        .iter()
        .map(|&c| {
            let v: Vec<f64> = e
                .eigenvectors
                .column(c)
                .iter()
                .map(|x| x / h.sqrt())
                .collect();
            (e.eigenvalues[c], v)
        })
        .collect();
    (s, pairs)
}

/// Relative discrete L² distance between `a` and `±b`, sign chosen to match.
pub fn rel_diff_up_to_sign(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let sign = if dot < 0.0 { -1.0 } else { 1.0 };
    let flipped: Vec<f64> = b.iter().map(|y| sign * y).collect();
    rel_diff(a, &flipped)
}
