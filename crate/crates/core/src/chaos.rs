//! Hermite polynomial chaos: multi-index sets, basis evaluation and the
//! expectation tensors `m_ijk = <Ψi Ψj Ψk>` and `t_ijkl = <Ψi Ψj Ψk Ψl>`.
//!
//! Polynomials are the probabilists' Hermite family, unnormalized, so
//! `<Ψα²> = Π αk!`. Multi-indices are ordered by total degree, and within one
//! degree lexicographically descending, e.g. for two variables
//! `(0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...`.

use std::io::Write;

use crate::{Error, Result};

/// Probabilists' Hermite polynomial `He_k(x)` via the three-term recurrence.
pub fn hermite_eval(k: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if k == 0 {
        return prev;
    }
    for j in 1..k {
        let next = x * cur - j as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `[He_0(x), ..., He_kmax(x)]`.
pub fn hermite_all(kmax: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(kmax + 1);
    out.push(1.0);
    if kmax >= 1 {
        out.push(x);
    }
    for j in 1..kmax {
        let next = x * out[j] - j as f64 * out[j - 1];
        out.push(next);
    }
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k)
        .fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
        .round()
}

/// `<He_a He_b He_c>` under the standard Gaussian measure.
pub fn hermite_triple(a: usize, b: usize, c: usize) -> f64 {
    let sum = a + b + c;
    if sum % 2 == 1 {
        return 0.0;
    }
    let s = sum / 2;
    if s < a || s < b || s < c {
        return 0.0;
    }
    factorial(a) * factorial(b) * factorial(c)
        / (factorial(s - a) * factorial(s - b) * factorial(s - c))
}

/// `<He_a He_b He_c He_d>`, from the linearization
/// `He_a He_b = Σ_r C(a,r) C(b,r) r! He_{a+b-2r}` followed by triple products.
pub fn hermite_quad(a: usize, b: usize, c: usize, d: usize) -> f64 {
    (0..=a.min(b))
        .map(|r| {
            binomial(a, r) * binomial(b, r) * factorial(r) * hermite_triple(a + b - 2 * r, c, d)
        })
        .sum()
}

/// Per-variable Hermite degrees of one chaos polynomial.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(degrees: Vec<usize>) -> Self {
        MultiIndex(degrees)
    }

    pub fn zero(nvars: usize) -> Self {
        MultiIndex(vec![0; nvars])
    }

    pub fn degrees(&self) -> &[usize] {
        &self.0
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn total_degree(&self) -> usize {
        self.0.iter().sum()
    }

    /// `<Ψα²> = Π αk!`.
    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|&d| factorial(d)).product()
    }

    /// `Π_k He_{αk}(ξk)`.
    pub fn eval(&self, xi: &[f64]) -> Result<f64> {
        if xi.len() != self.0.len() {
            return Err(Error::DimensionMismatch {
                context: "basis_eval",
                expected: self.0.len(),
                actual: xi.len(),
            });
        }
        Ok(self
            .0
            .iter()
            .zip(xi)
            .map(|(&d, &x)| hermite_eval(d, x))
            .product())
    }
}

/// Ordered total-degree Hermite chaos basis in `nvars` variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosBasis {
    nvars: usize,
    order: usize,
    indices: Vec<MultiIndex>,
}

/// Number of multi-indices of total degree `<= order` in `nvars` variables.
pub fn basis_size(nvars: usize, order: usize) -> usize {
    binomial(nvars + order, order) as usize
}

fn compositions(nvars: usize, degree: usize, prefix: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
    if prefix.len() + 1 == nvars {
        prefix.push(degree);
        out.push(MultiIndex(prefix.clone()));
        prefix.pop();
        return;
    }
    for first in (0..=degree).rev() {
        prefix.push(first);
        compositions(nvars, degree - first, prefix, out);
        prefix.pop();
    }
}

impl ChaosBasis {
    pub fn new(nvars: usize, order: usize) -> Result<Self> {
        if nvars == 0 {
            return Err(Error::invalid("M", "need at least one random variable"));
        }
        let mut indices = Vec::with_capacity(basis_size(nvars, order));
        let mut prefix = Vec::with_capacity(nvars);
        for degree in 0..=order {
            compositions(nvars, degree, &mut prefix, &mut indices);
        }
        Ok(ChaosBasis {
            nvars,
            order,
            indices,
        })
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn multi_index(&self, i: usize) -> &MultiIndex {
        &self.indices[i]
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn position(&self, alpha: &MultiIndex) -> Option<usize> {
        self.indices.iter().position(|a| a == alpha)
    }

    pub fn norms_sq(&self) -> Vec<f64> {
        self.indices.iter().map(MultiIndex::norm_sq).collect()
    }

    /// All basis polynomials evaluated at one germ sample.
    pub fn eval_all(&self, xi: &[f64]) -> Result<Vec<f64>> {
        if xi.len() != self.nvars {
            return Err(Error::DimensionMismatch {
                context: "basis_eval",
                expected: self.nvars,
                actual: xi.len(),
            });
        }
        let tables: Vec<Vec<f64>> = xi.iter().map(|&x| hermite_all(self.order, x)).collect();
        Ok(self
            .indices
            .iter()
            .map(|a| a.0.iter().zip(&tables).map(|(&d, t)| t[d]).product())
            .collect())
    }
}

/// `enumerate_basis(M, p)` with signed inputs, rejecting negative orders.
pub fn enumerate_basis(nvars: i64, order: i64) -> Result<ChaosBasis> {
    if nvars < 1 {
        return Err(Error::invalid("M", format!("must be >= 1, got {nvars}")));
    }
    if order < 0 {
        return Err(Error::invalid("p", format!("must be >= 0, got {order}")));
    }
    ChaosBasis::new(nvars as usize, order as usize)
}

fn check_nvars(input: &ChaosBasis, output: &ChaosBasis) -> Result<()> {
    if input.nvars != output.nvars {
        return Err(Error::DimensionMismatch {
            context: "chaos tensor",
            expected: input.nvars,
            actual: output.nvars,
        });
    }
    Ok(())
}

/// Nonzero entries of `m_ijk`, `i` over the input basis and `j, k` over the
/// output basis, sorted by `(i, j, k)`.
#[derive(Debug, Clone)]
pub struct TripleTensor {
    input_len: usize,
    output_len: usize,
    entries: Vec<(u32, u32, u32, f64)>,
}

impl TripleTensor {
    pub fn new(input: &ChaosBasis, output: &ChaosBasis) -> Result<Self> {
        check_nvars(input, output)?;
        let pi = input.order;
        let po = output.order;
        let table = |a: usize, b: usize, c: usize| hermite_triple(a, b, c);
        let mut uni = vec![0.0; (pi + 1) * (po + 1) * (po + 1)];
        for a in 0..=pi {
            for b in 0..=po {
                for c in 0..=po {
                    uni[(a * (po + 1) + b) * (po + 1) + c] = table(a, b, c);
                }
            }
        }
        let mut entries = Vec::new();
        for (i, ai) in input.indices.iter().enumerate() {
            for (j, aj) in output.indices.iter().enumerate() {
                for (k, ak) in output.indices.iter().enumerate() {
                    let mut v = 1.0;
                    for var in 0..input.nvars {
                        v *= uni[(ai.0[var] * (po + 1) + aj.0[var]) * (po + 1) + ak.0[var]];
                        if v == 0.0 {
                            break;
                        }
                    }
                    if v != 0.0 {
                        entries.push((i as u32, j as u32, k as u32, v));
                    }
                }
            }
        }
        Ok(TripleTensor {
            input_len: input.len(),
            output_len: output.len(),
            entries,
        })
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn output_len(&self) -> usize {
        self.output_len
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        self.entries
            .iter()
            .map(|&(i, j, k, v)| (i as usize, j as usize, k as usize, v))
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        let key = (i as u32, j as u32, k as u32);
        self.entries
            .binary_search_by(|e| (e.0, e.1, e.2).cmp(&key))
            .map(|p| self.entries[p].3)
            .unwrap_or(0.0)
    }

    /// CSV dump with header `i,j,k,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "i,j,k,value")?;
        for (i, j, k, v) in self.entries() {
            writeln!(w, "{i},{j},{k},{v:.17e}")?;
        }
        Ok(())
    }
}

/// Nonzero entries of `t_ijkl`, `i` over the input basis and `j, k, l` over
/// the output basis, sorted by `(i, j, k, l)`.
#[derive(Debug, Clone)]
pub struct QuadTensor {
    input_len: usize,
    output_len: usize,
    entries: Vec<(u32, u32, u32, u32, f64)>,
}

impl QuadTensor {
    pub fn new(input: &ChaosBasis, output: &ChaosBasis) -> Result<Self> {
        check_nvars(input, output)?;
        let pi = input.order;
        let po = output.order;
        let d = po + 1;
        let mut uni = vec![0.0; (pi + 1) * d * d * d];
        for a in 0..=pi {
            for b in 0..=po {
                for c in 0..=po {
                    for e in 0..=po {
                        uni[((a * d + b) * d + c) * d + e] = hermite_quad(a, b, c, e);
                    }
                }
            }
        }
        let mut entries = Vec::new();
        let out = &output.indices;
        for (i, ai) in input.indices.iter().enumerate() {
            for (j, aj) in out.iter().enumerate() {
                for (k, ak) in out.iter().enumerate() {
                    for (l, al) in out.iter().enumerate() {
                        let mut v = 1.0;
                        for var in 0..input.nvars {
                            v *= uni[((ai.0[var] * d + aj.0[var]) * d + ak.0[var]) * d + al.0[var]];
                            if v == 0.0 {
                                break;
                            }
                        }
                        if v != 0.0 {
                            entries.push((i as u32, j as u32, k as u32, l as u32, v));
                        }
                    }
                }
            }
        }
        Ok(QuadTensor {
            input_len: input.len(),
            output_len: output.len(),
            entries,
        })
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn output_len(&self) -> usize {
        self.output_len
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, usize, usize, f64)> + '_ {
        self.entries
            .iter()
            .map(|&(i, j, k, l, v)| (i as usize, j as usize, k as usize, l as usize, v))
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let key = (i as u32, j as u32, k as u32, l as u32);
        self.entries
            .binary_search_by(|e| (e.0, e.1, e.2, e.3).cmp(&key))
            .map(|p| self.entries[p].4)
            .unwrap_or(0.0)
    }

    /// CSV dump with header `i,j,k,l,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "i,j,k,l,value")?;
        for (i, j, k, l, v) in self.entries() {
            writeln!(w, "{i},{j},{k},{l},{v:.17e}")?;
        }
        Ok(())
    }
}
