//! Classical (Ruge–Stüben) algebraic multigrid.
//!
//! Strength of connection uses the sign-filtered rule: `j` strongly
//! influences `i` when `-s·a_ij ≥ θ · max_k(-s·a_ik)`, `s = sign(a_ii)`.
//! C/F splitting is the greedy first pass by influence count followed by a
//! fix-up that promotes any F point left without a strong C neighbour.
//! Interpolation is direct, with positive off-diagonals lumped into the
//! diagonal, and coarse operators are Galerkin products `Pᵀ A P`.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::sparsela::{CsrMatrix, Preconditioner, SparseLu};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmgConfig {
    pub strength_threshold: f64,
    pub coarsest_size: usize,
    pub max_levels: usize,
    pub jacobi_weight: f64,
}

impl Default for AmgConfig {
    fn default() -> Self {
        AmgConfig {
            strength_threshold: 0.25,
            coarsest_size: 200,
            max_levels: 25,
            jacobi_weight: 2.0 / 3.0,
        }
    }
}

struct Level {
    a: CsrMatrix,
    /// Interpolation from the next coarser level.
    p: CsrMatrix,
    r: CsrMatrix,
    inv_diag: Vec<f64>,
}

pub struct AmgHierarchy {
    levels: Vec<Level>,
    coarsest: CsrMatrix,
    coarse_lu: SparseLu,
    omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmgSummary {
    pub level_sizes: Vec<usize>,
    pub level_nnz: Vec<usize>,
    pub operator_complexity: f64,
    pub grid_complexity: f64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mark {
    Undecided,
    Coarse,
    Fine,
}

/// `strong[i]`: columns that strongly influence row `i`.
fn strength(a: &CsrMatrix, theta: f64) -> Vec<Vec<usize>> {
    (0..a.nrows())
        .map(|i| {
            let (cols, vals) = a.row(i);
            let d = a.get(i, i);
            let s = if d < 0.0 { -1.0 } else { 1.0 };
            let max = cols
                .iter()
                .zip(vals)
                .filter(|(&j, _)| j != i)
                .map(|(_, &v)| -s * v)
                .fold(0.0, f64::max);
            if max <= 0.0 {
                return Vec::new();
            }
            cols.iter()
                .zip(vals)
                .filter(|(&j, &v)| j != i && -s * v >= theta * max)
                .map(|(&j, _)| j)
                .collect()
        })
        .collect()
}

fn split(n: usize, strong: &[Vec<usize>]) -> Vec<Mark> {
    let mut influences: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, list) in strong.iter().enumerate() {
        for &j in list {
            influences[j].push(i);
        }
    }
    let mut mark = vec![Mark::Undecided; n];
    let mut lambda: Vec<usize> = influences.iter().map(Vec::len).collect();
    let mut heap = BinaryHeap::with_capacity(n);
    for i in 0..n {
        if strong[i].is_empty() && influences[i].is_empty() {
            mark[i] = Mark::Fine;
        } else {
            heap.push((lambda[i], Reverse(i)));
        }
    }
    while let Some((l, Reverse(i))) = heap.pop() {
        if mark[i] != Mark::Undecided || l != lambda[i] {
            continue;
        }
        mark[i] = Mark::Coarse;
        for &j in &influences[i] {
            if mark[j] == Mark::Undecided {
                mark[j] = Mark::Fine;
                for &k in &strong[j] {
                    if mark[k] == Mark::Undecided {
                        lambda[k] += 1;
                        heap.push((lambda[k], Reverse(k)));
                    }
                }
            }
        }
        for &k in &strong[i] {
            if mark[k] == Mark::Undecided && lambda[k] > 0 {
                lambda[k] -= 1;
                heap.push((lambda[k], Reverse(k)));
            }
        }
    }
    second_pass(&mut mark, strong);
    mark
}

/// Every pair of strongly connected F points must share a strong C point.
/// The first violating neighbour becomes a tentative C point; a second
/// violation promotes `i` itself instead.
fn second_pass(mark: &mut [Mark], strong: &[Vec<usize>]) {
    let n = mark.len();
    let mut stamp = vec![usize::MAX; n];
    for i in 0..n {
        if mark[i] != Mark::Fine || strong[i].is_empty() {
            continue;
        }
        for &j in &strong[i] {
            if mark[j] == Mark::Coarse {
                stamp[j] = i;
            }
        }
        let mut tentative = None;
        for &j in &strong[i] {
            if mark[j] != Mark::Fine || strong[j].iter().any(|&k| stamp[k] == i) {
                continue;
            }
            match tentative {
                None => {
                    mark[j] = Mark::Coarse;
                    stamp[j] = i;
                    tentative = Some(j);
                }
                Some(t) => {
                    mark[t] = Mark::Fine;
                    mark[i] = Mark::Coarse;
                    break;
                }
            }
        }
        if mark[i] == Mark::Fine && !strong[i].iter().any(|&j| mark[j] == Mark::Coarse) {
            mark[i] = Mark::Coarse;
        }
    }
}

fn direct_interpolation(a: &CsrMatrix, strong: &[Vec<usize>], mark: &[Mark]) -> CsrMatrix {
    let n = a.nrows();
    let mut cindex = vec![usize::MAX; n];
    let mut nc = 0;
    for i in 0..n {
        if mark[i] == Mark::Coarse {
            cindex[i] = nc;
            nc += 1;
        }
    }
    let mut triplets = Vec::new();
    for i in 0..n {
        if mark[i] == Mark::Coarse {
            triplets.push((i, cindex[i], 1.0));
            continue;
        }
        let cset: Vec<usize> = strong[i]
            .iter()
            .copied()
            .filter(|&j| mark[j] == Mark::Coarse)
            .collect();
        if cset.is_empty() {
            continue;
        }
        let (cols, vals) = a.row(i);
        let mut d = a.get(i, i);
        let s = if d < 0.0 { -1.0 } else { 1.0 };
        let (mut neg_all, mut pos_all, mut neg_c, mut pos_c) = (0.0, 0.0, 0.0, 0.0);
        for (&j, &v) in cols.iter().zip(vals) {
            if j == i {
                continue;
            }
            let in_c = cset.binary_search(&j).is_ok();
            if s * v < 0.0 {
                neg_all += v;
                if in_c {
                    neg_c += v;
                }
            } else {
                pos_all += v;
                if in_c {
                    pos_c += v;
                }
            }
        }
        let alpha = if neg_c != 0.0 { neg_all / neg_c } else { 0.0 };
        let beta = if pos_c != 0.0 {
            pos_all / pos_c
        } else {
            d += pos_all;
            0.0
        };
        for &j in &cset {
            let v = a.get(i, j);
            let w = if s * v < 0.0 {
                -alpha * v / d
            } else {
                -beta * v / d
            };
            triplets.push((i, cindex[j], w));
        }
    }
    CsrMatrix::from_triplets(n, nc, &triplets).expect("interpolation indices in range")
}

fn inverse_diagonal(a: &CsrMatrix) -> Vec<f64> {
    a.diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 0.0 })
        .collect()
}

impl AmgHierarchy {
    pub fn new(a: &CsrMatrix, cfg: &AmgConfig) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch {
                context: "amg_setup",
                expected: a.nrows(),
                actual: a.ncols(),
            });
        }
        if let Some(i) = a.diagonal().iter().position(|&d| d == 0.0) {
            return Err(Error::invalid(
                "amg_setup",
                format!("zero diagonal in row {i}"),
            ));
        }
        let mut levels = Vec::new();
        let mut current = a.clone();
        while current.nrows() > cfg.coarsest_size && levels.len() + 1 < cfg.max_levels {
            let strong = strength(&current, cfg.strength_threshold);
            let mark = split(current.nrows(), &strong);
            let p = direct_interpolation(&current, &strong, &mark);
            let nc = p.ncols();
            if nc == 0 || nc as f64 > 0.95 * current.nrows() as f64 {
                break;
            }
            let r = p.transpose();
            let coarse = r.matmul(&current.matmul(&p)?)?;
            let inv_diag = inverse_diagonal(&current);
            levels.push(Level {
                a: current,
                p,
                r,
                inv_diag,
            });
            current = coarse;
        }
        let coarse_lu = SparseLu::new(&current)?;
        Ok(AmgHierarchy {
            levels,
            coarsest: current,
            coarse_lu,
            omega: cfg.jacobi_weight,
        })
    }

    pub fn nlevels(&self) -> usize {
        self.levels.len() + 1
    }

    pub fn dim(&self) -> usize {
        self.levels
            .first()
            .map_or(self.coarsest.nrows(), |l| l.a.nrows())
    }

    /// Operator on level `l` (0 = finest).
    pub fn operator(&self, l: usize) -> &CsrMatrix {
        if l < self.levels.len() {
            &self.levels[l].a
        } else {
            &self.coarsest
        }
    }

    /// Interpolation from level `l + 1` to level `l`.
    pub fn interpolation(&self, l: usize) -> &CsrMatrix {
        &self.levels[l].p
    }

    pub fn summary(&self) -> AmgSummary {
        let level_sizes: Vec<usize> = (0..self.nlevels())
            .map(|l| self.operator(l).nrows())
            .collect();
        let level_nnz: Vec<usize> = (0..self.nlevels())
            .map(|l| self.operator(l).nnz())
            .collect();
        let operator_complexity =
            level_nnz.iter().sum::<usize>() as f64 / level_nnz[0].max(1) as f64;
        let grid_complexity =
            level_sizes.iter().sum::<usize>() as f64 / level_sizes[0].max(1) as f64;
        AmgSummary {
            level_sizes,
            level_nnz,
            operator_complexity,
            grid_complexity,
        }
    }

    /// One V(1,1) cycle from a zero initial guess.
    pub fn vcycle(&self, b: &[f64]) -> Vec<f64> {
        self.cycle(0, b)
    }

    fn cycle(&self, l: usize, b: &[f64]) -> Vec<f64> {
        if l == self.levels.len() {
            let mut x = b.to_vec();
            self.coarse_lu.solve_in_place(&mut x);
            return x;
        }
        let lev = &self.levels[l];
        let w = self.omega;
        let mut x: Vec<f64> = b
            .iter()
            .zip(&lev.inv_diag)
            .map(|(bi, di)| w * di * bi)
            .collect();
        let mut r = vec![0.0; b.len()];
        lev.a.residual(b, &x, &mut r);
        let rc = lev.r.spmv(&r).expect("restriction dimensions");
        let ec = self.cycle(l + 1, &rc);
        let corr = lev.p.spmv(&ec).expect("interpolation dimensions");
        x.iter_mut().zip(&corr).for_each(|(xi, ci)| *xi += ci);
        lev.a.residual(b, &x, &mut r);
        x.iter_mut()
            .zip(r.iter().zip(&lev.inv_diag))
            .for_each(|(xi, (ri, di))| *xi += w * di * ri);
        x
    }
}

impl Preconditioner for AmgHierarchy {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(&self.vcycle(r));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn small_matrix_is_single_level() {
        let h = AmgHierarchy::new(&laplace_1d(50), &AmgConfig::default()).unwrap();
        assert_eq!(h.nlevels(), 1);
        let b: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let x = h.vcycle(&b);
        let r = laplace_1d(50).spmv(&x).unwrap();
        assert!(r.iter().zip(&b).all(|(a, c)| (a - c).abs() < 1e-9));
    }

    #[test]
    fn one_dimensional_hierarchy() {
        let cfg = AmgConfig {
            coarsest_size: 10,
            ..Default::default()
        };
        let h = AmgHierarchy::new(&laplace_1d(64), &cfg).unwrap();
        let sizes = h.summary().level_sizes;
        assert!(sizes.len() >= 3, "{sizes:?}");
        assert!(sizes.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(h.vcycle(&[0.0; 64]), vec![0.0; 64]);
    }
}
