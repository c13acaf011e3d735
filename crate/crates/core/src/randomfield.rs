//! Karhunen–Loève expansion of the separable exponential-covariance Gaussian
//! field on the unit square and the polynomial chaos projection of its
//! exponential.
//!
//! For the 1D kernel `exp(-|s-t|/b)` on an interval of half-length `a`, the
//! eigenfunctions are `cos(ω s)` with `b ω tan(ω a) = 1` and `sin(ω s)` with
//! `b ω + tan(ω a) = 0`, where `s` is measured from the interval centre, and
//! `λ = 2b / (1 + b² ω²)`. Each root is isolated in one half-period of the
//! tangent and found by bisection.

use std::io::Write;

use crate::chaos::ChaosBasis;
use crate::mesh::TriMesh;
use crate::{Error, Result};

const ROOT_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpKernel {
    pub sigma: f64,
    pub bx: f64,
    pub by: f64,
}

impl ExpKernel {
    pub fn new(sigma: f64, bx: f64, by: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(
                "sigma",
                format!("must be finite and >= 0, got {sigma}"),
            ));
        }
        if !(bx > 0.0 && bx.is_finite()) {
            return Err(Error::invalid("bx", format!("must be > 0, got {bx}")));
        }
        if !(by > 0.0 && by.is_finite()) {
            return Err(Error::invalid("by", format!("must be > 0, got {by}")));
        }
        Ok(ExpKernel { sigma, bx, by })
    }

    pub fn covariance(&self, p: [f64; 2], q: [f64; 2]) -> f64 {
        self.sigma
            * self.sigma
            * (-(p[0] - q[0]).abs() / self.bx - (p[1] - q[1]).abs() / self.by).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    /// `cos(ω (s - centre))`
    Even,
    /// `sin(ω (s - centre))`
    Odd,
}

/// One eigenpair of the unit-variance 1D exponential kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KleMode1d {
    pub eigenvalue: f64,
    pub omega: f64,
    pub parity: Parity,
    scale: f64,
    centre: f64,
}

impl KleMode1d {
    /// L²-normalized eigenfunction value at `s`.
    pub fn eval(&self, s: f64) -> f64 {
        let t = self.omega * (s - self.centre);
        match self.parity {
            Parity::Even => t.cos() * self.scale,
            Parity::Odd => t.sin() * self.scale,
        }
    }
}

fn bisect<F: Fn(f64) -> f64>(
    f: F,
    mut lo: f64,
    mut hi: f64,
    family: &'static str,
    index: usize,
) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::RootBracket { family, index });
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() < ROOT_TOL || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// First `count` eigenpairs of `exp(-|s-t|/b)` on `[0, length]`, sorted by
/// decreasing eigenvalue.
pub fn kle_1d(b: f64, length: f64, count: usize) -> Result<Vec<KleMode1d>> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::invalid("b", format!("must be > 0, got {b}")));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::invalid(
            "interval_length",
            format!("must be > 0, got {length}"),
        ));
    }
    if count == 0 {
        return Err(Error::invalid("M1", "must be >= 1"));
    }
    let a = 0.5 * length;
    let pi = std::f64::consts::PI;
    let mut modes = Vec::with_capacity(count);
    let mut k = 0usize;
    while modes.len() < count {
        let even = |w: f64| b * w * (w * a).sin() - (w * a).cos();
        let w = bisect(
            even,
            k as f64 * pi / a,
            (k as f64 * pi + 0.5 * pi) / a,
            "even",
            k,
        )?;
        let norm = a + (2.0 * w * a).sin() / (2.0 * w);
        modes.push(KleMode1d {
            eigenvalue: 2.0 * b / (1.0 + b * b * w * w),
            omega: w,
            parity: Parity::Even,
            scale: 1.0 / norm.sqrt(),
            centre: a,
        });
        if modes.len() == count {
            break;
        }
        let odd = |w: f64| b * w * (w * a).cos() + (w * a).sin();
        let w = bisect(
            odd,
            (k as f64 * pi + 0.5 * pi) / a,
            (k as f64 + 1.0) * pi / a,
            "odd",
            k,
        )?;
        let norm = a - (2.0 * w * a).sin() / (2.0 * w);
        modes.push(KleMode1d {
            eigenvalue: 2.0 * b / (1.0 + b * b * w * w),
            omega: w,
            parity: Parity::Odd,
            scale: 1.0 / norm.sqrt(),
            centre: a,
        });
        k += 1;
    }
    Ok(modes)
}

/// Product eigenpair `λ = σ² λx λy`, `φ = φx φy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KleMode2d {
    pub eigenvalue: f64,
    pub x: KleMode1d,
    pub y: KleMode1d,
}

impl KleMode2d {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.x.eval(x) * self.y.eval(y)
    }
}

/// Truncated KLE `g(x, ξ) = g₀ + Σ_k √λk φk(x) ξk` on the unit square.
#[derive(Debug, Clone)]
pub struct KlExpansion {
    pub g0: f64,
    pub kernel: ExpKernel,
    modes: Vec<KleMode2d>,
    /// Unit-variance eigenvalues, used for ordering and capture fractions.
    unit_eigenvalues: Vec<f64>,
}

/// The `nvars` dominant 2D modes, chosen from all products of the first
/// `2·nvars` 1D modes per axis. Ties keep the `(i, j)` enumeration order.
pub fn kle_2d(kernel: ExpKernel, g0: f64, nvars: usize) -> Result<KlExpansion> {
    if nvars == 0 {
        return Err(Error::invalid("M", "must be >= 1"));
    }
    if !g0.is_finite() {
        return Err(Error::invalid("g0", "must be finite"));
    }
    let pool = 2 * nvars;
    let mx = kle_1d(kernel.bx, 1.0, pool)?;
    let my = kle_1d(kernel.by, 1.0, pool)?;
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(pool * pool);
    for (i, a) in mx.iter().enumerate() {
        for (j, b) in my.iter().enumerate() {
            pairs.push((a.eigenvalue * b.eigenvalue, i, j));
        }
    }
    pairs.sort_by(|p, q| q.0.total_cmp(&p.0));
    pairs.truncate(nvars);
    let s2 = kernel.sigma * kernel.sigma;
    let modes = pairs
        .iter()
        .map(|&(l, i, j)| KleMode2d {
            eigenvalue: s2 * l,
            x: mx[i],
            y: my[j],
        })
        .collect();
    Ok(KlExpansion {
        g0,
        kernel,
        modes,
        unit_eigenvalues: pairs.iter().map(|p| p.0).collect(),
    })
}

impl KlExpansion {
    pub fn nvars(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[KleMode2d] {
        &self.modes
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.eigenvalue).collect()
    }

    /// `Σ_{i≤k} λi / σ²` for every `k`, computed from the unit-variance
    /// eigenvalues so it is defined at `σ = 0`.
    pub fn variance_capture(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.unit_eigenvalues
            .iter()
            .map(|l| {
                acc += l;
                acc
            })
            .collect()
    }

    /// `g_k(x) = √λk φk(x)` at every mesh node, one vector per mode.
    pub fn nodal_modes(&self, mesh: &TriMesh) -> Vec<Vec<f64>> {
        self.modes
            .iter()
            .map(|m| {
                let s = m.eigenvalue.sqrt();
                mesh.vertices()
                    .iter()
                    .map(|p| s * m.eval(p[0], p[1]))
                    .collect()
            })
            .collect()
    }

    /// CSV with header `index,eigenvalue,capture_fraction`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "index,eigenvalue,capture_fraction")?;
        for (i, (m, c)) in self.modes.iter().zip(self.variance_capture()).enumerate() {
            writeln!(w, "{},{:.17e},{:.17e}", i + 1, m.eigenvalue, c)?;
        }
        Ok(())
    }
}

/// Nodal PCE coefficients `c̄_α` of `exp(g)`.
#[derive(Debug, Clone)]
pub struct LognormalPce {
    basis: ChaosBasis,
    coeffs: Vec<Vec<f64>>,
}

impl LognormalPce {
    /// Wraps externally computed coefficient fields.
    pub fn from_fields(basis: ChaosBasis, coeffs: Vec<Vec<f64>>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                context: "lognormal coefficient fields",
                expected: basis.len(),
                actual: coeffs.len(),
            });
        }
        Ok(LognormalPce { basis, coeffs })
    }

    pub fn basis(&self) -> &ChaosBasis {
        &self.basis
    }

    pub fn coeffs(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    pub fn field(&self, i: usize) -> &[f64] {
        &self.coeffs[i]
    }

    pub fn nnodes(&self) -> usize {
        self.coeffs.first().map_or(0, Vec::len)
    }
}

/// `c̄_α(x) = c₀(x) Π_k g_k(x)^{αk} / αk!` with `c₀ = exp(g₀ + ½ Σ g_k²)`.
pub fn lognormal_pce(
    kle: &KlExpansion,
    basis: &ChaosBasis,
    mesh: &TriMesh,
) -> Result<LognormalPce> {
    if basis.nvars() != kle.nvars() {
        return Err(Error::DimensionMismatch {
            context: "lognormal_pce",
            expected: kle.nvars(),
            actual: basis.nvars(),
        });
    }
    let g = kle.nodal_modes(mesh);
    let nn = mesh.nvertices();
    let c0: Vec<f64> = (0..nn)
        .map(|v| (kle.g0 + 0.5 * g.iter().map(|gk| gk[v] * gk[v]).sum::<f64>()).exp())
        .collect();
    let coeffs = basis
        .indices()
        .iter()
        .map(|alpha| {
            let inv_fact = 1.0 / alpha.norm_sq();
            (0..nn)
                .map(|v| {
                    let mut c = c0[v] * inv_fact;
                    for (k, &d) in alpha.degrees().iter().enumerate() {
                        c *= g[k][v].powi(d as i32);
                    }
                    c
                })
                .collect()
        })
        .collect();
    Ok(LognormalPce {
        basis: basis.clone(),
        coeffs,
    })
}

/// One realization `exp(g₀ + Σ g_k ξk)` at the mesh nodes.
pub fn sample_field(kle: &KlExpansion, xi: &[f64], mesh: &TriMesh) -> Result<Vec<f64>> {
    let g = kle.nodal_modes(mesh);
    sample_from_nodal_modes(kle.g0, &g, xi)
}

/// As [`sample_field`] with precomputed `g_k` nodal fields.
pub fn sample_from_nodal_modes(g0: f64, g: &[Vec<f64>], xi: &[f64]) -> Result<Vec<f64>> {
    if xi.len() != g.len() {
        return Err(Error::DimensionMismatch {
            context: "sample_field",
            expected: g.len(),
            actual: xi.len(),
        });
    }
    let nn = g.first().map_or(0, Vec::len);
    Ok((0..nn)
        .map(|v| (g0 + g.iter().zip(xi).map(|(gk, x)| gk[v] * x).sum::<f64>()).exp())
        .collect())
}
