//! Restarted, right-preconditioned GMRES and flexible GMRES.
//!
//! Both variants build the Arnoldi basis from `A M⁻¹` with modified
//! Gram–Schmidt and Givens rotations. GMRES keeps only `V` and applies `M⁻¹`
//! once to the combined update; FGMRES stores every `z_j = M⁻¹ v_j` so that
//! `M` may change between iterations. Convergence is declared on the true
//! relative residual `‖b − A x‖ / ‖b‖`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{dot, norm2, LinalgError, LinearOperator, Preconditioner};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrylovConfig {
    pub rel_tol: f64,
    pub max_iters: usize,
    pub restart: usize,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        KrylovConfig {
            rel_tol: 1e-5,
            max_iters: 1000,
            restart: 200,
        }
    }
}

impl KrylovConfig {
    pub fn with_tol(rel_tol: f64) -> Self {
        KrylovConfig {
            rel_tol,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), LinalgError> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(LinalgError::InvalidConfig(format!(
                "rel_tol must lie in (0,1), got {}",
                self.rel_tol
            )));
        }
        if self.restart == 0 {
            return Err(LinalgError::InvalidConfig("restart must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KrylovReport {
    /// Arnoldi steps taken, i.e. preconditioner applications.
    pub iterations: usize,
    pub converged: bool,
    /// The Arnoldi process broke down before the tolerance was met.
    pub breakdown: bool,
    /// True relative residual at exit.
    pub final_rel_residual: f64,
    /// Relative residual per iteration; entry 0 is the initial residual.
    pub residual_history: Vec<f64>,
}

pub fn gmres(
    a: &dyn LinearOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    pc: &dyn Preconditioner,
    cfg: &KrylovConfig,
) -> Result<(Vec<f64>, KrylovReport), LinalgError> {
    solve(a, b, x0, pc, cfg, false)
}

pub fn fgmres(
    a: &dyn LinearOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    pc: &dyn Preconditioner,
    cfg: &KrylovConfig,
) -> Result<(Vec<f64>, KrylovReport), LinalgError> {
    solve(a, b, x0, pc, cfg, true)
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let h = a.hypot(b);
        (a / h, b / h)
    }
}

fn solve(
    a: &dyn LinearOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    pc: &dyn Preconditioner,
    cfg: &KrylovConfig,
    flexible: bool,
) -> Result<(Vec<f64>, KrylovReport), LinalgError> {
    cfg.validate()?;
    let n = a.dim();
    if b.len() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            actual: b.len(),
        });
    }
    let mut x = match x0 {
        Some(x0) if x0.len() != n => {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                actual: x0.len(),
            })
        }
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let mut report = KrylovReport::default();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        report.converged = true;
        report.residual_history.push(0.0);
        return Ok((x, report));
    }
    let target = cfg.rel_tol * bnorm;
    let m = cfg.restart.min(n.max(1));

    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut h = vec![vec![0.0; m]; m + 1];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut g = vec![0.0; m + 1];

    a.apply(&x, &mut r);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let mut beta = norm2(&r);
    report.residual_history.push(beta / bnorm);

    while beta > target && report.iterations < cfg.max_iters {
        v.clear();
        z.clear();
        v.push(r.iter().map(|ri| ri / beta).collect());
        g.iter_mut().for_each(|gi| *gi = 0.0);
        g[0] = beta;
        let mut k = 0;
        while k < m && report.iterations < cfg.max_iters {
            let mut zk = vec![0.0; n];
            pc.apply(&v[k], &mut zk);
            a.apply(&zk, &mut w);
            if flexible {
                z.push(zk);
            }
            for i in 0..=k {
                let hik = dot(&w, &v[i]);
                h[i][k] = hik;
                w.iter_mut().zip(&v[i]).for_each(|(wj, vj)| *wj -= hik * vj);
            }
            let hnext = norm2(&w);
            h[k + 1][k] = hnext;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let (c, s) = givens(h[k][k], h[k + 1][k]);
            cs[k] = c;
            sn[k] = s;
            h[k][k] = c * h[k][k] + s * h[k + 1][k];
            h[k + 1][k] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            report.iterations += 1;
            k += 1;
            let est = g[k].abs();
            report.residual_history.push(est / bnorm);
            if hnext <= 1e-14 * beta {
                report.breakdown = true;
                break;
            }
            if est <= target {
                break;
            }
            v.push(w.iter().map(|wj| wj / hnext).collect());
        }
        // Back substitution for the least-squares coefficients.
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[i][j] * y[j];
            }
            y[i] = if h[i][i] != 0.0 { s / h[i][i] } else { 0.0 };
        }
        if flexible {
            for (j, yj) in y.iter().enumerate() {
                x.iter_mut().zip(&z[j]).for_each(|(xi, zi)| *xi += yj * zi);
            }
        } else {
            let mut comb = vec![0.0; n];
            for (j, yj) in y.iter().enumerate() {
                comb.iter_mut()
                    .zip(&v[j])
                    .for_each(|(ci, vi)| *ci += yj * vi);
            }
            let mut upd = vec![0.0; n];
            pc.apply(&comb, &mut upd);
            x.iter_mut().zip(&upd).for_each(|(xi, ui)| *xi += ui);
        }
        a.apply(&x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        beta = norm2(&r);
        if let Some(last) = report.residual_history.last_mut() {
            *last = beta / bnorm;
        }
        if report.breakdown {
            break;
        }
    }
    report.final_rel_residual = beta / bnorm;
    report.converged = beta <= target;
    report.breakdown &= !report.converged;
    Ok((x, report))
}

/// Writes `iteration,rel_residual` rows.
pub fn write_residual_history<W: Write>(history: &[f64], mut w: W) -> std::io::Result<()> {
    writeln!(w, "iteration,rel_residual")?;
    for (i, r) in history.iter().enumerate() {
        writeln!(w, "{i},{r:.17e}")?;
    }
    Ok(())
}
