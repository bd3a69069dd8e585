//! Restarted GMRES with right preconditioning.
//!
//! Solves `A M y = f`, `u = M y`, starting from `u = 0`. Residuals are
//! reported relative to `|f|` and are residuals of the original system.

use std::time::Instant;

use thiserror::Error;

use crate::C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Error type returned by operator callbacks.
pub type OperatorFailure = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum KrylovError {
    #[error("invalid GMRES parameters: {0}")]
    Config(String),
    #[error("operator application failed: {0}")]
    Operator(OperatorFailure),
    #[error("operator returned {got} values, expected {expected}")]
    Length { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresConfig {
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            restart: 40,
            max_iter: 400,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveReport {
    /// Preconditioned operator applications.
    pub iterations: usize,
    /// Completed restart cycles.
    pub restarts: usize,
    /// Estimated relative residual after each iteration.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// True relative residual of the returned iterate.
    pub final_residual: f64,
    pub breakdown: bool,
    pub setup_seconds: f64,
    pub solve_seconds: f64,
    pub peak_memory_bytes: usize,
}

/// Bytes held by the Krylov basis and work vectors for `n` unknowns.
pub fn workspace_bytes(n: usize, restart: usize) -> usize {
    (restart + 4) * n * std::mem::size_of::<C64>()
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn call<F>(op: &mut F, v: &[C64]) -> Result<Vec<C64>, KrylovError>
where
    F: FnMut(&[C64]) -> Result<Vec<C64>, OperatorFailure>,
{
    let out = op(v).map_err(KrylovError::Operator)?;
    if out.len() != v.len() {
        return Err(KrylovError::Length {
            expected: v.len(),
            got: out.len(),
        });
    }
    Ok(out)
}

/// Givens rotation `(c, s)` with `c` real zeroing `b` against `a`.
fn rotation(a: C64, b: C64) -> (f64, C64) {
    let (na, nb) = (a.norm(), b.norm());
    if nb == 0.0 {
        return (1.0, ZERO);
    }
    if na == 0.0 {
        return (0.0, (b / nb).conj());
    }
    let r = na.hypot(nb);
    let phase = a / na;
    (na / r, phase * b.conj() / r)
}

fn apply_rotation(c: f64, s: C64, x: &mut C64, y: &mut C64) {
    let (a, b) = (*x, *y);
    *x = a * c + s * b;
    *y = -s.conj() * a + b * c;
}

pub fn gmres<A, M>(
    mut apply_a: A,
    mut apply_m: M,
    f: &[C64],
    cfg: &GmresConfig,
) -> Result<(Vec<C64>, SolveReport), KrylovError>
where
    A: FnMut(&[C64]) -> Result<Vec<C64>, OperatorFailure>,
    M: FnMut(&[C64]) -> Result<Vec<C64>, OperatorFailure>,
{
    if !(cfg.tol > 0.0 && cfg.tol.is_finite()) || cfg.restart == 0 {
        return Err(KrylovError::Config(format!(
            "need tol > 0 and restart >= 1, got tol {} restart {}",
            cfg.tol, cfg.restart
        )));
    }
    let start = Instant::now();
    let n = f.len();
    let mut report = SolveReport::default();
    let mut x = vec![ZERO; n];
    let f_norm = norm(f);
    if f_norm == 0.0 {
        report.converged = true;
        report.solve_seconds = start.elapsed().as_secs_f64();
        return Ok((x, report));
    }
    let m = cfg.restart;
    let mut r = f.to_vec();
    let mut beta = f_norm;
    loop {
        let mut basis: Vec<Vec<C64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|z| z / beta).collect());
        // column j of the rotated Hessenberg matrix holds j + 2 entries
        let mut h: Vec<Vec<C64>> = Vec::with_capacity(m);
        let mut rotations: Vec<(f64, C64)> = Vec::with_capacity(m);
        let mut g = vec![ZERO; m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut steps = 0;
        while steps < m && report.iterations < cfg.max_iter {
            let j = steps;
            let z = call(&mut apply_m, &basis[j])?;
            let mut w = call(&mut apply_a, &z)?;
            report.iterations += 1;
            let before = norm(&w);
            let mut col = vec![ZERO; j + 2];
            for (i, v) in basis.iter().enumerate() {
                let c = dot(v, &w);
                axpy(-c, v, &mut w);
                col[i] = c;
            }
            let mut after = norm(&w);
            if after < 1e-3 * before {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(v, &w);
                    axpy(-c, v, &mut w);
                    col[i] += c;
                }
                after = norm(&w);
            }
            col[j + 1] = C64::new(after, 0.0);
            for (i, &(c, s)) in rotations.iter().enumerate() {
                let (lo, hi) = col.split_at_mut(i + 1);
                apply_rotation(c, s, &mut lo[i], &mut hi[0]);
            }
            let (c, s) = rotation(col[j], col[j + 1]);
            {
                let (lo, hi) = col.split_at_mut(j + 1);
                apply_rotation(c, s, &mut lo[j], &mut hi[0]);
            }
            let (lo, hi) = g.split_at_mut(j + 1);
            apply_rotation(c, s, &mut lo[j], &mut hi[0]);
            rotations.push((c, s));
            h.push(col);
            steps += 1;
            let estimate = g[j + 1].norm() / f_norm;
            report.residual_history.push(estimate);
            if after <= 1e-14 * before.max(f64::MIN_POSITIVE) || after == 0.0 {
                report.breakdown = true;
                break;
            }
            if estimate <= cfg.tol {
                break;
            }
            basis.push(w.iter().map(|z| z / after).collect());
        }
        // back substitution for the cycle's coefficients
        let mut y = vec![ZERO; steps];
        for i in (0..steps).rev() {
            let mut acc = g[i];
            for k in i + 1..steps {
                acc -= h[k][i] * y[k];
            }
            y[i] = acc / h[i][i];
        }
        let mut update = vec![ZERO; n];
        for (k, yk) in y.iter().enumerate() {
            axpy(*yk, &basis[k], &mut update);
        }
        let correction = call(&mut apply_m, &update)?;
        axpy(C64::new(1.0, 0.0), &correction, &mut x);
        report.restarts += 1;

        let ax = call(&mut apply_a, &x)?;
        for ((ri, fi), ai) in r.iter_mut().zip(f).zip(&ax) {
            *ri = fi - ai;
        }
        beta = norm(&r);
        report.final_residual = beta / f_norm;
        if report.final_residual <= cfg.tol {
            report.converged = true;
            break;
        }
        if report.breakdown || report.iterations >= cfg.max_iter || steps == 0 {
            break;
        }
    }
    report.peak_memory_bytes = workspace_bytes(n, m);
    report.solve_seconds = start.elapsed().as_secs_f64();
    Ok((x, report))
}
