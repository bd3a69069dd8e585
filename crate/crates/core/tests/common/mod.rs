//! Reference implementations shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use faer::linalg::solvers::SolveLstsq;
use faer::{c64, Mat};
use helmsweep::media::{FaceBoundary, FaceFlags, Grid3D};
use helmsweep::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(len: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    (0..len)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn rel_diff(x: &[C64], y: &[C64]) -> f64 {
    let d: Vec<C64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    norm(&d) / norm(y)
}

/// Largest entrywise deviation relative to the largest entry of `reference`.
pub fn max_entry_rel(x: &[C64], reference: &[C64]) -> f64 {
    let scale = reference.iter().map(|z| z.norm()).fold(0.0, f64::max);
    x.iter()
        .zip(reference)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
        / scale
}

/// Row-major dense matrix.
pub struct Dense {
    pub size: usize,
    pub data: Vec<C64>,
}

impl Dense {
    pub fn at(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.size + c]
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        (0..self.size)
            .map(|r| {
                self.data[r * self.size..(r + 1) * self.size]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }
}

/// Quadratic profile evaluated from scratch: `C/eta ((d - eta)/eta)^2` on `[0, eta]`.
fn oracle_sigma(d: f64, constant: f64, eta: f64) -> f64 {
    if (0.0..=eta).contains(&d) {
        constant / eta * ((d - eta) / eta).powi(2)
    } else {
        0.0
    }
}

/// Dense matrix of the 7-point PML-stretched operator, assembled row by row.
///
/// `velocity(i, j, k)` gives `c` at a node; nodes sit at `(t + 1) h`.
pub fn dense_helmholtz(
    n: usize,
    omega: f64,
    velocity: &dyn Fn(usize, usize, usize) -> f64,
    pml_layers: usize,
    constant: f64,
    faces: FaceFlags,
) -> Dense {
    let h = 1.0 / (n as f64 + 1.0);
    let eta = pml_layers as f64 * h;
    let s = |axis: usize, x: f64| -> C64 {
        let mut sigma = 0.0;
        if faces.low[axis] == FaceBoundary::Pml {
            sigma += oracle_sigma(x, constant, eta);
        }
        if faces.high[axis] == FaceBoundary::Pml {
            sigma += oracle_sigma(1.0 - x, constant, eta);
        }
        C64::new(1.0, 0.0) / C64::new(1.0, sigma / omega)
    };
    let size = n * n * n;
    let mut data = vec![C64::new(0.0, 0.0); size * size];
    let id = |p: [usize; 3]| p[0] + n * (p[1] + n * p[2]);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let p = [i, j, k];
                let row = id(p);
                let c = velocity(i, j, k);
                let mut diag = C64::new(omega * omega / (c * c), 0.0);
                for axis in 0..3 {
                    let t = p[axis] as f64;
                    let x = (t + 1.0) * h;
                    let s0 = s(axis, x);
                    let sm = s(axis, x - 0.5 * h);
                    let sp = s(axis, x + 0.5 * h);
                    let wm = s0 * sm / (h * h);
                    let wp = s0 * sp / (h * h);
                    diag -= wm + wp;
                    if p[axis] > 0 {
                        let mut q = p;
                        q[axis] -= 1;
                        data[row * size + id(q)] += wm;
                    }
                    if p[axis] + 1 < n {
                        let mut q = p;
                        q[axis] += 1;
                        data[row * size + id(q)] += wp;
                    }
                }
                data[row * size + row] += diag;
            }
        }
    }
    Dense { size, data }
}

pub fn lens_velocity(grid: &Grid3D) -> impl Fn(usize, usize, usize) -> f64 + '_ {
    move |i, j, k| {
        let r2 = (grid.node(i) - 0.5).powi(2) + (grid.node(j) - 0.5).powi(2) + (grid.node(k) - 0.5).powi(2);
        4.0 / 3.0 * (1.0 - 0.5 * (-32.0 * r2).exp())
    }
}

/// Relative residuals of the GMRES iterates from `x = 0`, computed from an
/// Arnoldi basis built with twice-repeated classical Gram-Schmidt and a dense
/// least-squares solve at every step.
pub fn arnoldi_residuals(apply: &dyn Fn(&[C64]) -> Vec<C64>, f: &[C64], steps: usize) -> Vec<f64> {
    let beta = norm(f);
    let mut basis: Vec<Vec<C64>> = vec![f.iter().map(|z| z / beta).collect()];
    let mut h = vec![vec![C64::new(0.0, 0.0); steps]; steps + 1];
    let mut out = Vec::new();
    for j in 0..steps {
        let mut w = apply(&basis[j]);
        for _ in 0..2 {
            let coeffs: Vec<C64> = basis
                .iter()
                .map(|v| v.iter().zip(&w).map(|(a, b)| a.conj() * b).sum())
                .collect();
            for (v, c) in basis.iter().zip(&coeffs) {
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= c * vi;
                }
            }
            for (i, c) in coeffs.iter().enumerate() {
                h[i][j] += c;
            }
        }
        let wn = norm(&w);
        h[j + 1][j] = C64::new(wn, 0.0);
        let hm = Mat::<c64>::from_fn(j + 2, j + 1, |r, c| h[r][c]);
        let rhs = Mat::<c64>::from_fn(j + 2, 1, |r, _| if r == 0 { c64::new(beta, 0.0) } else { c64::new(0.0, 0.0) });
        let y = hm.qr().solve_lstsq(&rhs);
        let mut res = 0.0;
        for r in 0..j + 2 {
            let mut acc = rhs[(r, 0)];
            for c in 0..j + 1 {
                acc -= hm[(r, c)] * y[(c, 0)];
            }
            res += acc.norm_sqr();
        }
        out.push(res.sqrt() / beta);
        if wn < 1e-14 * beta {
            break;
        }
        basis.push(w.iter().map(|z| z / wn).collect());
    }
    out
}
