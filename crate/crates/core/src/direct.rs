//! Exact solvers for subproblems.
//!
//! [`BandedBlockFactorization`] is the block LDU along `x1` of a quasi-1D
//! problem: one diagonal block per `x1` plane, Schur complements
//! `S_i = D_i - L_i T_{i-1} U_{i-1}` and their inverses `T_i`. Because the
//! couplings between consecutive planes are diagonal, each Schur update is an
//! elementwise scaling of the previous inverse.
//!
//! [`ExactFactorization`] solves an arbitrary box exactly, either with a dense
//! LU or with the same block elimination applied to the symmetrized operator.

use faer::linalg::solvers::DenseSolveCore;
use faer::{c64, Mat};
use thiserror::Error;

use crate::operator::{StencilCoefficients, X1};
use crate::C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Largest system handled by a dense LU when the method is chosen automatically.
pub const DENSE_LIMIT: usize = 1500;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DirectError {
    #[error("singular diagonal block {block}")]
    Singular { block: usize },
    #[error("right-hand side of length {got}, expected {expected}")]
    Length { expected: usize, got: usize },
}

fn check_len(expected: usize, got: usize) -> Result<(), DirectError> {
    if expected != got {
        return Err(DirectError::Length { expected, got });
    }
    Ok(())
}

/// Dense inverse (column-major) of `m`; `block` tags the failure.
fn invert(m: Mat<c64>, block: usize) -> Result<Vec<C64>, DirectError> {
    let size = m.nrows();
    let lu = m.partial_piv_lu();
    let u = lu.U();
    for d in 0..size {
        let p = u[(d, d)];
        if p == ZERO || !p.re.is_finite() || !p.im.is_finite() {
            return Err(DirectError::Singular { block });
        }
    }
    let inv = lu.inverse();
    let mut out = Vec::with_capacity(size * size);
    for c in 0..size {
        for r in 0..size {
            let v = inv[(r, c)];
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(DirectError::Singular { block });
            }
            out.push(v);
        }
    }
    Ok(out)
}

/// `y = T v` for a column-major square `t`.
fn matvec(t: &[C64], v: &[C64], y: &mut [C64]) {
    let size = v.len();
    y.fill(ZERO);
    for (c, &vc) in v.iter().enumerate() {
        if vc == ZERO {
            continue;
        }
        let col = &t[c * size..(c + 1) * size];
        for (yr, &tr) in y.iter_mut().zip(col) {
            *yr += tr * vc;
        }
    }
}

/// `y = T v` for a symmetric `t` stored as its packed upper triangle.
fn packed_matvec(t: &[C64], v: &[C64], y: &mut [C64]) {
    y.fill(ZERO);
    let mut offset = 0;
    for c in 0..v.len() {
        let col = &t[offset..offset + c + 1];
        let vc = v[c];
        let mut acc = ZERO;
        for r in 0..c {
            y[r] += col[r] * vc;
            acc += col[r] * v[r];
        }
        y[c] += acc + col[c] * vc;
        offset += c + 1;
    }
}

fn packed_index(r: usize, c: usize) -> usize {
    let (r, c) = if r <= c { (r, c) } else { (c, r) };
    c * (c + 1) / 2 + r
}

/// Stencil entries of the `x1`-plane `i`, one row and column per `(x2, x3)` node.
fn plane_block(a: &StencilCoefficients, i: usize, weight: Option<&[C64]>) -> Mat<c64> {
    let [n1, n2, n3] = a.dims();
    let size = n2 * n3;
    let mut m = Mat::<c64>::zeros(size, size);
    for k in 0..n3 {
        for j in 0..n2 {
            let p = j + n2 * k;
            let idx = i + n1 * p;
            let w = weight.map_or(C64::new(1.0, 0.0), |w| w[idx]);
            m[(p, p)] = w * a.center()[idx];
            if j > 0 {
                m[(p, p - 1)] = w * a.minus(1)[idx];
            }
            if j + 1 < n2 {
                m[(p, p + 1)] = w * a.plus(1)[idx];
            }
            if k > 0 {
                m[(p, p - n2)] = w * a.minus(2)[idx];
            }
            if k + 1 < n3 {
                m[(p, p + n2)] = w * a.plus(2)[idx];
            }
        }
    }
    m
}

/// The two diagonal couplings of plane `i` to planes `i - 1` and `i + 1`.
fn plane_couplings(a: &StencilCoefficients, i: usize, weight: Option<&[C64]>) -> (Vec<C64>, Vec<C64>) {
    let n1 = a.dims()[X1];
    let size = a.len() / n1;
    let mut lower = Vec::with_capacity(size);
    let mut upper = Vec::with_capacity(size);
    for p in 0..size {
        let idx = i + n1 * p;
        let w = weight.map_or(C64::new(1.0, 0.0), |w| w[idx]);
        lower.push(w * a.minus(X1)[idx]);
        upper.push(w * a.plus(X1)[idx]);
    }
    (lower, upper)
}

fn gather_plane(n1: usize, i: usize, field: &[C64], out: &mut [C64]) {
    for (p, v) in out.iter_mut().enumerate() {
        *v = field[i + n1 * p];
    }
}

fn scatter_plane(n1: usize, i: usize, plane: &[C64], field: &mut [C64]) {
    for (p, v) in plane.iter().enumerate() {
        field[i + n1 * p] = *v;
    }
}

/// Block LDU of a quasi-1D problem, eliminating one `x1` plane at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedBlockFactorization {
    dims: [usize; 3],
    inverses: Vec<Vec<C64>>,
    lower: Vec<Vec<C64>>,
    upper: Vec<Vec<C64>>,
}

pub fn factor_quasi1d(a: &StencilCoefficients) -> Result<BandedBlockFactorization, DirectError> {
    BandedBlockFactorization::new(a)
}

impl BandedBlockFactorization {
    pub fn new(a: &StencilCoefficients) -> Result<Self, DirectError> {
        let dims = a.dims();
        let n1 = dims[X1];
        let size = dims[1] * dims[2];
        let mut inverses: Vec<Vec<C64>> = Vec::with_capacity(n1);
        let mut lower = Vec::with_capacity(n1);
        let mut upper = Vec::with_capacity(n1);
        for i in 0..n1 {
            let mut s = plane_block(a, i, None);
            let (l, u) = plane_couplings(a, i, None);
            if let Some(prev) = inverses.last() {
                let u_prev: &Vec<C64> = &upper[i - 1];
                for c in 0..size {
                    let uc = u_prev[c];
                    let col = &prev[c * size..(c + 1) * size];
                    for r in 0..size {
                        s[(r, c)] -= l[r] * col[r] * uc;
                    }
                }
            }
            inverses.push(invert(s, i)?);
            lower.push(l);
            upper.push(u);
        }
        Ok(Self {
            dims,
            inverses,
            lower,
            upper,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block_count(&self) -> usize {
        self.inverses.len()
    }

    pub fn block_size(&self) -> usize {
        self.dims[1] * self.dims[2]
    }

    pub fn memory_bytes(&self) -> usize {
        let b = self.block_size();
        self.block_count() * (b * b + 2 * b) * std::mem::size_of::<C64>()
    }

    pub fn solve_in_place(&self, x: &mut [C64]) -> Result<(), DirectError> {
        check_len(self.len(), x.len())?;
        let n1 = self.dims[X1];
        let b = self.block_size();
        let mut g = vec![ZERO; b];
        let mut y = vec![ZERO; b];
        let mut prev = vec![ZERO; b];
        // forward: y_i = T_i (g_i - L_i y_{i-1})
        for i in 0..n1 {
            gather_plane(n1, i, x, &mut g);
            if i > 0 {
                for p in 0..b {
                    g[p] -= self.lower[i][p] * prev[p];
                }
            }
            matvec(&self.inverses[i], &g, &mut y);
            scatter_plane(n1, i, &y, x);
            std::mem::swap(&mut prev, &mut y);
        }
        // backward: x_i = y_i - T_i U_i x_{i+1}; `prev` holds x_{n1-1}
        for i in (0..n1.saturating_sub(1)).rev() {
            for p in 0..b {
                g[p] = self.upper[i][p] * prev[p];
            }
            matvec(&self.inverses[i], &g, &mut y);
            gather_plane(n1, i, x, &mut prev);
            for p in 0..b {
                prev[p] -= y[p];
            }
            scatter_plane(n1, i, &prev, x);
        }
        Ok(())
    }

    pub fn solve(&self, rhs: &[C64]) -> Result<Vec<C64>, DirectError> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }
}

pub fn solve_quasi1d(fact: &BandedBlockFactorization, rhs: &[C64]) -> Result<Vec<C64>, DirectError> {
    fact.solve(rhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactMethod {
    /// Dense up to [`DENSE_LIMIT`] unknowns, blocked above.
    Auto,
    Dense,
    SymmetricBlocked,
}

#[derive(Debug, Clone)]
enum ExactKind {
    Dense {
        inverse: Vec<C64>,
    },
    SymmetricBlocked {
        weight: Vec<C64>,
        inverses: Vec<Vec<C64>>,
        lower: Vec<Vec<C64>>,
        upper: Vec<Vec<C64>>,
    },
}

/// Exact solver for an arbitrary box.
///
/// The blocked variant eliminates `x1` planes of `W A`, where the row weights
/// `W = 1/(s1 s2 s3)` make the operator complex symmetric; each plane inverse
/// is then symmetric and only its upper triangle is kept.
#[derive(Debug, Clone)]
pub struct ExactFactorization {
    dims: [usize; 3],
    kind: ExactKind,
}

pub fn factor_exact(a: &StencilCoefficients) -> Result<ExactFactorization, DirectError> {
    ExactFactorization::new(a)
}

pub fn solve_exact(fact: &ExactFactorization, rhs: &[C64]) -> Result<Vec<C64>, DirectError> {
    fact.solve(rhs)
}

impl ExactFactorization {
    pub fn new(a: &StencilCoefficients) -> Result<Self, DirectError> {
        Self::with_method(a, ExactMethod::Auto)
    }

    pub fn with_method(a: &StencilCoefficients, method: ExactMethod) -> Result<Self, DirectError> {
        let dense = match method {
            ExactMethod::Auto => a.len() <= DENSE_LIMIT,
            ExactMethod::Dense => true,
            ExactMethod::SymmetricBlocked => false,
        };
        let kind = if dense {
            Self::dense(a)?
        } else {
            Self::blocked(a)?
        };
        Ok(Self {
            dims: a.dims(),
            kind,
        })
    }

    fn dense(a: &StencilCoefficients) -> Result<ExactKind, DirectError> {
        let len = a.len();
        let mut m = Mat::<c64>::zeros(len, len);
        a.visit_entries(|r, c, v| m[(r, c)] = v);
        Ok(ExactKind::Dense {
            inverse: invert(m, 0)?,
        })
    }

    fn blocked(a: &StencilCoefficients) -> Result<ExactKind, DirectError> {
        let weight = a.symmetrizer();
        let n1 = a.dims()[X1];
        let size = a.len() / n1;
        let mut inverses: Vec<Vec<C64>> = Vec::with_capacity(n1);
        let mut lower = Vec::with_capacity(n1);
        let mut upper: Vec<Vec<C64>> = Vec::with_capacity(n1);
        for i in 0..n1 {
            let d = plane_block(a, i, Some(&weight));
            let (l, u) = plane_couplings(a, i, Some(&weight));
            let mut s = Mat::<c64>::zeros(size, size);
            for c in 0..size {
                for r in 0..=c {
                    let mut v = d[(r, c)];
                    if let Some(prev) = inverses.last() {
                        v -= l[r] * prev[packed_index(r, c)] * upper[i - 1][c];
                    }
                    s[(r, c)] = v;
                    s[(c, r)] = v;
                }
            }
            let full = invert(s, i)?;
            let mut packed = Vec::with_capacity(size * (size + 1) / 2);
            for c in 0..size {
                packed.extend_from_slice(&full[c * size..c * size + c + 1]);
            }
            inverses.push(packed);
            lower.push(l);
            upper.push(u);
        }
        Ok(ExactKind::SymmetricBlocked {
            weight,
            inverses,
            lower,
            upper,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn method(&self) -> ExactMethod {
        match self.kind {
            ExactKind::Dense { .. } => ExactMethod::Dense,
            ExactKind::SymmetricBlocked { .. } => ExactMethod::SymmetricBlocked,
        }
    }

    pub fn memory_bytes(&self) -> usize {
        let values = match &self.kind {
            ExactKind::Dense { inverse } => inverse.len(),
            ExactKind::SymmetricBlocked {
                weight,
                inverses,
                lower,
                upper,
            } => {
                weight.len()
                    + inverses.iter().map(Vec::len).sum::<usize>()
                    + lower.iter().chain(upper).map(Vec::len).sum::<usize>()
            }
        };
        values * std::mem::size_of::<C64>()
    }

    pub fn solve_in_place(&self, x: &mut [C64]) -> Result<(), DirectError> {
        check_len(self.len(), x.len())?;
        match &self.kind {
            ExactKind::Dense { inverse } => {
                let rhs = x.to_vec();
                matvec(inverse, &rhs, x);
            }
            ExactKind::SymmetricBlocked {
                weight,
                inverses,
                lower,
                upper,
            } => {
                for (v, w) in x.iter_mut().zip(weight) {
                    *v *= w;
                }
                let n1 = self.dims[X1];
                let b = self.len() / n1;
                let mut g = vec![ZERO; b];
                let mut y = vec![ZERO; b];
                let mut prev = vec![ZERO; b];
                for i in 0..n1 {
                    gather_plane(n1, i, x, &mut g);
                    if i > 0 {
                        for p in 0..b {
                            g[p] -= lower[i][p] * prev[p];
                        }
                    }
                    packed_matvec(&inverses[i], &g, &mut y);
                    scatter_plane(n1, i, &y, x);
                    std::mem::swap(&mut prev, &mut y);
                }
                for i in (0..n1.saturating_sub(1)).rev() {
                    for p in 0..b {
                        g[p] = upper[i][p] * prev[p];
                    }
                    packed_matvec(&inverses[i], &g, &mut y);
                    gather_plane(n1, i, x, &mut prev);
                    for p in 0..b {
                        prev[p] -= y[p];
                    }
                    scatter_plane(n1, i, &prev, x);
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self, rhs: &[C64]) -> Result<Vec<C64>, DirectError> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }
}
