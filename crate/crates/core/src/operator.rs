//! The 7-point discretization of the PML-stretched Helmholtz operator.
//!
//! Row `(i, j, k)` of the operator reads, for each axis `a`,
//! `s_a(p) / h^2 * (s_a(p + 1/2) (u_+ - u) - s_a(p - 1/2) (u - u_-))`
//! plus `omega^2 / c^2 u`, with `u = 0` outside the box. Coefficients are kept
//! in stencil form together with the per-axis damping they were built from,
//! so that PML-padded subproblems can be cut out and re-stretched.

use std::ops::Range;

use thiserror::Error;

use crate::media::{damping, stretch_factor, Grid3D, PmlProfile, VelocityField};
use crate::C64;

pub const X1: usize = 0;
pub const X2: usize = 1;
pub const X3: usize = 2;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("dimension mismatch: grid {grid:?}, field {field:?}")]
    Dimensions { grid: [usize; 3], field: [usize; 3] },
    #[error("vector of length {got} where {expected} was expected")]
    Length { expected: usize, got: usize },
    #[error("layer range {range:?} outside 0..{len} along axis {axis}")]
    Range {
        axis: usize,
        range: Range<usize>,
        len: usize,
    },
    #[error("layer groups {from:?} and {to:?} are not adjacent")]
    NotAdjacent { from: Range<usize>, to: Range<usize> },
    #[error("invalid subproblem: {0}")]
    Subproblem(String),
}

/// Damping values along one axis: at the nodes `t` and at the half points
/// `t - 1/2` for `t = 0..=len` (entry `len` is the half point past the last node).
#[derive(Debug, Clone, PartialEq)]
pub struct AxisDamping {
    pub node: Vec<f64>,
    pub half: Vec<f64>,
}

impl AxisDamping {
    pub fn undamped(len: usize) -> Self {
        Self {
            node: vec![0.0; len],
            half: vec![0.0; len + 1],
        }
    }

    pub fn len(&self) -> usize {
        self.node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node.is_empty()
    }

    fn from_profile(grid: &Grid3D, pml: &PmlProfile, axis: usize) -> Self {
        let n = grid.n();
        Self {
            node: (0..n)
                .map(|t| pml.axis_sigma(axis, grid.coordinate((t + 1) as f64)))
                .collect(),
            half: (0..=n)
                .map(|t| pml.axis_sigma(axis, grid.coordinate(t as f64 + 0.5)))
                .collect(),
        }
    }
}

/// Which sides of a layer group receive an auxiliary PML.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    None,
    Low,
    High,
    Both,
}

impl Padding {
    pub fn low(self) -> bool {
        matches!(self, Self::Low | Self::Both)
    }

    pub fn high(self) -> bool {
        matches!(self, Self::High | Self::Both)
    }
}

/// A layer group along a sweep axis together with the padding that closes it.
///
/// With `exact` unset the padded sides get `aux_layers` layers of moving PML
/// (profile origin at the ghost plane beyond them). With `exact` set the group
/// is instead extended to the domain edge on its padded sides and the parent
/// coefficients are restricted unchanged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubproblemSpec {
    pub axis: usize,
    pub owned: Range<usize>,
    pub padding: Padding,
    pub aux_layers: usize,
    pub exact: bool,
}

impl SubproblemSpec {
    /// First parent layer (possibly negative) and number of layers of the subproblem.
    pub fn span(&self, parent_len: usize) -> (isize, usize) {
        let start = if !self.padding.low() {
            self.owned.start as isize
        } else if self.exact {
            0
        } else {
            self.owned.start as isize - self.aux_layers as isize
        };
        let end = if !self.padding.high() {
            self.owned.end
        } else if self.exact {
            parent_len
        } else {
            self.owned.end + self.aux_layers
        };
        (start, (end as isize - start) as usize)
    }

    /// Offset of the first owned layer inside the subproblem.
    pub fn owned_offset(&self, parent_len: usize) -> usize {
        (self.owned.start as isize - self.span(parent_len).0) as usize
    }
}

/// Seven complex coefficient arrays of the discretized operator over a box.
#[derive(Debug, Clone)]
pub struct StencilCoefficients {
    dims: [usize; 3],
    h: f64,
    omega: f64,
    k2: Vec<f64>,
    damping: [AxisDamping; 3],
    center: Vec<C64>,
    minus: [Vec<C64>; 3],
    plus: [Vec<C64>; 3],
}

pub fn strides(dims: [usize; 3]) -> [usize; 3] {
    [1, dims[0], dims[0] * dims[1]]
}

pub fn assemble(
    grid: &Grid3D,
    vel: &VelocityField,
    pml: &PmlProfile,
) -> Result<StencilCoefficients, OperatorError> {
    if vel.dims() != grid.dims() {
        return Err(OperatorError::Dimensions {
            grid: grid.dims(),
            field: vel.dims(),
        });
    }
    let omega = grid.omega();
    let k2 = vel.values().iter().map(|c| (omega / c).powi(2)).collect();
    let damping = [0, 1, 2].map(|axis| AxisDamping::from_profile(grid, pml, axis));
    StencilCoefficients::from_parts(grid.dims(), grid.h(), omega, k2, damping)
}

impl StencilCoefficients {
    /// Builds the stencil from `omega^2/c^2` values and per-axis damping.
    pub fn from_parts(
        dims: [usize; 3],
        h: f64,
        omega: f64,
        k2: Vec<f64>,
        damping: [AxisDamping; 3],
    ) -> Result<Self, OperatorError> {
        let len: usize = dims.iter().product();
        if k2.len() != len {
            return Err(OperatorError::Length {
                expected: len,
                got: k2.len(),
            });
        }
        for (axis, d) in damping.iter().enumerate() {
            if d.node.len() != dims[axis] || d.half.len() != dims[axis] + 1 {
                return Err(OperatorError::Subproblem(format!(
                    "damping along axis {axis} does not match extent {}",
                    dims[axis]
                )));
            }
        }
        let inv_h2 = 1.0 / (h * h);
        let mut center: Vec<C64> = k2.iter().map(|&v| C64::new(v, 0.0)).collect();
        let mut minus = [vec![ZERO; len], vec![ZERO; len], vec![ZERO; len]];
        let mut plus = [vec![ZERO; len], vec![ZERO; len], vec![ZERO; len]];
        let stride = strides(dims);
        for axis in 0..3 {
            let extent = dims[axis];
            let d = &damping[axis];
            let s_node: Vec<C64> = d.node.iter().map(|&s| stretch_factor(s, omega)).collect();
            let s_half: Vec<C64> = d.half.iter().map(|&s| stretch_factor(s, omega)).collect();
            for idx in 0..len {
                let t = (idx / stride[axis]) % extent;
                let lo = s_node[t] * s_half[t] * inv_h2;
                let hi = s_node[t] * s_half[t + 1] * inv_h2;
                center[idx] -= lo + hi;
                if t > 0 {
                    minus[axis][idx] = lo;
                }
                if t + 1 < extent {
                    plus[axis][idx] = hi;
                }
            }
        }
        Ok(Self {
            dims,
            h,
            omega,
            k2,
            damping,
            center,
            minus,
            plus,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.center.len()
    }

    pub fn is_empty(&self) -> bool {
        self.center.is_empty()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn k2(&self) -> &[f64] {
        &self.k2
    }

    pub fn damping(&self, axis: usize) -> &AxisDamping {
        &self.damping[axis]
    }

    pub fn center(&self) -> &[C64] {
        &self.center
    }

    /// Coefficient multiplying the neighbor at `t - 1` along `axis`.
    pub fn minus(&self, axis: usize) -> &[C64] {
        &self.minus[axis]
    }

    /// Coefficient multiplying the neighbor at `t + 1` along `axis`.
    pub fn plus(&self, axis: usize) -> &[C64] {
        &self.plus[axis]
    }

    pub fn strides(&self) -> [usize; 3] {
        strides(self.dims)
    }

    /// Whether the `x = 0` face of `axis` is damped.
    pub fn has_low_pml(&self, axis: usize) -> bool {
        self.damping[axis].half[0] > 0.0
    }

    pub fn has_high_pml(&self, axis: usize) -> bool {
        self.damping[axis].half[self.dims[axis]] > 0.0
    }

    pub fn memory_bytes(&self) -> usize {
        let len = self.len();
        let damping: usize = self.damping.iter().map(|d| 2 * d.len() + 1).sum();
        len * (7 * std::mem::size_of::<C64>() + std::mem::size_of::<f64>())
            + damping * std::mem::size_of::<f64>()
    }

    /// Row weights `1 / (s1 s2 s3)` that turn the operator complex symmetric.
    pub fn symmetrizer(&self) -> Vec<C64> {
        let s: Vec<Vec<C64>> = self
            .damping
            .iter()
            .map(|d| d.node.iter().map(|&v| stretch_factor(v, self.omega)).collect())
            .collect();
        let [n1, n2, n3] = self.dims;
        let mut w = Vec::with_capacity(self.len());
        for k in 0..n3 {
            for j in 0..n2 {
                for i in 0..n1 {
                    w.push((s[0][i] * s[1][j] * s[2][k]).inv());
                }
            }
        }
        w
    }

    fn check_len(&self, got: usize) -> Result<(), OperatorError> {
        if got != self.len() {
            return Err(OperatorError::Length {
                expected: self.len(),
                got,
            });
        }
        Ok(())
    }

    /// `out = A u` without allocating.
    pub fn apply_into(&self, u: &[C64], out: &mut [C64]) -> Result<(), OperatorError> {
        self.check_len(u.len())?;
        self.check_len(out.len())?;
        let [n1, n2, n3] = self.dims;
        let [_, s2, s3] = self.strides();
        for k in 0..n3 {
            for j in 0..n2 {
                let row = n1 * (j + n2 * k);
                for i in 0..n1 {
                    let idx = row + i;
                    let mut acc = self.center[idx] * u[idx];
                    if i > 0 {
                        acc += self.minus[0][idx] * u[idx - 1];
                    }
                    if i + 1 < n1 {
                        acc += self.plus[0][idx] * u[idx + 1];
                    }
                    if j > 0 {
                        acc += self.minus[1][idx] * u[idx - s2];
                    }
                    if j + 1 < n2 {
                        acc += self.plus[1][idx] * u[idx + s2];
                    }
                    if k > 0 {
                        acc += self.minus[2][idx] * u[idx - s3];
                    }
                    if k + 1 < n3 {
                        acc += self.plus[2][idx] * u[idx + s3];
                    }
                    out[idx] = acc;
                }
            }
        }
        Ok(())
    }

    pub fn apply(&self, u: &[C64]) -> Result<Vec<C64>, OperatorError> {
        let mut out = vec![ZERO; self.len()];
        self.apply_into(u, &mut out)?;
        Ok(out)
    }

    #[cfg(test)]
    pub(crate) fn decouple(&mut self, axis: usize) {
        self.minus[axis].fill(ZERO);
        self.plus[axis].fill(ZERO);
    }

    /// Calls `f(row, col, value)` for every stored nonzero.
    pub fn visit_entries(&self, mut f: impl FnMut(usize, usize, C64)) {
        let stride = self.strides();
        for idx in 0..self.len() {
            f(idx, idx, self.center[idx]);
            for axis in 0..3 {
                let t = (idx / stride[axis]) % self.dims[axis];
                if t > 0 {
                    f(idx, idx - stride[axis], self.minus[axis][idx]);
                }
                if t + 1 < self.dims[axis] {
                    f(idx, idx + stride[axis], self.plus[axis][idx]);
                }
            }
        }
    }

    fn check_range(&self, axis: usize, range: &Range<usize>) -> Result<(), OperatorError> {
        if range.start >= range.end || range.end > self.dims[axis] {
            return Err(OperatorError::Range {
                axis,
                range: range.clone(),
                len: self.dims[axis],
            });
        }
        Ok(())
    }

    /// Dimensions of the box made of `layers` layers along `axis`.
    pub fn layer_dims(&self, axis: usize, layers: usize) -> [usize; 3] {
        let mut dims = self.dims;
        dims[axis] = layers;
        dims
    }

    /// Values of `field` on the layers `range` along `axis`, as a compact box.
    pub fn gather_layers(&self, axis: usize, range: Range<usize>, field: &[C64]) -> Vec<C64> {
        gather_layers(self.dims, axis, range, field)
    }

    /// Overwrites the layers `range` of `field` with the compact box `block`.
    pub fn scatter_layers(&self, axis: usize, range: Range<usize>, block: &[C64], field: &mut [C64]) {
        scatter_layers(self.dims, axis, range, block, field)
    }

    /// Cuts out the subproblem described by `spec`, replacing the stretching
    /// along the sweep axis by the moving PML of damping constant `pml_constant`.
    pub fn extract(
        &self,
        spec: &SubproblemSpec,
        pml_constant: f64,
    ) -> Result<StencilCoefficients, OperatorError> {
        let axis = spec.axis;
        let parent_len = self.dims[axis];
        self.check_range(axis, &spec.owned)?;
        if !spec.exact && spec.padding != Padding::None && spec.aux_layers == 0 {
            return Err(OperatorError::Subproblem(
                "a moving PML needs at least one layer".into(),
            ));
        }
        let (start, len) = spec.span(parent_len);
        let dims = self.layer_dims(axis, len);
        let parent_layer = |l: usize| -> usize {
            (start + l as isize).clamp(0, parent_len as isize - 1) as usize
        };
        let k2 = restrict(self.dims, axis, &self.k2, len, parent_layer);

        let mut sub_damping = self.damping.clone();
        let parent = &self.damping[axis];
        sub_damping[axis] = if spec.exact || spec.padding == Padding::None {
            let first = start as usize;
            AxisDamping {
                node: parent.node[first..first + len].to_vec(),
                half: parent.half[first..=first + len].to_vec(),
            }
        } else {
            let eta = spec.aux_layers as f64 * self.h;
            let low_ghost = spec.owned.start as f64 - spec.aux_layers as f64 - 1.0;
            let high_ghost = (spec.owned.end + spec.aux_layers) as f64;
            let owned_lo = spec.owned.start as f64 - 0.5;
            let owned_hi = spec.owned.end as f64 - 0.5;
            // position in parent node units; `original` is the parent value there
            let sigma = |pos: f64, original: f64| -> f64 {
                let mut s = 0.0;
                if spec.padding.low() {
                    s += damp_from(pos - low_ghost, self.h, pml_constant, eta);
                }
                if spec.padding.high() {
                    s += damp_from(high_ghost - pos, self.h, pml_constant, eta);
                }
                if (owned_lo..=owned_hi).contains(&pos) {
                    s += original;
                }
                s
            };
            AxisDamping {
                node: (0..len)
                    .map(|l| {
                        let p = start + l as isize;
                        let original = if (0..parent_len as isize).contains(&p) {
                            parent.node[p as usize]
                        } else {
                            0.0
                        };
                        sigma(p as f64, original)
                    })
                    .collect(),
                half: (0..=len)
                    .map(|l| {
                        let p = start + l as isize;
                        let original = if (0..=parent_len as isize).contains(&p) {
                            parent.half[p as usize]
                        } else {
                            0.0
                        };
                        sigma(p as f64 - 0.5, original)
                    })
                    .collect(),
            }
        };
        StencilCoefficients::from_parts(dims, self.h, self.omega, k2, sub_damping)
    }

    /// Quasi-2D slab of a layer group along `x3`.
    pub fn extract_outer(
        &self,
        spec: &SubproblemSpec,
        pml_constant: f64,
    ) -> Result<StencilCoefficients, OperatorError> {
        if spec.axis != X3 {
            return Err(OperatorError::Subproblem("outer subproblems sweep along x3".into()));
        }
        self.extract(spec, pml_constant)
    }

    /// Quasi-1D column of a layer group along `x2` of a quasi-2D slab.
    pub fn extract_inner(
        &self,
        spec: &SubproblemSpec,
        pml_constant: f64,
    ) -> Result<StencilCoefficients, OperatorError> {
        if spec.axis != X2 {
            return Err(OperatorError::Subproblem("inner subproblems sweep along x2".into()));
        }
        self.extract(spec, pml_constant)
    }

    /// Applies the off-diagonal block `A[to, from]` to `u_from` (values on the
    /// layers `from`), returning values on the layers `to`.
    pub fn couple(
        &self,
        axis: usize,
        from: Range<usize>,
        to: Range<usize>,
        u_from: &[C64],
    ) -> Result<Vec<C64>, OperatorError> {
        self.check_range(axis, &from)?;
        self.check_range(axis, &to)?;
        let plane = self.len() / self.dims[axis];
        if u_from.len() != plane * from.len() {
            return Err(OperatorError::Length {
                expected: plane * from.len(),
                got: u_from.len(),
            });
        }
        let mut out = vec![ZERO; plane * to.len()];
        // (row layer in `to`, column layer in `from`, coefficients of the row)
        let (row_layer, col_layer, coeffs) = if from.end == to.start {
            (0, from.len() - 1, &self.minus[axis])
        } else if to.end == from.start {
            (to.len() - 1, 0, &self.plus[axis])
        } else {
            return Err(OperatorError::NotAdjacent { from, to });
        };
        let parent_row = to.start + row_layer;
        let sub_to = self.layer_dims(axis, to.len());
        let sub_from = self.layer_dims(axis, from.len());
        let plane_dims = self.layer_dims(axis, 1);
        let [n1, n2, _] = self.dims;
        for k in 0..plane_dims[2] {
            for j in 0..plane_dims[1] {
                for i in 0..plane_dims[0] {
                    let mut p = [i, j, k];
                    p[axis] = parent_row;
                    let idx = p[0] + n1 * (p[1] + n2 * p[2]);
                    p[axis] = row_layer;
                    let r = p[0] + sub_to[0] * (p[1] + sub_to[1] * p[2]);
                    p[axis] = col_layer;
                    let c = p[0] + sub_from[0] * (p[1] + sub_from[1] * p[2]);
                    out[r] = coeffs[idx] * u_from[c];
                }
            }
        }
        Ok(out)
    }
}

// Moving-PML damping at signed distance `units` (in grid units) from its ghost plane.
fn damp_from(units: f64, h: f64, constant: f64, eta: f64) -> f64 {
    if units <= 0.0 {
        return 0.0;
    }
    damping(units * h, constant, eta)
}

fn restrict<T: Copy>(
    dims: [usize; 3],
    axis: usize,
    src: &[T],
    len: usize,
    parent_layer: impl Fn(usize) -> usize,
) -> Vec<T> {
    let mut sub = dims;
    sub[axis] = len;
    let mut out = Vec::with_capacity(sub.iter().product());
    for k in 0..sub[2] {
        for j in 0..sub[1] {
            for i in 0..sub[0] {
                let mut p = [i, j, k];
                p[axis] = parent_layer(p[axis]);
                out.push(src[p[0] + dims[0] * (p[1] + dims[1] * p[2])]);
            }
        }
    }
    out
}

pub fn gather_layers(dims: [usize; 3], axis: usize, range: Range<usize>, field: &[C64]) -> Vec<C64> {
    let start = range.start;
    restrict(dims, axis, field, range.len(), |l| start + l)
}

pub fn scatter_layers(
    dims: [usize; 3],
    axis: usize,
    range: Range<usize>,
    block: &[C64],
    field: &mut [C64],
) {
    let mut sub = dims;
    sub[axis] = range.len();
    let mut src = block.iter();
    for k in 0..sub[2] {
        for j in 0..sub[1] {
            for i in 0..sub[0] {
                let mut p = [i, j, k];
                p[axis] += range.start;
                field[p[0] + dims[0] * (p[1] + dims[1] * p[2])] = *src.next().unwrap();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{make_velocity, FaceFlags, VelocityKind, VelocityParams};

    fn setup(n: usize, faces: FaceFlags, kind: VelocityKind) -> (Grid3D, StencilCoefficients) {
        let grid = Grid3D::new(n, 9.0).unwrap();
        let vel = make_velocity(kind, &grid, &VelocityParams::default()).unwrap();
        let pml = PmlProfile::new(25.0, 3, &grid, faces).unwrap();
        (grid, assemble(&grid, &vel, &pml).unwrap())
    }

    fn pseudo_random(len: usize, seed: u64) -> Vec<C64> {
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        (0..len).map(|_| C64::new(next(), next())).collect()
    }

    #[test]
    fn undamped_constant_medium_is_the_laplacian() {
        let (grid, a) = setup(6, FaceFlags::all_dirichlet(), VelocityKind::Constant);
        let h2 = grid.h() * grid.h();
        let idx = grid.index(2, 3, 2);
        let expected = -6.0 / h2 + grid.omega().powi(2);
        assert!((a.center()[idx] - C64::new(expected, 0.0)).norm() < 1e-9);
        for axis in 0..3 {
            assert!((a.minus(axis)[idx] - C64::new(1.0 / h2, 0.0)).norm() < 1e-9);
            assert!((a.plus(axis)[idx] - C64::new(1.0 / h2, 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn dirichlet_face_drops_the_neighbor_only() {
        let (grid, a) = setup(6, FaceFlags::all_dirichlet(), VelocityKind::Constant);
        let h2 = grid.h() * grid.h();
        let idx = grid.index(0, 3, 5);
        assert_eq!(a.minus(X1)[idx], ZERO);
        assert_eq!(a.plus(X3)[idx], ZERO);
        let expected = -6.0 / h2 + grid.omega().powi(2);
        assert!((a.center()[idx] - C64::new(expected, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn apply_is_linear() {
        let (_, a) = setup(5, FaceFlags::all_pml(), VelocityKind::Lens);
        let u = pseudo_random(a.len(), 1);
        let v = pseudo_random(a.len(), 2);
        let (alpha, beta) = (C64::new(0.3, -1.2), C64::new(-2.0, 0.5));
        let combo: Vec<C64> = u.iter().zip(&v).map(|(x, y)| alpha * x + beta * y).collect();
        let lhs = a.apply(&combo).unwrap();
        let au = a.apply(&u).unwrap();
        let av = a.apply(&v).unwrap();
        let scale = lhs.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for i in 0..a.len() {
            assert!((lhs[i] - (alpha * au[i] + beta * av[i])).norm() <= 1e-13 * scale);
        }
        assert!(a.apply(&vec![ZERO; a.len()]).unwrap().iter().all(|z| *z == ZERO));
        assert!(a.apply(&u[1..]).is_err());
    }

    #[test]
    fn boundary_block_is_a_plain_restriction() {
        let (_, a) = setup(8, FaceFlags::all_pml(), VelocityKind::Lens);
        let spec = SubproblemSpec {
            axis: X3,
            owned: 0..3,
            padding: Padding::None,
            aux_layers: 2,
            exact: false,
        };
        let sub = a.extract_outer(&spec, 25.0).unwrap();
        assert_eq!(sub.dims(), [8, 8, 3]);
        let plane = 64;
        for idx in 0..sub.len() {
            let k = idx / plane;
            // the far face of the slab is a Dirichlet cut, everything else is unchanged
            assert_eq!(sub.center()[idx], a.center()[idx]);
            for axis in 0..2 {
                assert_eq!(sub.minus(axis)[idx], a.minus(axis)[idx]);
                assert_eq!(sub.plus(axis)[idx], a.plus(axis)[idx]);
            }
            assert_eq!(sub.minus(X3)[idx], a.minus(X3)[idx]);
            if k < 2 {
                assert_eq!(sub.plus(X3)[idx], a.plus(X3)[idx]);
            }
        }
    }

    #[test]
    fn padded_slab_keeps_in_plane_coefficients() {
        let (_, a) = setup(10, FaceFlags::all_pml(), VelocityKind::Lens);
        let spec = SubproblemSpec {
            axis: X3,
            owned: 5..7,
            padding: Padding::Low,
            aux_layers: 2,
            exact: false,
        };
        let sub = a.extract_outer(&spec, 25.0).unwrap();
        assert_eq!(sub.dims(), [10, 10, 4]);
        assert_eq!(spec.owned_offset(10), 2);
        let plane = 100;
        for layer in 0..4 {
            let parent = 3 + layer;
            for p in 0..plane {
                let s = layer * plane + p;
                let q = parent * plane + p;
                for axis in 0..2 {
                    assert_eq!(sub.minus(axis)[s], a.minus(axis)[q]);
                    assert_eq!(sub.plus(axis)[s], a.plus(axis)[q]);
                }
                assert_eq!(sub.k2()[s], a.k2()[q]);
            }
        }
        // the moving layer damps the aux side only
        assert!(sub.has_low_pml(X3));
        assert!(sub.damping(X3).node[2..].iter().all(|&s| s == 0.0));
        assert!(sub.damping(X3).node[0] > 0.0);
    }

    #[test]
    fn moving_profile_is_translated_boundary_profile() {
        let (grid, a) = setup(12, FaceFlags::two_faces(), VelocityKind::Constant);
        // aux = boundary layers: the moving PML reproduces the boundary one
        let spec = SubproblemSpec {
            axis: X3,
            owned: 7..9,
            padding: Padding::Low,
            aux_layers: 3,
            exact: false,
        };
        let sub = a.extract(&spec, 25.0).unwrap();
        let parent = a.damping(X3);
        for l in 0..4 {
            assert!((sub.damping(X3).node[l] - parent.node[l]).abs() < 1e-9 * parent.half[0]);
        }
        for l in 0..=4 {
            assert!((sub.damping(X3).half[l] - parent.half[l]).abs() < 1e-9 * parent.half[0]);
        }
        assert_eq!(grid.n(), 12);
    }

    #[test]
    fn exact_padding_extends_to_the_edge() {
        let (_, a) = setup(9, FaceFlags::two_faces(), VelocityKind::Lens);
        let spec = SubproblemSpec {
            axis: X2,
            owned: 4..6,
            padding: Padding::Low,
            aux_layers: 1,
            exact: true,
        };
        let sub = a.extract_inner(&spec, 25.0).unwrap();
        assert_eq!(sub.dims(), [9, 6, 9]);
        assert_eq!(spec.owned_offset(9), 4);
        let both = SubproblemSpec {
            padding: Padding::Both,
            ..spec
        };
        assert_eq!(both.span(9), (0, 9));
    }

    #[test]
    fn extraction_rejects_bad_requests() {
        let (_, a) = setup(6, FaceFlags::all_pml(), VelocityKind::Constant);
        let mut spec = SubproblemSpec {
            axis: X3,
            owned: 4..7,
            padding: Padding::Low,
            aux_layers: 2,
            exact: false,
        };
        assert!(matches!(a.extract(&spec, 25.0), Err(OperatorError::Range { .. })));
        spec.owned = 3..5;
        spec.aux_layers = 0;
        assert!(a.extract(&spec, 25.0).is_err());
        spec.aux_layers = 1;
        assert!(a.extract_inner(&spec, 25.0).is_err());
    }

    #[test]
    fn coupling_touches_the_facing_layer() {
        let (_, a) = setup(6, FaceFlags::all_pml(), VelocityKind::Lens);
        let plane = 36;
        let u = pseudo_random(plane * 2, 3);
        let out = a.couple(X3, 1..3, 3..5, &u).unwrap();
        assert!(out[plane..].iter().all(|z| *z == ZERO));
        assert!(out[..plane].iter().any(|z| *z != ZERO));
        let down = a.couple(X3, 3..5, 1..3, &u).unwrap();
        assert!(down[..plane].iter().all(|z| *z == ZERO));
        let zero = a.couple(X3, 1..3, 3..5, &vec![ZERO; 2 * plane]).unwrap();
        assert!(zero.iter().all(|z| *z == ZERO));
        assert!(matches!(
            a.couple(X3, 0..2, 3..5, &u),
            Err(OperatorError::NotAdjacent { .. })
        ));
    }

    #[test]
    fn gather_scatter_round_trip() {
        let dims = [3, 4, 5];
        let field = pseudo_random(60, 9);
        for axis in 0..3 {
            let block = gather_layers(dims, axis, 1..3, &field);
            let mut copy = vec![ZERO; 60];
            scatter_layers(dims, axis, 1..3, &block, &mut copy);
            let again = gather_layers(dims, axis, 1..3, &copy);
            assert_eq!(block, again);
        }
    }
}
