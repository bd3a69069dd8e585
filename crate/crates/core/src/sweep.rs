//! Moving-PML sweeping preconditioners.
//!
//! A sweep tiles one axis into layer groups, eliminates them in order and
//! approximates each Schur complement inverse by the solve of a subproblem
//! closed off with a moving PML:
//!
//! ```text
//! forward:  u_g = T_g (f_g - A_{g,p} u_p)      p = already eliminated neighbors
//! backward: u_g = u_g - T_g (A_{g,q} u_q)      q = neighbor towards the middle
//! ```
//!
//! [`RecursiveSweepPreconditioner`] sweeps along `x3` and realizes each `T_g`
//! with an [`InnerSweepPreconditioner`] that sweeps the quasi-2D slab along
//! `x2` and solves quasi-1D problems by block LDU.
//! [`NonRecursiveSweepPreconditioner`] solves the slabs exactly instead.

use std::ops::Range;

use thiserror::Error;

use crate::direct::{BandedBlockFactorization, DirectError, ExactFactorization};
use crate::media::DEFAULT_PML_CONSTANT;
use crate::operator::{
    gather_layers, scatter_layers, OperatorError, Padding, StencilCoefficients, SubproblemSpec,
    X2, X3,
};
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("invalid sweep configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("factorization of subproblem {group} failed: {source}")]
    Factorization { group: usize, source: DirectError },
    #[error("vector of length {got} where {expected} was expected")]
    Length { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fronts {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    MovingPml,
    /// Every subproblem spans the whole eliminated region and is solved exactly.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub pml_constant: f64,
    pub boundary_layers: usize,
    pub aux_layers: usize,
    pub group_size: usize,
    pub fronts: Fronts,
    pub mode: SweepMode,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            pml_constant: DEFAULT_PML_CONSTANT,
            boundary_layers: 9,
            aux_layers: 5,
            group_size: 4,
            fronts: Fronts::Two,
            mode: SweepMode::MovingPml,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), SweepError> {
        if !(self.pml_constant.is_finite() && self.pml_constant > 0.0) {
            return Err(SweepError::Config("PML constant must be positive".into()));
        }
        if self.boundary_layers == 0 || self.group_size == 0 {
            return Err(SweepError::Config(
                "boundary layers and group size must be at least 1".into(),
            ));
        }
        if self.mode == SweepMode::MovingPml && self.aux_layers == 0 {
            return Err(SweepError::Config(
                "the moving PML needs at least one layer".into(),
            ));
        }
        Ok(())
    }
}

/// Layer groups along a sweep axis and their elimination order.
///
/// With one front the groups are eliminated bottom to top. With two fronts
/// both ends are eliminated towards a middle group, which is last and is
/// padded on both sides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tiling {
    groups: Vec<Range<usize>>,
    middle: usize,
}

impl Tiling {
    pub fn new(n: usize, boundary: usize, group: usize, fronts: Fronts) -> Self {
        let boundary = boundary.max(1);
        let group = group.max(1);
        if fronts == Fronts::Two && n >= 2 * boundary + group {
            let count = (n - 2 * boundary) / group;
            let extra = (n - 2 * boundary) - count * group;
            let mid = (count - 1) / 2;
            let mut groups = vec![0..boundary];
            let mut start = boundary;
            for g in 0..count {
                let len = if g == mid { group + extra } else { group };
                groups.push(start..start + len);
                start += len;
            }
            groups.push(start..n);
            return Self {
                groups,
                middle: mid + 1,
            };
        }
        if n < boundary + group {
            return Self {
                groups: vec![0..n],
                middle: 0,
            };
        }
        let mut groups = vec![0..boundary];
        let mut start = boundary;
        while start + 2 * group <= n {
            groups.push(start..start + group);
            start += group;
        }
        if start < n {
            groups.push(start..n);
        }
        let middle = groups.len() - 1;
        Self { groups, middle }
    }

    pub fn groups(&self) -> &[Range<usize>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn middle(&self) -> usize {
        self.middle
    }

    /// Group counts of the low and high fronts; the middle group belongs to the low one.
    pub fn front_counts(&self) -> (usize, usize) {
        (self.middle + 1, self.len() - self.middle - 1)
    }

    pub fn order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.middle).collect();
        order.extend((self.middle + 1..self.len()).rev());
        order.push(self.middle);
        order
    }

    /// Side(s) of group `g` facing already eliminated groups.
    pub fn padding(&self, g: usize) -> Padding {
        let last = self.len() - 1;
        let (low, high) = match g.cmp(&self.middle) {
            std::cmp::Ordering::Less => (g > 0, false),
            std::cmp::Ordering::Greater => (false, g < last),
            std::cmp::Ordering::Equal => (g > 0, g < last),
        };
        match (low, high) {
            (false, false) => Padding::None,
            (true, false) => Padding::Low,
            (false, true) => Padding::High,
            (true, true) => Padding::Both,
        }
    }

    /// Neighbors of `g` eliminated before it.
    fn eliminated_neighbors(&self, g: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(2);
        if g > 0 && g <= self.middle {
            out.push(g - 1);
        }
        if g + 1 < self.len() && g >= self.middle {
            out.push(g + 1);
        }
        out
    }

    /// Neighbor of `g` on the side of the middle group.
    fn inward_neighbor(&self, g: usize) -> Option<usize> {
        match g.cmp(&self.middle) {
            std::cmp::Ordering::Less => Some(g + 1),
            std::cmp::Ordering::Greater => Some(g - 1),
            std::cmp::Ordering::Equal => None,
        }
    }
}

/// Tiling plus subproblem descriptions along one axis of a box.
#[derive(Debug, Clone, PartialEq, Eq)]
struct SweepLayout {
    axis: usize,
    dims: [usize; 3],
    tiling: Tiling,
    specs: Vec<SubproblemSpec>,
}

impl SweepLayout {
    fn new(dims: [usize; 3], axis: usize, cfg: &SweepConfig) -> Self {
        let tiling = Tiling::new(dims[axis], cfg.boundary_layers, cfg.group_size, cfg.fronts);
        let specs = (0..tiling.len())
            .map(|g| SubproblemSpec {
                axis,
                owned: tiling.groups[g].clone(),
                padding: tiling.padding(g),
                aux_layers: cfg.aux_layers,
                exact: cfg.mode == SweepMode::Exact,
            })
            .collect();
        Self {
            axis,
            dims,
            tiling,
            specs,
        }
    }

    fn sub_dims(&self, g: usize) -> [usize; 3] {
        let mut dims = self.dims;
        dims[self.axis] = self.specs[g].span(self.dims[self.axis]).1;
        dims
    }

    /// `T_g` applied to values on the owned layers of group `g`.
    fn group_solve<F>(&self, g: usize, rhs: &[C64], solve: &F) -> Result<Vec<C64>, SweepError>
    where
        F: Fn(usize, &mut [C64]) -> Result<(), SweepError>,
    {
        let spec = &self.specs[g];
        let dims = self.sub_dims(g);
        let offset = spec.owned_offset(self.dims[self.axis]);
        let owned = offset..offset + spec.owned.len();
        let mut v = vec![C64::new(0.0, 0.0); dims.iter().product()];
        scatter_layers(dims, self.axis, owned.clone(), rhs, &mut v);
        solve(g, &mut v)?;
        Ok(gather_layers(dims, self.axis, owned, &v))
    }

    fn apply<F>(&self, a: &StencilCoefficients, f: &[C64], solve: F) -> Result<Vec<C64>, SweepError>
    where
        F: Fn(usize, &mut [C64]) -> Result<(), SweepError>,
    {
        if f.len() != a.len() {
            return Err(SweepError::Length {
                expected: a.len(),
                got: f.len(),
            });
        }
        let axis = self.axis;
        let groups = &self.tiling.groups;
        let mut parts: Vec<Vec<C64>> = vec![Vec::new(); groups.len()];
        for g in self.tiling.order() {
            let mut r = gather_layers(self.dims, axis, groups[g].clone(), f);
            for p in self.tiling.eliminated_neighbors(g) {
                let c = a.couple(axis, groups[p].clone(), groups[g].clone(), &parts[p])?;
                for (x, y) in r.iter_mut().zip(&c) {
                    *x -= y;
                }
            }
            parts[g] = self.group_solve(g, &r, &solve)?;
        }
        for g in self.tiling.order().into_iter().rev() {
            let Some(q) = self.tiling.inward_neighbor(g) else {
                continue;
            };
            let c = a.couple(axis, groups[q].clone(), groups[g].clone(), &parts[q])?;
            let correction = self.group_solve(g, &c, &solve)?;
            for (x, y) in parts[g].iter_mut().zip(&correction) {
                *x -= y;
            }
        }
        let mut u = vec![C64::new(0.0, 0.0); a.len()];
        for (g, part) in parts.iter().enumerate() {
            scatter_layers(self.dims, axis, groups[g].clone(), part, &mut u);
        }
        Ok(u)
    }
}

/// A fixed linear approximation of `A^-1`.
pub trait Preconditioner {
    fn len(&self) -> usize;
    fn apply(&self, f: &[C64]) -> Result<Vec<C64>, SweepError>;
    fn memory_bytes(&self) -> usize;
}

/// `M = I`.
#[derive(Debug, Clone, Copy)]
pub struct IdentityPreconditioner {
    len: usize,
}

impl IdentityPreconditioner {
    pub fn new(len: usize) -> Self {
        Self { len }
    }
}

impl Preconditioner for IdentityPreconditioner {
    fn len(&self) -> usize {
        self.len
    }

    fn apply(&self, f: &[C64]) -> Result<Vec<C64>, SweepError> {
        if f.len() != self.len {
            return Err(SweepError::Length {
                expected: self.len,
                got: f.len(),
            });
        }
        Ok(f.to_vec())
    }

    fn memory_bytes(&self) -> usize {
        0
    }
}

/// Sweep of a quasi-2D slab along `x2` with block-LDU solves of the quasi-1D pieces.
#[derive(Debug, Clone)]
pub struct InnerSweepPreconditioner {
    slab: StencilCoefficients,
    layout: SweepLayout,
    factors: Vec<BandedBlockFactorization>,
}

pub fn setup_inner(
    slab: StencilCoefficients,
    cfg: &SweepConfig,
) -> Result<InnerSweepPreconditioner, SweepError> {
    InnerSweepPreconditioner::new(slab, cfg)
}

impl InnerSweepPreconditioner {
    pub fn new(slab: StencilCoefficients, cfg: &SweepConfig) -> Result<Self, SweepError> {
        cfg.validate()?;
        let layout = SweepLayout::new(slab.dims(), X2, cfg);
        if cfg.mode == SweepMode::MovingPml && layout.tiling.len() > 1 && !slab.has_low_pml(X2) {
            return Err(SweepError::Config("the slab needs a PML at x2 = 0".into()));
        }
        let mut factors = Vec::with_capacity(layout.specs.len());
        for (g, spec) in layout.specs.iter().enumerate() {
            let piece = slab.extract_inner(spec, cfg.pml_constant)?;
            let fact = BandedBlockFactorization::new(&piece)
                .map_err(|source| SweepError::Factorization { group: g, source })?;
            factors.push(fact);
        }
        Ok(Self {
            slab,
            layout,
            factors,
        })
    }

    pub fn slab(&self) -> &StencilCoefficients {
        &self.slab
    }

    pub fn tiling(&self) -> &Tiling {
        &self.layout.tiling
    }

    pub fn factors(&self) -> &[BandedBlockFactorization] {
        &self.factors
    }
}

impl Preconditioner for InnerSweepPreconditioner {
    fn len(&self) -> usize {
        self.slab.len()
    }

    fn apply(&self, g: &[C64]) -> Result<Vec<C64>, SweepError> {
        self.layout.apply(&self.slab, g, |group, v| {
            self.factors[group]
                .solve_in_place(v)
                .map_err(|source| SweepError::Factorization { group, source })
        })
    }

    fn memory_bytes(&self) -> usize {
        self.slab.memory_bytes() + self.factors.iter().map(|f| f.memory_bytes()).sum::<usize>()
    }
}

pub fn apply_inner(pc: &InnerSweepPreconditioner, g: &[C64]) -> Result<Vec<C64>, SweepError> {
    pc.apply(g)
}

fn require_pml(a: &StencilCoefficients, cfg: &SweepConfig) -> Result<(), SweepError> {
    if cfg.mode == SweepMode::MovingPml && !(a.has_low_pml(X3) && a.has_low_pml(X2)) {
        return Err(SweepError::Config(
            "the sweeping preconditioners need PML at least on the x2 = 0 and x3 = 0 faces".into(),
        ));
    }
    Ok(())
}

/// Sweep along `x3` whose slab solves are inner sweeps, each applied once.
#[derive(Debug, Clone)]
pub struct RecursiveSweepPreconditioner {
    a: StencilCoefficients,
    layout: SweepLayout,
    inner: Vec<InnerSweepPreconditioner>,
}

pub fn setup_recursive(
    a: &StencilCoefficients,
    cfg: &SweepConfig,
) -> Result<RecursiveSweepPreconditioner, SweepError> {
    RecursiveSweepPreconditioner::new(a, cfg)
}

impl RecursiveSweepPreconditioner {
    pub fn new(a: &StencilCoefficients, cfg: &SweepConfig) -> Result<Self, SweepError> {
        cfg.validate()?;
        require_pml(a, cfg)?;
        let layout = SweepLayout::new(a.dims(), X3, cfg);
        let mut inner = Vec::with_capacity(layout.specs.len());
        for spec in &layout.specs {
            let slab = a.extract_outer(spec, cfg.pml_constant)?;
            inner.push(InnerSweepPreconditioner::new(slab, cfg)?);
        }
        Ok(Self {
            a: a.clone(),
            layout,
            inner,
        })
    }

    pub fn tiling(&self) -> &Tiling {
        &self.layout.tiling
    }

    pub fn inner(&self) -> &[InnerSweepPreconditioner] {
        &self.inner
    }
}

impl Preconditioner for RecursiveSweepPreconditioner {
    fn len(&self) -> usize {
        self.a.len()
    }

    fn apply(&self, f: &[C64]) -> Result<Vec<C64>, SweepError> {
        self.layout.apply(&self.a, f, |g, v| {
            let w = self.inner[g].apply(v)?;
            v.copy_from_slice(&w);
            Ok(())
        })
    }

    /// Bytes held by the slabs and their factorizations; the operator copy is excluded.
    fn memory_bytes(&self) -> usize {
        self.inner.iter().map(|p| p.memory_bytes()).sum()
    }
}

pub fn apply_recursive(pc: &RecursiveSweepPreconditioner, f: &[C64]) -> Result<Vec<C64>, SweepError> {
    pc.apply(f)
}

/// Sweep along `x3` with exact slab solves.
#[derive(Debug, Clone)]
pub struct NonRecursiveSweepPreconditioner {
    a: StencilCoefficients,
    layout: SweepLayout,
    factors: Vec<ExactFactorization>,
}

pub fn setup_nonrecursive(
    a: &StencilCoefficients,
    cfg: &SweepConfig,
) -> Result<NonRecursiveSweepPreconditioner, SweepError> {
    NonRecursiveSweepPreconditioner::new(a, cfg)
}

impl NonRecursiveSweepPreconditioner {
    pub fn new(a: &StencilCoefficients, cfg: &SweepConfig) -> Result<Self, SweepError> {
        cfg.validate()?;
        require_pml(a, cfg)?;
        let layout = SweepLayout::new(a.dims(), X3, cfg);
        let mut factors = Vec::with_capacity(layout.specs.len());
        for (g, spec) in layout.specs.iter().enumerate() {
            let slab = a.extract_outer(spec, cfg.pml_constant)?;
            let fact = ExactFactorization::new(&slab)
                .map_err(|source| SweepError::Factorization { group: g, source })?;
            factors.push(fact);
        }
        Ok(Self {
            a: a.clone(),
            layout,
            factors,
        })
    }

    pub fn tiling(&self) -> &Tiling {
        &self.layout.tiling
    }
}

impl Preconditioner for NonRecursiveSweepPreconditioner {
    fn len(&self) -> usize {
        self.a.len()
    }

    fn apply(&self, f: &[C64]) -> Result<Vec<C64>, SweepError> {
        self.layout.apply(&self.a, f, |group, v| {
            self.factors[group]
                .solve_in_place(v)
                .map_err(|source| SweepError::Factorization { group, source })
        })
    }

    fn memory_bytes(&self) -> usize {
        self.factors.iter().map(|f| f.memory_bytes()).sum()
    }
}

pub fn apply_nonrecursive(
    pc: &NonRecursiveSweepPreconditioner,
    f: &[C64],
) -> Result<Vec<C64>, SweepError> {
    pc.apply(f)
}
