//! Computational grid, PML damping profiles, velocity models and sources.

pub mod hsw;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::C64;

/// Damping constant used when a configuration does not set one.
pub const DEFAULT_PML_CONSTANT: f64 = 25.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MediaError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("unknown {what} kind `{name}`")]
    UnknownKind { what: &'static str, name: String },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    Dimensions { expected: [usize; 3], got: [usize; 3] },
}

/// Uniform grid of `n` interior points per axis on the unit cube, spacing `1/(n+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid3D {
    n: usize,
    omega: f64,
    q: Option<usize>,
}

impl Grid3D {
    pub fn new(n: usize, omega: f64) -> Result<Self, MediaError> {
        if n == 0 {
            return Err(MediaError::Grid("n must be at least 1".into()));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(MediaError::Grid(format!("omega must be positive, got {omega}")));
        }
        Ok(Self { n, omega, q: None })
    }

    /// Grid for wave number `omega_over_2pi` with `q` points per typical wavelength.
    ///
    /// `n + 1 = round(q * omega / 2pi)`, so a wavelength `2pi/omega` spans `q` cells.
    pub fn from_wavelength(omega_over_2pi: f64, q: usize) -> Result<Self, MediaError> {
        if !(omega_over_2pi.is_finite() && omega_over_2pi > 0.0) {
            return Err(MediaError::Grid(format!(
                "omega/2pi must be positive, got {omega_over_2pi}"
            )));
        }
        if q == 0 {
            return Err(MediaError::Grid("q must be at least 1".into()));
        }
        let cells = (q as f64 * omega_over_2pi).round() as usize;
        if cells < 2 {
            return Err(MediaError::Grid(format!(
                "q * omega/2pi = {} leaves no interior points",
                q as f64 * omega_over_2pi
            )));
        }
        Ok(Self {
            n: cells - 1,
            omega: 2.0 * PI * omega_over_2pi,
            q: Some(q),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n + 1) as f64
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn q(&self) -> Option<usize> {
        self.q
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.n; 3]
    }

    /// Total number of unknowns, `n^3`.
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of a position given in grid units (node `t` sits at `t + 1`).
    ///
    /// Computed as a quotient so that position `n + 1` maps to exactly 1.
    pub fn coordinate(&self, grid_units: f64) -> f64 {
        grid_units / (self.n + 1) as f64
    }

    /// Coordinate of the 0-based interior node `t`.
    pub fn node(&self, t: usize) -> f64 {
        self.coordinate((t + 1) as f64)
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    pub fn wavelength(&self) -> f64 {
        2.0 * PI / self.omega
    }
}

/// Boundary treatment of one face of the cube.
///
/// Every face carries `u = 0` just outside the grid; a PML face additionally
/// stretches the coordinate normal to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceBoundary {
    Pml,
    Dirichlet,
}

/// Per-face boundary flags, indexed by axis 0..3 for the `x = 0` and `x = 1` faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceFlags {
    pub low: [FaceBoundary; 3],
    pub high: [FaceBoundary; 3],
}

impl FaceFlags {
    pub fn all_pml() -> Self {
        Self {
            low: [FaceBoundary::Pml; 3],
            high: [FaceBoundary::Pml; 3],
        }
    }

    pub fn all_dirichlet() -> Self {
        Self {
            low: [FaceBoundary::Dirichlet; 3],
            high: [FaceBoundary::Dirichlet; 3],
        }
    }

    /// PML on `x2 = 0` and `x3 = 0`, Dirichlet elsewhere.
    pub fn two_faces() -> Self {
        let mut flags = Self::all_dirichlet();
        flags.low[1] = FaceBoundary::Pml;
        flags.low[2] = FaceBoundary::Pml;
        flags
    }
}

/// Quadratic damping profile `sigma(x) = (C/eta) ((x - eta)/eta)^2` on `[0, eta]`.
pub fn damping(x: f64, constant: f64, eta: f64) -> f64 {
    if x < 0.0 || x > eta {
        return 0.0;
    }
    let r = (x - eta) / eta;
    constant / eta * r * r
}

/// Complex stretching `s = (1 + i sigma / omega)^-1`.
pub fn stretch_factor(sigma: f64, omega: f64) -> C64 {
    if sigma == 0.0 {
        return C64::new(1.0, 0.0);
    }
    C64::new(1.0, sigma / omega).inv()
}

/// PML of `layers` grid layers (width `eta = layers * h`) on the flagged faces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmlProfile {
    constant: f64,
    layers: usize,
    eta: f64,
    faces: FaceFlags,
}

impl PmlProfile {
    pub fn new(
        constant: f64,
        layers: usize,
        grid: &Grid3D,
        faces: FaceFlags,
    ) -> Result<Self, MediaError> {
        if !(constant.is_finite() && constant > 0.0) {
            return Err(MediaError::Parameter(format!(
                "PML constant must be positive, got {constant}"
            )));
        }
        let any_pml = faces
            .low
            .iter()
            .chain(faces.high.iter())
            .any(|f| *f == FaceBoundary::Pml);
        if any_pml && layers == 0 {
            return Err(MediaError::Parameter(
                "a PML face needs at least one layer".into(),
            ));
        }
        Ok(Self {
            constant,
            layers,
            eta: grid.coordinate(layers as f64),
            faces,
        })
    }

    /// Profile with no absorbing faces at all.
    pub fn none(grid: &Grid3D) -> Self {
        Self {
            constant: DEFAULT_PML_CONSTANT,
            layers: 0,
            eta: grid.coordinate(0.0),
            faces: FaceFlags::all_dirichlet(),
        }
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn faces(&self) -> FaceFlags {
        self.faces
    }

    pub fn is_pml(&self, axis: usize, high: bool) -> bool {
        let flags = if high { self.faces.high } else { self.faces.low };
        flags[axis] == FaceBoundary::Pml
    }

    /// Damping of the `x = 0` face profile at distance `x` from that face.
    pub fn sigma(&self, x: f64) -> f64 {
        damping(x, self.constant, self.eta)
    }

    /// Damping along `axis` at coordinate `x`, summing both faces of that axis.
    pub fn axis_sigma(&self, axis: usize, x: f64) -> f64 {
        let mut sigma = 0.0;
        if self.is_pml(axis, false) {
            sigma += self.sigma(x);
        }
        if self.is_pml(axis, true) {
            sigma += self.sigma(1.0 - x);
        }
        sigma
    }

    pub fn stretch(&self, axis: usize, x: f64, omega: f64) -> C64 {
        stretch_factor(self.axis_sigma(axis, x), omega)
    }

    /// True when coordinate `x` along `axis` lies strictly inside a PML region.
    pub fn in_layer(&self, axis: usize, x: f64) -> bool {
        (self.is_pml(axis, false) && x < self.eta) || (self.is_pml(axis, true) && x > 1.0 - self.eta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VelocityKind {
    Lens,
    Waveguide,
    Random,
    Constant,
    Custom,
}

impl FromStr for VelocityKind {
    type Err = MediaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lens" | "a" => Ok(Self::Lens),
            "waveguide" | "b" => Ok(Self::Waveguide),
            "random" | "c" => Ok(Self::Random),
            "constant" => Ok(Self::Constant),
            "custom" => Ok(Self::Custom),
            other => Err(MediaError::UnknownKind {
                what: "velocity",
                name: other.to_string(),
            }),
        }
    }
}

impl fmt::Display for VelocityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Lens => "lens",
            Self::Waveguide => "waveguide",
            Self::Random => "random",
            Self::Constant => "constant",
            Self::Custom => "custom",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityParams {
    /// Value of the constant field.
    pub c0: f64,
    /// Seed of the random field; required for [`VelocityKind::Random`].
    pub seed: Option<u64>,
    /// Passes of the separable `[1, 2, 1] / 4` filter applied to the random noise.
    pub smoothing_passes: usize,
}

impl Default for VelocityParams {
    fn default() -> Self {
        Self {
            c0: 1.0,
            seed: None,
            smoothing_passes: 4,
        }
    }
}

/// Wave speed at every grid node, with its bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    dims: [usize; 3],
    values: Vec<f64>,
    kind: VelocityKind,
    c_min: f64,
    c_max: f64,
}

impl VelocityField {
    pub fn from_values(
        dims: [usize; 3],
        values: Vec<f64>,
        kind: VelocityKind,
    ) -> Result<Self, MediaError> {
        if values.len() != dims.iter().product::<usize>() {
            return Err(MediaError::Parameter(format!(
                "{} values for a {dims:?} grid",
                values.len()
            )));
        }
        let mut c_min = f64::INFINITY;
        let mut c_max = 0.0f64;
        for &c in &values {
            if !(c.is_finite() && c > 0.0) {
                return Err(MediaError::Parameter(format!(
                    "velocity must be positive and finite, got {c}"
                )));
            }
            c_min = c_min.min(c);
            c_max = c_max.max(c);
        }
        Ok(Self {
            dims,
            values,
            kind,
            c_min,
            c_max,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> VelocityKind {
        self.kind
    }

    pub fn c_min(&self) -> f64 {
        self.c_min
    }

    pub fn c_max(&self) -> f64 {
        self.c_max
    }
}

fn lens_profile(r2: f64) -> f64 {
    4.0 / 3.0 * (1.0 - 0.5 * (-32.0 * r2).exp())
}

pub fn make_velocity(
    kind: VelocityKind,
    grid: &Grid3D,
    params: &VelocityParams,
) -> Result<VelocityField, MediaError> {
    let n = grid.n();
    let mut values = Vec::with_capacity(grid.len());
    match kind {
        VelocityKind::Constant => {
            if !(params.c0.is_finite() && params.c0 > 0.0) {
                return Err(MediaError::Parameter(format!(
                    "constant velocity must be positive, got {}",
                    params.c0
                )));
            }
            values.resize(grid.len(), params.c0);
        }
        VelocityKind::Lens | VelocityKind::Waveguide => {
            for k in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        let d1 = grid.node(i) - 0.5;
                        let d2 = grid.node(j) - 0.5;
                        let d3 = grid.node(k) - 0.5;
                        let r2 = match kind {
                            VelocityKind::Lens => d1 * d1 + d2 * d2 + d3 * d3,
                            _ => d1 * d1 + d2 * d2,
                        };
                        values.push(lens_profile(r2));
                    }
                }
            }
        }
        VelocityKind::Random => {
            let seed = params.seed.ok_or_else(|| {
                MediaError::Parameter("a random velocity field requires a seed".into())
            })?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut noise: Vec<f64> = (0..grid.len())
                .map(|_| rng.random_range(-1.0..=1.0))
                .collect();
            for _ in 0..params.smoothing_passes {
                for axis in 0..3 {
                    smooth_axis(&mut noise, grid.dims(), axis);
                }
            }
            let peak = noise.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
            values.extend(
                noise
                    .iter()
                    .map(|v| (1.0 + 0.25 * v * scale).clamp(0.5, 2.0)),
            );
        }
        VelocityKind::Custom => {
            return Err(MediaError::Parameter(
                "custom velocity fields are imported, not generated".into(),
            ))
        }
    }
    VelocityField::from_values(grid.dims(), values, kind)
}

// Separable [1, 2, 1] / 4 filter with replicated ends.
fn smooth_axis(field: &mut [f64], dims: [usize; 3], axis: usize) {
    let stride = [1, dims[0], dims[0] * dims[1]][axis];
    let len = dims[axis];
    if len < 2 {
        return;
    }
    let src = field.to_vec();
    for (idx, out) in field.iter_mut().enumerate() {
        let t = (idx / stride) % len;
        let lo = if t == 0 { idx } else { idx - stride };
        let hi = if t + 1 == len { idx } else { idx + stride };
        *out = 0.25 * src[lo] + 0.5 * src[idx] + 0.25 * src[hi];
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceKind {
    PointGaussian,
    WavePacket,
    Delta,
    Custom,
}

impl FromStr for SourceKind {
    type Err = MediaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "point_gaussian" | "a" => Ok(Self::PointGaussian),
            "wave_packet" | "b" => Ok(Self::WavePacket),
            "delta" => Ok(Self::Delta),
            "custom" => Ok(Self::Custom),
            other => Err(MediaError::UnknownKind {
                what: "source",
                name: other.to_string(),
            }),
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PointGaussian => "point_gaussian",
            Self::WavePacket => "wave_packet",
            Self::Delta => "delta",
            Self::Custom => "custom",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceParams {
    /// Gaussian center; defaults depend on the kind.
    pub center: Option<[f64; 3]>,
    /// Propagation direction of the wave packet (normalized on use).
    pub direction: [f64; 3],
    /// Gaussian standard deviation in units of the typical wavelength.
    pub width: Option<f64>,
    /// Grid node of the delta source.
    pub node: [usize; 3],
}

impl Default for SourceParams {
    fn default() -> Self {
        let d = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            center: None,
            direction: [0.0, d, d],
            width: None,
            node: [0, 0, 0],
        }
    }
}

impl SourceKind {
    pub fn default_center(&self) -> [f64; 3] {
        match self {
            Self::WavePacket => [0.5, 0.25, 0.25],
            _ => [0.5, 0.5, 0.25],
        }
    }

    pub fn default_width(&self) -> f64 {
        match self {
            Self::WavePacket => 0.5,
            _ => 0.125,
        }
    }
}

/// Right-hand side at every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceField {
    dims: [usize; 3],
    values: Vec<C64>,
    kind: SourceKind,
}

impl SourceField {
    pub fn from_values(dims: [usize; 3], values: Vec<C64>) -> Result<Self, MediaError> {
        if values.len() != dims.iter().product::<usize>() {
            return Err(MediaError::Parameter(format!(
                "{} values for a {dims:?} grid",
                values.len()
            )));
        }
        Ok(Self {
            dims,
            values,
            kind: SourceKind::Custom,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn kind(&self) -> SourceKind {
        self.kind
    }

    /// Zeroes the source at every node lying inside a PML region.
    pub fn confine_to_interior(&mut self, grid: &Grid3D, pml: &PmlProfile) {
        let n = grid.n();
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let inside = pml.in_layer(0, grid.node(i))
                        || pml.in_layer(1, grid.node(j))
                        || pml.in_layer(2, grid.node(k));
                    if inside {
                        self.values[grid.index(i, j, k)] = C64::new(0.0, 0.0);
                    }
                }
            }
        }
    }
}

pub fn make_source(
    kind: SourceKind,
    grid: &Grid3D,
    params: &SourceParams,
) -> Result<SourceField, MediaError> {
    let n = grid.n();
    let zero = C64::new(0.0, 0.0);
    let mut values = vec![zero; grid.len()];
    match kind {
        SourceKind::Delta => {
            let [i, j, k] = params.node;
            if i >= n || j >= n || k >= n {
                return Err(MediaError::Parameter(format!(
                    "delta node {:?} outside a grid of {n} points per axis",
                    params.node
                )));
            }
            values[grid.index(i, j, k)] = C64::new(1.0, 0.0);
        }
        SourceKind::PointGaussian | SourceKind::WavePacket => {
            let center = params.center.unwrap_or_else(|| kind.default_center());
            if center.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(MediaError::Parameter(format!(
                    "source center {center:?} outside the unit cube"
                )));
            }
            let width = params.width.unwrap_or_else(|| kind.default_width()) * grid.wavelength();
            if !(width.is_finite() && width > 0.0) {
                return Err(MediaError::Parameter(format!("invalid source width {width}")));
            }
            let dir = normalized(params.direction)?;
            let omega = grid.omega();
            for k in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        let d = [
                            grid.node(i) - center[0],
                            grid.node(j) - center[1],
                            grid.node(k) - center[2],
                        ];
                        let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                        let envelope = (-r2 / (2.0 * width * width)).exp();
                        values[grid.index(i, j, k)] = match kind {
                            SourceKind::PointGaussian => C64::new(envelope, 0.0),
                            _ => {
                                let phase = omega * (d[0] * dir[0] + d[1] * dir[1] + d[2] * dir[2]);
                                C64::from_polar(envelope, phase)
                            }
                        };
                    }
                }
            }
        }
        SourceKind::Custom => {
            return Err(MediaError::Parameter(
                "custom sources are imported, not generated".into(),
            ))
        }
    }
    Ok(SourceField {
        dims: grid.dims(),
        values,
        kind,
    })
}

fn normalized(v: [f64; 3]) -> Result<[f64; 3], MediaError> {
    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(MediaError::Parameter(format!("invalid direction {v:?}")));
    }
    Ok([v[0] / norm, v[1] / norm, v[2] / norm])
}
