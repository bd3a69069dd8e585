//! Sweeping preconditioners for the 3D Helmholtz equation on the unit cube.
//!
//! The discretized operator is the nonsymmetric 7-point finite-difference
//! stencil with complex coordinate stretching inside perfectly matched layers.
//! Two preconditioners are provided, both driven by restarted GMRES:
//!
//! - [`sweep::NonRecursiveSweepPreconditioner`] sweeps along `x3` and solves
//!   each PML-padded quasi-2D slab exactly;
//! - [`sweep::RecursiveSweepPreconditioner`] additionally sweeps every slab
//!   along `x2`, so only PML-padded quasi-1D problems are ever factorized.
//!
//! Fields are stored with `x1` varying fastest, then `x2`, then `x3`.

pub mod direct;
pub mod experiment;
pub mod krylov;
pub mod media;
pub mod operator;
pub mod sweep;

pub use num_complex::Complex64 as C64;
