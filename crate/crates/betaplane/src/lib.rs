//! Pseudospectral solver and attractor-analysis toolkit for the non-dimensional
//! 2D rotating Navier-Stokes equations on the beta-plane, in vorticity form:
//!
//! ```text
//!     dw/dt + B(w, w) + L_eps w = f + nu * Laplacian(w)
//! ```
//!
//! posed on `Omega = [0, 2*pi] x [-pi, pi]` with integer wavevectors, mean-free
//! real fields, and the symmetry class `coeff(k1, -k2) = -coeff(k1, k2)`
//! (oddness in the latitude coordinate). Here
//!
//! * `B(a, b) = -grad_perp (-Laplacian)^{-1} a . grad b` is the advection
//!   bilinear form (velocity of `a` advecting `b`),
//! * `L_eps = -(1/eps) d_x (-Laplacian)^{-1}` is the Coriolis operator of the
//!   beta-plane, a skew-adjoint Fourier multiplier `-(i/eps) lambda_k` with
//!   `lambda_k = k1 / |k|^2`,
//! * `f = G * grad_perp . F` is a time-independent forcing with `||F|| = 1`,
//!   so `G` is the Grashof number.
//!
//! Module map:
//!
//! * [`spectral`]: lattices, fields, transforms, and the elementary operators
//!   (projections, inverse Laplacian, velocity, bilinear form, semigroup).
//! * [`dynamics`]: forcing presets, right-hand side assembly, and the
//!   integrating-factor RK4 time stepper with exact per-mode linear part.
//! * [`tangent`]: linearized flow for N tangent vectors, volume elements,
//!   trace decompositions, Lyapunov exponents, and the smallest-N search.
//! * [`limit1d`]: the one-dimensional zonal limit system (heat equation),
//!   the zonal error field, steady states, and H1 distances.
//! * [`diagnostics`]: running time averages, energy-budget checks, and
//!   power-law regression for scaling experiments.
//! * [`checkpoint`]: binary checkpoint persistence.

pub mod checkpoint;
pub mod diagnostics;
pub mod dynamics;
pub mod limit1d;
pub mod spectral;
pub mod tangent;
pub mod tol;

pub use spectral::{make_lattice, Lattice, SpectralField};

/// Complex scalar used throughout the spectral representation (re-exported
/// so downstream crates can construct coefficients and symbols).
pub use rustfft::num_complex::Complex64;

/// Errors produced by the solver and analysis routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid lattice size ({nx}, {ny}): {reason}")]
    Lattice { nx: usize, ny: usize, reason: &'static str },
    #[error("lattice mismatch: ({0}, {1}) vs ({2}, {3})")]
    LatticeMismatch(usize, usize, usize, usize),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("advective CFL violation: dt = {dt:.3e} exceeds bound {bound:.3e}; suggested dt = {suggested:.3e}")]
    CflViolation { dt: f64, bound: f64, suggested: f64 },
    #[error("tangent bundle rank deficiency in direction {direction}: stretch {stretch:.3e}")]
    RankDeficient { direction: usize, stretch: f64 },
    #[error("tangent bundle time misalignment: state t = {state_t}, bundle t = {bundle_t}")]
    TimeMisaligned { state_t: f64, bundle_t: f64 },
    #[error("trace evaluation requires a freshly reorthonormalized basis")]
    StaleBasis,
    #[error("time samples must be strictly increasing: got {t} after {t_prev}")]
    NonMonotoneTime { t_prev: f64, t: f64 },
    #[error("power-law fit needs at least 3 strictly positive pairs; got {0} usable pairs")]
    InsufficientFitData(usize),
    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
