//! Numerical tolerances used by library-level checks and defaults.
//!
//! Each constant documents the mechanism that sets its scale so that a change
//! is a conscious decision, not a knob to turn until tests pass.

/// Identities that hold to rounding error (conjugate-pair cancellations,
/// exactly representable algebra, quadrature of fully resolved trig
/// polynomials). Scale: a few hundred ulps around magnitudes of order one.
pub const EXACT: f64 = 1e-12;

/// Agreement between a spectral computation and an independently coded
/// oracle for the same quantity, allowing accumulation over one transform
/// round trip at moderate resolution.
pub const SPECTRAL: f64 = 1e-10;

/// Relative tolerance for trace-identity residuals at analysis resolutions:
/// linear-algebra identities evaluated through grids accumulate O(N_modes)
/// rounding on quantities that need not be individually small.
pub const TRACE_REL: f64 = 1e-8;

/// Relative tolerance for second-order finite-difference validation of
/// analytic derivatives (projector derivative, volume/trace duality) at the
/// step sizes used by the checks: truncation O(dt^2) dominates rounding.
pub const FD_CHECK: f64 = 1e-3;

/// Residual norm below which a state is accepted as stationary when solving
/// for steady states by time marching.
pub const STATIONARY_RHS: f64 = 1e-9;

/// Stretch factor below which a tangent direction is considered collapsed:
/// unit vectors contracting to this scale within one reorthonormalization
/// stride have lost all significant digits.
pub const RANK_DEGENERATE: f64 = 1e-14;

/// Advective CFL safety factor: the integrating-factor RK4 stability region
/// covers |dt * u_max / h| well above one for pure advection, but keeping the
/// Courant number at half the grid-crossing rate keeps the nonlinear term
/// accurate, not merely stable.
pub const CFL_SAFETY: f64 = 0.5;
