//! The advection bilinear form `B(a, b) = u_a . grad b` with
//! `u_a = -grad_perp (-Laplacian)^{-1} a`, its interaction coefficients, and
//! its adjoint in the second argument.

use std::sync::Arc;

use rustfft::num_complex::Complex64;

use super::field::SpectralField;
use super::lattice::Lattice;
use super::transform::{to_physical, to_spectral};

const FOUR_PI_SQ: f64 = 4.0 * std::f64::consts::PI * std::f64::consts::PI;

/// Physical-space samples of the velocity `u = -grad_perp (-Laplacian)^{-1} w`
/// induced by a vorticity field, cached for reuse across tangent directions.
pub struct VelocityGrids {
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    /// `max(|u1|, |u2|)` over the grid, for advective CFL control.
    pub max_speed: f64,
}

impl VelocityGrids {
    pub fn of(w: &SpectralField) -> Self {
        // u1 = d/dy (-Lap)^{-1} w, u2 = -d/dx (-Lap)^{-1} w.
        let psi = w.inverse_laplacian();
        let u1 = to_physical(&psi.dy());
        let mut u2g = psi.dx();
        u2g.scale(-1.0);
        let u2 = to_physical(&u2g);
        let max_speed = u1
            .iter()
            .chain(&u2)
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        Self { u1, u2, max_speed }
    }
}

/// Physical-space samples of a gradient `(d/dx b, d/dy b)`.
pub struct GradGrids {
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

impl GradGrids {
    pub fn of(b: &SpectralField) -> Self {
        Self { gx: to_physical(&b.dx()), gy: to_physical(&b.dy()) }
    }
}

/// Velocity grids `(u1, u2)` recovered from a vorticity field.
pub fn velocity_from_vorticity(w: &SpectralField) -> (Vec<f64>, Vec<f64>) {
    let v = VelocityGrids::of(w);
    (v.u1, v.u2)
}

/// `B(a, b)` assembled from precomputed parts: the advecting velocity of the
/// first argument and the gradient of the second. The pointwise product is
/// dealiased back onto the retained set, which makes the quadratic term
/// alias-free under the two-thirds rule.
pub fn b_from_parts(u: &VelocityGrids, g: &GradGrids, lattice: &Arc<Lattice>) -> SpectralField {
    let mut prod = vec![0.0; lattice.grid_len()];
    for i in 0..prod.len() {
        prod[i] = u.u1[i] * g.gx[i] + u.u2[i] * g.gy[i];
    }
    to_spectral(&prod, lattice)
}

/// The advection bilinear form `B(a, b) = u_a . grad b`.
///
/// Purely zonal arguments are transported trivially: `B(zbar, zbar) = 0`
/// exactly in floating point, because the zonal velocity has no meridional
/// component and zonal fields have no zonal gradient.
pub fn bilinear_b(a: &SpectralField, b: &SpectralField) -> SpectralField {
    b_from_parts(&VelocityGrids::of(a), &GradGrids::of(b), a.lattice())
}

/// `(B(a, b), c)` evaluated by grid quadrature given precomputed parts for
/// `a` and `b` and grid samples of `c`. Exact to rounding: the triple
/// product of retained modes has degree at most `3 * keep < n` in each
/// direction, which the rectangle rule integrates exactly.
pub fn advect_inner(
    u: &VelocityGrids,
    g: &GradGrids,
    c_grid: &[f64],
    lattice: &Arc<Lattice>,
) -> f64 {
    let mut acc = 0.0;
    for i in 0..c_grid.len() {
        acc += (u.u1[i] * g.gx[i] + u.u2[i] * g.gy[i]) * c_grid[i];
    }
    acc * FOUR_PI_SQ / lattice.grid_len() as f64
}

/// Quadrature of a grid function over `Omega` (`4 pi^2` times the grid mean).
pub fn grid_integral(grid: &[f64], lattice: &Arc<Lattice>) -> f64 {
    let sum: f64 = grid.iter().sum();
    sum * FOUR_PI_SQ / lattice.grid_len() as f64
}

/// Interaction coefficient of the bilinear form on pure exponentials:
///
/// ```text
///     Gamma_{j k l} = (B(e^{i j.x}, e^{i k.x}), e^{i l.x})
///                   = 4 pi^2 * (j1 k2 - j2 k1) / |j|^2   if l = j + k,
///                     0                                   otherwise.
/// ```
///
/// The value is real; it is returned as a complex number for use in
/// coefficient-space assembly. Panics if `j = 0` (no advecting velocity).
pub fn gamma_coefficient(j: (i64, i64), k: (i64, i64), l: (i64, i64)) -> Complex64 {
    assert!(j != (0, 0), "gamma_coefficient is undefined for j = 0");
    if (j.0 + k.0, j.1 + k.1) != l {
        return Complex64::default();
    }
    let cross = (j.0 * k.1 - j.1 * k.0) as f64;
    let jsq = (j.0 * j.0 + j.1 * j.1) as f64;
    Complex64::new(FOUR_PI_SQ * cross / jsq, 0.0)
}

/// Adjoint of `phi -> B(phi, w)` in its first argument:
///
/// ```text
///     (B(phi, w), chi) = (phi, T_w chi),
///     T_w chi = (-Laplacian)^{-1} [ -d/dy (chi dw/dx) + d/dx (chi dw/dy) ].
/// ```
///
/// `grad_w` must hold the gradient grids of `w` on the same lattice as `chi`.
pub fn advection_transpose(
    chi: &SpectralField,
    grad_w: &GradGrids,
    lattice: &Arc<Lattice>,
) -> SpectralField {
    let chi_grid = to_physical(chi);
    let mut v1 = vec![0.0; chi_grid.len()];
    let mut v2 = vec![0.0; chi_grid.len()];
    for i in 0..chi_grid.len() {
        v1[i] = chi_grid[i] * grad_w.gx[i];
        v2[i] = chi_grid[i] * grad_w.gy[i];
    }
    let v1s = to_spectral(&v1, lattice);
    let v2s = to_spectral(&v2, lattice);
    let mut curl = v2s.dx();
    curl.axpy(-1.0, &v1s.dy());
    curl.inverse_laplacian()
}
