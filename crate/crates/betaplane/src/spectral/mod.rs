//! Spectral representation: wavenumber lattices, dealiased fields, FFT-based
//! transforms, and the elementary Fourier-side operators.

mod bilinear;
mod field;
mod lattice;
mod transform;

pub use bilinear::{
    advect_inner, advection_transpose, b_from_parts, bilinear_b, gamma_coefficient, grid_integral,
    velocity_from_vorticity, GradGrids, VelocityGrids,
};
pub use field::{h1_distance, lambda_k, SpectralField};
pub use lattice::{make_lattice, Lattice};
pub use transform::{to_physical, to_spectral};
