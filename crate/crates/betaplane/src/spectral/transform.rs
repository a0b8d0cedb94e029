//! FFT-backed transforms between half-spectrum coefficients and real grids.
//!
//! Plan caches are thread-local so transforms take `&self` fields and stay
//! `Send`-friendly for worker threads.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::field::SpectralField;
use super::lattice::Lattice;

struct Plans {
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

thread_local! {
    static PLAN_CACHE: RefCell<HashMap<(usize, usize), Plans>> = RefCell::new(HashMap::new());
}

fn with_plans<R>(nx: usize, ny: usize, f: impl FnOnce(&mut Plans) -> R) -> R {
    PLAN_CACHE.with(|cache| {
        let mut cache = cache.borrow_mut();
        let plans = cache.entry((nx, ny)).or_insert_with(|| {
            let mut planner = FftPlanner::new();
            let fwd_x = planner.plan_fft_forward(nx);
            let inv_x = planner.plan_fft_inverse(nx);
            let fwd_y = planner.plan_fft_forward(ny);
            let inv_y = planner.plan_fft_inverse(ny);
            let scratch_len = [&fwd_x, &inv_x, &fwd_y, &inv_y]
                .iter()
                .map(|p| p.get_inplace_scratch_len())
                .max()
                .unwrap();
            Plans { fwd_x, inv_x, fwd_y, inv_y, scratch: vec![Complex64::default(); scratch_len] }
        });
        f(plans)
    })
}

/// Expands half-spectrum coefficients to the full `nx x ny` FFT array,
/// `full[kxi * ny + kyi]`, folding in the phase `(-1)^{k2}` that shifts the
/// y origin from 0 to `-pi`. The `k1 < 0` half is filled by conjugate
/// symmetry. Masked coefficients stay zero.
pub(crate) fn expand_full(field: &SpectralField) -> Vec<Complex64> {
    let lat = field.lattice();
    let (nx, ny) = (lat.nx(), lat.ny());
    let mut full = vec![Complex64::default(); nx * ny];
    for &(idx, _k1, _k2) in lat.retained() {
        let kxi = idx / ny;
        let kyi = idx % ny;
        let parity = if kyi % 2 == 0 { 1.0 } else { -1.0 };
        let v = field.coeffs()[idx] * parity;
        full[kxi * ny + kyi] = v;
        if kxi > 0 && kxi < nx - kxi {
            let conj_kyi = (ny - kyi) % ny;
            full[(nx - kxi) * ny + conj_kyi] = v.conj();
        }
    }
    full
}

/// Inverse of [`expand_full`]: folds a full FFT array onto half-spectrum
/// storage, applying the mask, removing the `(-1)^{k2}` phase, and
/// symmetrizing the `k1 = 0` column so the reality invariant holds
/// structurally. `scale` multiplies every coefficient (FFT normalization).
pub(crate) fn fold_half(full: &[Complex64], lattice: &Arc<Lattice>, scale: f64) -> SpectralField {
    let ny = lattice.ny();
    let mut out = SpectralField::zeros(lattice.clone());
    {
        let c = out.coeffs_mut();
        for &(idx, k1, k2) in lattice.retained() {
            let kyi = idx % ny;
            let parity = if kyi % 2 == 0 { 1.0 } else { -1.0 };
            let mut v = full[idx] * parity * scale;
            if k1 == 0 {
                // Average with the conjugate partner so the stored column is
                // exactly conjugate-symmetric regardless of rounding.
                let conj_kyi = (ny - kyi) % ny;
                let partner_parity = parity; // (-1)^{-k2} = (-1)^{k2}
                let w = full[conj_kyi] * partner_parity * scale;
                v = (v + w.conj()) * 0.5;
                let _ = k2;
            }
            c[idx] = v;
        }
    }
    out
}

/// Synthesizes the real grid values `g[i * ny + j] = w(x1[i], x2[j])` from
/// spectral coefficients. Exact (to rounding) for any retained-mode field.
pub fn to_physical(field: &SpectralField) -> Vec<f64> {
    let lat = field.lattice();
    let (nx, ny) = (lat.nx(), lat.ny());
    let mut full = expand_full(field);
    with_plans(nx, ny, |plans| {
        // Inverse FFT along y: rows of `full` are contiguous in kyi.
        plans.inv_y.process_with_scratch(&mut full, &mut plans.scratch);
        // Transpose [kx][y] -> [y][kx], inverse FFT along x.
        let mut t = vec![Complex64::default(); nx * ny];
        for kxi in 0..nx {
            for j in 0..ny {
                t[j * nx + kxi] = full[kxi * ny + j];
            }
        }
        plans.inv_x.process_with_scratch(&mut t, &mut plans.scratch);
        // Transpose back to [x][y], keeping the real part.
        let mut grid = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                grid[i * ny + j] = t[j * nx + i].re;
            }
        }
        grid
    })
}

/// Analyzes real grid values into dealiased half-spectrum coefficients.
/// Modes outside the retained set (including any aliased content) are
/// discarded; the `k1 = 0` column is symmetrized exactly.
pub fn to_spectral(grid: &[f64], lattice: &Arc<Lattice>) -> SpectralField {
    let (nx, ny) = (lattice.nx(), lattice.ny());
    assert_eq!(grid.len(), nx * ny, "grid length must be nx * ny");
    with_plans(nx, ny, |plans| {
        // Load transposed as [y][x] and FFT along x.
        let mut t = vec![Complex64::default(); nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                t[j * nx + i] = Complex64::new(grid[i * ny + j], 0.0);
            }
        }
        plans.fwd_x.process_with_scratch(&mut t, &mut plans.scratch);
        // Transpose to [kx][y] and FFT along y.
        let mut full = vec![Complex64::default(); nx * ny];
        for j in 0..ny {
            for kxi in 0..nx {
                full[kxi * ny + j] = t[j * nx + kxi];
            }
        }
        plans.fwd_y.process_with_scratch(&mut full, &mut plans.scratch);
        fold_half(&full, lattice, 1.0 / (nx * ny) as f64)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::lattice::make_lattice;

    /// Direct evaluation of a single cosine mode on the grid.
    fn cosine_grid(lat: &Lattice, k1: i64, k2: i64, amp: f64) -> Vec<f64> {
        let (xs, ys) = lat.grid_coords();
        let mut g = vec![0.0; lat.grid_len()];
        for (i, &x) in xs.iter().enumerate() {
            for (j, &y) in ys.iter().enumerate() {
                g[i * lat.ny() + j] = amp * (k1 as f64 * x + k2 as f64 * y).cos();
            }
        }
        g
    }

    #[test]
    fn synthesis_matches_direct_evaluation() {
        let lat = make_lattice(16, 8).unwrap();
        // cos(2 x1 - y2): coefficients 1/2 at (2, -1) and conjugate.
        let f = SpectralField::from_modes(
            lat.clone(),
            &[((2, -1), Complex64::new(0.5, 0.0))],
        );
        let grid = to_physical(&f);
        let direct = cosine_grid(&lat, 2, -1, 1.0);
        for (a, b) in grid.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn analysis_inverts_synthesis() {
        let lat = make_lattice(12, 20).unwrap();
        let f = SpectralField::from_modes(
            lat.clone(),
            &[
                ((1, 2), Complex64::new(0.3, -0.7)),
                ((0, 3), Complex64::new(0.1, 0.4)),
                ((3, -6), Complex64::new(-1.2, 0.05)),
            ],
        );
        let back = to_spectral(&to_physical(&f), &lat);
        let err = f
            .coeffs()
            .iter()
            .zip(back.coeffs())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-13, "round-trip error {err}");
    }

    #[test]
    fn analysis_discards_unresolved_modes() {
        let lat = make_lattice(16, 16).unwrap();
        // floor(16/3) = 5, so k2 = 7 must vanish after analysis.
        let grid = cosine_grid(&lat, 0, 7, 1.0);
        let f = to_spectral(&grid, &lat);
        assert!(f.l2_norm() < 1e-13);
    }
}
