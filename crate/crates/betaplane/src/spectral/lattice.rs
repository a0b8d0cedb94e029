//! Truncated wavenumber lattices with the two-thirds dealiasing rule.

use std::sync::Arc;

use crate::{Error, Result};

/// A rectangular grid `nx x ny` on `[0, 2*pi] x [-pi, pi]` together with the
/// set of retained integer wavevectors under the strict two-thirds rule:
///
/// ```text
///     retained(k)  <=>  k != 0,  |k1| <= kx_keep,  |k2| <= ky_keep,
///     kx_keep = floor((nx - 1) / 3),   ky_keep = floor((ny - 1) / 3).
/// ```
///
/// The cutoff is the largest for which quadratic products of retained modes
/// can never alias back into the retained set (`3 * keep < n` strictly; the
/// common `floor(n/3)` variant admits corner aliasing when `3 | n`), so
/// pointwise products on the grid need no padding. The same inequality
/// makes grid quadrature of triple products of retained fields exact.
///
/// Coefficients of real fields are stored on the half-spectrum `k1 >= 0`
/// (`k1` runs over `0..=nx/2`, `k2` over FFT order `0, 1, .., -1`); the
/// `k1 < 0` half is implied by conjugate symmetry. The `k1 = 0` column stores
/// both signs of `k2` and is internally conjugate-symmetric.
#[derive(Debug)]
pub struct Lattice {
    nx: usize,
    ny: usize,
    kx_keep: i64,
    ky_keep: i64,
    /// Dealiasing mask over half-spectrum storage; `true` = retained.
    mask: Vec<bool>,
    /// Retained `(index, k1, k2)` triples in storage order.
    retained: Vec<(usize, i64, i64)>,
}

impl Lattice {
    /// Grid size along the zonal (x) direction.
    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Grid size along the meridional (y) direction.
    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Largest retained `|k1|` (equals `floor((nx - 1)/3)`).
    pub fn kx_keep(&self) -> i64 {
        self.kx_keep
    }

    /// Largest retained `|k2|` (equals `floor((ny - 1)/3)`).
    pub fn ky_keep(&self) -> i64 {
        self.ky_keep
    }

    /// Number of complex coefficients in half-spectrum storage.
    pub fn spectral_len(&self) -> usize {
        (self.nx / 2 + 1) * self.ny
    }

    /// Number of real samples in a physical-space grid.
    pub fn grid_len(&self) -> usize {
        self.nx * self.ny
    }

    /// Storage index for the wavevector `(k1, k2)` with `k1 >= 0`.
    ///
    /// Panics if `k1` is negative or either component is outside the
    /// representable range of the grid.
    pub fn index_of(&self, k1: i64, k2: i64) -> usize {
        assert!(k1 >= 0, "half-spectrum storage holds k1 >= 0, got k1 = {k1}");
        assert!(k1 <= (self.nx / 2) as i64, "k1 = {k1} not representable on nx = {}", self.nx);
        assert!(
            k2.abs() <= (self.ny / 2) as i64,
            "k2 = {k2} not representable on ny = {}",
            self.ny
        );
        let kyi = if k2 >= 0 { k2 as usize } else { (k2 + self.ny as i64) as usize };
        k1 as usize * self.ny + kyi
    }

    /// Wavevector stored at `index`.
    pub fn wavevector(&self, index: usize) -> (i64, i64) {
        let kxi = index / self.ny;
        let kyi = index % self.ny;
        let k2 = if kyi <= self.ny / 2 { kyi as i64 } else { kyi as i64 - self.ny as i64 };
        (kxi as i64, k2)
    }

    /// Whether the coefficient at `index` survives dealiasing.
    pub fn is_retained(&self, index: usize) -> bool {
        self.mask[index]
    }

    /// Retained `(index, k1, k2)` triples in storage order.
    pub fn retained(&self) -> &[(usize, i64, i64)] {
        &self.retained
    }

    /// Grid coordinates: `x1[i] = 2*pi*i/nx`, `x2[j] = -pi + 2*pi*j/ny`.
    pub fn grid_coords(&self) -> (Vec<f64>, Vec<f64>) {
        let x1 = (0..self.nx).map(|i| 2.0 * std::f64::consts::PI * i as f64 / self.nx as f64);
        let x2 = (0..self.ny)
            .map(|j| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * j as f64 / self.ny as f64);
        (x1.collect(), x2.collect())
    }

    /// Full-lattice wavevectors sorted by `(|k|^2, k1, k2)`, restricted to
    /// one representative per conjugate pair (`k1 > 0`, or `k1 = 0, k2 > 0`).
    ///
    /// Each representative corresponds to two real directions, `cos(k.x)`
    /// and `sin(k.x)`, so the real eigenvalue `-|k|^2` of the Laplacian
    /// appears with its full lattice multiplicity when the list is expanded
    /// pairwise. Used to seed tangent bundles and as the exact-count oracle
    /// for spectrally supported sums.
    pub fn modes_by_increasing_norm(&self) -> Vec<(i64, i64)> {
        let mut reps: Vec<(i64, i64)> = self
            .retained
            .iter()
            .map(|&(_, k1, k2)| (k1, k2))
            .filter(|&(k1, k2)| k1 > 0 || (k1 == 0 && k2 > 0))
            .collect();
        reps.sort_by_key(|&(k1, k2)| (k1 * k1 + k2 * k2, k1, k2));
        reps
    }
}

/// Builds the lattice for an `nx x ny` grid.
///
/// Both sizes must be even and at least 8 so that the two-thirds mask leaves
/// a non-trivial retained set and the Nyquist row and column are always
/// discarded.
pub fn make_lattice(nx: usize, ny: usize) -> Result<Arc<Lattice>> {
    for (n, _name) in [(nx, "nx"), (ny, "ny")] {
        if n < 8 {
            return Err(Error::Lattice { nx, ny, reason: "grid sizes must be at least 8" });
        }
        if n % 2 != 0 {
            return Err(Error::Lattice { nx, ny, reason: "grid sizes must be even" });
        }
    }
    let kx_keep = ((nx - 1) / 3) as i64;
    let ky_keep = ((ny - 1) / 3) as i64;
    let len = (nx / 2 + 1) * ny;
    let mut mask = vec![false; len];
    let mut retained = Vec::new();
    for kxi in 0..=(nx / 2) {
        for kyi in 0..ny {
            let k1 = kxi as i64;
            let k2 = if kyi <= ny / 2 { kyi as i64 } else { kyi as i64 - ny as i64 };
            let keep = (k1 != 0 || k2 != 0) && k1.abs() <= kx_keep && k2.abs() <= ky_keep;
            let idx = kxi * ny + kyi;
            mask[idx] = keep;
            if keep {
                retained.push((idx, k1, k2));
            }
        }
    }
    Ok(Arc::new(Lattice { nx, ny, kx_keep, ky_keep, mask, retained }))
}
