//! Dealiased spectral fields and the elementary Fourier-side operators.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use super::lattice::Lattice;

const TWO_PI_SQ: f64 = 2.0 * std::f64::consts::PI * std::f64::consts::PI;

/// The dispersion symbol `lambda_k = k1 / |k|^2` of the beta-plane Coriolis
/// operator; zero on zonal modes (`k1 = 0`).
///
/// Panics on the zero wavevector, which carries no dynamics (fields are
/// mean-free).
pub fn lambda_k(k1: i64, k2: i64) -> f64 {
    assert!((k1, k2) != (0, 0), "lambda_k is undefined at k = 0");
    k1 as f64 / (k1 * k1 + k2 * k2) as f64
}

/// A real, mean-free scalar field on the torus, stored as dealiased
/// half-spectrum coefficients of `e^{i k . x}` (see [`Lattice`] for the
/// storage layout). Coefficients outside the retained set are identically
/// zero, and the `k1 = 0` column is conjugate-symmetric, so every value of
/// the struct synthesizes to a real grid.
#[derive(Debug, Clone)]
pub struct SpectralField {
    lattice: Arc<Lattice>,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    /// The zero field.
    pub fn zeros(lattice: Arc<Lattice>) -> Self {
        let len = lattice.spectral_len();
        Self { lattice, coeffs: vec![Complex64::default(); len] }
    }

    /// Builds a field from explicit `(wavevector, coefficient)` pairs.
    ///
    /// Each pair sets `coeff(k) = c` and implies `coeff(-k) = conj(c)`;
    /// wavevectors with `k1 < 0` are folded onto their conjugate partner.
    /// Later pairs overwrite earlier ones on the same slot. Panics if a
    /// wavevector is outside the retained set.
    pub fn from_modes(lattice: Arc<Lattice>, modes: &[((i64, i64), Complex64)]) -> Self {
        let mut f = Self::zeros(lattice);
        for &((k1, k2), c) in modes {
            let (k1, k2, c) = if k1 < 0 || (k1 == 0 && k2 < 0) {
                (-k1, -k2, c.conj())
            } else {
                (k1, k2, c)
            };
            let idx = f.lattice.index_of(k1, k2);
            assert!(
                f.lattice.is_retained(idx),
                "mode ({k1}, {k2}) is outside the retained set"
            );
            f.coeffs[idx] = c;
            if k1 == 0 {
                let pidx = f.lattice.index_of(0, -k2);
                f.coeffs[pidx] = c.conj();
            }
        }
        f
    }

    /// A random field in the symmetry class (odd in the latitude coordinate),
    /// with independent Gaussian coefficients damped by
    /// `exp(-|k|^2 / (2 sigma^2))` and scaled so `l2_norm() = amplitude`
    /// (zero stays zero). Deterministic in `seed`.
    pub fn random_in_class(lattice: Arc<Lattice>, seed: u64, amplitude: f64, sigma: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = Self::zeros(lattice.clone());
        for &(idx, k1, k2) in lattice.retained() {
            if k2 <= 0 {
                continue; // partners are filled alongside k2 > 0
            }
            let damp = (-((k1 * k1 + k2 * k2) as f64) / (2.0 * sigma * sigma)).exp();
            if k1 == 0 {
                // Reality and oddness force a purely imaginary coefficient.
                let r: f64 = rng.gen_range(-1.0..1.0);
                let c = Complex64::new(0.0, r * damp);
                f.coeffs[idx] = c;
                f.coeffs[lattice.index_of(0, -k2)] = c.conj();
            } else {
                let re: f64 = rng.gen_range(-1.0..1.0);
                let im: f64 = rng.gen_range(-1.0..1.0);
                let c = Complex64::new(re * damp, im * damp);
                f.coeffs[idx] = c;
                // Oddness in x2: coeff(k1, -k2) = -coeff(k1, k2).
                f.coeffs[lattice.index_of(k1, -k2)] = -c;
            }
        }
        let norm = f.l2_norm();
        if norm > 0.0 {
            f.scale(amplitude / norm);
        }
        f
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient at wavevector `(k1, k2)`, `k1 >= 0`.
    pub fn coeff(&self, k1: i64, k2: i64) -> Complex64 {
        self.coeffs[self.lattice.index_of(k1, k2)]
    }

    fn assert_same_lattice(&self, other: &Self) {
        assert!(
            Arc::ptr_eq(&self.lattice, &other.lattice)
                || (self.lattice.nx() == other.lattice.nx()
                    && self.lattice.ny() == other.lattice.ny()),
            "fields live on different lattices"
        );
    }

    /// `self *= s`.
    pub fn scale(&mut self, s: f64) {
        for c in &mut self.coeffs {
            *c *= s;
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Self) {
        self.assert_same_lattice(other);
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += s * b;
        }
    }

    /// `self + other`.
    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    /// `self - other`.
    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Applies a Fourier multiplier `symbol(k1, k2)` over retained modes.
    /// The symbol must satisfy `symbol(-k) = conj(symbol(k))` to preserve
    /// reality; all multipliers exposed by this crate do. Public so that
    /// downstream probes can assemble custom operators (including broken
    /// ones for detector-sensitivity controls).
    pub fn multiplier(&self, symbol: impl Fn(i64, i64) -> Complex64) -> Self {
        let mut out = Self::zeros(self.lattice.clone());
        for &(idx, k1, k2) in self.lattice.retained() {
            out.coeffs[idx] = self.coeffs[idx] * symbol(k1, k2);
        }
        out
    }

    /// Zonal derivative `d/dx1`.
    pub fn dx(&self) -> Self {
        self.multiplier(|k1, _| Complex64::new(0.0, k1 as f64))
    }

    /// Meridional derivative `d/dx2`.
    pub fn dy(&self) -> Self {
        self.multiplier(|_, k2| Complex64::new(0.0, k2 as f64))
    }

    /// `Laplacian(w)`, multiplier `-|k|^2`.
    pub fn laplacian(&self) -> Self {
        self.multiplier(|k1, k2| Complex64::new(-((k1 * k1 + k2 * k2) as f64), 0.0))
    }

    /// `(-Laplacian)^{-1} w`, multiplier `1/|k|^2`; well defined because
    /// fields are mean-free.
    pub fn inverse_laplacian(&self) -> Self {
        self.multiplier(|k1, k2| Complex64::new(1.0 / (k1 * k1 + k2 * k2) as f64, 0.0))
    }

    /// Restriction to zonal modes (`k1 = 0`): the latitude-only part.
    pub fn project_zonal(&self) -> Self {
        self.multiplier(|k1, _| if k1 == 0 { Complex64::new(1.0, 0.0) } else { Complex64::default() })
    }

    /// Restriction to non-zonal modes (`k1 != 0`); complements
    /// [`Self::project_zonal`] exactly: the two parts sum to `self`.
    pub fn project_nonzonal(&self) -> Self {
        self.multiplier(|k1, _| if k1 != 0 { Complex64::new(1.0, 0.0) } else { Complex64::default() })
    }

    /// The rotation group `e^{t L_eps}` applied to `self`: each mode is
    /// multiplied by the phase `e^{-i t lambda_k / eps}`. Unitary on every
    /// Sobolev norm; zonal modes are fixed.
    ///
    /// Panics if `eps <= 0`.
    pub fn semigroup_apply(&self, t: f64, eps: f64) -> Self {
        assert!(eps > 0.0, "semigroup requires eps > 0");
        self.multiplier(|k1, k2| {
            let phase = -t * lambda_k(k1, k2) / eps;
            Complex64::new(phase.cos(), phase.sin())
        })
    }

    /// L2 inner product `(self, other) = integral self * other dx` over
    /// `Omega`, via Parseval: `4 pi^2 sum_k coeff_a(k) conj(coeff_b(k))`
    /// with the `k1 < 0` half supplied by conjugate symmetry.
    pub fn inner_product(&self, other: &Self) -> f64 {
        self.weighted_inner_product(other, |_, _| 1.0)
    }

    /// Inner product with a real, even weight `w(k)` on the full lattice.
    pub(crate) fn weighted_inner_product(
        &self,
        other: &Self,
        weight: impl Fn(i64, i64) -> f64,
    ) -> f64 {
        self.assert_same_lattice(other);
        let mut acc = 0.0;
        for &(idx, k1, k2) in self.lattice.retained() {
            let mult = if k1 == 0 { 1.0 } else { 2.0 };
            let prod = self.coeffs[idx] * other.coeffs[idx].conj();
            acc += mult * weight(k1, k2) * prod.re;
        }
        2.0 * TWO_PI_SQ * acc
    }

    /// `||self||_{L2}`.
    pub fn l2_norm(&self) -> f64 {
        self.inner_product(self).max(0.0).sqrt()
    }

    /// Homogeneous Sobolev norm `||self||_{H^m} = || |k|^m coeff ||`, defined
    /// for any integer `m` (negative included) because fields are mean-free.
    /// `m = 0` recovers the L2 norm; `m = 1` is the Dirichlet norm
    /// `||grad self||`.
    pub fn hm_norm(&self, m: i32) -> f64 {
        self.weighted_inner_product(self, |k1, k2| {
            ((k1 * k1 + k2 * k2) as f64).powi(m)
        })
        .max(0.0)
        .sqrt()
    }

    /// Largest coefficient magnitude (a cheap scale for relative checks).
    pub fn linf_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Departure from the symmetry class `coeff(k1, -k2) = -coeff(k1, k2)`,
    /// reported relative to the largest coefficient magnitude (zero field
    /// reports zero). In-class fields report at the level of rounding error;
    /// the defect is preserved by the flow, so growth indicates a bug.
    pub fn symmetry_class_defect(&self) -> f64 {
        let scale = self.linf_coeff();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for &(idx, k1, k2) in self.lattice.retained() {
            if k2 < 0 {
                continue;
            }
            let partner = self.coeffs[self.lattice.index_of(k1, -k2)];
            let defect = (self.coeffs[idx] + partner).norm();
            worst = worst.max(defect);
        }
        worst / scale
    }

    /// Projection onto the symmetry class:
    /// `coeff(k) <- (coeff(k1, k2) - coeff(k1, -k2)) / 2`.
    pub fn project_symmetry_class(&self) -> Self {
        let mut out = Self::zeros(self.lattice.clone());
        for &(idx, k1, k2) in self.lattice.retained() {
            let partner = self.coeffs[self.lattice.index_of(k1, -k2)];
            out.coeffs[idx] = (self.coeffs[idx] - partner) * 0.5;
        }
        out
    }
}

/// H1 distance `|| (1 + |k|^2)^{1/2} (a - b) ||` between two fields on the
/// same lattice (inhomogeneous Sobolev metric used by the zonal-limit
/// comparisons).
pub fn h1_distance(a: &SpectralField, b: &SpectralField) -> f64 {
    let d = a.sub(b);
    d.weighted_inner_product(&d, |k1, k2| 1.0 + (k1 * k1 + k2 * k2) as f64)
        .max(0.0)
        .sqrt()
}
