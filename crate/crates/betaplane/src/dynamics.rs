//! Time integration of the rotating vorticity equation
//!
//! ```text
//!     dw/dt + B(w, w) + L_eps w = f + nu * Laplacian(w),
//! ```
//!
//! with an integrating-factor RK4 scheme: the full linear part (dissipation
//! and rotation) is applied exactly per mode, and only the bilinear term and
//! forcing pass through the Runge-Kutta stages. The rotation phase
//! `e^{i lambda_k dt / eps}` costs nothing extra, so the scheme has no
//! stiffness in `eps`; the time step is limited only by advection.

use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::spectral::{
    b_from_parts, bilinear_b, to_physical, GradGrids, Lattice, SpectralField, VelocityGrids,
};
use crate::{tol, Error, Result};

/// Physical parameters of the non-dimensional problem.
#[derive(Debug, Clone, Copy)]
pub struct FlowParams {
    /// Rossby number `eps > 0`; rotation rate is `1/eps`.
    pub epsilon: f64,
    /// Grashof number `G > 0`: forcing amplitude in units where `nu = 1`.
    pub grashof: f64,
    /// Viscosity; fixed to 1 by the non-dimensionalization.
    pub nu: f64,
}

impl FlowParams {
    pub fn new(epsilon: f64, grashof: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParam {
                name: "epsilon",
                reason: format!("must be finite and positive, got {epsilon}"),
            });
        }
        if !(grashof > 0.0) || !grashof.is_finite() {
            return Err(Error::InvalidParam {
                name: "grashof",
                reason: format!("must be finite and positive, got {grashof}"),
            });
        }
        Ok(Self { epsilon, grashof, nu: 1.0 })
    }
}

/// A time-independent forcing `f = G * curl F` with `||F||_{L2} = 1`, split
/// into zonal and non-zonal parts, plus the auxiliary field entering the
/// forcing-orthogonality identity.
#[derive(Debug, Clone)]
pub struct Forcing {
    f: SpectralField,
    fbar: SpectralField,
    ftilde: SpectralField,
    fcheck_rotated: SpectralField,
    grashof: f64,
}

impl Forcing {
    /// The two-parameter preset
    ///
    /// ```text
    ///     f = G * c * (a sin(x2) + b sin(x1) sin(x2)),
    ///     c = 1 / (2 pi sqrt(a^2/2 + b^2/8)),
    /// ```
    ///
    /// where `c` normalizes the generating vector field: `||F|| = 1` for
    /// `F = curl^{-1} f / G`. Both terms are odd in `x2`, so the preset lies
    /// in the symmetry class. `b = 0` gives a purely zonal forcing.
    pub fn mixed(lattice: &Arc<Lattice>, grashof: f64, a: f64, b: f64) -> Result<Self> {
        if a == 0.0 && b == 0.0 {
            return Err(Error::InvalidParam {
                name: "forcing",
                reason: "preset weights a and b must not both vanish".into(),
            });
        }
        let c = 1.0 / (2.0 * std::f64::consts::PI * (a * a / 2.0 + b * b / 8.0).sqrt());
        let amp = grashof * c;
        // a sin(x2): coefficient -i/2 at (0, 1);
        // b sin(x1) sin(x2) = b/2 [cos(x1 - x2) - cos(x1 + x2)]:
        // coefficients +b/4 at (1, -1) and -b/4 at (1, 1).
        let f = SpectralField::from_modes(
            lattice.clone(),
            &[
                ((0, 1), Complex64::new(0.0, -0.5 * a * amp)),
                ((1, -1), Complex64::new(0.25 * b * amp, 0.0)),
                ((1, 1), Complex64::new(-0.25 * b * amp, 0.0)),
            ],
        );
        Ok(Self::from_field(f, grashof))
    }

    /// Purely zonal preset `f = (G / (sqrt(2) pi)) sin(x2)`.
    pub fn zonal_only(lattice: &Arc<Lattice>, grashof: f64) -> Result<Self> {
        Self::mixed(lattice, grashof, 1.0, 0.0)
    }

    /// The zero forcing (free decay).
    pub fn zero(lattice: &Arc<Lattice>) -> Self {
        Self::from_field(SpectralField::zeros(lattice.clone()), 0.0)
    }

    /// Wraps an arbitrary spectral field as the forcing, deriving the split
    /// parts. `grashof` is recorded for diagnostics; presets guarantee
    /// `grashof = ||grad^{-1} f||`, custom fields are the caller's contract.
    pub fn from_field(f: SpectralField, grashof: f64) -> Self {
        let fbar = f.project_zonal();
        let ftilde = f.project_nonzonal();
        // fcheck has coefficients f_k / lambda_k on non-zonal modes. It is
        // purely imaginary as a function (conjugate-antisymmetric in k), so
        // we store the real field g = -i * fcheck instead; inner products
        // against real fields satisfy |(fcheck, v)| = |(g, v)|.
        let fcheck_rotated = ftilde.multiplier(|k1, k2| {
            let lam = crate::spectral::lambda_k(k1, k2);
            Complex64::new(0.0, -1.0 / lam)
        });
        Self { f, fbar, ftilde, fcheck_rotated, grashof }
    }

    /// The full forcing field.
    pub fn field(&self) -> &SpectralField {
        &self.f
    }

    /// Zonal part `fbar`.
    pub fn zonal_part(&self) -> &SpectralField {
        &self.fbar
    }

    /// Non-zonal part `ftilde`.
    pub fn nonzonal_part(&self) -> &SpectralField {
        &self.ftilde
    }

    /// The real rotation `g = -i * fcheck` of the auxiliary field
    /// `fcheck_k = f_k / lambda_k` (non-zonal modes only).
    pub fn fcheck_rotated(&self) -> &SpectralField {
        &self.fcheck_rotated
    }

    pub fn grashof(&self) -> f64 {
        self.grashof
    }
}

/// Instantaneous state of the 2D flow: vorticity and time.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub w: SpectralField,
    pub t: f64,
}

impl FlowState {
    pub fn new(w: SpectralField, t: f64) -> Self {
        Self { w, t }
    }
}

/// Full right-hand side `dw/dt = -B(w, w) - L_eps w + f + nu Lap w`.
pub fn rhs(state: &FlowState, params: &FlowParams, forcing: &Forcing) -> SpectralField {
    let mut out = bilinear_b(&state.w, &state.w);
    out.scale(-1.0);
    out.axpy(1.0, forcing.field());
    let eps = params.epsilon;
    let nu = params.nu;
    let linear = state.w.multiplier(|k1, k2| {
        let ksq = (k1 * k1 + k2 * k2) as f64;
        // -L_eps contributes +i lambda_k / eps; dissipation -nu |k|^2.
        Complex64::new(-nu * ksq, crate::spectral::lambda_k(k1, k2) / eps)
    });
    out.axpy(1.0, &linear);
    out
}

/// Precomputed per-mode integrating factors for a fixed `dt`.
///
/// `factor(tau)_k = exp((-nu |k|^2 + i lambda_k / eps) tau)`: the exact
/// propagator of the linear part over `tau`. Masked modes get factor zero,
/// which re-enforces dealiasing at every stage.
pub struct Stepper {
    dt: f64,
    e_half: Vec<Complex64>,
    e_full: Vec<Complex64>,
    h_min: f64,
    cfl_safety: f64,
}

impl Stepper {
    pub fn new(lattice: &Arc<Lattice>, params: &FlowParams, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParam {
                name: "dt",
                reason: format!("must be finite and positive, got {dt}"),
            });
        }
        let factors = |tau: f64| {
            let mut v = vec![Complex64::default(); lattice.spectral_len()];
            for &(idx, k1, k2) in lattice.retained() {
                let ksq = (k1 * k1 + k2 * k2) as f64;
                let decay = (-params.nu * ksq * tau).exp();
                let phase = crate::spectral::lambda_k(k1, k2) * tau / params.epsilon;
                v[idx] = decay * Complex64::new(phase.cos(), phase.sin());
            }
            v
        };
        let h_min = 2.0 * std::f64::consts::PI / lattice.nx().max(lattice.ny()) as f64;
        Ok(Self {
            dt,
            e_half: factors(dt / 2.0),
            e_full: factors(dt),
            h_min,
            cfl_safety: tol::CFL_SAFETY,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Half- and full-step integrating factors (for the tangent stepper,
    /// which must mirror the base scheme exactly).
    pub(crate) fn factors(&self) -> (&[Complex64], &[Complex64]) {
        (&self.e_half, &self.e_full)
    }

    /// Largest stable step for a given maximum advection speed.
    pub(crate) fn cfl_bound(&self, speed: f64) -> f64 {
        self.cfl_safety * self.h_min / speed.max(1e-300)
    }

    fn apply(&self, factors: &[Complex64], field: &SpectralField) -> SpectralField {
        let mut out = SpectralField::zeros(field.lattice().clone());
        for (o, (c, e)) in out
            .coeffs_mut()
            .iter_mut()
            .zip(field.coeffs().iter().zip(factors))
        {
            *o = c * e;
        }
        out
    }

    /// One IF-RK4 step. Fails with [`Error::CflViolation`] if the advective
    /// Courant number of the current state exceeds the safety factor.
    pub fn step(&self, state: &FlowState, forcing: &Forcing) -> Result<FlowState> {
        let dt = self.dt;
        let w = &state.w;
        let lattice = w.lattice();

        let nonlin = |field: &SpectralField| -> (SpectralField, f64) {
            let u = VelocityGrids::of(field);
            let g = GradGrids::of(field);
            let mut n = b_from_parts(&u, &g, lattice);
            n.scale(-1.0);
            n.axpy(1.0, forcing.field());
            (n, u.max_speed)
        };

        let (n1, speed) = nonlin(w);
        let bound = self.cfl_bound(speed);
        if dt > bound {
            return Err(Error::CflViolation { dt, bound, suggested: 0.8 * bound });
        }

        // a1 = E_half (w + dt/2 n1)
        let mut stage = w.clone();
        stage.axpy(dt / 2.0, &n1);
        let a1 = self.apply(&self.e_half, &stage);
        let (n2, _) = nonlin(&a1);

        // a2 = E_half w + dt/2 n2
        let mut a2 = self.apply(&self.e_half, w);
        a2.axpy(dt / 2.0, &n2);
        let (n3, _) = nonlin(&a2);

        // a3 = E_full w + dt E_half n3
        let mut a3 = self.apply(&self.e_full, w);
        a3.axpy(dt, &self.apply(&self.e_half, &n3));
        let (n4, _) = nonlin(&a3);

        // w' = E_full w + dt/6 (E_full n1 + 2 E_half (n2 + n3) + n4)
        let mut out = self.apply(&self.e_full, w);
        out.axpy(dt / 6.0, &self.apply(&self.e_full, &n1));
        let mut mid = n2;
        mid.axpy(1.0, &n3);
        out.axpy(dt / 3.0, &self.apply(&self.e_half, &mid));
        out.axpy(dt / 6.0, &n4);

        Ok(FlowState::new(out, state.t + dt))
    }
}

/// Time-stepping policy for [`evolve`].
#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    /// Upper bound on the step size (accuracy control).
    pub dt_max: f64,
    /// Courant-number safety factor.
    pub cfl_safety: f64,
    /// Steps between step-size re-evaluations.
    pub recheck_stride: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { dt_max: 1e-2, cfl_safety: tol::CFL_SAFETY, recheck_stride: 25 }
    }
}

/// Accounting from one [`evolve`] call.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvolveStats {
    pub steps: usize,
    pub min_dt: f64,
    pub max_dt: f64,
}

/// Integrates the state to `t_end`, choosing `dt` from `dt_max` and the
/// advective CFL bound, and re-examining the bound every `recheck_stride`
/// steps. `observer` sees every accepted step (not the initial state).
pub fn evolve(
    state: &FlowState,
    params: &FlowParams,
    forcing: &Forcing,
    t_end: f64,
    opts: &EvolveOptions,
    mut observer: impl FnMut(&FlowState),
) -> Result<(FlowState, EvolveStats)> {
    let lattice = state.w.lattice().clone();
    let mut cur = state.clone();
    let mut stats = EvolveStats { min_dt: f64::INFINITY, ..Default::default() };
    let h_min = 2.0 * std::f64::consts::PI / lattice.nx().max(lattice.ny()) as f64;

    let ideal_dt = |w: &SpectralField, remaining: f64| -> f64 {
        let speed = VelocityGrids::of(w).max_speed;
        let cfl = opts.cfl_safety * h_min / speed.max(1e-300);
        // Use 90% of the CFL bound so the in-step check has headroom.
        let dt = opts.dt_max.min(0.9 * cfl).min(remaining);
        dt.max(remaining * 1e-12).max(1e-12)
    };

    while cur.t < t_end - 1e-12 {
        let remaining = t_end - cur.t;
        let mut dt = ideal_dt(&cur.w, remaining);
        // Land exactly on t_end with uniform sub-steps.
        let n_sub = (remaining / dt).ceil().max(1.0);
        dt = remaining / n_sub;
        let mut stepper = Stepper::new(&lattice, params, dt)?;
        let mut taken = 0usize;
        while taken < opts.recheck_stride && cur.t < t_end - 1e-12 {
            match stepper.step(&cur, forcing) {
                Ok(next) => {
                    cur = next;
                    stats.steps += 1;
                    stats.min_dt = stats.min_dt.min(dt);
                    stats.max_dt = stats.max_dt.max(dt);
                    taken += 1;
                    observer(&cur);
                }
                Err(Error::CflViolation { suggested, .. }) => {
                    dt = suggested.min(t_end - cur.t);
                    stepper = Stepper::new(&lattice, params, dt)?;
                }
                Err(e) => return Err(e),
            }
        }
    }
    if stats.steps == 0 {
        stats.min_dt = 0.0;
    }
    Ok((cur, stats))
}

/// Convergence report from [`run_to_stationarity`].
#[derive(Debug, Clone, Copy)]
pub struct StationarityReport {
    /// Time at which the trajectory was accepted (or abandoned).
    pub t_reached: f64,
    /// Whether consecutive window means of `||w||^2` settled.
    pub converged: bool,
    /// Relative change of the last two window means.
    pub last_variation: f64,
}

/// Stationarity detection policy.
#[derive(Debug, Clone, Copy)]
pub struct StationarityOptions {
    /// Averaging window length (time units).
    pub window: f64,
    /// Acceptance threshold on the relative change of window means.
    pub rel_tol: f64,
    /// Do not accept before this time.
    pub t_min: f64,
    /// Give up (with `converged = false`) at this time.
    pub t_max: f64,
}

impl Default for StationarityOptions {
    fn default() -> Self {
        Self { window: 10.0, rel_tol: 0.02, t_min: 50.0, t_max: 400.0 }
    }
}

/// Integrates until the windowed mean of the enstrophy `||w||^2` stops
/// drifting: burn-in for time-average experiments. Returns the state at the
/// accepted time and a report; a non-converged report is not an error.
pub fn run_to_stationarity(
    state: &FlowState,
    params: &FlowParams,
    forcing: &Forcing,
    opts: &StationarityOptions,
    evolve_opts: &EvolveOptions,
) -> Result<(FlowState, StationarityReport)> {
    let mut cur = state.clone();
    let mut prev_mean: Option<f64> = None;
    let mut last_variation = f64::INFINITY;
    loop {
        let t_target = (cur.t + opts.window).min(opts.t_max);
        // Trapezoid mean of ||w||^2 over the window.
        let mut acc = 0.0;
        let mut t_prev = cur.t;
        let mut v_prev = cur.w.inner_product(&cur.w);
        let span = t_target - cur.t;
        let (next, _) = evolve(&cur, params, forcing, t_target, evolve_opts, |s| {
            let v = s.w.inner_product(&s.w);
            acc += (s.t - t_prev) * 0.5 * (v + v_prev);
            t_prev = s.t;
            v_prev = v;
        })?;
        cur = next;
        let mean = acc / span;
        if let Some(prev) = prev_mean {
            last_variation = (mean - prev).abs() / mean.abs().max(1e-12);
            if cur.t >= opts.t_min && last_variation <= opts.rel_tol {
                return Ok((
                    cur.clone(),
                    StationarityReport { t_reached: cur.t, converged: true, last_variation },
                ));
            }
        }
        prev_mean = Some(mean);
        if cur.t >= opts.t_max - 1e-9 {
            return Ok((
                cur.clone(),
                StationarityReport { t_reached: cur.t, converged: false, last_variation },
            ));
        }
    }
}

/// Reference integrator in the rotating frame: evolves `eta = e^{tL} w`
/// (so the Coriolis term disappears from the equation and reappears in the
/// time-dependent bilinear form), then maps back. Fixed step, no CFL logic.
///
/// Exists to cross-validate the production stepper: both integrate the same
/// dynamics through different algebra, so agreement to integrator accuracy
/// checks the semigroup/conjugation identities end to end.
pub fn evolve_rotating_frame(
    state: &FlowState,
    params: &FlowParams,
    forcing: &Forcing,
    t_end: f64,
    dt: f64,
) -> Result<FlowState> {
    let eps = params.epsilon;
    let nu = params.nu;
    let heat = |tau: f64, field: &SpectralField| {
        field.multiplier(|k1, k2| {
            Complex64::new((-nu * ((k1 * k1 + k2 * k2) as f64) * tau).exp(), 0.0)
        })
    };
    // Nonlinear term in the rotating frame at absolute time s.
    let nonlin = |eta: &SpectralField, s: f64| -> SpectralField {
        let w = eta.semigroup_apply(-s, eps);
        let mut n = bilinear_b(&w, &w);
        n.scale(-1.0);
        n.axpy(1.0, forcing.field());
        n.semigroup_apply(s, eps)
    };

    let mut t = state.t;
    let mut eta = state.w.semigroup_apply(t, eps);
    while t < t_end - 1e-12 {
        let h = dt.min(t_end - t);
        let n1 = nonlin(&eta, t);
        let mut s1 = eta.clone();
        s1.axpy(h / 2.0, &n1);
        let a1 = heat(h / 2.0, &s1);
        let n2 = nonlin(&a1, t + h / 2.0);
        let mut a2 = heat(h / 2.0, &eta);
        a2.axpy(h / 2.0, &n2);
        let n3 = nonlin(&a2, t + h / 2.0);
        let mut a3 = heat(h, &eta);
        a3.axpy(h, &heat(h / 2.0, &n3));
        let n4 = nonlin(&a3, t + h);
        let mut out = heat(h, &eta);
        out.axpy(h / 6.0, &heat(h, &n1));
        let mut mid = n2;
        mid.axpy(1.0, &n3);
        out.axpy(h / 3.0, &heat(h / 2.0, &mid));
        out.axpy(h / 6.0, &n4);
        eta = out;
        t += h;
    }
    Ok(FlowState::new(eta.semigroup_apply(-t, eps), t))
}

/// The two sides of the energy budget: `(||grad w||^2, (w, f))`. In a
/// statistically steady state their time averages coincide.
pub fn energy_observables(state: &FlowState, forcing: &Forcing) -> (f64, f64) {
    (state.w.hm_norm(1).powi(2), state.w.inner_product(forcing.field()))
}

/// Maximum pointwise speed of the velocity field (diagnostic).
pub fn max_speed(w: &SpectralField) -> f64 {
    VelocityGrids::of(w).max_speed
}

/// Grid samples of the vorticity (for checkpoint-free visual checks).
pub fn vorticity_grid(state: &FlowState) -> Vec<f64> {
    to_physical(&state.w)
}
