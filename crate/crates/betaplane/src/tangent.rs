//! Linearized dynamics along a trajectory: tangent bundles, volume elements,
//! trace decompositions of the linearization, Lyapunov spectra, and the
//! smallest dimension at which tangent volumes contract.
//!
//! Conventions. The linearization of the vorticity equation about a
//! trajectory `w(s)` reads `d delta / ds = -(A + L_eps) delta` with
//!
//! ```text
//!     A delta = -Lap delta + B(w, delta) + B(delta, w),
//! ```
//!
//! so positive traces of `A` mean volume contraction. Tangent vectors are
//! stored in the stationary (x) frame and advanced by the same
//! integrating-factor RK4 as the base state, linearized at the base stage
//! states: the discrete tangent map is the exact differential of the
//! discrete flow map.
//!
//! Rotating-frame (z) objects `v_z = e^{s L} v_x` are reconstructed on
//! demand through the unitary semigroup; span projectors commute with the
//! conjugation, so every trace reported here is computed frame-free in x
//! coordinates, while the projector-derivative and trace-decomposition
//! checks form their finite differences in the z frame where the projector
//! drifts at an `eps`-independent rate.

use rustfft::num_complex::Complex64;

use crate::dynamics::{rhs, FlowParams, FlowState, Forcing, Stepper};
use crate::spectral::{
    advect_inner, advection_transpose, b_from_parts, grid_integral, to_physical, to_spectral,
    GradGrids, SpectralField, VelocityGrids,
};
use crate::{tol, Error, Result};

/// A set of `N` tangent vectors advected along a trajectory, together with
/// the running volume element and per-direction stretch sums.
#[derive(Debug, Clone)]
pub struct TangentBundle {
    deltas: Vec<SpectralField>,
    phis: Vec<SpectralField>,
    lyap_sums: Vec<f64>,
    t: f64,
    fresh: bool,
}

impl TangentBundle {
    /// Seeds `n` unit tangent vectors from the lowest Fourier directions:
    /// lattice modes ordered by `(|k|^2, k1, k2)`, each contributing
    /// `cos(k.x)` then `sin(k.x)`, normalized in L2. The seeds are exactly
    /// orthonormal.
    pub fn new(state: &FlowState, n: usize) -> Result<Self> {
        let lattice = state.w.lattice();
        let reps = lattice.modes_by_increasing_norm();
        if n == 0 || n > 2 * reps.len() {
            return Err(Error::InvalidParam {
                name: "n_tangent",
                reason: format!("need 1 <= n <= {}, got {n}", 2 * reps.len()),
            });
        }
        let amp = 0.5 / (2.0 * std::f64::consts::PI.powi(2)).sqrt();
        let mut deltas = Vec::with_capacity(n);
        'outer: for &(k1, k2) in &reps {
            for coef in [Complex64::new(amp, 0.0), Complex64::new(0.0, -amp)] {
                deltas.push(SpectralField::from_modes(lattice.clone(), &[((k1, k2), coef)]));
                if deltas.len() == n {
                    break 'outer;
                }
            }
        }
        let phis = deltas.clone();
        Ok(Self { deltas, phis, lyap_sums: vec![0.0; n], t: state.t, fresh: true })
    }

    pub fn n(&self) -> usize {
        self.deltas.len()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Whether `deltas` coincide with the orthonormal basis (i.e. no steps
    /// since the last reorthonormalization).
    pub fn is_fresh(&self) -> bool {
        self.fresh
    }

    /// The orthonormal basis from the last reorthonormalization.
    pub fn basis(&self) -> &[SpectralField] {
        &self.phis
    }

    /// Raw (possibly stretched) tangent vectors.
    pub fn deltas(&self) -> &[SpectralField] {
        &self.deltas
    }

    /// Accumulated log-stretch per direction.
    pub fn lyap_sums(&self) -> &[f64] {
        &self.lyap_sums
    }

    /// Log of the `n`-dimensional volume element accumulated so far; the
    /// prefix property of Gram-Schmidt makes this exact for every prefix of
    /// a jointly evolved bundle.
    pub fn log_volume_prefix(&self, n: usize) -> f64 {
        self.lyap_sums[..n].iter().sum()
    }

    pub fn log_volume(&self) -> f64 {
        self.log_volume_prefix(self.n())
    }

    /// Modified Gram-Schmidt with a second orthogonalization pass. Returns
    /// the per-direction stretches (diagonal of R); accumulates their logs
    /// into the volume element and Lyapunov sums; resets `deltas` to the new
    /// orthonormal basis.
    ///
    /// Fails with [`Error::RankDeficient`] if a direction collapses below
    /// the degeneracy threshold.
    pub fn reorthonormalize(&mut self) -> Result<Vec<f64>> {
        let n = self.n();
        let mut stretches = Vec::with_capacity(n);
        let mut basis: Vec<SpectralField> = Vec::with_capacity(n);
        for j in 0..n {
            let mut v = self.deltas[j].clone();
            for _pass in 0..2 {
                for phi in basis.iter() {
                    let c = v.inner_product(phi);
                    v.axpy(-c, phi);
                }
            }
            let r = v.l2_norm();
            if r < tol::RANK_DEGENERATE {
                return Err(Error::RankDeficient { direction: j, stretch: r });
            }
            v.scale(1.0 / r);
            stretches.push(r);
            basis.push(v);
        }
        for (sum, r) in self.lyap_sums.iter_mut().zip(&stretches) {
            *sum += r.ln();
        }
        self.phis = basis;
        self.deltas = self.phis.clone();
        self.fresh = true;
        Ok(stretches)
    }

    fn check_aligned(&self, state: &FlowState) -> Result<()> {
        if (self.t - state.t).abs() > 1e-9 {
            return Err(Error::TimeMisaligned { state_t: state.t, bundle_t: self.t });
        }
        Ok(())
    }

    fn require_fresh(&self) -> Result<()> {
        if !self.fresh {
            return Err(Error::StaleBasis);
        }
        Ok(())
    }
}

/// Velocity and gradient grids of a base-state snapshot, shared across
/// tangent directions.
pub(crate) struct StageCache {
    u: VelocityGrids,
    g: GradGrids,
}

impl StageCache {
    fn of(w: &SpectralField) -> Self {
        Self { u: VelocityGrids::of(w), g: GradGrids::of(w) }
    }
}

/// `-B(w, delta) - B(delta, w)` using cached grids of `w`: the nonlinear
/// part of the linearized tendency (the linear part lives in the
/// integrating factors).
fn linearized_advection(cache: &StageCache, delta: &SpectralField) -> SpectralField {
    let lattice = delta.lattice();
    let gd = GradGrids::of(delta);
    let ud = VelocityGrids::of(delta);
    let n = lattice.grid_len();
    let mut prod = vec![0.0; n];
    for i in 0..n {
        prod[i] = cache.u.u1[i] * gd.gx[i]
            + cache.u.u2[i] * gd.gy[i]
            + ud.u1[i] * cache.g.gx[i]
            + ud.u2[i] * cache.g.gy[i];
    }
    let mut out = to_spectral(&prod, lattice);
    out.scale(-1.0);
    out
}

/// Full linearized right-hand side about `state`:
/// `-B(w, delta) - B(delta, w) + Lap delta - L_eps delta`.
pub fn linearized_rhs(
    state: &FlowState,
    params: &FlowParams,
    delta: &SpectralField,
) -> SpectralField {
    let cache = StageCache::of(&state.w);
    let mut out = linearized_advection(&cache, delta);
    let eps = params.epsilon;
    let nu = params.nu;
    let linear = delta.multiplier(|k1, k2| {
        let ksq = (k1 * k1 + k2 * k2) as f64;
        Complex64::new(-nu * ksq, crate::spectral::lambda_k(k1, k2) / eps)
    });
    out.axpy(1.0, &linear);
    out
}

/// Advances the base state and every tangent vector by one IF-RK4 step.
/// The tangent update linearizes each Runge-Kutta stage at the base stage
/// state, so it is the exact differential of the base step. Marks the
/// bundle stale for trace evaluation until the next reorthonormalization.
pub fn step_tangent(
    stepper: &Stepper,
    state: &FlowState,
    bundle: &TangentBundle,
    forcing: &Forcing,
) -> Result<(FlowState, TangentBundle)> {
    bundle.check_aligned(state)?;
    let dt = stepper.dt();
    let (e_half, e_full) = stepper.factors();
    let lattice = state.w.lattice();
    let apply = |factors: &[Complex64], f: &SpectralField| -> SpectralField {
        let mut out = SpectralField::zeros(lattice.clone());
        for (o, (c, e)) in out.coeffs_mut().iter_mut().zip(f.coeffs().iter().zip(factors)) {
            *o = c * e;
        }
        out
    };

    let w = &state.w;
    let c0 = StageCache::of(w);
    let bound = stepper.cfl_bound(c0.u.max_speed);
    if dt > bound {
        return Err(Error::CflViolation { dt, bound, suggested: 0.8 * bound });
    }
    let nonlin = |cache: &StageCache| -> SpectralField {
        let mut n = b_from_parts(&cache.u, &cache.g, lattice);
        n.scale(-1.0);
        n.axpy(1.0, forcing.field());
        n
    };

    // Base stages, keeping each stage's grids for the tangent pass.
    let n1 = nonlin(&c0);
    let mut s = w.clone();
    s.axpy(dt / 2.0, &n1);
    let a1 = apply(e_half, &s);
    let c1 = StageCache::of(&a1);
    let n2 = nonlin(&c1);

    let mut a2 = apply(e_half, w);
    a2.axpy(dt / 2.0, &n2);
    let c2 = StageCache::of(&a2);
    let n3 = nonlin(&c2);

    let mut a3 = apply(e_full, w);
    a3.axpy(dt, &apply(e_half, &n3));
    let c3 = StageCache::of(&a3);
    let n4 = nonlin(&c3);

    let mut w_next = apply(e_full, w);
    w_next.axpy(dt / 6.0, &apply(e_full, &n1));
    let mut mid = n2;
    mid.axpy(1.0, &n3);
    w_next.axpy(dt / 3.0, &apply(e_half, &mid));
    w_next.axpy(dt / 6.0, &n4);
    let next_state = FlowState::new(w_next, state.t + dt);

    // Tangent pass: identical stage combination, advection linearized at
    // the cached base stages.
    let mut next = bundle.clone();
    for delta in next.deltas.iter_mut() {
        let m1 = linearized_advection(&c0, delta);
        let mut s1 = delta.clone();
        s1.axpy(dt / 2.0, &m1);
        let d1 = apply(e_half, &s1);
        let m2 = linearized_advection(&c1, &d1);

        let mut d2 = apply(e_half, delta);
        d2.axpy(dt / 2.0, &m2);
        let m3 = linearized_advection(&c2, &d2);

        let mut d3 = apply(e_full, delta);
        d3.axpy(dt, &apply(e_half, &m3));
        let m4 = linearized_advection(&c3, &d3);

        let mut out = apply(e_full, delta);
        out.axpy(dt / 6.0, &apply(e_full, &m1));
        let mut midt = m2;
        midt.axpy(1.0, &m3);
        out.axpy(dt / 3.0, &apply(e_half, &midt));
        out.axpy(dt / 6.0, &m4);
        *delta = out;
    }
    next.t = state.t + dt;
    next.fresh = false;
    Ok((next_state, next))
}

/// Per-direction diagonal contributions to the traces over the span of a
/// fresh bundle, from which breakdowns for every prefix dimension follow by
/// summation.
#[derive(Debug, Clone)]
pub struct TraceDiagonals {
    pub t: f64,
    /// `||grad phi_j||^2` (dissipation trace).
    pub lap: Vec<f64>,
    /// `(B(w, phi_j), phi_j)`: transport by the base flow (zero up to
    /// rounding; reported as a built-in consistency row).
    pub a0: Vec<f64>,
    /// `(B(phi_j, wbar), phi_j)`: zonal-shear trace term.
    pub bbar: Vec<f64>,
    /// `(B(phi_j, wtilde), phi_j)`: non-zonal trace term.
    pub btilde: Vec<f64>,
    /// `(B(phi_j, w), phi_j)` computed unsplit, for the splitting residual.
    pub btot: Vec<f64>,
    /// `integral (d wbar / dy) phi_j^2`: the zonal-shear quadratic form
    /// whose half, times `i`, is the first decomposition term.
    pub s1: Vec<f64>,
    /// `integral (d^2 wbar / ds dy) phi_j^2`: same form with the
    /// time-differentiated shear.
    pub s2: Vec<f64>,
}

/// Aggregated traces over the first `n` directions at one instant.
#[derive(Debug, Clone, Copy)]
pub struct TraceBreakdown {
    pub t: f64,
    pub n: usize,
    /// `Tr[P (-Lap) P]`.
    pub tr_lap: f64,
    /// `Tr[P B(w, .) P]` (transport; vanishes identically).
    pub tr_a0: f64,
    /// `Tr[P B(., wbar) P]`.
    pub tr_bbar: f64,
    /// `Tr[P B(., wtilde) P]`.
    pub tr_btilde: f64,
    /// `Tr[P A P]` with the advection term evaluated unsplit.
    pub tr_total: f64,
    /// First term of the zonal-shear decomposition, `(i/2) sum_j s1_j`
    /// (purely imaginary by construction).
    pub tr_bbar1: Complex64,
    /// Second term, `(i/2) sum_j s2_j`.
    pub tr_bbar2: Complex64,
    /// Accumulated log volume element of the first `n` directions.
    pub logvol: f64,
}

impl TraceDiagonals {
    /// Breakdown over the first `n` directions.
    pub fn breakdown_prefix(&self, n: usize, bundle: &TangentBundle) -> TraceBreakdown {
        let sum = |v: &[f64]| v[..n].iter().sum::<f64>();
        let (lap, a0) = (sum(&self.lap), sum(&self.a0));
        let btot = sum(&self.btot);
        TraceBreakdown {
            t: self.t,
            n,
            tr_lap: lap,
            tr_a0: a0,
            tr_bbar: sum(&self.bbar),
            tr_btilde: sum(&self.btilde),
            tr_total: lap + a0 + btot,
            tr_bbar1: Complex64::new(0.0, 0.5 * sum(&self.s1)),
            tr_bbar2: Complex64::new(0.0, 0.5 * sum(&self.s2)),
            logvol: bundle.log_volume_prefix(n),
        }
    }
}

/// Computes the per-direction trace contributions over the current
/// orthonormal basis. Requires a fresh, time-aligned bundle.
///
/// Every term reduces to x-frame quadrature: the rotating-frame phases
/// cancel inside diagonal inner products, so no semigroup is applied here.
pub fn trace_diagonals(
    state: &FlowState,
    params: &FlowParams,
    bundle: &TangentBundle,
    forcing: &Forcing,
) -> Result<TraceDiagonals> {
    bundle.check_aligned(state)?;
    bundle.require_fresh()?;
    let lattice = state.w.lattice();
    let wbar = state.w.project_zonal();
    let wtilde = state.w.project_nonzonal();
    let u_w = VelocityGrids::of(&state.w);
    let g_wbar = GradGrids::of(&wbar);
    let g_wtilde = GradGrids::of(&wtilde);
    let g_w = GradGrids::of(&state.w);
    let dy_wbar = to_physical(&wbar.dy());
    // d/ds wbar is the zonal part of the full tendency.
    let ds_wbar = rhs(state, params, forcing).project_zonal();
    let dy_ds_wbar = to_physical(&ds_wbar.dy());

    let n = bundle.n();
    let mut d = TraceDiagonals {
        t: state.t,
        lap: Vec::with_capacity(n),
        a0: Vec::with_capacity(n),
        bbar: Vec::with_capacity(n),
        btilde: Vec::with_capacity(n),
        btot: Vec::with_capacity(n),
        s1: Vec::with_capacity(n),
        s2: Vec::with_capacity(n),
    };
    for phi in bundle.basis() {
        let phi_grid = to_physical(phi);
        let g_phi = GradGrids::of(phi);
        let u_phi = VelocityGrids::of(phi);
        d.lap.push(phi.hm_norm(1).powi(2));
        d.a0.push(advect_inner(&u_w, &g_phi, &phi_grid, lattice));
        d.bbar.push(advect_inner(&u_phi, &g_wbar, &phi_grid, lattice));
        d.btilde.push(advect_inner(&u_phi, &g_wtilde, &phi_grid, lattice));
        d.btot.push(advect_inner(&u_phi, &g_w, &phi_grid, lattice));
        let mut q1 = vec![0.0; phi_grid.len()];
        let mut q2 = vec![0.0; phi_grid.len()];
        for i in 0..phi_grid.len() {
            let p2 = phi_grid[i] * phi_grid[i];
            q1[i] = dy_wbar[i] * p2;
            q2[i] = dy_ds_wbar[i] * p2;
        }
        d.s1.push(grid_integral(&q1, lattice));
        d.s2.push(grid_integral(&q2, lattice));
    }
    Ok(d)
}

/// Full-dimension trace breakdown (see [`trace_diagonals`] for the terms).
pub fn trace_breakdown(
    state: &FlowState,
    params: &FlowParams,
    bundle: &TangentBundle,
    forcing: &Forcing,
) -> Result<TraceBreakdown> {
    let d = trace_diagonals(state, params, bundle, forcing)?;
    Ok(d.breakdown_prefix(bundle.n(), bundle))
}

// ---------------------------------------------------------------------------
// Frame-conjugated operators and projectors for the derivative checks.
// ---------------------------------------------------------------------------

/// Orthonormalizes copies of the bundle's deltas without mutating it.
fn basis_snapshot(deltas: &[SpectralField]) -> Result<Vec<SpectralField>> {
    let mut basis: Vec<SpectralField> = Vec::with_capacity(deltas.len());
    for (j, d) in deltas.iter().enumerate() {
        let mut v = d.clone();
        for _ in 0..2 {
            for phi in basis.iter() {
                let c = v.inner_product(phi);
                v.axpy(-c, phi);
            }
        }
        let r = v.l2_norm();
        if r < tol::RANK_DEGENERATE {
            return Err(Error::RankDeficient { direction: j, stretch: r });
        }
        v.scale(1.0 / r);
        basis.push(v);
    }
    Ok(basis)
}

/// `sum_j (v, phi_j) phi_j` over an orthonormal family.
fn project_span(basis: &[SpectralField], v: &SpectralField) -> SpectralField {
    let mut out = SpectralField::zeros(v.lattice().clone());
    for phi in basis {
        out.axpy(v.inner_product(phi), phi);
    }
    out
}

/// Applies the rotating-frame span projector `P_z(s) = e^{sL} P_x e^{-sL}`.
fn apply_projector_z(
    basis_x: &[SpectralField],
    s: f64,
    eps: f64,
    v: &SpectralField,
) -> SpectralField {
    let vx = v.semigroup_apply(-s, eps);
    project_span(basis_x, &vx).semigroup_apply(s, eps)
}

/// Applies the rotating-frame linearization `A_z = e^{sL} A_x e^{-sL}` with
/// `A_x v = -Lap v + B(w, v) + B(v, w)`.
fn apply_a_z(cache: &StageCache, s: f64, eps: f64, v: &SpectralField) -> SpectralField {
    let vx = v.semigroup_apply(-s, eps);
    let mut ax = linearized_advection(cache, &vx);
    ax.scale(-1.0); // linearized_advection returns -B(w,.) - B(., w)
    let mut lap = vx.laplacian();
    lap.scale(-1.0);
    ax.axpy(1.0, &lap);
    ax.semigroup_apply(s, eps)
}

/// Applies the adjoint `A_z^* = e^{sL} A_x^* e^{-sL}` with
/// `A_x^* chi = -Lap chi - B(w, chi) + T_w chi` (advection skew-adjointness
/// plus the transpose of vortex stretching by `chi`).
fn apply_a_adjoint_z(
    cache: &StageCache,
    s: f64,
    eps: f64,
    v: &SpectralField,
) -> SpectralField {
    let lattice = v.lattice();
    let vx = v.semigroup_apply(-s, eps);
    // -Lap chi
    let mut ax = vx.laplacian();
    ax.scale(-1.0);
    // - B(w, chi)
    let b1 = b_from_parts(&cache.u, &GradGrids::of(&vx), lattice);
    ax.axpy(-1.0, &b1);
    // + transpose of chi -> B(chi, w)
    ax.axpy(1.0, &advection_transpose(&vx, &cache.g, lattice));
    ax.semigroup_apply(s, eps)
}

/// Residuals of the projector-derivative identity
///
/// ```text
///     dP/ds h = -(I - P) A P h - P A^* (I - P) h
/// ```
///
/// in the rotating frame, comparing a central finite difference of the
/// evolving span projector against the analytic right-hand side.
#[derive(Debug, Clone, Copy)]
pub struct ProjectorDerivativeCheck {
    /// Relative residual for a test vector inside the span (only the first
    /// term contributes).
    pub residual_range: f64,
    /// Relative residual for a generic test vector (both terms contribute,
    /// exercising the adjoint).
    pub residual_general: f64,
    /// Norm of the analytic derivative for the generic vector.
    pub analytic_norm: f64,
    /// Norm of the finite-difference derivative for the generic vector.
    pub fd_norm: f64,
}

/// Runs the projector-derivative check at the bundle's current time with
/// finite-difference half-width `dt`. The bundle is evolved two steps
/// internally; the caller's bundle is untouched.
pub fn projector_derivative_check(
    state: &FlowState,
    params: &FlowParams,
    bundle: &TangentBundle,
    forcing: &Forcing,
    dt: f64,
) -> Result<ProjectorDerivativeCheck> {
    bundle.check_aligned(state)?;
    let eps = params.epsilon;
    let lattice = state.w.lattice();
    let stepper = Stepper::new(lattice, params, dt)?;

    let mut b0 = bundle.clone();
    if !b0.is_fresh() {
        b0.reorthonormalize()?;
    }
    let s0 = state.clone();
    let (s1, b1) = step_tangent(&stepper, &s0, &b0, forcing)?;
    let (s2, b2) = step_tangent(&stepper, &s1, &b1, forcing)?;
    let basis0 = basis_snapshot(b0.deltas())?;
    let basis1 = basis_snapshot(b1.deltas())?;
    let basis2 = basis_snapshot(b2.deltas())?;
    let (t0, tc, t2) = (s0.t, s1.t, s2.t);
    let cache_c = StageCache::of(&s1.w);

    let run = |h: &SpectralField| -> (f64, f64, f64) {
        // Central difference of P_z applied to the fixed vector h.
        let p2 = apply_projector_z(&basis2, t2, eps, h);
        let p0 = apply_projector_z(&basis0, t0, eps, h);
        let mut fd = p2.sub(&p0);
        fd.scale(1.0 / (2.0 * dt));
        // Analytic: -(I - P) A P h - P A^* (I - P) h at the center.
        let ph = apply_projector_z(&basis1, tc, eps, h);
        let aph = apply_a_z(&cache_c, tc, eps, &ph);
        let mut term1 = aph.sub(&apply_projector_z(&basis1, tc, eps, &aph));
        term1.scale(-1.0);
        let hperp = h.sub(&ph);
        let astar = apply_a_adjoint_z(&cache_c, tc, eps, &hperp);
        let mut term2 = apply_projector_z(&basis1, tc, eps, &astar);
        term2.scale(-1.0);
        let analytic = term1.add(&term2);
        let resid = fd.sub(&analytic).l2_norm();
        let scale = analytic.l2_norm().max(aph.l2_norm()).max(1e-300);
        (resid / scale, analytic.l2_norm(), fd.l2_norm())
    };

    // In-range vector: the first center-basis direction, pushed to z frame.
    let h_range = basis1[0].semigroup_apply(tc, eps);
    let (residual_range, _, _) = run(&h_range);
    // Generic vector: a fixed random field with content outside the span.
    let h_gen = SpectralField::random_in_class(lattice.clone(), 0x9e3779b9, 1.0, 4.0);
    let (residual_general, analytic_norm, fd_norm) = run(&h_gen);

    Ok(ProjectorDerivativeCheck { residual_range, residual_general, analytic_norm, fd_norm })
}

/// Terms and residuals of the zonal-shear trace decomposition
///
/// ```text
///     Tr[P Bbar P] = -eps d/ds Tr[P b1 P] + 2 eps Tr[P b1 (dP/ds)]
///                    + eps Tr[P b2 P],
/// ```
///
/// where `b1 = (1/2) (d wbar/dy)` and `b2 = (1/2) (d^2 wbar/ds dy)` act by
/// multiplication in the stationary frame. The time derivative of the first
/// trace is formed by central differences; the projector derivative enters
/// once analytically (via `dP/ds P = -(I-P) A P`) and once by finite
/// differences, and both paths are reported.
#[derive(Debug, Clone, Copy)]
pub struct BbarDecompositionCheck {
    /// `Tr[P Bbar P]` at the center time (the left-hand side).
    pub lhs: f64,
    /// Right-hand side with the analytic projector derivative.
    pub rhs_analytic: f64,
    /// Right-hand side with the finite-difference projector derivative.
    pub rhs_fd: f64,
    pub residual_analytic: f64,
    pub residual_fd: f64,
    /// `(i/2) sum_j integral (d wbar/dy) phi_j^2` at the center: the first
    /// decomposition trace as reported in breakdowns (purely imaginary).
    pub tr_bbar1: Complex64,
    /// Center value of the second decomposition trace.
    pub tr_bbar2: Complex64,
}

/// Verifies the zonal-shear trace decomposition at the bundle's current
/// time, with finite-difference half-width `dt` (which must resolve the
/// rotation period: `dt << eps`).
pub fn bbar_decomposition_check(
    state: &FlowState,
    params: &FlowParams,
    bundle: &TangentBundle,
    forcing: &Forcing,
    dt: f64,
) -> Result<BbarDecompositionCheck> {
    bundle.check_aligned(state)?;
    let eps = params.epsilon;
    let lattice = state.w.lattice();
    let stepper = Stepper::new(lattice, params, dt)?;

    let mut b0 = bundle.clone();
    if !b0.is_fresh() {
        b0.reorthonormalize()?;
    }
    let s0 = state.clone();
    let (s1, b1) = step_tangent(&stepper, &s0, &b0, forcing)?;
    let (s2, b2) = step_tangent(&stepper, &s1, &b1, forcing)?;
    let basis0 = basis_snapshot(b0.deltas())?;
    let basis1 = basis_snapshot(b1.deltas())?;
    let basis2 = basis_snapshot(b2.deltas())?;

    // G(tau) = (1/2) sum_j integral (d wbar/dy)(tau) phi_j(tau)^2.
    let shear_form = |st: &FlowState, basis: &[SpectralField]| -> f64 {
        let dyw = to_physical(&st.w.project_zonal().dy());
        let mut acc = 0.0;
        for phi in basis {
            let pg = to_physical(phi);
            let mut q = vec![0.0; pg.len()];
            for i in 0..pg.len() {
                q[i] = dyw[i] * pg[i] * pg[i];
            }
            acc += grid_integral(&q, lattice);
        }
        0.5 * acc
    };
    let g0 = shear_form(&s0, &basis0);
    let g2 = shear_form(&s2, &basis2);
    let dg_ds = (g2 - g0) / (2.0 * dt);

    // Center-time quantities.
    let dyw_c = to_physical(&s1.w.project_zonal().dy());
    let wbar_c = s1.w.project_zonal();
    let g_wbar_c = GradGrids::of(&wbar_c);
    let cache_c = StageCache::of(&s1.w);
    let tc = s1.t;

    // lhs = Tr[P Bbar P] = sum_j (B(phi_j, wbar), phi_j).
    let mut lhs = 0.0;
    // M_analytic = -(1/2) sum_j integral (d wbar/dy) q_j phi_j with
    // q_j = (I - P_x)(A_x phi_j).
    let mut m_analytic = 0.0;
    // M_fd replaces (dP/ds) phi_j by the projector finite difference.
    let mut m_fd = 0.0;
    // K = (1/2) sum_j integral (d^2 wbar / ds dy) phi_j^2.
    let mut k_term = 0.0;
    let ds_wbar = rhs(&s1, params, forcing).project_zonal();
    let dy_ds_wbar = to_physical(&ds_wbar.dy());
    let mut s1_sum = 0.0;
    let mut s2_sum = 0.0;

    for phi in &basis1 {
        let pg = to_physical(phi);
        let u_phi = VelocityGrids::of(phi);
        lhs += advect_inner(&u_phi, &g_wbar_c, &pg, lattice);

        // A_x phi = -Lap phi + B(w, phi) + B(phi, w).
        let mut a_phi = linearized_advection(&cache_c, phi);
        a_phi.scale(-1.0);
        let mut lap = phi.laplacian();
        lap.scale(-1.0);
        a_phi.axpy(1.0, &lap);
        let q = a_phi.sub(&project_span(&basis1, &a_phi));
        let qg = to_physical(&q);

        // FD projector derivative applied to the z-frame basis vector,
        // mapped back to the x frame at the center time.
        let phi_z = phi.semigroup_apply(tc, eps);
        let dp = apply_projector_z(&basis2, s2.t, eps, &phi_z)
            .sub(&apply_projector_z(&basis0, s0.t, eps, &phi_z));
        let vg = to_physical(&dp.semigroup_apply(-tc, eps));

        let mut acc_m = 0.0;
        let mut acc_fd = 0.0;
        let mut acc_k = 0.0;
        let mut acc_s1 = 0.0;
        for i in 0..pg.len() {
            acc_m += dyw_c[i] * qg[i] * pg[i];
            acc_fd += dyw_c[i] * vg[i] * pg[i];
            acc_k += dy_ds_wbar[i] * pg[i] * pg[i];
            acc_s1 += dyw_c[i] * pg[i] * pg[i];
        }
        let vol = 4.0 * std::f64::consts::PI.powi(2) / lattice.grid_len() as f64;
        m_analytic += -0.5 * acc_m * vol;
        m_fd += 0.5 * acc_fd * vol / (2.0 * dt);
        k_term += 0.5 * acc_k * vol;
        s1_sum += acc_s1 * vol;
        s2_sum += acc_k * vol;
    }

    let rhs_analytic = -eps * dg_ds + 2.0 * eps * m_analytic + eps * k_term;
    let rhs_fd = -eps * dg_ds + 2.0 * eps * m_fd + eps * k_term;
    let scale = lhs
        .abs()
        .max((eps * dg_ds).abs())
        .max((2.0 * eps * m_analytic).abs())
        .max((eps * k_term).abs())
        .max(1e-300);
    Ok(BbarDecompositionCheck {
        lhs,
        rhs_analytic,
        rhs_fd,
        residual_analytic: (lhs - rhs_analytic).abs() / scale,
        residual_fd: (lhs - rhs_fd).abs() / scale,
        tr_bbar1: Complex64::new(0.0, 0.5 * s1_sum),
        tr_bbar2: Complex64::new(0.0, 0.5 * s2_sum),
    })
}

// ---------------------------------------------------------------------------
// Window drivers, Lyapunov spectra, and the contraction-dimension search.
// ---------------------------------------------------------------------------

/// Fixed-step joint run policy.
#[derive(Debug, Clone, Copy)]
pub struct TangentRunOptions {
    pub dt: f64,
    pub steps: usize,
    /// Steps between reorthonormalizations (and samples).
    pub reorth_stride: usize,
}

/// Advances base state and bundle jointly for `steps` steps, calling
/// `on_sample` at every reorthonormalization instant (including step 0)
/// with a fresh basis and its trace diagonals.
pub fn run_tangent_window(
    state: &FlowState,
    params: &FlowParams,
    bundle: &TangentBundle,
    forcing: &Forcing,
    opts: &TangentRunOptions,
    mut on_sample: impl FnMut(&FlowState, &TangentBundle, &TraceDiagonals),
) -> Result<(FlowState, TangentBundle)> {
    if opts.reorth_stride == 0 {
        return Err(Error::InvalidParam {
            name: "reorth_stride",
            reason: "must be positive".into(),
        });
    }
    let stepper = Stepper::new(state.w.lattice(), params, opts.dt)?;
    let mut cur = state.clone();
    let mut bun = bundle.clone();
    if !bun.is_fresh() {
        bun.reorthonormalize()?;
    }
    let d = trace_diagonals(&cur, params, &bun, forcing)?;
    on_sample(&cur, &bun, &d);
    let mut since = 0usize;
    for _ in 0..opts.steps {
        let (ns, nb) = step_tangent(&stepper, &cur, &bun, forcing)?;
        cur = ns;
        bun = nb;
        since += 1;
        if since == opts.reorth_stride {
            since = 0;
            bun.reorthonormalize()?;
            let d = trace_diagonals(&cur, params, &bun, forcing)?;
            on_sample(&cur, &bun, &d);
        }
    }
    if since != 0 {
        bun.reorthonormalize()?;
        let d = trace_diagonals(&cur, params, &bun, forcing)?;
        on_sample(&cur, &bun, &d);
    }
    Ok((cur, bun))
}

/// Lyapunov spectrum estimate from stretch accumulation.
#[derive(Debug, Clone)]
pub struct LyapunovReport {
    /// Exponents sorted descending.
    pub exponents: Vec<f64>,
    /// Five-block error bars, aligned with `exponents`.
    pub errbars: Vec<f64>,
    /// Kaplan-Yorke dimension from the sorted exponents; 0 when the leading
    /// exponent is negative, `n` when every partial sum is non-negative.
    pub kaplan_yorke: f64,
    pub horizon: f64,
    /// True when the error bar of the leading exponent is small against the
    /// spread of the spectrum (or its own magnitude for flat spectra).
    pub well_resolved: bool,
}

/// Kaplan-Yorke dimension of a descending exponent sequence.
pub fn kaplan_yorke_dimension(sorted_desc: &[f64]) -> f64 {
    if sorted_desc.is_empty() || sorted_desc[0] < 0.0 {
        return 0.0;
    }
    let mut partial = 0.0;
    for (j, &lam) in sorted_desc.iter().enumerate() {
        if partial + lam < 0.0 {
            return j as f64 + partial / lam.abs().max(1e-300);
        }
        partial += lam;
    }
    sorted_desc.len() as f64
}

/// Estimates the `n` leading Lyapunov exponents over `horizon` time units
/// from `state` (which should already sit on the attractor).
pub fn lyapunov_spectrum(
    state: &FlowState,
    params: &FlowParams,
    forcing: &Forcing,
    n: usize,
    opts: &TangentRunOptions,
) -> Result<LyapunovReport> {
    let bundle = TangentBundle::new(state, n)?;
    let horizon = opts.dt * opts.steps as f64;
    let n_blocks = crate::diagnostics::N_BLOCKS;
    let block_len = horizon / n_blocks as f64;
    let mut block_start_sums = bundle.lyap_sums().to_vec();
    let mut block_start_t = state.t;
    let mut block_rates: Vec<Vec<f64>> = Vec::new();
    let (_, final_bundle) = run_tangent_window(
        state,
        params,
        &bundle,
        forcing,
        opts,
        |s, b, _d| {
            let elapsed = s.t - block_start_t;
            if elapsed >= block_len - 1e-9 && block_rates.len() < n_blocks {
                let rates: Vec<f64> = b
                    .lyap_sums()
                    .iter()
                    .zip(&block_start_sums)
                    .map(|(cur, start)| (cur - start) / elapsed)
                    .collect();
                block_rates.push(rates);
                block_start_sums = b.lyap_sums().to_vec();
                block_start_t = s.t;
            }
        },
    )?;
    let total_t = horizon.max(1e-300);
    let mut pairs: Vec<(f64, f64)> = final_bundle
        .lyap_sums()
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let lam = s / total_t;
            let err = if block_rates.len() >= 2 {
                let vals: Vec<f64> = block_rates.iter().map(|r| r[j]).collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>()
                    / (vals.len() - 1) as f64;
                (var / vals.len() as f64).sqrt()
            } else {
                0.0
            };
            (lam, err)
        })
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let exponents: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let errbars: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let spread = (exponents[0] - exponents[exponents.len() - 1]).abs();
    let well_resolved = errbars[0] <= 0.2 * spread.max(exponents[0].abs()).max(1e-3);
    Ok(LyapunovReport {
        kaplan_yorke: kaplan_yorke_dimension(&exponents),
        exponents,
        errbars,
        horizon: total_t,
        well_resolved,
    })
}

/// Result of the contraction-dimension search.
#[derive(Debug, Clone)]
pub struct NStarReport {
    /// Smallest `N` whose mean total trace is positive (volume contraction),
    /// `None` if no prefix contracts up to `n_max`.
    pub n_star: Option<usize>,
    /// `(mean, error bar)` of `Tr[P A P]` per prefix dimension (index
    /// `N - 1`).
    pub trace_means: Vec<(f64, f64)>,
    /// `(mean, error bar)` of the dissipation trace per prefix dimension.
    pub lap_means: Vec<(f64, f64)>,
    /// Exact lower bounds: the sum of the `N` smallest Laplacian
    /// eigenvalues `|k|^2` over the real lattice directions.
    pub weyl_sums: Vec<f64>,
    pub horizon: f64,
}

/// Sums of the `N` smallest Laplacian eigenvalues over real directions
/// (each conjugate mode pair contributes twice), for `N = 1..=n_max`.
pub fn weyl_eigenvalue_sums(lattice: &crate::spectral::Lattice, n_max: usize) -> Vec<f64> {
    let mut eigs: Vec<f64> = Vec::new();
    for (k1, k2) in lattice.modes_by_increasing_norm() {
        let e = (k1 * k1 + k2 * k2) as f64;
        eigs.push(e);
        eigs.push(e);
        if eigs.len() >= n_max {
            break;
        }
    }
    eigs.truncate(n_max);
    let mut sums = Vec::with_capacity(n_max);
    let mut acc = 0.0;
    for e in eigs {
        acc += e;
        sums.push(acc);
    }
    sums
}

/// Runs one joint window at the largest dimension and reads off the mean
/// trace of every prefix dimension: the Gram-Schmidt prefix property makes
/// the single run equivalent to separate runs at each `N`.
pub fn n_star_search(
    state: &FlowState,
    params: &FlowParams,
    forcing: &Forcing,
    n_max: usize,
    opts: &TangentRunOptions,
) -> Result<NStarReport> {
    use crate::diagnostics::RunningTimeAverage;
    let bundle = TangentBundle::new(state, n_max)?;
    let mut trace_avgs: Vec<RunningTimeAverage> =
        (0..n_max).map(|_| RunningTimeAverage::new()).collect();
    let mut lap_avgs: Vec<RunningTimeAverage> =
        (0..n_max).map(|_| RunningTimeAverage::new()).collect();
    let mut sample_err: Option<Error> = None;
    run_tangent_window(state, params, &bundle, forcing, opts, |s, b, d| {
        if sample_err.is_some() {
            return;
        }
        for n in 1..=n_max {
            let br = d.breakdown_prefix(n, b);
            if let Err(e) = trace_avgs[n - 1]
                .update(s.t, br.tr_total)
                .and_then(|_| lap_avgs[n - 1].update(s.t, br.tr_lap))
            {
                sample_err = Some(e);
                return;
            }
        }
    })?;
    if let Some(e) = sample_err {
        return Err(e);
    }
    let trace_means: Vec<(f64, f64)> =
        trace_avgs.iter().map(|a| a.mean_with_error()).collect();
    let lap_means: Vec<(f64, f64)> = lap_avgs.iter().map(|a| a.mean_with_error()).collect();
    let n_star = trace_means.iter().position(|&(m, _)| m > 0.0).map(|i| i + 1);
    Ok(NStarReport {
        n_star,
        trace_means,
        lap_means,
        weyl_sums: weyl_eigenvalue_sums(state.w.lattice(), n_max),
        horizon: opts.dt * opts.steps as f64,
    })
}

/// The collective-velocity concentration ratio over a fresh basis:
///
/// ```text
///     || sum_j |u(phi_j)|^2 ||_inf / (1 + max(0, ln Tr[P (-Lap) P]))
/// ```
///
/// For orthonormal vorticity families the numerator grows at most
/// logarithmically with the dissipation trace, so the ratio stays bounded
/// as the family grows; doubling experiments against a small baseline make
/// that observable.
pub fn collective_velocity_ratio(bundle: &TangentBundle) -> Result<f64> {
    collective_velocity_ratio_prefix(bundle, bundle.n())
}

/// Same ratio over the first `n` basis directions only. Gram-Schmidt prefix
/// consistency makes this the ratio an `n`-dimensional bundle would report,
/// so baselines at small `n` come for free from one large bundle.
pub fn collective_velocity_ratio_prefix(bundle: &TangentBundle, n: usize) -> Result<f64> {
    bundle.require_fresh()?;
    if n == 0 || n > bundle.n() {
        return Err(Error::InvalidParam {
            name: "n",
            reason: format!("need 1 <= n <= {}, got {n}", bundle.n()),
        });
    }
    let lattice = bundle.basis()[0].lattice().clone();
    let mut sumsq = vec![0.0; lattice.grid_len()];
    let mut tr_lap = 0.0;
    for phi in &bundle.basis()[..n] {
        let u = VelocityGrids::of(phi);
        for i in 0..sumsq.len() {
            sumsq[i] += u.u1[i] * u.u1[i] + u.u2[i] * u.u2[i];
        }
        tr_lap += phi.hm_norm(1).powi(2);
    }
    let max = sumsq.iter().cloned().fold(0.0, f64::max);
    Ok(max / (1.0 + tr_lap.ln().max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Forcing;
    use crate::spectral::make_lattice;

    fn heat_setup(n: usize) -> (FlowState, FlowParams, Forcing, TangentBundle) {
        let lat = make_lattice(16, 16).unwrap();
        let state = FlowState::new(SpectralField::zeros(lat.clone()), 0.0);
        let params = FlowParams::new(0.05, 1.0).unwrap();
        let forcing = Forcing::zero(&lat);
        let bundle = TangentBundle::new(&state, n).unwrap();
        (state, params, forcing, bundle)
    }

    #[test]
    fn seeds_are_orthonormal_low_modes() {
        let (_, _, _, bundle) = heat_setup(6);
        for (i, a) in bundle.basis().iter().enumerate() {
            for (j, b) in bundle.basis().iter().enumerate() {
                let ip = a.inner_product(b);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-13, "({i},{j}): {ip}");
            }
        }
        // First two directions are cos(x2)/sin(x2) (mode (0,1)).
        assert!(bundle.basis()[0].coeff(0, 1).re > 0.0);
        assert!(bundle.basis()[1].coeff(0, 1).im < 0.0);
    }

    #[test]
    fn linearized_rhs_matches_finite_difference() {
        // rhs is quadratic in w, so the symmetric difference is exact up to
        // rounding: (rhs(w + h d) - rhs(w - h d)) / 2h = linearization.
        let lat = make_lattice(16, 16).unwrap();
        let params = FlowParams::new(0.3, 2.0).unwrap();
        let forcing = Forcing::mixed(&lat, 2.0, 1.0, 1.0).unwrap();
        let w = SpectralField::random_in_class(lat.clone(), 5, 1.0, 3.0);
        let d = SpectralField::random_in_class(lat.clone(), 6, 1.0, 3.0);
        let h = 1e-3;
        let mut wp = w.clone();
        wp.axpy(h, &d);
        let mut wm = w.clone();
        wm.axpy(-h, &d);
        let rp = rhs(&FlowState::new(wp, 0.0), &params, &forcing);
        let rm = rhs(&FlowState::new(wm, 0.0), &params, &forcing);
        let mut fd = rp.sub(&rm);
        fd.scale(1.0 / (2.0 * h));
        let lin = linearized_rhs(&FlowState::new(w, 0.0), &params, &d);
        let err = fd.sub(&lin).l2_norm() / lin.l2_norm();
        assert!(err < 1e-10, "FD mismatch {err}");
    }

    #[test]
    fn reorthonormalize_reports_scales() {
        let (_, _, _, mut bundle) = heat_setup(3);
        // Already orthonormal: all stretches 1.
        let s = bundle.reorthonormalize().unwrap();
        assert!(s.iter().all(|&r| (r - 1.0).abs() < 1e-13));
        assert!(bundle.log_volume().abs() < 1e-12);
        // Double one vector: its stretch doubles, volume gains ln 2.
        bundle.deltas[1].scale(2.0);
        bundle.fresh = false;
        let s = bundle.reorthonormalize().unwrap();
        assert!((s[0] - 1.0).abs() < 1e-13);
        assert!((s[1] - 2.0).abs() < 1e-13);
        assert!((bundle.log_volume() - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn pure_heat_exponents_and_volume_duality_are_exact() {
        // With w = 0 the linearization is -Lap - L_eps; each seeded mode
        // decays at exactly e^{-|k|^2 t} regardless of eps, so the exponents
        // are -|k_j|^2 with lattice multiplicity and the volume rate equals
        // minus the trace exactly.
        let (state, params, forcing, bundle) = heat_setup(6);
        let opts = TangentRunOptions { dt: 1e-2, steps: 100, reorth_stride: 10 };
        let mut traces = Vec::new();
        let (_, final_bundle) = run_tangent_window(
            &state,
            &params,
            &bundle,
            &forcing,
            &opts,
            |_s, _b, d| {
                traces.push(d.lap.iter().sum::<f64>());
            },
        )
        .unwrap();
        let t_total = 1.0;
        // Exponents: modes (0,1) and (1,0) give |k|^2 = 1 four times, then
        // (1,-1), (1,1) give 2: lyap sums / t = [-1,-1,-1,-1,-2,-2].
        let want = [-1.0, -1.0, -1.0, -1.0, -2.0, -2.0];
        for (j, &s) in final_bundle.lyap_sums().iter().enumerate() {
            assert!(
                (s / t_total - want[j]).abs() < 1e-10,
                "direction {j}: {} vs {}",
                s / t_total,
                want[j]
            );
        }
        // Volume/trace duality, exact for the heat flow: logvol = -tr * t.
        let tr = traces[0]; // constant in time here
        assert!(traces.iter().all(|&x| (x - tr).abs() < 1e-10));
        assert!((final_bundle.log_volume() + tr * t_total).abs() < 1e-9);
    }

    #[test]
    fn projector_is_constant_for_heat_flow() {
        // Spans of Laplacian eigenmodes are invariant: dP/ds = 0 to
        // rounding, and the analytic formula agrees.
        let (state, params, forcing, bundle) = heat_setup(2);
        let check =
            projector_derivative_check(&state, &params, &bundle, &forcing, 1e-3).unwrap();
        assert!(check.residual_range < 1e-6, "range residual {}", check.residual_range);
        assert!(check.residual_general < 1e-6, "general residual {}", check.residual_general);
    }

    #[test]
    fn kaplan_yorke_cases() {
        assert_eq!(kaplan_yorke_dimension(&[-0.5, -1.0]), 0.0);
        // lambda = (1, -2): D = 1 + 1/2.
        assert!((kaplan_yorke_dimension(&[1.0, -2.0]) - 1.5).abs() < 1e-12);
        // All non-negative partial sums: saturates at n.
        assert_eq!(kaplan_yorke_dimension(&[1.0, 0.5]), 2.0);
    }

    #[test]
    fn weyl_sums_match_enumeration() {
        let lat = make_lattice(16, 16).unwrap();
        let sums = weyl_eigenvalue_sums(&lat, 6);
        assert_eq!(sums, vec![1.0, 2.0, 3.0, 4.0, 6.0, 8.0]);
    }
}
