//! Acceptance suite: ten numbered criteria covering operator identities,
//! trace/volume machinery, scaling laws, attractor collapse, steady-state
//! continuity, the energy budget, and the zonal-shear trace decay.
//!
//! Each criterion prints exactly one `criterion N: PASS/FAIL — detail` line
//! (visible with `--nocapture`, or automatically on failure) and asserts its
//! verdict. Tolerances are pinned inline next to each measurement.

use std::sync::Arc;

use once_cell::sync::Lazy;

use betaplane::diagnostics::{check_energy_budget, check_fcheck_orthogonality, fit_power_law, RunningTimeAverage};
use betaplane::dynamics::{
    evolve, run_to_stationarity, EvolveOptions, FlowParams, FlowState, Forcing,
    StationarityOptions,
};
use betaplane::limit1d::{
    default_rhs_tol, h1_distance, limit_steady_state_2d, steady_state_fixed_point,
};
use betaplane::spectral::{
    bilinear_b, grid_integral, lambda_k, make_lattice, to_physical, Lattice, SpectralField,
};
use betaplane::tangent::{
    bbar_decomposition_check, lyapunov_spectrum, n_star_search, projector_derivative_check,
    run_tangent_window, TangentBundle, TangentRunOptions,
};
use betaplane::Complex64;
use betaplane_cli::commands::limit::decomposition_window;

fn verdict(criterion: usize, pass: bool, detail: &str) -> bool {
    println!("criterion {criterion}: {} — {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn grid(n: usize) -> Arc<Lattice> {
    make_lattice(n, n).expect("lattice")
}

/// Settles a seeded random start onto the attractor for the given physics.
fn settled_state(
    lat: &Arc<Lattice>,
    params: &FlowParams,
    forcing: &Forcing,
    seed: u64,
    t_min: f64,
    dt_max: f64,
) -> FlowState {
    let w0 = SpectralField::random_in_class(lat.clone(), seed, 1.0, 2.0);
    let st_opts = StationarityOptions {
        window: (t_min / 5.0).clamp(2.0, 10.0),
        t_min,
        t_max: t_min.max(10.0) * 4.0,
        ..StationarityOptions::default()
    };
    let ev = EvolveOptions { dt_max, ..EvolveOptions::default() };
    let (state, _) =
        run_to_stationarity(&FlowState::new(w0, 0.0), params, forcing, &st_opts, &ev)
            .expect("burn-in");
    state
}

// ---------------------------------------------------------------------------
// Criterion 1: operator identity suite at 32x32.
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_operator_identities() {
    let lat = grid(32);
    let eps = 0.1;
    let theta = SpectralField::random_in_class(lat.clone(), 101, 1.0, 3.0);
    let theta1 = SpectralField::random_in_class(lat.clone(), 102, 0.7, 3.0);

    // Skew-adjointness of the rotation operator: |(L theta, theta)| over ||theta||^2.
    let rot = theta.multiplier(|k1, k2| Complex64::new(0.0, -lambda_k(k1, k2) / eps));
    let skew = rot.inner_product(&theta).abs() / theta.inner_product(&theta);

    // Advection energy neutrality: (B(theta1, theta2), theta2).
    let neutral = bilinear_b(&theta1, &theta).inner_product(&theta).abs()
        / (theta1.l2_norm() * theta.l2_norm() * theta.l2_norm());

    // Zonal-zonal advection vanishes exactly.
    let z1 = SpectralField::random_in_class(lat.clone(), 103, 1.0, 3.0).project_zonal();
    let z2 = SpectralField::random_in_class(lat.clone(), 104, 1.0, 3.0).project_zonal();
    let zonal_zonal = bilinear_b(&z1, &z2).l2_norm();

    // Semigroup unitarity.
    let unitarity =
        (theta.semigroup_apply(0.37, eps).l2_norm() - theta.l2_norm()).abs() / theta.l2_norm();

    // Forcing-orthogonality identity for a symmetry-class forcing.
    let forcing = Forcing::mixed(&lat, 2.0, 1.0, 1.0).expect("forcing");
    let orth = check_fcheck_orthogonality(&forcing);

    // Parseval: grid quadrature of w^2 against the spectral inner product.
    let sq: Vec<f64> = to_physical(&theta).iter().map(|v| v * v).collect();
    let parseval =
        (grid_integral(&sq, &lat) - theta.inner_product(&theta)).abs() / theta.inner_product(&theta);

    let pass = skew < 1e-12
        && neutral < 1e-10
        && zonal_zonal == 0.0
        && unitarity < 1e-12
        && orth < 1e-12
        && parseval < 1e-10;
    assert!(verdict(
        1,
        pass,
        &format!(
            "skewness {skew:.2e} (<1e-12), neutrality {neutral:.2e} (<1e-10), \
             zonal-zonal {zonal_zonal:.1e} (=0), unitarity {unitarity:.2e} (<1e-12), \
             forcing orthogonality {orth:.2e} (<1e-12), Parseval {parseval:.2e} (<1e-10)"
        )
    ));
}

// ---------------------------------------------------------------------------
// Criterion 2: trace-split identity along a 64x64 trajectory with N = 6.
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_trace_split_identity() {
    let lat = grid(64);
    let params = FlowParams::new(0.5, 30.0).expect("params");
    let forcing = Forcing::mixed(&lat, 30.0, 1.0, 1.0).expect("forcing");
    let w0 = SpectralField::random_in_class(lat.clone(), 201, 0.5, 2.0);
    let ev = EvolveOptions { dt_max: 2e-3, ..EvolveOptions::default() };
    let (state, _) =
        evolve(&FlowState::new(w0, 0.0), &params, &forcing, 1.0, &ev, |_| {}).expect("evolve");

    let bundle = TangentBundle::new(&state, 6).expect("bundle");
    let opts = TangentRunOptions { dt: 1e-3, steps: 200, reorth_stride: 5 };
    let mut split_max = 0.0f64;
    let mut a0_max = 0.0f64;
    run_tangent_window(&state, &params, &bundle, &forcing, &opts, |_, b, d| {
        let br = d.breakdown_prefix(6, b);
        let btot = br.tr_total - br.tr_lap - br.tr_a0;
        let scale = br.tr_lap.abs().max(btot.abs()).max(1e-300);
        split_max = split_max.max((br.tr_bbar + br.tr_btilde - btot).abs() / scale);
        a0_max = a0_max.max(br.tr_a0.abs() / scale);
    })
    .expect("window");

    let pass = split_max < 1e-8 && a0_max < 1e-8;
    assert!(verdict(
        2,
        pass,
        &format!("split residual {split_max:.2e}, transport trace {a0_max:.2e} (both <1e-8, N=6, 64x64)")
    ));
}

// ---------------------------------------------------------------------------
// Criterion 3: volume/trace duality converges at order 2 under dt halving.
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_volume_trace_duality_order() {
    let lat = grid(32);
    let params = FlowParams::new(0.5, 30.0).expect("params");
    let forcing = Forcing::mixed(&lat, 30.0, 1.0, 1.0).expect("forcing");
    let w0 = SpectralField::random_in_class(lat.clone(), 301, 0.5, 2.0);
    let ev = EvolveOptions { dt_max: 2e-3, ..EvolveOptions::default() };
    let (state, _) =
        evolve(&FlowState::new(w0, 0.0), &params, &forcing, 2.0, &ev, |_| {}).expect("evolve");

    // Mean relative residual of d(logV)/dt = -Tr over one window; the
    // sampling interval (reorth stride x dt) halves with dt, so the central
    // difference should converge at second order.
    let residual = |dt: f64| -> f64 {
        let steps = (0.32 / dt).round() as usize;
        let opts = TangentRunOptions { dt, steps, reorth_stride: 5 };
        let bundle = TangentBundle::new(&state, 4).expect("bundle");
        let mut samples: Vec<(f64, f64, f64)> = Vec::new();
        run_tangent_window(&state, &params, &bundle, &forcing, &opts, |s, b, d| {
            let br = d.breakdown_prefix(4, b);
            samples.push((s.t, br.logvol, br.tr_total));
        })
        .expect("window");
        let mut acc = 0.0;
        let mut count = 0usize;
        for i in 1..samples.len() - 1 {
            let (t0, v0, _) = samples[i - 1];
            let (_, _, tr) = samples[i];
            let (t2, v2, _) = samples[i + 1];
            let rate = (v2 - v0) / (t2 - t0);
            acc += (rate + tr).abs() / tr.abs().max(1e-300);
            count += 1;
        }
        acc / count as f64
    };

    let r_coarse = residual(4e-3);
    let r_mid = residual(2e-3);
    let r_fine = residual(1e-3);
    let order1 = (r_coarse / r_mid).log2();
    let order2 = (r_mid / r_fine).log2();
    let order = 0.5 * (order1 + order2);

    let pass = (1.7..=2.3).contains(&order);
    assert!(verdict(
        3,
        pass,
        &format!(
            "measured order {order:.3} (window [1.7, 2.3]; residuals {r_coarse:.2e} -> {r_mid:.2e} -> {r_fine:.2e} at dt 4e-3/2e-3/1e-3)"
        )
    ));
}

// ---------------------------------------------------------------------------
// Criterion 4: projector-derivative and zonal-shear decomposition identities.
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_projector_and_shear_decomposition() {
    let lat = grid(32);
    let params = FlowParams::new(0.1, 30.0).expect("params");
    let forcing = Forcing::mixed(&lat, 30.0, 1.0, 1.0).expect("forcing");
    let w0 = SpectralField::random_in_class(lat.clone(), 401, 0.5, 2.0);
    let ev = EvolveOptions { dt_max: 1e-3, ..EvolveOptions::default() };
    let (state, _) =
        evolve(&FlowState::new(w0, 0.0), &params, &forcing, 2.0, &ev, |_| {}).expect("evolve");

    // Warm the bundle off its seed orientation: the paired cos/sin seeds sum
    // to a spatially constant energy density, which zeroes the zonal-shear
    // form and degenerates the relative-residual scale at the seed instant.
    let seed_bundle = TangentBundle::new(&state, 4).expect("bundle");
    let warm = TangentRunOptions { dt: 1e-3, steps: 300, reorth_stride: 5 };
    let (state, bundle) =
        run_tangent_window(&state, &params, &seed_bundle, &forcing, &warm, |_, _, _| {})
            .expect("warm-up");

    let pd_h = projector_derivative_check(&state, &params, &bundle, &forcing, 1e-3)
        .expect("projector check");
    let pd_h2 = projector_derivative_check(&state, &params, &bundle, &forcing, 5e-4)
        .expect("projector check");
    let bb_h =
        bbar_decomposition_check(&state, &params, &bundle, &forcing, 1e-3).expect("shear check");
    let bb_h2 =
        bbar_decomposition_check(&state, &params, &bundle, &forcing, 5e-4).expect("shear check");

    let pd_ratio = pd_h.residual_general / pd_h2.residual_general.max(1e-300);
    let bb_ratio = bb_h.residual_fd / bb_h2.residual_fd.max(1e-300);

    let pass = pd_h.residual_general < 1e-3
        && pd_h.residual_range < 1e-3
        && bb_h.residual_fd < 1e-3
        && bb_h.residual_analytic < 1e-3
        && (2.0..=8.0).contains(&pd_ratio)
        && (2.0..=8.0).contains(&bb_ratio);
    assert!(verdict(
        4,
        pass,
        &format!(
            "projector residual {:.2e} (range {:.2e}), shear residual fd {:.2e} (analytic {:.2e}), \
             halving ratios {:.2} and {:.2} (window [2, 8])",
            pd_h.residual_general,
            pd_h.residual_range,
            bb_h.residual_fd,
            bb_h.residual_analytic,
            pd_ratio,
            bb_ratio
        )
    ));
}

// ---------------------------------------------------------------------------
// Criteria 5-7 share one epsilon sweep at G = 2, 64x64.
// ---------------------------------------------------------------------------

struct SweepPoint {
    epsilon: f64,
    sup_nonzonal: f64,
    limsup_zeta: f64,
    lambda1: f64,
    lambda1_err: f64,
    n_star: Option<usize>,
}

static SWEEP: Lazy<Vec<SweepPoint>> = Lazy::new(|| {
    let lat = grid(64);
    let grashof = 2.0;
    let forcing = Forcing::mixed(&lat, grashof, 1.0, 1.0).expect("forcing");
    let ladder = [1e-1, 10f64.powf(-1.5), 1e-2, 10f64.powf(-2.5), 1e-3];
    ladder
        .iter()
        .map(|&eps| {
            let params = FlowParams::new(eps, grashof).expect("params");
            let state = settled_state(&lat, &params, &forcing, 500, 15.0, 5e-3);
            let ev = EvolveOptions { dt_max: 5e-3, ..EvolveOptions::default() };
            let series = decomposition_window(&state, &params, &forcing, 10.0, &ev, 10)
                .expect("decomposition window");
            let t_opts = TangentRunOptions { dt: 2e-3, steps: 1000, reorth_stride: 5 };
            let lyap = lyapunov_spectrum(&series.final_state, &params, &forcing, 4, &t_opts)
                .expect("lyapunov");
            let nstar = n_star_search(&series.final_state, &params, &forcing, 4, &t_opts)
                .expect("n_star");
            SweepPoint {
                epsilon: eps,
                sup_nonzonal: series.sup_nonzonal,
                limsup_zeta: series.sup_zeta,
                lambda1: lyap.exponents[0],
                lambda1_err: lyap.errbars[0],
                n_star: nstar.n_star,
            }
        })
        .collect()
});

#[test]
fn criterion_05_nonzonal_amplitude_scaling() {
    let pairs: Vec<(f64, f64)> = SWEEP.iter().map(|p| (p.epsilon, p.sup_nonzonal)).collect();
    let fit = fit_power_law(&pairs).expect("fit");
    let pass = (0.35..=0.65).contains(&fit.slope);
    let values: Vec<String> =
        pairs.iter().map(|(e, v)| format!("({e:.3e}, {v:.3e})")).collect();
    assert!(verdict(
        5,
        pass,
        &format!(
            "sup nonzonal slope {:.3} (window [0.35, 0.65], amplitude {:.3e}, max rel residual {:.2e}; points {})",
            fit.slope,
            fit.amplitude(),
            fit.max_rel_residual,
            values.join(" ")
        )
    ));
}

#[test]
fn criterion_06_zonal_error_scaling() {
    let pairs: Vec<(f64, f64)> = SWEEP.iter().map(|p| (p.epsilon, p.limsup_zeta)).collect();
    let fit = fit_power_law(&pairs).expect("fit");
    let pass = fit.slope >= 0.8;
    let values: Vec<String> =
        pairs.iter().map(|(e, v)| format!("({e:.3e}, {v:.3e})")).collect();
    assert!(verdict(
        6,
        pass,
        &format!(
            "zonal-error slope {:.3} (>= 0.8, upper-bound semantics; amplitude {:.3e}; points {})",
            fit.slope,
            fit.amplitude(),
            values.join(" ")
        )
    ));
}

#[test]
fn criterion_07_attractor_collapse() {
    let smallest = SWEEP.last().expect("sweep");
    let largest = SWEEP.first().expect("sweep");
    // `None` means no contracting prefix was found up to the probe dimension:
    // strictly weaker evidence than any finite rank, so order it above all.
    let rank = |p: &SweepPoint| p.n_star.unwrap_or(usize::MAX);
    let monotone = SWEEP.windows(2).all(|w| rank(&w[1]) <= rank(&w[0]));
    let collapsed = smallest.lambda1 < 0.0 && smallest.n_star == Some(1);

    let pass = collapsed && monotone;
    assert!(verdict(
        7,
        pass,
        &format!(
            "smallest eps {:.1e}: lambda1 {:.4} +/- {:.1e}, N* {:?}; largest eps {:.1e} (reported, no pass/fail): lambda1 {:.4} +/- {:.1e}, N* {:?}; N* non-increasing along ladder: {}",
            smallest.epsilon,
            smallest.lambda1,
            smallest.lambda1_err,
            smallest.n_star,
            largest.epsilon,
            largest.lambda1,
            largest.lambda1_err,
            largest.n_star,
            monotone
        )
    ));
}

// ---------------------------------------------------------------------------
// Criterion 8: steady-state continuity toward the zonal limit.
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_steady_state_continuity() {
    let lat = grid(32);
    let grashof = 2.0;
    let forcing = Forcing::mixed(&lat, grashof, 1.0, 1.0).expect("forcing");
    let limit = limit_steady_state_2d(&forcing, &lat);

    let ladder = [1e-2, 1e-3, 1e-4];
    let mut dists = Vec::new();
    let mut all_converged = true;
    let mut first_point: Option<FlowState> = None;
    for &eps in &ladder {
        let params = FlowParams::new(eps, grashof).expect("params");
        let (state, report) =
            steady_state_fixed_point(&params, &forcing, default_rhs_tol(), 600).expect("solve");
        all_converged &= report.converged;
        dists.push(h1_distance(&state.w, &limit));
        if first_point.is_none() {
            first_point = Some(state);
        }
    }

    // Cross-check at the largest ladder epsilon: marching the located state
    // forward must leave it in place (it is a true steady state of the flow).
    let params = FlowParams::new(ladder[0], grashof).expect("params");
    let start = first_point.expect("state");
    let ev = EvolveOptions { dt_max: 1e-3, ..EvolveOptions::default() };
    let (end, _) =
        evolve(&start, &params, &forcing, start.t + 5.0, &ev, |_| {}).expect("march");
    let drift = end.w.sub(&start.w).l2_norm() / start.w.l2_norm().max(1e-300);

    let decreasing = dists.windows(2).all(|w| w[1] < w[0]);
    let pass = all_converged && decreasing && dists[2] < 1e-2 && drift < 1e-6;
    assert!(verdict(
        8,
        pass,
        &format!(
            "h1 distances {:.4e} > {:.4e} > {:.4e} (strictly decreasing, last < 1e-2), \
             solver converged: {all_converged}, march drift {drift:.2e} (< 1e-6)",
            dists[0], dists[1], dists[2]
        )
    ));
}

// ---------------------------------------------------------------------------
// Criterion 9: energy budget at horizon 200.
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_energy_budget() {
    let lat = grid(32);
    let grashof = 2.0;
    let params = FlowParams::new(0.5, grashof).expect("params");
    let forcing = Forcing::mixed(&lat, grashof, 1.0, 1.0).expect("forcing");
    let state = settled_state(&lat, &params, &forcing, 901, 15.0, 1e-2);

    let mut dissipation = RunningTimeAverage::new();
    let mut injection = RunningTimeAverage::new();
    dissipation.update(state.t, state.w.hm_norm(1).powi(2)).expect("update");
    injection.update(state.t, state.w.inner_product(forcing.field())).expect("update");
    let ev = EvolveOptions { dt_max: 1e-2, ..EvolveOptions::default() };
    evolve(&state, &params, &forcing, state.t + 200.0, &ev, |s| {
        dissipation.update(s.t, s.w.hm_norm(1).powi(2)).expect("update");
        injection.update(s.t, s.w.inner_product(forcing.field())).expect("update");
    })
    .expect("evolve");

    let report = check_energy_budget(&dissipation, &injection, grashof, 0.02);
    let pass = report.balanced && report.within_bound && report.bound_margin > 0.0;
    assert!(verdict(
        9,
        pass,
        &format!(
            "dissipation {:.6} +/- {:.1e}, injection {:.6} +/- {:.1e}, imbalance {:.3}% (<= 2% + error bars), \
             rms gradient bound margin {:.4} (> 0)",
            report.mean_dissipation,
            report.dissipation_err,
            report.mean_injection,
            report.injection_err,
            100.0 * report.rel_imbalance,
            report.bound_margin
        )
    ));
}

// ---------------------------------------------------------------------------
// Criterion 10: the time-averaged derivative of the first zonal-shear trace
// decays like 1/T over doubling horizons.
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_shear_trace_derivative_decay() {
    let lat = grid(32);
    let params = FlowParams::new(0.5, 30.0).expect("params");
    let forcing = Forcing::mixed(&lat, 30.0, 1.0, 1.0).expect("forcing");
    let state = settled_state(&lat, &params, &forcing, 1001, 8.0, 2e-3);

    // g(t) = Im Tr[P Bbar1 P] sampled every 0.01 time units over 25 units.
    let bundle = TangentBundle::new(&state, 4).expect("bundle");
    let opts = TangentRunOptions { dt: 2e-3, steps: 12_500, reorth_stride: 5 };
    let mut g: Vec<f64> = Vec::new();
    run_tangent_window(&state, &params, &bundle, &forcing, &opts, |_, b, d| {
        g.push(d.breakdown_prefix(4, b).tr_bbar1.im);
    })
    .expect("window");

    // v(T) = max over window offsets of |g(s+T) - g(s)| / T: the largest
    // time-averaged derivative over any window of length T. Bounded g makes
    // this decay like 1/T once T exceeds the correlation time.
    let sample_dt = opts.dt * opts.reorth_stride as f64;
    let offset_stride = (0.25 / sample_dt).round() as usize;
    let horizons = [2.5, 5.0, 10.0, 20.0];
    let mut pairs = Vec::new();
    for &horizon in &horizons {
        let span = (horizon / sample_dt).round() as usize;
        let mut v = 0.0f64;
        let mut s = 0usize;
        while s + span < g.len() {
            v = v.max((g[s + span] - g[s]).abs() / horizon);
            s += offset_stride;
        }
        pairs.push((horizon, v));
    }
    let fit = fit_power_law(&pairs).expect("fit");
    let pass = (-1.3..=-0.7).contains(&fit.slope);
    let values: Vec<String> = pairs.iter().map(|(t, v)| format!("({t}, {v:.3e})")).collect();
    assert!(verdict(
        10,
        pass,
        &format!(
            "decay slope {:.3} (window [-1.3, -0.7]; points {})",
            fit.slope,
            values.join(" ")
        )
    ));
}
