//! `verify`: the self-contained invariant suite. Runs every module's core
//! identities at 32x32 scale with fixed seeds, including detector-sensitivity
//! controls (deliberately broken inputs that the checks must flag), and
//! writes the same report format as the other commands. Needs no config.

use std::path::PathBuf;

use betaplane::diagnostics::{check_fcheck_orthogonality, RunningTimeAverage};
use betaplane::dynamics::{evolve, EvolveOptions, FlowParams, FlowState, Forcing};
use betaplane::limit1d::{heat_solution, heat_steady_state, heat_step, ZonalField1D};
use betaplane::spectral::{
    bilinear_b, grid_integral, lambda_k, make_lattice, to_physical, to_spectral, SpectralField,
};
use betaplane::tangent::{
    lyapunov_spectrum, n_star_search, run_tangent_window, TangentBundle, TangentRunOptions,
};
use betaplane::Complex64;

use crate::output::{report_text, write_report_csv, CheckRow};
use crate::{CliError, CliResult};

const EPSILON: f64 = 0.5;
const GRASHOF: f64 = 30.0;

pub fn run(out: &PathBuf) -> CliResult<()> {
    let lat = make_lattice(32, 32)?;
    let mut checks: Vec<CheckRow> = Vec::new();

    // ---- spectral operator identities ---------------------------------
    let w = SpectralField::random_in_class(lat.clone(), 11, 1.0, 3.0);
    let a = SpectralField::random_in_class(lat.clone(), 12, 0.8, 3.0);

    let round = to_spectral(&to_physical(&w), &lat).sub(&w).l2_norm() / w.l2_norm();
    checks.push(CheckRow::upper("transform_round_trip", round, 1e-12));

    let grid_sq: Vec<f64> = to_physical(&w).iter().map(|v| v * v).collect();
    let parseval = (grid_integral(&grid_sq, &lat) - w.inner_product(&w)).abs()
        / w.inner_product(&w);
    checks.push(CheckRow::upper("parseval_quadrature", parseval, 1e-10));

    // Rotation operator: purely imaginary odd symbol, hence skew-adjoint.
    let rotation = |field: &SpectralField| {
        field.multiplier(|k1, k2| Complex64::new(0.0, -lambda_k(k1, k2) / EPSILON))
    };
    let skew = rotation(&w).inner_product(&w).abs() / w.inner_product(&w);
    checks.push(CheckRow::upper("rotation_skew_symmetry", skew, 1e-12));

    let neutral = bilinear_b(&a, &w).inner_product(&w).abs()
        / (a.l2_norm() * w.l2_norm() * w.l2_norm());
    checks.push(CheckRow::upper("advection_energy_neutrality", neutral, 1e-10));

    let z1 = SpectralField::random_in_class(lat.clone(), 13, 1.0, 3.0).project_zonal();
    let z2 = SpectralField::random_in_class(lat.clone(), 14, 1.0, 3.0).project_zonal();
    checks.push(CheckRow::upper("zonal_zonal_advection", bilinear_b(&z1, &z2).l2_norm(), 0.0));

    let st = w.semigroup_apply(0.7, EPSILON);
    let unitary = (st.l2_norm() - w.l2_norm()).abs() / w.l2_norm();
    checks.push(CheckRow::upper("semigroup_unitarity", unitary, 1e-12));
    let comp = st
        .semigroup_apply(0.3, EPSILON)
        .sub(&w.semigroup_apply(1.0, EPSILON))
        .l2_norm()
        / w.l2_norm();
    checks.push(CheckRow::upper("semigroup_composition", comp, 1e-12));

    let class_defect = bilinear_b(&a, &w).symmetry_class_defect();
    checks.push(CheckRow::upper("advection_class_closure", class_defect, 1e-11));

    // ---- forcing checks and detector-sensitivity controls -------------
    let forcing = Forcing::mixed(&lat, GRASHOF, 1.0, 1.0)?;
    checks.push(CheckRow::upper(
        "forcing_orthogonality",
        check_fcheck_orthogonality(&forcing),
        1e-12,
    ));
    checks.push(CheckRow::upper(
        "forcing_class_membership",
        forcing.field().symmetry_class_defect(),
        1e-12,
    ));

    // Control 1: a field even in the latitude coordinate must trip the
    // class-defect detector.
    let broken_field = forcing.field().add(&SpectralField::from_modes(
        lat.clone(),
        &[((1, 1), Complex64::new(0.25, 0.0)), ((1, -1), Complex64::new(0.25, 0.0))],
    ));
    checks.push(CheckRow::lower(
        "detects_out_of_class_forcing",
        broken_field.symmetry_class_defect(),
        1e-2,
    ));

    // Control 2: dropping the imaginary unit from the rotation symbol makes
    // the operator self-adjoint on its range; the skewness probe must see it.
    let broken_rotation = w.multiplier(|k1, k2| Complex64::new(lambda_k(k1, k2) / EPSILON, 0.0));
    checks.push(CheckRow::lower(
        "detects_non_skew_rotation",
        broken_rotation.inner_product(&w).abs() / w.inner_product(&w),
        1e-6,
    ));

    // ---- linear-flow oracles (exact spectra) ---------------------------
    let zero_state = FlowState::new(SpectralField::zeros(lat.clone()), 0.0);
    let free = Forcing::zero(&lat);
    let heat_opts = TangentRunOptions { dt: 1e-2, steps: 200, reorth_stride: 10 };
    let lyap = lyapunov_spectrum(&zero_state, &FlowParams::new(EPSILON, 1.0)?, &free, 4, &heat_opts)?;
    let worst = lyap
        .exponents
        .iter()
        .map(|l| (l + 1.0).abs())
        .fold(0.0, f64::max);
    checks.push(CheckRow::upper("heat_flow_exponents", worst, 1e-9));
    checks.push(CheckRow::upper("heat_flow_kaplan_yorke", lyap.kaplan_yorke, 0.0));

    let nstar0 =
        n_star_search(&zero_state, &FlowParams::new(EPSILON, 1.0)?, &free, 3, &heat_opts)?;
    let heat_nstar_ok = nstar0.n_star == Some(1)
        && (nstar0.trace_means[0].0 - 1.0).abs() < 1e-9;
    checks.push(
        CheckRow::upper(
            "heat_flow_contraction_dimension",
            (nstar0.trace_means[0].0 - 1.0).abs(),
            1e-9,
        )
        .forced(heat_nstar_ok),
    );

    // ---- joint tangent run on a driven flow ----------------------------
    let params = FlowParams::new(EPSILON, GRASHOF)?;
    let w0 = SpectralField::random_in_class(lat.clone(), 7, 0.5, 2.0);
    let (state, _) = evolve(
        &FlowState::new(w0, 0.0),
        &params,
        &forcing,
        2.0,
        &EvolveOptions::default(),
        |_| {},
    )?;
    let bundle = TangentBundle::new(&state, 4)?;
    let opts = TangentRunOptions { dt: 1e-3, steps: 120, reorth_stride: 5 };
    let mut split_max = 0.0f64;
    let mut a0_max = 0.0f64;
    let mut samples: Vec<(f64, f64, f64)> = Vec::new(); // (t, logvol, tr_total)
    let mut weyl_margin = f64::INFINITY;
    let weyl = betaplane::tangent::weyl_eigenvalue_sums(&lat, 4);
    run_tangent_window(&state, &params, &bundle, &forcing, &opts, |s, b, d| {
        let br = d.breakdown_prefix(4, b);
        let btot = br.tr_total - br.tr_lap - br.tr_a0;
        let scale = br.tr_lap.abs().max(btot.abs()).max(1e-300);
        split_max = split_max.max((br.tr_bbar + br.tr_btilde - btot).abs() / scale);
        a0_max = a0_max.max(br.tr_a0.abs() / scale);
        samples.push((s.t, br.logvol, br.tr_total));
        for n in 1..=4usize {
            let pre = d.breakdown_prefix(n, b);
            weyl_margin = weyl_margin.min((pre.tr_lap - weyl[n - 1]) / weyl[n - 1]);
        }
    })?;
    checks.push(CheckRow::upper("trace_split_residual", split_max, 1e-8));
    checks.push(CheckRow::upper("transport_trace_residual", a0_max, 1e-8));
    // The bound holds with equality when the subspace is exactly the span of
    // the lowest modes (as at seeding), so allow relative roundoff below zero.
    checks.push(CheckRow::lower(
        "dissipation_trace_vs_spectral_floor",
        weyl_margin,
        -1e-10,
    ));

    let mut duality_max = 0.0f64;
    for i in 1..samples.len() - 1 {
        let (t0, v0, _) = samples[i - 1];
        let (_, _, tr) = samples[i];
        let (t2, v2, _) = samples[i + 1];
        let rate = (v2 - v0) / (t2 - t0);
        duality_max = duality_max.max((rate + tr).abs() / tr.abs().max(1e-300));
    }
    checks.push(CheckRow::upper("volume_trace_duality", duality_max, 1e-2));

    // ---- 1D limit system oracles ---------------------------------------
    let fbar = ZonalField1D::from_sine_coeffs(vec![1.0, 0.5]);
    let eq = heat_steady_state(&fbar);
    let eq_err = (eq.coeff(1) - 1.0).abs().max((eq.coeff(2) - 0.125).abs());
    checks.push(CheckRow::upper("heat_equilibrium_oracle", eq_err, 1e-15));

    let w1d = ZonalField1D::from_sine_coeffs(vec![0.3, -0.2, 0.1]);
    let fb = ZonalField1D::from_sine_coeffs(vec![0.0, 1.0, 0.0]);
    let threes = heat_step(&heat_step(&heat_step(&w1d, &fb, 0.1), &fb, 0.1), &fb, 0.1);
    let once = heat_solution(&w1d, &fb, 0.3);
    checks.push(CheckRow::upper(
        "heat_step_composition_exactness",
        threes.sub(&once).l2_norm(),
        1e-14,
    ));

    // ---- diagnostics accumulator oracle ---------------------------------
    let mut avg = RunningTimeAverage::new();
    for i in 0..=20 {
        let t = 0.1 * i as f64;
        avg.update(t, 3.0 * t)?;
    }
    checks.push(CheckRow::upper("time_average_trapezoid_exactness", (avg.mean() - 3.0).abs(), 1e-14));

    // ---- report ---------------------------------------------------------
    write_report_csv(&out.join("report.csv"), &checks)?;
    print!("{}", report_text(&checks));
    let failed: Vec<&str> =
        checks.iter().filter(|c| !c.pass).map(|c| c.check_name.as_str()).collect();
    if failed.is_empty() {
        println!("verify: all {} checks passed", checks.len());
        Ok(())
    } else {
        Err(CliError::Check(format!("failed checks: {}", failed.join(", "))))
    }
}
