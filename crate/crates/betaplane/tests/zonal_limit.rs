//! The zonal subspace is invariant and linear for the full 2D integrator,
//! and shrinking the rotation parameter drives the non-zonal part of the
//! flow toward zero — the desk-scale version of the limit behavior.

use betaplane::dynamics::{evolve, EvolveOptions, FlowParams, FlowState, Forcing};
use betaplane::limit1d::{heat_solution, limit_steady_state_2d, ZonalField1D};
use betaplane::make_lattice;
use betaplane::spectral::{h1_distance, SpectralField};

/// Purely zonal data under purely zonal forcing stays zonal and follows the
/// exact one-dimensional heat-with-source solution (the quadratic term and
/// the rotation both vanish identically on this subspace).
#[test]
fn zonal_flow_reduces_to_exact_heat_dynamics() {
    let lattice = make_lattice(32, 32).unwrap();
    let params = FlowParams::new(0.25, 1.5).unwrap();
    let forcing = Forcing::zonal_only(&lattice, params.grashof).unwrap();

    let w0 = SpectralField::random_in_class(lattice.clone(), 11, 0.8, 2.5).project_zonal();
    let state = FlowState::new(w0.clone(), 0.0);
    let t_end = 1.5;
    let (end, _) =
        evolve(&state, &params, &forcing, t_end, &EvolveOptions::default(), |_| {}).unwrap();

    // Never leaves the zonal subspace.
    assert!(end.w.project_nonzonal().l2_norm() < 1e-13);

    // Matches the closed-form solution mode by mode.
    let w0_1d = ZonalField1D::from_zonal_of(&w0);
    let f_1d = ZonalField1D::from_zonal_of(forcing.field());
    let exact = heat_solution(&w0_1d, &f_1d, t_end);
    let got = ZonalField1D::from_zonal_of(&end.w);
    let err = got.sub(&exact).l2_norm();
    assert!(err < 1e-7 * exact.l2_norm().max(1.0), "deviation from exact solution: {err}");
}

/// With mixed forcing, the long-run non-zonal amplitude shrinks as the
/// rotation parameter does, and the zonal profile lands closer to the
/// limiting steady state.
#[test]
fn faster_rotation_suppresses_nonzonal_flow() {
    let lattice = make_lattice(32, 32).unwrap();
    let grashof = 2.0;

    let run = |epsilon: f64| -> (f64, f64) {
        let params = FlowParams::new(epsilon, grashof).unwrap();
        let forcing = Forcing::mixed(&lattice, grashof, 1.0, 1.0).unwrap();
        // Start at the limiting profile plus small in-class non-zonal noise.
        let mut w0 = limit_steady_state_2d(&forcing, &lattice);
        let noise =
            SpectralField::random_in_class(lattice.clone(), 23, 0.05, 2.0).project_nonzonal();
        w0 = w0.add(&noise);
        let state = FlowState::new(w0, 0.0);

        let mut sup_tilde: f64 = 0.0;
        let (end, _) = evolve(
            &state,
            &params,
            &forcing,
            2.0,
            &EvolveOptions::default(),
            |s| {
                if s.t > 1.0 {
                    sup_tilde = sup_tilde.max(s.w.project_nonzonal().l2_norm());
                }
            },
        )
        .unwrap();
        let limit = limit_steady_state_2d(&forcing, &lattice);
        (sup_tilde, h1_distance(&end.w.project_zonal(), &limit))
    };

    let (tilde_slow, zonal_gap_slow) = run(0.8);
    let (tilde_fast, zonal_gap_fast) = run(0.1);
    assert!(
        tilde_fast < 0.6 * tilde_slow,
        "non-zonal sup did not shrink: {tilde_fast} vs {tilde_slow}"
    );
    assert!(
        zonal_gap_fast < zonal_gap_slow + 1e-9,
        "zonal profile gap did not shrink: {zonal_gap_fast} vs {zonal_gap_slow}"
    );
}
