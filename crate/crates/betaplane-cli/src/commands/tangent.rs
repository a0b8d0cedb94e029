//! `tangent`: joint base/tangent run recording the contraction-trace
//! breakdown, Lyapunov exponents, and the smallest contracting dimension.

use std::path::PathBuf;

use betaplane::tangent::{
    collective_velocity_ratio_prefix, lyapunov_spectrum, n_star_search, run_tangent_window,
    TangentBundle, TangentRunOptions, TraceBreakdown,
};

use crate::commands::prepare;
use crate::config::RunConfig;
use crate::output::{fmt_f64, report_text, write_report_csv, write_summary, write_trace_csv, CheckRow};
use crate::{CliError, CliResult};

/// Pointwise relative bound on the advection-splitting residual.
const SPLIT_TOL: f64 = 1e-8;
/// Growth factor allowed for the collective-velocity ratio over its
/// two-direction baseline.
const VELOCITY_GROWTH_FACTOR: f64 = 10.0;

pub fn run(cfg: &RunConfig, out_override: Option<&PathBuf>) -> CliResult<()> {
    let ctx = prepare(cfg, out_override)?;
    let out = &ctx.out_dir;
    let n = cfg.n_tangent;

    let dt = cfg.dt_max;
    let total_steps = ((cfg.t_horizon / dt).ceil() as usize).max(cfg.reorth_stride);
    let warm_steps =
        ((total_steps / 10).max(cfg.reorth_stride) / cfg.reorth_stride) * cfg.reorth_stride;
    let meas_steps = (total_steps - warm_steps).max(cfg.reorth_stride);
    let opts = |steps: usize| TangentRunOptions { dt, steps, reorth_stride: cfg.reorth_stride };

    // Warm the bundle toward the flow's stretching directions before
    // measuring anything.
    let bundle = TangentBundle::new(&ctx.state, n)?;
    let (state, bundle) = run_tangent_window(
        &ctx.state,
        &ctx.params,
        &bundle,
        &ctx.forcing,
        &opts(warm_steps),
        |_, _, _| {},
    )?;

    // Measurement window: stream the full-dimension trace breakdown and the
    // identity residuals at every reorthonormalization instant.
    let mut rows: Vec<TraceBreakdown> = Vec::new();
    let mut split_residual_max = 0.0f64;
    let mut a0_residual_max = 0.0f64;
    let mut ratio_baseline: f64 = 0.0;
    let mut ratio_max: f64 = 0.0;
    let mut sample_err: Option<betaplane::Error> = None;
    run_tangent_window(&state, &ctx.params, &bundle, &ctx.forcing, &opts(meas_steps), |_, b, d| {
        if sample_err.is_some() {
            return;
        }
        let br = d.breakdown_prefix(n, b);
        let btot = br.tr_total - br.tr_lap - br.tr_a0;
        let scale = br.tr_lap.abs().max(btot.abs()).max(1e-300);
        split_residual_max =
            split_residual_max.max((br.tr_bbar + br.tr_btilde - btot).abs() / scale);
        a0_residual_max = a0_residual_max.max(br.tr_a0.abs() / scale);
        if n >= 2 {
            match collective_velocity_ratio_prefix(b, 2)
                .and_then(|r2| collective_velocity_ratio_prefix(b, n).map(|rn| (r2, rn)))
            {
                Ok((r2, rn)) => {
                    ratio_baseline = ratio_baseline.max(r2);
                    ratio_max = ratio_max.max(rn);
                }
                Err(e) => sample_err = Some(e),
            }
        }
        rows.push(br);
    })?;
    if let Some(e) = sample_err {
        return Err(e.into());
    }
    write_trace_csv(&out.join("trace.csv"), &rows)?;

    // Spectrum and contraction-dimension scans from the warmed state.
    let lyap = lyapunov_spectrum(&state, &ctx.params, &ctx.forcing, n, &opts(meas_steps))?;
    let nstar = n_star_search(&state, &ctx.params, &ctx.forcing, n, &opts(meas_steps))?;

    let mut checks = vec![
        CheckRow::upper("advection_split_residual_max", split_residual_max, SPLIT_TOL),
        CheckRow::upper("transport_trace_residual_max", a0_residual_max, SPLIT_TOL),
    ];
    if n >= 2 {
        checks.push(CheckRow::upper(
            "collective_velocity_ratio_growth",
            ratio_max,
            VELOCITY_GROWTH_FACTOR * ratio_baseline,
        ));
    }
    // Exact spectral lower bound on the dissipation trace, per prefix.  The
    // bound is pointwise, so the time mean obeys it too; equality is attained
    // on the lowest-mode span, hence the relative roundoff allowance.
    let worst_weyl_margin = nstar
        .lap_means
        .iter()
        .zip(&nstar.weyl_sums)
        .map(|(&(mean, _), &bound)| (mean - bound) / bound)
        .fold(f64::INFINITY, f64::min);
    checks.push(CheckRow::lower(
        "dissipation_trace_vs_spectral_floor",
        worst_weyl_margin,
        -1e-10,
    ));
    write_report_csv(&out.join("report.csv"), &checks)?;

    let mut summary: Vec<(String, String)> = vec![
        ("n_tangent".into(), n.to_string()),
        ("dt".into(), fmt_f64(dt)),
        ("warm_steps".into(), warm_steps.to_string()),
        ("measure_steps".into(), meas_steps.to_string()),
        ("horizon".into(), fmt_f64(lyap.horizon)),
        (
            "n_star".into(),
            nstar.n_star.map(|v| v.to_string()).unwrap_or_else(|| "none".into()),
        ),
        ("kaplan_yorke".into(), fmt_f64(lyap.kaplan_yorke)),
        ("well_resolved".into(), lyap.well_resolved.to_string()),
    ];
    for (i, (lam, err)) in lyap.exponents.iter().zip(&lyap.errbars).enumerate() {
        summary.push((format!("lambda_{}", i + 1), format!("{} +- {}", fmt_f64(*lam), fmt_f64(*err))));
    }
    for (i, (mean, err)) in nstar.trace_means.iter().enumerate() {
        summary.push((
            format!("trace_mean_n{}", i + 1),
            format!("{} +- {}", fmt_f64(*mean), fmt_f64(*err)),
        ));
    }
    write_summary(&out.join("summary.txt"), &summary)?;

    print!("{}", report_text(&checks));
    let failed: Vec<&str> =
        checks.iter().filter(|c| !c.pass).map(|c| c.check_name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!("failed checks: {}", failed.join(", "))))
    }
}
