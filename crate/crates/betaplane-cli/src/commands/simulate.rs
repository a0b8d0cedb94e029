//! `simulate`: burn in, run a measurement horizon, record observables,
//! write checkpoints, and run the stationary sanity checks.

use std::path::PathBuf;

use betaplane::checkpoint::{write_checkpoint, CheckpointMeta};
use betaplane::diagnostics::{
    check_energy_budget, check_fcheck_orthogonality, RunningTimeAverage,
};
use betaplane::dynamics::evolve;

use crate::commands::{evolve_opts, prepare};
use crate::config::RunConfig;
use crate::output::{
    report_text, write_observables_csv, write_report_csv, write_summary, CheckRow, ObservableRow,
};
use crate::{CliError, CliResult};

/// Relative tolerance for the stationary energy balance.
const BUDGET_REL_TOL: f64 = 0.05;
/// Bound on the spectral symmetry-class defect after the full run.
const CLASS_DEFECT_TOL: f64 = 1e-10;
/// Bound on the normalized forcing-orthogonality residual.
const FCHECK_TOL: f64 = 1e-12;

pub fn run(cfg: &RunConfig, out_override: Option<&PathBuf>) -> CliResult<()> {
    let ctx = prepare(cfg, out_override)?;
    let out = &ctx.out_dir;
    let meta = CheckpointMeta { epsilon: cfg.epsilon, grashof: cfg.grashof };

    let horizon = cfg.t_horizon;
    let t0 = ctx.state.t;
    let quarters: Vec<f64> = (1..=3).map(|q| t0 + horizon * q as f64 / 4.0).collect();

    let mut rows: Vec<ObservableRow> = Vec::new();
    let mut dissipation = RunningTimeAverage::new();
    let mut injection = RunningTimeAverage::new();
    let mut step = 0usize;
    let mut quarter_states = Vec::new();
    let mut next_quarter = 0usize;

    let record = |rows: &mut Vec<ObservableRow>,
                  dissipation: &mut RunningTimeAverage,
                  injection: &mut RunningTimeAverage,
                  state: &betaplane::dynamics::FlowState|
     -> CliResult<()> {
        let w = &state.w;
        let grad_sq = w.hm_norm(1).powi(2);
        let work = w.inner_product(ctx.forcing.field());
        rows.push(ObservableRow {
            t: state.t,
            l2: w.l2_norm(),
            h1: w.hm_norm(1),
            zonal_l2: w.project_zonal().l2_norm(),
            nonzonal_l2: w.project_nonzonal().l2_norm(),
            grad_sq,
            work,
        });
        dissipation.update(state.t, grad_sq)?;
        injection.update(state.t, work)?;
        Ok(())
    };

    record(&mut rows, &mut dissipation, &mut injection, &ctx.state)?;
    let mut observer_err: Option<CliError> = None;
    let (final_state, stats) = evolve(
        &ctx.state,
        &ctx.params,
        &ctx.forcing,
        t0 + horizon,
        &evolve_opts(cfg),
        |s| {
            step += 1;
            if observer_err.is_none() {
                if step % cfg.observer_stride == 0 {
                    if let Err(e) = record(&mut rows, &mut dissipation, &mut injection, s) {
                        observer_err = Some(e);
                    }
                }
                if next_quarter < quarters.len() && s.t >= quarters[next_quarter] - 1e-12 {
                    quarter_states.push(s.clone());
                    next_quarter += 1;
                }
            }
        },
    )?;
    if let Some(e) = observer_err {
        return Err(e);
    }
    if rows.last().map(|r| r.t) != Some(final_state.t) {
        record(&mut rows, &mut dissipation, &mut injection, &final_state)?;
    }

    write_observables_csv(&out.join("observables.csv"), &rows)?;
    for (i, s) in quarter_states.iter().enumerate() {
        write_checkpoint(&out.join(format!("checkpoint_q{}.bpv", i + 1)), s, &meta)?;
    }
    write_checkpoint(&out.join("final.bpv"), &final_state, &meta)?;

    // Stationary checks on the just-recorded window.
    let budget = check_energy_budget(&dissipation, &injection, cfg.grashof, BUDGET_REL_TOL);
    let checks = vec![
        CheckRow::upper(
            "symmetry_class_defect",
            final_state.w.symmetry_class_defect(),
            CLASS_DEFECT_TOL,
        ),
        CheckRow::upper(
            "forcing_orthogonality",
            check_fcheck_orthogonality(&ctx.forcing),
            FCHECK_TOL,
        ),
        CheckRow::upper("energy_balance_rel", budget.rel_imbalance, BUDGET_REL_TOL)
            .with_errbar(2.0 * (budget.dissipation_err + budget.injection_err))
            .forced(budget.balanced),
        CheckRow::upper(
            "rms_gradient_vs_grashof",
            budget.mean_dissipation.max(0.0).sqrt(),
            cfg.grashof,
        )
        .with_errbar(budget.dissipation_err)
        .forced(budget.within_bound),
    ];
    write_report_csv(&out.join("report.csv"), &checks)?;

    let mut summary: Vec<(String, String)> = vec![
        ("t_start".into(), format!("{t0:?}")),
        ("t_final".into(), format!("{:?}", final_state.t)),
        ("steps".into(), stats.steps.to_string()),
        ("min_dt".into(), format!("{:?}", stats.min_dt)),
        ("max_dt".into(), format!("{:?}", stats.max_dt)),
        ("samples".into(), rows.len().to_string()),
        ("mean_dissipation".into(), format!("{:?}", budget.mean_dissipation)),
        ("mean_injection".into(), format!("{:?}", budget.mean_injection)),
        ("final_l2".into(), format!("{:?}", final_state.w.l2_norm())),
        ("final_h1".into(), format!("{:?}", final_state.w.hm_norm(1))),
    ];
    if let Some(b) = &ctx.burnin {
        summary.insert(0, ("burnin_t".into(), format!("{:?}", b.t_reached)));
        summary.insert(1, ("burnin_converged".into(), b.converged.to_string()));
        summary.insert(2, ("burnin_last_variation".into(), format!("{:?}", b.last_variation)));
    } else {
        summary.insert(0, ("resumed_from_checkpoint".into(), "true".into()));
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
