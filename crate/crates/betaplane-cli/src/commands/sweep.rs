//! `sweep`: runs the full analysis pipeline over an `(epsilon, grashof)`
//! ladder grid, one row per point, with crash-safe per-point result files
//! and power-law fits of the scaling observables against epsilon.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use betaplane::diagnostics::fit_power_law;
use betaplane::tangent::{lyapunov_spectrum, n_star_search, TangentRunOptions};

use crate::commands::limit::{decomposition_window, steady_state_h1};
use crate::commands::{evolve_opts, prepare};
use crate::config::{regime_label, RunConfig, SweepConfig};
use crate::output::{
    fmt_f64, sweep_csv_line, write_sweep_csv, write_sweep_extra_csv, SweepRow, SWEEP_EXTRA_HEADER,
    SWEEP_HEADER,
};
use crate::{CliError, CliResult};

/// Runs the whole pipeline for one `(epsilon, grashof)` point.
fn run_point(cfg: &RunConfig) -> CliResult<SweepRow> {
    let ctx = prepare(cfg, None)?;

    // Observable window: non-zonal supremum and the zonal-error supremum
    // against the synchronized heat profile.
    let series = decomposition_window(
        &ctx.state,
        &ctx.params,
        &ctx.forcing,
        cfg.t_horizon,
        &evolve_opts(cfg),
        cfg.observer_stride,
    )?;

    // Tangent window from the end of the observable window.
    let opts = TangentRunOptions {
        dt: cfg.dt_max,
        steps: ((cfg.t_horizon / cfg.dt_max).ceil() as usize).max(cfg.reorth_stride),
        reorth_stride: cfg.reorth_stride,
    };
    let lyap =
        lyapunov_spectrum(&series.final_state, &ctx.params, &ctx.forcing, cfg.n_tangent, &opts)?;
    let nstar =
        n_star_search(&series.final_state, &ctx.params, &ctx.forcing, cfg.n_tangent, &opts)?;

    // Steady-state distance to the zonal limit profile; meaningful only when
    // the spectral solver converges (laminar regimes), NaN otherwise so the
    // fits skip the point.
    let (steady_ok, _, h1) = steady_state_h1(&ctx.params, &ctx.forcing, &ctx.lattice)?;

    Ok(SweepRow {
        epsilon: cfg.epsilon,
        grashof: cfg.grashof,
        sup_nonzonal: series.sup_nonzonal,
        limsup_zeta: series.sup_zeta,
        h1_distance: if steady_ok { h1 } else { f64::NAN },
        lambda1: lyap.exponents[0],
        n_star: nstar.n_star,
        kaplan_yorke: lyap.kaplan_yorke,
        regime: regime_label(cfg.epsilon, cfg.grashof),
    })
}

/// Self-contained one-line record of a completed point (the done-file body).
fn point_line(r: &SweepRow) -> String {
    format!(
        "{},{},{}",
        sweep_csv_line(r),
        r.n_star.map(|n| n.to_string()).unwrap_or_else(|| "none".into()),
        fmt_f64(r.kaplan_yorke)
    )
}

/// Parses a done-file body back into a row; `None` on any mismatch so the
/// caller recomputes instead of trusting a stale or corrupt file.
fn parse_point_line(line: &str, epsilon: f64, grashof: f64) -> Option<SweepRow> {
    let parts: Vec<&str> = line.trim().split(',').collect();
    if parts.len() != 8 {
        return None;
    }
    let nums: Vec<f64> = parts[..6]
        .iter()
        .chain(std::iter::once(&parts[7]))
        .map(|s| s.parse::<f64>())
        .collect::<Result<_, _>>()
        .ok()?;
    if nums[0] != epsilon || nums[1] != grashof {
        return None;
    }
    let n_star = match parts[6] {
        "none" => None,
        s => Some(s.parse::<usize>().ok()?),
    };
    Some(SweepRow {
        epsilon,
        grashof,
        sup_nonzonal: nums[2],
        limsup_zeta: nums[3],
        h1_distance: nums[4],
        lambda1: nums[5],
        n_star,
        kaplan_yorke: nums[6],
        regime: regime_label(epsilon, grashof),
    })
}

fn write_done_file(path: &Path, row: &SweepRow) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, format!("{}\n", point_line(row)))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Power-law fits of each scaling observable vs epsilon, one block per
/// Grashof ladder entry. Only successful fits produce rows.
fn fits_lines(ordered: &[(f64, f64, &SweepRow)]) -> Vec<String> {
    let mut lines = Vec::new();
    let mut grashofs: Vec<f64> = ordered.iter().map(|&(_, g, _)| g).collect();
    grashofs.dedup();
    for g in grashofs {
        let rows: Vec<&SweepRow> =
            ordered.iter().filter(|&&(_, gg, _)| gg == g).map(|&(_, _, r)| r).collect();
        let observables: [(&str, Box<dyn Fn(&SweepRow) -> f64>); 4] = [
            ("sup_nonzonal", Box::new(|r: &SweepRow| r.sup_nonzonal)),
            ("limsup_zeta", Box::new(|r: &SweepRow| r.limsup_zeta)),
            ("h1_distance", Box::new(|r: &SweepRow| r.h1_distance)),
            ("n_star", Box::new(|r: &SweepRow| r.n_star.map(|n| n as f64).unwrap_or(f64::NAN))),
        ];
        for (name, get) in &observables {
            let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.epsilon, get(r))).collect();
            if let Ok(fit) = fit_power_law(&pairs) {
                lines.push(format!(
                    "{},{},{},{},{},{}",
                    fmt_f64(g),
                    name,
                    fmt_f64(fit.slope),
                    fmt_f64(fit.amplitude()),
                    fmt_f64(fit.max_rel_residual),
                    fit.n
                ));
            }
        }
    }
    lines
}

pub const FITS_HEADER: &str = "grashof,observable,slope,amplitude,max_rel_residual,n_points";

pub fn run(
    sweep: &SweepConfig,
    out_override: Option<&PathBuf>,
    workers_override: Option<usize>,
    resume: bool,
) -> CliResult<()> {
    let out = out_override.cloned().unwrap_or_else(|| sweep.base.output_dir.clone());
    let rows_dir = out.join("sweep_rows");
    let workers = workers_override.unwrap_or(sweep.workers).max(1);

    // Grashof-major point order; this is also the aggregate row order.
    let mut points: Vec<(usize, f64, f64)> = Vec::new();
    for &g in &sweep.grashof_ladder {
        for &e in &sweep.epsilon_ladder {
            points.push((points.len(), e, g));
        }
    }

    let queue: Mutex<VecDeque<(usize, f64, f64)>> =
        Mutex::new(points.iter().copied().collect());
    let results: Mutex<Vec<Option<Result<SweepRow, String>>>> =
        Mutex::new(vec![None; points.len()]);

    std::thread::scope(|scope| {
        for _ in 0..workers.min(points.len()) {
            scope.spawn(|| loop {
                let Some((idx, epsilon, grashof)) = queue.lock().unwrap().pop_front() else {
                    return;
                };
                let mut cfg = sweep.point(epsilon, grashof);
                cfg.output_dir = out.clone();
                let done_path = rows_dir.join(format!("{}.row", cfg.content_hash()));
                let reused = resume
                    .then(|| std::fs::read_to_string(&done_path).ok())
                    .flatten()
                    .and_then(|text| parse_point_line(&text, epsilon, grashof));
                let outcome = match reused {
                    Some(row) => {
                        eprintln!(
                            "sweep point epsilon={epsilon:?} grashof={grashof:?}: reused completed row"
                        );
                        Ok(row)
                    }
                    None => match run_point(&cfg) {
                        Ok(row) => {
                            let write = write_done_file(&done_path, &row);
                            eprintln!(
                                "sweep point epsilon={epsilon:?} grashof={grashof:?}: done ({})",
                                row.regime
                            );
                            write.map(|_| row).map_err(|e| e.to_string())
                        }
                        Err(e) => {
                            eprintln!(
                                "sweep point epsilon={epsilon:?} grashof={grashof:?}: FAILED: {e}"
                            );
                            Err(e.to_string())
                        }
                    },
                };
                results.lock().unwrap()[idx] = Some(outcome);
            });
        }
    });

    // Results are indexed by ladder order, so the aggregate preserves it
    // regardless of worker scheduling.
    let results = results.into_inner().unwrap();
    let mut rows: Vec<SweepRow> = Vec::new();
    let mut failures: Vec<String> = Vec::new();
    for (i, res) in results.into_iter().enumerate() {
        let (_, e, g) = points[i];
        match res {
            Some(Ok(row)) => rows.push(row),
            Some(Err(msg)) => failures.push(format!("epsilon={e:?} grashof={g:?}: {msg}")),
            None => failures.push(format!("epsilon={e:?} grashof={g:?}: not attempted")),
        }
    }
    let ordered: Vec<(f64, f64, &SweepRow)> =
        rows.iter().map(|r| (r.epsilon, r.grashof, r)).collect();

    write_sweep_csv(&out.join("sweep.csv"), &rows)?;
    write_sweep_extra_csv(&out.join("sweep_extra.csv"), &rows)?;
    let fits = fits_lines(&ordered);
    let mut fits_text = String::from(FITS_HEADER);
    fits_text.push('\n');
    for line in &fits {
        fits_text.push_str(line);
        fits_text.push('\n');
    }
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("fits.csv"), fits_text)?;

    println!("sweep: {} points completed, {} failed", rows.len(), failures.len());
    println!("{SWEEP_HEADER}");
    for row in &rows {
        println!("{}", sweep_csv_line(row));
    }
    println!("{SWEEP_EXTRA_HEADER}");
    for row in &rows {
        println!(
            "{},{},{},{},{}",
            fmt_f64(row.epsilon),
            fmt_f64(row.grashof),
            row.n_star.map(|n| n.to_string()).unwrap_or_else(|| "none".into()),
            fmt_f64(row.kaplan_yorke),
            row.regime
        );
    }
    for line in &fits {
        println!("fit: {line}");
    }

    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!("sweep points failed: {}", failures.join("; "))))
    }
}
