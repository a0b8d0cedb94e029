//! Deterministic CSV and report writers.
//!
//! All files have a header row and a fixed column order (documented in the
//! README). Floats are rendered with shortest-round-trip formatting, so a
//! rerun with identical inputs produces byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use betaplane::tangent::TraceBreakdown;

use crate::CliResult;

/// Shortest-round-trip float rendering (never locale-dependent).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn write_lines(path: &Path, header: &str, rows: &[String]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(())
}

/// Per-sample scalar observables of a simulation run.
#[derive(Debug, Clone, Copy)]
pub struct ObservableRow {
    pub t: f64,
    pub l2: f64,
    pub h1: f64,
    pub zonal_l2: f64,
    pub nonzonal_l2: f64,
    /// `||grad w||^2`, the dissipation-side term of the energy budget.
    pub grad_sq: f64,
    /// `(w, f)`, the injection-side term of the energy budget.
    pub work: f64,
}

pub const OBSERVABLES_HEADER: &str = "t,l2,h1,zonal_l2,nonzonal_l2,grad_sq,work";

pub fn write_observables_csv(path: &Path, rows: &[ObservableRow]) -> CliResult<()> {
    let rendered: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{}",
                fmt_f64(r.t),
                fmt_f64(r.l2),
                fmt_f64(r.h1),
                fmt_f64(r.zonal_l2),
                fmt_f64(r.nonzonal_l2),
                fmt_f64(r.grad_sq),
                fmt_f64(r.work)
            )
        })
        .collect();
    write_lines(path, OBSERVABLES_HEADER, &rendered)
}

pub const TRACE_HEADER: &str = "t,tr_lap,tr_a0,tr_bbar,tr_btilde,tr_total,tr_bbar1_re,tr_bbar1_im,tr_bbar2_re,tr_bbar2_im,logvol";

pub fn write_trace_csv(path: &Path, rows: &[TraceBreakdown]) -> CliResult<()> {
    let rendered: Vec<String> = rows
        .iter()
        .map(|b| {
            format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                fmt_f64(b.t),
                fmt_f64(b.tr_lap),
                fmt_f64(b.tr_a0),
                fmt_f64(b.tr_bbar),
                fmt_f64(b.tr_btilde),
                fmt_f64(b.tr_total),
                fmt_f64(b.tr_bbar1.re),
                fmt_f64(b.tr_bbar1.im),
                fmt_f64(b.tr_bbar2.re),
                fmt_f64(b.tr_bbar2.im),
                fmt_f64(b.logvol)
            )
        })
        .collect();
    write_lines(path, TRACE_HEADER, &rendered)
}

/// One sweep point's scalar results.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub epsilon: f64,
    pub grashof: f64,
    /// Post-burn-in supremum of the non-zonal vorticity norm.
    pub sup_nonzonal: f64,
    /// Post-burn-in supremum of the zonal-error norm against the
    /// synchronized limit solution.
    pub limsup_zeta: f64,
    /// H1 distance between the located 2D steady state and the limiting
    /// zonal steady profile.
    pub h1_distance: f64,
    /// Leading Lyapunov exponent over the measurement window.
    pub lambda1: f64,
    /// Smallest bundle size with positive mean contraction trace, if found.
    pub n_star: Option<usize>,
    pub kaplan_yorke: f64,
    pub regime: &'static str,
}

pub const SWEEP_HEADER: &str = "epsilon,grashof,sup_nonzonal,limsup_zeta,h1_distance,lambda1";

/// The six-column aggregate (fixed order, one row per point).
pub fn sweep_csv_line(r: &SweepRow) -> String {
    format!(
        "{},{},{},{},{},{}",
        fmt_f64(r.epsilon),
        fmt_f64(r.grashof),
        fmt_f64(r.sup_nonzonal),
        fmt_f64(r.limsup_zeta),
        fmt_f64(r.h1_distance),
        fmt_f64(r.lambda1)
    )
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> CliResult<()> {
    let rendered: Vec<String> = rows.iter().map(sweep_csv_line).collect();
    write_lines(path, SWEEP_HEADER, &rendered)
}

pub const SWEEP_EXTRA_HEADER: &str = "epsilon,grashof,n_star,kaplan_yorke,regime";

/// Side table with the dimension proxies and the regime annotation.
pub fn write_sweep_extra_csv(path: &Path, rows: &[SweepRow]) -> CliResult<()> {
    let rendered: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{}",
                fmt_f64(r.epsilon),
                fmt_f64(r.grashof),
                r.n_star.map(|n| n.to_string()).unwrap_or_else(|| "none".into()),
                fmt_f64(r.kaplan_yorke),
                r.regime
            )
        })
        .collect();
    write_lines(path, SWEEP_EXTRA_HEADER, &rendered)
}

/// One sample of the zonal-limit decomposition time series.
#[derive(Debug, Clone, Copy)]
pub struct LimitRow {
    pub t: f64,
    pub zonal_l2: f64,
    pub nonzonal_l2: f64,
    /// Norm of the zonal-error profile integrated from its own equation.
    pub zeta_l2: f64,
    /// Norm of the direct difference `zonal(w) - heat profile`.
    pub zeta_direct_l2: f64,
    /// Norm of (integrated - direct): the splitting consistency residual.
    pub zeta_consistency: f64,
}

pub const LIMIT_HEADER: &str = "t,zonal_l2,nonzonal_l2,zeta_l2,zeta_direct_l2,zeta_consistency";

pub fn write_limit_csv(path: &Path, rows: &[LimitRow]) -> CliResult<()> {
    let rendered: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                fmt_f64(r.t),
                fmt_f64(r.zonal_l2),
                fmt_f64(r.nonzonal_l2),
                fmt_f64(r.zeta_l2),
                fmt_f64(r.zeta_direct_l2),
                fmt_f64(r.zeta_consistency)
            )
        })
        .collect();
    write_lines(path, LIMIT_HEADER, &rendered)
}

/// One row of a pass/fail report.
#[derive(Debug, Clone)]
pub struct CheckRow {
    pub check_name: String,
    pub value: f64,
    pub bound: f64,
    /// Positive margin means the check passed with room to spare; the sign
    /// convention is `bound - value` for upper bounds and `value - bound`
    /// for lower bounds, chosen by the producer.
    pub margin: f64,
    pub errbar: f64,
    pub pass: bool,
}

impl CheckRow {
    /// An upper-bound check: `value <= bound`.
    pub fn upper(name: &str, value: f64, bound: f64) -> Self {
        Self {
            check_name: name.to_string(),
            value,
            bound,
            margin: bound - value,
            errbar: 0.0,
            pass: value <= bound,
        }
    }

    /// A lower-bound check: `value >= bound`.
    pub fn lower(name: &str, value: f64, bound: f64) -> Self {
        Self {
            check_name: name.to_string(),
            value,
            bound,
            margin: value - bound,
            errbar: 0.0,
            pass: value >= bound,
        }
    }

    pub fn with_errbar(mut self, errbar: f64) -> Self {
        self.errbar = errbar;
        self
    }

    /// Overrides the pass flag with a verdict computed elsewhere (used when
    /// the acceptance rule folds in error bars rather than a bare compare).
    pub fn forced(mut self, pass: bool) -> Self {
        self.pass = pass;
        self
    }
}

pub const REPORT_HEADER: &str = "check_name,value,bound,margin,errbar,pass";

pub fn write_report_csv(path: &Path, rows: &[CheckRow]) -> CliResult<()> {
    let rendered: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.check_name,
                fmt_f64(r.value),
                fmt_f64(r.bound),
                fmt_f64(r.margin),
                fmt_f64(r.errbar),
                r.pass
            )
        })
        .collect();
    write_lines(path, REPORT_HEADER, &rendered)
}

/// Renders a report for humans; one aligned line per check.
pub fn report_text(rows: &[CheckRow]) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&format!(
            "{:<44} value {:>13.6e}  bound {:>13.6e}  margin {:>13.6e}{}  [{}]\n",
            r.check_name,
            r.value,
            r.bound,
            r.margin,
            if r.errbar > 0.0 { format!("  +/- {:.2e}", r.errbar) } else { String::new() },
            if r.pass { "pass" } else { "FAIL" },
        ));
    }
    out
}

/// Writes simple `key = value` summary lines (deterministic order is the
/// caller's responsibility).
pub fn write_summary(path: &Path, pairs: &[(String, String)]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    for (k, v) in pairs {
        writeln!(w, "{k} = {v}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_rendering_round_trips() {
        for v in [0.1, 1e-5, 3.141592653589793, -2.5e108, 0.30000000000000004] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }

    #[test]
    fn check_row_margins_follow_bound_direction() {
        let up = CheckRow::upper("x", 0.5, 1.0);
        assert!(up.pass && up.margin == 0.5);
        let low = CheckRow::lower("y", 0.5, 1.0);
        assert!(!low.pass && low.margin == -0.5);
    }
}
