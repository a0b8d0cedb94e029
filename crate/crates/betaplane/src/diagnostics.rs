//! Time-average bookkeeping, budget checks, and scaling regressions.

use crate::dynamics::Forcing;
use crate::{Error, Result};

/// Trapezoid-rule running time average of a scalar observable, with a
/// five-block error bar and a running supremum.
///
/// The block error bar treats the five sub-interval means as independent
/// draws: `err = std(block means) / sqrt(5)`. That is honest for signals
/// whose correlation time is shorter than a block and conservative for
/// constants (error zero).
#[derive(Debug, Clone, Default)]
pub struct RunningTimeAverage {
    ts: Vec<f64>,
    vs: Vec<f64>,
    sup_abs: f64,
}

pub const N_BLOCKS: usize = 5;

impl RunningTimeAverage {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a sample; times must be strictly increasing.
    pub fn update(&mut self, t: f64, v: f64) -> Result<()> {
        if let Some(&last) = self.ts.last() {
            if t <= last {
                return Err(Error::NonMonotoneTime { t_prev: last, t });
            }
        }
        self.ts.push(t);
        self.vs.push(v);
        self.sup_abs = self.sup_abs.max(v.abs());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ts.is_empty()
    }

    /// Time span covered by the samples.
    pub fn t_span(&self) -> f64 {
        match (self.ts.first(), self.ts.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Trapezoid-rule mean over the sampled span. A single sample returns
    /// its value; no samples return 0.
    pub fn mean(&self) -> f64 {
        match self.ts.len() {
            0 => 0.0,
            1 => self.vs[0],
            _ => {
                let mut acc = 0.0;
                for i in 1..self.ts.len() {
                    acc += (self.ts[i] - self.ts[i - 1]) * 0.5 * (self.vs[i] + self.vs[i - 1]);
                }
                acc / self.t_span()
            }
        }
    }

    /// `(mean, error bar)` with the five-block estimate. Degenerate inputs
    /// (fewer segments than blocks) report error zero.
    pub fn mean_with_error(&self) -> (f64, f64) {
        let mean = self.mean();
        if self.ts.len() < 2 * N_BLOCKS {
            return (mean, 0.0);
        }
        let t0 = self.ts[0];
        let span = self.t_span();
        let mut integral = [0.0; N_BLOCKS];
        let mut duration = [0.0; N_BLOCKS];
        for i in 1..self.ts.len() {
            let tm = 0.5 * (self.ts[i] + self.ts[i - 1]);
            let mut b = ((tm - t0) / span * N_BLOCKS as f64) as usize;
            b = b.min(N_BLOCKS - 1);
            let dt = self.ts[i] - self.ts[i - 1];
            integral[b] += dt * 0.5 * (self.vs[i] + self.vs[i - 1]);
            duration[b] += dt;
        }
        let means: Vec<f64> = integral
            .iter()
            .zip(&duration)
            .filter(|&(_, &d)| d > 0.0)
            .map(|(&i, &d)| i / d)
            .collect();
        if means.len() < 2 {
            return (mean, 0.0);
        }
        let m = means.iter().sum::<f64>() / means.len() as f64;
        let var =
            means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
        (mean, (var / means.len() as f64).sqrt())
    }

    /// Running supremum of `|v|`.
    pub fn sup_abs(&self) -> f64 {
        self.sup_abs
    }
}

/// Outcome of the stationary energy-budget check.
#[derive(Debug, Clone, Copy)]
pub struct EnergyBudgetReport {
    /// Time-mean of the dissipation `||grad w||^2` and its error bar.
    pub mean_dissipation: f64,
    pub dissipation_err: f64,
    /// Time-mean of the injection `(w, f)` and its error bar.
    pub mean_injection: f64,
    pub injection_err: f64,
    /// `|dissipation - injection| / max(|dissipation|, |injection|)`.
    pub rel_imbalance: f64,
    /// `G - sqrt(mean dissipation)`: slack in the a priori bound
    /// `sqrt(<||grad w||^2>) <= G`.
    pub bound_margin: f64,
    /// Balance within `rel_tol` plus the propagated error bars.
    pub balanced: bool,
    /// Bound satisfied within the error bar.
    pub within_bound: bool,
}

/// Checks the stationary energy budget `<||grad w||^2> = <(w, f)>` and the
/// a priori bound `sqrt(<||grad w||^2>) <= G` from two observable histories
/// recorded along a trajectory.
pub fn check_energy_budget(
    dissipation: &RunningTimeAverage,
    injection: &RunningTimeAverage,
    grashof: f64,
    rel_tol: f64,
) -> EnergyBudgetReport {
    let (md, ed) = dissipation.mean_with_error();
    let (mi, ei) = injection.mean_with_error();
    let scale = md.abs().max(mi.abs()).max(1e-300);
    let rel_imbalance = (md - mi).abs() / scale;
    let balanced = (md - mi).abs() <= rel_tol * scale + 2.0 * (ed + ei);
    let rms_grad = md.max(0.0).sqrt();
    let bound_margin = grashof - rms_grad;
    // Propagate the dissipation error bar through the square root.
    let rms_err = if rms_grad > 0.0 { 0.5 * ed / rms_grad } else { 0.0 };
    let within_bound = rms_grad <= grashof * (1.0 + rel_tol) + 2.0 * rms_err;
    EnergyBudgetReport {
        mean_dissipation: md,
        dissipation_err: ed,
        mean_injection: mi,
        injection_err: ei,
        rel_imbalance,
        bound_margin,
        balanced,
        within_bound,
    }
}

/// Residual of the forcing-orthogonality identity `(fcheck, ftilde) = 0`,
/// normalized by the norms of the two factors (zero if either vanishes).
///
/// The identity holds for every real forcing: the `k` and `-k` contributions
/// `|f_k|^2 / lambda_k` cancel pairwise because `lambda_{-k} = -lambda_k`.
/// A nonzero value therefore indicates a broken pairing in the spectral
/// representation itself, not merely a forcing outside the symmetry class;
/// class membership is checked separately via the coefficient symmetry.
pub fn check_fcheck_orthogonality(forcing: &Forcing) -> f64 {
    let g = forcing.fcheck_rotated();
    let ft = forcing.nonzonal_part();
    let ng = g.l2_norm();
    let nf = ft.l2_norm();
    if ng == 0.0 || nf == 0.0 {
        return 0.0;
    }
    g.inner_product(ft).abs() / (ng * nf)
}

/// Least-squares power-law fit `y = A x^slope` in log-log coordinates.
#[derive(Debug, Clone, Copy)]
pub struct ScalingFit {
    pub slope: f64,
    /// `ln A`: the log-space intercept.
    pub ln_amplitude: f64,
    /// Largest relative deviation `|y_fit - y| / y` over the input pairs.
    pub max_rel_residual: f64,
    /// Number of pairs used.
    pub n: usize,
}

impl ScalingFit {
    pub fn amplitude(&self) -> f64 {
        self.ln_amplitude.exp()
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.ln_amplitude + self.slope * x.ln()).exp()
    }
}

/// Fits `y = A x^slope` through strictly positive pairs by least squares on
/// `(ln x, ln y)`. Fails if fewer than 3 pairs are strictly positive in both
/// coordinates.
pub fn fit_power_law(pairs: &[(f64, f64)]) -> Result<ScalingFit> {
    let usable: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|&&(x, y)| x > 0.0 && y > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientFitData(usable.len()));
    }
    let n = usable.len() as f64;
    let sx: f64 = usable.iter().map(|p| p.0).sum();
    let sy: f64 = usable.iter().map(|p| p.1).sum();
    let sxx: f64 = usable.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = usable.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(Error::InvalidParam {
            name: "pairs",
            reason: "all x values coincide; slope is undetermined".into(),
        });
    }
    let slope = (n * sxy - sx * sy) / denom;
    let ln_amplitude = (sy - slope * sx) / n;
    let fit = ScalingFit { slope, ln_amplitude, max_rel_residual: 0.0, n: usable.len() };
    let max_rel_residual = pairs
        .iter()
        .filter(|&&(x, y)| x > 0.0 && y > 0.0)
        .map(|&(x, y)| (fit.eval(x) - y).abs() / y)
        .fold(0.0, f64::max);
    Ok(ScalingFit { max_rel_residual, ..fit })
}
