//! The five command drivers and their shared run plumbing.

pub mod limit;
pub mod simulate;
pub mod sweep;
pub mod tangent;
pub mod verify;

use std::path::PathBuf;
use std::sync::Arc;

use betaplane::checkpoint::read_checkpoint;
use betaplane::dynamics::{
    run_to_stationarity, EvolveOptions, FlowParams, FlowState, Forcing, StationarityOptions,
    StationarityReport,
};
use betaplane::spectral::Lattice;

use crate::config::RunConfig;
use crate::{CliError, CliResult};

/// Everything a command needs after setup and burn-in.
pub struct RunContext {
    pub lattice: Arc<Lattice>,
    pub params: FlowParams,
    pub forcing: Forcing,
    /// Post-burn-in state (or the checkpointed state when one was supplied).
    pub state: FlowState,
    /// Burn-in report; `None` when the state came from a checkpoint.
    pub burnin: Option<StationarityReport>,
    pub out_dir: PathBuf,
}

/// Evolution policy derived from the config.
pub fn evolve_opts(cfg: &RunConfig) -> EvolveOptions {
    EvolveOptions { dt_max: cfg.dt_max, ..EvolveOptions::default() }
}

/// Builds lattice, parameters, and forcing, then either loads the
/// configured checkpoint (which must match the config's grid and physical
/// parameters) or burns in from the seeded initial state until the
/// enstrophy stops drifting.
pub fn prepare(cfg: &RunConfig, out_override: Option<&PathBuf>) -> CliResult<RunContext> {
    let lattice = cfg.lattice()?;
    let params = cfg.params()?;
    let forcing = cfg.forcing(&lattice)?;
    let out_dir = out_override.cloned().unwrap_or_else(|| cfg.output_dir.clone());

    if let Some(path) = &cfg.checkpoint {
        let (state, meta) = read_checkpoint(path)?;
        if state.w.lattice().nx() != cfg.nx || state.w.lattice().ny() != cfg.ny {
            return Err(CliError::Config(format!(
                "checkpoint grid {}x{} does not match config {}x{}",
                state.w.lattice().nx(),
                state.w.lattice().ny(),
                cfg.nx,
                cfg.ny
            )));
        }
        for (name, got, want) in
            [("epsilon", meta.epsilon, cfg.epsilon), ("grashof", meta.grashof, cfg.grashof)]
        {
            if (got - want).abs() > 1e-12 * want.abs().max(1.0) {
                return Err(CliError::Config(format!(
                    "checkpoint {name} = {got} does not match config {name} = {want}"
                )));
            }
        }
        return Ok(RunContext { lattice, params, forcing, state, burnin: None, out_dir });
    }

    let start = cfg.initial_state(&lattice);
    let st_opts = StationarityOptions {
        window: (cfg.t_burnin_min / 5.0).clamp(2.0, 10.0),
        t_min: cfg.t_burnin_min,
        t_max: cfg.t_burnin_min.max(10.0) * 4.0,
        ..StationarityOptions::default()
    };
    let (state, report) =
        run_to_stationarity(&start, &params, &forcing, &st_opts, &evolve_opts(cfg))?;
    Ok(RunContext { lattice, params, forcing, state, burnin: Some(report), out_dir })
}
