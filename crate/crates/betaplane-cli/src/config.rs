//! Flat `key = value` configuration with cosmetic `[section]` headers.
//!
//! Keys are globally unique regardless of section (sections exist for
//! humans and diffs, not for namespacing). `#` starts a comment anywhere on
//! a line, so values cannot contain `#`. Unknown or duplicate keys are
//! errors that name the key and line, as are missing required keys and
//! malformed values.
//!
//! ```text
//! [grid]
//! nx = 64            # grid points in x (even, >= 8)
//! ny = 64
//!
//! [flow]
//! epsilon = 0.1      # rotation parameter (required)
//! grashof = 2.0      # forcing amplitude (required, >= 1)
//!
//! [forcing]
//! preset = mixed     # "mixed" (weights a, b) or "zonal"
//! a = 1.0
//! b = 1.0
//!
//! [time]
//! dt_max = 0.01
//! t_burnin_min = 50.0
//! t_horizon = 100.0
//!
//! [tangent]
//! n_tangent = 6
//! reorth_stride = 10
//! observer_stride = 10
//!
//! [output]
//! seed = 42
//! output_dir = out
//! checkpoint =        # optional: resume the tangent command from a file
//!
//! [sweep]
//! epsilon_ladder = 0.1, 0.0316, 0.01   # strictly monotone
//! grashof_ladder = 2.0
//! workers = 1
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use betaplane::dynamics::{FlowParams, FlowState, Forcing};
use betaplane::spectral::{make_lattice, Lattice, SpectralField};
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

/// Which forcing field a run uses; both presets are unit-norm before the
/// amplitude factor and lie in the solver's symmetry class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForcingPreset {
    /// Zonal plus non-zonal low modes with weights `(a, b)`.
    Mixed,
    /// Lowest zonal mode only (the one-dimensional limit driver).
    Zonal,
}

impl ForcingPreset {
    fn as_str(self) -> &'static str {
        match self {
            ForcingPreset::Mixed => "mixed",
            ForcingPreset::Zonal => "zonal",
        }
    }

    pub fn is_zonal(self) -> bool {
        self == ForcingPreset::Zonal
    }
}

/// Everything one run needs. See the module docs for the file format.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub nx: usize,
    pub ny: usize,
    pub epsilon: f64,
    pub grashof: f64,
    pub preset: ForcingPreset,
    pub a: f64,
    pub b: f64,
    pub dt_max: f64,
    pub t_burnin_min: f64,
    pub t_horizon: f64,
    pub n_tangent: usize,
    pub reorth_stride: usize,
    pub observer_stride: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Optional checkpoint to start the tangent analysis from.
    pub checkpoint: Option<PathBuf>,
}

/// A grid of runs over parameter ladders, sharing one base config.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub base: RunConfig,
    /// Strictly monotone; order is preserved in outputs.
    pub epsilon_ladder: Vec<f64>,
    /// Strictly monotone; defaults to the base Grashof number alone.
    pub grashof_ladder: Vec<f64>,
    pub workers: usize,
}

/// Raw parse of the file: values keyed by name, with line numbers for
/// error messages.
struct RawConfig {
    values: BTreeMap<String, (usize, String)>,
}

const KNOWN_KEYS: &[&str] = &[
    "nx",
    "ny",
    "epsilon",
    "grashof",
    "preset",
    "a",
    "b",
    "dt_max",
    "t_burnin_min",
    "t_horizon",
    "n_tangent",
    "reorth_stride",
    "observer_stride",
    "seed",
    "output_dir",
    "checkpoint",
    "epsilon_ladder",
    "grashof_ladder",
    "workers",
];

impl RawConfig {
    fn parse(text: &str) -> CliResult<Self> {
        let mut values: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') {
                    return Err(CliError::Config(format!(
                        "line {line_no}: unterminated section header `{line}`"
                    )));
                }
                continue; // sections are cosmetic
            }
            let Some(eq) = line.find('=') else {
                return Err(CliError::Config(format!(
                    "line {line_no}: expected `key = value`, got `{line}`"
                )));
            };
            let key = line[..eq].trim().to_string();
            let value = line[eq + 1..].trim().to_string();
            if key.is_empty() {
                return Err(CliError::Config(format!("line {line_no}: empty key")));
            }
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Config(format!("line {line_no}: unknown key `{key}`")));
            }
            if let Some((first_line, _)) = values.get(&key) {
                return Err(CliError::Config(format!(
                    "line {line_no}: duplicate key `{key}` (first set on line {first_line})"
                )));
            }
            values.insert(key, (line_no, value));
        }
        Ok(Self { values })
    }

    fn take(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(_, v)| v.as_str()).filter(|v| !v.is_empty())
    }

    fn required(&self, key: &str) -> CliResult<&str> {
        self.take(key)
            .ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
    }

    fn f64_of(&self, key: &str, default: Option<f64>) -> CliResult<f64> {
        match self.take(key) {
            None => default
                .ok_or_else(|| CliError::Config(format!("missing required key `{key}`"))),
            Some(s) => s.parse::<f64>().map_err(|_| {
                CliError::Config(format!("key `{key}`: `{s}` is not a number"))
            }),
        }
    }

    fn usize_of(&self, key: &str, default: usize) -> CliResult<usize> {
        match self.take(key) {
            None => Ok(default),
            Some(s) => s.parse::<usize>().map_err(|_| {
                CliError::Config(format!("key `{key}`: `{s}` is not a non-negative integer"))
            }),
        }
    }

    fn u64_of(&self, key: &str, default: u64) -> CliResult<u64> {
        match self.take(key) {
            None => Ok(default),
            Some(s) => s.parse::<u64>().map_err(|_| {
                CliError::Config(format!("key `{key}`: `{s}` is not a non-negative integer"))
            }),
        }
    }

    fn ladder_of(&self, key: &str) -> CliResult<Option<Vec<f64>>> {
        let Some(s) = self.take(key) else { return Ok(None) };
        let mut out = Vec::new();
        for part in s.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            out.push(part.parse::<f64>().map_err(|_| {
                CliError::Config(format!("key `{key}`: `{part}` is not a number"))
            })?);
        }
        if out.is_empty() {
            return Err(CliError::Config(format!("key `{key}`: empty ladder")));
        }
        Ok(Some(out))
    }
}

fn require_positive(name: &str, v: f64) -> CliResult<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(CliError::Config(format!("key `{name}`: must be finite and positive, got {v}")));
    }
    Ok(())
}

fn require_strictly_monotone(name: &str, ladder: &[f64]) -> CliResult<()> {
    for v in ladder {
        require_positive(name, *v)?;
    }
    if ladder.len() >= 2 {
        let increasing = ladder[1] > ladder[0];
        for w in ladder.windows(2) {
            if (increasing && w[1] <= w[0]) || (!increasing && w[1] >= w[0]) {
                return Err(CliError::Config(format!(
                    "key `{name}`: ladder must be strictly monotone, got {:?}",
                    ladder
                )));
            }
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let raw = RawConfig::parse(text)?;
        Self::from_raw(&raw)
    }

    fn from_raw(raw: &RawConfig) -> CliResult<Self> {
        let nx = raw.required("nx")?.parse::<usize>().map_err(|_| {
            CliError::Config("key `nx`: must be a positive integer".to_string())
        })?;
        let ny = raw.required("ny")?.parse::<usize>().map_err(|_| {
            CliError::Config("key `ny`: must be a positive integer".to_string())
        })?;
        let epsilon = raw.f64_of("epsilon", None)?;
        let grashof = raw.f64_of("grashof", None)?;
        let preset = match raw.take("preset").unwrap_or("mixed") {
            "mixed" => ForcingPreset::Mixed,
            "zonal" => ForcingPreset::Zonal,
            other => {
                return Err(CliError::Config(format!(
                    "key `preset`: `{other}` is not one of mixed, zonal"
                )))
            }
        };
        let cfg = Self {
            nx,
            ny,
            epsilon,
            grashof,
            preset,
            a: raw.f64_of("a", Some(1.0))?,
            b: raw.f64_of("b", Some(1.0))?,
            dt_max: raw.f64_of("dt_max", Some(1e-2))?,
            t_burnin_min: raw.f64_of("t_burnin_min", Some(50.0))?,
            t_horizon: raw.f64_of("t_horizon", Some(100.0))?,
            n_tangent: raw.usize_of("n_tangent", 6)?,
            reorth_stride: raw.usize_of("reorth_stride", 10)?,
            observer_stride: raw.usize_of("observer_stride", 10)?,
            seed: raw.u64_of("seed", 42)?,
            output_dir: PathBuf::from(raw.take("output_dir").unwrap_or("out")),
            checkpoint: raw.take("checkpoint").map(PathBuf::from),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        require_positive("epsilon", self.epsilon)?;
        require_positive("grashof", self.grashof)?;
        if self.grashof < 1.0 {
            return Err(CliError::Config(format!(
                "key `grashof`: must be >= 1, got {}",
                self.grashof
            )));
        }
        for (name, v) in [("a", self.a), ("b", self.b)] {
            if !v.is_finite() {
                return Err(CliError::Config(format!("key `{name}`: must be finite, got {v}")));
            }
        }
        require_positive("dt_max", self.dt_max)?;
        require_positive("t_horizon", self.t_horizon)?;
        if !(self.t_burnin_min.is_finite() && self.t_burnin_min >= 0.0) {
            return Err(CliError::Config(format!(
                "key `t_burnin_min`: must be finite and non-negative, got {}",
                self.t_burnin_min
            )));
        }
        for (name, v) in [
            ("nx", self.nx),
            ("ny", self.ny),
            ("n_tangent", self.n_tangent),
            ("reorth_stride", self.reorth_stride),
            ("observer_stride", self.observer_stride),
        ] {
            if v == 0 {
                return Err(CliError::Config(format!("key `{name}`: must be positive")));
            }
        }
        Ok(())
    }

    /// Canonical one-line-per-field rendering; the identity of a run for
    /// hashing. Floats use shortest-round-trip formatting.
    pub fn canonical_string(&self) -> String {
        format!(
            "nx = {}\nny = {}\nepsilon = {:?}\ngrashof = {:?}\npreset = {}\na = {:?}\nb = {:?}\n\
             dt_max = {:?}\nt_burnin_min = {:?}\nt_horizon = {:?}\nn_tangent = {}\n\
             reorth_stride = {}\nobserver_stride = {}\nseed = {}\n",
            self.nx,
            self.ny,
            self.epsilon,
            self.grashof,
            self.preset.as_str(),
            self.a,
            self.b,
            self.dt_max,
            self.t_burnin_min,
            self.t_horizon,
            self.n_tangent,
            self.reorth_stride,
            self.observer_stride,
            self.seed,
        )
    }

    /// Content hash of the physics-relevant fields (not the output paths),
    /// used to address completed sweep rows.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_string().as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }

    // ---- builders ----------------------------------------------------

    pub fn lattice(&self) -> CliResult<Arc<Lattice>> {
        Ok(make_lattice(self.nx, self.ny)?)
    }

    pub fn params(&self) -> CliResult<FlowParams> {
        Ok(FlowParams::new(self.epsilon, self.grashof)?)
    }

    pub fn forcing(&self, lattice: &Arc<Lattice>) -> CliResult<Forcing> {
        Ok(match self.preset {
            ForcingPreset::Mixed => Forcing::mixed(lattice, self.grashof, self.a, self.b)?,
            ForcingPreset::Zonal => Forcing::zonal_only(lattice, self.grashof)?,
        })
    }

    /// Deterministic seeded initial data: in-class random field with unit
    /// amplitude and a low-mode spectral envelope.
    pub fn initial_state(&self, lattice: &Arc<Lattice>) -> FlowState {
        let w0 = SpectralField::random_in_class(lattice.clone(), self.seed, 1.0, 2.0);
        FlowState::new(w0, 0.0)
    }
}

impl SweepConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let raw = RawConfig::parse(text)?;
        let base = RunConfig::from_raw(&raw)?;
        let epsilon_ladder =
            raw.ladder_of("epsilon_ladder")?.unwrap_or_else(|| vec![base.epsilon]);
        let grashof_ladder =
            raw.ladder_of("grashof_ladder")?.unwrap_or_else(|| vec![base.grashof]);
        require_strictly_monotone("epsilon_ladder", &epsilon_ladder)?;
        require_strictly_monotone("grashof_ladder", &grashof_ladder)?;
        for g in &grashof_ladder {
            if *g < 1.0 {
                return Err(CliError::Config(format!(
                    "key `grashof_ladder`: entries must be >= 1, got {g}"
                )));
            }
        }
        let workers = raw.usize_of("workers", 1)?;
        if workers == 0 {
            return Err(CliError::Config("key `workers`: must be positive".into()));
        }
        Ok(Self { base, epsilon_ladder, grashof_ladder, workers })
    }

    /// The run config of one sweep point. Checkpoints never carry over:
    /// they are tied to one `(epsilon, grashof)` pair.
    pub fn point(&self, epsilon: f64, grashof: f64) -> RunConfig {
        let mut cfg = self.base.clone();
        cfg.epsilon = epsilon;
        cfg.grashof = grashof;
        cfg.checkpoint = None;
        cfg
    }
}

/// Regime annotation for a `(epsilon, grashof)` pair, computed from the
/// theoretical rotation-strength boundaries with all undetermined constants
/// set to 1. Labels are navigational, not assertions.
pub fn regime_label(epsilon: f64, grashof: f64) -> &'static str {
    let lg = 1.0 + grashof.ln().max(0.0);
    let collapse = grashof.powf(-4.5) * lg.powf(-0.5);
    let strong = grashof.powf(-57.0 / 22.0) * lg.powf(-39.0 / 88.0);
    let moderate = grashof.powf(-31.0 / 12.0) * lg.powf(-5.0 / 12.0);
    if epsilon <= collapse {
        "collapse"
    } else if epsilon <= strong {
        "strong-rotation"
    } else if epsilon <= moderate {
        "moderate-rotation"
    } else {
        "weak-rotation"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "nx = 32\nny = 32\nepsilon = 0.1\ngrashof = 2.0\n";

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.nx, 32);
        assert_eq!(cfg.preset, ForcingPreset::Mixed);
        assert_eq!(cfg.n_tangent, 6);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn missing_required_key_names_the_field() {
        let err = RunConfig::parse("nx = 32\nny = 32\ngrashof = 2.0\n").unwrap_err();
        assert!(err.to_string().contains("`epsilon`"), "{err}");
    }

    #[test]
    fn unknown_and_duplicate_keys_are_rejected_with_lines() {
        let err = RunConfig::parse("nx = 32\nepsilno = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("line 2") && err.to_string().contains("`epsilno`"));
        let err = RunConfig::parse(&format!("{MINIMAL}epsilon = 0.2\n")).unwrap_err();
        assert!(err.to_string().contains("duplicate key `epsilon`"), "{err}");
    }

    #[test]
    fn sections_and_comments_are_cosmetic() {
        let text = "# run\n[grid]\nnx = 32 # pts\nny = 32\n[flow]\nepsilon = 0.1\ngrashof = 2\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!((cfg.nx, cfg.ny), (32, 32));
    }

    #[test]
    fn bad_values_name_key_and_value() {
        let err =
            RunConfig::parse("nx = 32\nny = 32\nepsilon = fast\ngrashof = 2\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("`epsilon`") && msg.contains("`fast`"), "{msg}");
    }

    #[test]
    fn ladders_must_be_strictly_monotone() {
        let ok = format!("{MINIMAL}epsilon_ladder = 0.1, 0.01, 0.001\n");
        assert_eq!(SweepConfig::parse(&ok).unwrap().epsilon_ladder.len(), 3);
        let bad = format!("{MINIMAL}epsilon_ladder = 0.1, 0.1\n");
        assert!(SweepConfig::parse(&bad).is_err());
        let bad = format!("{MINIMAL}epsilon_ladder = 0.1, 0.01, 0.02\n");
        assert!(SweepConfig::parse(&bad).is_err());
    }

    #[test]
    fn content_hash_tracks_physics_fields_only() {
        let a = RunConfig::parse(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.content_hash(), b.content_hash());
        let mut c = a.clone();
        c.epsilon = 0.2;
        assert_ne!(a.content_hash(), c.content_hash());
    }

    #[test]
    fn regime_labels_are_ordered_in_epsilon() {
        // For fixed grashof the labels move monotonically with epsilon.
        let labels: Vec<_> =
            [1e-3, 1e-2, 5e-2, 1.0].iter().map(|&e| regime_label(e, 3.0)).collect();
        assert_eq!(labels[0], "collapse");
        assert_eq!(*labels.last().unwrap(), "weak-rotation");
    }
}
