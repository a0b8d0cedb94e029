//! Binary checkpoints of flow states.
//!
//! Layout (all little-endian):
//!
//! ```text
//!     offset  size          field
//!     0       4             magic "BPV1"
//!     4       4             nx: u32
//!     8       4             ny: u32
//!     12      8             t: f64
//!     20      8             epsilon: f64
//!     28      8             grashof: f64
//!     36      nx*ny*8       coefficients: complex64 (re: f32, im: f32)
//! ```
//!
//! Coefficients are the full `nx x ny` spectrum of `e^{i k . x}` on
//! `[0, 2 pi] x [-pi, pi]`, row-major with `k1` slowest, both indices in FFT
//! order (`0, 1, .., -1`). The redundant `k1 < 0` half keeps the format
//! trivially consumable by array tools; readers may ignore it. Storage is
//! single-precision, so a round trip quantizes coefficients to f32 —
//! checkpoints are for restarts and visualization, not bitwise state
//! transfer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rustfft::num_complex::Complex64;

use crate::dynamics::FlowState;
use crate::spectral::{make_lattice, SpectralField};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"BPV1";

/// Run metadata carried alongside the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointMeta {
    pub epsilon: f64,
    pub grashof: f64,
}

/// Writes a checkpoint; see the module docs for the byte layout.
pub fn write_checkpoint(path: &Path, state: &FlowState, meta: &CheckpointMeta) -> Result<()> {
    let lat = state.w.lattice();
    let (nx, ny) = (lat.nx(), lat.ny());
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(nx as u32).to_le_bytes())?;
    w.write_all(&(ny as u32).to_le_bytes())?;
    w.write_all(&state.t.to_le_bytes())?;
    w.write_all(&meta.epsilon.to_le_bytes())?;
    w.write_all(&meta.grashof.to_le_bytes())?;
    // Expand to the full spectrum: raw coefficients, no grid-phase twist.
    let mut full = vec![Complex64::default(); nx * ny];
    for &(idx, _k1, _k2) in lat.retained() {
        let kxi = idx / ny;
        let kyi = idx % ny;
        let v = state.w.coeffs()[idx];
        full[kxi * ny + kyi] = v;
        if kxi > 0 {
            full[(nx - kxi) * ny + (ny - kyi) % ny] = v.conj();
        }
    }
    for c in &full {
        w.write_all(&(c.re as f32).to_le_bytes())?;
        w.write_all(&(c.im as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::CheckpointFormat(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

/// Reads a checkpoint written by [`write_checkpoint`]. The retained set is
/// re-derived from the stored grid size; out-of-mask coefficients are
/// dropped and the zonal column is re-symmetrized, so a loaded state always
/// satisfies the structural invariants.
pub fn read_checkpoint(path: &Path) -> Result<(FlowState, CheckpointMeta)> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_exact_array::<4>(&mut r)?;
    if &magic != MAGIC {
        return Err(Error::CheckpointFormat(format!(
            "bad magic {:02x?}, expected {:02x?}",
            magic, MAGIC
        )));
    }
    let nx = u32::from_le_bytes(read_exact_array::<4>(&mut r)?) as usize;
    let ny = u32::from_le_bytes(read_exact_array::<4>(&mut r)?) as usize;
    let t = f64::from_le_bytes(read_exact_array::<8>(&mut r)?);
    let epsilon = f64::from_le_bytes(read_exact_array::<8>(&mut r)?);
    let grashof = f64::from_le_bytes(read_exact_array::<8>(&mut r)?);
    let lattice = make_lattice(nx, ny).map_err(|e| {
        Error::CheckpointFormat(format!("stored grid size is not a valid lattice: {e}"))
    })?;
    let mut full = vec![Complex64::default(); nx * ny];
    for c in full.iter_mut() {
        let re = f32::from_le_bytes(read_exact_array::<4>(&mut r)?) as f64;
        let im = f32::from_le_bytes(read_exact_array::<4>(&mut r)?) as f64;
        *c = Complex64::new(re, im);
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::CheckpointFormat("trailing bytes after payload".into()));
    }
    let mut w = SpectralField::zeros(lattice.clone());
    {
        let coeffs = w.coeffs_mut();
        for &(idx, k1, _k2) in lattice.retained() {
            let kyi = idx % ny;
            let v = full[idx];
            coeffs[idx] = if k1 == 0 {
                // Enforce the reality invariant on the zonal column.
                let partner = full[(ny - kyi) % ny];
                (v + partner.conj()) * 0.5
            } else {
                v
            };
        }
    }
    Ok((FlowState::new(w, t), CheckpointMeta { epsilon, grashof }))
}
