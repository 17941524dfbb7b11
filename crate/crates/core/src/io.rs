//! Binary field snapshots and small JSON helpers.
//!
//! A snapshot is a 64-byte little-endian header followed by the components,
//! each a full field of `n1·n2·n3` little-endian `f64` in storage order
//! (`y1` fastest, `y3` slowest):
//!
//! | offset | type     | content                       |
//! |--------|----------|-------------------------------|
//! | 0      | `[u8;4]` | magic `LELA`                  |
//! | 4      | `u32`    | format version (1)            |
//! | 8      | `u32×3`  | `n1`, `n2`, `n3`              |
//! | 20     | `u32`    | component count               |
//! | 24     | `f64`    | time                          |
//! | 32     | `u8`     | mode (0 slab, 1 torus)        |
//! | 33     | —        | zero padding up to byte 64    |

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{ScalarField, Tensor2Field, VectorField};
use crate::geometry::{FlowMap, FlowState, ReferenceDeformation};
use crate::grid::{Grid, Mode};

pub const MAGIC: &[u8; 4] = b"LELA";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 64;

/// Components of a state snapshot: displacement (3), velocity (3),
/// enthalpy (1), deformation `𝔉^i_j` (9, row-major) and `F⁰_{kj}` (9).
pub const STATE_COMPONENTS: usize = 25;

/// Decoded snapshot contents.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub dims: [usize; 3],
    pub mode: Mode,
    pub components: Vec<Vec<f64>>,
}

impl Snapshot {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dims[0], self.dims[1], self.dims[2], self.mode)
    }
}

/// Writes `fields` (all on one grid) as a snapshot.
pub fn write_snapshot(path: &Path, t: f64, fields: &[&ScalarField]) -> Result<()> {
    let g = fields.first().ok_or_else(|| Error::Config("snapshot needs at least one component".into()))?.grid();
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(MAGIC);
    header[4..8].copy_from_slice(&VERSION.to_le_bytes());
    for (k, n) in [g.n1(), g.n2(), g.n3()].iter().enumerate() {
        header[8 + 4 * k..12 + 4 * k].copy_from_slice(&(*n as u32).to_le_bytes());
    }
    header[20..24].copy_from_slice(&(fields.len() as u32).to_le_bytes());
    header[24..32].copy_from_slice(&t.to_le_bytes());
    header[32] = match g.mode() {
        Mode::Slab => 0,
        Mode::Torus => 1,
    };
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&header)?;
    for f in fields {
        if f.grid() != g {
            return Err(Error::Config("snapshot components live on different grids".into()));
        }
        for x in f.as_slice() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let bytes = fs::read(path)?;
    let bad = |reason: String| Error::Snapshot { path: path.to_path_buf(), reason };
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let version = u32_at(4);
    if version != VERSION as usize {
        return Err(bad(format!("unsupported version {version}")));
    }
    let dims = [u32_at(8), u32_at(12), u32_at(16)];
    let ncomp = u32_at(20);
    let t = f64::from_le_bytes(bytes[24..32].try_into().expect("8 bytes"));
    let mode = match bytes[32] {
        0 => Mode::Slab,
        1 => Mode::Torus,
        m => return Err(bad(format!("unknown mode byte {m}"))),
    };
    let n = dims.iter().product::<usize>();
    let expected = HEADER_LEN + 8 * n * ncomp;
    if bytes.len() != expected {
        return Err(bad(format!("expected {expected} bytes for {ncomp} components of {dims:?}, found {}", bytes.len())));
    }
    let components = (0..ncomp)
        .map(|c| {
            let start = HEADER_LEN + 8 * n * c;
            bytes[start..start + 8 * n].chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect()
        })
        .collect();
    Ok(Snapshot { t, dims, mode, components })
}

/// Writes a full state together with its reference deformation.
pub fn write_state(path: &Path, state: &FlowState, f0: &ReferenceDeformation) -> Result<()> {
    let mut fields: Vec<&ScalarField> = Vec::with_capacity(STATE_COMPONENTS);
    fields.extend(state.eta.displacement.0.iter());
    fields.extend(state.v.0.iter());
    fields.push(&state.h);
    fields.extend(state.f.0.iter().flatten());
    fields.extend(f0.f0.0.iter().flatten());
    write_snapshot(path, state.t, &fields)
}

/// Reads a snapshot written by [`write_state`].
pub fn read_state(path: &Path) -> Result<(FlowState, ReferenceDeformation)> {
    let snap = read_snapshot(path)?;
    if snap.components.len() != STATE_COMPONENTS {
        return Err(Error::Snapshot {
            path: path.to_path_buf(),
            reason: format!("state snapshots have {STATE_COMPONENTS} components, found {}", snap.components.len()),
        });
    }
    let g = snap.grid()?;
    let mut it = snap.components.into_iter().map(|c| ScalarField::from_vec(&g, c));
    let mut next = || it.next().expect("component count checked");
    let displacement = VectorField([next(), next(), next()]);
    let v = VectorField([next(), next(), next()]);
    let h = next();
    let mut tensor = || Tensor2Field(std::array::from_fn(|_| std::array::from_fn(|_| next())));
    let f = tensor();
    let f0 = tensor();
    let state = FlowState { t: snap.t, eta: FlowMap::from_displacement(displacement), v, h, f };
    Ok((state, ReferenceDeformation::new(f0)))
}

/// Pretty-printed JSON file.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
