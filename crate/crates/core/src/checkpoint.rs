//! Binary checkpoints of a [`FlowState`].
//!
//! Layout, all little-endian: the 8-byte magic `DHFLOW01`; ten 64-bit header
//! words `nx, ny, Lx, Ly, δ₁, δ₂, q, target kind, ε, t` (lengths, ε and t as
//! binary64, the rest as unsigned); then `u` as `nx·ny·q` binary64 values and
//! `ψ` as `nx·ny·2q` interleaved (re, im) pairs, both row-major.

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::clifford::VectorSpinorField;
use crate::error::{Error, Result};
use crate::flow::FlowState;
use crate::grid::{Field, GridSpec, SpinStructure};
use crate::target::{MapField, Target};

pub const MAGIC_PREFIX: &[u8; 6] = b"DHFLOW";
pub const VERSION: &[u8; 2] = b"01";
const HEADER_WORDS: usize = 10;

pub fn encode(state: &FlowState) -> Vec<u8> {
    let g = state.u.grid();
    let q = state.u.q();
    let mut out = Vec::with_capacity(8 + 8 * (HEADER_WORDS + g.len() * 5 * q));
    out.extend_from_slice(MAGIC_PREFIX);
    out.extend_from_slice(VERSION);
    let words: [u64; HEADER_WORDS] = [
        g.nx as u64,
        g.ny as u64,
        g.lx.to_bits(),
        g.ly.to_bits(),
        g.spin.delta1 as u64,
        g.spin.delta2 as u64,
        q as u64,
        state.u.target.kind_code(),
        state.eps.to_bits(),
        state.t.to_bits(),
    ];
    for w in words {
        out.extend_from_slice(&w.to_le_bytes());
    }
    for v in &state.u.field.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for z in &state.psi.field.data {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn word(&mut self) -> Result<u64> {
        let end = self.pos + 8;
        let b = self.bytes.get(self.pos..end).ok_or(Error::Truncated)?;
        self.pos = end;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn real(&mut self) -> Result<f64> {
        self.word().map(f64::from_bits)
    }
}

fn small(v: u64, what: &str) -> Result<usize> {
    usize::try_from(v)
        .ok()
        .filter(|n| *n <= 1 << 24)
        .ok_or_else(|| Error::Incompatible(format!("checkpoint {what} {v} out of range")))
}

pub fn decode(bytes: &[u8]) -> Result<FlowState> {
    if bytes.len() < 8 {
        return Err(if MAGIC_PREFIX.starts_with(&bytes[..bytes.len().min(6)]) {
            Error::Truncated
        } else {
            Error::BadMagic
        });
    }
    if &bytes[..6] != MAGIC_PREFIX {
        return Err(Error::BadMagic);
    }
    if &bytes[6..8] != VERSION {
        return Err(Error::UnsupportedVersion(String::from_utf8_lossy(&bytes[6..8]).into_owned()));
    }
    let mut r = Reader { bytes, pos: 8 };
    let nx = small(r.word()?, "nx")?;
    let ny = small(r.word()?, "ny")?;
    let (lx, ly) = (r.real()?, r.real()?);
    let d1 = r.word()?;
    let d2 = r.word()?;
    let q = small(r.word()?, "q")?;
    let kind = r.word()?;
    let (eps, t) = (r.real()?, r.real()?);
    let bits = |d: u64| u8::try_from(d).map_err(|_| Error::Incompatible(format!("spin bit {d}")));
    let grid = GridSpec::new(lx, ly, nx, ny, SpinStructure::new(bits(d1)?, bits(d2)?)?)?;
    let target = Target::from_code(kind, q)?;
    let expected = 8 * (HEADER_WORDS + grid.len() * q * 5) + 8;
    if bytes.len() < expected {
        return Err(Error::Truncated);
    }
    if bytes.len() > expected {
        return Err(Error::Incompatible(format!("{} trailing bytes after checkpoint data", bytes.len() - expected)));
    }
    let mut u = Field::zeros(grid, q, false);
    for v in u.data.iter_mut() {
        *v = r.real()?;
    }
    let mut psi = VectorSpinorField::zeros(grid, q);
    for z in psi.field.data.iter_mut() {
        *z = Complex64::new(r.real()?, r.real()?);
    }
    FlowState::new(t, eps, MapField { field: u, target }, psi)
}

pub fn write_checkpoint(state: &FlowState, path: &Path) -> Result<()> {
    fs::write(path, encode(state))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<FlowState> {
    decode(&fs::read(path)?)
}
