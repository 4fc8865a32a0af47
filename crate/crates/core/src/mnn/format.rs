//! Binary model container.
//!
//! All integers and floats are little-endian; floats are IEEE-754 binary64.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SNMN"
//! 4       4     format_version (u32, currently 1)
//! 8       8     gamma (f64)
//! 16      4     layer_count L (u32)
//! 20      9*L   layer table, per layer: in_dim u32, out_dim u32, activation u8 (0 tanh, 1 linear)
//! ...           payload, per layer in order:
//!                 W      out_dim*in_dim f64, row-major
//!                 Q      out_dim*out_dim f64, row-major
//!                 alpha  out_dim f64
//! ```
//!
//! The stream ends exactly after the last payload. Memory state and
//! power-iteration caches are not stored.

use byteorder::{ByteOrder, LittleEndian};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use super::{Activation, MnnError, MnnLayer, MnnNetwork};

pub const MAGIC: &[u8; 4] = b"SNMN";
pub const FORMAT_VERSION: u32 = 1;

const HEADER_LEN: usize = 20;
const LAYER_ENTRY_LEN: usize = 9;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("stream truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("inconsistent dimensions: {0}")]
    Dimension(String),
    #[error("unknown activation tag {0}")]
    Activation(u8),
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("invalid network: {0}")]
    Network(#[from] MnnError),
}

pub(super) fn encode(net: &MnnNetwork) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    push_u32(&mut out, FORMAT_VERSION);
    push_f64(&mut out, net.gamma());
    push_u32(&mut out, net.layer_count() as u32);
    for l in net.layers() {
        push_u32(&mut out, l.in_dim() as u32);
        push_u32(&mut out, l.out_dim() as u32);
        out.push(match l.activation() {
            Activation::Tanh => 0,
            Activation::Linear => 1,
        });
    }
    for l in net.layers() {
        push_row_major(&mut out, l.w());
        push_row_major(&mut out, l.q());
        for &a in l.alpha().iter() {
            push_f64(&mut out, a);
        }
    }
    out
}

pub(super) fn decode(bytes: &[u8]) -> Result<MnnNetwork, FormatError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(FormatError::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let gamma = cur.f64()?;
    let count = cur.u32()? as usize;
    debug_assert_eq!(cur.pos, HEADER_LEN);
    if count == 0 {
        return Err(FormatError::Dimension("layer_count is zero".into()));
    }
    cur.need(count.saturating_mul(LAYER_ENTRY_LEN))?;

    let mut table = Vec::with_capacity(count);
    for _ in 0..count {
        let in_dim = cur.u32()? as usize;
        let out_dim = cur.u32()? as usize;
        let activation = match cur.take(1)?[0] {
            0 => Activation::Tanh,
            1 => Activation::Linear,
            t => return Err(FormatError::Activation(t)),
        };
        table.push((in_dim, out_dim, activation));
    }

    let mut payload: usize = 0;
    for (l, &(in_dim, out_dim, _)) in table.iter().enumerate() {
        if in_dim == 0 || out_dim == 0 {
            return Err(FormatError::Dimension(format!(
                "layer {l} has a zero dimension"
            )));
        }
        if l > 0 && in_dim != table[l - 1].1 {
            return Err(FormatError::Dimension(format!(
                "layer {l} in_dim {in_dim} does not match previous out_dim {}",
                table[l - 1].1
            )));
        }
        let floats = out_dim
            .checked_mul(in_dim)
            .and_then(|w| out_dim.checked_mul(out_dim).and_then(|q| w.checked_add(q)))
            .and_then(|s| s.checked_add(out_dim))
            .and_then(|s| s.checked_mul(8))
            .ok_or_else(|| FormatError::Dimension(format!("layer {l} dimensions overflow")))?;
        payload = payload
            .checked_add(floats)
            .ok_or_else(|| FormatError::Dimension("payload size overflows".into()))?;
    }
    let remaining = bytes.len() - cur.pos;
    if payload > remaining {
        return Err(FormatError::Truncated {
            needed: cur.pos + payload,
            available: bytes.len(),
        });
    }
    if payload < remaining {
        return Err(FormatError::TrailingBytes(remaining - payload));
    }

    let mut layers = Vec::with_capacity(count);
    for &(in_dim, out_dim, activation) in &table {
        let w = cur.row_major(out_dim, in_dim)?;
        let q = cur.row_major(out_dim, out_dim)?;
        let alpha = DVector::from_vec(cur.f64s(out_dim)?);
        layers.push(MnnLayer::new(w, q, alpha, activation)?);
    }
    Ok(MnnNetwork::new(layers, gamma)?)
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    let mut b = [0u8; 4];
    LittleEndian::write_u32(&mut b, v);
    out.extend_from_slice(&b);
}

fn push_f64(out: &mut Vec<u8>, v: f64) {
    let mut b = [0u8; 8];
    LittleEndian::write_f64(&mut b, v);
    out.extend_from_slice(&b);
}

fn push_row_major(out: &mut Vec<u8>, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            push_f64(out, m[(i, j)]);
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn need(&self, n: usize) -> Result<(), FormatError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            Err(FormatError::Truncated {
                needed: self.pos.saturating_add(n),
                available: self.bytes.len(),
            })
        } else {
            Ok(())
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        self.need(n)?;
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(LittleEndian::read_u32(self.take(4)?))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(LittleEndian::read_f64(self.take(8)?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        let raw = self.take(n * 8)?;
        Ok(raw.chunks_exact(8).map(LittleEndian::read_f64).collect())
    }

    fn row_major(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>, FormatError> {
        Ok(DMatrix::from_row_slice(
            rows,
            cols,
            &self.f64s(rows * cols)?,
        ))
    }
}

// Byte offsets of the layer table, exposed for corruption tests.
#[cfg(test)]
pub(crate) fn layer_entry_offset(layer: usize) -> usize {
    HEADER_LEN + layer * LAYER_ENTRY_LEN
}
