//! Binary dump of packed buffers for reuse across processes.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! 0   8  magic "TSMMPACK"
//! 8   4  version (u32)
//! 12  1  side (0 = A, 1 = B)
//! 13  1  bytes per element
//! 14  2  reserved, zero
//! 16  8  descriptor count (u64)
//! 24  8  payload element count (u64)
//! 32 56  geometry: extent, k, block, k_c, strip, tile (u64 each), alpha (f64)
//! 88     descriptors: jc, ic, it, thread_hint, offset, rows, cols (u64 each)
//!        payload elements
//! ```

use std::io::{Read, Write};

use super::{BlockDescriptor, PackGeometry, PackedBuffer, Side};
use crate::element::Element;
use crate::error::{Result, TsmmError};

pub const MAGIC: &[u8; 8] = b"TSMMPACK";
pub const VERSION: u32 = 1;
const HEADER_BYTES: usize = 32;

fn corrupt(msg: impl Into<String>) -> TsmmError {
    TsmmError::CorruptHeader(msg.into())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_usize(r: &mut impl Read) -> Result<usize> {
    usize::try_from(read_u64(r)?).map_err(|_| corrupt("value does not fit in usize"))
}

impl<T: Element> PackedBuffer<T> {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let mut head = Vec::with_capacity(HEADER_BYTES + 56);
        head.extend_from_slice(MAGIC);
        head.extend_from_slice(&VERSION.to_le_bytes());
        head.push(match self.which {
            Side::A => 0,
            Side::B => 1,
        });
        head.push(self.precision.fp_size() as u8);
        head.extend_from_slice(&[0, 0]);
        head.extend_from_slice(&(self.header.len() as u64).to_le_bytes());
        head.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        debug_assert_eq!(head.len(), HEADER_BYTES);
        let g = &self.geometry;
        for v in [g.extent, g.k, g.block, g.k_c, g.strip, g.tile] {
            head.extend_from_slice(&(v as u64).to_le_bytes());
        }
        head.extend_from_slice(&self.alpha_applied.to_f64().to_le_bytes());
        w.write_all(&head)?;

        let mut table = Vec::with_capacity(self.header.len() * 56);
        for d in &self.header {
            for v in [d.jc_index, d.ic_index, d.it_index, d.thread_hint, d.offset, d.rows, d.cols] {
                table.extend_from_slice(&(v as u64).to_le_bytes());
            }
        }
        w.write_all(&table)?;

        let mut body = Vec::with_capacity(self.payload.len() * self.precision.fp_size());
        for &v in &self.payload {
            v.write_le(&mut body);
        }
        w.write_all(&body)?;
        Ok(())
    }

    /// Reads one buffer and verifies its header.
    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut head = [0u8; HEADER_BYTES];
        r.read_exact(&mut head)?;
        if &head[..8] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(head[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let which = match head[12] {
            0 => Side::A,
            1 => Side::B,
            s => return Err(corrupt(format!("bad side tag {s}"))),
        };
        let fp = head[13] as usize;
        if fp != T::PRECISION.fp_size() {
            return Err(corrupt(format!(
                "dump holds {fp}-byte elements, expected {}",
                T::PRECISION.fp_size()
            )));
        }
        let count = usize::try_from(u64::from_le_bytes(head[16..24].try_into().unwrap()))
            .map_err(|_| corrupt("descriptor count too large"))?;
        let len = usize::try_from(u64::from_le_bytes(head[24..32].try_into().unwrap()))
            .map_err(|_| corrupt("payload length too large"))?;

        let geometry = PackGeometry {
            extent: read_usize(r)?,
            k: read_usize(r)?,
            block: read_usize(r)?,
            k_c: read_usize(r)?,
            strip: read_usize(r)?,
            tile: read_usize(r)?,
        };
        let alpha_applied = T::from_f64(f64::from_bits(read_u64(r)?));

        let mut header = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            header.push(BlockDescriptor {
                jc_index: read_usize(r)?,
                ic_index: read_usize(r)?,
                it_index: read_usize(r)?,
                thread_hint: read_usize(r)?,
                offset: read_usize(r)?,
                rows: read_usize(r)?,
                cols: read_usize(r)?,
            });
        }

        let mut bytes = vec![0u8; len.checked_mul(fp).ok_or_else(|| corrupt("payload overflow"))?];
        r.read_exact(&mut bytes)?;
        let payload = bytes.chunks_exact(fp).map(T::read_le).collect();

        let pb = PackedBuffer { which, precision: T::PRECISION, header, payload, geometry, alpha_applied };
        pb.check_header()?;
        Ok(pb)
    }
}
