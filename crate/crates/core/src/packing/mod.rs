//! Pre-packing of A and B into header-indexed contiguous buffers.
//!
//! Blocks follow the packing loop nest: for A, `jc` over k in steps of
//! `k_c`, `ic` over m in steps of `m_c`, `it` over the block in steps of
//! `m_t`; for B, `jc` over k and `ic` over n in steps of `n_c`. Each block
//! is a run of micro-panels `tile` rows (A) or columns (B) wide; within a
//! micro-panel every k step stores its `tile` values contiguously, padded
//! with zeros past the matrix edge. The header records each block's element
//! offset so the buffer is relocatable.

mod dump;

use std::thread;

use crate::element::Element;
use crate::error::{Result, TsmmError};
use crate::model::{Matrix, MatrixView, Precision, StorageOrder};
use crate::planner::ExecutionPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    A,
    B,
}

/// Blocking geometry a buffer was packed under.
///
/// For A: `extent = m`, `block = m_c`, `strip = m_t`, `tile = m_r`.
/// For B: `extent = n`, `block = strip = n_c`, `tile = n_r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PackGeometry {
    pub extent: usize,
    pub k: usize,
    pub block: usize,
    pub k_c: usize,
    pub strip: usize,
    pub tile: usize,
}

impl PackGeometry {
    fn validate(&self) -> Result<()> {
        let g = self;
        if [g.extent, g.k, g.block, g.k_c, g.strip, g.tile].contains(&0) {
            return Err(TsmmError::GeometryMismatch(format!("zero extent in {g:?}")));
        }
        if g.strip > g.block || g.strip % g.tile != 0 || g.block % g.tile != 0 {
            return Err(TsmmError::GeometryMismatch(format!(
                "strip {} and block {} must be multiples of tile {} with strip <= block",
                g.strip, g.block, g.tile
            )));
        }
        Ok(())
    }

    /// Descriptors in loop order, with offsets into a dense payload.
    fn layout(&self, owner: impl Fn(usize) -> usize) -> (Vec<BlockDescriptor>, usize) {
        let mut header = Vec::new();
        let mut offset = 0;
        for (jc_index, jc) in (0..self.k).step_by(self.k_c).enumerate() {
            let kb = self.k_c.min(self.k - jc);
            let mut strip = 0;
            for (ic_index, ic) in (0..self.extent).step_by(self.block).enumerate() {
                let bb = self.block.min(self.extent - ic);
                for (it_index, it) in (0..bb).step_by(self.strip).enumerate() {
                    let rows = self.strip.min(bb - it);
                    header.push(BlockDescriptor {
                        jc_index,
                        ic_index,
                        it_index,
                        thread_hint: owner(strip),
                        offset,
                        rows,
                        cols: kb,
                    });
                    offset += rows.div_ceil(self.tile) * self.tile * kb;
                    strip += 1;
                }
            }
        }
        (header, offset)
    }

    /// Number of blocks per `jc` step.
    pub fn blocks_per_depth(&self) -> usize {
        let mut count = 0;
        for ic in (0..self.extent).step_by(self.block) {
            count += self.block.min(self.extent - ic).div_ceil(self.strip);
        }
        count
    }

    pub fn depth_blocks(&self) -> usize {
        self.k.div_ceil(self.k_c)
    }
}

/// Location of one packed block. `rows` counts source rows of A (or source
/// columns of B) before padding; `cols` is the block depth along k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockDescriptor {
    pub jc_index: usize,
    pub ic_index: usize,
    pub it_index: usize,
    pub thread_hint: usize,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl BlockDescriptor {
    pub fn padded_len(&self, tile: usize) -> usize {
        self.rows.div_ceil(tile) * tile * self.cols
    }

    /// First source row (A) or column (B) covered by the block.
    pub fn first_index(&self, g: &PackGeometry) -> usize {
        self.ic_index * g.block + self.it_index * g.strip
    }

    /// First k index covered by the block.
    pub fn first_depth(&self, g: &PackGeometry) -> usize {
        self.jc_index * g.k_c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackedBuffer<T> {
    pub which: Side,
    pub precision: Precision,
    pub header: Vec<BlockDescriptor>,
    pub payload: Vec<T>,
    pub geometry: PackGeometry,
    pub alpha_applied: T,
}

/// Reads `x[idx, p]` where `idx` runs along the packed extent.
#[derive(Clone, Copy)]
struct Source<'a, T> {
    data: &'a [T],
    idx_stride: usize,
    k_stride: usize,
}

impl<T: Copy> Source<'_, T> {
    #[inline(always)]
    fn get(&self, idx: usize, p: usize) -> T {
        self.data[idx * self.idx_stride + p * self.k_stride]
    }
}

fn fill_block<T: Element>(
    src: Source<'_, T>,
    g: &PackGeometry,
    d: &BlockDescriptor,
    alpha: T,
    out: &mut [T],
) {
    let tile = g.tile;
    let first = d.first_index(g);
    let depth = d.first_depth(g);
    let end = first + d.rows;
    let kb = d.cols;
    for (panel, chunk) in out.chunks_exact_mut(tile * kb).enumerate() {
        let base = first + panel * tile;
        let valid = tile.min(end - base);
        for (p, step) in chunk.chunks_exact_mut(tile).enumerate() {
            for (i, slot) in step[..valid].iter_mut().enumerate() {
                *slot = alpha * src.get(base + i, depth + p);
            }
            for slot in &mut step[valid..] {
                *slot = T::zero();
            }
        }
    }
}

fn pack<T: Element>(
    which: Side,
    alpha: T,
    src: Source<'_, T>,
    geometry: PackGeometry,
    owner: impl Fn(usize) -> usize,
    threads: usize,
) -> Result<PackedBuffer<T>> {
    geometry.validate()?;
    let (header, len) = geometry.layout(owner);
    let mut payload = vec![T::zero(); len];

    let mut pieces: Vec<(&BlockDescriptor, &mut [T])> = Vec::with_capacity(header.len());
    let mut rest = payload.as_mut_slice();
    for d in &header {
        let (head, tail) = rest.split_at_mut(d.padded_len(geometry.tile));
        pieces.push((d, head));
        rest = tail;
    }

    let threads = threads.clamp(1, pieces.len().max(1));
    if threads == 1 {
        for (d, out) in pieces {
            fill_block(src, &geometry, d, alpha, out);
        }
    } else {
        let per = pieces.len().div_ceil(threads);
        thread::scope(|s| {
            let mut pieces = pieces;
            while !pieces.is_empty() {
                let rest = pieces.split_off(per.min(pieces.len()));
                let group = std::mem::replace(&mut pieces, rest);
                let geometry = &geometry;
                s.spawn(move || {
                    for (d, out) in group {
                        fill_block(src, geometry, d, alpha, out);
                    }
                });
            }
        });
    }

    Ok(PackedBuffer {
        which,
        precision: T::PRECISION,
        header,
        payload,
        geometry,
        alpha_applied: alpha,
    })
}

/// Packs `alpha * A` for `plan`. Never mutates the source.
pub fn pack_a<T: Element>(
    alpha: T,
    a: &MatrixView<'_, T>,
    plan: &ExecutionPlan<T>,
) -> Result<PackedBuffer<T>> {
    pack_a_with_threads(alpha, a, plan, plan.threads.total_threads)
}

/// [`pack_a`] with an explicit number of packing threads.
pub fn pack_a_with_threads<T: Element>(
    alpha: T,
    a: &MatrixView<'_, T>,
    plan: &ExecutionPlan<T>,
    threads: usize,
) -> Result<PackedBuffer<T>> {
    let g = plan.a_geometry();
    if a.rows() != g.extent || a.cols() != g.k {
        return Err(TsmmError::GeometryMismatch(format!(
            "A is {}x{}, plan expects {}x{}",
            a.rows(),
            a.cols(),
            g.extent,
            g.k
        )));
    }
    let src = Source { data: view_data(a), idx_stride: a.row_stride(), k_stride: a.col_stride() };
    let assignment = &plan.threads.assignment;
    let strips = assignment.len();
    pack(Side::A, alpha, src, g, |s| assignment[s % strips], threads)
}

/// Packs `alpha * B` for `plan`; the multiplication itself passes 1.
pub fn pack_b<T: Element>(
    alpha: T,
    b: &MatrixView<'_, T>,
    plan: &ExecutionPlan<T>,
) -> Result<PackedBuffer<T>> {
    pack_b_with_threads(alpha, b, plan, plan.threads.total_threads)
}

pub fn pack_b_with_threads<T: Element>(
    alpha: T,
    b: &MatrixView<'_, T>,
    plan: &ExecutionPlan<T>,
    threads: usize,
) -> Result<PackedBuffer<T>> {
    let g = plan.b_geometry();
    if b.rows() != g.k || b.cols() != g.extent {
        return Err(TsmmError::GeometryMismatch(format!(
            "B is {}x{}, plan expects {}x{}",
            b.rows(),
            b.cols(),
            g.k,
            g.extent
        )));
    }
    let src = Source { data: view_data(b), idx_stride: b.col_stride(), k_stride: b.row_stride() };
    let t = &plan.threads;
    let n_blocks = t.n_blocks().max(1);
    let owner = |s: usize| {
        let block = s % n_blocks;
        (0..t.n_partitions).find(|&q| t.n_block_range(q).contains(&block)).unwrap_or(0)
    };
    pack(Side::B, alpha, src, g, owner, threads)
}

fn view_data<'a, T: Copy>(v: &MatrixView<'a, T>) -> &'a [T] {
    v.data()
}

impl<T: Element> PackedBuffer<T> {
    /// Checks that every descriptor lies inside the payload, that blocks do
    /// not overlap, and that extents agree with the geometry.
    pub fn check_header(&self) -> Result<()> {
        let g = &self.geometry;
        g.validate().map_err(|e| TsmmError::CorruptHeader(e.to_string()))?;
        let mut spans: Vec<(usize, usize)> = Vec::with_capacity(self.header.len());
        for (i, d) in self.header.iter().enumerate() {
            let bad = |m: String| Err(TsmmError::CorruptHeader(format!("block {i}: {m}")));
            if d.rows == 0 || d.cols == 0 || d.rows > g.strip || d.cols > g.k_c {
                return bad(format!("extent {}x{} outside geometry", d.rows, d.cols));
            }
            if d.first_index(g) + d.rows > g.extent || d.first_depth(g) + d.cols > g.k {
                return bad("covers indices past the matrix".into());
            }
            let end = d.offset.checked_add(d.padded_len(g.tile));
            match end {
                Some(end) if end <= self.payload.len() => spans.push((d.offset, end)),
                _ => return bad(format!("offset {} escapes payload of {}", d.offset, self.payload.len())),
            }
        }
        spans.sort_unstable();
        if spans.windows(2).any(|w| w[0].1 > w[1].0) {
            return Err(TsmmError::CorruptHeader("blocks overlap".into()));
        }
        Ok(())
    }

    /// Rebuilds the scaled source matrix (A as `m x k`, B as `k x n`) with
    /// pads stripped. Row-major.
    pub fn unpack(&self) -> Result<Matrix<T>> {
        self.check_header()?;
        let g = &self.geometry;
        let mut dense = vec![T::zero(); g.extent * g.k];
        for d in &self.header {
            let first = d.first_index(g);
            let depth = d.first_depth(g);
            let block = &self.payload[d.offset..d.offset + d.padded_len(g.tile)];
            for (panel, chunk) in block.chunks_exact(g.tile * d.cols).enumerate() {
                for (p, step) in chunk.chunks_exact(g.tile).enumerate() {
                    for (i, &v) in step.iter().enumerate() {
                        let idx = first + panel * g.tile + i;
                        if idx < first + d.rows {
                            dense[idx * g.k + depth + p] = v;
                        }
                    }
                }
            }
        }
        Ok(match self.which {
            Side::A => Matrix::from_fn(g.extent, g.k, StorageOrder::RowMajor, |i, p| dense[i * g.k + p]),
            Side::B => Matrix::from_fn(g.k, g.extent, StorageOrder::RowMajor, |p, j| dense[j * g.k + p]),
        })
    }

    /// Values stored at padding positions (must all be zero).
    pub fn pad_values(&self) -> Vec<T> {
        let g = &self.geometry;
        let mut covered = vec![false; self.payload.len()];
        let mut pads = Vec::new();
        for d in &self.header {
            let block = d.offset..d.offset + d.padded_len(g.tile);
            for (local, pos) in block.enumerate() {
                covered[pos] = true;
                let panel = local / (g.tile * d.cols);
                let lane = local % g.tile;
                if panel * g.tile + lane >= d.rows {
                    pads.push(self.payload[pos]);
                }
            }
        }
        pads.extend(
            covered.iter().zip(&self.payload).filter(|(c, _)| !**c).map(|(_, v)| *v),
        );
        pads
    }

    /// Index of the block `(jc, strip)` in the header.
    #[inline]
    pub fn block(&self, jc_index: usize, strip: usize) -> &BlockDescriptor {
        &self.header[jc_index * self.geometry.blocks_per_depth() + strip]
    }
}

/// Free-function form of [`PackedBuffer::unpack`].
pub fn unpack_check<T: Element>(pb: &PackedBuffer<T>) -> Result<Matrix<T>> {
    pb.unpack()
}
