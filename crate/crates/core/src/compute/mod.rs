//! Multiplication over pre-packed buffers.
//!
//! Every thread slot owns a disjoint set of C rows (its m strips) and
//! columns (its n slice) and walks the depth blocks in ascending order, so
//! no synchronization happens until the final join and every C element sees
//! the same arithmetic regardless of thread count. `beta` is applied when an
//! element is first touched in depth block 0.

mod naive;

use std::ops::Range;
use std::thread;

pub use naive::naive_gemm;

use crate::element::Element;
use crate::error::{Result, TsmmError};
use crate::kernel::Microkernel;
use crate::model::{raw_index, MatrixViewMut, StorageOrder};
use crate::packing::{PackedBuffer, Side};
use crate::planner::ExecutionPlan;

/// Work owned by one thread slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComputeTask {
    pub thread_slot: usize,
    pub n_partition: usize,
    pub m_partition: usize,
    /// Strip indices in `(ic, it)` order; visited for every depth block in
    /// ascending order.
    pub strips: Vec<usize>,
    /// Blocks of B (`n_c` columns each) in this slot's slice.
    pub n_blocks: Range<usize>,
}

impl ComputeTask {
    /// C rows covered by this task, as `(first_row, rows)` pairs.
    pub fn c_rows<T: Element>(&self, plan: &ExecutionPlan<T>) -> Vec<(usize, usize)> {
        let strips = plan.threads.strips();
        self.strips.iter().map(|&s| (strips[s].row0, strips[s].rows)).collect()
    }

    /// C column range covered by this task.
    pub fn c_cols<T: Element>(&self, plan: &ExecutionPlan<T>) -> Range<usize> {
        let n_c = plan.blocking.n_c;
        let n = plan.problem.n;
        (self.n_blocks.start * n_c).min(n)..(self.n_blocks.end * n_c).min(n)
    }
}

/// Splits the plan's work into per-slot tasks. Slots with no strips are
/// omitted.
pub fn schedule<T: Element>(plan: &ExecutionPlan<T>) -> Vec<ComputeTask> {
    let t = &plan.threads;
    let mut tasks = Vec::with_capacity(t.slots());
    for q in 0..t.n_partitions {
        for r in 0..t.m_partitions {
            let strips: Vec<usize> = t
                .assignment
                .iter()
                .enumerate()
                .filter(|(_, &owner)| owner == r)
                .map(|(s, _)| s)
                .collect();
            let n_blocks = t.n_block_range(q);
            if strips.is_empty() || n_blocks.is_empty() {
                continue;
            }
            tasks.push(ComputeTask {
                thread_slot: t.slot(q, r),
                n_partition: q,
                m_partition: r,
                strips,
                n_blocks,
            });
        }
    }
    tasks
}

/// Synchronization counters of one [`compute`] call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ComputeStats {
    pub tasks: usize,
    /// Barriers executed between depth blocks.
    pub depth_loop_barriers: usize,
    /// Joins at the end of the call (0 when run inline).
    pub joins: usize,
}

struct SharedC<T> {
    ptr: *mut T,
    order: StorageOrder,
    ld: usize,
    m: usize,
    n: usize,
}

// SAFETY: tasks write through the pointer only at (row, col) pairs inside
// their own strips and n slice; `schedule` hands every strip to exactly one
// m-partition and every n block to exactly one n-partition, so writes from
// different threads never alias.
unsafe impl<T: Send> Send for SharedC<T> {}
unsafe impl<T: Send> Sync for SharedC<T> {}

impl<T: Copy> SharedC<T> {
    #[inline(always)]
    unsafe fn load(&self, i: usize, j: usize) -> T {
        debug_assert!(i < self.m && j < self.n);
        *self.ptr.add(raw_index(self.order, self.ld, i, j))
    }

    #[inline(always)]
    unsafe fn store(&self, i: usize, j: usize, v: T) {
        debug_assert!(i < self.m && j < self.n);
        *self.ptr.add(raw_index(self.order, self.ld, i, j)) = v;
    }
}

#[inline(always)]
fn prefetch_read<T>(base: *const T, bytes: usize) {
    if bytes == 0 {
        return;
    }
    #[cfg(target_arch = "x86_64")]
    {
        use std::arch::x86_64::{_mm_prefetch, _MM_HINT_T0};
        let p = (base as *const i8).wrapping_add(bytes);
        // SAFETY: prefetch is a hint and never faults, even on invalid addresses.
        unsafe { _mm_prefetch::<_MM_HINT_T0>(p) };
    }
    #[cfg(not(target_arch = "x86_64"))]
    let _ = base;
}

fn check_geometry<T: Element>(
    c: &MatrixViewMut<'_, T>,
    pa: &PackedBuffer<T>,
    pb: &PackedBuffer<T>,
    plan: &ExecutionPlan<T>,
) -> Result<()> {
    let bad = |m: String| Err(TsmmError::PlanMismatch(m));
    if pa.which != Side::A || pb.which != Side::B {
        return bad("operands passed in the wrong order".into());
    }
    if pa.geometry != plan.a_geometry() {
        return bad(format!("A packed as {:?}, plan wants {:?}", pa.geometry, plan.a_geometry()));
    }
    if pb.geometry != plan.b_geometry() {
        return bad(format!("B packed as {:?}, plan wants {:?}", pb.geometry, plan.b_geometry()));
    }
    let expected = |g: &crate::packing::PackGeometry| g.depth_blocks() * g.blocks_per_depth();
    if pa.header.len() != expected(&pa.geometry) || pb.header.len() != expected(&pb.geometry) {
        return bad("packed header incomplete".into());
    }
    if c.rows() != plan.problem.m || c.cols() != plan.problem.n {
        return bad(format!(
            "C is {}x{}, plan expects {}x{}",
            c.rows(),
            c.cols(),
            plan.problem.m,
            plan.problem.n
        ));
    }
    Ok(())
}

/// `C = A_packed * B_packed + beta * C`, where the packed A already carries
/// `alpha`.
pub fn compute<T: Element>(
    beta: T,
    c: &mut MatrixViewMut<'_, T>,
    packed_a: &PackedBuffer<T>,
    packed_b: &PackedBuffer<T>,
    plan: &ExecutionPlan<T>,
) -> Result<ComputeStats> {
    check_geometry(c, packed_a, packed_b, plan)?;
    let (ptr, order, ld) = c.raw_parts();
    let shared = SharedC { ptr, order, ld, m: plan.problem.m, n: plan.problem.n };
    let tasks = schedule(plan);
    let kernel = &plan.kernel.chosen;

    let mut stats = ComputeStats { tasks: tasks.len(), ..Default::default() };
    if tasks.len() <= 1 {
        for task in &tasks {
            run_task(task, beta, &shared, packed_a, packed_b, plan, kernel);
        }
    } else {
        thread::scope(|s| {
            for task in &tasks {
                let shared = &shared;
                s.spawn(move || run_task(task, beta, shared, packed_a, packed_b, plan, kernel));
            }
        });
        stats.joins = 1;
    }
    Ok(stats)
}

fn run_task<T: Element>(
    task: &ComputeTask,
    beta: T,
    c: &SharedC<T>,
    pa: &PackedBuffer<T>,
    pb: &PackedBuffer<T>,
    plan: &ExecutionPlan<T>,
    kernel: &Microkernel<T>,
) {
    let shape = kernel.shape();
    let (m_r, n_r) = (shape.m_r, shape.n_r);
    let prefetch = kernel.prefetch();
    let strips = plan.threads.strips();
    let ga = &pa.geometry;
    let gb = &pb.geometry;
    let mut tile = vec![T::zero(); m_r * n_r];

    for jc in 0..ga.depth_blocks() {
        let first = jc == 0;
        for &s in &task.strips {
            let da = pa.block(jc, s);
            let row0 = strips[s].row0;
            let row_end = row0 + da.rows;
            let kb = da.cols;
            let a_block = &pa.payload[da.offset..da.offset + da.padded_len(m_r)];
            for nb in task.n_blocks.clone() {
                let db = pb.block(jc, nb);
                let col0 = db.first_index(gb);
                let col_end = col0 + db.rows;
                let b_block = &pb.payload[db.offset..db.offset + db.padded_len(n_r)];
                for (sp, b_panel) in b_block.chunks_exact(n_r * kb).enumerate() {
                    let j0 = col0 + sp * n_r;
                    let cols = n_r.min(col_end - j0);
                    for (qp, a_panel) in a_block.chunks_exact(m_r * kb).enumerate() {
                        let i0 = row0 + qp * m_r;
                        let rows = m_r.min(row_end - i0);
                        prefetch_read(a_panel.as_ptr(), prefetch.a_bytes);
                        prefetch_read(b_panel.as_ptr(), prefetch.b_bytes);
                        tile.fill(T::zero());
                        // SAFETY: (i0 + i, j0 + j) lies in this task's strips
                        // and slice; see `SharedC`.
                        unsafe {
                            prefetch_read(c.ptr.add(raw_index(c.order, c.ld, i0, j0)), prefetch.c_bytes);
                            for i in 0..rows {
                                for j in 0..cols {
                                    let v = c.load(i0 + i, j0 + j);
                                    tile[i * n_r + j] = if first { beta * v } else { v };
                                }
                            }
                        }
                        kernel.run(kb, a_panel, b_panel, &mut tile, true);
                        unsafe {
                            for i in 0..rows {
                                for j in 0..cols {
                                    c.store(i0 + i, j0 + j, tile[i * n_r + j]);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}
