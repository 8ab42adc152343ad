//! Thread partitioning. The n dimension is only split when it spans more
//! than one L1 panel, and then only into slices of at least `n_c` columns;
//! the m dimension is cut into `m_t`-row strips dealt round-robin.

use std::ops::Range;

use super::{round_up, BlockingParams, ProblemKey};
use crate::element::Element;
use crate::error::{Result, TsmmError};
use crate::hardware::HardwareProfile;
use crate::kernel::KernelShape;
use crate::model::Problem;

/// One `m_t`-row strip of A: the unit a thread owns on the m dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Strip {
    pub ic_index: usize,
    pub it_index: usize,
    pub row0: usize,
    pub rows: usize,
}

/// Strips in `(ic, it)` loop order.
pub(crate) fn enumerate_strips(m: usize, m_c: usize, m_t: usize) -> Vec<Strip> {
    let mut out = Vec::new();
    for (ic_index, ic) in (0..m).step_by(m_c).enumerate() {
        let mb = m_c.min(m - ic);
        for (it_index, it) in (0..mb).step_by(m_t).enumerate() {
            out.push(Strip { ic_index, it_index, row0: ic + it, rows: m_t.min(mb - it) });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadPlan {
    pub total_threads: usize,
    pub n_partitions: usize,
    pub m_partitions: usize,
    /// Owning m-partition of every strip, in `(ic, it)` order.
    pub assignment: Vec<usize>,
    strips: Vec<Strip>,
    n_blocks: usize,
}

impl ThreadPlan {
    /// Partitions over the strips implied by `blocking` as given.
    pub fn assign(
        key: &ProblemKey,
        blocking: &BlockingParams,
        total_threads: usize,
        n_partitions: usize,
        m_partitions: usize,
    ) -> Result<Self> {
        if n_partitions == 0 || m_partitions == 0 {
            return Err(TsmmError::PlanMismatch("partition counts must be positive".into()));
        }
        if n_partitions * m_partitions > total_threads {
            return Err(TsmmError::PlanMismatch(format!(
                "{n_partitions}x{m_partitions} partitions exceed {total_threads} threads"
            )));
        }
        let strips = enumerate_strips(key.m, blocking.m_c, blocking.m_t);
        let assignment = (0..strips.len()).map(|g| g % m_partitions).collect();
        let plan = Self {
            total_threads,
            n_partitions,
            m_partitions,
            assignment,
            strips,
            n_blocks: key.n.div_ceil(blocking.n_c),
        };
        plan.check(key, blocking)?;
        Ok(plan)
    }

    /// Derives `m_t` (and `n_t`) for the partition counts, then assigns.
    pub fn build(
        key: &ProblemKey,
        blocking: &BlockingParams,
        shape: &KernelShape,
        total_threads: usize,
        n_partitions: usize,
        m_partitions: usize,
    ) -> Result<(BlockingParams, Self)> {
        let m_partitions = m_partitions.max(1);
        let m_extent = blocking.m_c.min(round_up(key.m, shape.m_r));
        let m_t = round_up(m_extent.div_ceil(m_partitions), shape.m_r).min(blocking.m_c);
        let n_blocks = key.n.div_ceil(blocking.n_c);
        let n_t = (n_partitions > 1).then(|| n_blocks.div_ceil(n_partitions) * blocking.n_c);
        let blocking = BlockingParams { m_t, n_t, ..*blocking };
        let plan = Self::assign(key, &blocking, total_threads, n_partitions, m_partitions)?;
        Ok((blocking, plan))
    }

    pub(crate) fn check(&self, key: &ProblemKey, blocking: &BlockingParams) -> Result<()> {
        let bad = |m: String| Err(TsmmError::PlanMismatch(m));
        if self.n_partitions * self.m_partitions > self.total_threads {
            return bad("more partitions than threads".into());
        }
        if key.n <= blocking.n_c && self.n_partitions != 1 {
            return bad(format!("n = {} fits one panel of {} but is split", key.n, blocking.n_c));
        }
        if self.n_partitions > (key.n / blocking.n_c).max(1) {
            return bad(format!(
                "{} n-slices would be narrower than n_c = {}",
                self.n_partitions, blocking.n_c
            ));
        }
        if self.strips != enumerate_strips(key.m, blocking.m_c, blocking.m_t) {
            return bad("strip layout does not match blocking".into());
        }
        if self.assignment.len() != self.strips.len()
            || self.assignment.iter().any(|&s| s >= self.m_partitions)
        {
            return bad("strip assignment out of range".into());
        }
        Ok(())
    }

    pub fn strips(&self) -> &[Strip] {
        &self.strips
    }

    /// Number of `n_c`-column blocks of B.
    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    /// Blocks of B owned by n-partition `q`. Every slice holds at least one
    /// full panel because partitions never exceed `floor(n / n_c)`.
    pub fn n_block_range(&self, q: usize) -> Range<usize> {
        let nb = self.n_blocks;
        let p = self.n_partitions;
        (q * nb / p)..((q + 1) * nb / p)
    }

    /// Thread slot for an (n-partition, m-partition) pair.
    pub fn slot(&self, n_part: usize, m_part: usize) -> usize {
        n_part * self.m_partitions + m_part
    }

    pub fn slots(&self) -> usize {
        self.n_partitions * self.m_partitions
    }
}

fn divisors(t: usize) -> impl Iterator<Item = usize> {
    (1..=t).filter(move |d| t % d == 0)
}

/// Every partitioning worth evaluating: `n_partitions` ranges over the
/// divisors of the thread count that keep n-slices at least `n_c` wide.
pub fn thread_candidates<T: Element>(
    p: &Problem<T>,
    blocking: &BlockingParams,
    hw: &HardwareProfile,
    shape: &KernelShape,
) -> Result<Vec<(BlockingParams, ThreadPlan)>> {
    let key = ProblemKey::from(p);
    let total = hw.max_threads.max(1);
    let max_np = if p.n <= blocking.n_c { 1 } else { (p.n / blocking.n_c).max(1) };
    divisors(total)
        .filter(|&np| np <= max_np)
        .map(|np| ThreadPlan::build(&key, blocking, shape, total, np, total / np))
        .collect()
}

/// The default partitioning: keep n whole unless there are too few m tiles
/// to occupy every thread.
pub fn optimize_threads<T: Element>(
    p: &Problem<T>,
    blocking: &BlockingParams,
    hw: &HardwareProfile,
    shape: &KernelShape,
) -> Result<(BlockingParams, ThreadPlan)> {
    let key = ProblemKey::from(p);
    let total = hw.max_threads.max(1);
    let max_np = if p.n <= blocking.n_c { 1 } else { (p.n / blocking.n_c).max(1) };
    let m_tiles = p.m.div_ceil(shape.m_r);
    let np = divisors(total)
        .filter(|&np| np <= max_np)
        .find(|&np| total / np <= m_tiles)
        .unwrap_or_else(|| divisors(total).filter(|&np| np <= max_np).last().unwrap_or(1));
    ThreadPlan::build(&key, blocking, shape, total, np, total / np)
}
