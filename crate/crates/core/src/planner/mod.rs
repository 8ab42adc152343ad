//! Runtime stage: cache-block design, thread partitioning, and empirical
//! plan selection.
//!
//! Blocks must satisfy both cache constraints
//!
//! ```text
//! k_c * n_c <= L1 / fp_size          (B block stays in L1)
//! m_c * k_c <= L2 / (2 * fp_size)    (A block fills at most half of L2)
//! ```
//!
//! Two search patterns generate candidates: a neighborhood below the
//! largest feasible `(m_c, k_c)`, and the largest powers of two.

mod cache;
mod evaluate;
mod threads;

pub use cache::{PlanCache, PlanCacheEntry};
pub use evaluate::{
    candidate_plans, default_plan, evaluate_and_select, spot_check_plan, tune, tune_cached, MeasuredEvaluator,
    PlanEvaluator, MAX_CANDIDATES,
};
pub use threads::{optimize_threads, thread_candidates, Strip, ThreadPlan};

pub use crate::timing::{Statistic, TrialConfig};

use crate::element::Element;
use crate::error::{Result, TsmmError};
use crate::hardware::HardwareProfile;
use crate::kernel::{KernelSelection, KernelShape};
use crate::model::{Precision, Problem};
use crate::packing::PackGeometry;

/// Smallest depth the n-panel cap leaves room for in L1.
const MIN_L1_DEPTH: usize = 32;
/// Neighborhood window: steps of `m_r` and of `k_unroll` below the start.
const M_WINDOW: usize = 8;
const K_WINDOW: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SearchPattern {
    Neighborhood,
    PowerOfTwo,
    /// Built by hand or restored from the plan cache.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockingParams {
    pub m_c: usize,
    pub k_c: usize,
    pub n_c: usize,
    /// Rows per thread strip.
    pub m_t: usize,
    /// Columns per thread slice; only set when n is split across threads.
    pub n_t: Option<usize>,
    pub origin: SearchPattern,
}

impl BlockingParams {
    pub fn new(m_c: usize, k_c: usize, n_c: usize, m_t: usize) -> Self {
        Self { m_c, k_c, n_c, m_t, n_t: None, origin: SearchPattern::Fixed }
    }

    /// `k_c * n_c <= L1 / fp`
    pub fn fits_l1(&self, hw: &HardwareProfile, precision: Precision) -> bool {
        self.k_c * self.n_c * precision.fp_size() <= hw.l1d_bytes
    }

    /// `m_c * k_c <= L2 / (2 fp)`
    pub fn fits_l2(&self, hw: &HardwareProfile, precision: Precision) -> bool {
        self.m_c * self.k_c * 2 * precision.fp_size() <= hw.l2_bytes
    }

    /// Tile-multiple constraints against a kernel shape.
    pub fn check_shape(&self, shape: &KernelShape) -> Result<()> {
        let bad = |what: String| Err(TsmmError::PlanMismatch(what));
        if self.m_c == 0 || self.k_c == 0 || self.n_c == 0 || self.m_t == 0 {
            return bad(format!("zero block extent in {self:?}"));
        }
        if self.m_c % shape.m_r != 0 {
            return bad(format!("m_c {} not a multiple of m_r {}", self.m_c, shape.m_r));
        }
        if self.n_c % shape.n_r != 0 {
            return bad(format!("n_c {} not a multiple of n_r {}", self.n_c, shape.n_r));
        }
        if self.k_c % shape.k_unroll != 0 {
            return bad(format!("k_c {} not a multiple of k_unroll {}", self.k_c, shape.k_unroll));
        }
        if self.m_t % shape.m_r != 0 || self.m_t > self.m_c {
            return bad(format!("m_t {} must be an m_r multiple no larger than m_c {}", self.m_t, self.m_c));
        }
        Ok(())
    }
}

fn round_up(x: usize, step: usize) -> usize {
    x.div_ceil(step) * step
}

fn round_down(x: usize, step: usize) -> usize {
    x / step * step
}

/// Largest power of two `<= limit` that is a multiple of `step`.
fn largest_pow2_multiple(limit: usize, step: usize) -> Option<usize> {
    if limit == 0 {
        return None;
    }
    let mut p = 1usize << (usize::BITS - 1 - limit.leading_zeros());
    while p >= step {
        if p % step == 0 {
            return Some(p);
        }
        p >>= 1;
    }
    None
}

/// Both search patterns over `(m_c, k_c)` for a fixed `n_c`.
pub fn design_blocking(
    m: usize,
    n: usize,
    k: usize,
    hw: &HardwareProfile,
    precision: Precision,
    shape: &KernelShape,
) -> Result<Vec<BlockingParams>> {
    let fp = precision.fp_size();
    let l1_elems = hw.l1d_bytes / fp;
    let l2_half = hw.l2_bytes / (2 * fp);
    let KernelShape { m_r, n_r, k_unroll: k_u } = *shape;

    if n_r * k_u > l1_elems || m_r * k_u > l2_half {
        return Err(TsmmError::InfeasibleBlocking(format!(
            "{m_r}x{n_r}x{k_u} tile exceeds L1 {l1_elems} or half-L2 {l2_half} elements"
        )));
    }

    let n_cap = round_down(l1_elems / MIN_L1_DEPTH, n_r).max(n_r);
    let mut n_c = round_up(n, n_r).min(n_cap);
    if n_c * k_u > l1_elems {
        n_c = n_r;
    }
    let k_bound = round_down(l1_elems / n_c, k_u);

    let mut out: Vec<BlockingParams> = Vec::new();
    let mut push = |m_c: usize, k_c: usize, origin| {
        if !out.iter().any(|b| b.m_c == m_c && b.k_c == k_c) {
            out.push(BlockingParams { m_c, k_c, n_c, m_t: m_c, n_t: None, origin });
        }
    };

    // Largest powers of two, unclamped by the problem so they stay maximal.
    if let Some(mut k_p) = largest_pow2_multiple(k_bound, k_u) {
        loop {
            if let Some(m_p) = largest_pow2_multiple(l2_half / k_p, m_r) {
                push(m_p, k_p, SearchPattern::PowerOfTwo);
                break;
            }
            k_p /= 2;
            if k_p < k_u || k_p % k_u != 0 {
                break;
            }
        }
    }

    // Neighborhood below the largest feasible pair, clamped to the problem.
    let mut k_c0 = round_up(k, k_u).min(k_bound);
    let mut m_c0 = round_down(l2_half / k_c0, m_r);
    if m_c0 < m_r {
        k_c0 = round_down(l2_half / m_r, k_u);
        m_c0 = round_down(l2_half / k_c0, m_r);
    }
    m_c0 = m_c0.min(round_up(m, m_r));
    for i in 0..M_WINDOW {
        let Some(m_c) = m_c0.checked_sub(i * m_r).filter(|&v| v >= m_r) else {
            break;
        };
        for j in 0..K_WINDOW {
            let Some(k_c) = k_c0.checked_sub(j * k_u).filter(|&v| v >= k_u) else {
                break;
            };
            push(m_c, k_c, SearchPattern::Neighborhood);
        }
    }
    Ok(out)
}

/// Candidate blockings for `p` under the selected kernel.
pub fn design_candidates<T: Element>(
    p: &Problem<T>,
    hw: &HardwareProfile,
    kernel: &KernelSelection<T>,
) -> Result<Vec<BlockingParams>> {
    design_blocking(p.m, p.n, p.k, hw, p.precision, &kernel.chosen.shape())
}

/// `2 m n k 1e-9 / seconds`; packing time is not part of `seconds`.
pub fn gflops<T: Element>(p: &Problem<T>, seconds: f64) -> Result<f64> {
    gflops_for(p.m, p.n, p.k, seconds)
}

pub fn gflops_for(m: usize, n: usize, k: usize, seconds: f64) -> Result<f64> {
    if !(seconds > 0.0) {
        return Err(TsmmError::NonPositiveTime(seconds));
    }
    let flops = 2.0 * m as f64 * n as f64 * k as f64;
    Ok(flops / 1e9 / seconds)
}

/// Dimensions a plan was built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProblemKey {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub precision: Precision,
}

impl<T: Element> From<&Problem<T>> for ProblemKey {
    fn from(p: &Problem<T>) -> Self {
        Self { m: p.m, n: p.n, k: p.k, precision: p.precision }
    }
}

/// Blocking, thread partition and kernel for one problem shape.
#[derive(Debug, Clone)]
pub struct ExecutionPlan<T> {
    pub blocking: BlockingParams,
    pub threads: ThreadPlan,
    pub kernel: KernelSelection<T>,
    pub problem: ProblemKey,
    pub measured_gflops: f64,
}

impl<T: Element> ExecutionPlan<T> {
    pub fn new(
        problem: ProblemKey,
        blocking: BlockingParams,
        threads: ThreadPlan,
        kernel: KernelSelection<T>,
    ) -> Result<Self> {
        if problem.precision != T::PRECISION {
            return Err(TsmmError::PlanMismatch(format!(
                "plan for {} built with {} kernel",
                problem.precision,
                T::PRECISION
            )));
        }
        blocking.check_shape(&kernel.chosen.shape())?;
        threads.check(&problem, &blocking)?;
        Ok(Self { blocking, threads, kernel, problem, measured_gflops: 0.0 })
    }

    /// Plan with the given partition counts on top of `blocking`.
    pub fn with_partitions(
        p: &Problem<T>,
        blocking: BlockingParams,
        kernel: KernelSelection<T>,
        total_threads: usize,
        n_partitions: usize,
        m_partitions: usize,
    ) -> Result<Self> {
        let key = ProblemKey::from(p);
        let (blocking, threads) = ThreadPlan::build(
            &key,
            &blocking,
            &kernel.chosen.shape(),
            total_threads,
            n_partitions,
            m_partitions,
        )?;
        Self::new(key, blocking, threads, kernel)
    }

    pub fn shape(&self) -> KernelShape {
        self.kernel.chosen.shape()
    }

    pub fn a_geometry(&self) -> PackGeometry {
        PackGeometry {
            extent: self.problem.m,
            k: self.problem.k,
            block: self.blocking.m_c,
            k_c: self.blocking.k_c,
            strip: self.blocking.m_t,
            tile: self.shape().m_r,
        }
    }

    pub fn b_geometry(&self) -> PackGeometry {
        PackGeometry {
            extent: self.problem.n,
            k: self.problem.k,
            block: self.blocking.n_c,
            k_c: self.blocking.k_c,
            strip: self.blocking.n_c,
            tile: self.shape().n_r,
        }
    }

    /// One-line human summary, also used as the `plan` CSV column.
    pub fn summary(&self) -> String {
        format!(
            "mc={} kc={} nc={} mt={} np={} mp={} kernel={}",
            self.blocking.m_c,
            self.blocking.k_c,
            self.blocking.n_c,
            self.blocking.m_t,
            self.threads.n_partitions,
            self.threads.m_partitions,
            self.kernel.chosen.name()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hw(l1: usize, l2: usize) -> HardwareProfile {
        HardwareProfile { l1d_bytes: l1, l2_bytes: l2, ..HardwareProfile::fallback() }
    }

    #[test]
    fn l1_bound_for_n16() {
        let shape = KernelShape::new(8, 8, 1).unwrap();
        let c = design_blocking(4096, 16, 4096, &hw(32768, 1 << 20), Precision::Single, &shape).unwrap();
        assert!(c.iter().all(|b| b.n_c == 16));
        let k_max = c.iter().map(|b| b.k_c).max().unwrap();
        assert_eq!(k_max, 512);
    }

    #[test]
    fn power_of_two_pattern_for_f64() {
        let shape = KernelShape::new(4, 4, 1).unwrap();
        let c = design_blocking(4096, 8, 4096, &hw(32768, 1 << 20), Precision::Double, &shape).unwrap();
        let p2: Vec<_> = c.iter().filter(|b| b.origin == SearchPattern::PowerOfTwo).collect();
        assert_eq!(p2.len(), 1);
        assert_eq!((p2[0].m_c, p2[0].k_c), (128, 512));
        assert_eq!(p2[0].m_c * p2[0].k_c, 65536);
    }

    #[test]
    fn tiny_l1_is_infeasible() {
        let tiny = HardwareProfile {
            l1d_bytes: 16,
            l2_bytes: 1 << 20,
            cache_line_bytes: 16,
            ..HardwareProfile::fallback()
        };
        let shape = KernelShape::new(4, 4, 4).unwrap();
        assert!(matches!(
            design_blocking(64, 4, 64, &tiny, Precision::Single, &shape),
            Err(TsmmError::InfeasibleBlocking(_))
        ));
    }

    #[test]
    fn neighborhood_is_bounded_and_feasible() {
        let shape = KernelShape::new(8, 4, 2).unwrap();
        let h = hw(32768, 1 << 20);
        let c = design_blocking(2048, 8, 2048, &h, Precision::Single, &shape).unwrap();
        assert!(c.len() <= M_WINDOW * K_WINDOW + 1);
        for b in &c {
            assert!(b.fits_l1(&h, Precision::Single) && b.fits_l2(&h, Precision::Single), "{b:?}");
            b.check_shape(&shape).unwrap();
        }
    }

    #[test]
    fn non_power_of_two_tile_skips_pattern_two() {
        let shape = KernelShape::new(12, 8, 2).unwrap();
        let c = design_blocking(512, 8, 512, &hw(32768, 1 << 20), Precision::Single, &shape).unwrap();
        assert!(c.iter().all(|b| b.origin == SearchPattern::Neighborhood));
    }

    #[test]
    fn gflops_definition() {
        assert_eq!(gflops_for(25600, 16, 25600, 1.0).unwrap(), 20.97152);
        assert_eq!(gflops_for(1000, 1000, 1000, 2.0).unwrap(), 1.0);
        assert!(matches!(gflops_for(1, 1, 1, 0.0), Err(TsmmError::NonPositiveTime(_))));
        assert!(gflops_for(1, 1, 1, f64::NAN).is_err());
    }

    #[test]
    fn pow2_helper() {
        assert_eq!(largest_pow2_multiple(1000, 4), Some(512));
        assert_eq!(largest_pow2_multiple(3, 4), None);
        assert_eq!(largest_pow2_multiple(1000, 12), None);
        assert_eq!(largest_pow2_multiple(1, 1), Some(1));
    }
}
