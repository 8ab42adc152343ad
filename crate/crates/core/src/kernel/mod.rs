//! Register-tiled inner kernels.
//!
//! A kernel multiplies an `m_r x k_c` micro-panel of packed A by a
//! `k_c x n_r` micro-panel of packed B into an `m_r x n_r` tile:
//!
//! ```text
//! c_tile <- A_panel * B_panel + (accumulate ? c_tile : 0)
//! ```
//!
//! Packed A stores, for each `p` in `0..k_c`, the `m_r` rows of column `p`
//! contiguously; packed B stores, for each `p`, the `n_r` columns of row `p`
//! contiguously. The tile is row-major (`c_tile[i * n_r + j]`). Every kernel
//! sums in ascending `p` starting from the initial tile value and never
//! contracts to fused multiply-adds, so all kernels agree bit for bit with
//! the reference triple loop.

mod select;
mod tiled;

use std::fmt;

pub use select::{
    install_kernel, select_kernel, GebbWorkload, KernelCache, KernelCacheEntry, KernelSelection,
    KernelTimer, WallClockTimer,
};

use crate::element::Element;
use crate::error::{Result, TsmmError};
use crate::hardware::HardwareProfile;
use crate::model::Precision;

/// Vector registers a single load instruction can fill (AArch64 `LD1` with a
/// four-register list).
pub const MAX_REGISTERS_PER_LOAD: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KernelShape {
    pub m_r: usize,
    pub n_r: usize,
    pub k_unroll: usize,
}

impl KernelShape {
    pub fn new(m_r: usize, n_r: usize, k_unroll: usize) -> Result<Self> {
        if m_r == 0 || n_r == 0 || k_unroll == 0 {
            return Err(TsmmError::InvalidShape(format!(
                "shape {m_r}x{n_r} unroll {k_unroll} has a zero extent"
            )));
        }
        Ok(Self { m_r, n_r, k_unroll })
    }

    pub fn tile_len(&self) -> usize {
        self.m_r * self.n_r
    }

    /// Accumulators plus one A column and one B row, in vector registers.
    pub fn registers_needed(&self, lanes: usize) -> usize {
        let lanes = lanes.max(1);
        (self.m_r * self.n_r).div_ceil(lanes) + self.m_r.div_ceil(lanes) + self.n_r.div_ceil(lanes)
    }

    pub fn check_budget(&self, profile: &HardwareProfile, precision: Precision) -> Result<()> {
        let needed = self.registers_needed(profile.lanes(precision));
        if needed > profile.simd_register_count {
            return Err(TsmmError::ShapeOverBudget {
                m_r: self.m_r,
                n_r: self.n_r,
                needed,
                available: profile.simd_register_count,
            });
        }
        Ok(())
    }
}

/// Share of FMA instructions among the FMA and load instructions issued per
/// k-iteration. Each operand's vectors are fetched with multi-register loads
/// of up to [`MAX_REGISTERS_PER_LOAD`] registers.
pub fn tile_flop_to_load_ratio(
    shape: &KernelShape,
    profile: &HardwareProfile,
    precision: Precision,
) -> Result<f64> {
    shape.check_budget(profile, precision)?;
    let lanes = profile.lanes(precision);
    let fma = (shape.m_r * shape.n_r).div_ceil(lanes);
    let loads = shape.m_r.div_ceil(lanes).div_ceil(MAX_REGISTERS_PER_LOAD)
        + shape.n_r.div_ceil(lanes).div_ceil(MAX_REGISTERS_PER_LOAD);
    Ok(fma as f64 / (fma + loads) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Reference,
    Vectorized,
}

/// Software prefetch distances in bytes ahead of the current panel pointer.
/// Zero disables the prefetch for that operand.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Prefetch {
    pub a_bytes: usize,
    pub b_bytes: usize,
    pub c_bytes: usize,
}

/// `(k_c, a_panel, b_panel, c_tile, accumulate)`
pub type KernelFn<T> = fn(usize, &[T], &[T], &mut [T], bool);

#[derive(Clone, Copy)]
enum Body<T> {
    Reference,
    Tiled(KernelFn<T>),
}

#[derive(Clone)]
pub struct Microkernel<T> {
    name: String,
    shape: KernelShape,
    provenance: Provenance,
    prefetch: Prefetch,
    body: Body<T>,
}

impl<T> fmt::Debug for Microkernel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Microkernel")
            .field("name", &self.name)
            .field("shape", &self.shape)
            .field("provenance", &self.provenance)
            .field("prefetch", &self.prefetch)
            .finish()
    }
}

impl<T: Element> Microkernel<T> {
    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn shape(&self) -> KernelShape {
        self.shape
    }
    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
    pub fn prefetch(&self) -> Prefetch {
        self.prefetch
    }

    pub fn with_prefetch(mut self, prefetch: Prefetch) -> Self {
        self.prefetch = prefetch;
        self
    }

    /// Runs the kernel over `k_c` steps. Panics if a panel is shorter than
    /// the shape requires.
    #[inline]
    pub fn run(&self, k_c: usize, a: &[T], b: &[T], c: &mut [T], accumulate: bool) {
        match self.body {
            Body::Tiled(f) => f(k_c, a, b, c, accumulate),
            Body::Reference => reference_body(self.shape, k_c, a, b, c, accumulate),
        }
    }
}

fn reference_body<T: Element>(
    shape: KernelShape,
    k_c: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
    accumulate: bool,
) {
    let (mr, nr) = (shape.m_r, shape.n_r);
    assert!(a.len() >= mr * k_c && b.len() >= nr * k_c && c.len() >= mr * nr);
    for i in 0..mr {
        for j in 0..nr {
            let mut sum = if accumulate { c[i * nr + j] } else { T::zero() };
            for p in 0..k_c {
                sum = sum + a[p * mr + i] * b[p * nr + j];
            }
            c[i * nr + j] = sum;
        }
    }
}

/// The literal triple loop for `shape`; the tile-level correctness oracle.
pub fn reference_kernel<T: Element>(shape: KernelShape) -> Microkernel<T> {
    Microkernel {
        name: format!("ref{}x{}", shape.m_r, shape.n_r),
        shape,
        provenance: Provenance::Reference,
        prefetch: Prefetch::default(),
        body: Body::Reference,
    }
}

/// A list of candidate kernels for one element type.
#[derive(Debug, Clone)]
pub struct KernelCatalog<T> {
    entries: Vec<Microkernel<T>>,
}

impl<T: Element> KernelCatalog<T> {
    pub fn new(entries: Vec<Microkernel<T>>) -> Result<Self> {
        if entries.is_empty() {
            return Err(TsmmError::NoValidKernel);
        }
        Ok(Self { entries })
    }

    /// The reference 4x4 kernel plus every vectorized shape that fits the
    /// register budget of `profile`.
    pub fn standard(profile: &HardwareProfile) -> Self {
        let reference = reference_kernel(KernelShape { m_r: 4, n_r: 4, k_unroll: 1 });
        let mut entries = vec![reference];
        entries.extend(
            tiled::vectorized_kernels::<T>()
                .into_iter()
                .filter(|k| k.shape.check_budget(profile, T::PRECISION).is_ok()),
        );
        Self { entries }
    }

    /// Every built-in kernel, ignoring register budgets.
    pub fn all() -> Self {
        let mut entries = vec![reference_kernel(KernelShape { m_r: 4, n_r: 4, k_unroll: 1 })];
        entries.extend(tiled::vectorized_kernels::<T>());
        Self { entries }
    }

    pub fn entries(&self) -> &[Microkernel<T>] {
        &self.entries
    }

    pub fn find(&self, name: &str) -> Option<&Microkernel<T>> {
        self.entries.iter().find(|k| k.name == name)
    }
}
