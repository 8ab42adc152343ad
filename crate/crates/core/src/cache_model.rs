//! Order-of-magnitude cache-miss estimates for square problems
//! (`m = n = k`) under three algorithms:
//!
//! ```text
//! naive     n^3 / L
//! blocked   3 sqrt(3) n^3 / (L sqrt(Z))
//! pre-pack  Z T / (3 L) + 2 sqrt(3) n^3 / (L sqrt(Z))
//! ```
//!
//! `Z` (cache size) and `L` (line) are in elements; `T` is the thread count.
//! Values are real estimates and are never rounded.

use crate::error::{Result, TsmmError};
use crate::hardware::HardwareProfile;
use crate::model::Precision;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheModelInput {
    /// Problem edge.
    pub n: f64,
    /// Block edge, `m_c = n_c = k_c = b`.
    pub b: f64,
    /// Cache size in elements.
    pub z: f64,
    /// Cache line in elements.
    pub l: f64,
    /// Threads.
    pub t: f64,
}

impl CacheModelInput {
    pub fn new(n: f64, b: f64, z: f64, l: f64, t: f64) -> Result<Self> {
        let input = Self { n, b, z, l, t };
        input.validate()?;
        Ok(input)
    }

    /// Input with the largest block edge that fits three blocks in `z`.
    pub fn with_largest_block(n: f64, z: f64, l: f64, t: f64) -> Result<Self> {
        Self::new(n, (z / 3.0).sqrt().floor(), z, l, t)
    }

    /// Cache and line sizes from `hw`'s L2, converted to elements.
    pub fn from_profile(n: f64, hw: &HardwareProfile, precision: Precision) -> Result<Self> {
        let fp = precision.fp_size() as f64;
        Self::with_largest_block(
            n,
            hw.l2_bytes as f64 / fp,
            hw.cache_line_bytes as f64 / fp,
            hw.max_threads as f64,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TsmmError::InvalidProblem(m));
        let Self { n, b, z, l, t } = *self;
        if ![n, b, z, l, t].iter().all(|v| v.is_finite()) {
            return bad("cache model inputs must be finite".into());
        }
        if n < 0.0 || b < 0.0 {
            return bad(format!("n = {n} and b = {b} must be non-negative"));
        }
        if 3.0 * b * b > z {
            return bad(format!("three {b}x{b} blocks do not fit in z = {z}"));
        }
        if l < 1.0 {
            return bad(format!("line size l = {l} must be at least 1"));
        }
        if t < 1.0 {
            return bad(format!("thread count t = {t} must be at least 1"));
        }
        Ok(())
    }
}

pub fn misses_naive(x: &CacheModelInput) -> f64 {
    x.n.powi(3) / x.l
}

pub fn misses_blocked(x: &CacheModelInput) -> f64 {
    3.0 * 3f64.sqrt() * x.n.powi(3) / (x.l * x.z.sqrt())
}

pub fn misses_prepack(x: &CacheModelInput) -> f64 {
    x.z * x.t / (3.0 * x.l) + 2.0 * 3f64.sqrt() * x.n.powi(3) / (x.l * x.z.sqrt())
}

/// Whether the analysis predicts fewer misses for pre-pack than for plain
/// blocking: `n^3 > Z^(3/2) T / (3 sqrt(3))`.
pub fn prepack_wins(x: &CacheModelInput) -> bool {
    x.n.powi(3) > x.z.powf(1.5) * x.t / (3.0 * 3f64.sqrt())
}

/// Smallest edge at which [`prepack_wins`] holds.
pub fn crossover_n(z: f64, t: f64) -> f64 {
    (z.powf(1.5) * t / (3.0 * 3f64.sqrt())).cbrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(n: f64, z: f64, l: f64, t: f64) -> CacheModelInput {
        CacheModelInput::with_largest_block(n, z, l, t).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn naive_values() {
        assert_eq!(misses_naive(&input(1024.0, 12288.0, 8.0, 1.0)), 134217728.0);
        assert_eq!(misses_naive(&input(1.0, 3.0, 1.0, 1.0)), 1.0);
        let a = misses_naive(&input(100.0, 300.0, 4.0, 1.0));
        assert_eq!(misses_naive(&input(200.0, 300.0, 4.0, 1.0)), 8.0 * a);
    }

    #[test]
    fn blocked_values() {
        let x = input(1024.0, 12288.0, 8.0, 1.0);
        assert!(rel(misses_blocked(&x), 6291456.0) < 1e-12);
        let big = input(1024.0, 4.0 * 12288.0, 8.0, 1.0);
        assert!(rel(misses_blocked(&big), misses_blocked(&x) / 2.0) < 1e-15);
        let ratio = misses_blocked(&x) / misses_naive(&x);
        assert!(rel(ratio, 3.0 * 3f64.sqrt() / 12288f64.sqrt()) < 1e-15);
    }

    #[test]
    fn prepack_values() {
        assert_eq!(misses_prepack(&input(0.0, 300.0, 2.0, 1.0)), 50.0);
        let x = input(1024.0, 12288.0, 8.0, 8.0);
        assert!(rel(misses_prepack(&x), 4096.0 + 4194304.0) < 1e-12);
        let huge = input(1e7, 12288.0, 8.0, 8.0);
        assert!(rel(misses_prepack(&huge) / misses_blocked(&huge), 2.0 / 3.0) < 1e-9);
    }

    #[test]
    fn crossover_matches_direct_comparison() {
        for &t in &[1.0, 4.0, 16.0] {
            for &z in &[3.0, 768.0, 12288.0, 262144.0] {
                for i in 0..200 {
                    let x = input(i as f64 * 3.0, z, 8.0, t);
                    assert_eq!(prepack_wins(&x), misses_prepack(&x) < misses_blocked(&x), "{x:?}");
                }
                let n0 = crossover_n(z, t);
                assert!(!prepack_wins(&input(n0 * 0.999, z, 8.0, t)));
                assert!(prepack_wins(&input(n0 * 1.001, z, 8.0, t)));
            }
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(CacheModelInput::new(10.0, 64.0, 12287.0, 8.0, 1.0).is_err());
        assert!(CacheModelInput::new(10.0, 64.0, 12288.0, 8.0, 1.0).is_ok());
        assert!(CacheModelInput::new(10.0, 1.0, 3.0, 0.5, 1.0).is_err());
        assert!(CacheModelInput::new(10.0, 1.0, 3.0, 1.0, 0.0).is_err());
        assert!(CacheModelInput::new(-1.0, 1.0, 3.0, 1.0, 1.0).is_err());
        assert!(CacheModelInput::new(f64::NAN, 1.0, 3.0, 1.0, 1.0).is_err());
    }
}
