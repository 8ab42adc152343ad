//! Fixed-shape kernels. Accumulators live in a `[[T; NR]; MR]` array that
//! the compiler keeps in vector registers; the k loop is unrolled `KU` times
//! so the loads for the next step are issued while the current step's
//! products accumulate.

use super::{Body, KernelFn, KernelShape, Microkernel, Prefetch, Provenance};
use crate::element::Element;

#[inline(always)]
fn rank1<T: Element, const MR: usize, const NR: usize>(
    acc: &mut [[T; NR]; MR],
    a: &[T; MR],
    b: &[T; NR],
) {
    for i in 0..MR {
        let ai = a[i];
        for j in 0..NR {
            acc[i][j] = acc[i][j] + ai * b[j];
        }
    }
}

#[inline(always)]
fn tile_body<T: Element, const MR: usize, const NR: usize, const KU: usize>(
    k: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
    accumulate: bool,
) {
    let a = &a[..k * MR];
    let b = &b[..k * NR];
    let c = &mut c[..MR * NR];

    let mut acc = [[T::zero(); NR]; MR];
    if accumulate {
        for (i, row) in acc.iter_mut().enumerate() {
            row.copy_from_slice(&c[i * NR..(i + 1) * NR]);
        }
    }

    let mut a_steps = a.chunks_exact(MR * KU);
    let mut b_steps = b.chunks_exact(NR * KU);
    for (ap, bp) in a_steps.by_ref().zip(b_steps.by_ref()) {
        for u in 0..KU {
            let av: &[T; MR] = ap[u * MR..(u + 1) * MR].try_into().unwrap();
            let bv: &[T; NR] = bp[u * NR..(u + 1) * NR].try_into().unwrap();
            rank1(&mut acc, av, bv);
        }
    }
    let tail = a_steps.remainder().chunks_exact(MR).zip(b_steps.remainder().chunks_exact(NR));
    for (ap, bp) in tail {
        rank1(&mut acc, ap.try_into().unwrap(), bp.try_into().unwrap());
    }

    for (i, row) in acc.iter().enumerate() {
        c[i * NR..(i + 1) * NR].copy_from_slice(row);
    }
}

fn tile_portable<T: Element, const MR: usize, const NR: usize, const KU: usize>(
    k: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
    accumulate: bool,
) {
    tile_body::<T, MR, NR, KU>(k, a, b, c, accumulate)
}

#[cfg(target_arch = "x86_64")]
mod avx {
    use super::*;

    #[target_feature(enable = "avx")]
    unsafe fn tile_avx<T: Element, const MR: usize, const NR: usize, const KU: usize>(
        k: usize,
        a: &[T],
        b: &[T],
        c: &mut [T],
        accumulate: bool,
    ) {
        tile_body::<T, MR, NR, KU>(k, a, b, c, accumulate)
    }

    pub(super) fn tile<T: Element, const MR: usize, const NR: usize, const KU: usize>(
        k: usize,
        a: &[T],
        b: &[T],
        c: &mut [T],
        accumulate: bool,
    ) {
        // SAFETY: this function is only handed out by `pick` after runtime
        // detection confirmed AVX support.
        unsafe { tile_avx::<T, MR, NR, KU>(k, a, b, c, accumulate) }
    }
}

fn pick<T: Element, const MR: usize, const NR: usize, const KU: usize>() -> KernelFn<T> {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx") {
            return avx::tile::<T, MR, NR, KU>;
        }
    }
    tile_portable::<T, MR, NR, KU>
}

fn entry<T: Element, const MR: usize, const NR: usize, const KU: usize>() -> Microkernel<T> {
    Microkernel {
        name: format!("tile{MR}x{NR}u{KU}"),
        shape: KernelShape { m_r: MR, n_r: NR, k_unroll: KU },
        provenance: Provenance::Vectorized,
        prefetch: Prefetch::default(),
        body: Body::Tiled(pick::<T, MR, NR, KU>()),
    }
}

pub(super) fn vectorized_kernels<T: Element>() -> Vec<Microkernel<T>> {
    vec![
        entry::<T, 4, 4, 2>(),
        entry::<T, 8, 4, 2>(),
        entry::<T, 4, 8, 2>(),
        entry::<T, 6, 8, 2>(),
        entry::<T, 8, 8, 2>(),
        entry::<T, 12, 4, 2>(),
        entry::<T, 12, 8, 2>(),
        entry::<T, 16, 4, 2>(),
        entry::<T, 8, 4, 4>(),
    ]
}

#[cfg(test)]
mod tests {
    use super::super::reference_kernel;
    use super::*;

    #[test]
    fn every_shape_matches_reference_bitwise() {
        let mut seed = 0x2545_f491_4f6c_dd1du64;
        let mut next = || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for kernel in vectorized_kernels::<f64>() {
            let s = kernel.shape();
            let reference = reference_kernel::<f64>(s);
            for k in [1, 2, 3, 7, 8, 33] {
                let a: Vec<f64> = (0..s.m_r * k).map(|_| next()).collect();
                let b: Vec<f64> = (0..s.n_r * k).map(|_| next()).collect();
                let c0: Vec<f64> = (0..s.tile_len()).map(|_| next()).collect();
                for acc in [false, true] {
                    let (mut x, mut y) = (c0.clone(), c0.clone());
                    kernel.run(k, &a, &b, &mut x, acc);
                    reference.run(k, &a, &b, &mut y, acc);
                    assert_eq!(x, y, "{} k={k} acc={acc}", kernel.name());
                }
            }
        }
    }
}
