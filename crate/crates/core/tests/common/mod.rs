#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsmm::*;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random<T: Element>(r: &mut ChaCha8Rng, rows: usize, cols: usize, order: StorageOrder) -> Matrix<T> {
    Matrix::from_fn(rows, cols, order, |_, _| T::from_f64(r.gen_range(-1.0..1.0)))
}

pub fn kernel<T: Element>(name: &str) -> KernelSelection<T> {
    let k = KernelCatalog::<T>::all().find(name).unwrap().clone();
    KernelSelection::fixed(k, &HardwareProfile::fallback())
}

pub fn kernel_names() -> Vec<String> {
    KernelCatalog::<f64>::all().entries().iter().map(|k| k.name().to_string()).collect()
}

/// Packs, multiplies and returns the updated C.
pub fn run<T: Element>(
    p: &Problem<T>,
    a: &Matrix<T>,
    b: &Matrix<T>,
    c: &Matrix<T>,
    plan: &ExecutionPlan<T>,
) -> Matrix<T> {
    let pa = pack_a(p.alpha, &a.view(), plan).unwrap();
    let pb = pack_b(T::one(), &b.view(), plan).unwrap();
    let mut out = c.clone();
    compute(p.beta, &mut out.view_mut(), &pa, &pb, plan).unwrap();
    out
}

pub fn oracle<T: Element>(p: &Problem<T>, a: &Matrix<T>, b: &Matrix<T>, c: &Matrix<T>) -> Matrix<T> {
    let mut out = c.clone();
    naive_gemm(p, &a.view(), &b.view(), &mut out.view_mut()).unwrap();
    out
}

fn max_abs<T: Element>(m: &Matrix<T>) -> f64 {
    m.as_slice().iter().fold(0.0, |acc, v| acc.max(Element::to_f64(*v).abs()))
}

/// `8 k eps (|alpha| max|A| max|B| + |beta| max|C|)`.
pub fn bound<T: Element>(p: &Problem<T>, a: &Matrix<T>, b: &Matrix<T>, c: &Matrix<T>) -> f64 {
    let eps = 2.0 * T::PRECISION.unit_roundoff();
    let scale = p.alpha.to_f64().abs() * max_abs(a) * max_abs(b) + p.beta.to_f64().abs() * max_abs(c);
    8.0 * p.k as f64 * eps * scale
}

pub fn ulps(x: f64, y: f64) -> u64 {
    if x == y || (x.is_nan() && y.is_nan()) {
        return 0;
    }
    let key = |v: f64| {
        let b = v.to_bits() as i64;
        if b < 0 { i64::MIN - b } else { b }
    };
    key(x).abs_diff(key(y))
}

/// Elementwise comparison; `Err` names the first offending entry.
pub fn within<T: Element>(got: &Matrix<T>, want: &Matrix<T>, tol: f64) -> Result<(), String> {
    for i in 0..want.rows() {
        for j in 0..want.cols() {
            let (g, w) = (got.get(i, j).to_f64(), want.get(i, j).to_f64());
            let ok = (g.is_nan() && w.is_nan()) || (g - w).abs() <= tol;
            let ok = ok && (T::PRECISION == Precision::Single || ulps(g, w) <= 2);
            if !ok {
                return Err(format!("C[{i},{j}] = {g}, expected {w} (tol {tol})"));
            }
        }
    }
    Ok(())
}

pub fn bitwise_eq<T: Element>(x: &Matrix<T>, y: &Matrix<T>) -> bool {
    x.as_slice().iter().zip(y.as_slice()).all(|(a, b)| Element::to_f64(*a).to_bits() == Element::to_f64(*b).to_bits())
        && x.as_slice().len() == y.as_slice().len()
}
