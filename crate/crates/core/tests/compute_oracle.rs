mod common;

use common::*;
use proptest::prelude::*;
use tsmm::*;

const DIMS: [usize; 7] = [1, 7, 8, 9, 31, 64, 97];
const NS: [usize; 5] = [1, 2, 8, 16, 17];
const SCALARS: [f64; 5] = [0.0, 1.0, -1.0, 2.5, -2.5];

fn grid<T: Element>(seed: u64) {
    let hw = HardwareProfile::fallback().with_threads(2);
    let names = kernel_names();
    let mut r = rng(seed);
    let mut case = 0;
    for &m in &DIMS {
        for &k in &DIMS {
            for &n in &NS {
                let a = random::<T>(&mut r, m, k, StorageOrder::RowMajor);
                let b = random::<T>(&mut r, k, n, StorageOrder::ColMajor);
                let c = random::<T>(&mut r, m, n, StorageOrder::RowMajor);
                for &alpha in &SCALARS {
                    for &beta in &SCALARS {
                        let p = Problem::new(m, n, k, T::from_f64(alpha), T::from_f64(beta)).unwrap();
                        let sel = kernel::<T>(&names[case % names.len()]);
                        case += 1;
                        let plan = default_plan(&p, &hw, &sel).unwrap();
                        let got = run(&p, &a, &b, &c, &plan);
                        let want = oracle(&p, &a, &b, &c);
                        if let Err(e) = within(&got, &want, bound(&p, &a, &b, &c)) {
                            panic!("m={m} k={k} n={n} alpha={alpha} beta={beta} {}: {e}", plan.summary());
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn grid_matches_oracle_f32() {
    grid::<f32>(1);
}

#[test]
fn grid_matches_oracle_f64() {
    grid::<f64>(2);
}

#[test]
fn square_96_with_mixed_scalars() {
    let mut r = rng(96);
    let a = random::<f64>(&mut r, 96, 96, StorageOrder::ColMajor);
    let b = random::<f64>(&mut r, 96, 8, StorageOrder::RowMajor);
    let c = random::<f64>(&mut r, 96, 8, StorageOrder::ColMajor);
    let p = Problem::new(96, 8, 96, 1.5, -0.5).unwrap();
    let hw = HardwareProfile::probe();
    let sel = kernel::<f64>("tile8x4u2");
    let plan = default_plan(&p, &hw, &sel).unwrap();
    let got = run(&p, &a, &b, &c, &plan);
    within(&got, &oracle(&p, &a, &b, &c), bound(&p, &a, &b, &c)).unwrap();
}

#[test]
fn beta_one_twice_adds_product_twice() {
    let mut r = rng(7);
    let (m, n, k) = (45, 6, 30);
    let a = random::<f64>(&mut r, m, k, StorageOrder::RowMajor);
    let b = random::<f64>(&mut r, k, n, StorageOrder::RowMajor);
    let c = Matrix::filled(m, n, StorageOrder::RowMajor, 0.0);
    let p = Problem::new(m, n, k, 1.0, 1.0).unwrap();
    let plan = default_plan(&p, &HardwareProfile::fallback(), &kernel("tile4x8u2")).unwrap();
    let pa = pack_a(1.0, &a.view(), &plan).unwrap();
    let pb = pack_b(1.0, &b.view(), &plan).unwrap();
    let mut twice = c.clone();
    compute(1.0, &mut twice.view_mut(), &pa, &pb, &plan).unwrap();
    compute(1.0, &mut twice.view_mut(), &pa, &pb, &plan).unwrap();
    let once = oracle(&Problem::new(m, n, k, 1.0, 0.0).unwrap(), &a, &b, &c);
    for i in 0..m {
        for j in 0..n {
            assert!((twice.get(i, j) - 2.0 * once.get(i, j)).abs() <= 1e-13);
        }
    }
}

#[test]
fn nan_in_c_propagates_through_beta() {
    let p = Problem::new(5, 3, 4, 1.0, 0.0).unwrap();
    let a = Matrix::filled(5, 4, StorageOrder::RowMajor, 1.0);
    let b = Matrix::filled(4, 3, StorageOrder::RowMajor, 1.0);
    let mut c = Matrix::filled(5, 3, StorageOrder::RowMajor, 0.0);
    c.view_mut().set(2, 1, f64::NAN);
    let plan = default_plan(&p, &HardwareProfile::fallback(), &kernel("tile4x4u2")).unwrap();
    let got = run(&p, &a, &b, &c, &plan);
    assert!(got.get(2, 1).is_nan());
    assert_eq!(got.get(2, 0), 4.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn any_plan_matches_oracle(
        m in 1usize..150, n in 1usize..40, k in 1usize..150,
        kernel_idx in 0usize..16, threads in 1usize..5,
        row_a in any::<bool>(), row_b in any::<bool>(), row_c in any::<bool>(),
        alpha in -3.0f64..3.0, beta in -3.0f64..3.0, seed in any::<u64>(),
    ) {
        let order = |row| if row { StorageOrder::RowMajor } else { StorageOrder::ColMajor };
        let mut r = rng(seed);
        let a = random::<f64>(&mut r, m, k, order(row_a));
        let b = random::<f64>(&mut r, k, n, order(row_b));
        let c = random::<f64>(&mut r, m, n, order(row_c));
        let p = Problem::new(m, n, k, alpha, beta).unwrap();
        let names = kernel_names();
        let sel = kernel::<f64>(&names[kernel_idx % names.len()]);
        let hw = HardwareProfile::fallback().with_threads(threads);
        for plan in tsmm::planner::candidate_plans(&p, &hw, &sel).unwrap().into_iter().step_by(7) {
            let got = run(&p, &a, &b, &c, &plan);
            let want = oracle(&p, &a, &b, &c);
            prop_assert!(bitwise_eq(&got, &want), "{}", plan.summary());
        }
    }
}
