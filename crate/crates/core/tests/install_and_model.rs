use proptest::prelude::*;
use tsmm::cache_model::*;
use tsmm::*;

#[test]
fn wall_clock_install_then_cache_hit() {
    let dir = tempfile::tempdir().unwrap();
    let cache = KernelCache::new(dir.path().join("kernels.txt"));
    let hw = HardwareProfile::probe();
    let catalog = KernelCatalog::<f64>::standard(&hw);
    let trial = TrialConfig::new(1, 3).unwrap();
    let first = install_kernel(&catalog, &hw, &trial, &mut WallClockTimer, Some(&cache), false).unwrap();
    assert!(first.gflops() > 0.0);
    assert_eq!(first.measured_gflops.len(), catalog.entries().len());
    assert!(first.chosen.shape().check_budget(&hw, Precision::Double).is_ok());

    let again = install_kernel(&catalog, &hw, &trial, &mut WallClockTimer, Some(&cache), false).unwrap();
    assert_eq!(again.chosen.name(), first.chosen.name());
    assert_eq!(again.measured_gflops.len(), 1);
    assert_eq!(cache.entries().unwrap().len(), 1);

    // f32 has its own fingerprint, so it misses.
    let single = install_kernel(&KernelCatalog::<f32>::standard(&hw), &hw, &trial, &mut WallClockTimer, Some(&cache), false)
        .unwrap();
    assert!(!single.measured_gflops.is_empty());
    assert_eq!(cache.entries().unwrap().len(), 2);
}

#[test]
fn selected_kernel_drives_a_correct_multiply() {
    let hw = HardwareProfile::probe().with_threads(2);
    let catalog = KernelCatalog::<f32>::standard(&hw);
    let trial = TrialConfig::new(0, 3).unwrap();
    let sel = select_kernel(&catalog, &hw, &trial, &mut WallClockTimer).unwrap();
    let p = Problem::new(333, 12, 77, 2.0f32, 0.5).unwrap();
    let a = Matrix::from_fn(333, 77, StorageOrder::RowMajor, |i, j| ((i * 3 + j) % 11) as f32 - 5.0);
    let b = Matrix::from_fn(77, 12, StorageOrder::RowMajor, |i, j| ((i + 2 * j) % 7) as f32 - 3.0);
    let c0 = Matrix::from_fn(333, 12, StorageOrder::ColMajor, |i, j| (i % 5) as f32 - j as f32);
    let plan = default_plan(&p, &hw, &sel).unwrap();
    let pa = pack_a(p.alpha, &a.view(), &plan).unwrap();
    let pb = pack_b(1.0, &b.view(), &plan).unwrap();
    let mut c = c0.clone();
    compute(p.beta, &mut c.view_mut(), &pa, &pb, &plan).unwrap();
    let mut want = c0;
    naive_gemm(&p, &a.view(), &b.view(), &mut want.view_mut()).unwrap();
    assert_eq!(c, want);
}

proptest! {
    #[test]
    fn model_monotone_in_n_and_l(
        n in 0.0f64..1e5, dn in 0.0f64..1e4, z_exp in 2u32..24,
        l in 1.0f64..64.0, dl in 0.0f64..64.0, t in 1.0f64..64.0,
    ) {
        let z = (1u64 << z_exp) as f64;
        let x = CacheModelInput::with_largest_block(n, z, l, t).unwrap();
        let bigger_n = CacheModelInput { n: n + dn, ..x };
        let bigger_l = CacheModelInput { l: l + dl, ..x };
        for f in [misses_naive, misses_blocked, misses_prepack] {
            prop_assert!(f(&bigger_n) >= f(&x));
            prop_assert!(f(&bigger_l) <= f(&x));
        }
    }
}
