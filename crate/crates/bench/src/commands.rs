use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsmm::cache_model::{misses_blocked, misses_naive, misses_prepack, CacheModelInput};
use tsmm::*;

use crate::bench::seeded_matrix;
use crate::{BenchError, Result};

#[derive(Debug, Clone)]
pub struct TuneSpec {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub precision: Precision,
    pub threads: usize,
    pub profile: HardwareProfile,
    pub kernel_cache: Option<PathBuf>,
    pub plan_cache: Option<PathBuf>,
    pub retune: bool,
    pub trial: TrialConfig,
    pub seed: u64,
}

/// Precision-independent view of a tuned plan.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneReport {
    pub blocking: BlockingParams,
    pub n_partitions: usize,
    pub m_partitions: usize,
    pub total_threads: usize,
    pub kernel: String,
    pub gflops: f64,
    pub from_cache: bool,
}

impl TuneReport {
    fn from_plan<T: Element>(plan: &ExecutionPlan<T>, from_cache: bool) -> Self {
        Self {
            blocking: plan.blocking,
            n_partitions: plan.threads.n_partitions,
            m_partitions: plan.threads.m_partitions,
            total_threads: plan.threads.total_threads,
            kernel: plan.kernel.chosen.name().to_string(),
            gflops: plan.measured_gflops,
            from_cache,
        }
    }
}

impl fmt::Display for TuneReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = &self.blocking;
        writeln!(f, "kernel       {}", self.kernel)?;
        writeln!(f, "blocking     m_c={} k_c={} n_c={} m_t={}", b.m_c, b.k_c, b.n_c, b.m_t)?;
        if let Some(n_t) = b.n_t {
            writeln!(f, "n slice      {n_t}")?;
        }
        writeln!(
            f,
            "threads      {} ({} n-partitions x {} m-partitions)",
            self.total_threads, self.n_partitions, self.m_partitions
        )?;
        writeln!(f, "gflops       {:.3}", self.gflops)?;
        write!(f, "source       {}", if self.from_cache { "plan cache" } else { "measured" })
    }
}

pub fn run_tune(spec: &TuneSpec) -> Result<TuneReport> {
    if spec.m == 0 || spec.k == 0 || spec.n == 0 || spec.threads == 0 {
        return Err(BenchError::Spec("m, k, n and threads must be positive".into()));
    }
    spec.trial.validate()?;
    match spec.precision {
        Precision::Single => tune_typed::<f32>(spec),
        Precision::Double => tune_typed::<f64>(spec),
    }
}

fn tune_typed<T: Element>(spec: &TuneSpec) -> Result<TuneReport> {
    let hw = spec.profile.with_threads(spec.threads);
    let catalog = KernelCatalog::<T>::standard(&hw);
    let kcache = spec.kernel_cache.as_ref().map(KernelCache::new);
    let kernel = install_kernel(&catalog, &hw, &TrialConfig::default(), &mut WallClockTimer, kcache.as_ref(), false)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let a = seeded_matrix::<T>(&mut rng, spec.m, spec.k);
    let b = seeded_matrix::<T>(&mut rng, spec.k, spec.n);
    let c = Matrix::filled(spec.m, spec.n, StorageOrder::RowMajor, T::zero());
    let p = Problem::new(spec.m, spec.n, spec.k, T::one(), T::zero())?;
    let mut ev = MeasuredEvaluator::new(p, a, b, c)?;
    let (plan, hit) = match &spec.plan_cache {
        Some(path) => {
            let cache = PlanCache::new(path);
            tune_cached(&p, &hw, &kernel, &spec.trial, &mut ev, &cache, spec.retune)?
        }
        None => (tune(&p, &hw, &kernel, &spec.trial, &mut ev)?, false),
    };
    Ok(TuneReport::from_plan(&plan, hit))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// Cache size in elements.
    pub z: f64,
    /// Cache line in elements.
    pub l: f64,
    pub t: f64,
    pub n_values: Vec<f64>,
}

/// Writes `n,naive,blocked,prepack` rows, one per problem edge.
pub fn run_model(spec: &ModelSpec, w: impl Write) -> Result<()> {
    if spec.n_values.is_empty() {
        return Err(BenchError::Spec("no problem sizes given".into()));
    }
    let inputs = spec
        .n_values
        .iter()
        .map(|&n| CacheModelInput::with_largest_block(n, spec.z, spec.l, spec.t))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["n", "naive", "blocked", "prepack"])?;
    for x in &inputs {
        out.write_record([
            x.n.to_string(),
            misses_naive(x).to_string(),
            misses_blocked(x).to_string(),
            misses_prepack(x).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Times the catalog for `precision` (or reads the kernel cache) and writes
/// one line per kernel.
pub fn kernel_report(
    precision: Precision,
    profile: &HardwareProfile,
    cache: Option<PathBuf>,
    retune: bool,
    w: impl Write,
) -> Result<()> {
    match precision {
        Precision::Single => report_typed::<f32>(profile, cache, retune, w),
        Precision::Double => report_typed::<f64>(profile, cache, retune, w),
    }
}

fn report_typed<T: Element>(
    profile: &HardwareProfile,
    cache: Option<PathBuf>,
    retune: bool,
    w: impl Write,
) -> Result<()> {
    let catalog = KernelCatalog::<T>::all();
    let usable = KernelCatalog::<T>::standard(profile);
    let cache = cache.map(KernelCache::new);
    let sel = install_kernel(&usable, profile, &TrialConfig::default(), &mut WallClockTimer, cache.as_ref(), retune)?;
    let lanes = profile.lanes(T::PRECISION);

    let mut out = csv::Writer::from_writer(w);
    out.write_record(["kernel", "m_r", "n_r", "k_unroll", "registers", "fma_ratio", "gflops", "status"])?;
    for k in catalog.entries() {
        let s = k.shape();
        let ratio = tile_flop_to_load_ratio(&s, profile, T::PRECISION)
            .map_or_else(|_| "-".to_string(), |r| format!("{r:.4}"));
        let gflops = sel
            .measured_gflops
            .iter()
            .find(|(name, _)| name == k.name())
            .map_or_else(|| "-".to_string(), |(_, g)| format!("{g:.3}"));
        let status = if k.name() == sel.chosen.name() {
            "selected"
        } else if usable.find(k.name()).is_some() {
            "usable"
        } else {
            "over-budget"
        };
        out.write_record([
            k.name().to_string(),
            s.m_r.to_string(),
            s.n_r.to_string(),
            s.k_unroll.to_string(),
            s.registers_needed(lanes).to_string(),
            ratio,
            gflops,
            status.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_csv_rows() {
        let spec = ModelSpec { z: 12288.0, l: 8.0, t: 8.0, n_values: vec![0.0, 1024.0] };
        let mut out = Vec::new();
        run_model(&spec, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "n,naive,blocked,prepack");
        assert_eq!(lines[1], "0,0,0,4096");
        let row: Vec<f64> = lines[2].split(',').map(|v| v.parse().unwrap()).collect();
        for (got, want) in row.iter().zip([1024.0, 134217728.0, 6291456.0, 4198400.0]) {
            assert!(((got - want) / want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn model_rejects_bad_line() {
        let spec = ModelSpec { z: 12288.0, l: 0.0, t: 1.0, n_values: vec![1.0] };
        assert!(run_model(&spec, Vec::new()).is_err());
        let empty = ModelSpec { n_values: vec![], l: 8.0, ..spec };
        assert!(run_model(&empty, Vec::new()).is_err());
    }

    #[test]
    fn tune_twice_hits_the_cache() {
        let dir = tempfile::tempdir().unwrap();
        let spec = TuneSpec {
            m: 200,
            k: 64,
            n: 8,
            precision: Precision::Double,
            threads: 2,
            profile: HardwareProfile::fallback(),
            kernel_cache: Some(dir.path().join("kernels.txt")),
            plan_cache: Some(dir.path().join("plans.csv")),
            retune: false,
            trial: TrialConfig::new(0, 3).unwrap(),
            seed: 1,
        };
        let first = run_tune(&spec).unwrap();
        assert!(!first.from_cache);
        assert_eq!(first.n_partitions, 1);
        let second = run_tune(&spec).unwrap();
        assert!(second.from_cache);
        assert_eq!((second.blocking.m_c, second.blocking.k_c), (first.blocking.m_c, first.blocking.k_c));
        assert_eq!(second.kernel, first.kernel);
        let third = run_tune(&TuneSpec { retune: true, ..spec }).unwrap();
        assert!(!third.from_cache);
        assert!(first.to_string().contains("m_c="));
    }

    #[test]
    fn kernel_table_marks_selection() {
        let mut out = Vec::new();
        kernel_report(Precision::Single, &HardwareProfile::fallback(), None, false, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().filter(|l| l.ends_with(",selected")).count(), 1);
        assert!(text.lines().count() > 2);
    }
}
