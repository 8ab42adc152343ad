use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsmm::planner::PlanCache;
use tsmm::timing::median;
use tsmm::*;

use crate::{BenchError, Result};

/// Column order of the benchmark CSV.
pub const CSV_HEADER: [&str; 10] =
    ["mode", "m", "k", "n", "reps", "pack_s", "compute_s", "gflops", "pack_fraction", "plan"];

/// Problems above this many flops in total are refused in naive mode.
const NAIVE_FLOP_CAP: f64 = 1e12;
/// Rows and columns of C compared against the reference after the first call.
const CHECK_EXTENT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Pack once, then multiply `reps` times.
    Prepack,
    /// Pack both operands inside every call.
    PackPerCall,
    /// Triple loop, no packing.
    Naive,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "prepack" => Ok(Mode::Prepack),
            "packpercall" => Ok(Mode::PackPerCall),
            "naive" => Ok(Mode::Naive),
            _ => Err(format!("unknown mode `{s}` (expected prepack, pack-per-call or naive)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Prepack => "prepack",
            Mode::PackPerCall => "pack-per-call",
            Mode::Naive => "naive",
        })
    }
}

/// How the execution plan for each problem is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanSource {
    /// First neighborhood blocking with the default thread split, untimed.
    Heuristic,
    /// Empirical search, optionally behind a plan cache file.
    Tuned { cache: Option<PathBuf>, retune: bool, trial: TrialConfig },
}

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub m: usize,
    pub k: usize,
    pub n_list: Vec<usize>,
    pub precision: Precision,
    pub reps: usize,
    pub threads: usize,
    pub mode: Mode,
    pub seed: u64,
    pub profile: HardwareProfile,
    /// Kernel cache file; kernels are timed afresh when absent.
    pub kernel_cache: Option<PathBuf>,
    pub retune_kernel: bool,
    pub plan: PlanSource,
    /// Writes the packed A and B of the first call here.
    pub dump_packed: Option<PathBuf>,
}

impl BenchSpec {
    pub fn new(m: usize, k: usize, n_list: Vec<usize>) -> Self {
        let profile = HardwareProfile::probe();
        Self {
            m,
            k,
            n_list,
            precision: Precision::Single,
            reps: 200,
            threads: profile.max_threads,
            mode: Mode::Prepack,
            seed: 42,
            profile,
            kernel_cache: None,
            retune_kernel: false,
            plan: PlanSource::Heuristic,
            dump_packed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Spec(m));
        if self.m == 0 || self.k == 0 {
            return bad(format!("m = {} and k = {} must be positive", self.m, self.k));
        }
        if self.n_list.is_empty() {
            return bad("n list is empty".into());
        }
        if self.n_list.contains(&0) {
            return bad("n must be positive".into());
        }
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        if self.mode == Mode::Naive {
            for &n in &self.n_list {
                let flops = 2.0 * self.m as f64 * n as f64 * self.k as f64 * self.reps as f64;
                if flops > NAIVE_FLOP_CAP {
                    return bad(format!("naive run at n = {n} needs {flops:.3e} flops, cap is {NAIVE_FLOP_CAP:.0e}"));
                }
            }
        }
        self.profile.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub mode: Mode,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub reps: usize,
    /// Total packing time over the run.
    pub pack_seconds: f64,
    /// Total multiplication time over the run.
    pub compute_seconds: f64,
    /// Median time of one multiplication.
    pub compute_median_seconds: f64,
    /// Throughput from the median multiplication time, packing excluded.
    pub gflops: f64,
    pub packing_fraction: f64,
    pub plan: String,
}

impl BenchRecord {
    pub fn total_seconds(&self) -> f64 {
        self.pack_seconds + self.compute_seconds
    }

    fn fields(&self) -> [String; 10] {
        [
            self.mode.to_string(),
            self.m.to_string(),
            self.k.to_string(),
            self.n.to_string(),
            self.reps.to_string(),
            format!("{:.6e}", self.pack_seconds),
            format!("{:.6e}", self.compute_seconds),
            format!("{:.4}", self.gflops),
            format!("{:.6}", self.packing_fraction),
            self.plan.clone(),
        ]
    }
}

pub fn write_csv(records: &[BenchRecord], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in records {
        out.write_record(r.fields())?;
    }
    out.flush()?;
    Ok(())
}

/// `rows x cols` row-major matrix of uniform values in `[-1, 1)`.
pub fn seeded_matrix<T: Element>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<T> {
    Matrix::from_fn(rows, cols, StorageOrder::RowMajor, |_, _| T::from_f64(rng.gen_range(-1.0..1.0)))
}

pub fn run_bench(spec: &BenchSpec) -> Result<Vec<BenchRecord>> {
    spec.validate()?;
    match spec.precision {
        Precision::Single => run_typed::<f32>(spec),
        Precision::Double => run_typed::<f64>(spec),
    }
}

fn select<T: Element>(spec: &BenchSpec, hw: &HardwareProfile) -> Result<KernelSelection<T>> {
    let catalog = KernelCatalog::<T>::standard(hw);
    let cache = spec.kernel_cache.as_ref().map(KernelCache::new);
    let trial = TrialConfig::default();
    Ok(install_kernel(&catalog, hw, &trial, &mut WallClockTimer, cache.as_ref(), spec.retune_kernel)?)
}

fn plan_for<T: Element>(
    spec: &BenchSpec,
    p: &Problem<T>,
    hw: &HardwareProfile,
    kernel: &KernelSelection<T>,
    a: &Matrix<T>,
    b: &Matrix<T>,
) -> Result<ExecutionPlan<T>> {
    match &spec.plan {
        PlanSource::Heuristic => Ok(default_plan(p, hw, kernel)?),
        PlanSource::Tuned { cache, retune, trial } => {
            let c = Matrix::filled(p.m, p.n, StorageOrder::RowMajor, T::zero());
            let mut ev = MeasuredEvaluator::new(*p, a.clone(), b.clone(), c)?;
            Ok(match cache {
                Some(path) => tune_cached(p, hw, kernel, trial, &mut ev, &PlanCache::new(path), *retune)?.0,
                None => tune(p, hw, kernel, trial, &mut ev)?,
            })
        }
    }
}

fn dump_path(base: &Path, n: usize, several: bool) -> PathBuf {
    if !several {
        return base.to_path_buf();
    }
    let mut name = base.as_os_str().to_owned();
    name.push(format!(".n{n}"));
    name.into()
}

fn dump(path: &Path, pa: &PackedBuffer<impl Element>, pb: &PackedBuffer<impl Element>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    pa.write_to(&mut w)?;
    pb.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Compares the leading rows and columns of `c` with the reference over the
/// full depth. The run uses `alpha = 1`, `beta = 0`.
fn check<T: Element>(p: &Problem<T>, a: &Matrix<T>, b: &Matrix<T>, c: &Matrix<T>) -> Result<()> {
    let rows = p.m.min(CHECK_EXTENT);
    let cols = p.n.min(CHECK_EXTENT);
    let sub = Problem::new(rows, cols, p.k, p.alpha, p.beta)?;
    let mut want = Matrix::filled(rows, cols, StorageOrder::RowMajor, T::zero());
    naive_gemm(&sub, &a.view().crop(rows, p.k)?, &b.view().crop(p.k, cols)?, &mut want.view_mut())?;
    let eps = 2.0 * T::PRECISION.unit_roundoff();
    let tol = 8.0 * p.k as f64 * eps;
    for i in 0..rows {
        for j in 0..cols {
            let (got, exp) = (c.get(i, j).to_f64(), want.get(i, j).to_f64());
            if !((got - exp).abs() <= tol) {
                return Err(BenchError::OracleMismatch(format!(
                    "m={} k={} n={}: C[{i},{j}] = {got}, reference {exp}",
                    p.m, p.k, p.n
                )));
            }
        }
    }
    Ok(())
}

fn run_typed<T: Element>(spec: &BenchSpec) -> Result<Vec<BenchRecord>> {
    let hw = spec.profile.with_threads(spec.threads);
    let kernel = match spec.mode {
        Mode::Naive => None,
        _ => Some(select::<T>(spec, &hw)?),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let a = seeded_matrix::<T>(&mut rng, spec.m, spec.k);
    let mut records = Vec::with_capacity(spec.n_list.len());

    for &n in &spec.n_list {
        let b = seeded_matrix::<T>(&mut rng, spec.k, n);
        let p = Problem::new(spec.m, n, spec.k, T::one(), T::zero())?;
        let mut c = Matrix::filled(spec.m, n, StorageOrder::RowMajor, T::zero());
        let mut compute_times = Vec::with_capacity(spec.reps);
        let mut pack_seconds = 0.0;
        let plan_summary;

        match (&kernel, spec.mode) {
            (None, _) | (_, Mode::Naive) => {
                plan_summary = "naive".to_string();
                for rep in 0..spec.reps {
                    let t = Instant::now();
                    naive_gemm(&p, &a.view(), &b.view(), &mut c.view_mut())?;
                    compute_times.push(t.elapsed().as_secs_f64());
                    if rep == 0 {
                        check(&p, &a, &b, &c)?;
                    }
                }
            }
            (Some(kernel), mode) => {
                let plan = plan_for(spec, &p, &hw, kernel, &a, &b)?;
                plan_summary = plan.summary();
                let mut packed = None;
                for rep in 0..spec.reps {
                    if mode == Mode::PackPerCall || packed.is_none() {
                        let t = Instant::now();
                        let pa = pack_a(p.alpha, &a.view(), &plan)?;
                        let pb = pack_b(T::one(), &b.view(), &plan)?;
                        pack_seconds += t.elapsed().as_secs_f64();
                        packed = Some((pa, pb));
                    }
                    let (pa, pb) = packed.as_ref().expect("packed above");
                    let t = Instant::now();
                    compute(p.beta, &mut c.view_mut(), pa, pb, &plan)?;
                    compute_times.push(t.elapsed().as_secs_f64());
                    if rep == 0 {
                        check(&p, &a, &b, &c)?;
                        if let Some(base) = &spec.dump_packed {
                            dump(&dump_path(base, n, spec.n_list.len() > 1), pa, pb)?;
                        }
                    }
                }
            }
        }

        let compute_seconds: f64 = compute_times.iter().sum();
        let compute_median = median(&mut compute_times);
        let total = pack_seconds + compute_seconds;
        let record = BenchRecord {
            mode: spec.mode,
            m: spec.m,
            k: spec.k,
            n,
            reps: spec.reps,
            pack_seconds,
            compute_seconds,
            compute_median_seconds: compute_median,
            gflops: gflops_for(spec.m, n, spec.k, compute_median.max(1e-9))?,
            packing_fraction: if total > 0.0 { pack_seconds / total } else { 0.0 },
            plan: plan_summary,
        };
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(mode: Mode, n_list: Vec<usize>) -> BenchSpec {
        BenchSpec {
            mode,
            reps: 3,
            threads: 1,
            profile: HardwareProfile::fallback(),
            ..BenchSpec::new(64, 48, n_list)
        }
    }

    #[test]
    fn modes_parse_and_print() {
        for mode in [Mode::Prepack, Mode::PackPerCall, Mode::Naive] {
            assert_eq!(mode.to_string().parse::<Mode>().unwrap(), mode);
        }
        assert_eq!("PACK_PER_CALL".parse::<Mode>().unwrap(), Mode::PackPerCall);
        assert!("blas".parse::<Mode>().is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(spec(Mode::Prepack, vec![]).validate().is_err());
        assert!(spec(Mode::Prepack, vec![0]).validate().is_err());
        assert!(BenchSpec { reps: 0, ..spec(Mode::Prepack, vec![4]) }.validate().is_err());
        let big = BenchSpec { m: 25600, k: 25600, reps: 200, ..spec(Mode::Naive, vec![16]) };
        assert!(matches!(big.validate(), Err(BenchError::Spec(_))));
        assert!(BenchSpec { mode: Mode::Prepack, ..big }.validate().is_ok());
    }

    #[test]
    fn records_cover_every_mode() {
        for mode in [Mode::Prepack, Mode::PackPerCall, Mode::Naive] {
            let recs = run_bench(&spec(mode, vec![1, 5])).unwrap();
            assert_eq!(recs.len(), 2);
            for r in &recs {
                assert!(r.gflops > 0.0);
                assert!((0.0..=1.0).contains(&r.packing_fraction));
                assert_eq!(r.pack_seconds == 0.0, mode == Mode::Naive);
            }
        }
    }

    #[test]
    fn csv_has_fixed_header() {
        let recs = run_bench(&spec(Mode::Prepack, vec![3])).unwrap();
        let mut out = Vec::new();
        write_csv(&recs, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "mode,m,k,n,reps,pack_s,compute_s,gflops,pack_fraction,plan");
        assert!(lines.next().unwrap().starts_with("prepack,64,48,3,3,"));
    }

    #[test]
    fn seeded_matrices_repeat() {
        let draw = |seed| seeded_matrix::<f64>(&mut ChaCha8Rng::seed_from_u64(seed), 5, 7);
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
        assert!(draw(1).as_slice().iter().all(|v| (-1.0..1.0).contains(v)));
    }

    #[test]
    fn dump_writes_both_operands() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("packed.bin");
        let s = BenchSpec { dump_packed: Some(path.clone()), ..spec(Mode::Prepack, vec![6]) };
        run_bench(&s).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let mut cursor = bytes.as_slice();
        let pa = PackedBuffer::<f32>::read_from(&mut cursor).unwrap();
        let pb = PackedBuffer::<f32>::read_from(&mut cursor).unwrap();
        assert_eq!((pa.which, pb.which), (Side::A, Side::B));
        assert_eq!(pa.unpack().unwrap().rows(), 64);
        assert_eq!(pb.unpack().unwrap().cols(), 6);
    }
}
