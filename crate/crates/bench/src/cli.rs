//! `tsmm` command line.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tsmm::{load_hardware_profile, HardwareProfile, Precision, ProfileSource, TrialConfig};

use crate::{
    default_cache_dir, kernel_report, run_bench, run_model, run_tune, write_csv, BenchError, BenchSpec,
    Mode, ModelSpec, PlanSource, Result, TuneSpec, EXIT_BAD_INPUT,
};

#[derive(Debug, Parser)]
#[command(name = "tsmm", version, about = "Tall-and-skinny matrix multiplication benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time pre-packed, pack-per-call or naive multiplication and emit CSV.
    Bench(BenchArgs),
    /// Search for the best execution plan and store it in the plan cache.
    Tune(TuneArgs),
    /// Print cache-miss estimates for square problems as CSV.
    Model(ModelArgs),
    /// List the kernel catalog and the kernel selected for this machine.
    Kernels(KernelArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Element type: f32 or f64.
    #[arg(long, default_value = "f32", value_parser = parse_precision)]
    pub dtype: Precision,
    /// Worker threads (default: all logical cores).
    #[arg(long, env = "TSMM_THREADS")]
    pub threads: Option<usize>,
    /// Hardware profile file (`key = value` lines); probed when omitted.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Directory for the kernel and plan caches.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Ignore cached results and measure again.
    #[arg(long)]
    pub retune: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 2048)]
    pub m: usize,
    #[arg(long, default_value_t = 2048)]
    pub k: usize,
    /// Single n; overrides --n-list.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128,240")]
    pub n_list: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    /// prepack, pack-per-call or naive.
    #[arg(long, default_value = "prepack")]
    pub mode: Mode,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Tune each problem instead of using the heuristic plan.
    #[arg(long)]
    pub tune: bool,
    /// Save the packed A and B of the first call.
    #[arg(long)]
    pub dump_packed: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub n: usize,
    /// Timed repetitions per candidate plan.
    #[arg(long, default_value_t = 7)]
    pub reps: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Cache size in elements (default: L2 of the profile).
    #[arg(long)]
    pub z: Option<f64>,
    /// Cache line in elements (default: line of the profile).
    #[arg(long)]
    pub l: Option<f64>,
    /// Threads (default: logical cores of the profile).
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,256,512,1024,2048,4096,8192")]
    pub n_list: Vec<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[command(flatten)]
    pub common: Common,
}

fn parse_precision(s: &str) -> std::result::Result<Precision, String> {
    Precision::parse(s).ok_or_else(|| format!("unknown dtype `{s}` (expected f32 or f64)"))
}

impl Common {
    fn profile(&self) -> Result<HardwareProfile> {
        let source = match &self.profile {
            Some(path) => ProfileSource::File(path.clone()),
            None => ProfileSource::Probe,
        };
        let hw = load_hardware_profile(&source)?;
        Ok(match self.threads {
            Some(0) => return Err(BenchError::Spec("threads must be at least 1".into())),
            Some(t) => hw.with_threads(t),
            None => hw,
        })
    }

    fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(default_cache_dir)
    }

    fn kernel_cache(&self) -> PathBuf {
        self.cache_dir().join("kernels.txt")
    }

    fn plan_cache(&self) -> PathBuf {
        self.cache_dir().join("plans.csv")
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_BAD_INPUT;
            }
            let _ = write!(out, "{e}");
            return 0;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match command {
        Command::Bench(a) => {
            let profile = a.common.profile()?;
            let spec = BenchSpec {
                m: a.m,
                k: a.k,
                n_list: a.n.map_or(a.n_list.clone(), |n| vec![n]),
                precision: a.common.dtype,
                reps: a.reps,
                threads: profile.max_threads,
                mode: a.mode,
                seed: a.seed,
                kernel_cache: Some(a.common.kernel_cache()),
                retune_kernel: a.common.retune,
                plan: if a.tune {
                    PlanSource::Tuned {
                        cache: Some(a.common.plan_cache()),
                        retune: a.common.retune,
                        trial: TrialConfig::default(),
                    }
                } else {
                    PlanSource::Heuristic
                },
                dump_packed: a.dump_packed.clone(),
                profile,
            };
            let records = run_bench(&spec)?;
            for r in &records {
                writeln!(
                    err,
                    "{} n={}: median {:.3e} s, total {:.3e} s, {:.2} GFlops, packing {:.1}%",
                    r.mode,
                    r.n,
                    r.compute_median_seconds,
                    r.total_seconds(),
                    r.gflops,
                    100.0 * r.packing_fraction
                )?;
            }
            match &a.csv {
                Some(path) => write_csv(&records, File::create(path)?),
                None => write_csv(&records, out),
            }
        }
        Command::Tune(a) => {
            let profile = a.common.profile()?;
            let spec = TuneSpec {
                m: a.m,
                k: a.k,
                n: a.n,
                precision: a.common.dtype,
                threads: profile.max_threads,
                kernel_cache: Some(a.common.kernel_cache()),
                plan_cache: Some(a.common.plan_cache()),
                retune: a.common.retune,
                trial: TrialConfig { repetitions: a.reps, ..TrialConfig::default() },
                seed: a.seed,
                profile,
            };
            let report = run_tune(&spec)?;
            writeln!(out, "{report}")?;
            Ok(())
        }
        Command::Model(a) => {
            let hw = a.common.profile()?;
            let fp = a.common.dtype.fp_size() as f64;
            let spec = ModelSpec {
                z: a.z.unwrap_or(hw.l2_bytes as f64 / fp),
                l: a.l.unwrap_or(hw.cache_line_bytes as f64 / fp),
                t: a.t.unwrap_or(hw.max_threads as f64),
                n_values: a.n_list,
            };
            run_model(&spec, out)
        }
        Command::Kernels(a) => {
            let hw = a.common.profile()?;
            kernel_report(a.common.dtype, &hw, Some(a.common.kernel_cache()), a.common.retune, out)
        }
    }
}

/// Entry point used by the binary.
pub fn main() -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
