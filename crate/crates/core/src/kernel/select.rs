//! Install-time kernel selection: time every candidate on one synthetic
//! block-times-panel product and keep the fastest, persisting the choice per
//! hardware fingerprint.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{KernelCatalog, KernelShape, Microkernel};
use crate::element::Element;
use crate::error::{Result, TsmmError};
use crate::hardware::HardwareProfile;
use crate::timing::TrialConfig;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// The packed `m x k` by `k x n` product every candidate is timed on.
/// Sizes are common multiples of all candidate tiles so every candidate
/// performs identical work, and they respect both cache constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GebbWorkload {
    pub m: usize,
    pub k: usize,
    pub n: usize,
}

impl GebbWorkload {
    pub fn for_shapes(shapes: &[KernelShape], profile: &HardwareProfile, fp_size: usize) -> Self {
        let m_step = shapes.iter().fold(1, |acc, s| lcm(acc, s.m_r));
        let n = shapes.iter().fold(1, |acc, s| lcm(acc, s.n_r));
        let k_step = shapes.iter().fold(1, |acc, s| lcm(acc, s.k_unroll));
        let l1_elems = profile.l1d_bytes / fp_size;
        let l2_half = profile.l2_bytes / (2 * fp_size);
        let k = (l1_elems / n / k_step * k_step).max(k_step);
        let m = (l2_half / k / m_step * m_step).max(m_step);
        Self { m, k, n }
    }

    pub fn flops(&self) -> f64 {
        2.0 * self.m as f64 * self.k as f64 * self.n as f64
    }
}

/// Produces the median seconds of one workload sweep for a kernel.
/// Injectable so selection can be tested deterministically.
pub trait KernelTimer<T> {
    fn median_seconds(
        &mut self,
        kernel: &Microkernel<T>,
        work: &GebbWorkload,
        trial: &TrialConfig,
    ) -> f64;
}

/// Times kernels with the monotonic clock.
#[derive(Debug, Default, Clone, Copy)]
pub struct WallClockTimer;

impl<T: Element> KernelTimer<T> for WallClockTimer {
    fn median_seconds(
        &mut self,
        kernel: &Microkernel<T>,
        work: &GebbWorkload,
        trial: &TrialConfig,
    ) -> f64 {
        let s = kernel.shape();
        let pattern = |i: usize| T::from_f64(((i * 7919) % 2003) as f64 / 1001.5 - 1.0);
        let a: Vec<T> = (0..work.m * work.k).map(pattern).collect();
        let b: Vec<T> = (0..work.k * work.n).map(|i| pattern(i + 17)).collect();
        let m_panels = work.m / s.m_r;
        let n_panels = work.n / s.n_r;
        let mut c = vec![T::zero(); m_panels * n_panels * s.tile_len()];
        trial.measure(|| {
            let mut tiles = c.chunks_exact_mut(s.tile_len());
            for bp in b.chunks_exact(s.n_r * work.k) {
                for ap in a.chunks_exact(s.m_r * work.k) {
                    let tile = tiles.next().expect("one tile per panel pair");
                    kernel.run(work.k, ap, bp, tile, false);
                }
            }
            std::hint::black_box(&mut c);
        })
    }
}

#[derive(Debug, Clone)]
pub struct KernelSelection<T> {
    pub chosen: Microkernel<T>,
    /// `(kernel name, GFlops)` for every timed candidate.
    pub measured_gflops: Vec<(String, f64)>,
    pub profile_fingerprint: String,
}

impl<T: Element> KernelSelection<T> {
    /// A selection that was made without timing, e.g. for tests or when
    /// the caller pins a kernel.
    pub fn fixed(kernel: Microkernel<T>, profile: &HardwareProfile) -> Self {
        Self {
            chosen: kernel,
            measured_gflops: Vec::new(),
            profile_fingerprint: profile.fingerprint(T::PRECISION),
        }
    }

    /// Throughput recorded for the chosen kernel, 0 when untimed.
    pub fn gflops(&self) -> f64 {
        self.measured_gflops
            .iter()
            .find(|(name, _)| name == self.chosen.name())
            .map_or(0.0, |(_, g)| *g)
    }
}

/// Picks the fastest kernel that fits the register budget. Ties go to the
/// larger tile area, then the taller tile.
pub fn select_kernel<T: Element>(
    catalog: &KernelCatalog<T>,
    profile: &HardwareProfile,
    trial: &TrialConfig,
    timer: &mut impl KernelTimer<T>,
) -> Result<KernelSelection<T>> {
    trial.validate()?;
    let candidates: Vec<&Microkernel<T>> = catalog
        .entries()
        .iter()
        .filter(|k| k.shape().check_budget(profile, T::PRECISION).is_ok())
        .collect();
    if candidates.is_empty() {
        return Err(TsmmError::NoValidKernel);
    }
    let shapes: Vec<KernelShape> = candidates.iter().map(|k| k.shape()).collect();
    let work = GebbWorkload::for_shapes(&shapes, profile, T::PRECISION.fp_size());

    let mut measured = Vec::with_capacity(candidates.len());
    let mut best: Option<(usize, f64)> = None;
    for (idx, kernel) in candidates.iter().enumerate() {
        let secs = timer.median_seconds(kernel, &work, trial);
        let gflops = if secs > 0.0 { work.flops() * 1e-9 / secs } else { f64::INFINITY };
        measured.push((kernel.name().to_string(), gflops));
        let better = match best {
            None => true,
            Some((b, bg)) => {
                let (s, bs) = (kernel.shape(), candidates[b].shape());
                gflops > bg
                    || (gflops == bg
                        && (s.tile_len(), s.m_r) > (bs.tile_len(), bs.m_r))
            }
        };
        if better {
            best = Some((idx, gflops));
        }
    }
    let (idx, _) = best.expect("non-empty candidates");
    Ok(KernelSelection {
        chosen: candidates[idx].clone(),
        measured_gflops: measured,
        profile_fingerprint: profile.fingerprint(T::PRECISION),
    })
}

/// One line of the kernel cache file.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelCacheEntry {
    pub fingerprint: String,
    pub kernel_name: String,
    pub shape: KernelShape,
    pub gflops: f64,
}

/// Line-oriented kernel cache:
/// `fingerprint, kernel_name, m_r, n_r, k_unroll, gflops`. Later lines
/// override earlier ones for the same fingerprint.
#[derive(Debug, Clone)]
pub struct KernelCache {
    path: PathBuf,
}

impl KernelCache {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn format_error(&self, message: String) -> TsmmError {
        TsmmError::CacheFormat { path: self.path.clone(), message }
    }

    pub fn entries(&self) -> Result<Vec<KernelCacheEntry>> {
        if !self.path.exists() {
            return Ok(Vec::new());
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(&self.path)
            .map_err(|e| self.format_error(e.to_string()))?;
        let mut out = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| self.format_error(e.to_string()))?;
            if record.len() != 6 {
                return Err(self.format_error(format!(
                    "record {} has {} fields, expected 6",
                    line + 1,
                    record.len()
                )));
            }
            let num = |i: usize| -> Result<usize> {
                record[i]
                    .parse()
                    .map_err(|_| self.format_error(format!("record {}: bad integer `{}`", line + 1, &record[i])))
            };
            let shape = KernelShape::new(num(2)?, num(3)?, num(4)?)?;
            let gflops = record[5]
                .parse()
                .map_err(|_| self.format_error(format!("record {}: bad gflops", line + 1)))?;
            out.push(KernelCacheEntry {
                fingerprint: record[0].to_string(),
                kernel_name: record[1].to_string(),
                shape,
                gflops,
            });
        }
        Ok(out)
    }

    pub fn lookup(&self, fingerprint: &str) -> Result<Option<KernelCacheEntry>> {
        Ok(self.entries()?.into_iter().rev().find(|e| e.fingerprint == fingerprint))
    }

    pub fn append(&self, entry: &KernelCacheEntry) -> Result<()> {
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&self.path)?;
        writeln!(
            file,
            "{}, {}, {}, {}, {}, {}",
            entry.fingerprint,
            entry.kernel_name,
            entry.shape.m_r,
            entry.shape.n_r,
            entry.shape.k_unroll,
            entry.gflops
        )?;
        Ok(())
    }
}

/// Serves the selection from `cache` when it holds a usable entry for this
/// profile, otherwise selects and records the result.
pub fn install_kernel<T: Element>(
    catalog: &KernelCatalog<T>,
    profile: &HardwareProfile,
    trial: &TrialConfig,
    timer: &mut impl KernelTimer<T>,
    cache: Option<&KernelCache>,
    retune: bool,
) -> Result<KernelSelection<T>> {
    let fingerprint = profile.fingerprint(T::PRECISION);
    if let (Some(cache), false) = (cache, retune) {
        if let Some(entry) = cache.lookup(&fingerprint)? {
            let hit = catalog.find(&entry.kernel_name).filter(|k| {
                k.shape() == entry.shape && k.shape().check_budget(profile, T::PRECISION).is_ok()
            });
            if let Some(kernel) = hit {
                return Ok(KernelSelection {
                    chosen: kernel.clone(),
                    measured_gflops: vec![(entry.kernel_name, entry.gflops)],
                    profile_fingerprint: fingerprint,
                });
            }
        }
    }
    let selection = select_kernel(catalog, profile, trial, timer)?;
    if let Some(cache) = cache {
        cache.append(&KernelCacheEntry {
            fingerprint,
            kernel_name: selection.chosen.name().to_string(),
            shape: selection.chosen.shape(),
            gflops: selection.gflops(),
        })?;
    }
    Ok(selection)
}
