//! Plan cache: one CSV record per tuned problem,
//! `m,k,n,precision,m_c,k_c,n_c,m_t,n_partitions,m_partitions,kernel_name,gflops`.
//! Later records override earlier ones for the same problem.

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use super::threads::ThreadPlan;
use super::{BlockingParams, ExecutionPlan, ProblemKey, SearchPattern};
use crate::element::Element;
use crate::error::{Result, TsmmError};
use crate::kernel::KernelSelection;
use crate::model::Precision;

const FIELDS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct PlanCacheEntry {
    pub key: ProblemKey,
    pub m_c: usize,
    pub k_c: usize,
    pub n_c: usize,
    pub m_t: usize,
    pub n_partitions: usize,
    pub m_partitions: usize,
    pub kernel_name: String,
    pub gflops: f64,
}

impl PlanCacheEntry {
    pub fn from_plan<T: Element>(plan: &ExecutionPlan<T>) -> Self {
        Self {
            key: plan.problem,
            m_c: plan.blocking.m_c,
            k_c: plan.blocking.k_c,
            n_c: plan.blocking.n_c,
            m_t: plan.blocking.m_t,
            n_partitions: plan.threads.n_partitions,
            m_partitions: plan.threads.m_partitions,
            kernel_name: plan.kernel.chosen.name().to_string(),
            gflops: plan.measured_gflops,
        }
    }

    /// Rebuilds the plan around `kernel`, which must be the kernel the entry
    /// was tuned with.
    pub fn to_plan<T: Element>(
        &self,
        kernel: KernelSelection<T>,
        total_threads: usize,
    ) -> Result<ExecutionPlan<T>> {
        if kernel.chosen.name() != self.kernel_name {
            return Err(TsmmError::PlanMismatch(format!(
                "cached plan uses {}, selection is {}",
                self.kernel_name,
                kernel.chosen.name()
            )));
        }
        let n_blocks = self.key.n.div_ceil(self.n_c.max(1));
        let n_t = (self.n_partitions > 1).then(|| n_blocks.div_ceil(self.n_partitions) * self.n_c);
        let blocking = BlockingParams {
            m_c: self.m_c,
            k_c: self.k_c,
            n_c: self.n_c,
            m_t: self.m_t,
            n_t,
            origin: SearchPattern::Fixed,
        };
        blocking.check_shape(&kernel.chosen.shape())?;
        let threads =
            ThreadPlan::assign(&self.key, &blocking, total_threads, self.n_partitions, self.m_partitions)?;
        let mut plan = ExecutionPlan::new(self.key, blocking, threads, kernel)?;
        plan.measured_gflops = self.gflops;
        Ok(plan)
    }

    fn record(&self) -> [String; FIELDS] {
        let k = &self.key;
        [
            k.m.to_string(),
            k.k.to_string(),
            k.n.to_string(),
            k.precision.name().to_string(),
            self.m_c.to_string(),
            self.k_c.to_string(),
            self.n_c.to_string(),
            self.m_t.to_string(),
            self.n_partitions.to_string(),
            self.m_partitions.to_string(),
            self.kernel_name.clone(),
            self.gflops.to_string(),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct PlanCache {
    path: PathBuf,
}

impl PlanCache {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn format_error(&self, message: String) -> TsmmError {
        TsmmError::CacheFormat { path: self.path.clone(), message }
    }

    pub fn entries(&self) -> Result<Vec<PlanCacheEntry>> {
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
        for (idx, record) in reader.records().enumerate() {
            let line = idx + 1;
            let record = record.map_err(|e| self.format_error(e.to_string()))?;
            if record.len() != FIELDS {
                return Err(self.format_error(format!(
                    "record {line} has {} fields, expected {FIELDS}",
                    record.len()
                )));
            }
            let num = |i: usize| -> Result<usize> {
                record[i]
                    .parse()
                    .map_err(|_| self.format_error(format!("record {line}: bad integer `{}`", &record[i])))
            };
            let precision = Precision::parse(&record[3])
                .ok_or_else(|| self.format_error(format!("record {line}: unknown precision `{}`", &record[3])))?;
            let gflops = record[11]
                .parse()
                .map_err(|_| self.format_error(format!("record {line}: bad gflops `{}`", &record[11])))?;
            out.push(PlanCacheEntry {
                key: ProblemKey { m: num(0)?, k: num(1)?, n: num(2)?, precision },
                m_c: num(4)?,
                k_c: num(5)?,
                n_c: num(6)?,
                m_t: num(7)?,
                n_partitions: num(8)?,
                m_partitions: num(9)?,
                kernel_name: record[10].to_string(),
                gflops,
            });
        }
        Ok(out)
    }

    pub fn lookup(&self, key: &ProblemKey) -> Result<Option<PlanCacheEntry>> {
        Ok(self.entries()?.into_iter().rev().find(|e| e.key == *key))
    }

    pub fn append(&self, entry: &PlanCacheEntry) -> Result<()> {
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&self.path)?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        w.write_record(entry.record()).map_err(|e| self.format_error(e.to_string()))?;
        w.flush()?;
        Ok(())
    }
}
