//! Empirical plan selection: every candidate is spot-checked for
//! correctness, timed, and the fastest survivor wins.

use super::cache::{PlanCache, PlanCacheEntry};
use super::threads::{optimize_threads, thread_candidates};
use super::{design_candidates, gflops, ExecutionPlan, ProblemKey, SearchPattern};
use crate::compute::compute;
use crate::element::Element;
use crate::error::{Result, TsmmError};
use crate::hardware::HardwareProfile;
use crate::kernel::KernelSelection;
use crate::model::{Matrix, Problem, StorageOrder};
use crate::packing::{pack_a, pack_b};
use crate::timing::TrialConfig;

/// Upper bound on plans timed per problem.
pub const MAX_CANDIDATES: usize = 64;

/// Rows and columns of C compared by the spot check.
const SPOT_EXTENT: usize = 64;

pub trait PlanEvaluator<T: Element> {
    /// Whether `plan` reproduces the reference result on sampled entries.
    fn spot_check(&mut self, plan: &ExecutionPlan<T>) -> Result<bool>;
    /// Median compute time of `plan` in seconds, packing excluded.
    fn median_seconds(&mut self, plan: &ExecutionPlan<T>, trial: &TrialConfig) -> Result<f64>;
}

/// Evaluates plans on real operands.
pub struct MeasuredEvaluator<T> {
    problem: Problem<T>,
    a: Matrix<T>,
    b: Matrix<T>,
    c0: Matrix<T>,
    c: Matrix<T>,
}

impl<T: Element> MeasuredEvaluator<T> {
    pub fn new(problem: Problem<T>, a: Matrix<T>, b: Matrix<T>, c: Matrix<T>) -> Result<Self> {
        crate::model::validate_problem(&problem, &a.view(), &b.view(), &c.view())?;
        Ok(Self { problem, a, b, c0: c.clone(), c })
    }

    /// Deterministic operands in `[-1, 1)` for problems without data.
    pub fn synthetic(problem: Problem<T>) -> Self {
        let val = |seed: usize| {
            // Weyl sequence, exact in both precisions.
            let x = (seed as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 40;
            T::from_f64(x as f64 / (1u64 << 23) as f64 - 1.0)
        };
        let (m, n, k) = (problem.m, problem.n, problem.k);
        let a = Matrix::from_fn(m, k, StorageOrder::RowMajor, |i, j| val(i * k + j));
        let b = Matrix::from_fn(k, n, StorageOrder::RowMajor, |i, j| val(m * k + i * n + j));
        let c = Matrix::from_fn(m, n, StorageOrder::RowMajor, |i, j| val(m * k + k * n + i * n + j));
        Self { problem, c0: c.clone(), a, b, c }
    }

    pub fn problem(&self) -> &Problem<T> {
        &self.problem
    }
}

/// Evenly spaced indices in `0..extent`, always including both ends.
fn sample(extent: usize) -> Vec<usize> {
    if extent <= SPOT_EXTENT {
        return (0..extent).collect();
    }
    (0..SPOT_EXTENT).map(|i| i * (extent - 1) / (SPOT_EXTENT - 1)).collect()
}

impl<T: Element> PlanEvaluator<T> for MeasuredEvaluator<T> {
    fn spot_check(&mut self, plan: &ExecutionPlan<T>) -> Result<bool> {
        spot_check_plan(&self.problem, &self.a, &self.b, &self.c0, plan)
    }

    fn median_seconds(&mut self, plan: &ExecutionPlan<T>, trial: &TrialConfig) -> Result<f64> {
        trial.validate()?;
        let p = &self.problem;
        let pa = pack_a(p.alpha, &self.a.view(), plan)?;
        let pb = pack_b(T::one(), &self.b.view(), plan)?;
        let beta = p.beta;
        let mut failure = None;
        let c = &mut self.c;
        let secs = trial.measure(|| {
            if let Err(e) = compute(beta, &mut c.view_mut(), &pa, &pb, plan) {
                failure.get_or_insert(e);
            }
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(secs),
        }
    }
}

/// Runs `plan` on the given operands and compares sampled rows and columns
/// of the result with a direct dot product. `c0` is left untouched.
pub fn spot_check_plan<T: Element>(
    p: &Problem<T>,
    a: &Matrix<T>,
    b: &Matrix<T>,
    c0: &Matrix<T>,
    plan: &ExecutionPlan<T>,
) -> Result<bool> {
    let pa = pack_a(p.alpha, &a.view(), plan)?;
    let pb = pack_b(T::one(), &b.view(), plan)?;
    let mut c = c0.clone();
    compute(p.beta, &mut c.view_mut(), &pa, &pb, plan)?;

    let u = T::PRECISION.unit_roundoff();
    let gamma = 2.0 * (p.k + 2) as f64 * u;
    for i in sample(p.m) {
        for j in sample(p.n) {
            let mut acc = p.beta * c0.get(i, j);
            let mut mag = acc.abs().to_f64();
            for l in 0..p.k {
                let t = (p.alpha * a.get(i, l)) * b.get(l, j);
                acc = acc + t;
                mag += t.abs().to_f64();
            }
            let got = c.get(i, j).to_f64();
            let want = acc.to_f64();
            if got.is_nan() && want.is_nan() {
                continue;
            }
            if !((got - want).abs() <= gamma * mag) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Times every plan that passes the spot check and returns the fastest.
/// Ties go to the larger `m_c`, then the larger `k_c`, then fewer
/// n-partitions.
pub fn evaluate_and_select<T: Element>(
    p: &Problem<T>,
    candidates: Vec<ExecutionPlan<T>>,
    trial: &TrialConfig,
    evaluator: &mut impl PlanEvaluator<T>,
) -> Result<ExecutionPlan<T>> {
    trial.validate()?;
    if candidates.is_empty() {
        return Err(TsmmError::NoCandidates);
    }
    let mut best: Option<ExecutionPlan<T>> = None;
    for mut plan in candidates {
        if !evaluator.spot_check(&plan)? {
            continue;
        }
        let secs = evaluator.median_seconds(&plan, trial)?;
        plan.measured_gflops = if secs > 0.0 { gflops(p, secs)? } else { f64::INFINITY };
        let better = match &best {
            None => true,
            Some(b) => {
                let key = |x: &ExecutionPlan<T>| {
                    (x.blocking.m_c, x.blocking.k_c, std::cmp::Reverse(x.threads.n_partitions))
                };
                plan.measured_gflops > b.measured_gflops
                    || (plan.measured_gflops == b.measured_gflops && key(&plan) > key(b))
            }
        };
        if better {
            best = Some(plan);
        }
    }
    best.ok_or(TsmmError::AllCandidatesRejected)
}

/// Every candidate plan for `p`: each blocking with each thread partition,
/// at most [`MAX_CANDIDATES`] in total.
pub fn candidate_plans<T: Element>(
    p: &Problem<T>,
    hw: &HardwareProfile,
    kernel: &KernelSelection<T>,
) -> Result<Vec<ExecutionPlan<T>>> {
    let key = ProblemKey::from(p);
    let shape = kernel.chosen.shape();
    let mut plans = Vec::new();
    'outer: for blocking in design_candidates(p, hw, kernel)? {
        for (blocking, threads) in thread_candidates(p, &blocking, hw, &shape)? {
            if plans.len() == MAX_CANDIDATES {
                break 'outer;
            }
            plans.push(ExecutionPlan::new(key, blocking, threads, kernel.clone())?);
        }
    }
    Ok(plans)
}

/// Designs, checks and times candidate plans, returning the fastest.
pub fn tune<T: Element>(
    p: &Problem<T>,
    hw: &HardwareProfile,
    kernel: &KernelSelection<T>,
    trial: &TrialConfig,
    evaluator: &mut impl PlanEvaluator<T>,
) -> Result<ExecutionPlan<T>> {
    let plans = candidate_plans(p, hw, kernel)?;
    evaluate_and_select(p, plans, trial, evaluator)
}

/// [`tune`] behind a plan cache. A cached plan is reused when it was made
/// with the same kernel and fits the thread count; `retune` forces a fresh
/// search whose result is appended.
pub fn tune_cached<T: Element>(
    p: &Problem<T>,
    hw: &HardwareProfile,
    kernel: &KernelSelection<T>,
    trial: &TrialConfig,
    evaluator: &mut impl PlanEvaluator<T>,
    cache: &PlanCache,
    retune: bool,
) -> Result<(ExecutionPlan<T>, bool)> {
    let key = ProblemKey::from(p);
    if !retune {
        if let Some(entry) = cache.lookup(&key)? {
            if entry.kernel_name == kernel.chosen.name()
                && entry.n_partitions * entry.m_partitions <= hw.max_threads.max(1)
            {
                if let Ok(plan) = entry.to_plan(kernel.clone(), hw.max_threads.max(1)) {
                    return Ok((plan, true));
                }
            }
        }
    }
    let plan = tune(p, hw, kernel, trial, evaluator)?;
    cache.append(&PlanCacheEntry::from_plan(&plan))?;
    Ok((plan, false))
}

/// Untimed plan: the first neighborhood blocking with the default thread
/// partition.
pub fn default_plan<T: Element>(
    p: &Problem<T>,
    hw: &HardwareProfile,
    kernel: &KernelSelection<T>,
) -> Result<ExecutionPlan<T>> {
    let candidates = design_candidates(p, hw, kernel)?;
    let blocking = candidates
        .iter()
        .find(|b| b.origin == SearchPattern::Neighborhood)
        .or(candidates.first())
        .copied()
        .ok_or_else(|| TsmmError::InfeasibleBlocking("no candidate blocking".into()))?;
    let (blocking, threads) = optimize_threads(p, &blocking, hw, &kernel.chosen.shape())?;
    ExecutionPlan::new(ProblemKey::from(p), blocking, threads, kernel.clone())
}
