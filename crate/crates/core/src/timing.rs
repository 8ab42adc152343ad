//! Repetition protocol shared by the kernel selector and the plan evaluator.

use std::time::Instant;

use crate::error::{Result, TsmmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialConfig {
    pub warmups: usize,
    pub repetitions: usize,
    pub statistic: Statistic,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self { warmups: 3, repetitions: 7, statistic: Statistic::Median }
    }
}

impl TrialConfig {
    pub fn new(warmups: usize, repetitions: usize) -> Result<Self> {
        let trial = Self { warmups, repetitions, statistic: Statistic::Median };
        trial.validate()?;
        Ok(trial)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 3 {
            return Err(TsmmError::InvalidTrial(format!(
                "at least 3 repetitions required, got {}",
                self.repetitions
            )));
        }
        Ok(())
    }

    /// Runs `f` for the warmups, then times each repetition and reduces the
    /// samples with the configured statistic. Returns seconds.
    pub fn measure(&self, mut f: impl FnMut()) -> f64 {
        for _ in 0..self.warmups {
            f();
        }
        let mut samples: Vec<f64> = (0..self.repetitions.max(1))
            .map(|_| {
                let start = Instant::now();
                f();
                start.elapsed().as_secs_f64()
            })
            .collect();
        match self.statistic {
            Statistic::Median => median(&mut samples),
        }
    }
}

/// Median of the samples; the mean of the two middle values for even counts.
/// Returns NaN when empty.
pub fn median(samples: &mut [f64]) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    samples.sort_by(f64::total_cmp);
    let mid = samples.len() / 2;
    if samples.len() % 2 == 1 {
        samples[mid]
    } else {
        0.5 * (samples[mid - 1] + samples[mid])
    }
}
