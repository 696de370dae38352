//! Online and windowed statistics.
//!
//! [`RunningStats`] keeps a Welford accumulator (count, mean, sum of squared deviations).
//! Variance is always the sample variance with an `n - 1` denominator.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::scalar::Real;

/// Single-pass mean and variance accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunningStats<T = f64> {
    count: u64,
    mean: T,
    m2: T,
}

impl<T: Real> Default for RunningStats<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> RunningStats<T> {
    pub fn new() -> Self {
        Self { count: 0, mean: T::zero(), m2: T::zero() }
    }

    /// Accumulates every value of `values`.
    pub fn from_values<I: IntoIterator<Item = T>>(values: I) -> Result<Self> {
        values.into_iter().try_fold(Self::new(), |s, x| welford_update(s, x))
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> T {
        self.mean
    }

    pub fn m2(&self) -> T {
        self.m2
    }

    /// In-place Welford update. Non-finite values are rejected and leave the state untouched.
    pub fn push(&mut self, x: T) -> Result<()> {
        *self = welford_update(*self, x)?;
        Ok(())
    }

    /// Sample variance, defined for two or more values.
    pub fn variance(&self) -> Result<T> {
        if self.count < 2 {
            return Err(Error::Input(format!(
                "variance needs at least 2 samples, have {}",
                self.count
            )));
        }
        Ok(self.m2 / T::lit((self.count - 1) as f64))
    }

    pub fn std_dev(&self) -> Result<T> {
        self.variance().map(T::sqrt)
    }
}

/// Welford recurrence: returns the state after observing `x`.
pub fn welford_update<T: Real>(state: RunningStats<T>, x: T) -> Result<RunningStats<T>> {
    ensure_finite(x, "sample")?;
    let count = state.count + 1;
    let delta = x - state.mean;
    let mean = state.mean + delta / T::lit(count as f64);
    let m2 = state.m2 + delta * (x - mean);
    // (x - old_mean)(x - new_mean) is non-negative in exact arithmetic; clamp rounding residue.
    Ok(RunningStats { count, mean, m2: m2.max(T::zero()) })
}

/// Mean and sample variance of one time window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStat<T = f64> {
    pub start_ms: i64,
    pub count: usize,
    pub mean: T,
    pub variance: T,
}

/// Partitions a timestamped series into consecutive windows of `window_ms` starting at the
/// first timestamp, returning mean and sample variance per window.
///
/// Windows holding fewer than two samples (including a short trailing window) are skipped.
pub fn window_stats<T: Real>(
    values: &[T],
    timestamps: &[i64],
    window_ms: i64,
) -> Result<Vec<WindowStat<T>>> {
    if window_ms <= 0 {
        return Err(Error::Config(format!("window must be positive, got {window_ms} ms")));
    }
    if values.len() != timestamps.len() {
        return Err(Error::Input(format!(
            "{} values but {} timestamps",
            values.len(),
            timestamps.len()
        )));
    }
    if values.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::Input(format!(
            "timestamps must be strictly increasing (index {})",
            i + 1
        )));
    }

    let origin = timestamps[0];
    let mut out = Vec::new();
    let mut current: Option<(i64, RunningStats<T>)> = None;
    for (&x, &ts) in values.iter().zip(timestamps) {
        let idx = (ts - origin) / window_ms;
        match current.as_mut() {
            Some((w, stats)) if *w == idx => stats.push(x)?,
            _ => {
                if let Some((w, stats)) = current.take() {
                    push_window(&mut out, origin + w * window_ms, &stats);
                }
                current = Some((idx, RunningStats::from_values([x])?));
            }
        }
    }
    if let Some((w, stats)) = current {
        push_window(&mut out, origin + w * window_ms, &stats);
    }
    Ok(out)
}

fn push_window<T: Real>(out: &mut Vec<WindowStat<T>>, start_ms: i64, stats: &RunningStats<T>) {
    if let Ok(variance) = stats.variance() {
        out.push(WindowStat { start_ms, count: stats.count() as usize, mean: stats.mean(), variance });
    }
}

/// Order-statistic median (mean of the two central values for even lengths).
pub fn median<T: Real>(values: &[T]) -> Result<T> {
    if values.is_empty() {
        return Err(Error::Input("median of empty input".into()));
    }
    if let Some(x) = values.iter().find(|x| !x.is_finite()) {
        return Err(Error::Input(format!("median input must be finite, got {x:?}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values are ordered"));
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / T::lit(2.0)
    })
}

/// Median absolute deviation from the median, without a consistency constant.
pub fn mad<T: Real>(values: &[T]) -> Result<T> {
    let m = median(values)?;
    let deviations: Vec<T> = values.iter().map(|&x| (x - m).abs()).collect();
    median(&deviations)
}

/// Median and MAD in one pass over a sorted copy.
pub fn median_mad<T: Real>(values: &[T]) -> Result<(T, T)> {
    let m = median(values)?;
    let deviations: Vec<T> = values.iter().map(|&x| (x - m).abs()).collect();
    Ok((m, median(&deviations)?))
}
