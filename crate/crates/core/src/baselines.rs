//! Baseline detectors compared against the adaptive EMA detector.
//!
//! All of them are causal: the statistics used to judge sample `t` come from samples before
//! `t` only, and no flag is raised before `warmup` samples have been seen.

use serde::{Deserialize, Serialize};

use crate::detector::{run_link, DetectorConfig};
use crate::ema::{check_alpha, AlphaPolicy};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::stats::{median_mad, RunningStats};
use crate::trace::Trace;

/// Scales a MAD to a standard deviation estimate under Gaussian noise.
pub const MAD_CONSISTENCY: f64 = 1.4826;

/// The five detectors of the comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    AdaptiveEma,
    BasicEma,
    Zscore,
    MovingAverage,
    Mad,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::AdaptiveEma, Method::BasicEma, Method::Zscore, Method::MovingAverage, Method::Mad];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::AdaptiveEma => "adaptive_ema",
            Method::BasicEma => "basic_ema",
            Method::Zscore => "zscore",
            Method::MovingAverage => "moving_average",
            Method::Mad => "mad",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig<T = f64> {
    /// Any method but [`Method::AdaptiveEma`].
    pub method: Method,
    /// Multiples of the method's dispersion measure; dBm for the basic EMA.
    pub threshold: T,
    /// Trailing window length (moving average and MAD).
    pub window: usize,
    /// Smoothing factor of the basic EMA.
    pub fixed_alpha: T,
    pub warmup: usize,
}

impl<T: Real> BaselineConfig<T> {
    pub fn default_for(method: Method) -> Self {
        let threshold = if method == Method::BasicEma { 2.0 } else { 3.0 };
        Self { method, threshold: T::lit(threshold), window: 30, fixed_alpha: T::lit(0.5), warmup: 50 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.method == Method::AdaptiveEma {
            return Err(Error::Config("adaptive_ema is configured through DetectorConfig".into()));
        }
        if !(self.threshold > T::zero()) {
            return Err(Error::Config(format!("threshold must be positive, got {:?}", self.threshold)));
        }
        if self.window < 2 {
            return Err(Error::Config(format!("window must be at least 2, got {}", self.window)));
        }
        if self.warmup < 2 {
            return Err(Error::Config(format!("warmup must be at least 2, got {}", self.warmup)));
        }
        check_alpha(self.fixed_alpha)
    }
}

/// One flagged sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flag<T> {
    pub index: usize,
    pub value: T,
    /// Level the sample was compared against (running mean, window median, previous EMA).
    pub reference: T,
    pub deviation: T,
    pub threshold: T,
    pub k: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BaselineRun<T> {
    pub flags: Vec<Flag<T>>,
    /// Samples that could not be judged because the dispersion estimate was zero.
    pub degenerate: usize,
}

impl<T> BaselineRun<T> {
    pub fn indices(&self) -> Vec<usize> {
        self.flags.iter().map(|f| f.index).collect()
    }
}

fn judge<T: Real>(
    run: &mut BaselineRun<T>,
    index: usize,
    value: T,
    reference: T,
    scale: T,
    multiple: T,
) {
    if !(scale > T::zero()) {
        run.degenerate += 1;
        return;
    }
    let deviation = (value - reference).abs();
    let threshold = multiple * scale;
    if deviation >= threshold {
        run.flags.push(Flag { index, value, reference, deviation, threshold, k: Some(multiple) });
    }
}

/// Flags `|x_t - mean| >= threshold * std` with mean and std over all previous samples.
pub fn zscore_flags<T: Real>(values: &[T], threshold: T, warmup: usize) -> Result<BaselineRun<T>> {
    let mut stats = RunningStats::new();
    let mut run = BaselineRun { flags: Vec::new(), degenerate: 0 };
    for (i, &x) in values.iter().enumerate() {
        if i >= warmup {
            let sd = stats.std_dev().unwrap_or(T::zero());
            judge(&mut run, i, x, stats.mean(), sd, threshold);
        }
        stats.push(x)?;
    }
    Ok(run)
}

/// Flags `|x_t - window mean| >= threshold * window std` over the trailing `window` samples.
pub fn moving_average_flags<T: Real>(
    values: &[T],
    window: usize,
    threshold: T,
    warmup: usize,
) -> Result<BaselineRun<T>> {
    let mut run = BaselineRun { flags: Vec::new(), degenerate: 0 };
    for i in warmup.max(window)..values.len() {
        let stats = RunningStats::from_values(values[i - window..i].iter().copied())?;
        judge(&mut run, i, values[i], stats.mean(), stats.std_dev()?, threshold);
    }
    Ok(run)
}

/// Flags `|x_t - window median| >= threshold * 1.4826 * window MAD`.
pub fn mad_flags<T: Real>(values: &[T], window: usize, threshold: T, warmup: usize) -> Result<BaselineRun<T>> {
    let mut run = BaselineRun { flags: Vec::new(), degenerate: 0 };
    let consistency = T::lit(MAD_CONSISTENCY);
    for i in warmup.max(window)..values.len() {
        let (med, mad) = median_mad(&values[i - window..i])?;
        judge(&mut run, i, values[i], med, consistency * mad, threshold);
    }
    Ok(run)
}

/// EMA with a fixed smoothing factor and a fixed threshold on `z_t = |x_t - E_{t-1}|`.
pub fn basic_ema_flags<T: Real>(
    values: &[T],
    fixed_alpha: T,
    threshold: T,
    warmup: usize,
) -> Result<BaselineRun<T>> {
    let config = DetectorConfig {
        alpha_policy: AlphaPolicy::fixed(fixed_alpha),
        warmup,
        fixed_threshold: Some(threshold),
        ..DetectorConfig::default()
    };
    let link = run_link(values, &config)?;
    let flags = link
        .steps
        .iter()
        .filter(|s| s.flagged)
        .map(|s| Flag {
            index: s.index as usize,
            value: s.value,
            reference: s.ema_prev.expect("flagged steps follow the first sample"),
            deviation: s.z.expect("flagged steps carry z"),
            threshold,
            k: None,
        })
        .collect();
    Ok(BaselineRun { flags, degenerate: 0 })
}

impl<T: Real> BaselineConfig<T> {
    /// Runs the configured baseline on one link.
    pub fn flag_values(&self, values: &[T]) -> Result<BaselineRun<T>> {
        self.validate()?;
        if values.len() < self.warmup {
            return Err(Error::Input(format!(
                "link has {} samples, fewer than the warm-up of {}",
                values.len(),
                self.warmup
            )));
        }
        match self.method {
            Method::Zscore => zscore_flags(values, self.threshold, self.warmup),
            Method::MovingAverage => moving_average_flags(values, self.window, self.threshold, self.warmup),
            Method::Mad => mad_flags(values, self.window, self.threshold, self.warmup),
            Method::BasicEma => basic_ema_flags(values, self.fixed_alpha, self.threshold, self.warmup),
            Method::AdaptiveEma => unreachable!("rejected by validate"),
        }
    }
}

/// Outlier event of any method, in the units of the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEvent {
    pub method: Method,
    pub timestamp_ms: i64,
    pub node_id: String,
    pub rssi_dbm: f64,
    pub reference_dbm: f64,
    pub deviation_dbm: f64,
    pub threshold_dbm: f64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineLinkSummary {
    pub node_id: String,
    pub n_samples: usize,
    pub n_outliers: usize,
    pub rate: f64,
    pub degenerate: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutput {
    pub events: Vec<MethodEvent>,
    pub summary: Vec<BaselineLinkSummary>,
    pub warnings: Vec<crate::detector::LinkWarning>,
}

/// Runs a baseline over every link of a trace.
pub fn detect_baseline(trace: &Trace, config: &BaselineConfig<f64>) -> Result<BaselineOutput> {
    config.validate()?;
    let mut out = BaselineOutput::default();
    for link in trace.links() {
        let values = link.values();
        let run = match config.flag_values(&values) {
            Ok(run) => run,
            Err(e) => {
                out.warnings.push(crate::detector::LinkWarning {
                    node_id: link.node_id.to_string(),
                    message: e.to_string(),
                });
                continue;
            }
        };
        let eligible = values.len() - config.warmup;
        out.summary.push(BaselineLinkSummary {
            node_id: link.node_id.to_string(),
            n_samples: values.len(),
            n_outliers: run.flags.len(),
            rate: if eligible == 0 { 0.0 } else { run.flags.len() as f64 / eligible as f64 },
            degenerate: run.degenerate,
        });
        out.events.extend(run.flags.iter().map(|f| MethodEvent {
            method: config.method,
            timestamp_ms: link.samples[f.index].timestamp_ms,
            node_id: link.node_id.to_string(),
            rssi_dbm: f.value,
            reference_dbm: f.reference,
            deviation_dbm: f.deviation,
            threshold_dbm: f.threshold,
            k: f.k.unwrap_or(f64::NAN),
        }));
    }
    Ok(out)
}

pub fn zscore_detect(trace: &Trace, threshold: f64) -> Result<BaselineOutput> {
    detect_baseline(trace, &BaselineConfig { threshold, ..BaselineConfig::default_for(Method::Zscore) })
}

pub fn moving_average_detect(trace: &Trace, window: usize, threshold: f64) -> Result<BaselineOutput> {
    detect_baseline(
        trace,
        &BaselineConfig { window, threshold, ..BaselineConfig::default_for(Method::MovingAverage) },
    )
}

pub fn mad_detect(trace: &Trace, window: usize, threshold: f64) -> Result<BaselineOutput> {
    detect_baseline(trace, &BaselineConfig { window, threshold, ..BaselineConfig::default_for(Method::Mad) })
}

pub fn basic_ema_detect(trace: &Trace, fixed_alpha: f64, threshold: f64) -> Result<BaselineOutput> {
    detect_baseline(
        trace,
        &BaselineConfig { fixed_alpha, threshold, ..BaselineConfig::default_for(Method::BasicEma) },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::KMode;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, StudentT};

    fn gaussian(n: usize, mean: f64, sd: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(mean, sd).unwrap();
        (0..n).map(|_| dist.sample(&mut rng)).collect()
    }

    const BASELINES: [Method; 4] = [Method::BasicEma, Method::Zscore, Method::MovingAverage, Method::Mad];

    #[test]
    fn constant_trace_has_no_flags() {
        let values = vec![-70.0; 300];
        for method in BASELINES {
            let run = BaselineConfig::default_for(method).flag_values(&values).unwrap();
            assert!(run.flags.is_empty(), "{method}");
        }
        let mad = BaselineConfig::default_for(Method::Mad).flag_values(&values).unwrap();
        assert_eq!(mad.degenerate, 300 - 50);
    }

    #[test]
    fn zscore_gaussian_tail() {
        let values = gaussian(200_000, 0.0, 1.0, 3);
        let run = zscore_flags(&values, 3.0, 50).unwrap();
        let rate = run.flags.len() as f64 / (values.len() - 50) as f64;
        // two-sided 3-sigma tail is 0.0027
        assert!((rate - 0.0027).abs() < 0.0006, "rate {rate}");
        assert!(rate < 0.01);
    }

    #[test]
    fn spikes_are_flagged_by_every_baseline() {
        let mut values = gaussian(400, -70.0, 1.0, 4);
        values[300] = -55.0;
        for method in [Method::Zscore, Method::MovingAverage, Method::Mad] {
            let run = BaselineConfig::default_for(method).flag_values(&values).unwrap();
            assert!(run.indices().contains(&300), "{method}");
        }
    }

    #[test]
    fn ramp_does_not_trigger_moving_average() {
        // current-minus-window-mean over window std for a pure ramp is sqrt(3 (w + 1) / w)
        for w in [2usize, 5, 30, 100] {
            let ratio = (3.0 * (w as f64 + 1.0) / w as f64).sqrt();
            assert!(ratio < 3.0);
            let values: Vec<f64> = (0..400).map(|i| -90.0 + 0.01 * i as f64).collect();
            let run = moving_average_flags(&values, w, 3.0, 50).unwrap();
            assert!(run.flags.is_empty(), "window {w}");
            let run = moving_average_flags(&values, w, ratio * 0.999, 50).unwrap();
            assert_eq!(run.flags.len(), 400 - 50.max(w), "window {w}");
        }
    }

    #[test]
    fn mad_alternating_window_with_spike() {
        let mut values: Vec<f64> = (0..60).map(|i| if i % 2 == 0 { -71.0 } else { -69.0 }).collect();
        values.push(-40.0);
        let window = &values[30..60];
        assert_eq!(median_mad(window).unwrap(), (-70.0, 1.0));
        let run = mad_flags(&values, 30, 3.0, 50).unwrap();
        assert_eq!(run.indices(), vec![60]);
        assert!((run.flags[0].threshold - 3.0 * MAD_CONSISTENCY).abs() < 1e-12);
    }

    #[test]
    fn heavy_tails_mad_flags_more_than_zscore() {
        // Student-t(3) noise: std sqrt(3) ~ 1.73 but 1.4826 * MAD ~ 1.13, so at an equal
        // nominal threshold the robust scale sits lower and MAD flags more samples.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = StudentT::new(3.0).unwrap();
        let values: Vec<f64> = (0..50_000).map(|_| -70.0 + t.sample(&mut rng)).collect();
        let z = zscore_flags(&values, 3.0, 50).unwrap().flags.len();
        let m = mad_flags(&values, 30, 3.0, 50).unwrap().flags.len();
        assert!(m > z, "mad {m} zscore {z}");
    }

    #[test]
    fn basic_ema_infinite_threshold_and_superset() {
        let values = gaussian(5_000, -70.0, 6.0, 12);
        let none = basic_ema_flags(&values, 0.5, f64::INFINITY, 50).unwrap();
        assert!(none.flags.is_empty());

        let basic = basic_ema_flags(&values, 0.5, 2.0, 50).unwrap().indices();
        let adaptive = DetectorConfig {
            alpha_policy: AlphaPolicy::fixed(0.5),
            k_mode: KMode::DerivationConsistent,
            ..DetectorConfig::default()
        };
        let adaptive = run_link(&values, &adaptive).unwrap().flagged_indices();
        assert!(!adaptive.is_empty());
        assert!(adaptive.iter().all(|i| basic.contains(i)));
        assert!(basic.len() > adaptive.len());
    }

    #[test]
    fn config_validation() {
        let mut c = BaselineConfig::<f64>::default_for(Method::Mad);
        c.window = 1;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = BaselineConfig { threshold: 0.0, ..BaselineConfig::<f64>::default_for(Method::Zscore) };
        assert!(c.validate().is_err());
        assert!(BaselineConfig::<f64>::default_for(Method::AdaptiveEma).validate().is_err());
        assert!("mad".parse::<Method>().is_ok());
        assert!("foo".parse::<Method>().is_err());
    }

    #[test]
    fn f32_baselines() {
        let mut values: Vec<f32> = gaussian(300, -70.0, 1.0, 13).iter().map(|&x| x as f32).collect();
        values[200] = -40.0;
        for method in BASELINES {
            let run = BaselineConfig::<f32>::default_for(method).flag_values(&values).unwrap();
            assert!(run.indices().contains(&200), "{method}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn causal_prefixes(seed in any::<u64>(), cut in 60usize..400) {
            let values = gaussian(400, -70.0, 3.0, seed);
            for method in BASELINES {
                let c = BaselineConfig::default_for(method);
                let full: Vec<usize> = c.flag_values(&values).unwrap().indices().into_iter().filter(|&i| i < cut).collect();
                let prefix = c.flag_values(&values[..cut]).unwrap().indices();
                prop_assert_eq!(full, prefix, "{}", method);
            }
        }

        #[test]
        fn shift_and_scale(seed in any::<u64>(), shift in -20i32..20, pow in -2i32..3) {
            // integer shifts of half-integer data and power-of-two scales are exact
            let values: Vec<f64> = gaussian(300, -70.0, 3.0, seed).iter().map(|x| (x * 2.0).round() / 2.0).collect();
            let shifted: Vec<f64> = values.iter().map(|x| x + shift as f64).collect();
            let factor = 2f64.powi(pow);
            let scaled: Vec<f64> = values.iter().map(|x| x * factor).collect();
            for method in BASELINES {
                let c = BaselineConfig::default_for(method);
                let base = c.flag_values(&values).unwrap().indices();
                prop_assert_eq!(&base, &c.flag_values(&shifted).unwrap().indices(), "{} shift", method);
                if method != Method::BasicEma {
                    prop_assert_eq!(&base, &c.flag_values(&scaled).unwrap().indices(), "{} scale", method);
                }
            }
        }
    }
}
