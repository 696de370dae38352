//! Adaptive-EMA Chebyshev outlier detector.
//!
//! For every sample the detector measures `z_t = |R_t - E_{t-1}|` against the previous EMA
//! output and flags the sample when `z_t >= k * sigma_z`, where `k * sigma_z = eta_z + eps`
//! and `eps = sigma_z / sqrt(delta)`. By Chebyshev's inequality the long-run rate of flags
//! on in-control data is at most `delta`.
//!
//! `eta_z` and `sigma_z` are estimated from the stream of past `z` values by default
//! ([`SigmaEstimator::Online`]); [`SigmaEstimator::ClosedForm`] instead uses
//! `sigma_z^2 = sigma_R^2 + sigma_E^2` with the steady-state EMA variance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ema::{calibrate_alpha, check_alpha, ema_step, steady_state_variance_ratio, AlphaMode, AlphaPolicy, Calibration, EmaState};
use crate::error::{ensure_finite, Error, Result};
use crate::scalar::Real;
use crate::stats::RunningStats;
use crate::trace::{RssiSample, Trace};

/// Which form of the sensitivity coefficient to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KMode {
    /// `k = eta_z / sigma_z + sigma_z / sqrt(delta)`, as printed in the original derivation.
    PaperLiteral,
    /// `k = eta_z / sigma_z + 1 / sqrt(delta)`, which follows from `eps = sigma_z / sqrt(delta)`.
    DerivationConsistent,
}

impl KMode {
    pub fn as_str(self) -> &'static str {
        match self {
            KMode::PaperLiteral => "paper_literal",
            KMode::DerivationConsistent => "derivation_consistent",
        }
    }
}

impl std::str::FromStr for KMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" | "paper_literal" => Ok(KMode::PaperLiteral),
            "derived" | "derivation_consistent" => Ok(KMode::DerivationConsistent),
            other => Err(Error::Config(format!("unknown k mode `{other}` (expected literal|derived)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaEstimator {
    /// Running mean and standard deviation of the observed `z` stream.
    Online,
    /// Half-normal scale `sqrt(var_R + alpha/(2-alpha) var_R)` with mean `scale * sqrt(2/pi)`.
    ClosedForm,
}

impl std::str::FromStr for SigmaEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "online" => Ok(SigmaEstimator::Online),
            "closed_form" | "closed-form" => Ok(SigmaEstimator::ClosedForm),
            other => Err(Error::Config(format!("unknown sigma estimator `{other}`"))),
        }
    }
}

/// Per-link rescaling applied before detection.
///
/// Parameters are estimated on the warm-up prefix so detection stays causal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    Zscore,
    Minmax,
}

impl Normalization {
    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::None => "none",
            Normalization::Zscore => "zscore",
            Normalization::Minmax => "minmax",
        }
    }
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "zscore" => Ok(Normalization::Zscore),
            "minmax" => Ok(Normalization::Minmax),
            other => Err(Error::Config(format!("unknown normalization `{other}` (expected none|zscore|minmax)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig<T = f64> {
    /// Chebyshev confidence level, `delta = sigma_z^2 / eps^2`.
    pub delta: T,
    pub k_mode: KMode,
    pub alpha_policy: AlphaPolicy<T>,
    /// Samples observed before the first flag may be raised; also the calibration prefix.
    pub warmup: usize,
    pub exclude_outliers_from_stats: bool,
    pub normalization: Normalization,
    pub sigma_estimator: SigmaEstimator,
    /// Replace the adaptive `k * sigma_z` threshold by a constant (the basic EMA baseline).
    pub fixed_threshold: Option<T>,
}

impl<T: Real> Default for DetectorConfig<T> {
    fn default() -> Self {
        Self {
            delta: T::lit(0.05),
            k_mode: KMode::DerivationConsistent,
            alpha_policy: AlphaPolicy::default(),
            warmup: 50,
            exclude_outliers_from_stats: true,
            normalization: Normalization::None,
            sigma_estimator: SigmaEstimator::Online,
            fixed_threshold: None,
        }
    }
}

impl<T: Real> DetectorConfig<T> {
    pub fn validate(&self) -> Result<()> {
        check_delta(self.delta)?;
        if self.warmup < 2 {
            return Err(Error::Config(format!("warmup must be at least 2, got {}", self.warmup)));
        }
        if let Some(t) = self.fixed_threshold {
            if !(t > T::zero()) {
                return Err(Error::Config(format!("fixed threshold must be positive, got {t:?}")));
            }
        }
        self.alpha_policy.validate()
    }

    /// True when the warm-up prefix must be buffered before detection can start.
    fn needs_prefix(&self) -> bool {
        self.alpha_policy.mode == AlphaMode::Calibrated || self.normalization != Normalization::None
    }

    pub fn cast<U: Real>(&self) -> DetectorConfig<U> {
        let c = |x: T| U::lit(x.to_f64_lossy());
        let p = &self.alpha_policy;
        DetectorConfig {
            delta: c(self.delta),
            k_mode: self.k_mode,
            alpha_policy: AlphaPolicy {
                mode: p.mode,
                fixed_alpha: c(p.fixed_alpha),
                pilot_alpha: c(p.pilot_alpha),
                clamp: (c(p.clamp.0), c(p.clamp.1)),
                tol: c(p.tol),
                max_iter: p.max_iter,
            },
            warmup: self.warmup,
            exclude_outliers_from_stats: self.exclude_outliers_from_stats,
            normalization: self.normalization,
            sigma_estimator: self.sigma_estimator,
            fixed_threshold: self.fixed_threshold.map(c),
        }
    }
}

fn check_delta<T: Real>(delta: T) -> Result<()> {
    if delta > T::zero() && delta < T::one() {
        Ok(())
    } else {
        Err(Error::Config(format!("delta must lie in (0, 1), got {delta:?}")))
    }
}

/// `|r - e_prev|`.
pub fn deviation<T: Real>(r: T, e_prev: T) -> Result<T> {
    ensure_finite(r, "RSSI sample")?;
    ensure_finite(e_prev, "previous EMA value")?;
    Ok((r - e_prev).abs())
}

/// `sqrt(var_r + var_e)`: the half-normal scale of `z` for independent, equal-mean inputs.
pub fn sigma_z<T: Real>(var_r: T, var_e: T) -> Result<T> {
    if !(var_r >= T::zero() && var_e >= T::zero()) {
        return Err(Error::Input(format!("variances must be non-negative, got ({var_r:?}, {var_e:?})")));
    }
    Ok((var_r + var_e).sqrt())
}

/// Sensitivity coefficient `k`; the outlier threshold is `k * sigma_z`.
pub fn sensitivity_k<T: Real>(eta_z: T, sigma_z: T, delta: T, mode: KMode) -> Result<T> {
    check_delta(delta)?;
    if !(sigma_z > T::zero()) || !sigma_z.is_finite() {
        return Err(Error::Degenerate(format!("sigma_z must be positive, got {sigma_z:?}")));
    }
    ensure_finite(eta_z, "eta_z")?;
    let root = delta.sqrt();
    Ok(match mode {
        KMode::PaperLiteral => eta_z / sigma_z + sigma_z / root,
        KMode::DerivationConsistent => eta_z / sigma_z + T::one() / root,
    })
}

/// Threshold quantities in effect for the next sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold<T> {
    pub eta_z: Option<T>,
    pub sigma_z: Option<T>,
    pub k: Option<T>,
    pub value: T,
}

/// Streaming state of one link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorState<T = f64> {
    pub ema: EmaState<T>,
    pub stats_r: RunningStats<T>,
    pub stats_z: RunningStats<T>,
    pub alpha: T,
    pub samples_seen: u64,
    pub last_timestamp: Option<i64>,
}

/// What happened to one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step<T> {
    pub index: u64,
    pub value: T,
    /// `None` for the first sample, which only seeds the filter.
    pub ema_prev: Option<T>,
    pub z: Option<T>,
    pub threshold: Option<Threshold<T>>,
    pub flagged: bool,
}

impl<T: Real> DetectorState<T> {
    pub fn new(alpha: T) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            ema: EmaState::new(),
            stats_r: RunningStats::new(),
            stats_z: RunningStats::new(),
            alpha,
            samples_seen: 0,
            last_timestamp: None,
        })
    }

    /// Threshold that would apply to the next sample, if the statistics support one.
    pub fn threshold(&self, config: &DetectorConfig<T>) -> Option<Threshold<T>> {
        if let Some(value) = config.fixed_threshold {
            return Some(Threshold { eta_z: None, sigma_z: None, k: None, value });
        }
        let (eta, sigma) = match config.sigma_estimator {
            SigmaEstimator::Online => (self.stats_z.mean(), self.stats_z.std_dev().ok()?),
            SigmaEstimator::ClosedForm => {
                let var_r = self.stats_r.variance().ok()?;
                let var_e = steady_state_variance_ratio(self.alpha).ok()? * var_r;
                let sigma = sigma_z(var_r, var_e).ok()?;
                (sigma * (T::lit(2.0) / T::lit(std::f64::consts::PI)).sqrt(), sigma)
            }
        };
        let k = sensitivity_k(eta, sigma, config.delta, config.k_mode).ok()?;
        Some(Threshold { eta_z: Some(eta), sigma_z: Some(sigma), k: Some(k), value: k * sigma })
    }

    /// Processes one value: measures `z` against the previous EMA output, decides the flag,
    /// then updates the filter (always) and the statistics.
    pub fn step(&mut self, r: T, config: &DetectorConfig<T>) -> Result<Step<T>> {
        ensure_finite(r, "RSSI sample")?;
        let index = self.samples_seen;
        let ema_prev = self.ema.value();
        let (z, threshold, flagged) = match ema_prev {
            None => (None, None, false),
            Some(prev) => {
                let z = deviation(r, prev)?;
                let threshold = self.threshold(config);
                let eligible = index >= config.warmup as u64;
                let flagged = eligible && threshold.is_some_and(|t| z >= t.value);
                (Some(z), threshold, flagged)
            }
        };

        let (_, ema) = ema_step(self.ema, r, self.alpha)?;
        self.ema = ema;
        self.stats_r.push(r)?;
        if let Some(z) = z {
            if !(flagged && config.exclude_outliers_from_stats) {
                self.stats_z.push(z)?;
            }
        }
        self.samples_seen += 1;
        Ok(Step { index, value: r, ema_prev, z, threshold, flagged })
    }
}

/// Detected outlier in the units of the input trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierEvent {
    pub timestamp_ms: i64,
    pub node_id: String,
    pub raw_rssi: f64,
    pub ema_prev: f64,
    pub z: f64,
    pub threshold: f64,
    /// `NaN` when the threshold is fixed rather than `k * sigma_z`.
    pub k: f64,
}

/// Single-sample step over a parsed sample; the state carries the smoothing factor.
///
/// Returns the event when the sample is flagged. Samples must arrive in non-decreasing
/// timestamp order.
pub fn detect_step(
    state: &mut DetectorState<f64>,
    sample: &RssiSample,
    config: &DetectorConfig<f64>,
) -> Result<Option<OutlierEvent>> {
    if let Some(last) = state.last_timestamp {
        if sample.timestamp_ms < last {
            return Err(Error::Input(format!(
                "timestamp {} precedes previous {last} on link {}",
                sample.timestamp_ms, sample.node_id
            )));
        }
    }
    let step = state.step(sample.rssi_dbm, config)?;
    state.last_timestamp = Some(sample.timestamp_ms);
    Ok(step.flagged.then(|| event_from_step(&step, sample, &Normalizer::identity())))
}

/// Affine map `x -> (x - offset) / scale` applied to a link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer<T = f64> {
    pub offset: T,
    pub scale: T,
}

impl<T: Real> Normalizer<T> {
    pub fn identity() -> Self {
        Self { offset: T::zero(), scale: T::one() }
    }

    pub fn fit(kind: Normalization, prefix: &[T]) -> Result<Self> {
        let out = match kind {
            Normalization::None => return Ok(Self::identity()),
            Normalization::Zscore => {
                let stats = RunningStats::from_values(prefix.iter().copied())?;
                Self { offset: stats.mean(), scale: stats.std_dev()? }
            }
            Normalization::Minmax => {
                let lo = prefix.iter().copied().fold(T::infinity(), T::min);
                let hi = prefix.iter().copied().fold(T::neg_infinity(), T::max);
                Self { offset: lo, scale: hi - lo }
            }
        };
        if !(out.scale > T::zero()) {
            return Err(Error::Degenerate(format!(
                "{} normalization of a constant warm-up prefix",
                kind.as_str()
            )));
        }
        Ok(out)
    }

    pub fn apply(&self, x: T) -> T {
        (x - self.offset) / self.scale
    }

    pub fn level_back(&self, x: T) -> T {
        x * self.scale + self.offset
    }

    pub fn spread_back(&self, x: T) -> T {
        x * self.scale
    }
}

fn event_from_step<T: Real>(step: &Step<T>, sample: &RssiSample, norm: &Normalizer<T>) -> OutlierEvent {
    let threshold = step.threshold.expect("flagged steps carry a threshold");
    OutlierEvent {
        timestamp_ms: sample.timestamp_ms,
        node_id: sample.node_id.clone(),
        raw_rssi: sample.rssi_dbm,
        ema_prev: norm.level_back(step.ema_prev.expect("flagged steps follow the first sample")).to_f64_lossy(),
        z: norm.spread_back(step.z.expect("flagged steps carry z")).to_f64_lossy(),
        threshold: norm.spread_back(threshold.value).to_f64_lossy(),
        k: threshold.k.map_or(f64::NAN, T::to_f64_lossy),
    }
}

/// Causal detector for one link.
///
/// With a calibrated alpha or a normalization, the first `warmup` samples are buffered,
/// used to fit the normalizer and calibrate alpha, then replayed through the detector.
/// No sample can be flagged inside the warm-up prefix, so replaying is invisible in the
/// output.
#[derive(Debug, Clone)]
pub struct LinkDetector<T = f64> {
    config: DetectorConfig<T>,
    state: DetectorState<T>,
    normalizer: Normalizer<T>,
    calibration: Option<Calibration<T>>,
    pending: Vec<T>,
    ready: bool,
}

impl<T: Real> LinkDetector<T> {
    pub fn new(config: DetectorConfig<T>) -> Result<Self> {
        config.validate()?;
        let ready = !config.needs_prefix();
        let alpha = match config.alpha_policy.mode {
            AlphaMode::Fixed => config.alpha_policy.fixed_alpha,
            AlphaMode::Calibrated => config.alpha_policy.pilot_alpha,
        };
        Ok(Self {
            state: DetectorState::new(alpha)?,
            config,
            normalizer: Normalizer::identity(),
            calibration: None,
            pending: Vec::new(),
            ready,
        })
    }

    /// Feeds one raw value. Returns the steps that became final, in the detector's working units.
    pub fn push(&mut self, r: T) -> Result<Vec<Step<T>>> {
        ensure_finite(r, "RSSI sample")?;
        if self.ready {
            let x = self.normalizer.apply(r);
            return Ok(vec![self.state.step(x, &self.config)?]);
        }
        self.pending.push(r);
        if self.pending.len() < self.config.warmup {
            return Ok(Vec::new());
        }
        self.prepare()
    }

    fn prepare(&mut self) -> Result<Vec<Step<T>>> {
        let prefix = std::mem::take(&mut self.pending);
        self.normalizer = Normalizer::fit(self.config.normalization, &prefix)?;
        let normalized: Vec<T> = prefix.iter().map(|&x| self.normalizer.apply(x)).collect();
        if self.config.alpha_policy.mode == AlphaMode::Calibrated {
            let cal = calibrate_alpha(&normalized, &self.config.alpha_policy)?;
            self.state.alpha = cal.alpha;
            self.calibration = Some(cal);
        }
        self.ready = true;
        normalized.into_iter().map(|x| self.state.step(x, &self.config)).collect()
    }

    /// True once the warm-up prefix has been consumed.
    pub fn is_ready(&self) -> bool {
        self.ready
    }

    pub fn state(&self) -> &DetectorState<T> {
        &self.state
    }

    pub fn normalizer(&self) -> &Normalizer<T> {
        &self.normalizer
    }

    pub fn calibration(&self) -> Option<&Calibration<T>> {
        self.calibration.as_ref()
    }

    pub fn config(&self) -> &DetectorConfig<T> {
        &self.config
    }

    pub fn current_threshold(&self) -> Option<Threshold<T>> {
        self.state.threshold(&self.config)
    }
}

/// Per-link line of the detection summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSummary {
    pub node_id: String,
    pub radio: String,
    pub environment: String,
    pub n_samples: usize,
    pub n_outliers: usize,
    /// Outliers divided by post-warm-up samples.
    pub rate: f64,
    pub alpha: f64,
    pub k: Option<f64>,
    pub sigma_z: Option<f64>,
    pub eta_z: Option<f64>,
    pub calibration_converged: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkWarning {
    pub node_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutput {
    pub events: Vec<OutlierEvent>,
    pub summary: Vec<LinkSummary>,
    pub warnings: Vec<LinkWarning>,
}

/// Flags, in index order, of one link processed as a whole.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkRun<T = f64> {
    pub steps: Vec<Step<T>>,
    pub alpha: T,
    pub normalizer: Normalizer<T>,
    pub calibration: Option<Calibration<T>>,
    pub final_threshold: Option<Threshold<T>>,
}

impl<T: Real> LinkRun<T> {
    pub fn flagged_indices(&self) -> Vec<usize> {
        self.steps.iter().filter(|s| s.flagged).map(|s| s.index as usize).collect()
    }
}

/// Runs one link's values through a fresh [`LinkDetector`].
///
/// Errors with [`Error::Input`] when the link is shorter than the warm-up, and propagates
/// degenerate-prefix errors from normalization or calibration.
pub fn run_link<T: Real>(values: &[T], config: &DetectorConfig<T>) -> Result<LinkRun<T>> {
    if values.len() < config.warmup {
        return Err(Error::Input(format!(
            "link has {} samples, fewer than the warm-up of {}",
            values.len(),
            config.warmup
        )));
    }
    let mut det = LinkDetector::new(*config)?;
    let mut steps = Vec::with_capacity(values.len());
    for &r in values {
        steps.extend(det.push(r)?);
    }
    Ok(LinkRun {
        steps,
        alpha: det.state.alpha,
        normalizer: det.normalizer,
        calibration: det.calibration,
        final_threshold: det.current_threshold(),
    })
}

/// Detects outliers on every link of `trace` independently.
///
/// Links that cannot be processed (too short, constant warm-up prefix) are left out of the
/// summary and reported in `warnings`.
pub fn detect_stream(trace: &Trace, config: &DetectorConfig<f64>) -> Result<DetectionOutput> {
    config.validate()?;
    let per_link: Vec<Result<(Vec<OutlierEvent>, LinkSummary), LinkWarning>> = trace
        .links()
        .into_par_iter()
        .map(|link| {
            let values = link.values();
            let run = run_link(&values, config).map_err(|e| LinkWarning {
                node_id: link.node_id.to_string(),
                message: e.to_string(),
            })?;
            let events: Vec<OutlierEvent> = run
                .steps
                .iter()
                .filter(|s| s.flagged)
                .map(|s| event_from_step(s, &link.samples[s.index as usize], &run.normalizer))
                .collect();
            let eligible = values.len() - config.warmup;
            let summary = LinkSummary {
                node_id: link.node_id.to_string(),
                radio: link.radio().to_string(),
                environment: link.environment().to_string(),
                n_samples: values.len(),
                n_outliers: events.len(),
                rate: if eligible == 0 { 0.0 } else { events.len() as f64 / eligible as f64 },
                alpha: run.alpha,
                k: run.final_threshold.and_then(|t| t.k),
                sigma_z: run.final_threshold.and_then(|t| t.sigma_z),
                eta_z: run.final_threshold.and_then(|t| t.eta_z),
                calibration_converged: run.calibration.map(|c| c.converged),
            };
            Ok((events, summary))
        })
        .collect();

    let mut out = DetectionOutput::default();
    for item in per_link {
        match item {
            Ok((events, summary)) => {
                out.events.extend(events);
                out.summary.push(summary);
            }
            Err(w) => out.warnings.push(w),
        }
    }
    Ok(out)
}
