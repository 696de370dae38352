//! Line-oriented run configuration.
//!
//! ```text
//! # comments start with '#' or ';'
//! [detector]
//! delta = 0.05
//! k_mode = derived            # literal | derived
//! warmup = 50
//! exclude_outliers = true
//! normalize = none            # none | zscore | minmax
//! sigma_estimator = online    # online | closed_form
//!
//! [ema]
//! alpha = calibrated          # calibrated | fixed:0.3
//! pilot = 0.5
//! clamp_min = 0.05
//! clamp_max = 0.95
//! tol = 0.001
//! max_iter = 20
//!
//! [baselines]
//! methods = basic_ema,zscore,moving_average,mad
//! warmup = 50
//! zscore_threshold = 3
//! ma_window = 30
//! ma_threshold = 3
//! mad_window = 30
//! mad_threshold = 3
//! basic_ema_alpha = 0.5
//! basic_ema_threshold = 2
//! ```
//!
//! Unknown sections or keys are errors. All errors are configuration errors naming the line.

use std::str::FromStr;

use crate::baselines::{BaselineConfig, Method};
use crate::detector::{DetectorConfig, KMode, Normalization, SigmaEstimator};
use crate::ema::{AlphaMode, AlphaPolicy};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub detector: DetectorConfig<f64>,
    /// Baselines in the order they are run.
    pub baselines: Vec<BaselineConfig<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { detector: DetectorConfig::default(), baselines: crate::analysis::default_baselines() }
    }
}

/// `calibrated` or `fixed:<alpha>`.
pub fn parse_alpha_policy(s: &str, base: AlphaPolicy<f64>) -> Result<AlphaPolicy<f64>> {
    let s = s.trim();
    if s == "calibrated" {
        return Ok(AlphaPolicy { mode: AlphaMode::Calibrated, ..base });
    }
    let value = s.strip_prefix("fixed:").unwrap_or(s);
    let alpha: f64 = value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("alpha must be `calibrated` or `fixed:<value>`, got `{s}`")))?;
    let policy = AlphaPolicy { mode: AlphaMode::Fixed, fixed_alpha: alpha, ..base };
    policy.validate()?;
    Ok(policy)
}

fn num<T: FromStr>(value: &str, key: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("`{key}` has an invalid value `{value}`")))
}

fn boolean(value: &str, key: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}` must be true or false, got `{value}`"))),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Detector,
    Ema,
    Baselines,
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut detector = DetectorConfig::<f64>::default();
    let mut methods: Vec<Method> = vec![Method::BasicEma, Method::Zscore, Method::MovingAverage, Method::Mad];
    let b = |m| BaselineConfig::<f64>::default_for(m);
    let (mut basic, mut zscore, mut ma, mut mad) =
        (b(Method::BasicEma), b(Method::Zscore), b(Method::MovingAverage), b(Method::Mad));
    let mut section: Option<Section> = None;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let at = |e: Error| match e {
            Error::Config(m) => Error::Config(format!("line {line_no}: {m}")),
            other => other,
        };
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = Some(match name.trim() {
                "detector" => Section::Detector,
                "ema" => Section::Ema,
                "baselines" => Section::Baselines,
                other => return Err(at(Error::Config(format!("unknown section [{other}]")))),
            });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| at(Error::Config(format!("expected `key = value`, got `{line}`"))))?;
        let Some(sec) = section else {
            return Err(at(Error::Config(format!("`{key}` appears before any section"))));
        };
        let applied: Result<()> = (|| {
            match (sec, key) {
                (Section::Detector, "delta") => detector.delta = num(value, key)?,
                (Section::Detector, "k_mode") => detector.k_mode = KMode::from_str(value)?,
                (Section::Detector, "warmup") => detector.warmup = num(value, key)?,
                (Section::Detector, "exclude_outliers") => detector.exclude_outliers_from_stats = boolean(value, key)?,
                (Section::Detector, "normalize") => detector.normalization = Normalization::from_str(value)?,
                (Section::Detector, "sigma_estimator") => detector.sigma_estimator = SigmaEstimator::from_str(value)?,
                (Section::Ema, "alpha") => detector.alpha_policy = parse_alpha_policy(value, detector.alpha_policy)?,
                (Section::Ema, "pilot") => detector.alpha_policy.pilot_alpha = num(value, key)?,
                (Section::Ema, "clamp_min") => detector.alpha_policy.clamp.0 = num(value, key)?,
                (Section::Ema, "clamp_max") => detector.alpha_policy.clamp.1 = num(value, key)?,
                (Section::Ema, "tol") => detector.alpha_policy.tol = num(value, key)?,
                (Section::Ema, "max_iter") => detector.alpha_policy.max_iter = num(value, key)?,
                (Section::Baselines, "methods") => {
                    methods = value
                        .split(',')
                        .map(|m| Method::from_str(m.trim()))
                        .collect::<Result<Vec<_>>>()?;
                    if methods.contains(&Method::AdaptiveEma) {
                        return Err(Error::Config("adaptive_ema always runs and is not a baseline".into()));
                    }
                }
                (Section::Baselines, "warmup") => {
                    let w = num(value, key)?;
                    for c in [&mut basic, &mut zscore, &mut ma, &mut mad] {
                        c.warmup = w;
                    }
                }
                (Section::Baselines, "zscore_threshold") => zscore.threshold = num(value, key)?,
                (Section::Baselines, "ma_window") => ma.window = num(value, key)?,
                (Section::Baselines, "ma_threshold") => ma.threshold = num(value, key)?,
                (Section::Baselines, "mad_window") => mad.window = num(value, key)?,
                (Section::Baselines, "mad_threshold") => mad.threshold = num(value, key)?,
                (Section::Baselines, "basic_ema_alpha") => basic.fixed_alpha = num(value, key)?,
                (Section::Baselines, "basic_ema_threshold") => basic.threshold = num(value, key)?,
                _ => return Err(Error::Config(format!("unknown key `{key}`"))),
            }
            Ok(())
        })();
        applied.map_err(at)?;
    }

    detector.validate()?;
    let baselines: Vec<BaselineConfig<f64>> = methods
        .iter()
        .map(|m| match m {
            Method::BasicEma => basic,
            Method::Zscore => zscore,
            Method::MovingAverage => ma,
            _ => mad,
        })
        .collect();
    for c in &baselines {
        c.validate()?;
    }
    Ok(RunConfig { detector, baselines })
}
