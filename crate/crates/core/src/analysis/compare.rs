//! Scoring the adaptive detector and the four baselines against injected ground truth.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::quantile_sorted;
use crate::baselines::{detect_baseline, BaselineConfig, Method};
use crate::channel::Label;
use crate::detector::{detect_stream, DetectorConfig, LinkWarning};
use crate::error::{Error, Result};
use crate::trace::Trace;

/// A trace with its injection labels; `labels` is `None` when none were supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrace {
    pub name: String,
    pub trace: Trace,
    pub labels: Option<Vec<Label>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
struct Counts {
    eligible: u64,
    flagged: u64,
    true_positive: u64,
    labels: u64,
}

impl Counts {
    fn add(&mut self, o: &Counts) {
        self.eligible += o.eligible;
        self.flagged += o.flagged;
        self.true_positive += o.true_positive;
        self.labels += o.labels;
    }
}

/// Scores of one method on one `(radio, environment)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub method: Method,
    pub radio: String,
    pub environment: String,
    pub n_eligible: u64,
    pub n_flagged: u64,
    pub n_labels: u64,
    pub true_positives: u64,
    /// Flagged samples over post-warm-up samples.
    pub detection_rate: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub n_cells: usize,
    pub median_rate: f64,
    pub q1_rate: f64,
    pub q3_rate: f64,
    pub iqr: f64,
    pub min_rate: f64,
    pub max_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub cells: Vec<CellReport>,
    pub methods: Vec<MethodSummary>,
    pub warnings: Vec<LinkWarning>,
}

type CellKey = (Method, String, String);

fn build(counts: BTreeMap<CellKey, Counts>, mut warnings: Vec<LinkWarning>) -> ComparisonReport {
    let cells: Vec<CellReport> = counts
        .into_iter()
        .map(|((method, radio, environment), c)| CellReport {
            method,
            radio,
            environment,
            n_eligible: c.eligible,
            n_flagged: c.flagged,
            n_labels: c.labels,
            true_positives: c.true_positive,
            detection_rate: if c.eligible == 0 { 0.0 } else { c.flagged as f64 / c.eligible as f64 },
            precision: (c.flagged > 0).then(|| c.true_positive as f64 / c.flagged as f64),
            recall: (c.labels > 0).then(|| c.true_positive as f64 / c.labels as f64),
        })
        .collect();

    let mut methods = Vec::new();
    for method in Method::ALL {
        let mut rates: Vec<f64> = cells.iter().filter(|c| c.method == method).map(|c| c.detection_rate).collect();
        if rates.is_empty() {
            continue;
        }
        rates.sort_by(f64::total_cmp);
        let q = |p| quantile_sorted(&rates, p).expect("non-empty");
        methods.push(MethodSummary {
            method,
            n_cells: rates.len(),
            median_rate: q(0.5),
            q1_rate: q(0.25),
            q3_rate: q(0.75),
            iqr: q(0.75) - q(0.25),
            min_rate: rates[0],
            max_rate: rates[rates.len() - 1],
        });
    }
    warnings.sort_by(|a, b| (&a.node_id, &a.message).cmp(&(&b.node_id, &b.message)));
    warnings.dedup();
    ComparisonReport { cells, methods, warnings }
}

impl ComparisonReport {
    fn counts(&self) -> BTreeMap<CellKey, Counts> {
        self.cells
            .iter()
            .map(|c| {
                let key = (c.method, c.radio.clone(), c.environment.clone());
                let counts = Counts {
                    eligible: c.n_eligible,
                    flagged: c.n_flagged,
                    true_positive: c.true_positives,
                    labels: c.n_labels,
                };
                (key, counts)
            })
            .collect()
    }

    /// Combines two reports by summing the per-cell counts.
    pub fn merge(&self, other: &ComparisonReport) -> ComparisonReport {
        let mut counts = self.counts();
        for (k, c) in other.counts() {
            counts.entry(k).or_default().add(&c);
        }
        let warnings = self.warnings.iter().chain(&other.warnings).cloned().collect();
        build(counts, warnings)
    }

    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// Rows `(method, radio, environment, rate)` for box plots.
    pub fn boxplot_rows(&self) -> Vec<(Method, &str, &str, f64)> {
        self.cells.iter().map(|c| (c.method, c.radio.as_str(), c.environment.as_str(), c.detection_rate)).collect()
    }
}

struct LinkFlags<'a> {
    node_id: &'a str,
    radio: &'a str,
    environment: &'a str,
    eligible: u64,
    flagged: Vec<i64>,
}

fn score(method: Method, links: Vec<LinkFlags<'_>>, labels: &BTreeSet<i64>, trace: &Trace, counts: &mut BTreeMap<CellKey, Counts>) {
    for l in links {
        let link_ts: BTreeSet<i64> = trace
            .samples()
            .iter()
            .filter(|s| s.node_id == l.node_id)
            .map(|s| s.timestamp_ms)
            .collect();
        let flagged: BTreeSet<i64> = l.flagged.into_iter().collect();
        let c = Counts {
            eligible: l.eligible,
            flagged: flagged.len() as u64,
            true_positive: flagged.intersection(labels).count() as u64,
            labels: labels.intersection(&link_ts).count() as u64,
        };
        let key = (method, l.radio.to_string(), l.environment.to_string());
        counts.entry(key).or_default().add(&c);
    }
}

fn compare_one(
    item: &LabeledTrace,
    detector: &DetectorConfig<f64>,
    baselines: &[BaselineConfig<f64>],
) -> Result<ComparisonReport> {
    let Some(labels) = &item.labels else {
        let w = LinkWarning { node_id: item.name.clone(), message: "no ground-truth labels, trace skipped".into() };
        return Ok(build(BTreeMap::new(), vec![w]));
    };
    let labels: BTreeSet<i64> = labels.iter().map(|l| l.timestamp_ms).collect();
    let links = item.trace.links();
    let meta = |node: &str| {
        let link = links.iter().find(|l| l.node_id == node).expect("summary links come from the trace");
        (link.radio(), link.environment())
    };
    let mut counts = BTreeMap::new();
    let mut warnings = Vec::new();

    let adaptive = detect_stream(&item.trace, detector)?;
    let flags = adaptive
        .summary
        .iter()
        .map(|s| LinkFlags {
            node_id: &s.node_id,
            radio: &s.radio,
            environment: &s.environment,
            eligible: (s.n_samples - detector.warmup) as u64,
            flagged: adaptive.events.iter().filter(|e| e.node_id == s.node_id).map(|e| e.timestamp_ms).collect(),
        })
        .collect();
    score(Method::AdaptiveEma, flags, &labels, &item.trace, &mut counts);
    warnings.extend(adaptive.warnings);

    for cfg in baselines {
        let out = detect_baseline(&item.trace, cfg)?;
        let flags = out
            .summary
            .iter()
            .map(|s| {
                let (radio, environment) = meta(&s.node_id);
                LinkFlags {
                    node_id: &s.node_id,
                    radio,
                    environment,
                    eligible: (s.n_samples - cfg.warmup) as u64,
                    flagged: out.events.iter().filter(|e| e.node_id == s.node_id).map(|e| e.timestamp_ms).collect(),
                }
            })
            .collect();
        score(cfg.method, flags, &labels, &item.trace, &mut counts);
        warnings.extend(out.warnings);
    }
    Ok(build(counts, warnings))
}

/// Runs the adaptive detector and each baseline on every trace and scores them.
///
/// Traces without labels are skipped with a warning. `baselines` must not contain the
/// adaptive method.
pub fn compare_methods(
    traces: &[LabeledTrace],
    detector: &DetectorConfig<f64>,
    baselines: &[BaselineConfig<f64>],
) -> Result<ComparisonReport> {
    detector.validate()?;
    for b in baselines {
        b.validate()?;
        if b.method == Method::AdaptiveEma {
            return Err(Error::Config("the adaptive detector is configured through the detector settings".into()));
        }
    }
    let parts: Vec<ComparisonReport> =
        traces.par_iter().map(|t| compare_one(t, detector, baselines)).collect::<Result<_>>()?;
    Ok(parts.iter().fold(build(BTreeMap::new(), Vec::new()), |acc, p| acc.merge(p)))
}

/// The four baselines with their default settings.
pub fn default_baselines() -> Vec<BaselineConfig<f64>> {
    [Method::BasicEma, Method::Zscore, Method::MovingAverage, Method::Mad]
        .into_iter()
        .map(BaselineConfig::default_for)
        .collect()
}
