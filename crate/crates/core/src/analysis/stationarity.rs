//! Stationarity of first differences `ΔR_t = R_t - R_{t-1}` across window lengths.

use serde::{Deserialize, Serialize};

use crate::detector::LinkWarning;
use crate::error::{Error, Result};
use crate::stats::{window_stats, RunningStats, WindowStat};
use crate::trace::{Link, Trace};

/// Counts in 1 dB bins centred on the integers `-half_width..=half_width`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub half_width: i64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn from_values(values: impl IntoIterator<Item = f64> + Clone) -> Self {
        let bin = |x: f64| x.round() as i64;
        let half_width = values.clone().into_iter().map(|x| bin(x).abs()).max().unwrap_or(0);
        let mut counts = vec![0; (2 * half_width + 1) as usize];
        for x in values {
            counts[(bin(x) + half_width) as usize] += 1;
        }
        Self { half_width, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `(bin centre, count)` pairs.
    pub fn bins(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.counts.iter().enumerate().map(move |(i, &c)| (i as i64 - self.half_width, c))
    }
}

/// Report for one link. Entry `i` of every per-window vector belongs to `window_s[i]`.
///
/// `delta_mean` is the mean of all differences falling inside complete-or-partial windows
/// of at least two samples; `delta_var` pools the within-window sums of squares, so a
/// drift that changes between windows lowers it below `global_var`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkStationarity {
    pub node_id: String,
    pub window_s: Vec<f64>,
    pub n_windows: Vec<usize>,
    pub n_delta_used: Vec<usize>,
    pub delta_mean: Vec<f64>,
    pub delta_var: Vec<f64>,
    pub histogram: Vec<Histogram>,
    pub global_mean: f64,
    pub global_var: f64,
    pub n_delta: usize,
    /// Per-window statistics, for plotting.
    pub segments: Vec<Vec<WindowStat<f64>>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub links: Vec<LinkStationarity>,
    pub warnings: Vec<LinkWarning>,
}

/// Stationarity report of every link of `trace`.
///
/// Windows longer than a link's duration are left out of that link's report with a warning.
pub fn stationarity_report(trace: &Trace, windows_s: &[f64]) -> Result<StationarityReport> {
    if windows_s.is_empty() {
        return Err(Error::Config("at least one window length is required".into()));
    }
    if let Some(w) = windows_s.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
        return Err(Error::Config(format!("window lengths must be positive, got {w}")));
    }
    let mut report = StationarityReport::default();
    for link in trace.links() {
        match link_report(&link, windows_s, &mut report.warnings)? {
            Some(r) => report.links.push(r),
            None => report.warnings.push(LinkWarning {
                node_id: link.node_id.to_string(),
                message: "fewer than 3 samples, no differences to analyse".into(),
            }),
        }
    }
    Ok(report)
}

fn link_report(link: &Link<'_>, windows_s: &[f64], warnings: &mut Vec<LinkWarning>) -> Result<Option<LinkStationarity>> {
    let values = link.values();
    let ts = link.timestamps();
    if values.len() < 3 {
        return Ok(None);
    }
    let delta: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let delta_ts = &ts[1..];
    let global = RunningStats::from_values(delta.iter().copied())?;
    let duration_ms = ts[ts.len() - 1] - ts[0];

    let mut out = LinkStationarity {
        node_id: link.node_id.to_string(),
        window_s: Vec::new(),
        n_windows: Vec::new(),
        n_delta_used: Vec::new(),
        delta_mean: Vec::new(),
        delta_var: Vec::new(),
        histogram: Vec::new(),
        global_mean: global.mean(),
        global_var: global.variance()?,
        n_delta: delta.len(),
        segments: Vec::new(),
    };
    for &w in windows_s {
        let window_ms = (w * 1000.0).round() as i64;
        if window_ms > duration_ms {
            warnings.push(LinkWarning {
                node_id: link.node_id.to_string(),
                message: format!("window {w} s is longer than the {} ms trace, omitted", duration_ms),
            });
            continue;
        }
        let segments = window_stats(&delta, delta_ts, window_ms)?;
        let used: usize = segments.iter().map(|s| s.count).sum();
        let mean = segments.iter().map(|s| s.mean * s.count as f64).sum::<f64>() / used as f64;
        let ss: f64 = segments.iter().map(|s| s.variance * (s.count - 1) as f64).sum();
        let dof = used - segments.len();
        let origin = delta_ts[0];
        let in_used_window = |t: i64| {
            let start = origin + (t - origin) / window_ms * window_ms;
            segments.binary_search_by_key(&start, |s| s.start_ms).is_ok()
        };
        let hist = Histogram::from_values(
            delta.iter().zip(delta_ts).filter(|(_, &t)| in_used_window(t)).map(|(&d, _)| d).collect::<Vec<_>>(),
        );
        out.window_s.push(w);
        out.n_windows.push(segments.len());
        out.n_delta_used.push(used);
        out.delta_mean.push(mean);
        out.delta_var.push(if dof > 0 { ss / dof as f64 } else { 0.0 });
        out.histogram.push(hist);
        out.segments.push(segments);
    }
    Ok(Some(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::RssiSample;

    fn trace_of(values: &[f64], step_ms: i64) -> Trace {
        let samples = values
            .iter()
            .enumerate()
            .map(|(i, &v)| RssiSample::new(i as i64 * step_ms, "n1", "CC2538", "RV", v))
            .collect();
        Trace::from_samples(samples).0
    }

    #[test]
    fn constant_trace_is_flat() {
        let trace = trace_of(&vec![-70.0; 2000], 100);
        let r = stationarity_report(&trace, &[30.0, 60.0]).unwrap();
        let l = &r.links[0];
        assert!(l.delta_mean.iter().chain(&l.delta_var).all(|&x| x == 0.0));
        assert_eq!(l.histogram[0].counts, vec![l.n_delta_used[0] as u64]);
    }

    #[test]
    fn histogram_counts_match_samples() {
        let values: Vec<f64> = (0..1500).map(|i| -70.0 + ((i * 7919) % 13) as f64 * 0.37).collect();
        let trace = trace_of(&values, 100);
        let r = stationarity_report(&trace, &[30.0, 60.0, 90.0]).unwrap();
        let l = &r.links[0];
        for (h, used) in l.histogram.iter().zip(&l.n_delta_used) {
            assert_eq!(h.total(), *used as u64);
            assert_eq!(h.counts.len() as i64, 2 * h.half_width + 1);
        }
    }

    #[test]
    fn long_window_is_omitted() {
        let trace = trace_of(&vec![-70.0; 100], 100);
        let r = stationarity_report(&trace, &[5.0, 30.0]).unwrap();
        assert_eq!(r.links[0].window_s, vec![5.0]);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn slope_change_lowers_pooled_variance() {
        // ΔR is +0.2 for 100 samples then -0.2 for 100: constant inside each 10 s window
        let mut values = vec![-70.0];
        for i in 0..600 {
            let step = if (i / 100) % 2 == 0 { 0.2 } else { -0.2 };
            values.push(values[i] + step);
        }
        let trace = trace_of(&values, 100);
        let r = stationarity_report(&trace, &[10.0]).unwrap();
        let l = &r.links[0];
        assert!(l.delta_var[0] < 1e-20);
        assert!((l.global_var - 0.04).abs() < 1e-3);
    }

    #[test]
    fn histogram_bins_are_centred() {
        let h = Histogram::from_values(vec![-1.4, -0.6, 0.2, 0.49, 2.6]);
        assert_eq!(h.half_width, 3);
        let bins: Vec<(i64, u64)> = h.bins().filter(|b| b.1 > 0).collect();
        assert_eq!(bins, vec![(-1, 2), (0, 2), (3, 1)]);
    }
}
