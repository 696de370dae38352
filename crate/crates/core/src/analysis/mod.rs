//! Batch analysis: stationarity of ΔRSSI, one-way ANOVA, the deviation density and the
//! five-method comparison.

pub mod anova;
pub mod compare;
pub mod density;
pub mod special;
pub mod stationarity;

pub use anova::{anova_by, anova_oneway, AnovaResult, GroupKey};
pub use compare::{compare_methods, default_baselines, CellReport, ComparisonReport, LabeledTrace, MethodSummary};
pub use density::{
    folded_normal_pdf, monte_carlo_sigma_z, z_density_branches, z_density_numeric, SigmaZEstimate,
};
pub use stationarity::{stationarity_report, Histogram, LinkStationarity, StationarityReport};

/// Type-7 sample quantile (linear interpolation between order statistics) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

#[cfg(test)]
mod tests {
    use super::quantile_sorted;

    #[test]
    fn type7_quantiles() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&xs, 0.5), Some(2.5));
        assert_eq!(quantile_sorted(&xs, 0.25), Some(1.75));
        assert_eq!(quantile_sorted(&xs, 1.0), Some(4.0));
        assert_eq!(quantile_sorted(&[], 0.5), None);
    }
}
