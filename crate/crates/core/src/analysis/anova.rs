//! One-way analysis of variance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize, Serializer};

use super::special::f_survival;
use crate::error::{Error, Result};
use crate::trace::Trace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    /// `+inf` when the groups are internally constant but differ.
    #[serde(serialize_with = "finite_or_sentinel")]
    pub f_stat: f64,
    pub df_between: u64,
    pub df_within: u64,
    pub p_value: f64,
    pub ss_between: f64,
    pub ss_within: f64,
}

fn finite_or_sentinel<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_infinite() && *x > 0.0 {
        s.serialize_str("Infinity")
    } else {
        s.serialize_f64(*x)
    }
}

/// Mean that reproduces the common value exactly for constant input.
fn exact_mean(xs: &[f64]) -> f64 {
    let first = xs[0];
    if xs.iter().all(|&x| x == first) {
        return first;
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    m + xs.iter().map(|&x| x - m).sum::<f64>() / n
}

/// One-way ANOVA over `groups`, each with at least two samples.
pub fn anova_oneway<G: AsRef<[f64]>>(groups: &[G]) -> Result<AnovaResult> {
    if groups.len() < 2 {
        return Err(Error::Input(format!("ANOVA needs at least 2 groups, got {}", groups.len())));
    }
    for (i, g) in groups.iter().enumerate() {
        let g = g.as_ref();
        if g.len() < 2 {
            return Err(Error::Input(format!("ANOVA group {i} has {} samples, need 2", g.len())));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input(format!("ANOVA group {i} contains a non-finite value")));
        }
    }
    let all: Vec<f64> = groups.iter().flat_map(|g| g.as_ref().iter().copied()).collect();
    let grand = exact_mean(&all);
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let g = g.as_ref();
        let m = exact_mean(g);
        ssb += g.len() as f64 * (m - grand) * (m - grand);
        ssw += g.iter().map(|&x| (x - m) * (x - m)).sum::<f64>();
    }
    let df_between = (groups.len() - 1) as u64;
    let df_within = (all.len() - groups.len()) as u64;
    let (f_stat, p_value) = if ssb == 0.0 {
        (0.0, 1.0)
    } else if ssw == 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        let f = (ssb / df_between as f64) / (ssw / df_within as f64);
        (f, f_survival(f, df_between as f64, df_within as f64)?)
    };
    Ok(AnovaResult { f_stat, df_between, df_within, p_value, ss_between: ssb, ss_within: ssw })
}

/// Sample attribute that defines ANOVA groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Environment,
    Radio,
    NodeId,
}

impl GroupKey {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupKey::Environment => "environment",
            GroupKey::Radio => "radio",
            GroupKey::NodeId => "node_id",
        }
    }
}

impl std::str::FromStr for GroupKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "environment" | "env" => Ok(GroupKey::Environment),
            "radio" => Ok(GroupKey::Radio),
            "node_id" | "node" => Ok(GroupKey::NodeId),
            _ => Err(Error::Config(format!("unknown grouping key `{s}` (expected environment|radio|node_id)"))),
        }
    }
}

/// RSSI values of `trace` grouped by `key`, in label order.
pub fn group_rssi(trace: &Trace, key: GroupKey) -> BTreeMap<String, Vec<f64>> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in trace.samples() {
        let label = match key {
            GroupKey::Environment => &s.environment,
            GroupKey::Radio => &s.radio,
            GroupKey::NodeId => &s.node_id,
        };
        groups.entry(label.clone()).or_default().push(s.rssi_dbm);
    }
    groups
}

/// ANOVA of RSSI between the groups formed by `key`. Returns the group labels used.
pub fn anova_by(trace: &Trace, key: GroupKey) -> Result<(Vec<String>, AnovaResult)> {
    let groups = group_rssi(trace, key);
    let labels = groups.keys().cloned().collect();
    let values: Vec<Vec<f64>> = groups.into_values().collect();
    Ok((labels, anova_oneway(&values)?))
}
