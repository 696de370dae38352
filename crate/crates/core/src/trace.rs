//! RSSI samples and per-link traces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowest plausible RSSI (below the most sensitive supported receiver).
pub const RSSI_MIN_DBM: f64 = -130.0;
/// Highest plausible RSSI (maximum transmit power at zero distance).
pub const RSSI_MAX_DBM: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RssiSample {
    pub timestamp_ms: i64,
    pub node_id: String,
    pub radio: String,
    pub environment: String,
    pub rssi_dbm: f64,
}

impl RssiSample {
    pub fn new(
        timestamp_ms: i64,
        node_id: impl Into<String>,
        radio: impl Into<String>,
        environment: impl Into<String>,
        rssi_dbm: f64,
    ) -> Self {
        Self {
            timestamp_ms,
            node_id: node_id.into(),
            radio: radio.into(),
            environment: environment.into(),
            rssi_dbm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timestamp_ms < 0 {
            return Err(Error::Input(format!("negative timestamp {}", self.timestamp_ms)));
        }
        if !self.rssi_dbm.is_finite() {
            return Err(Error::Input(format!("rssi {} is not finite", self.rssi_dbm)));
        }
        if !(RSSI_MIN_DBM..=RSSI_MAX_DBM).contains(&self.rssi_dbm) {
            return Err(Error::Input(format!(
                "rssi {} dBm outside [{RSSI_MIN_DBM}, {RSSI_MAX_DBM}]",
                self.rssi_dbm
            )));
        }
        if self.node_id.is_empty() {
            return Err(Error::Input("empty node_id".into()));
        }
        Ok(())
    }
}

/// Samples of one or more links, ordered by `(node_id, timestamp_ms)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    samples: Vec<RssiSample>,
}

/// Borrowed view of one link.
#[derive(Debug, Clone, Copy)]
pub struct Link<'a> {
    pub node_id: &'a str,
    pub samples: &'a [RssiSample],
}

impl Link<'_> {
    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.rssi_dbm).collect()
    }

    pub fn timestamps(&self) -> Vec<i64> {
        self.samples.iter().map(|s| s.timestamp_ms).collect()
    }

    /// Radio label of the first sample, empty for an empty link.
    pub fn radio(&self) -> &str {
        self.samples.first().map_or("", |s| s.radio.as_str())
    }

    pub fn environment(&self) -> &str {
        self.samples.first().map_or("", |s| s.environment.as_str())
    }
}

impl Trace {
    /// Builds a trace, stable-sorting by link then timestamp.
    ///
    /// Returns `true` alongside the trace when the input had to be reordered.
    pub fn from_samples(mut samples: Vec<RssiSample>) -> (Self, bool) {
        let ordered = samples.windows(2).all(|w| {
            (w[0].node_id.as_str(), w[0].timestamp_ms) <= (w[1].node_id.as_str(), w[1].timestamp_ms)
        });
        if !ordered {
            samples.sort_by(|a, b| {
                a.node_id.cmp(&b.node_id).then(a.timestamp_ms.cmp(&b.timestamp_ms))
            });
        }
        (Self { samples }, !ordered)
    }

    pub fn samples(&self) -> &[RssiSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<RssiSample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn links(&self) -> Vec<Link<'_>> {
        self.samples
            .chunk_by(|a, b| a.node_id == b.node_id)
            .map(|chunk| Link { node_id: &chunk[0].node_id, samples: chunk })
            .collect()
    }

    /// Maps every RSSI value through `f`, keeping metadata and order.
    pub fn map_rssi(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        let samples = self
            .samples
            .iter()
            .map(|s| RssiSample { rssi_dbm: f(s.rssi_dbm), ..s.clone() })
            .collect();
        Self { samples }
    }

    /// First `n` samples of every link.
    pub fn link_prefixes(&self, n: usize) -> Self {
        let samples = self
            .links()
            .into_iter()
            .flat_map(|l| l.samples[..n.min(l.samples.len())].iter().cloned())
            .collect();
        Self { samples }
    }

    pub fn concat(traces: impl IntoIterator<Item = Trace>) -> (Self, bool) {
        Self::from_samples(traces.into_iter().flat_map(|t| t.samples).collect())
    }
}
