//! Synthetic RSSI traces with known ground truth.
//!
//! `R_t = P_t - PL(d) + D_t + eta_t` where `PL` is the log-distance path loss, `D_t` is an
//! AR(1) shadowing process with stationary standard deviation `shadow_sigma` and `eta_t` is
//! white Gaussian noise. Outliers are injected additively (in dB) at exact sample indices
//! and returned as labels.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{RssiSample, Trace};

/// `pl0 + 10 n log10(d / d0)` in dB.
pub fn path_loss(d: f64, d0: f64, n_exp: f64, pl0: f64) -> Result<f64> {
    if !(d0 > 0.0) || !d0.is_finite() {
        return Err(Error::Input(format!("reference distance must be positive, got {d0}")));
    }
    if !(d >= d0) || !d.is_finite() {
        return Err(Error::Input(format!("distance {d} m is below the reference distance {d0} m")));
    }
    Ok(pl0 + 10.0 * n_exp * (d / d0).log10())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Transmit power in dBm, constant over the trace.
    pub p_tx: f64,
    pub pl0: f64,
    pub d0: f64,
    pub d: f64,
    pub n_exp: f64,
    pub shadow_sigma: f64,
    /// Per-sample AR(1) coefficient of the shadowing process.
    pub shadow_rho: f64,
    pub noise_sigma: f64,
    pub rate_hz: f64,
    pub duration_s: f64,
    /// `(time_s, offset_db)` pairs.
    pub outlier_inject: Vec<(f64, f64)>,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            p_tx: 0.0,
            pl0: 40.0,
            d0: 1.0,
            d: 5.0,
            n_exp: 2.5,
            shadow_sigma: 2.0,
            shadow_rho: 0.95,
            noise_sigma: 1.5,
            rate_hz: 10.0,
            duration_s: 60.0,
            outlier_inject: Vec::new(),
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.p_tx,
            self.pl0,
            self.d0,
            self.d,
            self.n_exp,
            self.shadow_sigma,
            self.shadow_rho,
            self.noise_sigma,
            self.rate_hz,
            self.duration_s,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("channel parameters must be finite".into()));
        }
        if !(self.d0 > 0.0 && self.d >= self.d0) {
            return Err(Error::Config(format!("need d >= d0 > 0, got d={} d0={}", self.d, self.d0)));
        }
        if self.noise_sigma < 0.0 || self.shadow_sigma < 0.0 {
            return Err(Error::Config("noise and shadowing deviations must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.shadow_rho) {
            return Err(Error::Config(format!("shadow_rho must lie in [0, 1), got {}", self.shadow_rho)));
        }
        if !(self.rate_hz > 0.0 && self.duration_s > 0.0) {
            return Err(Error::Config("rate and duration must be positive".into()));
        }
        if self.outlier_inject.iter().any(|(t, o)| !t.is_finite() || !o.is_finite() || *t < 0.0) {
            return Err(Error::Config("injections need finite, non-negative times and finite offsets".into()));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        // tolerate representation error in products such as 3 * 600
        (self.rate_hz * self.duration_s - 1e-9).ceil().max(0.0) as usize
    }

    pub fn mean_rssi(&self) -> Result<f64> {
        Ok(self.p_tx - path_loss(self.d, self.d0, self.n_exp, self.pl0)?)
    }
}

/// Ground-truth injection at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub timestamp_ms: i64,
    pub offset_db: f64,
}

/// Names attached to a simulated link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkMeta {
    pub node_id: String,
    pub radio: String,
    pub environment: String,
}

impl Default for LinkMeta {
    fn default() -> Self {
        Self { node_id: "n1".into(), radio: "SIM".into(), environment: "SIM".into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTrace {
    pub trace: Trace,
    /// Sorted by timestamp, one entry per injected sample.
    pub labels: Vec<Label>,
}

fn timestamp_ms(index: usize, rate_hz: f64) -> i64 {
    (index as f64 * 1000.0 / rate_hz).round() as i64
}

/// Generates one link. Deterministic in `(params, seed)`.
pub fn simulate_trace(params: &ChannelParams, seed: u64, meta: &LinkMeta) -> Result<SimulatedTrace> {
    params.validate()?;
    let n = params.n_samples();
    let level = params.mean_rssi()?;
    let innovation = (1.0 - params.shadow_rho * params.shadow_rho).sqrt() * params.shadow_sigma;

    let mut offsets = vec![0.0; n];
    let mut injected = vec![false; n];
    for &(time_s, offset_db) in &params.outlier_inject {
        if n == 0 {
            break;
        }
        let idx = ((time_s * params.rate_hz).round() as usize).min(n - 1);
        offsets[idx] += offset_db;
        injected[idx] = true;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shadow = 0.0;
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::new();
    for i in 0..n {
        let w: f64 = StandardNormal.sample(&mut rng);
        let e: f64 = StandardNormal.sample(&mut rng);
        if i > 0 {
            shadow = params.shadow_rho * shadow + innovation * w;
        }
        let rssi = level + shadow + params.noise_sigma * e + offsets[i];
        let ts = timestamp_ms(i, params.rate_hz);
        samples.push(RssiSample::new(ts, &meta.node_id, &meta.radio, &meta.environment, rssi));
        if injected[i] {
            labels.push(Label { timestamp_ms: ts, offset_db: offsets[i] });
        }
    }
    Ok(SimulatedTrace { trace: Trace::from_samples(samples).0, labels })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Radio {
    #[serde(rename = "CC1200")]
    Cc1200,
    #[serde(rename = "CC2538")]
    Cc2538,
    #[serde(rename = "nRF52840")]
    Nrf52840,
    #[serde(rename = "BLE")]
    Ble,
}

impl Radio {
    pub const ALL: [Radio; 4] = [Radio::Ble, Radio::Cc1200, Radio::Cc2538, Radio::Nrf52840];

    pub fn name(self) -> &'static str {
        match self {
            Radio::Cc1200 => "CC1200",
            Radio::Cc2538 => "CC2538",
            Radio::Nrf52840 => "nRF52840",
            Radio::Ble => "BLE",
        }
    }

    pub fn profile(self) -> RadioProfile {
        // packet rates from the deployment's node configuration; noise levels are model choices
        let (rate_hz, noise_sigma) = match self {
            Radio::Cc1200 => (3.0, 0.8),
            Radio::Cc2538 => (25.0, 1.5),
            Radio::Nrf52840 => (10.0, 1.2),
            Radio::Ble => (5.0, 2.0),
        };
        RadioProfile { radio: self, rate_hz, p_tx: 0.0, noise_sigma }
    }
}

impl std::str::FromStr for Radio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Radio::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown radio `{s}` (expected CC1200|CC2538|nRF52840|BLE)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioProfile {
    pub radio: Radio,
    pub rate_hz: f64,
    pub p_tx: f64,
    /// Receiver-side noise, combined in quadrature with the environment's noise.
    pub noise_sigma: f64,
}

/// Environment knobs. None of these values are measured; they only span a plausible range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvPreset {
    pub label: &'static str,
    pub shadow_sigma: f64,
    /// Correlation time of the shadowing in seconds; converted to a per-sample AR coefficient.
    pub shadow_corr_s: f64,
    pub noise_sigma: f64,
    pub n_exp: f64,
    pub distance_m: f64,
    /// Fraction of samples that receive an injected deviation in the benchmark suite.
    pub event_rate: f64,
}

pub const ENV_PRESETS: [EnvPreset; 8] = [
    EnvPreset { label: "BG", shadow_sigma: 4.0, shadow_corr_s: 4.0, noise_sigma: 1.5, n_exp: 3.5, distance_m: 10.0, event_rate: 0.012 },
    EnvPreset { label: "FR", shadow_sigma: 4.5, shadow_corr_s: 3.0, noise_sigma: 1.5, n_exp: 3.8, distance_m: 10.0, event_rate: 0.014 },
    EnvPreset { label: "GG", shadow_sigma: 1.0, shadow_corr_s: 20.0, noise_sigma: 0.5, n_exp: 2.0, distance_m: 5.0, event_rate: 0.006 },
    EnvPreset { label: "LK", shadow_sigma: 2.0, shadow_corr_s: 10.0, noise_sigma: 0.8, n_exp: 2.4, distance_m: 8.0, event_rate: 0.009 },
    EnvPreset { label: "RV", shadow_sigma: 2.5, shadow_corr_s: 8.0, noise_sigma: 1.0, n_exp: 2.6, distance_m: 8.0, event_rate: 0.010 },
    EnvPreset { label: "PP", shadow_sigma: 1.5, shadow_corr_s: 15.0, noise_sigma: 0.7, n_exp: 2.2, distance_m: 6.0, event_rate: 0.007 },
    EnvPreset { label: "RA", shadow_sigma: 3.0, shadow_corr_s: 6.0, noise_sigma: 1.2, n_exp: 3.0, distance_m: 6.0, event_rate: 0.011 },
    EnvPreset { label: "CA", shadow_sigma: 2.0, shadow_corr_s: 12.0, noise_sigma: 1.0, n_exp: 2.8, distance_m: 7.0, event_rate: 0.008 },
];

/// Preset labels used by the default benchmark grid.
pub const DEFAULT_SUITE_PRESETS: [&str; 5] = ["BG", "FR", "GG", "LK", "RV"];

pub fn env_preset(label: &str) -> Result<EnvPreset> {
    ENV_PRESETS
        .iter()
        .find(|p| p.label.eq_ignore_ascii_case(label))
        .copied()
        .ok_or_else(|| Error::Config(format!("unknown environment preset `{label}`")))
}

impl EnvPreset {
    /// Channel parameters for this environment seen through `radio`, without injections.
    pub fn channel_params(&self, radio: &RadioProfile, duration_s: f64) -> ChannelParams {
        ChannelParams {
            p_tx: radio.p_tx,
            pl0: 40.0,
            d0: 1.0,
            d: self.distance_m,
            n_exp: self.n_exp,
            shadow_sigma: self.shadow_sigma,
            shadow_rho: (-1.0 / (radio.rate_hz * self.shadow_corr_s)).exp(),
            noise_sigma: self.noise_sigma.hypot(radio.noise_sigma),
            rate_hz: radio.rate_hz,
            duration_s,
            outlier_inject: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub duration_s: f64,
    /// Injections are kept out of the first `guard_s` seconds (detector warm-up).
    pub guard_s: f64,
    /// Injected offsets are drawn uniformly from `±[lo, hi]` dB.
    pub offset_db: (f64, f64),
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { duration_s: 600.0, guard_s: 20.0, offset_db: (10.0, 20.0) }
    }
}

/// One member of a benchmark suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteTrace {
    pub preset: &'static str,
    pub radio: Radio,
    pub seed: u64,
    pub params: ChannelParams,
    pub sim: SimulatedTrace,
}

/// Stable seed for a `(preset, radio, seed)` triple (FNV-1a over the labels).
pub fn derive_seed(preset: &str, radio: Radio, seed: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let bytes = preset.bytes().chain([b'|']).chain(radio.name().bytes()).chain([b'|']).chain(seed.to_le_bytes());
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Injection schedule for one suite member: `round(event_rate * n)` distinct samples after
/// the guard interval.
pub fn suite_injections(params: &ChannelParams, preset: &EnvPreset, opts: &SuiteOptions, seed: u64) -> Vec<(f64, f64)> {
    let n = params.n_samples();
    let first = ((opts.guard_s * params.rate_hz).ceil() as usize).min(n);
    let span = n - first;
    let count = ((preset.event_rate * n as f64).round() as usize).min(span);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut picks = index::sample(&mut rng, span, count).into_vec();
    picks.sort_unstable();
    picks
        .into_iter()
        .map(|i| {
            let magnitude = rng.random_range(opts.offset_db.0..=opts.offset_db.1);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            ((first + i) as f64 / params.rate_hz, sign * magnitude)
        })
        .collect()
}

/// Cartesian product of presets and radios with injected outliers.
pub fn benchmark_suite(presets: &[EnvPreset], radios: &[Radio], seed: u64) -> Result<Vec<SuiteTrace>> {
    benchmark_suite_with(presets, radios, seed, &SuiteOptions::default())
}

pub fn benchmark_suite_with(
    presets: &[EnvPreset],
    radios: &[Radio],
    seed: u64,
    opts: &SuiteOptions,
) -> Result<Vec<SuiteTrace>> {
    if presets.is_empty() || radios.is_empty() {
        return Err(Error::Config("benchmark suite needs at least one preset and one radio".into()));
    }
    let mut out = Vec::with_capacity(presets.len() * radios.len());
    for preset in presets {
        for &radio in radios {
            let member_seed = derive_seed(preset.label, radio, seed);
            let mut params = preset.channel_params(&radio.profile(), opts.duration_s);
            params.outlier_inject = suite_injections(&params, preset, opts, member_seed);
            let meta = LinkMeta {
                node_id: format!("{}-{}", radio.name(), preset.label),
                radio: radio.name().to_string(),
                environment: preset.label.to_string(),
            };
            let sim = simulate_trace(&params, member_seed, &meta)?;
            out.push(SuiteTrace { preset: preset.label, radio, seed: member_seed, params, sim });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RunningStats;

    #[test]
    fn path_loss_examples() {
        assert_eq!(path_loss(1.0, 1.0, 3.0, 40.0).unwrap(), 40.0);
        assert!((path_loss(10.0, 1.0, 2.0, 40.0).unwrap() - 60.0).abs() < 1e-12);
        let want = 40.0 + 30.0 * 5f64.log10();
        assert!((path_loss(5.0, 1.0, 3.0, 40.0).unwrap() - want).abs() < 1e-12);
        assert!((want - 60.97).abs() < 0.01);
        assert!(path_loss(0.5, 1.0, 2.0, 40.0).is_err());
        assert!(path_loss(1.0, 0.0, 2.0, 40.0).is_err());
    }

    #[test]
    fn noiseless_channel_is_constant() {
        let params = ChannelParams { noise_sigma: 0.0, shadow_sigma: 0.0, ..ChannelParams::default() };
        let sim = simulate_trace(&params, 1, &LinkMeta::default()).unwrap();
        let want = params.mean_rssi().unwrap();
        assert_eq!(sim.trace.len(), 600);
        assert!(sim.trace.samples().iter().all(|s| s.rssi_dbm == want));
        assert!(sim.labels.is_empty());
    }

    #[test]
    fn sample_count_and_spacing() {
        let params = ChannelParams { rate_hz: 3.0, duration_s: 600.0, ..ChannelParams::default() };
        let sim = simulate_trace(&params, 1, &LinkMeta::default()).unwrap();
        assert_eq!(sim.trace.len(), 1800);
        let ts = sim.trace.links()[0].timestamps();
        assert_eq!(&ts[..4], &[0, 333, 667, 1000]);
        let params = ChannelParams { rate_hz: 3.0, duration_s: 0.5, ..ChannelParams::default() };
        assert_eq!(params.n_samples(), 2);
    }

    #[test]
    fn independent_components_add_variance() {
        let params = ChannelParams {
            shadow_rho: 0.0,
            shadow_sigma: 2.0,
            noise_sigma: 1.5,
            rate_hz: 1000.0,
            duration_s: 1000.0,
            ..ChannelParams::default()
        };
        let sim = simulate_trace(&params, 3, &LinkMeta::default()).unwrap();
        let v = RunningStats::from_values(sim.trace.samples().iter().map(|s| s.rssi_dbm)).unwrap();
        let want = 4.0 + 2.25;
        assert!((v.variance().unwrap() - want).abs() / want < 0.02);
    }

    #[test]
    fn ar1_stationary_variance() {
        let params = ChannelParams {
            shadow_rho: 0.9,
            shadow_sigma: 3.0,
            noise_sigma: 0.0,
            rate_hz: 1000.0,
            duration_s: 1000.0,
            ..ChannelParams::default()
        };
        let sim = simulate_trace(&params, 4, &LinkMeta::default()).unwrap();
        let v = RunningStats::from_values(sim.trace.samples().iter().map(|s| s.rssi_dbm)).unwrap();
        assert!((v.variance().unwrap() - 9.0).abs() / 9.0 < 0.02);
    }

    #[test]
    fn same_seed_same_trace() {
        let params = ChannelParams { outlier_inject: vec![(10.0, 12.0)], ..ChannelParams::default() };
        let a = simulate_trace(&params, 99, &LinkMeta::default()).unwrap();
        let b = simulate_trace(&params, 99, &LinkMeta::default()).unwrap();
        assert_eq!(a, b);
        let c = simulate_trace(&params, 100, &LinkMeta::default()).unwrap();
        assert_ne!(a.trace, c.trace);
    }

    #[test]
    fn injections_land_on_nearest_sample() {
        let base = ChannelParams { noise_sigma: 0.0, shadow_sigma: 0.0, rate_hz: 10.0, ..ChannelParams::default() };
        let params = ChannelParams { outlier_inject: vec![(1.04, 15.0), (2.06, -12.0), (999.0, 5.0)], ..base.clone() };
        let sim = simulate_trace(&params, 5, &LinkMeta::default()).unwrap();
        let level = base.mean_rssi().unwrap();
        let s = sim.trace.samples();
        assert_eq!(s[10].rssi_dbm, level + 15.0);
        assert_eq!(s[21].rssi_dbm, level - 12.0);
        assert_eq!(s[599].rssi_dbm, level + 5.0);
        let stamps: Vec<i64> = sim.labels.iter().map(|l| l.timestamp_ms).collect();
        assert_eq!(stamps, vec![1000, 2100, 59900]);
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = [
            ChannelParams { d: 0.5, ..ChannelParams::default() },
            ChannelParams { shadow_rho: 1.0, ..ChannelParams::default() },
            ChannelParams { noise_sigma: -1.0, ..ChannelParams::default() },
            ChannelParams { rate_hz: 0.0, ..ChannelParams::default() },
        ];
        for p in bad {
            assert!(matches!(simulate_trace(&p, 1, &LinkMeta::default()), Err(Error::Config(_))));
        }
    }

    #[test]
    fn suite_cardinality_and_order_independence() {
        let presets: Vec<EnvPreset> = DEFAULT_SUITE_PRESETS.iter().map(|l| env_preset(l).unwrap()).collect();
        let opts = SuiteOptions { duration_s: 60.0, ..SuiteOptions::default() };
        let suite = benchmark_suite_with(&presets, &Radio::ALL, 7, &opts).unwrap();
        assert_eq!(suite.len(), 20);

        let mut reversed = presets.clone();
        reversed.reverse();
        let other = benchmark_suite_with(&reversed, &Radio::ALL, 7, &opts).unwrap();
        for member in &suite {
            let twin = other.iter().find(|m| m.preset == member.preset && m.radio == member.radio).unwrap();
            assert_eq!(twin.sim, member.sim);
        }
        assert!(benchmark_suite(&[], &Radio::ALL, 7).is_err());
    }

    #[test]
    fn suite_injection_count() {
        let preset = env_preset("RV").unwrap();
        let opts = SuiteOptions::default();
        let suite = benchmark_suite_with(&[preset], &[Radio::Cc2538], 1, &opts).unwrap();
        let n = suite[0].sim.trace.len();
        assert_eq!(n, 15_000);
        assert_eq!(suite[0].sim.labels.len(), (preset.event_rate * n as f64).round() as usize);
        assert!(suite[0].sim.labels.iter().all(|l| l.timestamp_ms >= 20_000));
        for l in &suite[0].sim.labels {
            assert!((10.0..=20.0).contains(&l.offset_db.abs()));
        }
    }

    #[test]
    fn radio_and_preset_lookup() {
        assert_eq!("nrf52840".parse::<Radio>().unwrap(), Radio::Nrf52840);
        assert_eq!(Radio::Cc1200.profile().rate_hz, 3.0);
        assert_eq!(Radio::Cc2538.profile().rate_hz, 25.0);
        assert_eq!(Radio::Nrf52840.profile().rate_hz, 10.0);
        assert_eq!(Radio::Ble.profile().rate_hz, 5.0);
        assert!(env_preset("xx").is_err());
    }
}
