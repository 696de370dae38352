use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use linkq::analysis::{anova::GroupKey, anova_by, compare_methods, stationarity_report};
use linkq::baselines::{detect_baseline, BaselineConfig, Method};
use linkq::channel::{benchmark_suite, env_preset, simulate_trace, LinkMeta, Radio, DEFAULT_SUITE_PRESETS};
use linkq::config::{parse_alpha_policy, parse_config, RunConfig};
use linkq::detector::{detect_stream, KMode, Normalization, SigmaEstimator};
use linkq::io;
use linkq::{Error, Result, Trace};

/// RSSI link-quality outlier detection.
#[derive(Parser)]
#[command(name = "linkq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trace (and its labels) or a whole benchmark suite.
    Simulate(SimulateArgs),
    /// Flag outliers in a trace.
    Detect(DetectArgs),
    /// ΔRSSI stationarity and one-way ANOVA.
    Analyze(AnalyzeArgs),
    /// Score the adaptive detector and the baselines on a labelled suite.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Environment preset (BG, FR, GG, LK, RV, PP, RA, CA).
    #[arg(long, default_value = "RV")]
    preset: String,
    /// Radio profile (CC1200, CC2538, nRF52840, BLE).
    #[arg(long, default_value = "CC2538")]
    radio: String,
    #[arg(long, default_value_t = 600.0)]
    duration: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Injected outliers as `time_s:offset_db` pairs, comma separated.
    #[arg(long, value_name = "T:OFF,...")]
    inject: Option<String>,
    #[arg(long)]
    node_id: Option<String>,
    /// Output trace CSV; labels go to the sibling `.labels.csv`.
    #[arg(short, long, required_unless_present = "suite")]
    output: Option<PathBuf>,
    /// Write the default 5 x 4 benchmark suite into this directory instead.
    #[arg(long, conflicts_with = "output")]
    suite: Option<PathBuf>,
}

#[derive(Args, Default)]
struct DetectorFlags {
    /// Line-oriented `key = value` config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    delta: Option<f64>,
    /// literal | derived
    #[arg(long)]
    k_mode: Option<String>,
    /// calibrated | fixed:<alpha>
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    warmup: Option<usize>,
    /// none | zscore | minmax
    #[arg(long)]
    normalize: Option<String>,
    /// online | closed_form
    #[arg(long)]
    sigma_estimator: Option<String>,
}

impl DetectorFlags {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                parse_config(&text)?
            }
            None => RunConfig::default(),
        };
        let d = &mut cfg.detector;
        if let Some(x) = self.delta {
            d.delta = x;
        }
        if let Some(s) = &self.k_mode {
            d.k_mode = s.parse::<KMode>()?;
        }
        if let Some(s) = &self.alpha {
            d.alpha_policy = parse_alpha_policy(s, d.alpha_policy)?;
        }
        if let Some(w) = self.warmup {
            d.warmup = w;
        }
        if let Some(s) = &self.normalize {
            d.normalization = s.parse::<Normalization>()?;
        }
        if let Some(s) = &self.sigma_estimator {
            d.sigma_estimator = s.parse::<SigmaEstimator>()?;
        }
        d.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct DetectArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[command(flatten)]
    flags: DetectorFlags,
    /// adaptive_ema or one of the baselines (basic_ema, zscore, moving_average, mad).
    #[arg(long, default_value = "adaptive_ema")]
    method: String,
    /// Events CSV; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Per-link summary JSON.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// Window lengths in seconds.
    #[arg(long, value_delimiter = ',', default_value = "30,60,90,120,150")]
    stationarity: Vec<f64>,
    /// environment | radio | node_id
    #[arg(long)]
    anova_by: Option<String>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Directory of trace CSVs with sibling `.labels.csv` files.
    #[arg(long)]
    suite: PathBuf,
    #[command(flatten)]
    flags: DetectorFlags,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Box-plot CSV (method, radio, env, rate).
    #[arg(long)]
    plot_data: Option<PathBuf>,
}

fn warn(msg: impl std::fmt::Display) {
    eprintln!("warning: {msg}");
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => io::write_file(p, bytes),
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn parse_injections(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|pair| {
            let (t, off) = pair
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("injection `{pair}` is not `time_s:offset_db`")))?;
            let num = |v: &str| {
                v.trim().parse::<f64>().map_err(|_| Error::Config(format!("injection `{pair}` has a bad number")))
            };
            Ok((num(t)?, num(off)?))
        })
        .collect()
}

fn load_trace(path: &Path) -> Result<Trace> {
    let parsed = io::read_trace_file(path)?;
    for e in &parsed.row_errors {
        warn(format!("{}: {e}", path.display()));
    }
    if parsed.reordered {
        warn(format!("{}: rows were out of order and have been sorted by node and time", path.display()));
    }
    Ok(parsed.trace)
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    if let Some(dir) = &args.suite {
        let presets: Vec<_> = DEFAULT_SUITE_PRESETS.iter().map(|l| env_preset(l)).collect::<Result<_>>()?;
        for member in benchmark_suite(&presets, &Radio::ALL, args.seed)? {
            let path = dir.join(format!("{}_{}.csv", member.preset, member.radio.name()));
            write_trace_and_labels(&path, &member.sim.trace, &member.sim.labels)?;
        }
        return Ok(());
    }
    let preset = env_preset(&args.preset)?;
    let radio: Radio = args.radio.parse()?;
    if !(args.duration > 0.0) {
        return Err(Error::Config(format!("duration must be positive, got {}", args.duration)));
    }
    let mut params = preset.channel_params(&radio.profile(), args.duration);
    if let Some(spec) = &args.inject {
        params.outlier_inject = parse_injections(spec)?;
    }
    let meta = LinkMeta {
        node_id: args.node_id.clone().unwrap_or_else(|| format!("{}-{}", radio.name(), preset.label)),
        radio: radio.name().to_string(),
        environment: preset.label.to_string(),
    };
    let sim = simulate_trace(&params, args.seed, &meta)?;
    let path = args.output.as_ref().expect("clap enforces output or suite");
    write_trace_and_labels(path, &sim.trace, &sim.labels)
}

fn write_trace_and_labels(path: &Path, trace: &Trace, labels: &[linkq::channel::Label]) -> Result<()> {
    let mut buf = Vec::new();
    io::write_trace_csv(&mut buf, trace)?;
    io::write_file(path, &buf)?;
    let mut buf = Vec::new();
    io::write_labels_csv(&mut buf, labels)?;
    io::write_file(&io::labels_path(path), &buf)
}

fn detect(args: &DetectArgs) -> Result<()> {
    let cfg = args.flags.resolve()?;
    let method: Method = args.method.parse()?;
    let trace = load_trace(&args.input)?;

    let (events_csv, summary_json) = if method == Method::AdaptiveEma {
        let out = detect_stream(&trace, &cfg.detector)?;
        for w in &out.warnings {
            warn(format!("link {}: {}", w.node_id, w.message));
        }
        let mut buf = Vec::new();
        io::write_events_csv(&mut buf, &out.events)?;
        let body = json!({ "method": method.as_str(), "config": cfg.detector, "links": out.summary, "warnings": out.warnings });
        (buf, io::to_versioned_json("detect_summary", &body)?)
    } else {
        let bcfg = cfg
            .baselines
            .iter()
            .find(|b| b.method == method)
            .copied()
            .unwrap_or_else(|| BaselineConfig { warmup: cfg.detector.warmup, ..BaselineConfig::default_for(method) });
        let out = detect_baseline(&trace, &bcfg)?;
        for w in &out.warnings {
            warn(format!("link {}: {}", w.node_id, w.message));
        }
        let mut buf = Vec::new();
        io::write_method_events_csv(&mut buf, &out.events)?;
        let body = json!({ "method": method.as_str(), "config": bcfg, "links": out.summary, "warnings": out.warnings });
        (buf, io::to_versioned_json("detect_summary", &body)?)
    };
    emit(args.output.as_deref(), &events_csv)?;
    if let Some(p) = &args.summary {
        io::write_file(p, summary_json.as_bytes())?;
    }
    Ok(())
}

fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let key = args.anova_by.as_deref().map(str::parse::<GroupKey>).transpose()?;
    let trace = load_trace(&args.input)?;
    let stationarity = stationarity_report(&trace, &args.stationarity)?;
    for w in &stationarity.warnings {
        warn(format!("link {}: {}", w.node_id, w.message));
    }
    let anova = match key {
        Some(key) => {
            let (groups, result) = anova_by(&trace, key)?;
            Some(json!({ "group_by": key.as_str(), "groups": groups, "result": result }))
        }
        None => None,
    };
    let body = json!({ "stationarity": stationarity, "anova": anova });
    emit(args.output.as_deref(), io::to_versioned_json("analysis_report", &body)?.as_bytes())
}

fn compare(args: &CompareArgs) -> Result<()> {
    let cfg = args.flags.resolve()?;
    let (traces, read_warnings) = io::read_suite_dir(&args.suite)?;
    for w in &read_warnings {
        warn(w);
    }
    let report = compare_methods(&traces, &cfg.detector, &cfg.baselines)?;
    for w in &report.warnings {
        warn(format!("{}: {}", w.node_id, w.message));
    }
    let body = json!({
        "detector": cfg.detector,
        "baselines": cfg.baselines,
        "traces": traces.iter().map(|t| t.name.as_str()).collect::<Vec<_>>(),
        "cells": report.cells,
        "methods": report.methods,
        "warnings": report.warnings,
    });
    emit(args.output.as_deref(), io::to_versioned_json("comparison", &body)?.as_bytes())?;
    if let Some(p) = &args.plot_data {
        let mut buf = Vec::new();
        io::write_boxplot_csv(&mut buf, &report)?;
        io::write_file(p, &buf)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Detect(a) => detect(a),
        Command::Analyze(a) => analyze(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

