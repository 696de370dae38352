//! CSV and JSON file formats.
//!
//! Every CSV file starts with a `# schema_version=1.0` comment line followed by a header.
//! Parsers accept files without the comment line and reject any other major version.
//! Every JSON document carries a top-level `schema_version` string.
//!
//! | file | columns |
//! |------|---------|
//! | trace | `timestamp_ms,node_id,radio,environment,rssi_dbm` |
//! | labels | `timestamp_ms,offset_db` |
//! | events | `timestamp_ms,node_id,rssi_dbm,ema_prev_dbm,z_dbm,threshold_dbm,k` |
//! | baseline events | `method,timestamp_ms,node_id,rssi_dbm,reference_dbm,deviation_dbm,threshold_dbm,k` |
//! | box plot | `method,radio,env,rate` |
//!
//! Reals are written in shortest round-trip form; an undefined `k` is an empty field.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::{ComparisonReport, LabeledTrace};
use crate::baselines::MethodEvent;
use crate::channel::Label;
use crate::detector::OutlierEvent;
use crate::error::{Error, Result};
use crate::trace::{RssiSample, Trace};

pub const SCHEMA_VERSION: &str = "1.0";
const SCHEMA_MAJOR: u64 = 1;

pub const TRACE_COLUMNS: [&str; 5] = ["timestamp_ms", "node_id", "radio", "environment", "rssi_dbm"];
pub const LABEL_COLUMNS: [&str; 2] = ["timestamp_ms", "offset_db"];
pub const EVENT_COLUMNS: [&str; 7] =
    ["timestamp_ms", "node_id", "rssi_dbm", "ema_prev_dbm", "z_dbm", "threshold_dbm", "k"];
pub const METHOD_EVENT_COLUMNS: [&str; 8] =
    ["method", "timestamp_ms", "node_id", "rssi_dbm", "reference_dbm", "deviation_dbm", "threshold_dbm", "k"];
pub const BOXPLOT_COLUMNS: [&str; 4] = ["method", "radio", "env", "rate"];

fn check_version(version: &str) -> Result<()> {
    let major = version
        .split('.')
        .next()
        .and_then(|m| m.trim().parse::<u64>().ok())
        .ok_or_else(|| Error::Format(format!("unreadable schema version `{version}`")))?;
    if major != SCHEMA_MAJOR {
        return Err(Error::Format(format!("unsupported schema version {version} (this build reads {SCHEMA_MAJOR}.x)")));
    }
    Ok(())
}

/// Splits off the version comment. Returns the body and the number of lines consumed.
fn strip_preamble(text: &str) -> Result<(&str, u64)> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let Some(first) = text.lines().next() else {
        return Ok((text, 0));
    };
    let Some(comment) = first.strip_prefix('#') else {
        return Ok((text, 0));
    };
    let body = &text[first.len()..];
    let body = body.strip_prefix('\n').unwrap_or(body);
    let comment = comment.trim();
    match comment.strip_prefix("schema_version") {
        Some(rest) => check_version(rest.trim_start().trim_start_matches('=').trim())?,
        None => return Err(Error::Format(format!("unexpected comment line `{first}`"))),
    }
    Ok((body, 1))
}

struct Table<'a> {
    reader: csv::Reader<&'a [u8]>,
    columns: Vec<usize>,
    line_offset: u64,
}

fn open_table<'a>(text: &'a str, required: &[&str]) -> Result<Table<'a>> {
    let (body, line_offset) = strip_preamble(text)?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let header = reader.headers()?.clone();
    if header.len() == 0 || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Format("missing header row".into()));
    }
    let columns = required
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| Error::Format(format!("missing column `{name}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table { reader, columns, line_offset })
}

fn field<'r>(record: &'r csv::StringRecord, idx: usize, name: &str) -> std::result::Result<&'r str, String> {
    record.get(idx).ok_or_else(|| format!("missing value for `{name}`"))
}

fn parse_num<T: std::str::FromStr>(s: &str, name: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("`{name}` is not a number: `{s}`"))
}

/// A parsed trace with the rows that were rejected.
#[derive(Debug)]
pub struct ParsedTrace {
    pub trace: Trace,
    /// One [`Error::Row`] per rejected row.
    pub row_errors: Vec<Error>,
    /// True when rows were out of `(node_id, timestamp)` order and had to be sorted.
    pub reordered: bool,
}

/// Parses a trace CSV. Schema violations fail the whole file; bad rows are skipped and
/// reported with their line numbers.
pub fn parse_trace_csv(text: &str) -> Result<ParsedTrace> {
    let text = text.replace("\r\n", "\n");
    let mut table = open_table(&text, &TRACE_COLUMNS)?;
    let cols = table.columns.clone();
    let mut samples = Vec::new();
    let mut row_errors = Vec::new();
    for record in table.reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line()) + table.line_offset;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let parsed = (|| -> std::result::Result<RssiSample, String> {
            let sample = RssiSample::new(
                parse_num(field(&record, cols[0], "timestamp_ms")?, "timestamp_ms")?,
                field(&record, cols[1], "node_id")?,
                field(&record, cols[2], "radio")?,
                field(&record, cols[3], "environment")?,
                parse_num(field(&record, cols[4], "rssi_dbm")?, "rssi_dbm")?,
            );
            sample.validate().map_err(|e| e.to_string())?;
            Ok(sample)
        })();
        match parsed {
            Ok(s) => samples.push(s),
            Err(message) => row_errors.push(Error::Row { line, message }),
        }
    }
    let (trace, reordered) = Trace::from_samples(samples);
    Ok(ParsedTrace { trace, row_errors, reordered })
}

pub fn read_trace_file(path: &Path) -> Result<ParsedTrace> {
    parse_trace_csv(&read_text(path)?)
}

fn read_text(path: &Path) -> Result<String> {
    let mut text = String::new();
    fs::File::open(path)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?
        .read_to_string(&mut text)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    Ok(text)
}

fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

fn writer<W: Write>(mut out: W, columns: &[&str]) -> Result<csv::Writer<W>> {
    writeln!(out, "# schema_version={SCHEMA_VERSION}")?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(columns)?;
    Ok(w)
}

pub fn write_trace_csv<W: Write>(out: W, trace: &Trace) -> Result<()> {
    let mut w = writer(out, &TRACE_COLUMNS)?;
    for s in trace.samples() {
        w.write_record([
            s.timestamp_ms.to_string(),
            s.node_id.clone(),
            s.radio.clone(),
            s.environment.clone(),
            fmt_real(s.rssi_dbm),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_labels_csv<W: Write>(out: W, labels: &[Label]) -> Result<()> {
    let mut w = writer(out, &LABEL_COLUMNS)?;
    for l in labels {
        w.write_record([l.timestamp_ms.to_string(), fmt_real(l.offset_db)])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a labels CSV; any bad row fails the file.
pub fn parse_labels_csv(text: &str) -> Result<Vec<Label>> {
    let text = text.replace("\r\n", "\n");
    let mut table = open_table(&text, &LABEL_COLUMNS)?;
    let cols = table.columns.clone();
    let mut labels = Vec::new();
    for record in table.reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line()) + table.line_offset;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let parsed = (|| -> std::result::Result<Label, String> {
            Ok(Label {
                timestamp_ms: parse_num(field(&record, cols[0], "timestamp_ms")?, "timestamp_ms")?,
                offset_db: parse_num(field(&record, cols[1], "offset_db")?, "offset_db")?,
            })
        })();
        labels.push(parsed.map_err(|message| Error::Row { line, message })?);
    }
    labels.sort_by_key(|l| l.timestamp_ms);
    Ok(labels)
}

pub fn write_events_csv<W: Write>(out: W, events: &[OutlierEvent]) -> Result<()> {
    let mut w = writer(out, &EVENT_COLUMNS)?;
    for e in events {
        w.write_record([
            e.timestamp_ms.to_string(),
            e.node_id.clone(),
            fmt_real(e.raw_rssi),
            fmt_real(e.ema_prev),
            fmt_real(e.z),
            fmt_real(e.threshold),
            fmt_real(e.k),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_method_events_csv<W: Write>(out: W, events: &[MethodEvent]) -> Result<()> {
    let mut w = writer(out, &METHOD_EVENT_COLUMNS)?;
    for e in events {
        w.write_record([
            e.method.as_str().to_string(),
            e.timestamp_ms.to_string(),
            e.node_id.clone(),
            fmt_real(e.rssi_dbm),
            fmt_real(e.reference_dbm),
            fmt_real(e.deviation_dbm),
            fmt_real(e.threshold_dbm),
            fmt_real(e.k),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_boxplot_csv<W: Write>(out: W, report: &ComparisonReport) -> Result<()> {
    let mut w = writer(out, &BOXPLOT_COLUMNS)?;
    for (method, radio, env, rate) in report.boxplot_rows() {
        w.write_record([method.as_str(), radio, env, &fmt_real(rate)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    schema_version: &'static str,
    kind: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON of `body` with `schema_version` and `kind` prepended, newline-terminated.
pub fn to_versioned_json<T: Serialize>(kind: &str, body: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&Versioned { schema_version: SCHEMA_VERSION, kind, body })?;
    s.push('\n');
    Ok(s)
}

/// Parses a JSON document and checks its `schema_version`.
pub fn parse_versioned_json(text: &str) -> Result<serde_json::Value> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let version = value
        .get("schema_version")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Format("missing schema_version".into()))?;
    check_version(version)?;
    Ok(value)
}

/// Writes `bytes` to `path`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// `trace.csv` → `trace.labels.csv`.
pub fn labels_path(trace_path: &Path) -> PathBuf {
    let stem = trace_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    trace_path.with_file_name(format!("{stem}.labels.csv"))
}

/// Reads every `*.csv` trace of `dir` (labels files excluded) in file-name order, pairing
/// each with its sibling labels file when present.
pub fn read_suite_dir(dir: &Path) -> Result<(Vec<LabeledTrace>, Vec<String>)> {
    let entries = fs::read_dir(dir).map_err(|e| Error::Input(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            name.ends_with(".csv") && !name.ends_with(".labels.csv")
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Input(format!("no trace files in {}", dir.display())));
    }
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for path in paths {
        let parsed = read_trace_file(&path)?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        for e in &parsed.row_errors {
            warnings.push(format!("{name}: {e}"));
        }
        let lp = labels_path(&path);
        let labels = if lp.exists() { Some(parse_labels_csv(&read_text(&lp)?)?) } else { None };
        out.push(LabeledTrace { name, trace: parsed.trace, labels });
    }
    Ok((out, warnings))
}
