//! File formats.
//!
//! Time series are comma-separated with a header row; trajectory logs may
//! start with `# key: value` metadata lines. Spline datasets and episode
//! summaries are JSON. Floating-point values are written with 17 significant
//! digits so every `f64` survives a round trip.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{Alternative, ComparisonRow, SampleSummary, SummaryRow};
use crate::sim::EpisodeTrace;
use crate::spline::{BSplineTrajectory, SplineChunk, TrajectorySamples};

pub const DATASET_FORMAT: &str = "fflab-spline-dataset";
pub const DATASET_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: time {t} does not increase (previous {previous})")]
    NonMonotoneTime { line: u64, t: f64, previous: f64 },
    #[error("line {line}: expected {expected} columns, found {found}")]
    Dimension { line: u64, expected: usize, found: usize },
    #[error("bad header: {0}")]
    Header(String),
    #[error("unsupported dataset version {found} (expected {DATASET_VERSION})")]
    Version { found: String },
    #[error("malformed document: {0}")]
    Malformed(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, err: csv::Error) -> IoError {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(source) => IoError::Io {
            path: path.to_path_buf(),
            source,
        },
        kind => IoError::Parse {
            line,
            message: format!("{kind:?}"),
        },
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// Samples plus optional header metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub source: Option<String>,
    pub sample_rate_hz: Option<f64>,
    pub samples: TrajectorySamples,
}

impl TrajectoryLog {
    pub fn new(samples: TrajectorySamples) -> Self {
        Self {
            source: None,
            sample_rate_hz: None,
            samples,
        }
    }

    pub fn dims(&self) -> usize {
        self.samples.dims()
    }
}

#[derive(Default)]
struct LogMeta {
    dims: Option<usize>,
    source: Option<String>,
    sample_rate_hz: Option<f64>,
}

fn parse_meta(text: &str) -> Result<LogMeta, IoError> {
    let mut meta = LogMeta::default();
    for (idx, line) in text.lines().enumerate() {
        let Some(body) = line.trim_start().strip_prefix('#') else {
            if line.trim().is_empty() {
                continue;
            }
            break;
        };
        let Some((key, value)) = body.split_once(':') else {
            continue;
        };
        let line_no = idx as u64 + 1;
        let value = value.trim();
        let bad = |what: &str| IoError::Parse {
            line: line_no,
            message: format!("invalid {what} '{value}'"),
        };
        match key.trim() {
            "dims" => meta.dims = Some(value.parse().map_err(|_| bad("dims"))?),
            "source" => meta.source = Some(value.to_string()),
            "sample_rate_hz" => meta.sample_rate_hz = Some(value.parse().map_err(|_| bad("sample rate"))?),
            _ => {}
        }
    }
    Ok(meta)
}

/// Number of position columns in a `t,x0,...` header; trailing `v*`/`a*`
/// columns of reference traces are accepted and ignored.
fn position_columns(header: &csv::StringRecord) -> Result<usize, IoError> {
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.first() != Some(&"t") {
        return Err(IoError::Header(format!("first column must be 't', found {:?}", names.first())));
    }
    let d = names[1..]
        .iter()
        .enumerate()
        .take_while(|(i, name)| **name == format!("x{i}"))
        .count();
    if d == 0 {
        return Err(IoError::Header("no position columns x0..".into()));
    }
    for name in &names[1 + d..] {
        let ok = ["v", "a"].iter().any(|p| {
            name.strip_prefix(p)
                .is_some_and(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
        });
        if !ok {
            return Err(IoError::Header(format!("unexpected column '{name}'")));
        }
    }
    Ok(d)
}

pub fn read_trajectory_log(path: &Path) -> Result<TrajectoryLog, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_trajectory_log(&text, path)
}

fn parse_trajectory_log(text: &str, path: &Path) -> Result<TrajectoryLog, IoError> {
    let meta = parse_meta(text)?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let d = position_columns(&header)?;
    if let Some(expected) = meta.dims {
        if expected != d {
            return Err(IoError::Dimension {
                line: reader.position().line(),
                expected: expected + 1,
                found: d + 1,
            });
        }
    }
    let width = header.len();
    let mut times = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(IoError::Dimension {
                line,
                expected: width,
                found: record.len(),
            });
        }
        let mut parsed = Vec::with_capacity(d + 1);
        for field in record.iter().take(d + 1) {
            let x: f64 = field.parse().map_err(|_| IoError::Parse {
                line,
                message: format!("not a number: '{field}'"),
            })?;
            if !x.is_finite() {
                return Err(IoError::Parse {
                    line,
                    message: format!("non-finite value '{field}'"),
                });
            }
            parsed.push(x);
        }
        let t = parsed[0];
        if let Some(&previous) = times.last() {
            if !(t > previous) {
                return Err(IoError::NonMonotoneTime { line, t, previous });
            }
        }
        times.push(t);
        values.extend_from_slice(&parsed[1..]);
    }
    if times.is_empty() {
        return Err(IoError::Malformed("trajectory log has no samples".into()));
    }
    let positions = DMatrix::from_row_slice(times.len(), d, &values);
    let samples = TrajectorySamples::new(times, positions).map_err(|e| IoError::Malformed(e.to_string()))?;
    Ok(TrajectoryLog {
        source: meta.source,
        sample_rate_hz: meta.sample_rate_hz,
        samples,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn header_row(prefixes: &[&str], d: usize) -> Vec<String> {
    let mut header = vec!["t".to_string()];
    for p in prefixes {
        header.extend((0..d).map(|i| format!("{p}{i}")));
    }
    header
}

pub fn write_trajectory_log(log: &TrajectoryLog, path: &Path) -> Result<(), IoError> {
    let mut out = create(path)?;
    let d = log.dims();
    let mut body = format!("# dims: {d}\n");
    if let Some(source) = &log.source {
        body.push_str(&format!("# source: {source}\n"));
    }
    if let Some(rate) = log.sample_rate_hz {
        body.push_str(&format!("# sample_rate_hz: {rate}\n"));
    }
    out.write_all(body.as_bytes()).map_err(io_err(path))?;
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(header_row(&["x"], d)).map_err(|e| csv_err(path, e))?;
    let positions = log.samples.positions();
    for (j, &t) in log.samples.times().iter().enumerate() {
        let mut row = vec![fmt(t)];
        row.extend(positions.row(j).iter().map(|&x| fmt(x)));
        writer.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(io_err(path))
}

#[derive(Debug, Serialize, Deserialize)]
struct ChunkRecord {
    degree: usize,
    dims: usize,
    knots: Vec<f64>,
    control_points: Vec<Vec<f64>>,
    fit_residual_rms: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetDocument {
    format: String,
    version: u64,
    chunks: Vec<ChunkRecord>,
}

pub fn write_spline_dataset(chunks: &[SplineChunk], path: &Path) -> Result<(), IoError> {
    let doc = DatasetDocument {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        chunks: chunks
            .iter()
            .map(|c| {
                let cp = c.trajectory.control_points();
                ChunkRecord {
                    degree: c.trajectory.degree(),
                    dims: c.trajectory.dims(),
                    knots: c.trajectory.knots().to_vec(),
                    control_points: (0..cp.nrows()).map(|i| cp.row(i).iter().copied().collect()).collect(),
                    fit_residual_rms: c.fit_residual_rms,
                }
            })
            .collect(),
    };
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| IoError::Malformed(e.to_string()))?;
    out.write_all(b"\n").map_err(io_err(path))?;
    out.flush().map_err(io_err(path))
}

pub fn read_spline_dataset(path: &Path) -> Result<Vec<SplineChunk>, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_spline_dataset(&text)
}

fn parse_spline_dataset(text: &str) -> Result<Vec<SplineChunk>, IoError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| IoError::Malformed(e.to_string()))?;
    match value.get("format").and_then(|f| f.as_str()) {
        Some(DATASET_FORMAT) => {}
        other => return Err(IoError::Malformed(format!("format field is {other:?}"))),
    }
    match value.get("version") {
        Some(v) if v.as_u64() == Some(DATASET_VERSION) => {}
        Some(v) => return Err(IoError::Version { found: v.to_string() }),
        None => return Err(IoError::Version { found: "missing".into() }),
    }
    let doc: DatasetDocument = serde_json::from_value(value).map_err(|e| IoError::Malformed(e.to_string()))?;
    doc.chunks
        .into_iter()
        .enumerate()
        .map(|(idx, c)| {
            let bad = |msg: String| IoError::Malformed(format!("chunk {idx}: {msg}"));
            if c.control_points.iter().any(|row| row.len() != c.dims) {
                return Err(bad(format!("control point rows must have {} entries", c.dims)));
            }
            let flat: Vec<f64> = c.control_points.concat();
            let cp = DMatrix::from_row_slice(c.control_points.len(), c.dims, &flat);
            let trajectory = BSplineTrajectory::new(c.degree, c.knots, cp).map_err(|e| bad(e.to_string()))?;
            Ok(SplineChunk {
                trajectory,
                fit_residual_rms: c.fit_residual_rms,
            })
        })
        .collect()
}

/// Episode trace columns: `t`, reference `x*`, `v*`, `a*`, then plant
/// position `px*`, plant velocity `pv*`, commanded acceleration `acmd*`,
/// contact force `f*`, tracking error `e*` and ground-truth plan `gt*`.
pub const TRACE_PREFIXES: [&str; 9] = ["x", "v", "a", "px", "pv", "acmd", "f", "e", "gt"];

pub fn write_episode_trace(trace: &EpisodeTrace, path: &Path) -> Result<(), IoError> {
    let d = trace.dims();
    let mut writer = csv::Writer::from_writer(create(path)?);
    writer
        .write_record(header_row(&TRACE_PREFIXES, d))
        .map_err(|e| csv_err(path, e))?;
    for i in 0..trace.len() {
        let series = [
            &trace.x_d[i],
            &trace.xd_dot[i],
            &trace.xd_ddot[i],
            &trace.x[i],
            &trace.v[i],
            &trace.a_cmd[i],
            &trace.f_ext[i],
            &trace.e[i],
            &trace.plan_position[i],
        ];
        let row = std::iter::once(fmt(trace.times[i])).chain(series.iter().flat_map(|s| s.iter().map(|&x| fmt(x))));
        writer.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(io_err(path))
}

/// Reads the per-step series of a trace written by [`write_episode_trace`].
/// Episode-level fields (`success_time`, `duration_max`, `clamp_events`) are
/// not part of the file and come back as defaults.
pub fn read_episode_trace(path: &Path) -> Result<EpisodeTrace, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let columns = header.len().saturating_sub(1);
    let d = columns / TRACE_PREFIXES.len();
    if d == 0 || columns % TRACE_PREFIXES.len() != 0 {
        return Err(IoError::Header(format!("{} columns do not form a trace", header.len())));
    }
    let expected = header_row(&TRACE_PREFIXES, d);
    if let Some((want, got)) = expected.iter().zip(header.iter()).find(|(w, g)| w.as_str() != *g) {
        return Err(IoError::Header(format!("expected column '{want}', found '{got}'")));
    }

    let mut trace = EpisodeTrace::default();
    let mut series: Vec<Vec<crate::Vector>> = vec![Vec::new(); TRACE_PREFIXES.len()];
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(IoError::Dimension {
                line,
                expected: header.len(),
                found: record.len(),
            });
        }
        let values = record
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| IoError::Parse {
                    line,
                    message: format!("not a number: '{f}'"),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        trace.times.push(values[0]);
        for (k, s) in series.iter_mut().enumerate() {
            s.push(crate::Vector::from_column_slice(&values[1 + k * d..1 + (k + 1) * d]));
        }
    }
    let mut series = series.into_iter();
    let mut next = || series.next().unwrap_or_default();
    trace.x_d = next();
    trace.xd_dot = next();
    trace.xd_ddot = next();
    trace.x = next();
    trace.v = next();
    trace.a_cmd = next();
    trace.f_ext = next();
    trace.e = next();
    trace.plan_position = next();
    Ok(trace)
}

/// Side-car summary written next to each trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub success: bool,
    pub success_time: Option<f64>,
    pub rms_error: f64,
    pub peak_force: f64,
}

pub fn write_trace_summary(summary: &TraceSummary, path: &Path) -> Result<(), IoError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, summary).map_err(|e| IoError::Malformed(e.to_string()))?;
    out.write_all(b"\n").map_err(io_err(path))?;
    out.flush().map_err(io_err(path))
}

pub fn read_trace_summary(path: &Path) -> Result<TraceSummary, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| IoError::Malformed(e.to_string()))
}

/// Summary table: columns `method`, `mean`, `var` or `sd`, `n`, optionally
/// `group` and `alternative` (default `less`).
pub fn read_summary_table(path: &Path) -> Result<Vec<SummaryRow>, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_summary_table(&text, path)
}

fn parse_summary_table(text: &str, path: &Path) -> Result<Vec<SummaryRow>, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
    let need = |name: &str| col(name).ok_or_else(|| IoError::Header(format!("missing column '{name}'")));
    let method = need("method")?;
    let mean = need("mean")?;
    let n = need("n")?;
    let (spread, is_sd) = match (col("var"), col("sd")) {
        (Some(v), _) => (v, false),
        (None, Some(s)) => (s, true),
        (None, None) => return Err(IoError::Header("missing column 'var' or 'sd'".into())),
    };
    let group = col("group");
    let alternative = col("alternative");

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let number = |i: usize| -> Result<f64, IoError> {
            field(i).parse().map_err(|_| IoError::Parse {
                line,
                message: format!("not a number: '{}'", field(i)),
            })
        };
        let count: usize = field(n).parse().map_err(|_| IoError::Parse {
            line,
            message: format!("not a count: '{}'", field(n)),
        })?;
        let parse_err = |e: crate::metrics::MetricsError| IoError::Parse {
            line,
            message: e.to_string(),
        };
        let summary = if is_sd {
            SampleSummary::from_sd(number(mean)?, number(spread)?, count)
        } else {
            SampleSummary::new(number(mean)?, number(spread)?, count)
        }
        .map_err(parse_err)?;
        let alternative = match alternative.map(field).filter(|s| !s.is_empty()) {
            Some(s) => s.parse::<Alternative>().map_err(parse_err)?,
            None => Alternative::Less,
        };
        rows.push(SummaryRow {
            group: group.map(field).unwrap_or("").to_string(),
            method: field(method).to_string(),
            summary,
            alternative,
        });
    }
    Ok(rows)
}

/// Writes `group,method,mean,var,n,t,p,significant`; the baseline rows have
/// empty test columns.
pub fn write_comparison_table<W: Write>(rows: &[ComparisonRow], out: W) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["group", "method", "mean", "var", "n", "t", "p", "significant"])?;
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.6}"));
    for row in rows {
        let (t, p, sig) = match &row.test {
            Some(r) => (
                format!("{:.4}", r.t_stat),
                format!("{:.6}", r.p_one_tailed),
                if row.significant() { "yes" } else { "no" }.to_string(),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        writer.write_record([
            row.group.clone(),
            row.method.clone(),
            opt(row.mean),
            opt(row.variance),
            row.n.to_string(),
            t,
            p,
            sig,
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_comparison_file(rows: &[ComparisonRow], path: &Path) -> Result<(), IoError> {
    let out = create(path)?;
    write_comparison_table(rows, out).map_err(|e| csv_err(path, e))
}
