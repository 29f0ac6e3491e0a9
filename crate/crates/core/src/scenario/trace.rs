//! Trace CSV: one header row, one row per step, 9 significant digits.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::sim::{ModeLabel, NodeRecord, StepRecord};

const BASE_COLUMNS: [&str; 8] = [
    "t", "v_grid", "p_pv", "p_nonflex", "p_flex", "p_sc", "p_spill", "fault",
];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace is empty")]
    Empty,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {reason}")]
    Format { line: u64, reason: String },
}

/// `%.9g`: nine significant digits, trailing zeros dropped.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn trace_header(node_count: usize) -> Vec<String> {
    let mut h: Vec<String> = BASE_COLUMNS.iter().map(|s| s.to_string()).collect();
    for i in 0..node_count {
        h.extend([format!("p_batt_{i}"), format!("soc_{i}"), format!("mode_{i}")]);
    }
    h
}

/// Writes the trace to any sink.
pub fn write_trace<W: Write>(trace: &[StepRecord], sink: W) -> Result<(), TraceError> {
    let first = trace.first().ok_or(TraceError::Empty)?;
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(trace_header(first.nodes.len()))?;
    for r in trace {
        let mut row: Vec<String> = [r.t, r.v_grid, r.p_pv, r.p_nonflex, r.p_flex, r.p_sc, r.p_spill]
            .iter()
            .map(|&v| format_sig9(v))
            .collect();
        row.push(if r.fault { "1" } else { "0" }.into());
        for n in &r.nodes {
            row.push(format_sig9(n.p_batt));
            row.push(format_sig9(n.soc));
            row.push(n.mode.as_str().into());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| TraceError::Io {
        path: PathBuf::from("<trace>"),
        source,
    })?;
    Ok(())
}

/// Writes the trace file. An empty trace is an error and creates no file.
pub fn write_trace_csv(trace: &[StepRecord], path: impl AsRef<Path>) -> Result<(), TraceError> {
    if trace.is_empty() {
        return Err(TraceError::Empty);
    }
    let path = path.as_ref();
    let io_err = |source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut buf = io::BufWriter::new(file);
    write_trace(trace, &mut buf)?;
    buf.flush().map_err(io_err)
}

pub fn read_trace<R: Read>(source: R) -> Result<Vec<StepRecord>, TraceError> {
    let mut r = csv::Reader::from_reader(source);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let extra = header.len().checked_sub(BASE_COLUMNS.len()).unwrap_or(usize::MAX);
    if extra == usize::MAX || extra % 3 != 0 || header != trace_header(extra / 3) {
        return Err(TraceError::Format {
            line: 1,
            reason: format!("unexpected header `{}`", header.join(",")),
        });
    }
    let nodes = extra / 3;
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let line = i as u64 + 2;
        let field = |k: usize| -> Result<f64, TraceError> {
            let s = row.get(k).unwrap_or("");
            s.parse().map_err(|_| TraceError::Format {
                line,
                reason: format!("column {} is not numeric: `{s}`", header[k]),
            })
        };
        let fault = match row.get(7) {
            Some("0") => false,
            Some("1") => true,
            other => {
                return Err(TraceError::Format {
                    line,
                    reason: format!("fault must be 0 or 1, found {other:?}"),
                })
            }
        };
        let mut node_records = Vec::with_capacity(nodes);
        for n in 0..nodes {
            let base = BASE_COLUMNS.len() + 3 * n;
            let label = row.get(base + 2).unwrap_or("");
            node_records.push(NodeRecord {
                p_batt: field(base)?,
                soc: field(base + 1)?,
                mode: ModeLabel::parse(label).ok_or_else(|| TraceError::Format {
                    line,
                    reason: format!("unknown mode `{label}`"),
                })?,
            });
        }
        out.push(StepRecord {
            t: field(0)?,
            v_grid: field(1)?,
            p_pv: field(2)?,
            p_nonflex: field(3)?,
            p_flex: field(4)?,
            p_sc: field(5)?,
            p_spill: field(6)?,
            fault,
            nodes: node_records,
        });
    }
    if out.is_empty() {
        return Err(TraceError::Empty);
    }
    Ok(out)
}

pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<Vec<StepRecord>, TraceError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_trace(io::BufReader::new(file))
}
