//! Time-series inputs: non-flexible load power and environment
//! (irradiance, ambient temperature).
//!
//! Both are piecewise-linear between samples and held constant beyond the
//! first and last sample.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub const LOAD_HEADER: [&str; 2] = ["time_s", "power_w"];
pub const ENV_HEADER: [&str; 3] = ["time_s", "irradiance_wm2", "temp_c"];

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected header `{expected}`, found `{found}`")]
    Header {
        line: u64,
        expected: String,
        found: String,
    },
    #[error("line {line}: {reason}")]
    Row { line: u64, reason: String },
    #[error("profile has no data rows")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    samples: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvSample {
    pub time: f64,
    /// W/m².
    pub irradiance: f64,
    /// °C.
    pub temp_c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvProfile {
    samples: Vec<EnvSample>,
}

fn row_err(line: u64, reason: impl Into<String>) -> ProfileError {
    ProfileError::Row {
        line,
        reason: reason.into(),
    }
}

fn check_times(times: impl Iterator<Item = (u64, f64)>) -> Result<(), ProfileError> {
    let mut prev: Option<f64> = None;
    for (line, t) in times {
        if !t.is_finite() {
            return Err(row_err(line, "time is not finite"));
        }
        if let Some(p) = prev {
            if t <= p {
                return Err(row_err(
                    line,
                    format!("time {t} is not after previous sample time {p}"),
                ));
            }
        }
        prev = Some(t);
    }
    Ok(())
}

/// Index of the segment containing `t` and the interpolation weight.
fn locate(times: impl Fn(usize) -> f64, len: usize, t: f64) -> (usize, usize, f64) {
    if t <= times(0) {
        return (0, 0, 0.0);
    }
    if t >= times(len - 1) {
        return (len - 1, len - 1, 0.0);
    }
    // first index with time > t
    let (mut lo, mut hi) = (0, len - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if times(mid) <= t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (t0, t1) = (times(lo), times(hi));
    (lo, hi, (t - t0) / (t1 - t0))
}

impl LoadProfile {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self, ProfileError> {
        if samples.is_empty() {
            return Err(ProfileError::Empty);
        }
        // Rows are numbered as in the CSV: header is line 1.
        check_times(samples.iter().enumerate().map(|(i, s)| (i as u64 + 2, s.0)))?;
        for (i, &(_, p)) in samples.iter().enumerate() {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(row_err(i as u64 + 2, format!("power {p} must be finite and >= 0")));
            }
        }
        Ok(Self { samples })
    }

    pub fn constant(power: f64) -> Self {
        Self::new(vec![(0.0, power)]).expect("constant profile")
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn power_at(&self, t: f64) -> f64 {
        let s = &self.samples;
        let (a, b, w) = locate(|i| s[i].0, s.len(), t);
        s[a].1 + w * (s[b].1 - s[a].1)
    }
}

impl EnvProfile {
    pub fn new(samples: Vec<EnvSample>) -> Result<Self, ProfileError> {
        if samples.is_empty() {
            return Err(ProfileError::Empty);
        }
        check_times(samples.iter().enumerate().map(|(i, s)| (i as u64 + 2, s.time)))?;
        for (i, s) in samples.iter().enumerate() {
            if !(s.irradiance >= 0.0 && s.irradiance.is_finite()) {
                return Err(row_err(
                    i as u64 + 2,
                    format!("irradiance {} must be finite and >= 0", s.irradiance),
                ));
            }
            if !(s.temp_c > -273.15 && s.temp_c.is_finite()) {
                return Err(row_err(
                    i as u64 + 2,
                    format!("temperature {} °C is below absolute zero", s.temp_c),
                ));
            }
        }
        Ok(Self { samples })
    }

    pub fn constant(irradiance: f64, temp_c: f64) -> Self {
        Self::new(vec![EnvSample {
            time: 0.0,
            irradiance,
            temp_c,
        }])
        .expect("constant profile")
    }

    pub fn samples(&self) -> &[EnvSample] {
        &self.samples
    }

    pub fn irradiance_at(&self, t: f64) -> f64 {
        let s = &self.samples;
        let (a, b, w) = locate(|i| s[i].time, s.len(), t);
        s[a].irradiance + w * (s[b].irradiance - s[a].irradiance)
    }

    pub fn temp_c_at(&self, t: f64) -> f64 {
        let s = &self.samples;
        let (a, b, w) = locate(|i| s[i].time, s.len(), t);
        s[a].temp_c + w * (s[b].temp_c - s[a].temp_c)
    }
}

fn read_rows(text: &str, header: &[&str]) -> Result<Vec<(u64, Vec<f64>)>, ProfileError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut seen_header = false;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            row_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if !seen_header {
            let found: Vec<&str> = rec.iter().collect();
            if found != header {
                return Err(ProfileError::Header {
                    line,
                    expected: header.join(","),
                    found: found.join(","),
                });
            }
            seen_header = true;
            continue;
        }
        if rec.len() != header.len() {
            return Err(row_err(
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        let mut vals = Vec::with_capacity(rec.len());
        for (field, name) in rec.iter().zip(header) {
            let v: f64 = field
                .parse()
                .map_err(|_| row_err(line, format!("{name}: `{field}` is not a number")))?;
            vals.push(v);
        }
        rows.push((line, vals));
    }
    if !seen_header {
        return Err(ProfileError::Header {
            line: 1,
            expected: header.join(","),
            found: String::new(),
        });
    }
    if rows.is_empty() {
        return Err(ProfileError::Empty);
    }
    Ok(rows)
}

/// Re-numbers a validation error from sample index to the CSV line it came from.
fn relocate(err: ProfileError, lines: &[u64]) -> ProfileError {
    match err {
        ProfileError::Row { line, reason } => ProfileError::Row {
            line: lines.get(line as usize - 2).copied().unwrap_or(line),
            reason,
        },
        other => other,
    }
}

pub fn parse_load_csv_str(text: &str) -> Result<LoadProfile, ProfileError> {
    let rows = read_rows(text, &LOAD_HEADER)?;
    let lines: Vec<u64> = rows.iter().map(|r| r.0).collect();
    LoadProfile::new(rows.iter().map(|(_, v)| (v[0], v[1])).collect()).map_err(|e| relocate(e, &lines))
}

pub fn parse_env_csv_str(text: &str) -> Result<EnvProfile, ProfileError> {
    let rows = read_rows(text, &ENV_HEADER)?;
    let lines: Vec<u64> = rows.iter().map(|r| r.0).collect();
    EnvProfile::new(
        rows.iter()
            .map(|(_, v)| EnvSample {
                time: v[0],
                irradiance: v[1],
                temp_c: v[2],
            })
            .collect(),
    )
    .map_err(|e| relocate(e, &lines))
}

fn read_file(path: &Path) -> Result<String, ProfileError> {
    std::fs::read_to_string(path).map_err(|source| ProfileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a `time_s,power_w` CSV.
pub fn parse_load_csv(path: impl AsRef<Path>) -> Result<LoadProfile, ProfileError> {
    parse_load_csv_str(&read_file(path.as_ref())?)
}

/// Reads a `time_s,irradiance_wm2,temp_c` CSV.
pub fn parse_env_csv(path: impl AsRef<Path>) -> Result<EnvProfile, ProfileError> {
    parse_env_csv_str(&read_file(path.as_ref())?)
}
