//! Trace and result files.
//!
//! Traces are comma-separated text:
//!
//! ```text
//! # resonator-trace v1
//! freq_hz,s21_re,s21_im
//! 4.49e9,0.998,-0.031
//! ...
//! ```
//!
//! or with a `freq_hz,mag_db,phase_deg` header. Metadata lives in a JSON
//! sidecar next to the data file (`<file>.meta.json`). Results are JSON
//! documents carrying input digests, the tool version and the configuration
//! used, with every number paired with a unit.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fit::Measured;
use crate::trace::{Trace, TraceMeta};

pub const TRACE_MAGIC: &str = "# resonator-trace v1";
pub const RESULT_SCHEMA_VERSION: u32 = 1;
pub const TOOL_NAME: &str = "resonator";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum S21Format {
    /// Linear real and imaginary parts.
    #[default]
    ReIm,
    /// Magnitude in dB and phase in degrees.
    DbDeg,
}

impl S21Format {
    fn header(self) -> [&'static str; 3] {
        match self {
            S21Format::ReIm => ["freq_hz", "s21_re", "s21_im"],
            S21Format::DbDeg => ["freq_hz", "mag_db", "phase_deg"],
        }
    }
}

pub fn db_deg_to_complex(mag_db: f64, phase_deg: f64) -> Complex64 {
    Complex64::from_polar(10f64.powf(mag_db / 20.0), phase_deg * PI / 180.0)
}

pub fn complex_to_db_deg(z: Complex64) -> (f64, f64) {
    (20.0 * z.norm().log10(), z.arg() * 180.0 / PI)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Parses trace text. Line numbers in errors are 1-based file lines.
pub fn parse_trace_str(text: &str, meta: TraceMeta) -> Result<Trace> {
    let first = text.lines().next().unwrap_or("");
    if first.trim_end() != TRACE_MAGIC {
        return Err(Error::Schema {
            line: 1,
            column: 1,
            message: format!("expected {TRACE_MAGIC:?}"),
        });
    }
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let header_line = text
        .lines()
        .position(|l| !l.starts_with('#'))
        .map_or(1, |i| i as u64 + 1);
    let names: Vec<&str> = headers.iter().collect();
    let format = [S21Format::ReIm, S21Format::DbDeg]
        .into_iter()
        .find(|f| names == f.header())
        .ok_or_else(|| Error::Schema {
            line: header_line,
            column: 1,
            message: format!("unknown column schema {names:?}"),
        })?;

    let mut freq = Vec::new();
    let mut s21 = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut vals = [0.0f64; 3];
        for (col, v) in vals.iter_mut().enumerate() {
            let field = &rec[col];
            *v = field.parse().map_err(|_| Error::Schema {
                line,
                column: col + 1,
                message: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    line,
                    column: col + 1,
                });
            }
        }
        if freq.last().is_some_and(|&prev| vals[0] <= prev) {
            return Err(Error::NonMonotone { line });
        }
        freq.push(vals[0]);
        s21.push(match format {
            S21Format::ReIm => Complex64::new(vals[1], vals[2]),
            S21Format::DbDeg => db_deg_to_complex(vals[1], vals[2]),
        });
    }
    Trace::new(freq, s21, meta)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        _ => e.to_string(),
    };
    let column = match e.kind() {
        csv::ErrorKind::UnequalLengths { len, .. } => *len as usize + 1,
        _ => 1,
    };
    Error::Schema { line, column, message }
}

/// Reads a trace and its sidecar; a missing sidecar gives default metadata.
pub fn parse_trace(path: &Path) -> Result<Trace> {
    let text = fs::read_to_string(path)?;
    let side = sidecar_path(path);
    let meta = if side.exists() {
        serde_json::from_str(&fs::read_to_string(side)?)?
    } else {
        TraceMeta::default()
    };
    parse_trace_str(&text, meta)
}

/// Trace body text. Floats use the shortest representation that reads back
/// exactly.
pub fn trace_to_string(trace: &Trace, format: S21Format) -> String {
    let mut out = String::with_capacity(trace.len() * 64);
    out.push_str(TRACE_MAGIC);
    out.push('\n');
    out.push_str(&format.header().join(","));
    out.push('\n');
    for (f, z) in trace.freq().iter().zip(trace.s21()) {
        let (a, b) = match format {
            S21Format::ReIm => (z.re, z.im),
            S21Format::DbDeg => complex_to_db_deg(*z),
        };
        out.push_str(&format!("{f:e},{a:e},{b:e}\n"));
    }
    out
}

pub fn sidecar_to_string(meta: &TraceMeta) -> Result<String> {
    Ok(serde_json::to_string_pretty(meta)? + "\n")
}

/// Writes trace and sidecar.
pub fn write_trace(path: &Path, trace: &Trace, format: S21Format) -> Result<()> {
    let mut batch = OutputBatch::default();
    batch.add_trace(path, trace, format)?;
    batch.commit()
}

/// Files that are all written, or none are. Contents are staged into
/// temporary siblings and renamed into place only after every staging
/// write succeeded.
#[derive(Debug, Default)]
pub struct OutputBatch {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl OutputBatch {
    pub fn add(&mut self, path: impl Into<PathBuf>, contents: impl Into<Vec<u8>>) {
        self.files.push((path.into(), contents.into()));
    }

    pub fn add_trace(&mut self, path: &Path, trace: &Trace, format: S21Format) -> Result<()> {
        self.add(path, trace_to_string(trace, format));
        self.add(sidecar_path(path), sidecar_to_string(trace.meta())?);
        Ok(())
    }

    pub fn add_json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<()> {
        self.add(path, serde_json::to_string_pretty(value)? + "\n");
        Ok(())
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    pub fn commit(self) -> Result<()> {
        let mut staged = Vec::with_capacity(self.files.len());
        let stage = |path: &Path, data: &[u8]| -> Result<PathBuf> {
            let mut tmp = path.as_os_str().to_owned();
            tmp.push(format!(".tmp{}", std::process::id()));
            let tmp = PathBuf::from(tmp);
            let mut f = fs::File::create(&tmp)?;
            f.write_all(data)?;
            f.sync_all()?;
            Ok(tmp)
        };
        for (path, data) in &self.files {
            match stage(path, data) {
                Ok(tmp) => staged.push((tmp, path)),
                Err(e) => {
                    for (tmp, _) in &staged {
                        let _ = fs::remove_file(tmp);
                    }
                    return Err(e);
                }
            }
        }
        for (tmp, path) in staged {
            fs::rename(tmp, path)?;
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// A number with its unit; `"1"` marks a dimensionless value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub unit: String,
}

impl Quantity {
    pub fn new(value: f64, unit: &str) -> Self {
        Self {
            value,
            sigma: None,
            unit: unit.to_string(),
        }
    }

    pub fn measured(m: Measured, unit: &str) -> Self {
        Self {
            value: m.value,
            sigma: Some(m.sigma),
            unit: unit.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl Default for ToolInfo {
    fn default() -> Self {
        Self {
            name: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultKind {
    DelayFit,
    ResonatorFit,
    LineParams,
    KineticInductance,
    Sweep,
    Comparison,
}

/// A result document.
///
/// `values` holds the headline numbers with units; `records` holds the
/// full typed payload for downstream commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub schema_version: u32,
    pub kind: ResultKind,
    pub tool: ToolInfo,
    pub inputs: Vec<InputDigest>,
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
    pub values: BTreeMap<String, Quantity>,
    pub records: serde_json::Value,
}

impl ResultFile {
    pub fn new(kind: ResultKind) -> Self {
        Self {
            schema_version: RESULT_SCHEMA_VERSION,
            kind,
            tool: ToolInfo::default(),
            inputs: Vec::new(),
            config: serde_json::Value::Null,
            timestamp: None,
            values: BTreeMap::new(),
            records: serde_json::Value::Null,
        }
    }

    pub fn value(&mut self, name: &str, q: Quantity) -> &mut Self {
        self.values.insert(name.to_string(), q);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ResultSchema(m));
        if self.schema_version != RESULT_SCHEMA_VERSION {
            return bad(format!("unsupported schema version {}", self.schema_version));
        }
        if self.tool.name != TOOL_NAME || self.tool.version.is_empty() {
            return bad(format!("unexpected tool {:?}", self.tool));
        }
        for d in &self.inputs {
            let hex_ok = d.sha256.len() == 64 && d.sha256.bytes().all(|b| b.is_ascii_hexdigit());
            if !hex_ok {
                return bad(format!("bad digest for {}", d.path));
            }
        }
        for (name, q) in &self.values {
            if q.unit.is_empty() {
                return bad(format!("{name} has no unit"));
            }
            if !q.value.is_finite() || q.sigma.is_some_and(|s| !s.is_finite()) {
                return bad(format!("{name} is not finite"));
            }
        }
        if self.records.is_null() {
            return bad("missing records".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let r: ResultFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        r.validate()?;
        Ok(r)
    }
}

/// Comma-separated table with a header row.
pub fn table_to_string(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
