//! Frequency-sampled S21 records and the windowing/unwrapping utilities the
//! rest of the crate builds on.
//!
//! A [`Trace`] is validated once at construction and is immutable afterwards;
//! every operation returns a new value.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of samples in a valid trace.
pub const MIN_TRACE_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    Inductive,
    Capacitive,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScanKind {
    Wide,
    Narrow,
    #[default]
    Full,
}

/// Measurement conditions attached to a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub device_id: String,
    /// Position of the resonator along the feed line, 1 through 4.
    pub resonator_index: u8,
    /// Power at the device reference plane.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_dbm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature_mk: Option<f64>,
    #[serde(default)]
    pub coupling: Coupling,
    #[serde(default)]
    pub scan_kind: ScanKind,
}

impl Default for TraceMeta {
    fn default() -> Self {
        Self {
            device_id: String::new(),
            resonator_index: 1,
            power_dbm: None,
            temperature_mk: None,
            coupling: Coupling::Unknown,
            scan_kind: ScanKind::Full,
        }
    }
}

impl TraceMeta {
    pub fn new(device_id: impl Into<String>, resonator_index: u8) -> Self {
        Self {
            device_id: device_id.into(),
            resonator_index,
            ..Self::default()
        }
    }

    pub fn with_conditions(mut self, temperature_mk: f64, power_dbm: f64) -> Self {
        self.temperature_mk = Some(temperature_mk);
        self.power_dbm = Some(power_dbm);
        self
    }

    pub fn with_scan_kind(mut self, kind: ScanKind) -> Self {
        self.scan_kind = kind;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.resonator_index) {
            return Err(Error::InvalidTrace(format!(
                "resonator_index {} outside 1..=4",
                self.resonator_index
            )));
        }
        if let Some(t) = self.temperature_mk {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::InvalidTrace(format!("temperature {t} mK")));
            }
        }
        if let Some(p) = self.power_dbm {
            if !p.is_finite() {
                return Err(Error::InvalidTrace("non-finite power".into()));
            }
        }
        Ok(())
    }
}

/// A frequency window `[center - span/2, center + span/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub center: f64,
    pub span: f64,
}

impl Band {
    pub fn new(center: f64, span: f64) -> Result<Self> {
        if !(center.is_finite() && span.is_finite() && span > 0.0 && center - span / 2.0 > 0.0) {
            return Err(Error::InvalidBand { center, span });
        }
        Ok(Self { center, span })
    }

    pub fn lo(&self) -> f64 {
        self.center - self.span / 2.0
    }

    pub fn hi(&self) -> f64 {
        self.center + self.span / 2.0
    }

    pub fn contains(&self, f: f64) -> bool {
        f >= self.lo() && f <= self.hi()
    }

    /// Same center, span multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Band::new(self.center, self.span * factor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    freq: Vec<f64>,
    s21: Vec<Complex64>,
    meta: TraceMeta,
}

impl Trace {
    pub fn new(freq: Vec<f64>, s21: Vec<Complex64>, meta: TraceMeta) -> Result<Self> {
        if freq.len() != s21.len() {
            return Err(Error::InvalidTrace(format!(
                "{} frequencies but {} S21 samples",
                freq.len(),
                s21.len()
            )));
        }
        if freq.len() < MIN_TRACE_LEN {
            return Err(Error::InvalidTrace(format!(
                "{} samples, need at least {MIN_TRACE_LEN}",
                freq.len()
            )));
        }
        for (i, (&f, z)) in freq.iter().zip(&s21).enumerate() {
            if !f.is_finite() || !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::InvalidTrace(format!("non-finite value at sample {i}")));
            }
            if f <= 0.0 {
                return Err(Error::InvalidTrace(format!("non-positive frequency at sample {i}")));
            }
        }
        if let Some(i) = freq.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidTrace(format!(
                "frequency not strictly increasing at sample {}",
                i + 1
            )));
        }
        meta.validate()?;
        Ok(Self { freq, s21, meta })
    }

    pub fn freq(&self) -> &[f64] {
        &self.freq
    }

    pub fn s21(&self) -> &[Complex64] {
        &self.s21
    }

    pub fn meta(&self) -> &TraceMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq.is_empty()
    }

    pub fn f_min(&self) -> f64 {
        self.freq[0]
    }

    pub fn f_max(&self) -> f64 {
        self.freq[self.freq.len() - 1]
    }

    /// The smallest band covering every sample.
    pub fn band(&self) -> Band {
        Band {
            center: 0.5 * (self.f_min() + self.f_max()),
            span: self.f_max() - self.f_min(),
        }
    }

    pub fn with_meta(&self, meta: TraceMeta) -> Result<Self> {
        Trace::new(self.freq.clone(), self.s21.clone(), meta)
    }

    /// Returns a new trace with every sample mapped through `f(freq, s21)`.
    pub fn map_s21(&self, f: impl Fn(f64, Complex64) -> Complex64) -> Result<Self> {
        let s21 = self.freq.iter().zip(&self.s21).map(|(&fr, &z)| f(fr, z)).collect();
        Trace::new(self.freq.clone(), s21, self.meta.clone())
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.s21.iter().map(|z| z.norm()).collect()
    }

    /// Sub-trace of samples inside `band`, metadata and order preserved.
    pub fn window(&self, band: &Band) -> Result<Self> {
        let (lo, hi) = (band.lo(), band.hi());
        let start = self.freq.partition_point(|&f| f < lo);
        let end = self.freq.partition_point(|&f| f <= hi);
        if start >= end {
            return Err(Error::EmptyWindow { lo, hi });
        }
        Trace::new(
            self.freq[start..end].to_vec(),
            self.s21[start..end].to_vec(),
            self.meta.clone(),
        )
    }

    /// Continuous phase of S21; see [`unwrap`].
    pub fn unwrapped_phase(&self) -> Vec<f64> {
        let raw: Vec<f64> = self.s21.iter().map(|z| z.arg()).collect();
        unwrap(&raw)
    }
}

/// Removes 2π jumps so that successive samples differ by less than π.
/// The first sample is kept as given.
pub fn unwrap(raw: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for &p in raw {
        if let Some(q) = prev {
            let d = p - q;
            if d > PI {
                offset -= 2.0 * PI * ((d + PI) / (2.0 * PI)).floor();
            } else if d < -PI {
                offset += 2.0 * PI * ((-d + PI) / (2.0 * PI)).floor();
            }
        }
        out.push(p + offset);
        prev = Some(p);
    }
    out
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(x: f64) -> f64 {
    let mut y = x % (2.0 * PI);
    if y <= -PI {
        y += 2.0 * PI;
    } else if y > PI {
        y -= 2.0 * PI;
    }
    y
}
