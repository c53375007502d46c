//! Electrical-delay estimation from wide scans and delay removal.
//!
//! The wide scan's unwrapped phase is fitted with a straight line
//! `a + b f` after excluding a band three times the narrow-scan span around
//! the resonance. The delay is `τ = -b / 2π`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{Band, Trace};

/// Width of the excluded middle region in units of the narrow-scan span.
pub const EXCLUSION_FACTOR: f64 = 3.0;
pub const MIN_RETAINED: usize = 16;
/// Minimum wide-scan span in units of the narrow-scan span.
pub const MIN_WIDE_RATIO: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayFit {
    /// Electrical delay, seconds.
    pub tau: f64,
    /// Phase of the fitted line at zero frequency, radians.
    pub phase_intercept: f64,
    pub excluded_band: Band,
    /// RMS of the linear fit residual over retained samples, radians.
    pub rms_residual: f64,
    pub n_retained: usize,
}

impl DelayFit {
    /// A fit that removes exactly `tau` and nothing else.
    pub fn fixed(tau: f64, excluded_band: Band) -> Self {
        Self {
            tau,
            phase_intercept: 0.0,
            excluded_band,
            rms_residual: 0.0,
            n_retained: 0,
        }
    }
}

pub fn exclusion_band(narrow_band: &Band) -> Result<Band> {
    narrow_band.scaled(EXCLUSION_FACTOR)
}

pub fn fit_delay(wide: &Trace, narrow_band: &Band) -> Result<DelayFit> {
    let phase = wide.unwrapped_phase();
    fit_line_excluding(wide, narrow_band, &phase)
}

/// Delay fit after subtracting a known resonant phase `background[i]` from
/// every wide-scan sample, e.g. the tails of a fitted resonance model.
pub fn fit_delay_detrended(
    wide: &Trace,
    narrow_band: &Band,
    resonant_phase: &[f64],
) -> Result<DelayFit> {
    if resonant_phase.len() != wide.len() {
        return Err(Error::InvalidParameter(format!(
            "{} background samples for {} trace samples",
            resonant_phase.len(),
            wide.len()
        )));
    }
    let phase: Vec<f64> = wide
        .unwrapped_phase()
        .iter()
        .zip(resonant_phase)
        .map(|(p, b)| p - b)
        .collect();
    fit_line_excluding(wide, narrow_band, &phase)
}

fn fit_line_excluding(wide: &Trace, narrow_band: &Band, phase: &[f64]) -> Result<DelayFit> {
    let wide_span = wide.f_max() - wide.f_min();
    if wide_span < MIN_WIDE_RATIO * narrow_band.span {
        return Err(Error::Precondition(format!(
            "wide span {wide_span} Hz is less than {MIN_WIDE_RATIO} x narrow span {} Hz",
            narrow_band.span
        )));
    }
    let excluded = exclusion_band(narrow_band)?;
    let freq = wide.freq();
    let keep: Vec<bool> = freq.iter().map(|&f| !excluded.contains(f)).collect();
    let retained: Vec<usize> = (0..freq.len()).filter(|&i| keep[i]).collect();
    if retained.len() < MIN_RETAINED {
        return Err(Error::InsufficientSamples {
            needed: MIN_RETAINED,
            available: retained.len(),
        });
    }
    for i in 1..freq.len() {
        if keep[i] && keep[i - 1] {
            let step = (phase[i] - phase[i - 1]).abs();
            if step > FRAC_PI_2 {
                return Err(Error::PathologicalUnwrap {
                    freq: freq[i],
                    step,
                });
            }
        }
    }

    let n = retained.len() as f64;
    let f_mean = retained.iter().map(|&i| freq[i]).sum::<f64>() / n;
    let p_mean = retained.iter().map(|&i| phase[i]).sum::<f64>() / n;
    let (sxy, sxx) = retained.iter().fold((0.0, 0.0), |(sxy, sxx), &i| {
        let dx = freq[i] - f_mean;
        (sxy + dx * (phase[i] - p_mean), sxx + dx * dx)
    });
    let slope = sxy / sxx;
    let ss: f64 = retained
        .iter()
        .map(|&i| {
            let r = phase[i] - (p_mean + slope * (freq[i] - f_mean));
            r * r
        })
        .sum();
    Ok(DelayFit {
        tau: -slope / (2.0 * PI),
        phase_intercept: p_mean - slope * f_mean,
        excluded_band: excluded,
        rms_residual: (ss / n).sqrt(),
        n_retained: retained.len(),
    })
}

/// Removes the fitted delay: `s21 · exp(+2πi f τ)` at every sample.
/// The intercept is left in place.
pub fn correct(trace: &Trace, fit: &DelayFit) -> Result<Trace> {
    let tau = fit.tau;
    if tau == 0.0 {
        return Ok(trace.clone());
    }
    trace.map_s21(|f, z| z * Complex64::from_polar(1.0, 2.0 * PI * f * tau))
}
