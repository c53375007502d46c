//! Phase-only fitting of background-corrected narrow scans.
//!
//! The model is `φ(f) = arg B(f) + φ0` with `B` from [`crate::notch`]. The
//! optimizer works in scaled coordinates: `f0` and `δω` as offsets in units
//! of the initial linewidth, `Q` and `Qc` as logarithms so they stay positive.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::delay::{correct, fit_delay, fit_delay_detrended, DelayFit};
use crate::error::{Error, Result};
use crate::lsq::{covariance, minimize, LeastSquaresProblem, LmConfig};
use crate::notch::NotchParams;
use crate::trace::{unwrap, Band, Trace};

/// A value with its 1σ uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub sigma: f64,
}

impl Measured {
    pub fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, sigma: 0.0 }
    }
}

/// Box constraint; an infinite side is written as `null` in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    #[serde(with = "open_lower")]
    pub min: f64,
    #[serde(with = "open_upper")]
    pub max: f64,
}

macro_rules! open_side {
    ($name:ident, $inf:expr) => {
        mod $name {
            use serde::{Deserialize, Deserializer, Serializer};

            pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
                if x.is_finite() {
                    s.serialize_some(x)
                } else {
                    s.serialize_none()
                }
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
                Ok(Option::<f64>::deserialize(d)?.unwrap_or($inf))
            }
        }
    };
}
open_side!(open_lower, f64::NEG_INFINITY);
open_side!(open_upper, f64::INFINITY);

impl Bounds {
    pub const FREE: Bounds = Bounds {
        min: f64::NEG_INFINITY,
        max: f64::INFINITY,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub f0: Bounds,
    pub q_total: Bounds,
    pub q_c: Bounds,
    pub delta_omega: Bounds,
    pub phi0: Bounds,
}

impl Default for ParamBounds {
    fn default() -> Self {
        let q = Bounds { min: 1.0, max: 1e13 };
        Self {
            f0: Bounds::FREE,
            q_total: q,
            q_c: q,
            delta_omega: Bounds::FREE,
            phi0: Bounds::FREE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Convergence threshold on the relative parameter step.
    pub relative_tolerance: f64,
    pub damping_init: f64,
    pub bounds: ParamBounds,
    /// Re-estimate the delay after subtracting the fitted resonant phase from
    /// the wide scan, then refit. Removes the bias the resonance tails put on
    /// a purely linear background.
    pub refine_background: bool,
    pub background_iterations: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            relative_tolerance: 1e-10,
            damping_init: 1e-3,
            bounds: ParamBounds::default(),
            refine_background: true,
            background_iterations: 10,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.relative_tolerance.is_nan() || self.relative_tolerance <= 0.0 {
            return Err(Error::InvalidParameter(format!("fit config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonatorFit {
    pub f0: Measured,
    pub q_total: Measured,
    pub q_c: Measured,
    pub delta_omega: Measured,
    pub phi0: Measured,
    /// Present only when `Qc > Q`.
    pub q_i: Option<Measured>,
    /// RMS phase residual, radians.
    pub rms_residual: f64,
    pub n_iterations: usize,
    pub converged: bool,
    pub fit_band: Band,
}

impl ResonatorFit {
    /// Best-fit model with no delay and unit amplitude.
    pub fn params(&self) -> NotchParams {
        NotchParams {
            f0: self.f0.value,
            q_total: self.q_total.value,
            q_c: self.q_c.value,
            delta_omega: self.delta_omega.value,
            phi0: self.phi0.value,
            delay: 0.0,
            amp: 1.0,
        }
    }

    /// Continuous model phase on an increasing frequency grid.
    pub fn model_phase(&self, freq: &[f64]) -> Vec<f64> {
        continuous_phase(&self.params(), freq)
    }
}

/// `arg B(f) + φ0` tracked continuously from the lowest frequency.
pub fn continuous_phase(p: &NotchParams, freq: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = freq.iter().map(|&f| crate::notch::bracket(p, f).arg()).collect();
    unwrap(&raw).into_iter().map(|x| x + p.phi0).collect()
}

/// `1/Qi = 1/Q - 1/Qc`.
pub fn qi_from(q_total: f64, q_c: f64) -> Result<f64> {
    if !(q_total > 0.0 && q_total.is_finite() && q_c.is_finite()) {
        return Err(Error::InvalidParameter(format!("Q = {q_total}, Qc = {q_c}")));
    }
    if q_total >= q_c {
        return Err(Error::NonPhysical(format!(
            "Q = {q_total} not below Qc = {q_c}"
        )));
    }
    Ok(q_total * q_c / (q_c - q_total))
}

/// [`qi_from`] with independent uncertainties combined in quadrature.
pub fn qi_from_measured(q_total: Measured, q_c: Measured) -> Result<Measured> {
    let qi = qi_from(q_total.value, q_c.value)?;
    let dq = qi * qi / (q_total.value * q_total.value);
    let dqc = qi * qi / (q_c.value * q_c.value);
    Ok(Measured::new(
        qi,
        ((dq * q_total.sigma).powi(2) + (dqc * q_c.sigma).powi(2)).sqrt(),
    ))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Starting point for [`fit_phase`] read off the magnitude dip.
pub fn init_guess(narrow: &Trace) -> Result<NotchParams> {
    let freq = narrow.freq();
    let mags = narrow.magnitude();
    let n = mags.len();

    let diffs: Vec<f64> = mags.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let noise = 1.4826 * median(diffs) / 2f64.sqrt();
    let w = (n / 20).max(3);
    let smooth: Vec<f64> = mags
        .windows(w)
        .map(|s| s.iter().sum::<f64>() / w as f64)
        .collect();
    let s_max = smooth.iter().copied().fold(f64::MIN, f64::max);
    let s_min = smooth.iter().copied().fold(f64::MAX, f64::min);
    let depth = s_max - s_min;
    if !(depth > 3.0 * noise && depth > 1e-9 * s_max) {
        return Err(Error::NoDip(format!(
            "depth {depth:.3e} vs noise {noise:.3e}"
        )));
    }

    let (imin, &m_min) = mags
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("trace is non-empty");
    let m_max = mags.iter().copied().fold(f64::MIN, f64::max);
    let f0 = freq[imin];

    let g: Vec<f64> = mags.iter().map(|m| m_max * m_max - m * m).collect();
    let half = 0.5 * g[imin];
    let cross = |i: usize, j: usize| freq[i] + (half - g[i]) * (freq[j] - freq[i]) / (g[j] - g[i]);
    let left = (1..=imin)
        .rev()
        .find(|&i| g[i - 1] < half)
        .map(|i| cross(i - 1, i));
    let right = (imin..n - 1).find(|&i| g[i + 1] < half).map(|i| cross(i, i + 1));
    let fwhm = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (f0 - l),
        (None, Some(r)) => 2.0 * (r - f0),
        (None, None) => narrow.f_max() - narrow.f_min(),
    }
    .max(freq[1] - freq[0]);
    let q_total = f0 / fwhm;
    let q_c = (q_total / (1.0 - m_min / m_max)).max(q_total * (1.0 + 1e-6));

    let phase = narrow.unwrapped_phase();
    let tail = (n / 10).max(2);
    let mut tails: Vec<f64> = phase[..tail].to_vec();
    tails.extend_from_slice(&phase[n - tail..]);

    Ok(NotchParams::new(f0, q_total, q_c).with_phase(median(tails)))
}

struct PhaseProblem<'a> {
    freq: &'a [f64],
    data: Vec<f64>,
    f0_ref: f64,
    scale: f64,
}

impl PhaseProblem<'_> {
    fn unpack(&self, t: &DVector<f64>) -> NotchParams {
        NotchParams {
            f0: self.f0_ref + t[0] * self.scale,
            q_total: t[1].exp(),
            q_c: t[2].exp(),
            delta_omega: t[3] * self.scale,
            phi0: t[4],
            delay: 0.0,
            amp: 1.0,
        }
    }

    fn pack(&self, p: &NotchParams) -> DVector<f64> {
        DVector::from_vec(vec![
            (p.f0 - self.f0_ref) / self.scale,
            p.q_total.ln(),
            p.q_c.ln(),
            p.delta_omega / self.scale,
            p.phi0,
        ])
    }
}

impl LeastSquaresProblem for PhaseProblem<'_> {
    fn residuals(&self, t: &DVector<f64>) -> DVector<f64> {
        let p = self.unpack(t);
        let model = continuous_phase(&p, self.freq);
        DVector::from_iterator(
            self.freq.len(),
            self.data.iter().zip(&model).map(|(d, m)| d - m),
        )
    }

    fn jacobian(&self, t: &DVector<f64>) -> DMatrix<f64> {
        let p = self.unpack(t);
        let mut j = DMatrix::zeros(self.freq.len(), 5);
        for (row, &f) in self.freq.iter().enumerate() {
            let g = phase_gradient(&p, f);
            // residual = data - model
            j[(row, 0)] = -g[0] * self.scale;
            j[(row, 1)] = -g[1];
            j[(row, 2)] = -g[2];
            j[(row, 3)] = -g[3] * self.scale;
            j[(row, 4)] = -1.0;
        }
        j
    }
}

/// Derivatives of `arg B(f)` with respect to `(f0, ln Q, ln Qc, δω)`.
pub fn phase_gradient(p: &NotchParams, f: f64) -> [f64; 4] {
    let i = Complex64::i();
    let one = Complex64::new(1.0, 0.0);
    let a = p.q_total / p.q_c;
    let num = one + i * (2.0 * p.q_total * p.delta_omega / p.f0);
    let den = one + i * (2.0 * p.q_total * (f - p.f0) / p.f0);
    let b = one - a * num / den;

    let d_lnq = -(a * num / den + a * (num - one) / den - a * num * (den - one) / (den * den));
    let d_lnqc = a * num / den;
    let d_dw = -a * (i * 2.0 * p.q_total / p.f0) / den;
    let dnum_df0 = -i * 2.0 * p.q_total * p.delta_omega / (p.f0 * p.f0);
    let dden_df0 = -i * 2.0 * p.q_total * f / (p.f0 * p.f0);
    let d_f0 = -a * (dnum_df0 / den - num * dden_df0 / (den * den));

    let im = |db: Complex64| (db / b).im;
    [im(d_f0), im(d_lnq), im(d_lnqc), im(d_dw)]
}

fn lm_config(cfg: &FitConfig, prob: &PhaseProblem) -> LmConfig {
    let b = &cfg.bounds;
    let ln = |x: f64| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY };
    LmConfig {
        max_iterations: cfg.max_iterations,
        relative_tolerance: cfg.relative_tolerance,
        damping_init: cfg.damping_init,
        lower: vec![
            (b.f0.min - prob.f0_ref) / prob.scale,
            ln(b.q_total.min),
            ln(b.q_c.min),
            b.delta_omega.min / prob.scale,
            b.phi0.min,
        ],
        upper: vec![
            (b.f0.max - prob.f0_ref) / prob.scale,
            ln(b.q_total.max),
            ln(b.q_c.max),
            b.delta_omega.max / prob.scale,
            b.phi0.max,
        ],
    }
}

/// Fits the phase model to a delay-corrected narrow scan.
///
/// Non-convergence is reported through `converged = false` with the last
/// iterate retained. A rank-deficient Jacobian at a converged solution is an
/// error.
pub fn fit_phase(narrow: &Trace, guess: &NotchParams, config: &FitConfig) -> Result<ResonatorFit> {
    config.validate()?;
    let finite = [guess.f0, guess.q_total, guess.q_c, guess.delta_omega, guess.phi0]
        .iter()
        .all(|v| v.is_finite());
    if !finite || guess.f0 <= 0.0 || guess.q_total <= 0.0 || guess.q_c <= 0.0 {
        return Err(Error::InvalidParameter(format!("initial guess {guess:?}")));
    }
    let freq = narrow.freq();
    let data = narrow.unwrapped_phase();

    // put the guess on the same 2π branch as the data
    let mut start = *guess;
    let model = continuous_phase(&start, freq);
    let offset = median(data.iter().zip(&model).map(|(d, m)| d - m).collect());
    start.phi0 += 2.0 * PI * (offset / (2.0 * PI)).round();

    let prob = PhaseProblem {
        freq,
        data,
        f0_ref: start.f0,
        scale: start.f0 / start.q_total,
    };
    let lm = lm_config(config, &prob);
    let out = minimize(&prob, prob.pack(&start), &lm);
    let best = prob.unpack(&out.params);
    let m = freq.len();
    let rms = (out.cost / m as f64).sqrt();

    let band = narrow.band();
    let in_band = best.f0 >= narrow.f_min() && best.f0 <= narrow.f_max();
    let mut converged = out.converged && in_band && rms.is_finite();

    let cov = match covariance(&out.jacobian, out.cost) {
        Ok(c) => Some(c),
        Err(Error::SingularMatrix) if converged => return Err(Error::SingularMatrix),
        Err(Error::SingularMatrix) => None,
        Err(e) => return Err(e),
    };
    let sd = |k: usize| cov.as_ref().map_or(f64::NAN, |c| c[(k, k)].sqrt());
    let sigmas = [
        sd(0) * prob.scale,
        best.q_total * sd(1),
        best.q_c * sd(2),
        sd(3) * prob.scale,
        sd(4),
    ];
    if sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        converged = false;
    }

    let q_i = if best.q_c > best.q_total {
        let qi = qi_from(best.q_total, best.q_c)?;
        // d Qi / d ln Q = Qi²/Q, d Qi / d ln Qc = -Qi²/Qc
        let sigma = cov.as_ref().map_or(f64::NAN, |c| {
            let g1 = qi * qi / best.q_total;
            let g2 = -qi * qi / best.q_c;
            (g1 * g1 * c[(1, 1)] + 2.0 * g1 * g2 * c[(1, 2)] + g2 * g2 * c[(2, 2)])
                .max(0.0)
                .sqrt()
        });
        Some(Measured::new(qi, sigma))
    } else {
        None
    };

    Ok(ResonatorFit {
        f0: Measured::new(best.f0, sigmas[0]),
        q_total: Measured::new(best.q_total, sigmas[1]),
        q_c: Measured::new(best.q_c, sigmas[2]),
        delta_omega: Measured::new(best.delta_omega, sigmas[3]),
        phi0: Measured::new(best.phi0, sigmas[4]),
        q_i,
        rms_residual: rms,
        n_iterations: out.iterations,
        converged,
        fit_band: band,
    })
}

/// Output of the full wide + narrow protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub delay: DelayFit,
    pub fit: ResonatorFit,
    /// RMS of corrected wide-scan phase minus the fitted model, radians.
    pub extrapolation_rms: f64,
    /// Number of delay re-estimates after the initial linear fit.
    pub background_iterations: usize,
}

/// Delay fit on the wide scan, correction of the narrow scan, initial guess,
/// phase fit, then a check of the fitted model against the corrected wide
/// scan.
pub fn fit_pipeline(wide: &Trace, narrow: &Trace, config: &FitConfig) -> Result<PipelineResult> {
    let (mw, mn) = (wide.meta(), narrow.meta());
    if mw.device_id != mn.device_id || mw.resonator_index != mn.resonator_index {
        return Err(Error::Precondition(format!(
            "wide scan is {}#{}, narrow scan is {}#{}",
            mw.device_id, mw.resonator_index, mn.device_id, mn.resonator_index
        )));
    }
    let narrow_band = narrow.band();
    let mut delay = fit_delay(wide, &narrow_band)?;
    let corrected = correct(narrow, &delay)?;
    let mut fit = fit_phase(&corrected, &init_guess(&corrected)?, config)?;

    let mut refinements = 0;
    if config.refine_background {
        while refinements < config.background_iterations {
            refinements += 1;
            let mut bare = fit.params();
            bare.phi0 = 0.0;
            let tails = continuous_phase(&bare, wide.freq());
            let next = fit_delay_detrended(wide, &narrow_band, &tails)?;
            let change = (next.tau - delay.tau).abs();
            delay = next;
            let corrected = correct(narrow, &delay)?;
            fit = fit_phase(&corrected, &fit.params(), config)?;
            if change <= 1e-9 * delay.tau.abs() + 1e-18 {
                break;
            }
        }
    }

    let wide_corrected = correct(wide, &delay)?;
    let data = wide_corrected.unwrapped_phase();
    let model = fit.model_phase(wide.freq());
    let resid: Vec<f64> = data.iter().zip(&model).map(|(d, m)| d - m).collect();
    let mean = resid.iter().sum::<f64>() / resid.len() as f64;
    let shift = 2.0 * PI * (mean / (2.0 * PI)).round();
    let extrapolation_rms =
        (resid.iter().map(|r| (r - shift).powi(2)).sum::<f64>() / resid.len() as f64).sqrt();

    Ok(PipelineResult {
        delay,
        fit,
        extrapolation_rms,
        background_iterations: refinements,
    })
}
