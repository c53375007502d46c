//! Hanger (notch) resonator transmission model.
//!
//! The resonant part of S21 is
//!
//! ```text
//! B(f) = 1 - (Q / Qc) (1 + 2iQ δω/ω0) / (1 + 2iQ (ω - ω0)/ω0)
//! ```
//!
//! and a synthesized trace adds a scale, a constant phase and a cable delay:
//! `S21(f) = amp · exp(i(φ0 - 2π f τ)) · B(f)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{wrap_angle, Band, Trace, TraceMeta};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NotchParams {
    /// Resonance frequency, Hz.
    pub f0: f64,
    pub q_total: f64,
    pub q_c: f64,
    /// Asymmetry from feed-line impedance mismatch, Hz (ordinary frequency).
    pub delta_omega: f64,
    /// Constant phase offset, radians.
    pub phi0: f64,
    /// Electrical delay, seconds.
    pub delay: f64,
    pub amp: f64,
}

impl NotchParams {
    /// Bare resonance: no asymmetry, offset or delay, unit amplitude.
    pub fn new(f0: f64, q_total: f64, q_c: f64) -> Self {
        Self {
            f0,
            q_total,
            q_c,
            delta_omega: 0.0,
            phi0: 0.0,
            delay: 0.0,
            amp: 1.0,
        }
    }

    pub fn with_asymmetry(mut self, delta_omega: f64) -> Self {
        self.delta_omega = delta_omega;
        self
    }

    pub fn with_phase(mut self, phi0: f64) -> Self {
        self.phi0 = phi0;
        self
    }

    pub fn with_delay(mut self, delay: f64) -> Self {
        self.delay = delay;
        self
    }

    pub fn with_amp(mut self, amp: f64) -> Self {
        self.amp = amp;
        self
    }

    /// Linewidth `f0 / Q` in Hz.
    pub fn linewidth(&self) -> f64 {
        self.f0 / self.q_total
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.f0,
            self.q_total,
            self.q_c,
            self.delta_omega,
            self.phi0,
            self.delay,
            self.amp,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter(format!("non-finite notch parameter {self:?}")));
        }
        if !(self.f0 > 0.0 && self.q_total > 0.0 && self.q_c > 0.0 && self.amp > 0.0) {
            return Err(Error::InvalidParameter(format!("non-positive notch parameter {self:?}")));
        }
        if self.q_total > self.q_c * (1.0 + 1e-9) {
            return Err(Error::NonPhysical(format!(
                "Q = {} exceeds Qc = {}",
                self.q_total, self.q_c
            )));
        }
        Ok(())
    }
}

/// The resonant factor `B(f)` without scale, offset or delay.
pub fn bracket(p: &NotchParams, f: f64) -> Complex64 {
    let num = Complex64::new(1.0, 2.0 * p.q_total * p.delta_omega / p.f0);
    let den = Complex64::new(1.0, 2.0 * p.q_total * (f - p.f0) / p.f0);
    Complex64::new(1.0, 0.0) - (p.q_total / p.q_c) * num / den
}

/// Full complex transmission including amplitude, offset and delay.
pub fn s21_at(p: &NotchParams, f: f64) -> Complex64 {
    let rot = Complex64::from_polar(p.amp, p.phi0 - 2.0 * PI * f * p.delay);
    rot * bracket(p, f)
}

/// `arg B(f) + φ0`, wrapped into (−π, π]. Delay is not included.
pub fn phase_at(p: &NotchParams, f: f64) -> f64 {
    wrap_angle(bracket(p, f).arg() + p.phi0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Standard deviation per quadrature.
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self { sigma: 0.0, seed: 0 }
    }

    pub fn new(sigma: f64, seed: u64) -> Self {
        Self { sigma, seed }
    }
}

/// Uniform frequency grid of `n` points spanning `band` edge to edge.
pub fn uniform_grid(band: &Band, n: usize) -> Vec<f64> {
    let (lo, span) = (band.lo(), band.span);
    (0..n)
        .map(|i| lo + span * i as f64 / (n - 1) as f64)
        .collect()
}

pub fn synth_trace(
    params: &NotchParams,
    band: &Band,
    n_points: usize,
    noise: &NoiseSpec,
    meta: TraceMeta,
) -> Result<Trace> {
    params.validate()?;
    if n_points < crate::trace::MIN_TRACE_LEN {
        return Err(Error::InvalidParameter(format!("{n_points} points")));
    }
    if !(noise.sigma.is_finite() && noise.sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise sigma {}", noise.sigma)));
    }
    let freq = uniform_grid(band, n_points);
    let mut s21: Vec<Complex64> = freq.iter().map(|&f| s21_at(params, f)).collect();
    if noise.sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        let normal = Normal::new(0.0, noise.sigma)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        for z in &mut s21 {
            let re = normal.sample(&mut rng);
            let im = normal.sample(&mut rng);
            *z += Complex64::new(re, im);
        }
    }
    Trace::new(freq, s21, meta)
}

/// Convergence controls for [`fwhm_adaptive`].
#[derive(Debug, Clone, Copy)]
pub struct Refinement {
    pub initial_points: usize,
    pub relative_tolerance: f64,
    pub max_levels: usize,
}

impl Default for Refinement {
    fn default() -> Self {
        Self {
            initial_points: 33,
            relative_tolerance: 1e-4,
            max_levels: 40,
        }
    }
}

/// Half-maximum width on one grid, or `None` when the peak
/// is unresolved or a half-maximum crossing lies outside the window.
fn grid_fwhm(response: &impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Option<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| response(x)).collect();
    let (imax, &ymax) = ys
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    let half = 0.5 * ymax;
    let above = ys.iter().filter(|&&y| y >= half).count();
    if above < 3 {
        return None;
    }
    let left = (1..=imax).rev().find(|&i| ys[i - 1] < half)?;
    let right = (imax..n - 1).find(|&i| ys[i + 1] < half)?;
    let interp = |i: usize, j: usize| xs[i] + (half - ys[i]) * (xs[j] - xs[i]) / (ys[j] - ys[i]);
    Some(interp(right, right + 1) - interp(left - 1, left))
}

/// Full width at half maximum of a single peak near `center`, refined until
/// successive estimates agree.
///
/// Each level samples a uniform grid centered on `center`. A window that does
/// not contain both half-maximum crossings is doubled; an unresolved peak
/// doubles the point count. Once resolved, the window is reset to ten widths
/// and the point count is doubled per level until two successive widths agree
/// to `relative_tolerance`.
pub fn fwhm_adaptive(
    response: impl Fn(f64) -> f64,
    center: f64,
    initial_span: f64,
    cfg: &Refinement,
) -> Result<f64> {
    let mut span = initial_span;
    let mut n = cfg.initial_points.max(9);
    let mut zoomed = false;
    let mut previous: Option<f64> = None;
    for _ in 0..cfg.max_levels {
        let (lo, hi) = (center - span / 2.0, center + span / 2.0);
        match grid_fwhm(&response, lo, hi, n) {
            None => {
                previous = None;
                // window too narrow or grid too coarse
                if response(lo).max(response(hi)) >= 0.5 * response(center) {
                    span *= 2.0;
                } else {
                    n = 2 * n - 1;
                }
            }
            Some(w) if !zoomed => {
                zoomed = true;
                span = 10.0 * w;
                n = cfg.initial_points.max(9);
            }
            Some(w) => {
                if let Some(p) = previous {
                    if (w - p).abs() <= cfg.relative_tolerance * w {
                        return Ok(w);
                    }
                }
                previous = Some(w);
                n = 2 * n - 1;
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_levels,
    })
}

/// Coupling quality factor of a lossless resonator from the linewidth of its
/// dip response `|1 - S21|²`, `Qc = f0 / FWHM`.
pub fn qc_from_linewidth(lossless: &NotchParams) -> Result<f64> {
    lossless.validate()?;
    if (lossless.q_total - lossless.q_c).abs() > 1e-9 * lossless.q_c {
        return Err(Error::Precondition(
            "linewidth extraction expects a lossless resonator (Q = Qc)".into(),
        ));
    }
    let bare = NotchParams {
        delay: 0.0,
        phi0: 0.0,
        amp: 1.0,
        ..*lossless
    };
    let response = |f: f64| (Complex64::new(1.0, 0.0) - s21_at(&bare, f)).norm_sqr();
    // a few kHz around a GHz tone, widened automatically if needed
    let initial_span = 1e-6 * bare.f0;
    let w = fwhm_adaptive(response, bare.f0, initial_span, &Refinement::default())?;
    Ok(bare.f0 / w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn far_detuned_transmission_is_unity() {
        let p = NotchParams::new(5e9, 1e5, 2e5);
        for sign in [-1.0, 1.0] {
            let f = p.f0 + sign * 1000.0 * p.f0 / p.q_total;
            assert!((s21_at(&p, f) - c(1.0, 0.0)).norm() < 1e-3);
        }
    }

    #[test]
    fn on_resonance_values() {
        let p = NotchParams::new(5e9, 1e5, 2e5);
        assert_eq!(s21_at(&p, p.f0), c(0.5, 0.0));
        let lossless = NotchParams::new(5e9, 1e5, 1e5);
        assert_eq!(s21_at(&lossless, lossless.f0), c(0.0, 0.0));
    }

    #[test]
    fn phase_examples() {
        let p = NotchParams::new(5e9, 1e5, 2e5).with_phase(0.3);
        let far = p.f0 * (1.0 + 1e4 / p.q_total);
        assert!((phase_at(&p, far) - 0.3).abs() < 1e-4);
        let p0 = NotchParams::new(5e9, 1e5, 2e5);
        assert_eq!(phase_at(&p0, p0.f0), 0.0);
        let f = p0.f0 * (1.0 + 1.0 / (2.0 * p0.q_total));
        let expected = c(1.0, 0.0) - 0.5 * (c(1.0, 0.0) / c(1.0, 1.0));
        assert!((expected - c(0.75, 0.25)).norm() < 1e-15);
        assert!((phase_at(&p0, f) - 0.25f64.atan2(0.75)).abs() < 1e-9);
        assert!((phase_at(&p0, f) - 0.32175).abs() < 1e-5);
    }

    #[test]
    fn far_tail_phase_approaches_offset() {
        // the tail decays as (Q/Qc) / x with x = 2 (f - f0) Q / f0
        for &(qc, bound) in &[(2e5, 2.6e-5), (1e7, 1e-6)] {
            let p = NotchParams::new(5e9, 1e5, qc).with_phase(-0.7);
            for sign in [-1.0, 1.0] {
                let f = p.f0 + sign * 1e4 * p.linewidth();
                assert!((phase_at(&p, f) + 0.7).abs() < bound);
            }
        }
    }

    #[test]
    fn magnitude_symmetric_about_f0() {
        let p = NotchParams::new(4.7e9, 3e5, 5e5);
        for k in 1..50 {
            let d = k as f64 * 0.1 * p.linewidth();
            let a = s21_at(&p, p.f0 + d).norm();
            let b = s21_at(&p, p.f0 - d).norm();
            assert!((a - b).abs() / a < 1e-10);
        }
    }

    #[test]
    fn phase_is_amplitude_invariant() {
        let p = NotchParams::new(4.7e9, 3e5, 5e5).with_asymmetry(2e3);
        let q = p.with_amp(17.5);
        for k in -20..20 {
            let f = p.f0 + k as f64 * 0.2 * p.linewidth();
            assert_eq!(phase_at(&p, f), phase_at(&q, f));
        }
    }

    #[test]
    fn noiseless_synthesis_is_exact() {
        let p = NotchParams::new(4.49e9, 5e5, 8e5).with_delay(30e-9).with_phase(0.2);
        let band = Band::new(p.f0, 4.0 * p.linewidth()).unwrap();
        let t = synth_trace(&p, &band, 101, &NoiseSpec::none(), TraceMeta::default()).unwrap();
        for (&f, &z) in t.freq().iter().zip(t.s21()) {
            assert_eq!(z, s21_at(&p, f));
        }
    }

    #[test]
    fn synthesis_is_deterministic_under_seed() {
        let p = NotchParams::new(4.49e9, 5e5, 8e5);
        let band = Band::new(p.f0, 4.0 * p.linewidth()).unwrap();
        let n = NoiseSpec::new(1e-3, 42);
        let a = synth_trace(&p, &band, 201, &n, TraceMeta::default()).unwrap();
        let b = synth_trace(&p, &band, 201, &n, TraceMeta::default()).unwrap();
        assert_eq!(a, b);
        let c = synth_trace(&p, &band, 201, &NoiseSpec::new(1e-3, 43), TraceMeta::default())
            .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noise_standard_deviation() {
        let p = NotchParams::new(4.49e9, 5e5, 8e5);
        let band = Band::new(p.f0, 4.0 * p.linewidth()).unwrap();
        let t = synth_trace(&p, &band, 10001, &NoiseSpec::new(1e-3, 7), TraceMeta::default())
            .unwrap();
        let d: Vec<f64> = t
            .freq()
            .iter()
            .zip(t.s21())
            .map(|(&f, &z)| (z - s21_at(&p, f)).re)
            .collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
        let sd = var.sqrt();
        assert!((0.00095..=0.00105).contains(&sd), "sd = {sd}");
    }

    #[test]
    fn synthesis_rejects_nonphysical_q() {
        let p = NotchParams::new(4.49e9, 9e5, 8e5);
        let band = Band::new(p.f0, 1e5).unwrap();
        assert!(synth_trace(&p, &band, 101, &NoiseSpec::none(), TraceMeta::default()).is_err());
    }

    /// Brute-force FWHM on a very dense fixed grid.
    fn dense_fwhm(p: &NotchParams) -> f64 {
        let w = p.linewidth();
        let n = 2_000_001;
        let lo = p.f0 - 5.0 * w;
        let step = 10.0 * w / (n - 1) as f64;
        let resp = |f: f64| (c(1.0, 0.0) - s21_at(p, f)).norm_sqr();
        let peak = resp(p.f0);
        let above: Vec<usize> = (0..n)
            .filter(|&i| resp(lo + step * i as f64) >= 0.5 * peak)
            .collect();
        (above.last().unwrap() - above.first().unwrap()) as f64 * step
    }

    #[test]
    fn linewidth_closed_form_matches_brute_force() {
        let p = NotchParams::new(5e9, 1e5, 1e5);
        let brute = dense_fwhm(&p);
        assert!((brute - p.f0 / 1e5).abs() / brute < 1e-5);
        let qc = qc_from_linewidth(&p).unwrap();
        assert!((qc - 1e5).abs() / 1e5 < 1e-3, "qc = {qc}");
    }

    #[test]
    fn linewidth_recovers_reference_coupling_q() {
        for &(f0, qc) in &[(4.7440e9, 5.68e6), (6.6598e9, 3.69e6)] {
            let got = qc_from_linewidth(&NotchParams::new(f0, qc, qc)).unwrap();
            assert!((got - qc).abs() / qc < 1e-3, "{got} vs {qc}");
        }
    }

    #[test]
    fn linewidth_across_decades() {
        for &q in &[1e4, 1e5, 1e6, 5.68e6] {
            let got = qc_from_linewidth(&NotchParams::new(5e9, q, q)).unwrap();
            assert!((got - q).abs() / q < 1e-3, "{got} vs {q}");
        }
    }

    #[test]
    fn linewidth_requires_lossless() {
        assert!(qc_from_linewidth(&NotchParams::new(5e9, 1e5, 2e5)).is_err());
    }

    #[test]
    fn refinement_gives_up() {
        let cfg = Refinement {
            max_levels: 3,
            ..Refinement::default()
        };
        let r = fwhm_adaptive(|f: f64| 1.0 / (1.0 + (f / 1e-3).powi(2)), 0.0, 1e3, &cfg);
        assert!(matches!(r, Err(Error::NonConvergence { .. })));
    }
}
