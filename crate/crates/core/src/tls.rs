//! Internal quality factor over temperature and power.
//!
//! Fits from a temperature/power sweep are assembled into a [`QiSurface`],
//! rows are labelled by how strongly Qi depends on power, and the standard
//! two-level-system loss law
//!
//! ```text
//! 1/Qi(T, P) = Fδ0 · tanh(h f / 2 k_B T) / (1 + P/Pc)^β + 1/Q_other
//! ```
//!
//! can be fitted to the surface.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{Measured, ResonatorFit};
use crate::lsq::{minimize, LeastSquaresProblem, LmConfig};
use crate::trace::TraceMeta;

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const BOLTZMANN: f64 = 1.380_649e-23;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    TlsDominated,
    PowerDependent,
    Saturated,
    Unclassified,
}

/// One Qi value at a (temperature, power) point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QiCell {
    pub temperature_mk: f64,
    pub power_dbm: f64,
    pub q_i: Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QiSurface {
    pub device_id: String,
    pub resonator_index: u8,
    /// Strictly increasing, millikelvin.
    pub temperatures: Vec<f64>,
    /// Strictly increasing, dBm at the device.
    pub powers: Vec<f64>,
    /// Indexed `[temperature][power]`; `None` marks an absent cell.
    pub q_i: Vec<Vec<Option<Measured>>>,
    pub regime: Vec<Vec<Regime>>,
}

impl QiSurface {
    pub fn get(&self, ti: usize, pi: usize) -> Option<Measured> {
        self.q_i.get(ti).and_then(|row| row.get(pi)).copied().flatten()
    }

    pub fn absent_cells(&self) -> usize {
        self.q_i.iter().flatten().filter(|c| c.is_none()).count()
    }

    pub fn validate(&self) -> Result<()> {
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&self.temperatures) || !increasing(&self.powers) {
            return Err(Error::InvalidParameter("surface axes must be strictly increasing".into()));
        }
        let nt = self.temperatures.len();
        let np = self.powers.len();
        let shape_ok = self.q_i.len() == nt
            && self.regime.len() == nt
            && self.q_i.iter().all(|r| r.len() == np)
            && self.regime.iter().all(|r| r.len() == np);
        if !shape_ok {
            return Err(Error::InvalidParameter("surface grid does not match its axes".into()));
        }
        Ok(())
    }

    /// Present cells in temperature-major order.
    pub fn cells(&self) -> Vec<QiCell> {
        let mut out = Vec::new();
        for (ti, &t) in self.temperatures.iter().enumerate() {
            for (pi, &p) in self.powers.iter().enumerate() {
                if let Some(q) = self.get(ti, pi) {
                    out.push(QiCell {
                        temperature_mk: t,
                        power_dbm: p,
                        q_i: q,
                    });
                }
            }
        }
        out
    }

    /// Copy with every row's regime set from `report`.
    pub fn with_regimes(&self, report: &RegimeReport) -> Self {
        let mut s = self.clone();
        for (row, &label) in s.regime.iter_mut().zip(&report.row_regimes) {
            row.iter_mut().for_each(|r| *r = label);
        }
        s
    }

    /// Applies `f` to every present Qi value.
    pub fn map_qi(&self, f: impl Fn(Measured) -> Measured) -> Self {
        let mut s = self.clone();
        for row in &mut s.q_i {
            for c in row.iter_mut().flatten() {
                *c = f(*c);
            }
        }
        s
    }
}

/// Builds a surface from individual cells. Axes are the sorted distinct
/// temperatures and powers; cells not supplied are absent.
pub fn aggregate_cells(device_id: &str, resonator_index: u8, cells: &[QiCell]) -> Result<QiSurface> {
    let key = |x: f64| x.to_bits();
    let finite = cells
        .iter()
        .all(|c| c.temperature_mk.is_finite() && c.power_dbm.is_finite());
    if !finite {
        return Err(Error::Precondition("non-finite temperature or power".into()));
    }
    let mut temps: Vec<f64> = cells.iter().map(|c| c.temperature_mk).collect();
    let mut powers: Vec<f64> = cells.iter().map(|c| c.power_dbm).collect();
    for v in [&mut temps, &mut powers] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    let mut grid = vec![vec![None; powers.len()]; temps.len()];
    let mut seen = BTreeSet::new();
    for c in cells {
        if !seen.insert((key(c.temperature_mk), key(c.power_dbm))) {
            return Err(Error::DuplicateCell {
                temperature_mk: c.temperature_mk,
                power_dbm: c.power_dbm,
            });
        }
        let ti = temps.partition_point(|&t| t < c.temperature_mk);
        let pi = powers.partition_point(|&p| p < c.power_dbm);
        grid[ti][pi] = Some(c.q_i);
    }
    let regime = vec![vec![Regime::Unclassified; powers.len()]; temps.len()];
    Ok(QiSurface {
        device_id: device_id.to_string(),
        resonator_index,
        temperatures: temps,
        powers,
        q_i: grid,
        regime,
    })
}

/// Assembles fits from one resonator into a surface. Fits without a Qi
/// (Qc not above Q) leave their cell absent.
pub fn aggregate(fits: &[(ResonatorFit, TraceMeta)]) -> Result<QiSurface> {
    let Some((_, first)) = fits.first() else {
        return Err(Error::InsufficientSamples {
            needed: 1,
            available: 0,
        });
    };
    let mut cells = Vec::with_capacity(fits.len());
    let mut seen = BTreeSet::new();
    for (fit, meta) in fits {
        if meta.device_id != first.device_id || meta.resonator_index != first.resonator_index {
            return Err(Error::MixedResonator(format!(
                "{}#{} and {}#{}",
                first.device_id, first.resonator_index, meta.device_id, meta.resonator_index
            )));
        }
        let (Some(t), Some(p)) = (meta.temperature_mk, meta.power_dbm) else {
            return Err(Error::Precondition(format!(
                "fit of {}#{} lacks temperature or power",
                meta.device_id, meta.resonator_index
            )));
        };
        if !seen.insert((t.to_bits(), p.to_bits())) {
            return Err(Error::DuplicateCell {
                temperature_mk: t,
                power_dbm: p,
            });
        }
        if let Some(q) = fit.q_i {
            cells.push(QiCell {
                temperature_mk: t,
                power_dbm: p,
                q_i: q,
            });
        }
    }
    let mut s = aggregate_cells(&first.device_id, first.resonator_index, &cells)?;
    // keep axis entries for conditions whose fits carried no Qi
    let mut temps: Vec<f64> = fits.iter().filter_map(|(_, m)| m.temperature_mk).collect();
    let mut powers: Vec<f64> = fits.iter().filter_map(|(_, m)| m.power_dbm).collect();
    for v in [&mut temps, &mut powers] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    if temps != s.temperatures || powers != s.powers {
        let mut grid = vec![vec![None; powers.len()]; temps.len()];
        for c in s.cells() {
            let ti = temps.partition_point(|&t| t < c.temperature_mk);
            let pi = powers.partition_point(|&p| p < c.power_dbm);
            grid[ti][pi] = Some(c.q_i);
        }
        s.regime = vec![vec![Regime::Unclassified; powers.len()]; temps.len()];
        s.temperatures = temps;
        s.powers = powers;
        s.q_i = grid;
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeThresholds {
    /// Rows with spread below `1 + saturated` are power independent.
    pub saturated: f64,
    /// Rows with spread at or above `1 + power_dependent` are power dependent.
    pub power_dependent: f64,
    /// Power-dependent rows whose log-spread is within this fraction of the
    /// coldest row's are on the low-temperature plateau.
    pub plateau: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self {
            saturated: 0.05,
            power_dependent: 0.2,
            plateau: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    Saturated,
    PowerDependent,
    /// End of the low-temperature plateau of the spread.
    Plateau,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeBoundary {
    pub threshold: Threshold,
    pub temperature_mk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    /// Spread `max_P Qi / min_P Qi` per temperature row.
    pub spread: Vec<f64>,
    pub row_regimes: Vec<Regime>,
    /// Temperatures where the spread crosses a threshold.
    pub boundaries: Vec<RegimeBoundary>,
    /// Per power: lowest temperature from which Qi stays within the
    /// saturation threshold of the highest-power Qi.
    pub saturation_onset_mk: Vec<Option<f64>>,
    /// Per power: Qi non-decreasing with temperature.
    pub monotonicity_flags: Vec<bool>,
    pub notes: String,
}

fn crossing(t0: f64, t1: f64, y0: f64, y1: f64, level: f64) -> f64 {
    t0 + (level - y0) * (t1 - t0) / (y1 - y0)
}

/// Labels each temperature row of `surface` by its power spread.
pub fn classify_regimes(surface: &QiSurface, th: &RegimeThresholds) -> Result<RegimeReport> {
    surface.validate()?;
    let nt = surface.temperatures.len();
    let np = surface.powers.len();
    if nt < 3 || np < 2 {
        return Err(Error::InsufficientGrid {
            min_temperatures: 3,
            min_powers: 2,
        });
    }
    let row_values = |ti: usize| -> Vec<f64> {
        (0..np).filter_map(|pi| surface.get(ti, pi).map(|m| m.value)).collect()
    };

    let mut log_spread = Vec::with_capacity(nt);
    for ti in 0..nt {
        let v = row_values(ti);
        if v.len() < 2 {
            log_spread.push(f64::NAN);
            continue;
        }
        let max = v.iter().copied().fold(f64::MIN, f64::max);
        let min = v.iter().copied().fold(f64::MAX, f64::min);
        log_spread.push((max / min).ln());
    }
    let l_sat = (1.0 + th.saturated).ln();
    let l_dep = (1.0 + th.power_dependent).ln();
    let coldest = log_spread.iter().copied().find(|x| x.is_finite());

    let mut row_regimes = Vec::with_capacity(nt);
    for (ti, &ls) in log_spread.iter().enumerate() {
        let label = if !ls.is_finite() {
            Regime::Unclassified
        } else if ls < l_sat {
            Regime::Saturated
        } else if ls >= l_dep {
            let v = row_values(ti);
            let rising = v.windows(2).all(|w| w[1] >= w[0]);
            let on_plateau = coldest.is_some_and(|c| ls >= (1.0 - th.plateau) * c);
            if rising && on_plateau {
                Regime::TlsDominated
            } else {
                Regime::PowerDependent
            }
        } else {
            Regime::Unclassified
        };
        row_regimes.push(label);
    }

    let mut boundaries = Vec::new();
    for ti in 1..nt {
        let (y0, y1) = (log_spread[ti - 1], log_spread[ti]);
        if !(y0.is_finite() && y1.is_finite()) {
            continue;
        }
        let (t0, t1) = (surface.temperatures[ti - 1], surface.temperatures[ti]);
        let mut levels = vec![(Threshold::PowerDependent, l_dep), (Threshold::Saturated, l_sat)];
        if let Some(c) = coldest.filter(|&c| c >= l_dep) {
            levels.insert(0, (Threshold::Plateau, (1.0 - th.plateau) * c));
        }
        for (threshold, level) in levels {
            if (y0 - level) * (y1 - level) < 0.0 || (y1 == level && y0 != level) {
                boundaries.push(RegimeBoundary {
                    threshold,
                    temperature_mk: crossing(t0, t1, y0, y1, level),
                });
            }
        }
    }

    let ref_pi = np - 1;
    let mut saturation_onset_mk = Vec::with_capacity(np);
    let mut monotonicity_flags = Vec::with_capacity(np);
    for pi in 0..np {
        let col: Vec<(f64, f64)> = (0..nt)
            .filter_map(|ti| surface.get(ti, pi).map(|m| (surface.temperatures[ti], m.value)))
            .collect();
        monotonicity_flags.push(col.windows(2).all(|w| w[1].1 >= w[0].1));

        // log ratio to the reference power per temperature
        let gap: Vec<(f64, f64)> = (0..nt)
            .filter_map(|ti| {
                let a = surface.get(ti, ref_pi)?.value;
                let b = surface.get(ti, pi)?.value;
                Some((surface.temperatures[ti], (a / b).ln().abs()))
            })
            .collect();
        let first_sat = gap.iter().rposition(|&(_, g)| g >= l_sat).map_or(0, |i| i + 1);
        let onset = if first_sat >= gap.len() {
            None
        } else if first_sat == 0 {
            Some(gap[0].0)
        } else {
            let (t0, g0) = gap[first_sat - 1];
            let (t1, g1) = gap[first_sat];
            Some(crossing(t0, t1, g0, g1, l_sat))
        };
        saturation_onset_mk.push(onset);
    }

    let count = |r: Regime| row_regimes.iter().filter(|&&x| x == r).count();
    let notes = format!(
        "{} tls_dominated, {} power_dependent, {} saturated, {} unclassified rows; thresholds sat {:.3}, dep {:.3}",
        count(Regime::TlsDominated),
        count(Regime::PowerDependent),
        count(Regime::Saturated),
        count(Regime::Unclassified),
        th.saturated,
        th.power_dependent
    );

    Ok(RegimeReport {
        spread: log_spread.iter().map(|l| l.exp()).collect(),
        row_regimes,
        boundaries,
        saturation_onset_mk,
        monotonicity_flags,
        notes,
    })
}

/// Parameters of the TLS loss law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TlsLaw {
    /// Filling factor times intrinsic loss tangent.
    pub f_delta0: f64,
    /// Critical power, dBm.
    pub pc_dbm: f64,
    pub q_other: f64,
    /// Power-saturation exponent β.
    pub exponent: f64,
}

impl TlsLaw {
    pub fn new(f_delta0: f64, pc_dbm: f64, q_other: f64) -> Self {
        Self {
            f_delta0,
            pc_dbm,
            q_other,
            exponent: 0.5,
        }
    }

    /// `tanh(h f / 2 k_B T)`.
    pub fn thermal_factor(frequency: f64, temperature_mk: f64) -> f64 {
        (PLANCK * frequency / (2.0 * BOLTZMANN * temperature_mk * 1e-3)).tanh()
    }

    /// `(1 + P/Pc)^-β`.
    pub fn power_factor(&self, power_dbm: f64) -> f64 {
        (1.0 + 10f64.powf((power_dbm - self.pc_dbm) / 10.0)).powf(-self.exponent)
    }

    /// TLS contribution to `1/Qi`.
    pub fn tls_loss(&self, frequency: f64, temperature_mk: f64, power_dbm: f64) -> f64 {
        self.f_delta0 * Self::thermal_factor(frequency, temperature_mk) * self.power_factor(power_dbm)
    }

    pub fn inverse_qi(&self, frequency: f64, temperature_mk: f64, power_dbm: f64) -> f64 {
        self.tls_loss(frequency, temperature_mk, power_dbm) + 1.0 / self.q_other
    }

    pub fn qi(&self, frequency: f64, temperature_mk: f64, power_dbm: f64) -> f64 {
        1.0 / self.inverse_qi(frequency, temperature_mk, power_dbm)
    }
}

/// Temperature at which `h f = 2 k_B T`, millikelvin.
pub fn thermal_knee_mk(frequency: f64) -> f64 {
    PLANCK * frequency / (2.0 * BOLTZMANN) * 1e3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TlsFit {
    pub law: TlsLaw,
    /// RMS of `ln Qi_model - ln Qi_data`.
    pub rms: f64,
    pub converged: bool,
    pub iterations: usize,
}

struct TlsProblem {
    frequency: f64,
    exponent: f64,
    cells: Vec<QiCell>,
    f_scale: f64,
    b_scale: f64,
}

impl TlsProblem {
    fn law(&self, p: &DVector<f64>) -> TlsLaw {
        TlsLaw {
            f_delta0: p[0] * self.f_scale,
            pc_dbm: p[1],
            q_other: 1.0 / (p[2] * self.b_scale),
            exponent: self.exponent,
        }
    }
}

impl LeastSquaresProblem for TlsProblem {
    fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
        let law = self.law(p);
        DVector::from_iterator(
            self.cells.len(),
            self.cells.iter().map(|c| {
                let inv = law.inverse_qi(self.frequency, c.temperature_mk, c.power_dbm);
                // ln Qi_model - ln Qi_data
                -inv.ln() - c.q_i.value.ln()
            }),
        )
    }

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let law = self.law(p);
        let mut j = DMatrix::zeros(self.cells.len(), 3);
        let ln10 = std::f64::consts::LN_10;
        for (row, c) in self.cells.iter().enumerate() {
            let th = TlsLaw::thermal_factor(self.frequency, c.temperature_mk);
            let x = 10f64.powf((c.power_dbm - law.pc_dbm) / 10.0);
            let pf = (1.0 + x).powf(-law.exponent);
            let inv = law.f_delta0 * th * pf + 1.0 / law.q_other;
            // d pf / d Pc_dBm = β (1+x)^(-β-1) x ln10/10
            let dpf = law.exponent * (1.0 + x).powf(-law.exponent - 1.0) * x * ln10 / 10.0;
            j[(row, 0)] = -th * pf * self.f_scale / inv;
            j[(row, 1)] = -law.f_delta0 * th * dpf / inv;
            j[(row, 2)] = -self.b_scale / inv;
        }
        j
    }
}

/// Least-squares fit of [`TlsLaw`] to the present cells of `surface`, with
/// residuals in `ln Qi`. The exponent is held fixed.
pub fn fit_tls_law(surface: &QiSurface, frequency: f64, exponent: f64) -> Result<TlsFit> {
    surface.validate()?;
    if surface.temperatures.len() < 3 || surface.powers.len() < 3 {
        return Err(Error::InsufficientGrid {
            min_temperatures: 3,
            min_powers: 3,
        });
    }
    if !(frequency > 0.0 && exponent > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "frequency {frequency} Hz, exponent {exponent}"
        )));
    }
    let cells = surface.cells();
    if cells.iter().any(|c| !(c.q_i.value > 0.0 && c.q_i.value.is_finite())) {
        return Err(Error::InvalidParameter("Qi values must be positive".into()));
    }
    if cells.len() < 4 {
        return Err(Error::InsufficientSamples {
            needed: 4,
            available: cells.len(),
        });
    }

    // coarse scan over Pc with (Fδ0, 1/Q_other) solved linearly in relative terms
    let p_lo = surface.powers[0] - 40.0;
    let p_hi = surface.powers[surface.powers.len() - 1] + 40.0;
    let mut best: Option<(f64, TlsLaw)> = None;
    let steps = ((p_hi - p_lo) / 0.5).ceil() as usize;
    for k in 0..=steps {
        let pc = p_lo + 0.5 * k as f64;
        let trial = TlsLaw {
            f_delta0: 1.0,
            pc_dbm: pc,
            q_other: 1.0,
            exponent,
        };
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for c in &cells {
            let y = 1.0 / c.q_i.value;
            let g = TlsLaw::thermal_factor(frequency, c.temperature_mk) * trial.power_factor(c.power_dbm) / y;
            let h = 1.0 / y;
            a11 += g * g;
            a12 += g * h;
            a22 += h * h;
            b1 += g;
            b2 += h;
        }
        let det = a11 * a22 - a12 * a12;
        let (mut f, mut b) = if det.abs() > 1e-300 {
            ((b1 * a22 - b2 * a12) / det, (a11 * b2 - a12 * b1) / det)
        } else {
            (0.0, b2 / a22)
        };
        if f < 0.0 || b <= 0.0 {
            f = f.max(0.0);
            b = if f == 0.0 { b2 / a22 } else { b.max(1e-3 * b2 / a22) };
        }
        let law = TlsLaw {
            f_delta0: f,
            pc_dbm: pc,
            q_other: 1.0 / b,
            exponent,
        };
        let ss: f64 = cells
            .iter()
            .map(|c| (law.qi(frequency, c.temperature_mk, c.power_dbm) / c.q_i.value).ln().powi(2))
            .sum();
        if ss.is_finite() && best.as_ref().is_none_or(|(s, _)| ss < *s) {
            best = Some((ss, law));
        }
    }
    let (_, start) = best.ok_or(Error::NonConvergence { iterations: 0 })?;

    let inv_q: Vec<f64> = cells.iter().map(|c| 1.0 / c.q_i.value).collect();
    let b_scale = inv_q.iter().copied().fold(f64::MAX, f64::min);
    let f_scale = if start.f_delta0 > 0.0 {
        start.f_delta0
    } else {
        inv_q.iter().copied().fold(f64::MIN, f64::max)
    };
    let prob = TlsProblem {
        frequency,
        exponent,
        cells,
        f_scale,
        b_scale,
    };
    let cfg = LmConfig {
        max_iterations: 500,
        relative_tolerance: 1e-12,
        damping_init: 1e-3,
        lower: vec![0.0, p_lo - 40.0, 1e-12],
        upper: vec![f64::INFINITY, p_hi + 40.0, f64::INFINITY],
    };
    let p0 = DVector::from_vec(vec![
        start.f_delta0 / f_scale,
        start.pc_dbm,
        1.0 / (start.q_other * b_scale),
    ]);
    let out = minimize(&prob, p0, &cfg);
    let law = prob.law(&out.params);
    Ok(TlsFit {
        law,
        rms: (out.cost / prob.cells.len() as f64).sqrt(),
        converged: out.converged,
        iterations: out.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Band;

    const F: f64 = 4.492e9;

    fn law() -> TlsLaw {
        TlsLaw::new(1e-6, -70.0, 5e6)
    }

    fn temps() -> Vec<f64> {
        (0..12).map(|i| 25.0 * 10f64.powf(3.0 * i as f64 / 11.0)).collect()
    }

    fn powers() -> Vec<f64> {
        vec![-80.0, -70.0, -60.0, -50.0, -40.0]
    }

    fn oracle_surface(law: &TlsLaw) -> QiSurface {
        let cells: Vec<QiCell> = temps()
            .iter()
            .flat_map(|&t| {
                powers().into_iter().map(move |p| QiCell {
                    temperature_mk: t,
                    power_dbm: p,
                    q_i: Measured::new(law.qi(F, t, p), 0.0),
                })
            })
            .collect();
        aggregate_cells("C", 4, &cells).unwrap()
    }

    fn fit_with(t: f64, p: f64, qi: f64) -> (ResonatorFit, TraceMeta) {
        let fit = ResonatorFit {
            f0: Measured::new(F, 1.0),
            q_total: Measured::new(1e5, 1.0),
            q_c: Measured::new(2e5, 1.0),
            delta_omega: Measured::new(0.0, 1.0),
            phi0: Measured::new(0.0, 1e-3),
            q_i: Some(Measured::new(qi, 1.0)),
            rms_residual: 1e-3,
            n_iterations: 5,
            converged: true,
            fit_band: Band::new(F, 1e5).unwrap(),
        };
        (fit, TraceMeta::new("C", 4).with_conditions(t, p))
    }

    #[test]
    fn aggregate_full_grid() {
        let fits: Vec<_> = temps()
            .iter()
            .flat_map(|&t| powers().into_iter().map(move |p| fit_with(t, p, law().qi(F, t, p))))
            .collect();
        let s = aggregate(&fits).unwrap();
        assert_eq!(s.temperatures.len(), 12);
        assert_eq!(s.powers.len(), 5);
        assert_eq!(s.absent_cells(), 0);
        for (fit, meta) in &fits {
            let ti = s.temperatures.iter().position(|&t| Some(t) == meta.temperature_mk).unwrap();
            let pi = s.powers.iter().position(|&p| Some(p) == meta.power_dbm).unwrap();
            assert_eq!(s.get(ti, pi), fit.q_i);
        }
    }

    #[test]
    fn aggregate_errors() {
        let mut fits = vec![fit_with(25.0, -60.0, 1e6), fit_with(50.0, -60.0, 1e6)];
        fits[1].1.temperature_mk = None;
        assert!(matches!(aggregate(&fits), Err(Error::Precondition(_))));
        let fits = vec![fit_with(25.0, -60.0, 1e6), fit_with(25.0, -60.0, 2e6)];
        assert!(matches!(aggregate(&fits), Err(Error::DuplicateCell { .. })));
        let mut fits = vec![fit_with(25.0, -60.0, 1e6), fit_with(50.0, -60.0, 1e6)];
        fits[1].1.resonator_index = 2;
        assert!(matches!(aggregate(&fits), Err(Error::MixedResonator(_))));
    }

    #[test]
    fn missing_qi_leaves_absent_cell() {
        let mut fits = vec![fit_with(25.0, -60.0, 1e6), fit_with(50.0, -60.0, 1e6), fit_with(50.0, -50.0, 1e6)];
        fits[0].0.q_i = None;
        let s = aggregate(&fits).unwrap();
        assert_eq!(s.temperatures, vec![25.0, 50.0]);
        assert_eq!(s.absent_cells(), 2);
    }

    #[test]
    fn constant_surface_is_saturated() {
        let s = oracle_surface(&TlsLaw::new(0.0, -70.0, 1e6));
        let r = classify_regimes(&s, &RegimeThresholds::default()).unwrap();
        assert!(r.row_regimes.iter().all(|&x| x == Regime::Saturated));
        assert!(r.monotonicity_flags.iter().all(|&m| m));
        assert!(r.boundaries.is_empty());
    }

    #[test]
    fn small_grid_rejected() {
        let cells: Vec<QiCell> = [(25.0, -60.0), (25.0, -50.0), (50.0, -60.0), (50.0, -50.0)]
            .iter()
            .map(|&(t, p)| QiCell {
                temperature_mk: t,
                power_dbm: p,
                q_i: Measured::new(1e6, 0.0),
            })
            .collect();
        let s = aggregate_cells("C", 1, &cells).unwrap();
        assert!(matches!(
            classify_regimes(&s, &RegimeThresholds::default()),
            Err(Error::InsufficientGrid { .. })
        ));
    }

    #[test]
    fn classification_is_scale_invariant() {
        let s = oracle_surface(&law());
        let a = classify_regimes(&s, &RegimeThresholds::default()).unwrap();
        let b = classify_regimes(&s.map_qi(|m| Measured::new(m.value * 3.7, m.sigma)), &RegimeThresholds::default())
            .unwrap();
        assert_eq!(a.row_regimes, b.row_regimes);
    }

    #[test]
    fn thermal_factor_limits() {
        let l = law();
        let knee = thermal_knee_mk(F);
        assert!((knee - 107.8).abs() < 0.1, "{knee}");
        let cold = l.tls_loss(F, 1e-3, -70.0);
        let expected = l.f_delta0 * l.power_factor(-70.0);
        assert!((cold - expected).abs() / expected < 1e-12);
        assert!(l.tls_loss(F, 100.0 * knee * 1.01, -70.0) < 0.01 * cold);
    }

    #[test]
    fn noiseless_law_round_trip() {
        let l = law();
        let fit = fit_tls_law(&oracle_surface(&l), F, 0.5).unwrap();
        assert!(fit.converged);
        assert!((fit.law.f_delta0 - l.f_delta0).abs() / l.f_delta0 < 1e-4);
        assert!((fit.law.pc_dbm - l.pc_dbm).abs() / l.pc_dbm.abs() < 1e-4);
        assert!((fit.law.q_other - l.q_other).abs() / l.q_other < 1e-4);
    }

    #[test]
    fn constant_surface_fit_degenerates() {
        let fit = fit_tls_law(&oracle_surface(&TlsLaw::new(0.0, -70.0, 1e6)), F, 0.5).unwrap();
        assert!(fit.law.f_delta0 < 1e-3 / 1e6);
        assert!((fit.law.q_other - 1e6).abs() / 1e6 < 0.01);
    }
}
