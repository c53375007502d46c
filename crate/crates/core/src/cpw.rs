//! Coplanar-waveguide line constants from conformal mapping, quarter-wave
//! resonance frequencies, and kinetic-inductance extraction.
//!
//! The line model assumes a zero-thickness center strip of width `w`
//! separated by gaps `s` from two semi-infinite ground planes on a substrate
//! much thicker than `w + 2s`. With `k = w / (w + 2s)` and `k' = sqrt(1 - k²)`:
//!
//! ```text
//! eps_eff = (eps_r + 1) / 2
//! C       = 4 eps0 eps_eff K(k) / K(k')
//! L_m     = mu0 K(k') / (4 K(k))
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MU0: f64 = 1.256_637_062_12e-6;
pub const EPS0: f64 = 8.854_187_812_8e-12;
pub const C0: f64 = 299_792_458.0;

/// Complete elliptic integral of the first kind `K(k)` (modulus convention)
/// by the arithmetic-geometric mean, `K(k) = π / (2 AGM(1, sqrt(1 - k²)))`.
pub fn ellipk(k: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&k) {
        return Err(Error::Domain(format!("elliptic modulus {k} outside [0, 1)")));
    }
    let mut a = 1.0_f64;
    let mut b = (1.0 - k * k).sqrt();
    for _ in 0..64 {
        if (a - b).abs() <= 1e-15 * a {
            break;
        }
        let next = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = next;
    }
    Ok(std::f64::consts::PI / (a + b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpwGeometry {
    /// Center-strip width in meters.
    pub center_width: f64,
    /// Gap to ground in meters.
    pub gap: f64,
    pub substrate_eps_r: f64,
    #[serde(default)]
    pub tan_delta: f64,
}

impl CpwGeometry {
    pub fn new(center_width: f64, gap: f64, substrate_eps_r: f64, tan_delta: f64) -> Result<Self> {
        let g = Self {
            center_width,
            gap,
            substrate_eps_r,
            tan_delta,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.center_width.is_finite()
            && self.center_width > 0.0
            && self.gap.is_finite()
            && self.gap > 0.0
            && self.substrate_eps_r.is_finite()
            && self.substrate_eps_r >= 1.0
            && self.tan_delta.is_finite()
            && self.tan_delta >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("CPW geometry {self:?}")))
        }
    }

    pub fn modulus(&self) -> f64 {
        self.center_width / (self.center_width + 2.0 * self.gap)
    }
}

/// Per-unit-length line constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineParams {
    /// Geometric inductance per length, H/m.
    pub l_geom: f64,
    /// Capacitance per length, F/m.
    pub c_per_len: f64,
    /// Characteristic impedance, ohms.
    pub z0: f64,
    pub eps_eff: f64,
}

impl LineParams {
    /// Builds line constants from a known geometric inductance and impedance,
    /// e.g. to reproduce a quoted `L_m` without knowing the geometry.
    pub fn from_inductance_and_impedance(l_geom: f64, z0: f64) -> Result<Self> {
        if !(l_geom > 0.0 && z0 > 0.0 && l_geom.is_finite() && z0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "L = {l_geom} H/m, Z0 = {z0} ohm"
            )));
        }
        let c = l_geom / (z0 * z0);
        Ok(Self {
            l_geom,
            c_per_len: c,
            z0: (l_geom / c).sqrt(),
            eps_eff: C0 * C0 * l_geom * c,
        })
    }

    /// Phase velocity `1 / sqrt(L C)` including any kinetic inductance.
    pub fn phase_velocity(&self, l_ki: f64) -> f64 {
        1.0 / ((self.l_geom + l_ki) * self.c_per_len).sqrt()
    }
}

pub fn line_params(geom: &CpwGeometry) -> Result<LineParams> {
    geom.validate()?;
    let k = geom.modulus();
    if !(k > 0.0 && k < 1.0) {
        return Err(Error::Domain(format!("modulus k = {k} outside (0, 1)")));
    }
    let kp = (1.0 - k * k).sqrt();
    let kk = ellipk(k)?;
    let kkp = ellipk(kp)?;
    let eps_eff = 0.5 * (geom.substrate_eps_r + 1.0);
    let c_per_len = 4.0 * EPS0 * eps_eff * kk / kkp;
    let l_geom = MU0 * kkp / (4.0 * kk);
    Ok(LineParams {
        l_geom,
        c_per_len,
        z0: (l_geom / c_per_len).sqrt(),
        eps_eff,
    })
}

fn check_lki(l_ki: f64) -> Result<()> {
    if l_ki.is_finite() && l_ki >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("kinetic inductance {l_ki} H/m")))
    }
}

/// Fundamental of a quarter-wave resonator, `1 / (4 len sqrt((L_m + L_ki) C))`.
pub fn quarter_wave_freq(line: &LineParams, length: f64, l_ki: f64) -> Result<f64> {
    if !(length.is_finite() && length > 0.0) {
        return Err(Error::InvalidParameter(format!("length {length} m")));
    }
    check_lki(l_ki)?;
    Ok(line.phase_velocity(l_ki) / (4.0 * length))
}

/// Resonator length whose quarter-wave frequency without kinetic inductance
/// equals `f_target`.
pub fn length_for_frequency(line: &LineParams, f_target: f64) -> Result<f64> {
    if !(f_target.is_finite() && f_target > 0.0) {
        return Err(Error::InvalidParameter(format!("frequency {f_target} Hz")));
    }
    Ok(line.phase_velocity(0.0) / (4.0 * f_target))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KiResult {
    /// Kinetic inductance per length, H/m.
    pub l_ki: f64,
    /// Measured over model frequency.
    pub freq_ratio: f64,
    pub f_model: f64,
    pub f_meas: f64,
}

/// Kinetic inductance implied by a measured tone lying below its
/// geometric-only model frequency: `L_ki = L_m ((f_model / f_meas)² - 1)`.
pub fn extract_lki(f_meas: f64, f_model: f64, l_geom: f64) -> Result<KiResult> {
    if !(f_meas.is_finite() && f_meas > 0.0 && f_model.is_finite() && f_model > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "frequencies {f_meas} Hz / {f_model} Hz"
        )));
    }
    if !(l_geom.is_finite() && l_geom > 0.0) {
        return Err(Error::InvalidParameter(format!("L_m = {l_geom} H/m")));
    }
    if f_meas > f_model {
        return Err(Error::NonPhysical(format!(
            "measured {f_meas} Hz above model {f_model} Hz implies negative kinetic inductance"
        )));
    }
    let ratio = f_model / f_meas;
    Ok(KiResult {
        l_ki: l_geom * (ratio * ratio - 1.0),
        freq_ratio: f_meas / f_model,
        f_model,
        f_meas,
    })
}

/// Model frequency shifted by kinetic inductance, `f_model sqrt(L_m / (L_m + L_ki))`.
pub fn shifted_frequency(f_model: f64, l_geom: f64, l_ki: f64) -> f64 {
    f_model * (l_geom / (l_geom + l_ki)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceKiFit {
    pub l_ki: f64,
    /// RMS of `shifted_frequency - f_meas` over all tones, Hz.
    pub rms_residual: f64,
}

/// Single kinetic inductance for a device, least squares over all tones.
///
/// The residual `f_model_i r - f_meas_i` is linear in `r = sqrt(L_m/(L_m+L_ki))`,
/// so the minimizer over `L_ki ∈ [0, 100 L_m]` is the clamped projection
/// `r* = Σ m e / Σ m²`.
pub fn fit_device_lki(pairs: &[(f64, f64)], l_geom: f64) -> Result<DeviceKiFit> {
    if pairs.is_empty() {
        return Err(Error::InsufficientSamples {
            needed: 1,
            available: 0,
        });
    }
    let per_tone = pairs
        .iter()
        .map(|&(meas, model)| extract_lki(meas, model, l_geom))
        .collect::<Result<Vec<_>>>()?;
    let l_ki = if let [single] = per_tone.as_slice() {
        single.l_ki
    } else {
        let (num, den) = pairs
            .iter()
            .fold((0.0, 0.0), |(n, d), &(e, m)| (n + m * e, d + m * m));
        let r_min = (1.0_f64 / 101.0).sqrt();
        let r = (num / den).clamp(r_min, 1.0);
        l_geom * (1.0 / (r * r) - 1.0)
    };
    let ss: f64 = pairs
        .iter()
        .map(|&(e, m)| {
            let d = shifted_frequency(m, l_geom, l_ki) - e;
            d * d
        })
        .sum();
    Ok(DeviceKiFit {
        l_ki,
        rms_residual: (ss / pairs.len() as f64).sqrt(),
    })
}
