//! Published design and measurement data for four-resonator damascene Ta
//! chips: simulated modes without kinetic inductance and measured tones of
//! seven devices at 25 mK.

use crate::fit::Measured;
use crate::format::parse_parenthetical;
use crate::trace::Coupling;

/// Geometric inductance per length of the CPW, H/m.
pub const L_GEOM: f64 = 410e-9;

/// Simulated resonator mode, positions 1..=4 along the feed line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelMode {
    pub position: u8,
    pub coupling: Coupling,
    /// Eigenfrequency without kinetic inductance, Hz.
    pub frequency: f64,
    /// Coupling Q from the simulated linewidth.
    pub q_c: f64,
}

pub const MODEL_MODES: [ModelMode; 4] = [
    ModelMode { position: 1, coupling: Coupling::Inductive, frequency: 4.2449e9, q_c: 7.22e5 },
    ModelMode { position: 2, coupling: Coupling::Capacitive, frequency: 4.7440e9, q_c: 5.68e6 },
    ModelMode { position: 3, coupling: Coupling::Inductive, frequency: 5.6803e9, q_c: 3.94e5 },
    ModelMode { position: 4, coupling: Coupling::Capacitive, frequency: 6.6598e9, q_c: 3.69e6 },
];

pub fn model_mode(position: u8) -> Option<ModelMode> {
    MODEL_MODES.iter().copied().find(|m| m.position == position)
}

pub const DEVICES: [&str; 7] = ["A", "B1", "B2", "B3", "C", "D", "E"];

// (device, position, tone in GHz, drive power in dBm)
const TONES: [(&str, u8, &str, f64); 19] = [
    ("C", 1, "2.8869552(3)", -60.0),
    ("D", 1, "3.1095532(9)", -60.0),
    ("A", 2, "3.2927021(1)", -50.0),
    ("B1", 2, "3.36243(5)", -60.0),
    ("B2", 2, "3.3426635(8)", -60.0),
    ("B3", 2, "3.292418(2)", -60.0),
    ("C", 2, "3.3167549(4)", -60.0),
    ("D", 2, "3.5438650(1)", -60.0),
    ("E", 2, "3.1892495(7)", -60.0),
    ("A", 3, "3.933598(2)", -60.0),
    ("B1", 3, "4.0359282(8)", -60.0),
    ("B2", 3, "3.9886998(3)", -60.0),
    ("B3", 3, "3.8579864(4)", -60.0),
    ("C", 3, "3.8800269(1)", -60.0),
    ("E", 3, "3.7426150(2)", -60.0),
    ("A", 4, "4.4501541(4)", -60.0),
    ("B1", 4, "4.7164314(7)", -60.0),
    ("B2", 4, "4.7868947(9)", -60.0),
    ("C", 4, "4.4920176(1)", -60.0),
];

pub const TONE_TEMPERATURE_MK: f64 = 25.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredTone {
    pub device: &'static str,
    pub position: u8,
    /// Hz, with the quoted last-digit uncertainty.
    pub frequency: Measured,
    /// Decimal places quoted in GHz.
    pub decimals: usize,
    pub power_dbm: f64,
}

impl MeasuredTone {
    pub fn model(&self) -> ModelMode {
        model_mode(self.position).expect("positions are 1..=4")
    }
}

/// All observed tones; unobserved resonators are absent.
pub fn measured_tones() -> Vec<MeasuredTone> {
    TONES
        .iter()
        .map(|&(device, position, text, power_dbm)| {
            let (v, s) = parse_parenthetical(text).expect("well-formed table entry");
            MeasuredTone {
                device,
                position,
                frequency: Measured::new(v * 1e9, s * 1e9),
                decimals: text.split_once('.').map_or(0, |(_, d)| d.find('(').unwrap_or(d.len())),
                power_dbm,
            }
        })
        .collect()
}

pub fn device_tones(device: &str) -> Vec<MeasuredTone> {
    measured_tones().into_iter().filter(|t| t.device == device).collect()
}

/// Coupling Q of Device C position 4, constant over 25–350 mK and
/// −80…−40 dBm.
pub fn device_c_qc() -> Measured {
    Measured::new(8.178e5, 0.016e5)
}

/// `(f_meas, f_model)` pairs in Hz for one device.
pub fn ki_pairs(device: &str) -> Vec<(f64, f64)> {
    device_tones(device)
        .iter()
        .map(|t| (t.frequency.value, t.model().frequency))
        .collect()
}
