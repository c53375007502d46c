//! Kinetic inductance of every measured tone against its simulated mode.

use cpw_resonator::cpw::{extract_lki, fit_device_lki};
use cpw_resonator::reference::{device_tones, ki_pairs, DEVICES, L_GEOM};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    for d in DEVICES {
        let per_tone: Vec<String> = device_tones(d)
            .iter()
            .map(|t| {
                extract_lki(t.frequency.value, t.model().frequency, L_GEOM)
                    .map(|k| format!("{}:{:.0}", t.position, k.l_ki * 1e9))
            })
            .collect::<Result<_, _>>()?;
        let dev = fit_device_lki(&ki_pairs(d), L_GEOM)?;
        println!(
            "device {d:<2} L_ki per position [nH/m] {:<28} device fit {:.0} nH/m (rms {:.1} MHz)",
            per_tone.join(" "),
            dev.l_ki * 1e9,
            dev.rms_residual * 1e-6
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
