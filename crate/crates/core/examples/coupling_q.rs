//! Coupling Q from the linewidth of a lossless resonance, for the four
//! simulated modes of the reference chip.

use cpw_resonator::notch::qc_from_linewidth;
use cpw_resonator::reference::MODEL_MODES;
use cpw_resonator::NotchParams;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    for m in MODEL_MODES {
        let lossless = NotchParams::new(m.frequency, m.q_c, m.q_c);
        let qc = qc_from_linewidth(&lossless)?;
        println!(
            "position {} ({:?}): f = {:.4} GHz, Qc = {qc:.4e} (expected {:.3e})",
            m.position,
            m.coupling,
            m.frequency * 1e-9,
            m.q_c
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
