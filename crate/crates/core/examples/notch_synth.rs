//! Synthesize a noisy hanger resonance and look at the dip.

use cpw_resonator::notch::{s21_at, synth_trace};
use cpw_resonator::{Band, NoiseSpec, NotchParams, TraceMeta};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let p = NotchParams::new(4.4920176e9, 3e5, 8.178e5)
        .with_asymmetry(150.0)
        .with_phase(0.4);
    let band = Band::new(p.f0, 4.0 * p.linewidth())?;
    let t = synth_trace(&p, &band, 401, &NoiseSpec::new(1e-3, 7), TraceMeta::new("C", 4))?;

    let (i_min, depth) = t
        .magnitude()
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    println!("linewidth      {:.1} Hz", p.linewidth());
    println!("dip minimum    |S21| = {depth:.4} at {:.1} Hz", t.freq()[i_min]);
    println!("model at f0    |S21| = {:.4}", s21_at(&p, p.f0).norm());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
