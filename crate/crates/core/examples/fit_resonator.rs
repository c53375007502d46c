//! The full protocol: delay from the wide scan, phase-model fit on the
//! corrected narrow scan, Qi from Q and Qc.

use cpw_resonator::fit::fit_pipeline;
use cpw_resonator::format::format_parenthetical;
use cpw_resonator::notch::synth_trace;
use cpw_resonator::{Band, FitConfig, NoiseSpec, NotchParams, TraceMeta};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let truth = NotchParams::new(4.4920176e9, 4e5, 8.178e5)
        .with_asymmetry(300.0)
        .with_phase(-0.7)
        .with_delay(55e-9);
    let narrow_band = Band::new(truth.f0, 2.0 * truth.linewidth())?;
    let meta = TraceMeta::new("C", 4).with_conditions(25.0, -60.0);
    let narrow = synth_trace(&truth, &narrow_band, 201, &NoiseSpec::new(1e-3, 11), meta.clone())?;
    let wide = synth_trace(&truth, &narrow_band.scaled(10.0)?, 4001, &NoiseSpec::new(1e-3, 12), meta)?;

    let r = fit_pipeline(&wide, &narrow, &FitConfig::default())?;
    let f = &r.fit;
    println!("tau  {:.4} ns (true 55)", r.delay.tau * 1e9);
    println!("f0   {} GHz", format_parenthetical(f.f0.value * 1e-9, f.f0.sigma * 1e-9));
    println!("Q    {}", format_parenthetical(f.q_total.value, f.q_total.sigma));
    println!("Qc   {}", format_parenthetical(f.q_c.value, f.q_c.sigma));
    if let Some(qi) = f.q_i {
        println!("Qi   {}", format_parenthetical(qi.value, qi.sigma));
    }
    println!("wide-scan extrapolation rms {:.2e} rad", r.extrapolation_rms);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
