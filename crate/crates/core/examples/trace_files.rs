//! Write a trace in both column layouts and read it back.

use cpw_resonator::io::{parse_trace, write_trace, S21Format};
use cpw_resonator::notch::synth_trace;
use cpw_resonator::{Band, NoiseSpec, NotchParams, TraceMeta};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let p = NotchParams::new(3.3167549e9, 2e5, 5e5).with_phase(0.2);
    let t = synth_trace(
        &p,
        &Band::new(p.f0, 3.0 * p.linewidth())?,
        101,
        &NoiseSpec::new(1e-3, 3),
        TraceMeta::new("C", 2).with_conditions(25.0, -60.0),
    )?;
    let dir = std::env::temp_dir().join(format!("resonator-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    for (name, fmt) in [("reim.csv", S21Format::ReIm), ("dbdeg.csv", S21Format::DbDeg)] {
        let path = dir.join(name);
        write_trace(&path, &t, fmt)?;
        let back = parse_trace(&path)?;
        let worst = t
            .s21()
            .iter()
            .zip(back.s21())
            .map(|(a, b)| (a - b).norm() / a.norm())
            .fold(0.0, f64::max);
        println!("{name}: {} rows, worst relative deviation {worst:.1e}, meta {:?}", back.len(), back.meta().device_id);
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
