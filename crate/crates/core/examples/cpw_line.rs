//! Line constants and quarter-wave frequencies of a CPW on silicon.

use cpw_resonator::cpw::{length_for_frequency, line_params, quarter_wave_freq, CpwGeometry};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    for (w, s) in [(10.0, 6.0), (15.0, 9.0), (20.0, 12.0), (10.0, 3.0)] {
        let g = CpwGeometry::new(w * 1e-6, s * 1e-6, 11.7, 0.0)?;
        let l = line_params(&g)?;
        println!(
            "w = {w:>4} um, s = {s:>4} um: Z0 = {:6.2} ohm, L = {:.1} nH/m, C = {:.1} pF/m",
            l.z0,
            l.l_geom * 1e9,
            l.c_per_len * 1e12
        );
    }
    let line = line_params(&CpwGeometry::new(10e-6, 6e-6, 11.7, 0.0)?)?;
    let len = length_for_frequency(&line, 4.7440e9)?;
    println!("4.7440 GHz quarter wave: {:.3} mm", len * 1e3);
    println!(
        "with 430 nH/m kinetic inductance: {:.4} GHz",
        quarter_wave_freq(&line, len, 430e-9)? * 1e-9
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
