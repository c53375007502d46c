//! A synthetic temperature/power sweep: classify regimes and fit the TLS
//! loss law back.

use cpw_resonator::fit::Measured;
use cpw_resonator::tls::{aggregate_cells, classify_regimes, fit_tls_law, QiCell, RegimeThresholds, TlsLaw};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let f = 4.492e9;
    let truth = TlsLaw::new(1e-6, -70.0, 5e6);
    let temps: Vec<f64> = (0..12).map(|i| 25.0 * 10f64.powf(3.0 * i as f64 / 11.0)).collect();
    let mut cells = Vec::new();
    for &t in &temps {
        for p in [-80.0, -70.0, -60.0, -50.0, -40.0] {
            cells.push(QiCell {
                temperature_mk: t,
                power_dbm: p,
                q_i: Measured::exact(truth.qi(f, t, p)),
            });
        }
    }
    let surface = aggregate_cells("C", 4, &cells)?;
    let report = classify_regimes(&surface, &RegimeThresholds::default())?;
    for (t, (r, s)) in temps.iter().zip(report.row_regimes.iter().zip(&report.spread)) {
        println!("{t:>8.1} mK  spread {s:6.3}  {r:?}");
    }
    for b in &report.boundaries {
        println!("{:?} threshold crossed at {:.0} mK", b.threshold, b.temperature_mk);
    }
    let fit = fit_tls_law(&surface, f, 0.5)?;
    println!(
        "fit: F delta0 = {:.4e}, Pc = {:.3} dBm, Q_other = {:.4e}",
        fit.law.f_delta0, fit.law.pc_dbm, fit.law.q_other
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
