use std::f64::consts::{PI, TAU};

use approx::assert_relative_eq;
use num_complex::Complex64;
use proptest::prelude::*;

use cpw_resonator::cpw::{extract_lki, shifted_frequency};
use cpw_resonator::fit::{qi_from, Measured};
use cpw_resonator::io::{complex_to_db_deg, db_deg_to_complex};
use cpw_resonator::notch::{phase_at, s21_at};
use cpw_resonator::tls::{aggregate_cells, classify_regimes, QiCell, RegimeThresholds, TlsLaw};
use cpw_resonator::trace::{unwrap, wrap_angle};
use cpw_resonator::{Band, NotchParams, Trace, TraceMeta};

fn grid_trace(n: usize) -> Trace {
    let freq: Vec<f64> = (0..n).map(|i| 4.48e9 + 2e4 * i as f64).collect();
    let s21 = freq.iter().map(|&f| Complex64::from_polar(1.0, f * 1e-6)).collect();
    Trace::new(freq, s21, TraceMeta::default()).unwrap()
}

proptest! {
    #[test]
    fn window_is_idempotent(center in 4.481e9..4.499e9, span in 1e5..1e7) {
        let t = grid_trace(1001);
        let b = Band::new(center, span).unwrap();
        if let Ok(w) = t.window(&b) {
            let ww = w.window(&b).unwrap();
            prop_assert_eq!(&w, &ww);
            prop_assert!(w.freq().iter().all(|&f| b.contains(f)));
        }
    }

    #[test]
    fn unwrap_differs_by_multiples_of_two_pi(raw in prop::collection::vec(-PI..PI, 2..200)) {
        let u = unwrap(&raw);
        prop_assert_eq!(u.len(), raw.len());
        for (a, b) in u.iter().zip(&raw) {
            let k = (a - b) / TAU;
            prop_assert!((k - k.round()).abs() < 1e-9);
        }
        for w in u.windows(2) {
            prop_assert!((w[1] - w[0]).abs() <= PI + 1e-12);
        }
    }

    #[test]
    fn kinetic_inductance_round_trip(f_model in 3e9..8e9, ratio in 0.3..1.0f64, l_m in 1e-7..1e-6) {
        let f_meas = f_model * ratio;
        let k = extract_lki(f_meas, f_model, l_m).unwrap();
        prop_assert!(k.l_ki >= 0.0);
        assert_relative_eq!(shifted_frequency(f_model, l_m, k.l_ki), f_meas, max_relative = 1e-12);
    }

    #[test]
    fn kinetic_inductance_lowers_frequency(f_model in 3e9..8e9, a in 0.0..1e-6, b in 0.0..1e-6) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(shifted_frequency(f_model, 410e-9, hi) <= shifted_frequency(f_model, 410e-9, lo));
    }

    #[test]
    fn qi_round_trip(q in 1e3..1e7, x in 1.001..1e3f64) {
        let qc = q * x;
        let qi = qi_from(q, qc).unwrap();
        // 1/Q = 1/Qi + 1/Qc
        assert_relative_eq!(1.0 / q, 1.0 / qi + 1.0 / qc, max_relative = 1e-9);
        prop_assert!(qi > q);
    }

    #[test]
    fn db_deg_round_trip(re in -2.0..2.0f64, im in -2.0..2.0f64) {
        prop_assume!(re.hypot(im) > 1e-6);
        let z = Complex64::new(re, im);
        let (m, p) = complex_to_db_deg(z);
        let back = db_deg_to_complex(m, p);
        prop_assert!((back - z).norm() <= 1e-12 * z.norm());
    }

    #[test]
    fn transmission_is_passive_when_q_below_qc(q in 1e3..1e7, x in 1.0..1e3f64, d in -5.0..5.0f64) {
        let p = NotchParams::new(5e9, q, q * x);
        let f = p.f0 + d * p.linewidth();
        prop_assert!(s21_at(&p, f).norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn phase_offset_only_rotates(q in 1e4..1e6, x in 1.1..10.0f64, d in -3.0..3.0f64, phi in -3.0..3.0f64) {
        let p = NotchParams::new(5e9, q, q * x);
        let f = p.f0 + d * p.linewidth();
        let shifted = wrap_angle(phase_at(&p.with_phase(phi), f) - phase_at(&p, f) - phi);
        prop_assert!(shifted.abs() < 1e-9);
    }

    #[test]
    fn regime_labels_are_scale_invariant(scale in 1e-3..1e3f64, fd in 1e-7..1e-5, pc in -90.0..-50.0f64) {
        let law = TlsLaw::new(fd, pc, 2e6);
        let mut cells = Vec::new();
        for i in 0..8 {
            let t = 20.0 * 2f64.powi(i);
            for p in [-80.0, -60.0, -40.0] {
                cells.push(QiCell { temperature_mk: t, power_dbm: p, q_i: Measured::exact(law.qi(5e9, t, p)) });
            }
        }
        let s = aggregate_cells("X", 1, &cells).unwrap();
        let th = RegimeThresholds::default();
        let a = classify_regimes(&s, &th).unwrap();
        let b = classify_regimes(&s.map_qi(|m| Measured::exact(m.value * scale)), &th).unwrap();
        prop_assert_eq!(a.row_regimes, b.row_regimes);
    }
}
