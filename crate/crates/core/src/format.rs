//! Human-facing number rendering: parenthetical uncertainties and GHz.

use crate::error::{Error, Result};

/// Renders `value` with `decimals` places and the uncertainty in units of
/// the last place, e.g. `3.3426635(8)`.
pub fn format_fixed(value: f64, sigma: f64, decimals: usize) -> String {
    let digits = (sigma * 10f64.powi(decimals as i32)).round().max(1.0);
    format!("{value:.decimals$}({digits:.0})")
}

/// Renders `value(σ)` with one significant digit of uncertainty.
pub fn format_parenthetical(value: f64, sigma: f64) -> String {
    // below double precision the digit carries no information
    if !(sigma > 1e-14 * value.abs() && sigma.is_finite()) {
        return format!("{value}");
    }
    let mut dec = -sigma.log10().floor() as i32;
    if (sigma * 10f64.powi(dec)).round() >= 10.0 {
        dec -= 1;
    }
    if dec < 0 {
        // uncertainty above unity: keep the digit count honest in integer form
        let scale = 10f64.powi(-dec);
        let v = (value / scale).round() * scale;
        let s = (sigma / scale).round() * scale;
        return format!("{v:.0}({s:.0})");
    }
    format_fixed(value, sigma, dec as usize)
}

/// Inverse of [`format_fixed`]: `"3.3426635(8)"` → `(3.3426635, 8e-7)`.
pub fn parse_parenthetical(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::InvalidParameter(format!("not a parenthetical value: {s:?}"));
    let s = s.trim();
    let (num, rest) = s.split_once('(').ok_or_else(bad)?;
    let digits = rest.strip_suffix(')').ok_or_else(bad)?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let value: f64 = num.parse().map_err(|_| bad())?;
    let decimals = num.split_once('.').map_or(0, |(_, d)| d.len()) as i32;
    let sigma = digits.parse::<f64>().map_err(|_| bad())? * 10f64.powi(-decimals);
    Ok((value, sigma))
}

/// Hz → GHz with seven decimals.
pub fn ghz(f_hz: f64) -> String {
    format!("{:.7}", f_hz * 1e-9)
}
