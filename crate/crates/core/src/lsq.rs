//! Damped Gauss-Newton (Levenberg-Marquardt) least squares with box bounds.
//!
//! Damping follows Marquardt's diagonal scaling: each step solves
//! `(JᵀJ + λ diag(JᵀJ)) δ = -Jᵀr`. Steps that leave the box are clamped.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub trait LeastSquaresProblem {
    fn residuals(&self, params: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, params: &DVector<f64>) -> DMatrix<f64>;
}

#[derive(Debug, Clone)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Stop when `|δ| <= tol (|p| + tol)`.
    pub relative_tolerance: f64,
    pub damping_init: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LmConfig {
    pub fn unbounded(n: usize) -> Self {
        Self {
            max_iterations: 200,
            relative_tolerance: 1e-10,
            damping_init: 1e-3,
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: DVector<f64>,
    pub residuals: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

const MAX_DAMPING: f64 = 1e16;

fn clamp(p: &mut DVector<f64>, cfg: &LmConfig) {
    for (i, v) in p.iter_mut().enumerate() {
        *v = v.clamp(cfg.lower[i], cfg.upper[i]);
    }
}

fn damped_step(
    jtj: &DMatrix<f64>,
    grad: &DVector<f64>,
    lambda: f64,
) -> Option<DVector<f64>> {
    let mut a = jtj.clone();
    let scale = jtj.diagonal().max().max(1e-300);
    for i in 0..a.nrows() {
        // floor keeps columns with vanishing sensitivity invertible
        a[(i, i)] += lambda * jtj[(i, i)].max(1e-12 * scale);
    }
    let chol = a.cholesky()?;
    let step = chol.solve(&(-grad));
    step.iter().all(|v| v.is_finite()).then_some(step)
}

pub fn minimize(
    problem: &impl LeastSquaresProblem,
    initial: DVector<f64>,
    cfg: &LmConfig,
) -> LmOutcome {
    let mut p = initial;
    clamp(&mut p, cfg);
    let mut r = problem.residuals(&p);
    let mut cost = r.norm_squared();
    let mut lambda = cfg.damping_init;
    let mut converged = false;
    let mut iterations = 0;

    if !cost.is_finite() {
        let jacobian = problem.jacobian(&p);
        return LmOutcome {
            params: p,
            residuals: r,
            jacobian,
            cost,
            iterations,
            converged: false,
        };
    }

    'outer: while iterations < cfg.max_iterations {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        let j = problem.jacobian(&p);
        let jtj = j.tr_mul(&j);
        let grad = j.tr_mul(&r);
        loop {
            let Some(step) = damped_step(&jtj, &grad, lambda) else {
                lambda *= 4.0;
                if lambda > MAX_DAMPING {
                    break 'outer;
                }
                continue;
            };
            let mut trial = &p + &step;
            clamp(&mut trial, cfg);
            let actual = &trial - &p;
            let small = actual.norm() <= cfg.relative_tolerance * (p.norm() + cfg.relative_tolerance);
            let r_trial = problem.residuals(&trial);
            let c_trial = r_trial.norm_squared();
            if c_trial.is_finite() && c_trial <= cost {
                p = trial;
                r = r_trial;
                cost = c_trial;
                lambda = (lambda / 3.0).max(1e-15);
                if small {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            if small {
                // no representable improvement left
                converged = true;
                break 'outer;
            }
            lambda *= 4.0;
            if lambda > MAX_DAMPING {
                break 'outer;
            }
        }
    }

    let jacobian = problem.jacobian(&p);
    LmOutcome {
        params: p,
        residuals: r,
        jacobian,
        cost,
        iterations,
        converged,
    }
}

/// Residual-scaled inverse normal matrix, `s² (JᵀJ)⁻¹` with
/// `s² = SSR / (m - n)`. The residual variance is floored at `ε²` so exact
/// data still yields positive uncertainties.
pub fn covariance(jacobian: &DMatrix<f64>, cost: f64) -> Result<DMatrix<f64>> {
    let (m, n) = jacobian.shape();
    if m <= n {
        return Err(Error::InsufficientSamples {
            needed: n + 1,
            available: m,
        });
    }
    let jtj = jacobian.tr_mul(jacobian);
    let d: Vec<f64> = jtj.diagonal().iter().map(|v| v.sqrt()).collect();
    if d.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::SingularMatrix);
    }
    let scaled = DMatrix::from_fn(n, n, |i, k| jtj[(i, k)] / (d[i] * d[k]));
    let inv = scaled.cholesky().ok_or(Error::SingularMatrix)?.inverse();
    // equilibrated normal matrix should be well inside double precision
    if inv.diagonal().iter().any(|v| !(v.is_finite() && *v > 0.0 && *v < 1e14)) {
        return Err(Error::SingularMatrix);
    }
    let s2 = (cost / (m - n) as f64).max(f64::EPSILON * f64::EPSILON);
    Ok(DMatrix::from_fn(n, n, |i, k| s2 * inv[(i, k)] / (d[i] * d[k])))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y = a exp(-b x) sampled exactly.
    struct Decay {
        x: Vec<f64>,
        y: Vec<f64>,
    }

    impl LeastSquaresProblem for Decay {
        fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
            DVector::from_iterator(
                self.x.len(),
                self.x.iter().zip(&self.y).map(|(x, y)| p[0] * (-p[1] * x).exp() - y),
            )
        }
        fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_fn(self.x.len(), 2, |i, k| {
                let e = (-p[1] * self.x[i]).exp();
                if k == 0 {
                    e
                } else {
                    -p[0] * self.x[i] * e
                }
            })
        }
    }

    #[test]
    fn recovers_exponential() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let y = x.iter().map(|x| 2.5 * (-1.3 * x).exp()).collect();
        let prob = Decay { x, y };
        let out = minimize(&prob, DVector::from_vec(vec![1.0, 0.2]), &LmConfig::unbounded(2));
        assert!(out.converged);
        assert!((out.params[0] - 2.5).abs() < 1e-9);
        assert!((out.params[1] - 1.3).abs() < 1e-9);
    }

    #[test]
    fn respects_bounds() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let y = x.iter().map(|x| 2.5 * (-1.3 * x).exp()).collect();
        let prob = Decay { x, y };
        let mut cfg = LmConfig::unbounded(2);
        cfg.upper[1] = 1.0;
        let out = minimize(&prob, DVector::from_vec(vec![1.0, 0.2]), &cfg);
        assert!(out.params[1] <= 1.0);
    }

    #[test]
    fn covariance_rejects_degenerate_columns() {
        let j = DMatrix::from_fn(10, 2, |i, _| i as f64);
        assert!(matches!(covariance(&j, 1.0), Err(Error::SingularMatrix)));
        let j = DMatrix::from_fn(10, 2, |i, k| if k == 0 { 1.0 } else { i as f64 });
        assert!(covariance(&j, 1.0).is_ok());
    }
}
