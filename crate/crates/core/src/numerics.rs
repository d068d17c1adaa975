//! Digamma, trigamma, and a central-difference gradient checker.
//!
//! Both special functions shift the argument upward with the recurrence until
//! it reaches [`ASYMPTOTIC_THRESHOLD`] and then evaluate the asymptotic
//! (Bernoulli) series.

use crate::error::{FamlError, Result};

const ASYMPTOTIC_THRESHOLD: f64 = 10.0;

/// `B_{2k} / (2k)` for k = 1..7.
const DIGAMMA_SERIES: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
];

/// `B_{2k}` for k = 1..7.
const TRIGAMMA_SERIES: [f64; 7] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
];

fn check_domain(name: &'static str, x: f64) -> Result<()> {
    if !x.is_finite() || x <= 0.0 {
        return Err(FamlError::Domain { name, x });
    }
    Ok(())
}

/// ψ(x) = d/dx ln Γ(x) for x > 0.
pub fn digamma(x: f64) -> Result<f64> {
    check_domain("digamma", x)?;
    Ok(digamma_unchecked(x))
}

/// ψ′(x) for x > 0.
pub fn trigamma(x: f64) -> Result<f64> {
    check_domain("trigamma", x)?;
    Ok(trigamma_unchecked(x))
}

/// Digamma without the domain check, for hot loops whose arguments are
/// positive by construction (Dirichlet concentrations).
pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < ASYMPTOTIC_THRESHOLD {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    let mut series = 0.0;
    let mut pow = inv2;
    for c in DIGAMMA_SERIES {
        series += c * pow;
        pow *= inv2;
    }
    shift + x.ln() - 0.5 / x - series
}

pub(crate) fn trigamma_unchecked(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < ASYMPTOTIC_THRESHOLD {
        shift += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut series = 0.0;
    let mut pow = inv2 * inv;
    for c in TRIGAMMA_SERIES {
        series += c * pow;
        pow *= inv2;
    }
    shift + inv + 0.5 * inv2 + series
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_coordinate: usize,
    pub passed: bool,
}

/// Compares `grad` against central differences of `f` at `point`.
///
/// The per-coordinate relative error uses the denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_diff_check<F>(
    mut f: F,
    grad: &[f64],
    point: &[f64],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    if grad.len() != point.len() {
        return Err(FamlError::dim("gradient", point.len(), grad.len()));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(FamlError::Argument(format!("step must be positive, got {step}")));
    }
    let mut x = point.to_vec();
    let mut worst = (0, 0.0f64);
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let fp = f(&x);
        x[i] = orig - step;
        let fm = f(&x);
        x[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(FamlError::Numeric(format!(
                "objective is non-finite near coordinate {i}"
            )));
        }
        let numeric = (fp - fm) / (2.0 * step);
        let analytic = grad[i];
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        let rel = (analytic - numeric).abs() / denom;
        if rel > worst.1 || rel.is_nan() {
            worst = (i, rel);
        }
    }
    Ok(GradCheckReport {
        max_relative_error: worst.1,
        worst_coordinate: worst.0,
        passed: worst.1 <= tolerance,
    })
}
