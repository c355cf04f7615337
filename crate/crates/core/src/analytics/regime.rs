//! Empirical classification of ignition-rate schedules into the four
//! asymptotic regimes.
//!
//! `ln λ(n)` is fitted by least squares on the basis `{1, n, ln n}`; the
//! slope `b` gives the exponential base `m̂ = e^{-b}`. The same fit applied to
//! `ln(λ(n) |B_n|)` decides whether the expected number of ignitions in `B_n`
//! vanishes. Fits falling between the margins below are reported as
//! ambiguous.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::schedule::{LambdaSchedule, ScheduleError};

/// Spread of `ln λ` below which the schedule counts as constant.
pub const CONSTANT_TOLERANCE: f64 = 1e-9;
/// Minimum |slope| of a log fit that counts as exponential.
pub const RATE_MARGIN: f64 = 0.02;
/// Minimum |coefficient| of `ln n` that counts as polynomial decay.
pub const POLY_MARGIN: f64 = 0.25;
pub const MIN_POINTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    /// `λ(n) |B_n| → 0`.
    NoFire,
    /// `λ(n) ≈ 1/m^n` with `1 < m < r`.
    ExponentialIntermediate { m: f64 },
    /// `1/m^n ≪ λ(n) ≪ 1` for every `m > 1`.
    Subexponential,
    Constant,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegimeError {
    #[error("need at least {MIN_POINTS} depths with n >= 1, got {0}")]
    TooFewPoints(usize),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("ambiguous fit (m_hat={m_hat:.6}): {reason}")]
    Ambiguous { m_hat: f64, reason: String },
}

/// Least-squares coefficients `(a, b, c)` of `y ≈ a + b n + c ln n`.
fn fit_log_linear(ns: &[u32], ys: &[f64]) -> (f64, f64, f64) {
    let design = DMatrix::from_fn(ns.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => ns[i] as f64,
        _ => (ns[i] as f64).ln(),
    });
    let y = DVector::from_column_slice(ys);
    let svd = design.svd(true, true);
    let beta = svd.solve(&y, 1e-12).expect("svd with both factors");
    (beta[0], beta[1], beta[2])
}

fn ln_ball_size(r: u32, n: u32) -> f64 {
    let rf = r as f64;
    // ln((r^(n+1) - 1) / (r - 1))
    ((n as f64 + 1.0) * rf.ln()).exp_m1().ln() - (rf - 1.0).ln()
}

pub fn classify_regime(
    schedule: &LambdaSchedule,
    n_range: impl IntoIterator<Item = u32>,
) -> Result<Regime, RegimeError> {
    let ns: Vec<u32> = n_range.into_iter().filter(|&n| n >= 1).collect();
    if ns.len() < MIN_POINTS {
        return Err(RegimeError::TooFewPoints(ns.len()));
    }
    let ln_lambda = ns
        .iter()
        .map(|&n| schedule.ln_lambda(n))
        .collect::<Result<Vec<_>, _>>()?;

    let lo = ln_lambda.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ln_lambda.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= CONSTANT_TOLERANCE * hi.abs().max(1.0) {
        return Ok(Regime::Constant);
    }

    let (_, b, c) = fit_log_linear(&ns, &ln_lambda);
    let m_hat = (-b).exp();
    let ln_count: Vec<f64> = ns
        .iter()
        .zip(&ln_lambda)
        .map(|(&n, &l)| l + ln_ball_size(schedule.r, n))
        .collect();
    let (_, b_count, c_count) = fit_log_linear(&ns, &ln_count);

    let ambiguous = |reason: &str| RegimeError::Ambiguous { m_hat, reason: reason.to_string() };

    if b_count < -RATE_MARGIN {
        return Ok(Regime::NoFire);
    }
    if b_count.abs() <= RATE_MARGIN {
        return if c_count < -POLY_MARGIN {
            Ok(Regime::NoFire)
        } else {
            Err(ambiguous("λ(n)|B_n| neither vanishes nor grows exponentially"))
        };
    }
    if -b > RATE_MARGIN {
        return Ok(Regime::ExponentialIntermediate { m: m_hat });
    }
    if b.abs() <= RATE_MARGIN {
        let decreasing = ln_lambda[ln_lambda.len() - 1] < ln_lambda[0] - RATE_MARGIN;
        return if decreasing && c <= 0.0 {
            Ok(Regime::Subexponential)
        } else {
            Err(ambiguous("λ(n) is not exponential and does not decay"))
        };
    }
    Err(ambiguous("λ(n) grows exponentially in n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::schedule::ScaleFn;
    use std::collections::BTreeMap;

    fn table(r: u32, ns: std::ops::RangeInclusive<u32>, f: impl Fn(f64) -> f64) -> LambdaSchedule {
        let values: BTreeMap<u32, f64> = ns.map(|n| (n, f(n as f64))).collect();
        LambdaSchedule::table(r, values).unwrap()
    }

    #[test]
    fn no_fire_example() {
        let s = table(2, 5..=40, |n| 4f64.powf(-n));
        assert_eq!(classify_regime(&s, 5..=40).unwrap(), Regime::NoFire);
    }

    #[test]
    fn intermediate_example_recovers_m() {
        let s = table(2, 5..=40, |n| n * n / 1.2642f64.powf(n));
        match classify_regime(&s, 5..=40).unwrap() {
            Regime::ExponentialIntermediate { m } => assert!((m - 1.2642).abs() < 1e-6, "{m}"),
            other => panic!("{other:?}"),
        }
        let g = LambdaSchedule::g_over_m(2, 1.0, ScaleFn::sqrt()).unwrap();
        match classify_regime(&g, 5..=40).unwrap() {
            Regime::ExponentialIntermediate { m } => {
                assert!((m - crate::analytics::mean_offspring(2, 1.0)).abs() < 1e-6)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_example() {
        let s = LambdaSchedule::constant(2, 0.3).unwrap();
        assert_eq!(classify_regime(&s, 5..=40).unwrap(), Regime::Constant);
    }

    #[test]
    fn subexponential_example() {
        let s = table(2, 5..=40, |n| 1.0 / n);
        assert_eq!(classify_regime(&s, 5..=40).unwrap(), Regime::Subexponential);
    }

    #[test]
    fn polynomial_below_ball_size_is_no_fire() {
        let s = table(2, 5..=40, |n| 2f64.powf(-n) / (n * n));
        assert_eq!(classify_regime(&s, 5..=40).unwrap(), Regime::NoFire);
    }

    #[test]
    fn ambiguous_cases_are_flagged() {
        let growing = table(2, 5..=40, |n| 1.5f64.powf(n) * 1e-9);
        assert!(matches!(
            classify_regime(&growing, 5..=40),
            Err(RegimeError::Ambiguous { .. })
        ));
        let boundary = table(2, 5..=40, |n| 2f64.powf(-n));
        assert!(matches!(
            classify_regime(&boundary, 5..=40),
            Err(RegimeError::Ambiguous { .. })
        ));
        let s = LambdaSchedule::constant(2, 0.3).unwrap();
        assert_eq!(classify_regime(&s, 1..=3), Err(RegimeError::TooFewPoints(3)));
    }
}
