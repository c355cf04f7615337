//! Closed-form quantities of the binomial Galton-Watson process attached to
//! growth on the r-regular tree, the percolation fixed point, ignition-rate
//! schedules and an exact small-instance CTMC oracle.

pub mod ctmc;
pub mod regime;
pub mod schedule;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ctmc::{ctmc_oracle_occupancy, CtmcOracle, OccupancyQuery, OracleError};
pub use regime::{classify_regime, Regime, RegimeError};
pub use schedule::{tau_n, LambdaSchedule, ScaleFn, ScheduleError, ScheduleForm};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("m^-1 is defined on [0, r), got y={y} for r={r}")]
    OutOfRange { r: u32, y: f64 },
    #[error("moment bounds need t > t_c = {t_c}, got t={t}")]
    NotSupercritical { t: f64, t_c: f64 },
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
}

/// Binomial(r, 1 - e^{-t}) offspring law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffspringLaw {
    pub r: u32,
    pub t: f64,
}

impl OffspringLaw {
    pub fn new(r: u32, t: f64) -> Result<Self, AnalyticsError> {
        if !(t >= 0.0) {
            return Err(AnalyticsError::NegativeTime(t));
        }
        Ok(Self { r, t })
    }

    /// Occupation probability `1 - e^{-t}`.
    pub fn p(&self) -> f64 {
        occupation_probability(self.t)
    }

    pub fn mean(&self) -> f64 {
        mean_offspring(self.r, self.t)
    }

    pub fn variance(&self) -> f64 {
        variance_offspring(self.r, self.t)
    }
}

#[inline]
pub fn occupation_probability(t: f64) -> f64 {
    -(-t).exp_m1()
}

/// `m(t) = r (1 - e^{-t})`.
#[inline]
pub fn mean_offspring(r: u32, t: f64) -> f64 {
    r as f64 * occupation_probability(t)
}

/// `σ²(t) = r (1 - e^{-t}) e^{-t}`.
#[inline]
pub fn variance_offspring(r: u32, t: f64) -> f64 {
    r as f64 * occupation_probability(t) * (-t).exp()
}

/// `t_c = log(r / (r - 1))`.
pub fn critical_time(r: u32) -> f64 {
    let r = r as f64;
    (r / (r - 1.0)).ln()
}

/// `p_c = 1 / r`.
pub fn critical_probability(r: u32) -> f64 {
    1.0 / r as f64
}

/// Inverse of `m`: `log(r / (r - y))` for `0 <= y < r`.
pub fn m_inverse(r: u32, y: f64) -> Result<f64, AnalyticsError> {
    let rf = r as f64;
    if !(y >= 0.0 && y < rf) {
        return Err(AnalyticsError::OutOfRange { r, y });
    }
    Ok(-(-y / rf).ln_1p())
}

/// `Σ_{i=0}^{n} m^i`, exact at `m = 1`.
pub fn geometric_sum(m: f64, n: u32) -> f64 {
    if m == 1.0 {
        return n as f64 + 1.0;
    }
    if m == 0.0 {
        return 1.0;
    }
    ((n as f64 + 1.0) * m.ln()).exp_m1() / (m - 1.0)
}

/// `E|S^n_{t,∅}| = (1 - e^{-t}) Σ_{i=0}^{n} m(t)^i`.
pub fn expected_truncated_cluster_size(r: u32, t: f64, n: u32) -> f64 {
    occupation_probability(t) * geometric_sum(mean_offspring(r, t), n)
}

/// Bounds on the first two moments of `|S^n_{t,∅}| / m(t)^n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentBounds {
    /// `1 - e^{-t}`, lower bound of the first moment.
    pub lower1: f64,
    /// `m / (m - 1)`, upper bound of the first moment.
    pub upper1: f64,
    /// `(σ² / (m (m - 1)) + 1) (m / (m - 1))²`, upper bound of the second moment.
    pub upper2: f64,
}

pub fn moment_bounds(r: u32, t: f64, _n: u32) -> Result<MomentBounds, AnalyticsError> {
    let t_c = critical_time(r);
    let m = mean_offspring(r, t);
    if !(t > t_c) || m <= 1.0 {
        return Err(AnalyticsError::NotSupercritical { t, t_c });
    }
    let s2 = variance_offspring(r, t);
    let ratio = m / (m - 1.0);
    Ok(MomentBounds {
        lower1: occupation_probability(t),
        upper1: ratio,
        upper2: (s2 / (m * (m - 1.0)) + 1.0) * ratio * ratio,
    })
}

/// Bracket and iteration count of the fixed-point bisection.
pub const THETA_BRACKET_LOW: f64 = 1e-15;
pub const THETA_ITERATIONS: usize = 200;

/// Percolation probability `θ(p)` of the root: 0 for `p <= 1/r`, otherwise the
/// root in (0, 1] of `θ = p (1 - (1 - θ)^r)`.
pub fn theta_fixed_point(r: u32, p: f64) -> f64 {
    if !(p > critical_probability(r)) {
        return 0.0;
    }
    let p = p.min(1.0);
    let h = |theta: f64| p * (1.0 - (1.0 - theta).powi(r as i32)) - theta;
    let (mut lo, mut hi) = (THETA_BRACKET_LOW, 1.0);
    if h(lo) <= 0.0 {
        return lo;
    }
    if h(hi) >= 0.0 {
        return hi;
    }
    for _ in 0..THETA_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}
