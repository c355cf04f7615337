//! Ignition-rate schedules `λ(n)` and the effective time `τ_n`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{critical_time, m_inverse, mean_offspring};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("schedule time τ={tau} must exceed t_c={t_c}")]
    NotSupercritical { tau: f64, t_c: f64 },
    #[error("λ({n}) must be positive and finite, got {value}")]
    NonPositive { n: u32, value: f64 },
    #[error("no table entry for n={0}")]
    MissingEntry(u32),
    #[error("depth must be at least 1 for τ_n")]
    ZeroDepth,
    #[error("(f(n)/λ(n))^(1/n) = {value} is not below r={r} at n={n}: schedule incompatible with depth")]
    Incompatible { n: u32, r: u32, value: f64 },
    #[error("scale function parameter out of range: {0}")]
    BadParameter(String),
}

/// Named positive functions of the depth `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScaleFn {
    /// `c`
    Constant { value: f64 },
    /// `c · n^γ`
    Power { coefficient: f64, exponent: f64 },
    /// `exp(n^α)`
    ExpPower { alpha: f64 },
}

impl ScaleFn {
    pub const ONE: ScaleFn = ScaleFn::Constant { value: 1.0 };

    pub fn sqrt() -> Self {
        ScaleFn::Power { coefficient: 1.0, exponent: 0.5 }
    }

    pub fn power(exponent: f64) -> Self {
        ScaleFn::Power { coefficient: 1.0, exponent }
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        match *self {
            ScaleFn::Constant { value } if !(value > 0.0 && value.is_finite()) => {
                Err(ScheduleError::BadParameter(format!("constant {value} must be positive")))
            }
            ScaleFn::Power { coefficient, exponent }
                if !(coefficient > 0.0 && coefficient.is_finite() && exponent.is_finite()) =>
            {
                Err(ScheduleError::BadParameter(format!(
                    "power coefficient {coefficient} must be positive, exponent {exponent} finite"
                )))
            }
            ScaleFn::ExpPower { alpha } if !alpha.is_finite() => {
                Err(ScheduleError::BadParameter(format!("alpha {alpha} must be finite")))
            }
            _ => Ok(()),
        }
    }

    /// `ln f(n)`, computed without forming `f(n)`.
    pub fn ln_value(&self, n: u32) -> f64 {
        let nf = n as f64;
        match *self {
            ScaleFn::Constant { value } => value.ln(),
            ScaleFn::Power { coefficient, exponent } => coefficient.ln() + exponent * nf.ln(),
            ScaleFn::ExpPower { alpha } => nf.powf(alpha),
        }
    }

    pub fn value(&self, n: u32) -> f64 {
        self.ln_value(n).exp()
    }

    /// Short label used in summaries, e.g. `n^0.5`.
    pub fn label(&self) -> String {
        match *self {
            ScaleFn::Constant { value } => format!("{value}"),
            ScaleFn::Power { coefficient, exponent } if coefficient == 1.0 => format!("n^{exponent}"),
            ScaleFn::Power { coefficient, exponent } => format!("{coefficient}*n^{exponent}"),
            ScaleFn::ExpPower { alpha } => format!("exp(n^{alpha})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ScheduleForm {
    Constant { lambda: f64 },
    /// `λ(n) = g(n) / m(τ)^n`.
    GOverMTau { tau: f64, g: ScaleFn },
    CustomTable { values: BTreeMap<u32, f64> },
}

/// `λ(n)` on the r-regular tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSchedule {
    pub r: u32,
    #[serde(flatten)]
    pub form: ScheduleForm,
}

impl LambdaSchedule {
    pub fn constant(r: u32, lambda: f64) -> Result<Self, ScheduleError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(ScheduleError::NonPositive { n: 0, value: lambda });
        }
        Ok(Self { r, form: ScheduleForm::Constant { lambda } })
    }

    pub fn g_over_m(r: u32, tau: f64, g: ScaleFn) -> Result<Self, ScheduleError> {
        let t_c = critical_time(r);
        if !(tau > t_c && tau.is_finite()) {
            return Err(ScheduleError::NotSupercritical { tau, t_c });
        }
        g.validate()?;
        Ok(Self { r, form: ScheduleForm::GOverMTau { tau, g } })
    }

    pub fn table(r: u32, values: BTreeMap<u32, f64>) -> Result<Self, ScheduleError> {
        for (&n, &value) in &values {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ScheduleError::NonPositive { n, value });
            }
        }
        Ok(Self { r, form: ScheduleForm::CustomTable { values } })
    }

    /// `ln λ(n)`; stable for schedules whose `λ(n)` underflows.
    pub fn ln_lambda(&self, n: u32) -> Result<f64, ScheduleError> {
        match &self.form {
            ScheduleForm::Constant { lambda } => Ok(lambda.ln()),
            ScheduleForm::GOverMTau { tau, g } => {
                Ok(g.ln_value(n) - n as f64 * mean_offspring(self.r, *tau).ln())
            }
            ScheduleForm::CustomTable { values } => values
                .get(&n)
                .map(|v| v.ln())
                .ok_or(ScheduleError::MissingEntry(n)),
        }
    }

    pub fn lambda(&self, n: u32) -> Result<f64, ScheduleError> {
        let value = self.ln_lambda(n)?.exp();
        if !(value > 0.0 && value.is_finite()) {
            return Err(ScheduleError::NonPositive { n, value });
        }
        Ok(value)
    }

    /// The schedule time `τ` for the `g / m(τ)^n` form.
    pub fn tau(&self) -> Option<f64> {
        match self.form {
            ScheduleForm::GOverMTau { tau, .. } => Some(tau),
            _ => None,
        }
    }

    /// `g(n) = λ(n) m(τ)^n` for the `g / m(τ)^n` form.
    pub fn g(&self) -> Option<ScaleFn> {
        match self.form {
            ScheduleForm::GOverMTau { g, .. } => Some(g),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match &self.form {
            ScheduleForm::Constant { lambda } => format!("constant({lambda})"),
            ScheduleForm::GOverMTau { tau, g } => format!("g/m(tau)^n, tau={tau}, g={}", g.label()),
            ScheduleForm::CustomTable { values } => format!("table({} entries)", values.len()),
        }
    }
}

/// `τ_n = m⁻¹((f(n)/λ(n))^{1/n})`, the time at which `λ(n) m(τ_n)^n = f(n)`.
pub fn tau_n(schedule: &LambdaSchedule, f: &ScaleFn, n: u32) -> Result<f64, ScheduleError> {
    if n == 0 {
        return Err(ScheduleError::ZeroDepth);
    }
    f.validate()?;
    let r = schedule.r;
    let ln_ratio = f.ln_value(n) - schedule.ln_lambda(n)?;
    let y = (ln_ratio / n as f64).exp();
    m_inverse(r, y).map_err(|_| ScheduleError::Incompatible { n, r, value: y })
}
