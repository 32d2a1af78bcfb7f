//! Absolute Gaussian moments and the power functional `rho_x(f_p) = m_p |x|^p`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Exponent of the power function `f_p(x) = |x|^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSpec {
    pub p: f64,
}

impl PowerSpec {
    pub fn new(p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::InvalidArgument(format!("power p = {p} must be finite and positive")));
        }
        Ok(Self { p })
    }

    pub fn is_even_integer(&self) -> bool {
        self.p.fract() == 0.0 && (self.p as u64) % 2 == 0
    }

    /// Whether the second-order expansion applies: even integers or p > 13.
    pub fn expansion_supported(&self) -> bool {
        self.is_even_integer() || self.p > 13.0
    }

    /// LLN/CLT use outside the expansion regime: true for 1 <= p not covered above.
    pub fn needs_warning(&self) -> bool {
        !self.expansion_supported()
    }

    pub fn require_expansion(&self) -> Result<()> {
        if self.expansion_supported() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "p = {} is outside the expansion regime (even integer or p > 13)",
                self.p
            )))
        }
    }

    pub fn require_lln(&self) -> Result<()> {
        if self.p >= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("p = {} below 1", self.p)))
        }
    }

    #[inline]
    pub fn f(&self, x: f64) -> f64 {
        x.abs().powf(self.p)
    }

    #[inline]
    pub fn fprime(&self, x: f64) -> f64 {
        self.p * sgn(x) * x.abs().powf(self.p - 1.0)
    }

    #[inline]
    pub fn fsecond(&self, x: f64) -> f64 {
        self.p * (self.p - 1.0) * x.abs().powf(self.p - 2.0)
    }

    pub fn m(&self) -> f64 {
        abs_moment(self.p)
    }
}

#[inline]
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `m_p = E|Z|^p = 2^(p/2) Gamma((p+1)/2) / sqrt(pi)`; infinite for p <= -1.
pub fn abs_moment(p: f64) -> f64 {
    if p <= -1.0 {
        return f64::INFINITY;
    }
    if p == 0.0 {
        return 1.0;
    }
    2f64.powf(p / 2.0) * gamma((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
}

pub fn rho(p: PowerSpec, x: f64) -> f64 {
    abs_moment(p.p) * x.abs().powf(p.p)
}

/// `(rho, rho', rho'')` of `x -> m_p |x|^p`.
pub fn rho_derivs(p: PowerSpec, x: f64) -> Result<(f64, f64, f64)> {
    if x == 0.0 && p.p < 2.0 {
        return Err(Error::Singularity(format!("rho'' at x = 0 for p = {}", p.p)));
    }
    let m = abs_moment(p.p);
    let a = x.abs();
    Ok((
        m * a.powf(p.p),
        p.p * sgn(x) * m * a.powf(p.p - 1.0),
        p.p * (p.p - 1.0) * m * a.powf(p.p - 2.0),
    ))
}
