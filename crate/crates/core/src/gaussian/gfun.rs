//! Closed forms of the limit functions `g_1 .. g_5` for `f = f_p`.
//!
//! Arguments are `x = (b2, b1, b21, b12, b11, b111)` evaluated at the
//! current state. The defining expectations run over
//! `(U, V) ~ N(0, [[1, 1/2], [1/2, 1/3]])`, the law of `(W_1, int_0^1 W_s ds)`.

use super::moments::{abs_moment, sgn, PowerSpec};
use crate::error::{Error, Result};

/// Moments used by the closed forms, computed once per exponent.
#[derive(Debug, Clone, Copy)]
pub struct GMoments {
    pub p: f64,
    pub m_pm2: f64,
    pub m_p: f64,
    pub m_pp2: f64,
    pub m_2pm2: f64,
    pub m_2p: f64,
    pub m_2pp2: f64,
}

impl GMoments {
    pub fn new(p: PowerSpec) -> Self {
        let p = p.p;
        Self {
            p,
            m_pm2: abs_moment(p - 2.0),
            m_p: abs_moment(p),
            m_pp2: abs_moment(p + 2.0),
            m_2pm2: abs_moment(2.0 * p - 2.0),
            m_2p: abs_moment(2.0 * p),
            m_2pp2: abs_moment(2.0 * p + 2.0),
        }
    }

    /// `[g1, g2, g3, g4, g5]`; the caller guarantees `x[1] != 0` when p < 2.
    #[inline]
    pub fn eval(&self, x: &[f64; 6]) -> [f64; 5] {
        let [x1, x2, x3, x4, x5, x6] = *x;
        let p = self.p;
        let a = x2.abs();
        let s = sgn(x2);
        let ap1 = a.powf(p - 1.0);
        let ap2 = a.powf(p - 2.0);
        let (mm2, m, mp2) = (self.m_pm2, self.m_p, self.m_pp2);
        let g1 = p * s * ap1 * (x1 * m + 0.5 * x5 * (mp2 - 2.0 * m));
        let g2 = p * s * ap1 * (0.5 * (x3 + x4) * m + x6 / 6.0 * (mp2 - 3.0 * m));
        let g3 = 0.5
            * p
            * (p - 1.0)
            * ap2
            * (x1 * x1 * mm2 + x1 * x5 * (m - mm2) + 0.25 * x5 * x5 * (mp2 - 2.0 * m + mm2));
        let g4 = 0.25 * p * m * (-(p - 1.0) * ap2 * x5 * x5 - 2.0 * x4 * s * ap1);
        let g5 = p
            * p
            * a.powf(2.0 * p - 2.0)
            * (x1 * x1 * self.m_2pm2
                + x1 * x5 * (self.m_2p - self.m_2pm2)
                + 0.25 * x5 * x5 * (self.m_2pp2 - 2.0 * self.m_2p + self.m_2pm2)
                + x5 * x5 / 3.0 * m * m
                - x5 * m * (x1 * m + 0.5 * x5 * (mp2 - m)));
        [g1, g2, g3, g4, g5]
    }
}

/// Evaluates `g_1 .. g_5` at `x = (x1, ..., x6)`.
pub fn g_functions(p: PowerSpec, x: [f64; 6]) -> Result<[f64; 5]> {
    if p.p < 2.0 && x[1] == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "g-functions need x2 != 0 for p = {} < 2",
            p.p
        )));
    }
    Ok(GMoments::new(p).eval(&x))
}
