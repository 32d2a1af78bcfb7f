//! Centered test functions, their Hermite coefficients and the Gaussian
//! smoothing `y -> E[f'(y + sqrt(tau) Z)]`.

use serde::{Deserialize, Serialize};

use super::hermite::{hermite, hermite_poly};
use super::moments::{abs_moment, PowerSpec};
use super::poly::Poly;
use super::quadrature::{expect_piecewise, GaussQuadrature};
use crate::error::{Error, Result};

/// An even function with `E[f(Z)] = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CenteredFunction {
    Zero,
    /// `He_k` for even `k >= 2`.
    Hermite { k: usize },
    /// `|x|^p - m_p`.
    Power { p: f64 },
}

impl CenteredFunction {
    pub fn power(p: PowerSpec) -> Self {
        CenteredFunction::Power { p: p.p }
    }

    pub fn descriptor(&self) -> String {
        match self {
            CenteredFunction::Zero => "zero".into(),
            CenteredFunction::Hermite { k } => format!("hermite_{k}"),
            CenteredFunction::Power { p } => format!("power_{p}"),
        }
    }

    /// Constant added back to recover the uncentered function (`m_p` for powers).
    pub fn shift(&self) -> f64 {
        match self {
            CenteredFunction::Power { p } => abs_moment(*p),
            _ => 0.0,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            CenteredFunction::Zero => 0.0,
            CenteredFunction::Hermite { k } => hermite(k, x),
            CenteredFunction::Power { p } => x.abs().powf(p) - abs_moment(p),
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match *self {
            CenteredFunction::Zero => 0.0,
            CenteredFunction::Hermite { k } => {
                if k == 0 {
                    0.0
                } else {
                    k as f64 * hermite(k - 1, x)
                }
            }
            CenteredFunction::Power { p } => PowerSpec { p }.fprime(x),
        }
    }

    /// Monomial form of `f`, when `f` is a polynomial.
    pub fn polynomial(&self) -> Option<Poly> {
        match *self {
            CenteredFunction::Zero => Some(Poly(vec![0.0])),
            CenteredFunction::Hermite { k } => Some(hermite_poly(k)),
            CenteredFunction::Power { p } if PowerSpec { p }.is_even_integer() => {
                let mut c = Poly::monomial(p as usize);
                c.0[0] -= abs_moment(p);
                Some(c)
            }
            CenteredFunction::Power { .. } => None,
        }
    }

    /// `E[h(f, Z)]`-type expectations of functions built from `f`.
    pub fn expect<F: Fn(f64) -> f64>(&self, h: F) -> f64 {
        match self.polynomial() {
            Some(_) => GaussQuadrature::expect_adaptive(h).0,
            None => expect_piecewise(h, &[0.0]),
        }
    }

    /// `E[f'(y + sqrt(tau) Z)]`.
    pub fn smoothed_deriv(&self, y: f64, tau: f64) -> f64 {
        if tau <= 0.0 {
            return self.deriv(y);
        }
        match self.polynomial() {
            Some(poly) => poly.derivative().heat(tau).eval(y),
            None => {
                let s = tau.sqrt();
                GaussQuadrature::expect_adaptive(|z| self.deriv(y + s * z)).0
            }
        }
    }
}

/// `E[f_p'(y + sqrt(tau) Z)]`; equals `f_p'(y)` at `tau = 0`.
pub fn smoothed_fprime(p: PowerSpec, y: f64, tau: f64) -> f64 {
    CenteredFunction::power(p).smoothed_deriv(y, tau)
}

/// Hermite coefficients `lambda_k = E[f(Z) He_k(Z)] / k!` for `k = 0..=kmax`;
/// entries 0, 1 and every odd index are zero for an even centered `f`.
pub fn hermite_coeffs(f: &CenteredFunction, kmax: usize) -> Result<Vec<f64>> {
    hermite_coeffs_fn(|x| f.value(x), kmax, f.polynomial().is_none())
}

/// Same as [`hermite_coeffs`] for an arbitrary closure; `kinked` selects a
/// quadrature that tolerates a non-smooth point at the origin.
pub fn hermite_coeffs_fn<F: Fn(f64) -> f64>(f: F, kmax: usize, kinked: bool) -> Result<Vec<f64>> {
    let expect = |h: &dyn Fn(f64) -> f64| {
        if kinked {
            expect_piecewise(h, &[0.0])
        } else {
            GaussQuadrature::expect_adaptive(h).0
        }
    };
    let scale = expect(&|z| f(z).abs()).max(1.0);
    let mean = expect(&|z| f(z));
    if mean.abs() > 1e-8 * scale {
        return Err(Error::Contract(format!("E[f(Z)] = {mean:e} is not zero")));
    }
    for &z in &[0.3, 1.1, 2.7] {
        if (f(z) - f(-z)).abs() > 1e-12 * f(z).abs().max(1.0) {
            return Err(Error::Contract(format!("f is not even at {z}")));
        }
    }
    let mut out = vec![0.0; kmax + 1];
    let mut fact = 1.0;
    for (k, slot) in out.iter_mut().enumerate() {
        if k > 0 {
            fact *= k as f64;
        }
        if k < 2 || k % 2 == 1 {
            continue;
        }
        *slot = expect(&|z| f(z) * hermite(k, z)) / fact;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficients_of_second_hermite() {
        let l = hermite_coeffs(&CenteredFunction::Hermite { k: 2 }, 10).unwrap();
        assert!((l[2] - 1.0).abs() < 1e-10);
        for (k, v) in l.iter().enumerate() {
            if k != 2 {
                assert!(v.abs() < 1e-10, "lambda_{k} = {v}");
            }
        }
    }

    #[test]
    fn coefficients_of_powers() {
        let p2 = PowerSpec::new(2.0).unwrap();
        let l = hermite_coeffs(&CenteredFunction::power(p2), 6).unwrap();
        assert!((l[2] - 1.0).abs() < 1e-10);
        let p4 = PowerSpec::new(4.0).unwrap();
        let l = hermite_coeffs(&CenteredFunction::power(p4), 6).unwrap();
        assert!((l[2] - 6.0).abs() < 1e-9);
        assert!((l[4] - 1.0).abs() < 1e-9);
        // lambda_2 = (m_{p+2} - m_p) / 2 also for non-integer p
        let p = PowerSpec::new(13.5).unwrap();
        let l = hermite_coeffs(&CenteredFunction::power(p), 2).unwrap();
        let target = (abs_moment(15.5) - abs_moment(13.5)) / 2.0;
        assert!((l[2] - target).abs() < 1e-8 * target);
    }

    #[test]
    fn noncentered_function_is_rejected() {
        let r = hermite_coeffs_fn(|x| x * x, 4, false);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn smoothing_examples() {
        let p2 = PowerSpec::new(2.0).unwrap();
        for &tau in &[0.0, 0.3, 1.0] {
            assert!((smoothed_fprime(p2, 0.7, tau) - 1.4).abs() < 1e-13);
        }
        let p4 = PowerSpec::new(4.0).unwrap();
        assert!(smoothed_fprime(p4, 0.0, 0.8).abs() < 1e-13);
        assert!((smoothed_fprime(p4, 1.0, 0.5) - 10.0).abs() < 1e-12);
        assert_eq!(smoothed_fprime(p4, 1.3, 0.0), 4.0 * 1.3f64.powi(3));
    }

    #[test]
    fn smoothing_of_kinked_power_matches_piecewise_quadrature() {
        let p = PowerSpec::new(13.5).unwrap();
        let (y, tau): (f64, f64) = (0.4, 0.6);
        let oracle = expect_piecewise(|z| p.fprime(y + tau.sqrt() * z), &[-y / tau.sqrt()]);
        let v = smoothed_fprime(p, y, tau);
        assert!((v - oracle).abs() < 1e-8 * oracle.abs());
    }
}
