//! Gaussian building blocks: Hermite polynomials, absolute moments,
//! quadrature, conditional-expectation smoothing, the universal constants
//! and the closed-form limit functions.

pub mod gamma;
pub mod gfun;
pub mod hermite;
pub mod moments;
pub mod poly;
pub mod quadrature;
pub mod smoothing;

pub use gamma::{gamma_constants, gamma_constants_with, GammaConstants};
pub use gfun::{g_functions, GMoments};
pub use hermite::{hermite, hermite_all, hermite_poly};
pub use moments::{abs_moment, rho, rho_derivs, sgn, PowerSpec};
pub use poly::Poly;
pub use quadrature::{expect_piecewise, GaussQuadrature};
pub use smoothing::{hermite_coeffs, hermite_coeffs_fn, smoothed_fprime, CenteredFunction};
