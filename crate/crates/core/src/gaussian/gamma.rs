//! Monte Carlo estimates of the universal constants
//!
//! ```text
//! I       = int_0^1 E[f'(W_1) | F_s]^2 ds
//! Gamma_1 = Var(I)
//! Gamma_2 = Cov(f(W_1), I)
//! Gammā   = Cov(g(W_1)^2, I) - 2 Cov(g(W_1) g(W_2 - W_1), I)
//! ```
//!
//! where `g` is the uncentered version of `f`. The conditional expectation
//! is evaluated by Gaussian smoothing, so each replication only needs one
//! Brownian path on `[0, 1]` plus the increment `W_2 - W_1`.

use serde::{Deserialize, Serialize};

use super::poly::Poly;
use super::smoothing::CenteredFunction;
use crate::error::{Error, Result};
use crate::mc;
use crate::rng::Stream;

pub const DEFAULT_STEPS: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaConstants {
    pub function: String,
    pub reps: usize,
    pub steps: usize,
    pub gamma1: f64,
    pub gamma1_se: f64,
    pub gamma2: f64,
    pub gamma2_se: f64,
    pub gamma_bar: f64,
    pub gamma_bar_se: f64,
    /// `3 E[f(W_1) I]`, which equals `E[f(W_1)^3]`.
    pub kappa3: f64,
    pub kappa3_se: f64,
}

impl GammaConstants {
    /// Exact values for `f = He_2 = f_2 - m_2`.
    pub fn quadratic() -> Self {
        Self {
            function: "exact_quadratic".into(),
            reps: 0,
            steps: 0,
            gamma1: 16.0 / 3.0,
            gamma1_se: 0.0,
            gamma2: 8.0 / 3.0,
            gamma2_se: 0.0,
            gamma_bar: 32.0 / 3.0,
            gamma_bar_se: 0.0,
            kappa3: 8.0,
            kappa3_se: 0.0,
        }
    }
}

/// Per-replication draws `(I, f(W_1), g(W_1)^2 - 2 g(W_1) g(W_2 - W_1))`.
#[derive(Debug, Clone, Copy)]
pub struct GammaDraw {
    pub integral: f64,
    pub f1: f64,
    pub bar: f64,
}

pub fn gamma_constants(f: &CenteredFunction, reps: usize, seed: u64) -> Result<GammaConstants> {
    gamma_constants_with(f, reps, seed, DEFAULT_STEPS)
}

pub fn gamma_constants_with(
    f: &CenteredFunction,
    reps: usize,
    seed: u64,
    steps: usize,
) -> Result<GammaConstants> {
    if reps < 2 || steps < 1 {
        return Err(Error::InvalidArgument(format!(
            "gamma constants need reps >= 2 and steps >= 1 (got {reps}, {steps})"
        )));
    }
    let draws = gamma_draws(f, reps, seed, steps);
    let i: Vec<f64> = draws.iter().map(|d| d.integral).collect();
    let f1: Vec<f64> = draws.iter().map(|d| d.f1).collect();
    let bar: Vec<f64> = draws.iter().map(|d| d.bar).collect();
    let (g1, g1_se) = mc::covariance_se(&i, &i);
    let (g2, g2_se) = mc::covariance_se(&f1, &i);
    let (gb, gb_se) = mc::covariance_se(&bar, &i);
    let prod: Vec<f64> = f1.iter().zip(&i).map(|(a, b)| 3.0 * a * b).collect();
    let (k3, k3_se) = mc::mean_se(&prod);
    Ok(GammaConstants {
        function: f.descriptor(),
        reps,
        steps,
        gamma1: g1,
        gamma1_se: g1_se,
        gamma2: g2,
        gamma2_se: g2_se,
        gamma_bar: gb,
        gamma_bar_se: gb_se,
        kappa3: k3,
        kappa3_se: k3_se,
    })
}

/// Raw replication draws, in replication order.
pub fn gamma_draws(f: &CenteredFunction, reps: usize, seed: u64, steps: usize) -> Vec<GammaDraw> {
    let dt = 1.0 / steps as f64;
    let sqdt = dt.sqrt();
    let smoothers: Option<Vec<Poly>> = f.polynomial().map(|poly| {
        let d = poly.derivative();
        (0..=steps).map(|j| d.heat(1.0 - j as f64 * dt)).collect()
    });
    let shift = f.shift();
    mc::par_map(reps, |r| {
        let mut rng = Stream::substream(seed, r as u64);
        let mut w = 0.0;
        let cond = |j: usize, w: f64| match &smoothers {
            Some(polys) => polys[j].eval(w),
            None => f.smoothed_deriv(w, 1.0 - j as f64 * dt),
        };
        let mut prev = cond(0, 0.0).powi(2);
        let mut integral = 0.0;
        for j in 1..=steps {
            w += sqdt * rng.normal();
            let cur = cond(j, w).powi(2);
            integral += 0.5 * dt * (prev + cur);
            prev = cur;
        }
        let w_next = rng.normal();
        let f1 = f.value(w);
        let g1 = f1 + shift;
        let g2 = f.value(w_next) + shift;
        GammaDraw { integral, f1, bar: g1 * g1 - 2.0 * g1 * g2 }
    })
}
