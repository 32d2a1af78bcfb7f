//! Gaussian expectations by quadrature.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::{GaussHermite, GaussLegendre};

/// Gauss–Hermite rule for `E[h(Z)]`, `Z ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct GaussQuadrature {
    pub order: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

pub const DEFAULT_ORDER: usize = 64;
pub const MAX_ORDER: usize = 512;
pub const ADAPTIVE_RTOL: f64 = 1e-9;

impl GaussQuadrature {
    pub fn new(order: usize) -> Self {
        let order = order.max(1);
        let rule = GaussHermite::new(NonZeroUsize::new(order).unwrap());
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let nodes = rule.nodes().map(|x| x * std::f64::consts::SQRT_2).collect();
        let weights = rule.weights().map(|w| w / sqrt_pi).collect();
        Self { order, nodes, weights }
    }

    /// Shared rule of order `DEFAULT_ORDER * 2^level`, built once per process.
    pub fn cached(level: usize) -> &'static GaussQuadrature {
        static RULES: [OnceLock<GaussQuadrature>; 4] =
            [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
        let level = level.min(RULES.len() - 1);
        RULES[level].get_or_init(|| GaussQuadrature::new(DEFAULT_ORDER << level))
    }

    #[inline]
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut h: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * h(x)).sum()
    }

    /// `E[h(Z)]` with the order doubled from 64 until two successive
    /// values agree to `ADAPTIVE_RTOL` or `MAX_ORDER` is reached.
    pub fn expect_adaptive<F: Fn(f64) -> f64>(h: F) -> (f64, usize) {
        let mut level = 0;
        let mut prev = Self::cached(0).expect(&h);
        loop {
            level += 1;
            let rule = Self::cached(level);
            let cur = rule.expect(&h);
            if (cur - prev).abs() <= ADAPTIVE_RTOL * cur.abs().max(1e-12) || rule.order >= MAX_ORDER {
                return (cur, rule.order);
            }
            prev = cur;
        }
    }
}

fn legendre() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(20).unwrap()))
}

const HALF_WIDTH: f64 = 40.0;
const PANEL: f64 = 0.5;
const GRADING_LEVELS: i32 = 40;

/// `E[h(Z)]` by composite Gauss–Legendre on `[-40, 40]`, with panels graded
/// geometrically towards each point in `kinks` where `h` is not smooth.
pub fn expect_piecewise<F: Fn(f64) -> f64>(h: F, kinks: &[f64]) -> f64 {
    let mut cuts: Vec<f64> = kinks
        .iter()
        .copied()
        .filter(|k| k.abs() < HALF_WIDTH)
        .collect();
    cuts.push(-HALF_WIDTH);
    cuts.push(HALF_WIDTH);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    let g = |z: f64| h(z) * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut total = 0.0;
    for seg in cuts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let left_kink = a > -HALF_WIDTH;
        let right_kink = b < HALF_WIDTH;
        total += integrate_segment(&g, a, b, left_kink, right_kink);
    }
    total
}

fn integrate_segment<F: Fn(f64) -> f64>(g: &F, a: f64, b: f64, left: bool, right: bool) -> f64 {
    let rule = legendre();
    let n = ((b - a) / PANEL).ceil().max(1.0) as usize;
    let w = (b - a) / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let lo = a + i as f64 * w;
        let hi = if i + 1 == n { b } else { lo + w };
        let graded_lo = left && i == 0;
        let graded_hi = right && i + 1 == n;
        if graded_lo || graded_hi {
            total += graded_panel(g, lo, hi, graded_lo, graded_hi);
        } else {
            total += rule.integrate(lo, hi, g);
        }
    }
    total
}

fn graded_panel<F: Fn(f64) -> f64>(g: &F, lo: f64, hi: f64, at_lo: bool, at_hi: bool) -> f64 {
    let rule = legendre();
    if at_lo && at_hi {
        let mid = 0.5 * (lo + hi);
        return graded_panel(g, lo, mid, true, false) + graded_panel(g, mid, hi, false, true);
    }
    let len = hi - lo;
    let mut total = 0.0;
    for j in 0..GRADING_LEVELS {
        let outer = len * 0.5f64.powi(j);
        let inner = if j + 1 == GRADING_LEVELS { 0.0 } else { len * 0.5f64.powi(j + 1) };
        let (a, b) = if at_lo { (lo + inner, lo + outer) } else { (hi - outer, hi - inner) };
        total += rule.integrate(a, b, g);
    }
    total
}
