//! Distances between an empirical distribution of studentized statistics
//! and the normal and corrected distribution functions.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::density::{Estimate, StudentizedExpansion};
use crate::error::{Error, Result};
use crate::mc;
use crate::rng::Stream;

pub const BOOTSTRAP_RESAMPLES: usize = 200;
const GRID_HALF_WIDTH: f64 = 10.0;
const GRID_STEP: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionMetrics {
    pub samples: usize,
    pub ks_normal: Estimate,
    pub ks_corrected: Estimate,
    pub iae_normal: Estimate,
    pub iae_corrected: Estimate,
}

/// Sup-distance and integrated absolute error of the empirical CDF of
/// `samples` against `Phi` and the corrected CDF at step `dn`, with
/// bootstrap standard errors from [`BOOTSTRAP_RESAMPLES`] resamples.
pub fn compare_distributions(samples: &[f64], expansion: &StudentizedExpansion, dn: f64) -> Result<DistributionMetrics> {
    compare_distributions_with(samples, expansion, dn, BOOTSTRAP_RESAMPLES, 0x5eed_b007)
}

pub fn compare_distributions_with(
    samples: &[f64],
    expansion: &StudentizedExpansion,
    dn: f64,
    resamples: usize,
    seed: u64,
) -> Result<DistributionMetrics> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if let Some(v) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite sample {v}")));
    }
    if !(dn >= 0.0) {
        return Err(Error::InvalidArgument(format!("step {dn} must be >= 0")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let phi_at: Vec<f64> = sorted.iter().map(|&y| normal.cdf(y)).collect();
    let corr_at: Vec<f64> = sorted.iter().map(|&y| expansion.cdf(dn, y)).collect();
    let steps = (2.0 * GRID_HALF_WIDTH / GRID_STEP).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|i| -GRID_HALF_WIDTH + i as f64 * GRID_STEP).collect();
    let phi_grid: Vec<f64> = grid.iter().map(|&y| normal.cdf(y)).collect();
    let corr_grid: Vec<f64> = grid.iter().map(|&y| expansion.cdf(dn, y)).collect();
    let ctx = Context { sorted: &sorted, phi_at: &phi_at, corr_at: &corr_at, grid: &grid, phi_grid: &phi_grid, corr_grid: &corr_grid };

    let ones = vec![1u32; sorted.len()];
    let point = ctx.metrics(&ones);
    let boot = mc::par_map(resamples, |b| {
        let mut rng = Stream::substream(seed, b as u64);
        let mut counts = vec![0u32; sorted.len()];
        for _ in 0..sorted.len() {
            counts[rng.below(sorted.len())] += 1;
        }
        ctx.metrics(&counts)
    });
    let se = |k: usize| {
        let v: Vec<f64> = boot.iter().map(|m| m[k]).collect();
        if v.len() < 2 {
            f64::NAN
        } else {
            mc::variance(&v).sqrt()
        }
    };
    let est = |k: usize| Estimate { value: point[k], se: se(k) };
    Ok(DistributionMetrics {
        samples: sorted.len(),
        ks_normal: est(0),
        ks_corrected: est(1),
        iae_normal: est(2),
        iae_corrected: est(3),
    })
}

struct Context<'a> {
    sorted: &'a [f64],
    phi_at: &'a [f64],
    corr_at: &'a [f64],
    grid: &'a [f64],
    phi_grid: &'a [f64],
    corr_grid: &'a [f64],
}

impl Context<'_> {
    /// `[ks_normal, ks_corrected, iae_normal, iae_corrected]` for the
    /// sample that repeats `sorted[i]` `counts[i]` times.
    fn metrics(&self, counts: &[u32]) -> [f64; 4] {
        let total: f64 = counts.iter().map(|&c| c as f64).sum();
        let (mut ks_n, mut ks_c) = (0.0f64, 0.0f64);
        let mut below = 0.0;
        let mut i = 0;
        while i < self.sorted.len() {
            // Ties share one jump of the empirical CDF.
            let mut j = i;
            let mut c = 0.0;
            while j < self.sorted.len() && self.sorted[j] == self.sorted[i] {
                c += counts[j] as f64;
                j += 1;
            }
            if c > 0.0 {
                let (lo, hi) = (below / total, (below + c) / total);
                let (fn_, fc) = (self.phi_at[i], self.corr_at[i]);
                ks_n = ks_n.max((hi - fn_).abs()).max((fn_ - lo).abs());
                ks_c = ks_c.max((hi - fc).abs()).max((fc - lo).abs());
                below += c;
            }
            i = j;
        }
        let (mut iae_n, mut iae_c) = (0.0, 0.0);
        let mut k = 0;
        let mut below = 0.0;
        for (g, &y) in self.grid.iter().enumerate() {
            while k < self.sorted.len() && self.sorted[k] <= y {
                below += counts[k] as f64;
                k += 1;
            }
            let f = below / total;
            let w = if g == 0 || g + 1 == self.grid.len() { 0.5 } else { 1.0 };
            iae_n += w * (f - self.phi_grid[g]).abs();
            iae_c += w * (f - self.corr_grid[g]).abs();
        }
        [ks_n, ks_c, iae_n * GRID_STEP, iae_c * GRID_STEP]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_sample_is_rejected() {
        let e = StudentizedExpansion { a: 0.0, b: 0.0 };
        assert_eq!(compare_distributions(&[], &e, 0.1), Err(Error::EmptySample));
    }

    #[test]
    fn normal_draws_give_equal_metrics_at_zero_step() {
        let mut rng = Stream::new(3);
        let x: Vec<f64> = (0..20_000).map(|_| rng.normal()).collect();
        let e = StudentizedExpansion { a: 1.3, b: -0.7 };
        let m = compare_distributions(&x, &e, 0.0).unwrap();
        assert_eq!(m.ks_normal, m.ks_corrected);
        assert_eq!(m.iae_normal, m.iae_corrected);
        let r = x.len() as f64;
        assert!(m.ks_normal.value < 2.0 / r.sqrt());
        assert!(m.ks_normal.se > 0.0 && m.ks_normal.se < 1.0 / r.sqrt());
    }

    #[test]
    fn quantile_grid_is_within_one_over_r() {
        let normal = Normal::standard();
        for r in [10usize, 333, 5000] {
            let x: Vec<f64> = (0..r).map(|i| normal.inverse_cdf((i as f64 + 0.5) / r as f64)).collect();
            let e = StudentizedExpansion { a: 0.0, b: 0.0 };
            let m = compare_distributions_with(&x, &e, 0.0, 2, 1).unwrap();
            assert!(m.ks_normal.value <= 1.0 / r as f64 + 1e-12, "{r}: {}", m.ks_normal.value);
        }
    }

    #[test]
    fn corrected_draws_favour_the_corrected_cdf() {
        let e = StudentizedExpansion { a: 1.0, b: -0.1 };
        let dn = 0.05;
        // Inverse-transform sampling from the corrected CDF by bisection.
        let mut rng = Stream::new(9);
        let x: Vec<f64> = (0..40_000)
            .map(|_| {
                let u = rng.uniform();
                let (mut lo, mut hi) = (-12.0, 12.0);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if e.cdf(dn, mid) < u {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect();
        let m = compare_distributions(&x, &e, dn).unwrap();
        assert!(m.ks_corrected.value < m.ks_normal.value);
        assert!(m.iae_corrected.value < m.iae_normal.value);
    }

    #[test]
    fn reproducible() {
        let mut rng = Stream::new(5);
        let x: Vec<f64> = (0..2000).map(|_| rng.normal()).collect();
        let e = StudentizedExpansion { a: 0.4, b: 0.1 };
        let a = compare_distributions(&x, &e, 0.01).unwrap();
        let b = mc::with_workers(1, || compare_distributions(&x, &e, 0.01).unwrap());
        assert_eq!(a, b);
    }
}
