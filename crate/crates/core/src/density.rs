//! Edgeworth-corrected densities built from Monte Carlo samples of the
//! limit variance `C` and the symbol coefficients.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::gaussian::hermite;
use crate::mc;

/// Minimum replications for a Silverman-bandwidth fit.
pub const MIN_REPLICATIONS: usize = 1000;

/// One replication's symbol record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolRecord {
    pub c_limit: f64,
    pub h1_tilde: f64,
    pub h2: f64,
    pub h3_tilde: f64,
    pub h4: f64,
    pub h5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSample {
    pub records: Vec<SymbolRecord>,
    pub seed: u64,
}

impl SymbolSample {
    pub fn new(records: Vec<SymbolRecord>, seed: u64) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some(r) = records.iter().find(|r| !(r.c_limit > 0.0)) {
            return Err(Error::NonpositiveVariance(r.c_limit));
        }
        Ok(Self { records, seed })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// A scalar expectation with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn of(values: &[f64]) -> Self {
        let (value, se) = mc::mean_se(values);
        Self { value, se }
    }
}

/// `E[H_2 C^{-1/2}]`, `E[H_5 C^{-3/2}]`, `E[H_4 C^{-5/2}]`, `E[H3~ C^{-1/2}]`, `E[H1~ C^{-1/2}]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarExpectations {
    pub e_h2: Estimate,
    pub e_h5: Estimate,
    pub e_h4: Estimate,
    pub e_h3: Estimate,
    pub e_h1: Estimate,
}

impl ScalarExpectations {
    pub fn from_records(records: &[SymbolRecord]) -> Self {
        let col = |f: &dyn Fn(&SymbolRecord) -> f64| Estimate::of(&records.iter().map(f).collect::<Vec<_>>());
        Self {
            e_h2: col(&|r| r.h2 / r.c_limit.sqrt()),
            e_h5: col(&|r| r.h5 * r.c_limit.powf(-1.5)),
            e_h4: col(&|r| r.h4 * r.c_limit.powf(-2.5)),
            e_h3: col(&|r| r.h3_tilde / r.c_limit.sqrt()),
            e_h1: col(&|r| r.h1_tilde / r.c_limit.sqrt()),
        }
    }

    /// All expectations equal to zero.
    pub fn zero() -> Self {
        let z = Estimate { value: 0.0, se: 0.0 };
        Self { e_h2: z, e_h5: z, e_h4: z, e_h3: z, e_h1: z }
    }

    /// Coefficients `(a, b)` of `y` and `y^3` in the studentized correction.
    pub fn coefficients(&self) -> (f64, f64) {
        let a = self.e_h2.value - 0.5 * self.e_h5.value + 0.75 * self.e_h4.value + self.e_h3.value
            - 3.0 * self.e_h1.value;
        let b = self.e_h1.value - 0.5 * self.e_h3.value;
        (a, b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityModel {
    pub bandwidth: f64,
    pub expectations: ScalarExpectations,
    c: Vec<f64>,
    /// Per record: `[H2, H3~, H1~, H5, H5/2, H4, H4, H4/4]` in table order.
    weights: Vec<[f64; 8]>,
}

/// `(m_j, n_j, linear in z)` for the eight correction terms.
pub const TERMS: [(usize, usize, bool); 8] = [
    (1, 0, false),
    (0, 1, true),
    (2, 0, true),
    (1, 1, false),
    (3, 0, false),
    (1, 2, false),
    (3, 1, false),
    (5, 0, false),
];

/// Silverman's rule `0.9 min(sd, IQR / 1.34) R^{-1/5}`.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let sd = mc::variance(values).max(0.0).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |f: f64| {
        let pos = f * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    };
    let iqr = q(0.75) - q(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Fits with a Silverman bandwidth; needs at least [`MIN_REPLICATIONS`] records.
pub fn fit_density_model(sample: &SymbolSample) -> Result<DensityModel> {
    if sample.len() < MIN_REPLICATIONS {
        return Err(Error::DegenerateSample(format!(
            "{} replications, at least {MIN_REPLICATIONS} needed",
            sample.len()
        )));
    }
    let c: Vec<f64> = sample.records.iter().map(|r| r.c_limit).collect();
    let h = silverman_bandwidth(&c);
    if !(h > 0.0) {
        return Err(Error::DegenerateSample("all values of C coincide; bandwidth is zero".into()));
    }
    fit_with_bandwidth(sample, h)
}

/// Fits with a given kernel bandwidth.
pub fn fit_with_bandwidth(sample: &SymbolSample, bandwidth: f64) -> Result<DensityModel> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidArgument(format!("bandwidth {bandwidth} must be positive")));
    }
    let r = &sample.records;
    Ok(DensityModel {
        bandwidth,
        expectations: ScalarExpectations::from_records(r),
        c: r.iter().map(|v| v.c_limit).collect(),
        weights: r
            .iter()
            .map(|v| [v.h2, v.h3_tilde, v.h1_tilde, v.h5, 0.5 * v.h5, v.h4, v.h4, 0.25 * v.h4])
            .collect(),
    })
}

#[inline]
fn normal_pdf(z: f64, var: f64) -> f64 {
    (-0.5 * z * z / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// `d_z^k phi(z; 0, x)`.
pub fn dz_phi(k: usize, z: f64, x: f64) -> f64 {
    let s = x.sqrt();
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    sign * s.powi(-(k as i32)) * hermite(k, z / s) * normal_pdf(z, x)
}

/// `d_z^k [z phi(z; 0, x)]`.
pub fn dz_zphi(k: usize, z: f64, x: f64) -> f64 {
    let lead = z * dz_phi(k, z, x);
    if k == 0 {
        lead
    } else {
        lead + k as f64 * dz_phi(k - 1, z, x)
    }
}

/// Evaluated joint density with its pieces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointDensity {
    pub leading: f64,
    pub terms: [f64; 8],
    pub total: f64,
    pub in_support: bool,
}

impl DensityModel {
    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    /// Range of `x` where every finite-difference stencil stays positive
    /// and within four bandwidths of the sample.
    pub fn support(&self) -> (f64, f64) {
        let lo = self.c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ((lo - 4.0 * self.bandwidth).max(0.5 * self.bandwidth), hi + 4.0 * self.bandwidth)
    }

    /// Gaussian-kernel estimate of the law of `C`, and the weighted
    /// estimates `E[c_j | C = x] p^C(x)` for the eight table entries.
    pub fn kernel_sums(&self, x: f64) -> (f64, [f64; 8]) {
        let h = self.bandwidth;
        let mut p = 0.0;
        let mut k = [0.0; 8];
        for (c, w) in self.c.iter().zip(&self.weights) {
            let u = (x - c) / h;
            if u.abs() > 40.0 {
                continue;
            }
            let kern = (-0.5 * u * u).exp();
            p += kern;
            for j in 0..8 {
                k[j] += kern * w[j];
            }
        }
        let norm = 1.0 / (self.c.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
        (p * norm, k.map(|v| v * norm))
    }

    pub fn density_of_c(&self, x: f64) -> f64 {
        self.kernel_sums(x).0
    }

    /// Nadaraya–Watson estimate of `E[c_j | C = x]` for table entry `j`.
    pub fn conditional_mean(&self, j: usize, x: f64) -> f64 {
        let (p, k) = self.kernel_sums(x);
        if p > 0.0 {
            k[j] / p
        } else {
            0.0
        }
    }

    /// `p_n(z, x) = phi(z; 0, x) p^C(x) + sqrt(dn) sum_j p_j(z, x)`.
    pub fn joint_density(&self, dn: f64, z: f64, x: f64) -> JointDensity {
        let (lo, hi) = self.support();
        let step = 0.25 * self.bandwidth;
        let in_support = x >= lo && x <= hi && x - 2.0 * step > 0.0;
        if !(x > 0.0) {
            return JointDensity { leading: 0.0, terms: [0.0; 8], total: 0.0, in_support: false };
        }
        let (pc, _) = self.kernel_sums(x);
        let leading = normal_pdf(z, x) * pc;
        if !in_support {
            return JointDensity { leading, terms: [0.0; 8], total: leading, in_support };
        }
        let stencil = [x - step, x, x + step];
        let sums: Vec<[f64; 8]> = stencil.iter().map(|&v| self.kernel_sums(v).1).collect();
        let mut terms = [0.0; 8];
        for (j, &(m, n, linear)) in TERMS.iter().enumerate() {
            let g = |idx: usize| {
                let xv = stencil[idx];
                let zpart = if linear { dz_zphi(m, z, xv) } else { dz_phi(m, z, xv) };
                zpart * sums[idx][j]
            };
            let deriv = match n {
                0 => g(1),
                1 => (g(2) - g(0)) / (2.0 * step),
                _ => (g(2) - 2.0 * g(1) + g(0)) / (step * step),
            };
            let sign = if (m + n) % 2 == 0 { 1.0 } else { -1.0 };
            terms[j] = sign * deriv;
        }
        let total = leading + dn.sqrt() * terms.iter().sum::<f64>();
        JointDensity { leading, terms, total, in_support }
    }

    pub fn studentized(&self) -> StudentizedExpansion {
        StudentizedExpansion::new(&self.expectations)
    }
}

/// `phi(y) (1 + sqrt(dn) (a y + b y^3))` and its distribution function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentizedExpansion {
    pub a: f64,
    pub b: f64,
}

impl StudentizedExpansion {
    pub fn new(e: &ScalarExpectations) -> Self {
        let (a, b) = e.coefficients();
        Self { a, b }
    }

    pub fn density(&self, dn: f64, y: f64) -> f64 {
        let phi = normal_pdf(y, 1.0);
        phi * (1.0 + dn.sqrt() * (self.a * y + self.b * y * y * y))
    }

    /// `Phi(y) - sqrt(dn) phi(y) (a + b (y^2 + 2))`.
    pub fn cdf(&self, dn: f64, y: f64) -> f64 {
        let n = Normal::standard();
        n.cdf(y) - dn.sqrt() * n.pdf(y) * (self.a + self.b * (y * y + 2.0))
    }

    /// Leftmost and rightmost points where the density changes sign on
    /// `[-lim, lim]`, if any.
    pub fn sign_changes(&self, dn: f64, lim: f64) -> Option<(f64, f64)> {
        let f = |y: f64| 1.0 + dn.sqrt() * (self.a * y + self.b * y * y * y);
        let steps = 4000;
        let grid: Vec<f64> = (0..=steps).map(|i| -lim + 2.0 * lim * i as f64 / steps as f64).collect();
        let mut roots = Vec::new();
        for w in grid.windows(2) {
            let (mut lo, mut hi) = (w[0], w[1]);
            if f(lo).signum() == f(hi).signum() {
                continue;
            }
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if f(mid).signum() == f(lo).signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        Some((*roots.first()?, *roots.last()?))
    }
}

/// Studentized density at `y` for a fitted model.
pub fn studentized_density(model: &DensityModel, dn: f64, y: f64) -> f64 {
    model.studentized().density(dn, y)
}

pub fn corrected_cdf(model: &DensityModel, dn: f64, y: f64) -> f64 {
    model.studentized().cdf(dn, y)
}

/// Bivariate polynomial `sum coef * a^i * b^j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QPoly(pub Vec<(f64, u32, u32)>);

impl QPoly {
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        self.0.iter().map(|&(c, i, j)| c * a.powi(i as i32) * b.powi(j as i32)).sum()
    }
}

/// `q_{beta, v}` defined by
/// `d_x^beta g(z / sqrt x) = sum_{v <= beta} q_{beta,v}(z / sqrt x, x^{-1/2}) g^(v)(z / sqrt x)`.
pub fn q_polynomials(beta: usize, v: usize) -> Result<QPoly> {
    Ok(QPoly(match (beta, v) {
        (0, 0) => vec![(1.0, 0, 0)],
        (1, 0) | (2, 0) => vec![],
        (1, 1) => vec![(-0.5, 1, 2)],
        (2, 1) => vec![(0.75, 1, 4)],
        (2, 2) => vec![(0.25, 2, 4)],
        _ => {
            return Err(Error::InvalidArgument(format!(
                "q polynomial index (beta, v) = ({beta}, {v}) outside 0 <= v <= beta <= 2"
            )))
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use gauss_quad::GaussLegendre;
    use std::num::NonZeroUsize;

    /// Composite Gauss–Legendre on `[a, b]` with unit panels.
    fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let gl = GaussLegendre::new(NonZeroUsize::new(30).unwrap());
        let panels = (b - a).ceil() as usize;
        let w = (b - a) / panels as f64;
        (0..panels).map(|i| gl.integrate(a + i as f64 * w, a + (i + 1) as f64 * w, &f)).sum()
    }

    fn sample_from(f: impl Fn(&mut Stream) -> SymbolRecord, r: usize) -> SymbolSample {
        let mut rng = Stream::new(17);
        SymbolSample::new((0..r).map(|_| f(&mut rng)).collect(), 17).unwrap()
    }

    fn lognormal_sample(r: usize) -> SymbolSample {
        sample_from(
            |g| {
                let c = (0.3 * g.normal()).exp() * 2.0;
                SymbolRecord {
                    c_limit: c,
                    h1_tilde: 0.6 + 0.1 * g.normal(),
                    h2: 0.2 * g.normal() - 0.1,
                    h3_tilde: 4.0 + 0.3 * g.normal(),
                    h4: 0.05 * c,
                    h5: 0.1 * g.normal(),
                }
            },
            r,
        )
    }

    #[test]
    fn q_table() {
        assert_eq!(q_polynomials(0, 0).unwrap().eval(0.3, 0.7), 1.0);
        assert_eq!(q_polynomials(1, 1).unwrap().eval(2.0, 3.0), -9.0);
        assert_eq!(q_polynomials(2, 2).unwrap().eval(2.0, 1.0), 1.0);
        assert!(q_polynomials(3, 0).is_err());
        assert!(q_polynomials(1, 2).is_err());
    }

    #[test]
    fn z_derivatives_match_finite_differences() {
        let (z, x, h) = (0.7, 1.8, 1e-3);
        for k in 1..=5 {
            let fd = (dz_phi(k - 1, z + h, x) - dz_phi(k - 1, z - h, x)) / (2.0 * h);
            assert!((fd - dz_phi(k, z, x)).abs() < 1e-6, "k={k}");
            let fd = (dz_zphi(k - 1, z + h, x) - dz_zphi(k - 1, z - h, x)) / (2.0 * h);
            assert!((fd - dz_zphi(k, z, x)).abs() < 1e-6, "k={k}");
        }
    }

    #[test]
    fn silverman_fit_rules() {
        let s = lognormal_sample(2000);
        let m = fit_density_model(&s).unwrap();
        assert!(m.bandwidth > 0.0);
        let small = lognormal_sample(500);
        assert!(matches!(fit_density_model(&small), Err(Error::DegenerateSample(_))));
        let constant = sample_from(
            |_| SymbolRecord { c_limit: 2.0, h1_tilde: 0.5, h2: 0.0, h3_tilde: 0.0, h4: 0.0, h5: 0.0 },
            1500,
        );
        assert!(matches!(fit_density_model(&constant), Err(Error::DegenerateSample(_))));
        let m = fit_with_bandwidth(&constant, 0.05).unwrap();
        assert!((m.expectations.e_h1.value - 0.5 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn leading_term_integrates_to_law_of_c() {
        let m = fit_density_model(&lognormal_sample(2000)).unwrap();
        for &x in &[1.5f64, 2.0, 2.6] {
            let total = integrate(|z| m.joint_density(0.0, z, x).total, -15.0 * x.sqrt(), 15.0 * x.sqrt());
            let pc = m.density_of_c(x);
            assert!((total - pc).abs() < 1e-6 * pc.max(1e-3), "{total} vs {pc}");
        }
    }

    #[test]
    fn pure_z_corrections_integrate_to_zero() {
        let m = fit_density_model(&lognormal_sample(2000)).unwrap();
        let x: f64 = 2.0;
        for j in [0, 2, 4, 7] {
            let v = integrate(|z| m.joint_density(0.1, z, x).terms[j], -15.0 * x.sqrt(), 15.0 * x.sqrt());
            assert!(v.abs() < 1e-8, "term {j}: {v}");
        }
    }

    #[test]
    fn outside_support_gives_leading_only() {
        let m = fit_density_model(&lognormal_sample(2000)).unwrap();
        let d = m.joint_density(0.01, 0.3, 40.0);
        assert!(!d.in_support);
        assert_eq!(d.total, d.leading);
    }

    #[test]
    fn studentized_density_integrates_to_one() {
        let m = fit_density_model(&lognormal_sample(2000)).unwrap();
        for &dn in &[0.0, 1.0 / 64.0, 1.0 / 1024.0, 0.5] {
            let v = integrate(|y| studentized_density(&m, dn, y), -40.0, 40.0);
            assert!((v - 1.0).abs() < 1e-8, "{dn}: {v}");
        }
        let e = StudentizedExpansion { a: 0.0, b: 0.0 };
        assert_eq!(e.density(0.3, 1.1), normal_pdf(1.1, 1.0));
    }

    #[test]
    fn corrected_cdf_is_integral_of_density() {
        let e = StudentizedExpansion { a: 1.3, b: -0.8 };
        let dn = 1.0 / 64.0;
        for &y in &[-2.0, -0.3, 0.0, 1.4] {
            let v = integrate(|t| e.density(dn, t), -40.0, y);
            assert!((v - e.cdf(dn, y)).abs() < 1e-10);
        }
    }

    #[test]
    fn sign_changes_are_found() {
        let e = StudentizedExpansion { a: 0.0, b: -1.0 };
        let (l, r) = e.sign_changes(1.0 / 16.0, 10.0).unwrap();
        assert!((r - 4f64.cbrt()).abs() < 1e-9 && l == r);
        assert!(StudentizedExpansion { a: 0.0, b: 0.0 }.sign_changes(0.1, 10.0).is_none());
    }
}
