//! Observation-grid statistics of a simulated path: power variation, its
//! limit, the variance estimator, the martingale term and the second-order
//! terms of the stochastic expansion.

use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionModel, SimulatedPath};
use crate::error::{Error, Result};
use crate::gaussian::{abs_moment, hermite, rho_derivs, PowerSpec};

/// Minimum refinement for the inner fine-grid integrals of the expansion.
pub const MIN_EXPANSION_REFINE: usize = 8;

/// Per-path values of every quantity in the expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionTerms {
    pub seed: u64,
    pub n: usize,
    pub p: f64,
    pub v_n: f64,
    pub v_limit: f64,
    pub f_n: f64,
    pub c_limit: f64,
    pub m_n: f64,
    pub n1: f64,
    pub n2: f64,
    pub n3: f64,
    pub n4: f64,
    pub n5: f64,
    pub z_n: f64,
    /// `z_n / sqrt(f_n)`; NaN when `f_n <= 0`.
    pub studentized: f64,
    pub residual: f64,
}

impl ExpansionTerms {
    pub fn n_total(&self) -> f64 {
        self.n1 + self.n2 + self.n3 + self.n4 + self.n5
    }

    /// `Delta^{-1/2} (F_n - C)`.
    pub fn f_hat(&self) -> f64 {
        (self.n as f64).sqrt() * (self.f_n - self.c_limit)
    }

    pub fn csv_header() -> Vec<&'static str> {
        vec![
            "seed", "n", "p", "v_n", "v_limit", "f_n", "c_limit", "m_n", "n1", "n2", "n3", "n4", "n5", "z_n",
            "studentized", "residual",
        ]
    }

    pub fn csv_record(&self) -> Vec<String> {
        let mut out = vec![self.seed.to_string(), self.n.to_string(), self.p.to_string()];
        out.extend(
            [
                self.v_n,
                self.v_limit,
                self.f_n,
                self.c_limit,
                self.m_n,
                self.n1,
                self.n2,
                self.n3,
                self.n4,
                self.n5,
                self.z_n,
                self.studentized,
                self.residual,
            ]
            .iter()
            .map(|v| v.to_string()),
        );
        out
    }
}

/// `V_n(f_p) = Delta sum |Delta_i X / sqrt(Delta)|^p`.
pub fn power_variation(path: &SimulatedPath, p: PowerSpec) -> f64 {
    let dt = path.obs_dt();
    let s = dt.sqrt();
    let inc = path.obs_increments();
    dt * inc[..path.obs_n].iter().map(|d| p.f(d / s)).sum::<f64>()
}

/// Trapezoid rule for `int_0^1 g(X_s) ds` on the fine grid.
pub fn fine_trapezoid(path: &SimulatedPath, g: impl Fn(f64) -> f64) -> f64 {
    let x = &path.x;
    let last = x.len() - 1;
    let inner: f64 = x[1..last].iter().map(|&v| g(v)).sum();
    path.fine_dt * (inner + 0.5 * (g(x[0]) + g(x[last])))
}

/// `V(f_p) = int m_p |b1(X_s)|^p ds`.
pub fn limit_v(path: &SimulatedPath, model: &DiffusionModel, p: PowerSpec) -> f64 {
    let m = p.m();
    fine_trapezoid(path, |x| m * model.b1(x).abs().powf(p.p))
}

/// `C = int (m_{2p} - m_p^2) |b1(X_s)|^{2p} ds`.
pub fn limit_c(path: &SimulatedPath, model: &DiffusionModel, p: PowerSpec) -> f64 {
    let k = abs_moment(2.0 * p.p) - p.m() * p.m();
    fine_trapezoid(path, |x| k * model.b1(x).abs().powf(2.0 * p.p))
}

/// Lag-1 estimator of `C`; the last summand uses the increment on `(1, 1 + Delta]`.
pub fn f_n_estimator(path: &SimulatedPath, p: PowerSpec) -> f64 {
    let dt = path.obs_dt();
    let s = dt.sqrt();
    let inc = path.obs_increments();
    let f: Vec<f64> = inc.iter().map(|d| p.f(d / s)).collect();
    dt * (0..path.obs_n).map(|i| f[i] * f[i] - f[i] * f[i + 1]).sum::<f64>()
}

/// `M_n = Delta^{1/2} sum |b1(X_{t_{i-1}})|^p (|Delta_i W / sqrt(Delta)|^p - m_p)`.
pub fn martingale_term(path: &SimulatedPath, model: &DiffusionModel, p: PowerSpec) -> f64 {
    let dt = path.obs_dt();
    let s = dt.sqrt();
    let m = p.m();
    let dw = path.obs_dw();
    s * dw
        .iter()
        .enumerate()
        .map(|(i, d)| model.b1(path.obs_x(i)).abs().powf(p.p) * (p.f(d / s) - m))
        .sum::<f64>()
}

/// `z / sqrt(f)`.
pub fn studentize(z: f64, f: f64) -> Result<f64> {
    if !(f > 0.0) {
        return Err(Error::NonpositiveVariance(f));
    }
    Ok(z / f.sqrt())
}

/// Integrals over one observation block `[a, b]`: `int (W_s - W_a) ds`
/// (exact given the area terms), the trapezoid sum of
/// `int (W_s - W_a)^2 ds`, and `int (s - a) dW_s = (b - a)(W_b - W_a) - int (W_s - W_a) ds`.
#[inline]
fn block_integrals(path: &SimulatedPath, start: usize) -> (f64, f64, f64) {
    let dt = path.fine_dt;
    let k = path.refine;
    let w0 = path.w[start];
    let end = path.w[start + k] - w0;
    let (mut i1, mut sq) = (0.0, 0.5 * end * end);
    for j in 0..k {
        let d = path.w[start + j] - w0;
        i1 += d * dt + path.dz[start + j];
        sq += d * d;
    }
    (i1, dt * sq, k as f64 * dt * end - i1)
}

/// The five second-order terms `N_{n,1..5}`.
pub fn second_order_terms(path: &SimulatedPath, model: &DiffusionModel, p: PowerSpec) -> Result<[f64; 5]> {
    let dt = path.obs_dt();
    let s = dt.sqrt();
    let k = path.refine;
    let mut acc = [0.0; 5];
    for i in 0..path.obs_n {
        let start = i * k;
        let c = model.coefficients(path.x[start]);
        let d = c.derived();
        let u = (path.w[start + k] - path.w[start]) / s;
        let alpha = c.b1 * u;
        if p.p < 2.0 && alpha == 0.0 {
            return Err(Error::Singularity(format!("f'' at a zero increment in block {}", i + 1)));
        }
        let (i1, i2, i3) = block_integrals(path, start);
        let (_, r1, r2) = rho_derivs(p, c.b1)?;
        let fp = p.fprime(alpha);
        let inner = c.b2 + 0.5 * d.b11 * hermite(2, u);
        acc[0] += fp * inner;
        acc[1] += fp * (d.b21 * i1 + d.b12 * i3 + dt.powf(1.5) * d.b111 / 6.0 * hermite(3, u));
        acc[2] += p.fsecond(alpha) * inner * inner;
        acc[3] += -r2 * d.b11 * d.b11 * i2 - dt * dt * r1 * d.b12;
        acc[4] += r1 * d.b11 * i1;
    }
    Ok([s * acc[0], acc[1] / s, 0.5 * dt * acc[2], acc[3] / (2.0 * dt), -acc[4] / dt])
}

/// Every field of [`ExpansionTerms`] for one path.
pub fn expansion_terms(path: &SimulatedPath, model: &DiffusionModel, p: PowerSpec) -> Result<ExpansionTerms> {
    p.require_expansion()?;
    if path.refine < MIN_EXPANSION_REFINE {
        return Err(Error::InvalidArgument(format!(
            "expansion terms need refine >= {MIN_EXPANSION_REFINE}, got {}",
            path.refine
        )));
    }
    let n = path.obs_n;
    let s = path.obs_dt().sqrt();
    let v_n = power_variation(path, p);
    let v_limit = limit_v(path, model, p);
    let f_n = f_n_estimator(path, p);
    let c_limit = limit_c(path, model, p);
    let m_n = martingale_term(path, model, p);
    let [n1, n2, n3, n4, n5] = second_order_terms(path, model, p)?;
    let z_n = (v_n - v_limit) / s;
    let studentized = studentize(z_n, f_n).unwrap_or(f64::NAN);
    let residual = z_n - m_n - s * (n1 + n2 + n3 + n4 + n5);
    Ok(ExpansionTerms {
        seed: path.seed,
        n,
        p: p.p,
        v_n,
        v_limit,
        f_n,
        c_limit,
        m_n,
        n1,
        n2,
        n3,
        n4,
        n5,
        z_n,
        studentized,
        residual,
    })
}

/// `z_n = M_n + R1 + R2` with `R1 = Delta^{-1/2}(V_n - Delta sum f(alpha_i))`
/// and `R2 = Delta^{-1/2}(Delta sum rho(b1_{t_{i-1}}) - V)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Decomposition {
    pub v_n: f64,
    pub v_limit: f64,
    pub m_n: f64,
    pub r1: f64,
    pub r2: f64,
}

impl Decomposition {
    /// `V + Delta^{1/2} (M_n + R1 + R2)` with `Delta = 1/n`.
    pub fn reassemble(&self, n: usize) -> f64 {
        let s = (1.0 / n as f64).sqrt();
        self.v_limit + s * self.m_n + s * self.r1 + s * self.r2
    }
}

pub fn decomposition(path: &SimulatedPath, model: &DiffusionModel, p: PowerSpec) -> Decomposition {
    let dt = path.obs_dt();
    let s = dt.sqrt();
    let v_n = power_variation(path, p);
    let v_limit = limit_v(path, model, p);
    let dw = path.obs_dw();
    let (mut fa, mut rho) = (0.0, 0.0);
    for (i, d) in dw.iter().enumerate() {
        let b = model.b1(path.obs_x(i));
        fa += p.f(b * d / s);
        rho += p.m() * b.abs().powf(p.p);
    }
    Decomposition {
        v_n,
        v_limit,
        m_n: martingale_term(path, model, p),
        r1: (v_n - dt * fa) / s,
        r2: (dt * rho - v_limit) / s,
    }
}

/// `Delta sum g(a_{t_{i-1}}, w_i)` where `w_i` is the rescaled Brownian
/// increment path on block `i`, sampled at the `K + 1` fine points.
pub fn lln_functional<A, G>(path: &SimulatedPath, a: A, g: G) -> f64
where
    A: Fn(f64) -> f64,
    G: Fn(f64, &[f64]) -> f64,
{
    let dt = path.obs_dt();
    let s = dt.sqrt();
    let k = path.refine;
    let mut buf = vec![0.0; k + 1];
    let mut acc = 0.0;
    for i in 0..path.obs_n {
        let start = i * k;
        let w0 = path.w[start];
        for (j, b) in buf.iter_mut().enumerate() {
            *b = (path.w[start + j] - w0) / s;
        }
        acc += g(a(path.x[start]), &buf);
    }
    dt * acc
}

/// `int rho(a_s, g) ds` for `rho(a, g) = a * c`.
pub fn lln_limit_linear<A: Fn(f64) -> f64>(path: &SimulatedPath, a: A, c: f64) -> f64 {
    fine_trapezoid(path, |x| a(x) * c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{simulate_path, simulate_with_increments};
    use crate::mc;
    use crate::rng::stream_seed;
    use std::sync::Arc;

    fn p(v: f64) -> PowerSpec {
        PowerSpec::new(v).unwrap()
    }

    #[test]
    fn zero_increments_give_zero() {
        let m = DiffusionModel::constant(1.0).unwrap();
        let path = simulate_with_increments(&m, 4, 8, &[0.0; 40], &[0.0; 40]).unwrap();
        assert_eq!(power_variation(&path, p(2.0)), 0.0);
        assert_eq!(f_n_estimator(&path, p(2.0)), 0.0);
    }

    #[test]
    fn constant_limits() {
        let sigma: f64 = 1.7;
        let m = DiffusionModel::constant(sigma).unwrap();
        let path = simulate_path(&m, 16, 8, 3).unwrap();
        for &pp in &[2.0, 3.0, 14.5] {
            let v = limit_v(&path, &m, p(pp));
            assert!((v - abs_moment(pp) * sigma.powf(pp)).abs() < 1e-12 * v);
            let c = limit_c(&path, &m, p(pp));
            let target = (abs_moment(2.0 * pp) - abs_moment(pp).powi(2)) * sigma.powf(2.0 * pp);
            assert!((c - target).abs() < 1e-12 * target);
        }
        let bm = DiffusionModel::bm();
        let path = simulate_path(&bm, 16, 8, 3).unwrap();
        assert!((limit_v(&path, &bm, p(2.0)) - 1.0).abs() < 1e-14);
        assert!((limit_c(&path, &bm, p(2.0)) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn frozen_increments_martingale_term() {
        let m = DiffusionModel::tanh_vol();
        let (n, k) = (8usize, 8usize);
        let inc = vec![(1.0 / (n * k * k) as f64).sqrt(); (n + 1) * k];
        let path = simulate_with_increments(&m, n, k, &inc, &inc).unwrap();
        let pp = p(4.0);
        let dt = 1.0 / n as f64;
        let expect = dt.sqrt()
            * (0..n).map(|i| m.b1(path.obs_x(i)).abs().powf(4.0) * (1.0 - 3.0)).sum::<f64>();
        assert!((martingale_term(&path, &m, pp) - expect).abs() < 1e-12);
    }

    #[test]
    fn studentize_examples() {
        assert_eq!(studentize(0.0, 4.0).unwrap(), 0.0);
        assert_eq!(studentize(2.0, 4.0).unwrap(), 1.0);
        assert_eq!(studentize(2.0, 0.0), Err(Error::NonpositiveVariance(0.0)));
    }

    #[test]
    fn brownian_second_order_terms_vanish() {
        let m = DiffusionModel::bm();
        for &pp in &[2.0, 4.0, 14.0] {
            let path = simulate_path(&m, 32, 8, 1).unwrap();
            let t = expansion_terms(&path, &m, p(pp)).unwrap();
            assert_eq!([t.n1, t.n2, t.n3, t.n4, t.n5], [0.0; 5]);
        }
    }

    #[test]
    fn expansion_gate() {
        let m = DiffusionModel::bm();
        let path = simulate_path(&m, 32, 8, 1).unwrap();
        assert!(expansion_terms(&path, &m, p(3.0)).is_err());
        let coarse = simulate_path(&m, 32, 4, 1).unwrap();
        assert!(expansion_terms(&coarse, &m, p(2.0)).is_err());
    }

    #[test]
    fn decomposition_reassembles_power_variation() {
        let m = DiffusionModel::tanh_vol();
        for seed in 0..20 {
            let path = simulate_path(&m, 256, 8, seed).unwrap();
            for &pp in &[2.0, 4.0, 14.5] {
                let d = decomposition(&path, &m, p(pp));
                let r = d.reassemble(256);
                assert!((r - d.v_n).abs() <= 1e-12 * d.v_n.abs(), "{r} vs {}", d.v_n);
            }
        }
    }

    #[test]
    fn scale_covariant_model_gives_exact_homogeneity() {
        // b1_s(x) = s (1 + tanh(x / s) / 4), x0 = 0.3 s gives X^s = s X pathwise.
        let model = |s: f64| {
            DiffusionModel::from_fns(
                "scaled-tanh",
                Arc::new(move |x: f64| {
                    let t = (x / s).tanh();
                    let q = 1.0 - t * t;
                    [s * (1.0 + 0.25 * t), 0.25 * q, -0.5 * t * q / s, 0.0, 0.0]
                }),
                Arc::new(|_| [0.0; 3]),
                0.3 * s,
                0.75 * s,
            )
            .unwrap()
            .with_domain(-10.0 * s, 10.0 * s)
        };
        let (a, b) = (model(1.0), model(2.5));
        let pp = p(2.0);
        for seed in 0..5 {
            let pa = simulate_path(&a, 64, 8, seed).unwrap();
            let pb = simulate_path(&b, 64, 8, seed).unwrap();
            let s2 = 2.5f64 * 2.5;
            let close = |u: f64, v: f64| (u - v).abs() <= 1e-9 * v.abs().max(1e-12);
            assert!(close(power_variation(&pb, pp), s2 * power_variation(&pa, pp)));
            assert!(close(limit_v(&pb, &b, pp), s2 * limit_v(&pa, &a, pp)));
            assert!(close(f_n_estimator(&pb, pp), s2 * s2 * f_n_estimator(&pa, pp)));
            assert!(close(limit_c(&pb, &b, pp), s2 * s2 * limit_c(&pa, &a, pp)));
            assert!(close(martingale_term(&pb, &b, pp), s2 * martingale_term(&pa, &a, pp)));
        }
    }

    #[test]
    fn brownian_power_variation_and_estimator_means() {
        let m = DiffusionModel::bm();
        let pp = p(2.0);
        let vals = mc::par_map(4000, |r| {
            let path = simulate_path(&m, 64, 1, stream_seed(5, r as u64)).unwrap();
            (power_variation(&path, pp), f_n_estimator(&path, pp), martingale_term(&path, &m, pp))
        });
        let v: Vec<f64> = vals.iter().map(|t| t.0).collect();
        let f: Vec<f64> = vals.iter().map(|t| t.1).collect();
        let mn: Vec<f64> = vals.iter().map(|t| t.2).collect();
        let (mv, sv) = mc::mean_se(&v);
        let (mf, sf) = mc::mean_se(&f);
        let (mm, sm) = mc::mean_se(&mn);
        assert!((mv - 1.0).abs() < 3.0 * sv);
        assert!((mf - 2.0).abs() < 3.0 * sf);
        assert!(mm.abs() < 3.0 * sm);
        let band = 3.0 * (2.0f64 / 64.0).sqrt();
        let outside = v.iter().filter(|x| (*x - 1.0).abs() > band).count();
        assert!(outside < 40, "{outside}");
    }

    #[test]
    fn lln_of_odd_functional_vanishes() {
        let m = DiffusionModel::tanh_vol();
        let path = simulate_path(&m, 1024, 8, 2).unwrap();
        let v = lln_functional(&path, |x| m.b1(x), |a, w| a * w[w.len() - 1].powi(3));
        assert!(v.abs() < 5.0 * (15.0f64 * 1.6 / 1024.0).sqrt());
    }
}
