//! Per-path random-symbol ingredients: the integrated covariance matrix,
//! `mu_3`, the anticipative functionals `C_2..C_4` and the coefficients
//! `H_1..H_5` of the adaptive and anticipative symbols.

use serde::{Deserialize, Serialize};

use crate::diffusion::{malliavin_derivative, second_malliavin_row, DiffusionModel, SimulatedPath};
use crate::error::{Error, Result};
use crate::gaussian::{abs_moment, GMoments, GammaConstants, PowerSpec};

/// 4x4 matrix stored row-major; index 0 is the martingale component,
/// 1 the variance estimator, 2 the second-order term, 3 the Riemann variance.
pub type Matrix4 = [[f64; 4]; 4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolCoefficients {
    pub xi_int: Matrix4,
    pub mu3: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub h1_tilde: f64,
    pub h2: f64,
    pub h3_tilde: f64,
    pub h4: f64,
    pub h5: f64,
    pub lambda2: f64,
}

impl SymbolCoefficients {
    pub fn csv_header() -> Vec<String> {
        let mut h = Vec::new();
        for i in 0..4 {
            for j in i..4 {
                h.push(format!("xi{}{}", i + 1, j + 1));
            }
        }
        h.extend(["mu3", "c2", "c3", "c4", "h1_tilde", "h2", "h3_tilde", "h4", "h5"].map(String::from));
        h
    }

    pub fn csv_values(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for i in 0..4 {
            for j in i..4 {
                v.push(self.xi_int[i][j]);
            }
        }
        v.extend([self.mu3, self.c2, self.c3, self.c4, self.h1_tilde, self.h2, self.h3_tilde, self.h4, self.h5]);
        v
    }
}

/// `lambda_2 = (m_{p+2} - m_p) / 2`.
pub fn lambda2(p: PowerSpec) -> f64 {
    0.5 * (abs_moment(p.p + 2.0) - abs_moment(p.p))
}

/// Moment factors of the entries that scale with powers of `|b1|`.
#[derive(Debug, Clone, Copy)]
struct XiFactors {
    k11: f64,
    k12: f64,
    k22: f64,
}

impl XiFactors {
    fn new(p: PowerSpec) -> Self {
        let m = |k: f64| abs_moment(k * p.p);
        let (m1, m2, m3, m4) = (m(1.0), m(2.0), m(3.0), m(4.0));
        Self {
            k11: m2 - m1 * m1,
            k12: m3 - 3.0 * m2 * m1 + 2.0 * m1.powi(3),
            k22: m4 - 4.0 * m3 * m1 + 6.0 * m2 * m1 * m1 - 3.0 * m1.powi(4),
        }
    }
}

/// `int_0^1 Xi_s ds` by left-point sums on the fine grid.
pub fn xi_matrix(path: &SimulatedPath, model: &DiffusionModel, p: PowerSpec, gammas: &GammaConstants) -> Matrix4 {
    let k = XiFactors::new(p);
    let g = GMoments::new(p);
    let mut acc = [0.0; 7];
    for &x in &path.x[..path.len()] {
        let c = model.coefficients(x);
        let a = c.b1.abs().powf(p.p);
        let (a2, a3, a4) = (a * a, a * a * a, a * a * a * a);
        let gk = g.eval(&c.g_args());
        acc[0] += k.k11 * a2;
        acc[1] += k.k12 * a3;
        acc[2] += k.k22 * a4;
        acc[3] += gk[4] - gk[0] * gk[0];
        acc[4] += gammas.gamma2 * a3;
        acc[5] += gammas.gamma_bar * a4;
        acc[6] += gammas.gamma1 * a4;
    }
    let dt = path.fine_dt;
    let [x11, x12, x22, x33, x14, x24, x44] = acc.map(|v| v * dt);
    [
        [x11, x12, 0.0, x14],
        [x12, x22, 0.0, x24],
        [0.0, 0.0, x33, 0.0],
        [x14, x24, 0.0, x44],
    ]
}

/// `int g_1 dW + int (g_2 + g_3 + g_4) ds`, left-point on the fine grid.
pub fn mu3(path: &SimulatedPath, model: &DiffusionModel, p: PowerSpec) -> f64 {
    let g = GMoments::new(p);
    let dt = path.fine_dt;
    let (mut ito, mut riemann) = (0.0, 0.0);
    for (k, &x) in path.x[..path.len()].iter().enumerate() {
        let gk = g.eval(&model.coefficients(x).g_args());
        ito += gk[0] * path.dw[k];
        riemann += gk[1] + gk[2] + gk[3];
    }
    ito + dt * riemann
}

/// Weight `a` and the first two derivatives of `a^2`, evaluated at a state.
pub trait Weight {
    fn eval(&self, x: f64) -> [f64; 3];
}

impl<F: Fn(f64) -> [f64; 3]> Weight for F {
    fn eval(&self, x: f64) -> [f64; 3] {
        self(x)
    }
}

/// The power-variation weight `a = |b1|^p`, `a^2 = |b1|^{2p}`.
pub struct PowerWeight<'a> {
    pub model: &'a DiffusionModel,
    pub p: f64,
}

impl Weight for PowerWeight<'_> {
    fn eval(&self, x: f64) -> [f64; 3] {
        let j = self.model.b1_jet(x);
        let (b, b1, b2) = (j[0], j[1], j[2]);
        let q = 2.0 * self.p;
        let ab = b.abs();
        let a = ab.powf(self.p);
        if b1 == 0.0 && b2 == 0.0 {
            return [a, 0.0, 0.0];
        }
        let d1 = q * ab.powf(q - 1.0) * b.signum() * b1;
        let d2 = q * ab.powf(q - 2.0) * ((q - 1.0) * b1 * b1 + b * b2);
        [a, d1, d2]
    }
}

/// `(C_2, C_3, C_4)` for the power weight.
pub fn anticipative_functionals(path: &SimulatedPath, model: &DiffusionModel, p: PowerSpec) -> Result<[f64; 3]> {
    weighted_functionals(path, model, &PowerWeight { model, p: p.p })
}

/// `(C_2, C_3, C_4)` for a general weight, in `O(nK)`.
///
/// With `kappa_s = b1(X_s)/Y_s`, `D_s X_u = kappa_s Y_u`, and the Euler
/// recursion for `D_s D_s X` has the closed form
/// `Y_k (zeta_s + kappa_s^2 (Q_k - Q_s))` where `zeta_s = b1' b1(X_s) / Y_s`
/// and `Q_k = sum_{j<k} Y_j (b2'' dt + b1'' dW_j) / (1 + b2' dt + b1' dW_j)`.
/// The inner integrals then reduce to reverse cumulative sums.
pub fn weighted_functionals<W: Weight + ?Sized>(
    path: &SimulatedPath,
    model: &DiffusionModel,
    weight: &W,
) -> Result<[f64; 3]> {
    let len = path.len();
    let dt = path.fine_dt;
    let mut wts = Vec::with_capacity(len);
    let mut q = Vec::with_capacity(len + 1);
    q.push(0.0);
    for k in 0..len {
        let x = path.x[k];
        let a = model.b1_jet(x);
        let b = model.b2_jet(x);
        let dw = path.dw[k];
        let m = 1.0 + b[1] * dt + a[1] * dw;
        if m == 0.0 {
            return Err(Error::DegenerateVariation(k + 1));
        }
        let last = q[k];
        q.push(last + path.y[k] * (b[2] * dt + a[2] * dw) / m);
        wts.push((weight.eval(x), a[0], a[1]));
    }
    let (mut t1, mut t2, mut tq) = (0.0, 0.0, 0.0);
    let (mut c2, mut c3, mut c4) = (0.0, 0.0, 0.0);
    for s in (0..len).rev() {
        let ([a, d1, d2], b1, db1) = wts[s];
        let y = path.y[s];
        if y == 0.0 {
            return Err(Error::DegenerateVariation(s));
        }
        t1 += dt * d1 * y;
        t2 += dt * d2 * y * y;
        tq += dt * d1 * y * q[s];
        let kappa = b1 / y;
        let zeta = db1 * b1 / y;
        c2 += a * (kappa * t1).powi(2);
        c3 += a * kappa * kappa * t2;
        c4 += a * (zeta * t1 + kappa * kappa * (tq - q[s] * t1));
    }
    Ok([dt * c2, dt * c3, dt * c4])
}

/// Direct evaluation from the Malliavin solvers, outer integral on every
/// `stride`-th fine point. `O((nK)^2 / stride)`.
pub fn weighted_functionals_direct<W: Weight + ?Sized>(
    path: &SimulatedPath,
    model: &DiffusionModel,
    weight: &W,
    stride: usize,
) -> Result<[f64; 3]> {
    let len = path.len();
    let dt = path.fine_dt;
    let stride = stride.max(1);
    let wts: Vec<[f64; 3]> = path.x[..len].iter().map(|&x| weight.eval(x)).collect();
    let (mut c2, mut c3, mut c4) = (0.0, 0.0, 0.0);
    for s in (0..len).step_by(stride) {
        let dd = second_malliavin_row(path, model, s)?;
        let (mut i2, mut i3, mut i4) = (0.0, 0.0, 0.0);
        for u in s..len {
            let d = malliavin_derivative(path, model, s, u)?;
            i2 += wts[u][1] * d;
            i3 += wts[u][2] * d * d;
            i4 += wts[u][1] * dd[u - s];
        }
        let a = wts[s][0];
        c2 += a * (dt * i2).powi(2);
        c3 += a * dt * i3;
        c4 += a * dt * i4;
    }
    let h = dt * stride as f64;
    Ok([h * c2, h * c3, h * c4])
}

/// Fills every [`SymbolCoefficients`] field from one path's ingredients.
pub fn assemble_symbols(xi: Matrix4, mu3: f64, c: [f64; 3], p: PowerSpec) -> Result<SymbolCoefficients> {
    let x11 = xi[0][0];
    if !(x11 > 0.0) {
        return Err(Error::DegenerateSymbols(format!("integrated Xi11 = {x11} is not positive")));
    }
    let l2 = lambda2(p);
    let v = abs_moment(2.0 * p.p) - p.m() * p.m();
    Ok(SymbolCoefficients {
        xi_int: xi,
        mu3,
        c2: c[0],
        c3: c[1],
        c4: c[2],
        h1_tilde: xi[0][3] / (2.0 * x11),
        h2: mu3,
        h3_tilde: xi[0][1] / x11,
        h4: l2 * v * v * c[0],
        h5: l2 * v * (c[1] + c[2]),
        lambda2: l2,
    })
}

/// Full symbol computation for one path.
pub fn symbols(
    path: &SimulatedPath,
    model: &DiffusionModel,
    p: PowerSpec,
    gammas: &GammaConstants,
) -> Result<SymbolCoefficients> {
    p.require_expansion()?;
    let xi = xi_matrix(path, model, p, gammas);
    let m = mu3(path, model, p);
    let c = anticipative_functionals(path, model, p)?;
    assemble_symbols(xi, m, c, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::simulate_path;
    use crate::mc;
    use crate::rng::stream_seed;

    fn p2() -> PowerSpec {
        PowerSpec::new(2.0).unwrap()
    }

    #[test]
    fn brownian_matrix_entries() {
        let m = DiffusionModel::bm();
        let path = simulate_path(&m, 16, 8, 1).unwrap();
        let xi = xi_matrix(&path, &m, p2(), &GammaConstants::quadratic());
        assert!((xi[0][0] - 2.0).abs() < 1e-12);
        assert!((xi[0][1] - 8.0).abs() < 1e-12);
        assert!((xi[1][1] - 60.0).abs() < 1e-12);
        assert_eq!(xi[2][2], 0.0);
        assert!((xi[0][3] - 8.0 / 3.0).abs() < 1e-12);
        assert!((xi[3][3] - 16.0 / 3.0).abs() < 1e-12);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(xi[i][j], xi[j][i]);
            }
        }
        assert_eq!(mu3(&path, &m, p2()), 0.0);
        let s = symbols(&path, &m, p2(), &GammaConstants::quadratic()).unwrap();
        assert!((s.h1_tilde - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.h3_tilde - 4.0).abs() < 1e-12);
        assert_eq!((s.h2, s.h4, s.h5), (0.0, 0.0, 0.0));
    }

    #[test]
    fn constant_volatility_entries_scale() {
        let a: f64 = 1.3;
        let m = DiffusionModel::constant(a).unwrap();
        let path = simulate_path(&m, 16, 8, 1).unwrap();
        let xi = xi_matrix(&path, &m, p2(), &GammaConstants::quadratic());
        assert!((xi[0][3] - 8.0 / 3.0 * a.powi(6)).abs() < 1e-11);
        assert!((xi[3][3] - 16.0 / 3.0 * a.powi(8)).abs() < 1e-11);
        let s = symbols(&path, &m, p2(), &GammaConstants::quadratic()).unwrap();
        let target = (8.0 / 3.0) * a.powi(6) / (2.0 * 2.0 * a.powi(4));
        assert!((s.h1_tilde - target).abs() < 1e-12);
        assert_eq!([s.c2, s.c3, s.c4, s.h4, s.h5], [0.0; 5]);
    }

    #[test]
    fn degenerate_matrix_is_rejected() {
        let r = assemble_symbols([[0.0; 4]; 4], 0.0, [0.0; 3], p2());
        assert!(matches!(r, Err(Error::DegenerateSymbols(_))));
    }

    #[test]
    fn fast_and_direct_functionals_agree() {
        let m = DiffusionModel::tanh_vol();
        for &pp in &[2.0, 4.0] {
            let path = simulate_path(&m, 16, 8, 11).unwrap();
            let w = PowerWeight { model: &m, p: pp };
            let fast = weighted_functionals(&path, &m, &w).unwrap();
            let slow = weighted_functionals_direct(&path, &m, &w, 1).unwrap();
            for k in 0..3 {
                assert!((fast[k] - slow[k]).abs() <= 1e-10 * slow[k].abs().max(1e-12), "{k}: {fast:?} vs {slow:?}");
            }
        }
    }

    #[test]
    fn weighted_brownian_functional_matches_double_integral() {
        // X = W, D_s W_u = 1: C_2 = int a(W_s) (int_s^1 (a^2)'(W_u) du)^2 ds.
        let m = DiffusionModel::bm();
        let a = |w: f64| 1.0 + 0.25 * w * w;
        let weight = |w: f64| {
            let v = a(w);
            [v, 2.0 * v * 0.5 * w, 2.0 * (0.25 * w * w) + 2.0 * v * 0.5]
        };
        for seed in 0..5 {
            let path = simulate_path(&m, 32, 8, seed).unwrap();
            let [c2, _, c4] = weighted_functionals(&path, &m, &weight).unwrap();
            let len = path.len();
            let dt = path.fine_dt;
            let mut oracle = 0.0;
            for s in 0..len {
                let inner: f64 = (s..len).map(|u| dt * weight(path.w[u])[1]).sum();
                oracle += dt * a(path.w[s]) * inner * inner;
            }
            assert!((c2 - oracle).abs() <= 1e-10 * oracle, "{c2} vs {oracle}");
            assert_eq!(c4, 0.0);
        }
    }

    #[test]
    fn mu3_mean_matches_riemann_part_for_drifted_bm() {
        // b1 = 1, b2 = 1: every g_k is constant and the Ito part has mean zero.
        let m = DiffusionModel::bm_drift();
        let path = simulate_path(&m, 8, 8, 0).unwrap();
        let g = GMoments::new(p2()).eval(&m.coefficients(0.0).g_args());
        let vals = mc::par_map(4000, |r| {
            let path = simulate_path(&m, 8, 8, stream_seed(3, r as u64)).unwrap();
            mu3(&path, &m, p2())
        });
        let (mean, se) = mc::mean_se(&vals);
        let riemann = g[1] + g[2] + g[3];
        assert!((mean - riemann).abs() < 3.0 * se, "{mean} vs {riemann}");
        assert!((mu3(&path, &m, p2()) - (2.0 * path.w[path.len()] + riemann)).abs() < 1e-12);
    }

    #[test]
    fn perturbation_orders_of_functionals() {
        // b1 = 1 + eps x: C_2 ~ eps^2 from (a^2)'^2, C_3 ~ eps^2 from (b1')^2,
        // C_4 ~ eps^2 from (a^2)' times D_s D_s X = O(eps).
        let eps = [1e-1, 1e-2, 1e-3];
        let mut logs = [[0.0; 3]; 3];
        for (e, &ep) in eps.iter().enumerate() {
            let m = DiffusionModel::linear_vol(ep);
            let mut acc = [0.0; 3];
            for seed in 0..20 {
                let path = simulate_path(&m, 64, 8, seed).unwrap();
                let c = anticipative_functionals(&path, &m, p2()).unwrap();
                for k in 0..3 {
                    acc[k] += c[k].abs() / 20.0;
                }
            }
            for k in 0..3 {
                logs[k][e] = acc[k].ln();
            }
        }
        let x: Vec<f64> = eps.iter().map(|v| v.ln()).collect();
        for k in 0..3 {
            let slope = mc::ols_slope(&x, &logs[k]);
            assert!((slope - 2.0).abs() < 0.1, "C_{}: slope {slope}", k + 2);
        }
    }
}
