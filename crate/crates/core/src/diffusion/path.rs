//! Fine-grid simulation of `(W, X, Y)` with an observation-grid view.

use serde::Serialize;

use super::model::DiffusionModel;
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Default refinement factor between observation and simulation grids.
pub const DEFAULT_REFINE: usize = 16;

/// One trajectory on the fine grid `k / (n K)`, `k = 0..=n K`.
///
/// `dz[k]` is `int_{t_k}^{t_{k+1}} (W_s - W_{t_k}) ds` for step `k`.
///
/// `x_next` holds the fine-grid continuation on `(1, 1 + 1/n]`, which the
/// lag-1 variance estimator needs for its last summand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulatedPath {
    pub fine_dt: f64,
    pub refine: usize,
    pub obs_n: usize,
    pub seed: u64,
    pub w: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub dw: Vec<f64>,
    pub dz: Vec<f64>,
    pub x_next: Vec<f64>,
}

impl SimulatedPath {
    #[inline]
    pub fn len(&self) -> usize {
        self.dw.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.dw.is_empty()
    }

    /// Observation step `1/n`.
    #[inline]
    pub fn obs_dt(&self) -> f64 {
        1.0 / self.obs_n as f64
    }

    /// `X` at observation time `i / n`.
    #[inline]
    pub fn obs_x(&self, i: usize) -> f64 {
        self.x[i * self.refine]
    }

    /// Observation increments `X_{t_i} - X_{t_{i-1}}` for `i = 1..=n+1`;
    /// the last one lies beyond `t = 1`.
    pub fn obs_increments(&self) -> Vec<f64> {
        let mut out: Vec<f64> = (1..=self.obs_n).map(|i| self.obs_x(i) - self.obs_x(i - 1)).collect();
        out.push(self.x_next[self.refine] - self.x_next[0]);
        out
    }

    /// Brownian observation increments for `i = 1..=n`.
    pub fn obs_dw(&self) -> Vec<f64> {
        let k = self.refine;
        (1..=self.obs_n).map(|i| self.w[i * k] - self.w[(i - 1) * k]).collect()
    }
}

pub fn check_grid(n: usize, refine: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::ObservationCount(n));
    }
    if refine == 0 {
        return Err(Error::InvalidArgument("refinement factor must be >= 1".into()));
    }
    Ok(())
}

/// One step of the order-1.5 strong Taylor scheme for `X` driven by
/// `dw = W_{t+dt} - W_t` and `dz = int_t^{t+dt} (W_s - W_t) ds`.
#[inline]
pub fn taylor_step(model: &DiffusionModel, x: f64, dw: f64, dz: f64, dt: f64) -> f64 {
    let c = model.coefficients(x);
    let (s, s1, s2) = (c.b1, c.d1_b1, c.d2_b1);
    let (m, m1, m2) = (c.b2, c.d1_b2, c.d2_b2);
    x + m * dt
        + s * dw
        + 0.5 * s * s1 * (dw * dw - dt)
        + m1 * s * dz
        + 0.5 * (m * m1 + 0.5 * s * s * m2) * dt * dt
        + (m * s1 + 0.5 * s * s * s2) * (dw * dt - dz)
        + 0.5 * s * (s * s2 + s1 * s1) * (dw * dw / 3.0 - dt) * dw
}

/// Simulates one path with the Gaussian pairs `(dW, dZ)` drawn from
/// `Stream::new(seed)`.
///
/// `X` follows the order-1.5 strong Taylor scheme, `Y` the Euler scheme of
/// `dY = b2'(X) Y dt + b1'(X) Y dW`.
pub fn simulate_path(model: &DiffusionModel, n: usize, refine: usize, seed: u64) -> Result<SimulatedPath> {
    check_grid(n, refine)?;
    let total = (n + 1) * refine;
    let dt = 1.0 / (n * refine) as f64;
    let mut rng = Stream::new(seed);
    let mut u = vec![0.0; 2 * total];
    rng.fill_normal(&mut u);
    let (u1, u2) = u.split_at(total);
    let sd = dt.sqrt();
    let dw: Vec<f64> = u1.iter().map(|v| sd * v).collect();
    let dz: Vec<f64> = u1
        .iter()
        .zip(u2)
        .map(|(a, b)| 0.5 * dt * sd * (a + b / 3f64.sqrt()))
        .collect();
    let mut path = simulate_with_increments(model, n, refine, &dw, &dz)?;
    path.seed = seed;
    Ok(path)
}

/// Runs the schemes on given fine increments `dw` and area terms `dz`,
/// each of length `(n + 1) K`.
pub fn simulate_with_increments(
    model: &DiffusionModel,
    n: usize,
    refine: usize,
    dw: &[f64],
    dz: &[f64],
) -> Result<SimulatedPath> {
    check_grid(n, refine)?;
    let steps = n * refine;
    if dw.len() != steps + refine || dz.len() != dw.len() {
        return Err(Error::InvalidArgument(format!(
            "expected {} increments and area terms, got {} and {}",
            steps + refine,
            dw.len(),
            dz.len()
        )));
    }
    let dt = 1.0 / steps as f64;
    let mut w = Vec::with_capacity(steps + 1);
    let mut x = Vec::with_capacity(steps + 1);
    let mut y = Vec::with_capacity(steps + 1);
    w.push(0.0);
    x.push(model.x0);
    y.push(1.0);
    let mut x_next = Vec::with_capacity(refine + 1);
    let (mut wk, mut xk, mut yk) = (0.0, model.x0, 1.0);
    for (k, (&dwk, &dzk)) in dw.iter().zip(dz).enumerate() {
        let c = model.coefficients(xk);
        let x_new = taylor_step(model, xk, dwk, dzk, dt);
        let y_new = yk * (1.0 + c.d1_b2 * dt + c.d1_b1 * dwk);
        if k == steps {
            x_next.push(xk);
        }
        wk += dwk;
        xk = x_new;
        yk = y_new;
        model.check_state(xk, k + 1)?;
        if !yk.is_finite() {
            return Err(Error::SimulationDiverged { index: k + 1, value: yk });
        }
        if k < steps {
            w.push(wk);
            x.push(xk);
            y.push(yk);
        } else {
            x_next.push(xk);
        }
    }
    Ok(SimulatedPath {
        fine_dt: dt,
        refine,
        obs_n: n,
        seed: 0,
        w,
        x,
        y,
        dw: dw[..steps].to_vec(),
        dz: dz[..steps].to_vec(),
        x_next,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc;
    use proptest::prelude::*;

    #[test]
    fn brownian_motion_is_reproduced_exactly() {
        let p = simulate_path(&DiffusionModel::bm(), 8, 4, 3).unwrap();
        assert_eq!(p.x, p.w);
        assert!(p.y.iter().all(|&v| v == 1.0));
        assert_eq!(p.w.len(), 33);
        assert_eq!(p.x_next.len(), 5);
        assert_eq!(p.x_next[0], p.x[32]);
    }

    #[test]
    fn additive_drift_is_exact() {
        let p = simulate_path(&DiffusionModel::bm_drift(), 4, 1, 9).unwrap();
        for t in 0..=4 {
            assert!((p.x[t] - (p.w[t] + t as f64 * p.fine_dt)).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        let m = DiffusionModel::bm();
        assert_eq!(simulate_path(&m, 6, 4, 0), Err(Error::ObservationCount(6)));
        assert_eq!(simulate_path(&m, 1, 4, 0), Err(Error::ObservationCount(1)));
        assert!(simulate_path(&m, 4, 0, 0).is_err());
    }

    #[test]
    fn domain_exit_names_the_index() {
        let m = DiffusionModel::bm_drift().with_domain(-0.05, 0.05);
        match simulate_path(&m, 64, 16, 1) {
            Err(Error::DomainExit { index, .. }) => assert!(index >= 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn area_terms_have_their_joint_law() {
        let (n, k) = (64usize, 16usize);
        let dt = 1.0 / (n * k) as f64;
        let mut dw = Vec::new();
        let mut dz = Vec::new();
        for seed in 0..40 {
            let p = simulate_path(&DiffusionModel::bm(), n, k, seed).unwrap();
            dw.extend(p.dw);
            dz.extend(p.dz);
        }
        let cov = mc::covariance(&dw, &dz) / (dt * dt / 2.0);
        let var = mc::variance(&dz) / (dt * dt * dt / 3.0);
        let r = dw.len() as f64;
        assert!((cov - 1.0).abs() < 4.0 * (2.0 / r).sqrt() * 1.5, "{cov}");
        assert!((var - 1.0).abs() < 4.0 * (2.0 / r).sqrt(), "{var}");
    }

    #[test]
    fn linear_drift_matches_exact_mean() {
        // dX = -X/2 dt + dW: E[X_1] = x0 e^{-1/2}; the scheme's one-step mean
        // factor is 1 - dt/2 + dt^2/8.
        let m = DiffusionModel::from_fns(
            "ou",
            std::sync::Arc::new(|_| [1.0, 0.0, 0.0, 0.0, 0.0]),
            std::sync::Arc::new(|x: f64| [-0.5 * x, -0.5, 0.0]),
            1.0,
            0.5,
        )
        .unwrap();
        let p = simulate_with_increments(&m, 4, 4, &[0.0; 20], &[0.0; 20]).unwrap();
        let dt: f64 = 1.0 / 16.0;
        let factor = 1.0 - 0.5 * dt + dt * dt / 8.0;
        assert!((p.x[16] - factor.powi(16)).abs() < 1e-14);
        assert!((p.x[16] - (-0.5f64).exp()).abs() < 1e-4);
    }

    #[test]
    fn same_seed_gives_identical_path() {
        let m = DiffusionModel::tanh_vol();
        assert_eq!(simulate_path(&m, 32, 8, 5).unwrap(), simulate_path(&m, 32, 8, 5).unwrap());
        assert_ne!(simulate_path(&m, 32, 8, 5).unwrap().x, simulate_path(&m, 32, 8, 6).unwrap().x);
    }

    #[test]
    fn terminal_mean_is_stable_under_step_halving() {
        let m = DiffusionModel::tanh_vol();
        let reps = 10_000;
        let run = |k: usize| {
            mc::par_map(reps, |r| {
                let p = simulate_path(&m, 256, k, crate::rng::stream_seed(1, r as u64)).unwrap();
                *p.x.last().unwrap()
            })
        };
        let (a, b) = (run(8), run(16));
        let diff: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u - v).collect();
        let (d, se) = mc::mean_se(&diff);
        let se_a = mc::mean_se(&a).1;
        assert!(d.abs() < 3.0 * se.max(1e-3 * se_a), "{d} vs se {se}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn constant_volatility_is_pathwise_exact(sigma in 0.2f64..3.0, seed in 0u64..1000) {
            let m = DiffusionModel::constant(sigma).unwrap().with_domain(-1e6, 1e6);
            let p = simulate_path(&m, 16, 4, seed).unwrap();
            for (x, w) in p.x.iter().zip(&p.w) {
                prop_assert!((x - sigma * w).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }
}
