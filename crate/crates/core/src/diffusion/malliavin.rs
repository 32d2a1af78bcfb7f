//! First and diagonal second Malliavin derivatives along a simulated path.

use super::model::DiffusionModel;
use super::path::SimulatedPath;
use crate::error::{Error, Result};

/// `D_s X_t = Y_t / Y_s * b1(X_s)` for fine indices `s <= t`, zero for `s > t`.
pub fn malliavin_derivative(path: &SimulatedPath, model: &DiffusionModel, s: usize, t: usize) -> Result<f64> {
    check_index(path, t.max(s))?;
    if s > t {
        return Ok(0.0);
    }
    let ys = path.y[s];
    if ys == 0.0 {
        return Err(Error::DegenerateVariation(s));
    }
    Ok(path.y[t] / ys * model.b1(path.x[s]))
}

/// `D_s D_s X_t`, the diagonal limit `r -> s` of `D_r D_s X_t`, by Euler
/// integration of its linear equation with the stored increments.
pub fn second_malliavin_diag(path: &SimulatedPath, model: &DiffusionModel, s: usize, t: usize) -> Result<f64> {
    check_index(path, t.max(s))?;
    if s > t {
        return Ok(0.0);
    }
    Ok(*second_malliavin_row(path, model, s)?.get(t - s).expect("row covers t"))
}

/// `D_s D_s X_t` for every fine index `t = s..=nK`, in order.
pub fn second_malliavin_row(path: &SimulatedPath, model: &DiffusionModel, s: usize) -> Result<Vec<f64>> {
    check_index(path, s)?;
    let ys = path.y[s];
    if ys == 0.0 {
        return Err(Error::DegenerateVariation(s));
    }
    let dt = path.fine_dt;
    let c = model.coefficients(path.x[s]);
    let kappa = c.b1 / ys;
    let mut z = c.d1_b1 * c.b1;
    let mut out = Vec::with_capacity(path.len() - s + 1);
    out.push(z);
    for k in s..path.len() {
        let xk = path.x[k];
        let a = model.b1_jet(xk);
        let b = model.b2_jet(xk);
        let dw = path.dw[k];
        let d = path.y[k] * kappa;
        z = z * (1.0 + b[1] * dt + a[1] * dw) + d * d * (b[2] * dt + a[2] * dw);
        out.push(z);
    }
    Ok(out)
}

fn check_index(path: &SimulatedPath, i: usize) -> Result<()> {
    if i > path.len() {
        return Err(Error::InvalidArgument(format!("fine index {i} beyond grid end {}", path.len())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::path::simulate_path;
    use std::sync::Arc;

    #[test]
    fn brownian_derivatives() {
        let m = DiffusionModel::bm();
        let p = simulate_path(&m, 8, 4, 1).unwrap();
        for s in [0, 5, 17] {
            for t in s..=32 {
                assert_eq!(malliavin_derivative(&p, &m, s, t).unwrap(), 1.0);
                assert_eq!(second_malliavin_diag(&p, &m, s, t).unwrap(), 0.0);
            }
        }
        assert_eq!(malliavin_derivative(&p, &m, 9, 3).unwrap(), 0.0);
    }

    #[test]
    fn linear_drift_has_zero_second_derivative() {
        let m = DiffusionModel::from_fns(
            "ou",
            Arc::new(|_| [1.0, 0.0, 0.0, 0.0, 0.0]),
            Arc::new(|x: f64| [x, 1.0, 0.0]),
            0.0,
            1.0,
        )
        .unwrap();
        let p = simulate_path(&m, 16, 8, 2).unwrap();
        let row = second_malliavin_row(&p, &m, 20).unwrap();
        assert!(row.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn diagonal_value_is_volatility() {
        let m = DiffusionModel::tanh_vol();
        let p = simulate_path(&m, 32, 8, 4).unwrap();
        for s in [0, 40, 255, 256] {
            let d = malliavin_derivative(&p, &m, s, s).unwrap();
            assert!((d - m.b1(p.x[s])).abs() < 1e-15);
            let dd = second_malliavin_diag(&p, &m, s, s).unwrap();
            let c = m.coefficients(p.x[s]);
            assert_eq!(dd, c.d1_b1 * c.b1);
        }
    }

    #[test]
    fn flow_identity_holds_to_machine_precision() {
        let m = DiffusionModel::tanh_vol();
        let p = simulate_path(&m, 32, 8, 4).unwrap();
        for (s, t) in [(0, 256), (17, 100), (64, 200)] {
            let d = malliavin_derivative(&p, &m, s, t).unwrap();
            let lhs = d * p.y[s];
            let rhs = p.y[t] * m.b1(p.x[s]);
            assert!((lhs - rhs).abs() <= 1e-14 * rhs.abs());
        }
    }
}
