//! Probabilists' Hermite polynomials.

use super::poly::Poly;

/// `He_k(x)` by the three-term recurrence.
pub fn hermite(k: usize, x: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, x);
    if k == 0 {
        return h0;
    }
    for j in 1..k {
        let h2 = x * h1 - j as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// `[He_0(x), ..., He_kmax(x)]`.
pub fn hermite_all(kmax: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(kmax + 1);
    out.push(1.0);
    if kmax >= 1 {
        out.push(x);
    }
    for j in 1..kmax {
        let next = x * out[j] - j as f64 * out[j - 1];
        out.push(next);
    }
    out
}

/// Monomial coefficients of `He_k`.
pub fn hermite_poly(k: usize) -> Poly {
    let mut h0 = Poly(vec![1.0]);
    if k == 0 {
        return h0;
    }
    let mut h1 = Poly(vec![0.0, 1.0]);
    let x = Poly(vec![0.0, 1.0]);
    for j in 1..k {
        let h2 = x.mul(&h1).add(&h0.scale(-(j as f64)));
        h0 = h1;
        h1 = h2;
    }
    h1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_orders() {
        assert_eq!(hermite(0, 1.7), 1.0);
        assert_eq!(hermite(3, 2.0), 2.0);
        assert_eq!(hermite(5, 1.0), 6.0);
        assert_eq!(hermite(2, 3.0), 8.0);
    }

    #[test]
    fn table_and_polynomial_agree_with_recurrence() {
        for &x in &[-2.3, -0.4, 0.0, 0.9, 3.1] {
            let all = hermite_all(10, x);
            for k in 0..=10 {
                let r = hermite(k, x);
                assert!((all[k] - r).abs() <= 1e-12 * r.abs().max(1.0));
                let p = hermite_poly(k).eval(x);
                assert!((p - r).abs() <= 1e-10 * r.abs().max(1.0));
            }
        }
    }

    #[test]
    fn derivative_identity() {
        // He_k' = k He_{k-1}
        for k in 1..9 {
            let d = hermite_poly(k).derivative();
            let e = hermite_poly(k - 1).scale(k as f64);
            for (a, b) in d.0.iter().zip(&e.0) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
