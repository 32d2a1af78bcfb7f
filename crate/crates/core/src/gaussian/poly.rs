/// Dense univariate polynomial, coefficients in increasing degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn monomial(k: usize) -> Self {
        let mut c = vec![0.0; k + 1];
        c[k] = 1.0;
        Poly(c)
    }

    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly(vec![0.0]);
        }
        Poly(self.0.iter().enumerate().skip(1).map(|(k, &c)| k as f64 * c).collect())
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly(self.0.iter().map(|c| c * s).collect())
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.0.len().max(other.0.len());
        Poly((0..n)
            .map(|k| self.0.get(k).copied().unwrap_or(0.0) + other.0.get(k).copied().unwrap_or(0.0))
            .collect())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    /// The polynomial `y -> E[P(y + sqrt(tau) Z)]` for standard normal `Z`.
    pub fn heat(&self, tau: f64) -> Poly {
        // E[(y + s Z)^k] = sum_j C(k, 2j) y^(k-2j) s^(2j) (2j-1)!!
        let mut out = vec![0.0; self.0.len()];
        for (k, &c) in self.0.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let mut binom = 1.0;
            let mut dfact = 1.0;
            let mut tpow = 1.0;
            let mut j = 0;
            while 2 * j <= k {
                out[k - 2 * j] += c * binom * dfact * tpow;
                let m = (2 * j) as f64;
                let km = k as f64 - m;
                binom *= km * (km - 1.0) / ((m + 1.0) * (m + 2.0));
                dfact *= (2 * j + 1) as f64;
                tpow *= tau;
                j += 1;
            }
        }
        Poly(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_and_derivative() {
        let p = Poly(vec![1.0, -3.0, 0.0, 2.0]);
        assert_eq!(p.eval(2.0), 1.0 - 6.0 + 16.0);
        assert_eq!(p.derivative(), Poly(vec![-3.0, 0.0, 6.0]));
    }

    #[test]
    fn heat_of_cube() {
        // E[(y + sZ)^3] = y^3 + 3 y s^2
        let h = Poly::monomial(3).heat(0.5);
        assert!((h.eval(1.0) - (1.0 + 1.5)).abs() < 1e-14);
        assert!((h.eval(-2.0) - (-8.0 - 3.0)).abs() < 1e-14);
    }

    #[test]
    fn heat_of_sixth_power_at_zero() {
        // E[(sZ)^6] = 15 s^6
        let h = Poly::monomial(6).heat(2.0);
        assert!((h.eval(0.0) - 15.0 * 8.0).abs() < 1e-12);
    }
}
