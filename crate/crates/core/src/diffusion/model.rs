//! Scalar diffusion `dX = b1(X) dW + b2(X) dt` with coefficient derivatives.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::expr::Expr;
use crate::error::{Error, Result};

/// `x -> [b1, b1', b1'', b1''', b1'''']`.
pub type B1Fn = Arc<dyn Fn(f64) -> [f64; 5] + Send + Sync>;
/// `x -> [b2, b2', b2'']`.
pub type B2Fn = Arc<dyn Fn(f64) -> [f64; 3] + Send + Sync>;

/// Serializable description of a model, as used in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum ModelSpec {
    Bm,
    BmDrift,
    TanhVol,
    Constant { sigma: f64 },
    LinearVol { eps: f64 },
    Custom { b1: String, b2: String, x0: f64 },
}

impl ModelSpec {
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "bm" => ModelSpec::Bm,
            "bm-drift" => ModelSpec::BmDrift,
            "tanh-vol" => ModelSpec::TanhVol,
            other => {
                return Err(Error::Config(format!(
                    "unknown model '{other}' (expected bm, bm-drift, tanh-vol or custom)"
                )))
            }
        })
    }

    pub fn build(&self) -> Result<DiffusionModel> {
        Ok(match self {
            ModelSpec::Bm => DiffusionModel::bm(),
            ModelSpec::BmDrift => DiffusionModel::bm_drift(),
            ModelSpec::TanhVol => DiffusionModel::tanh_vol(),
            ModelSpec::Constant { sigma } => DiffusionModel::constant(*sigma)?,
            ModelSpec::LinearVol { eps } => DiffusionModel::linear_vol(*eps),
            ModelSpec::Custom { b1, b2, x0 } => DiffusionModel::custom(b1, b2, *x0)?,
        })
    }

    pub fn label(&self) -> String {
        match self {
            ModelSpec::Bm => "bm".into(),
            ModelSpec::BmDrift => "bm-drift".into(),
            ModelSpec::TanhVol => "tanh-vol".into(),
            ModelSpec::Constant { sigma } => format!("constant({sigma})"),
            ModelSpec::LinearVol { eps } => format!("linear-vol({eps})"),
            ModelSpec::Custom { b1, b2, x0 } => format!("custom(b1={b1}; b2={b2}; x0={x0})"),
        }
    }
}

/// Coefficients and their derivatives at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub b1: f64,
    pub d1_b1: f64,
    pub d2_b1: f64,
    pub b2: f64,
    pub d1_b2: f64,
    pub d2_b2: f64,
}

impl Coefficients {
    /// Ito coefficients of the processes `b1(X)`, `b2(X)` and `b11(X)`.
    pub fn derived(&self) -> DerivedCoefficients {
        let b1 = self.b1;
        DerivedCoefficients {
            b11: self.d1_b1 * b1,
            b12: self.d1_b1 * self.b2 + 0.5 * self.d2_b1 * b1 * b1,
            b21: self.d1_b2 * b1,
            b111: (self.d2_b1 * b1 + self.d1_b1 * self.d1_b1) * b1,
        }
    }

    /// `(b2, b1, b21, b12, b11, b111)`, the argument order of the g-functions.
    pub fn g_args(&self) -> [f64; 6] {
        let d = self.derived();
        [self.b2, self.b1, d.b21, d.b12, d.b11, d.b111]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedCoefficients {
    pub b11: f64,
    pub b12: f64,
    pub b21: f64,
    pub b111: f64,
}

#[derive(Clone)]
pub struct DiffusionModel {
    pub spec: ModelSpec,
    b1: B1Fn,
    b2: B2Fn,
    pub x0: f64,
    /// Lower bound for `|b1|` on `domain`.
    pub lower_bound: f64,
    pub domain: (f64, f64),
    /// Whether some derivative of `b1` is nonzero at `x0`; recorded only.
    pub nondegenerate_at_x0: bool,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("spec", &self.spec)
            .field("x0", &self.x0)
            .field("lower_bound", &self.lower_bound)
            .field("domain", &self.domain)
            .finish()
    }
}

impl DiffusionModel {
    pub fn new(spec: ModelSpec, b1: B1Fn, b2: B2Fn, x0: f64, lower_bound: f64) -> Result<Self> {
        if !x0.is_finite() {
            return Err(Error::InvalidArgument(format!("x0 = {x0} must be finite")));
        }
        if !(lower_bound > 0.0) {
            return Err(Error::InvalidArgument(format!("lower bound {lower_bound} must be positive")));
        }
        let j = b1(x0);
        let nondegenerate_at_x0 = j[1..].iter().any(|v| *v != 0.0);
        let model = Self {
            spec,
            b1,
            b2,
            x0,
            lower_bound,
            domain: (x0 - 10.0, x0 + 10.0),
            nondegenerate_at_x0,
        };
        model.check_state(x0, 0)?;
        Ok(model)
    }

    pub fn with_x0(&self, x0: f64) -> Self {
        let shift = x0 - self.x0;
        Self {
            x0,
            domain: (self.domain.0 + shift, self.domain.1 + shift),
            ..self.clone()
        }
    }

    pub fn with_domain(mut self, lo: f64, hi: f64) -> Self {
        self.domain = (lo, hi);
        self
    }

    pub fn with_lower_bound(mut self, bound: f64) -> Self {
        self.lower_bound = bound;
        self
    }

    /// `b1 = 1`, `b2 = 0`, `x0 = 0`.
    pub fn bm() -> Self {
        Self::new(ModelSpec::Bm, Arc::new(|_| [1.0, 0.0, 0.0, 0.0, 0.0]), Arc::new(|_| [0.0; 3]), 0.0, 1.0)
            .expect("valid preset")
    }

    /// `b1 = 1`, `b2 = 1`, `x0 = 0`.
    pub fn bm_drift() -> Self {
        Self::new(
            ModelSpec::BmDrift,
            Arc::new(|_| [1.0, 0.0, 0.0, 0.0, 0.0]),
            Arc::new(|_| [1.0, 0.0, 0.0]),
            0.0,
            1.0,
        )
        .expect("valid preset")
    }

    /// `b1 = sigma`, `b2 = 0`, `x0 = 0`.
    pub fn constant(sigma: f64) -> Result<Self> {
        Self::new(
            ModelSpec::Constant { sigma },
            Arc::new(move |_| [sigma, 0.0, 0.0, 0.0, 0.0]),
            Arc::new(|_| [0.0; 3]),
            0.0,
            sigma.abs(),
        )
    }

    /// `b1 = 1 + tanh(x) / 4`, `b2 = -x / 2`, `x0 = 0.3`.
    pub fn tanh_vol() -> Self {
        Self::new(
            ModelSpec::TanhVol,
            Arc::new(|x: f64| {
                let t = x.tanh();
                let s = 1.0 - t * t;
                [
                    1.0 + 0.25 * t,
                    0.25 * s,
                    -0.5 * t * s,
                    0.25 * (-2.0 * s * s + 4.0 * t * t * s),
                    0.25 * (16.0 * t * s * s - 8.0 * t * t * t * s),
                ]
            }),
            Arc::new(|x: f64| [-0.5 * x, -0.5, 0.0]),
            0.3,
            0.75,
        )
        .expect("valid preset")
    }

    /// `b1 = 1 + eps x`, `b2 = 0`, `x0 = 0`, domain `[-5, 5]` (for `|eps| <= 0.1`).
    pub fn linear_vol(eps: f64) -> Self {
        let lower = (1.0 - 5.0 * eps.abs()).max(1e-3);
        Self::new(
            ModelSpec::LinearVol { eps },
            Arc::new(move |x: f64| [1.0 + eps * x, eps, 0.0, 0.0, 0.0]),
            Arc::new(|_| [0.0; 3]),
            0.0,
            lower,
        )
        .expect("valid preset")
        .with_domain(-5.0, 5.0)
    }

    /// Coefficients given as expressions in `x`.
    pub fn custom(b1_src: &str, b2_src: &str, x0: f64) -> Result<Self> {
        let e1 = Arc::new(Expr::parse(b1_src)?);
        let e2 = Arc::new(Expr::parse(b2_src)?);
        let b1 = {
            let e1 = e1.clone();
            Arc::new(move |x: f64| e1.derivatives(x)) as B1Fn
        };
        let b2 = Arc::new(move |x: f64| {
            let d = e2.derivatives(x);
            [d[0], d[1], d[2]]
        }) as B2Fn;
        let start = e1.derivatives(x0)[0].abs();
        if !(start > 0.0) {
            return Err(Error::DegenerateVolatility { x: x0, value: start, bound: 0.0 });
        }
        // Default bound: half of |b1(x0)|; tighten with `with_lower_bound`.
        Self::new(
            ModelSpec::Custom { b1: b1_src.into(), b2: b2_src.into(), x0 },
            b1,
            b2,
            x0,
            0.5 * start,
        )
    }

    /// Builds a custom model with an explicit bound and domain.
    pub fn custom_with(b1: &str, b2: &str, x0: f64, lower_bound: f64, domain: (f64, f64)) -> Result<Self> {
        Ok(Self::custom(b1, b2, x0)?.with_lower_bound(lower_bound).with_domain(domain.0, domain.1))
    }

    /// Builds `x -> (b1, b2)` from arbitrary closures.
    pub fn from_fns(label: &str, b1: B1Fn, b2: B2Fn, x0: f64, lower_bound: f64) -> Result<Self> {
        Self::new(
            ModelSpec::Custom { b1: label.into(), b2: String::new(), x0 },
            b1,
            b2,
            x0,
            lower_bound,
        )
    }

    #[inline]
    pub fn b1_jet(&self, x: f64) -> [f64; 5] {
        (self.b1)(x)
    }

    #[inline]
    pub fn b2_jet(&self, x: f64) -> [f64; 3] {
        (self.b2)(x)
    }

    #[inline]
    pub fn b1(&self, x: f64) -> f64 {
        (self.b1)(x)[0]
    }

    #[inline]
    pub fn coefficients(&self, x: f64) -> Coefficients {
        let a = (self.b1)(x);
        let b = (self.b2)(x);
        Coefficients { b1: a[0], d1_b1: a[1], d2_b1: a[2], b2: b[0], d1_b2: b[1], d2_b2: b[2] }
    }

    pub fn derived(&self, x: f64) -> DerivedCoefficients {
        self.coefficients(x).derived()
    }

    /// Domain membership and the `|b1| >= lower_bound` assertion.
    #[inline]
    pub fn check_state(&self, x: f64, index: usize) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::SimulationDiverged { index, value: x });
        }
        if x < self.domain.0 || x > self.domain.1 {
            return Err(Error::DomainExit { index, value: x, lo: self.domain.0, hi: self.domain.1 });
        }
        let v = (self.b1)(x)[0].abs();
        if v < self.lower_bound {
            return Err(Error::DegenerateVolatility { x, value: v, bound: self.lower_bound });
        }
        Ok(())
    }

    /// Compares the supplied derivatives with central differences on a grid
    /// of `points` states across the domain. Returns the worst relative error.
    pub fn validate_derivatives(&self, points: usize, rtol: f64) -> Result<f64> {
        let (lo, hi) = self.domain;
        let h = 1e-4 * (hi - lo).max(1.0);
        let mut worst: f64 = 0.0;
        for i in 0..points {
            let x = lo + (hi - lo) * (i as f64 + 0.5) / points as f64;
            let (a, am, ap) = (self.b1_jet(x), self.b1_jet(x - h), self.b1_jet(x + h));
            let (b, bm, bp) = (self.b2_jet(x), self.b2_jet(x - h), self.b2_jet(x + h));
            let mut pairs: Vec<(f64, f64)> = (0..4).map(|k| (a[k + 1], (ap[k] - am[k]) / (2.0 * h))).collect();
            pairs.extend((0..2).map(|k| (b[k + 1], (bp[k] - bm[k]) / (2.0 * h))));
            for (supplied, fd) in pairs {
                let scale = supplied.abs().max(fd.abs()).max(1.0);
                let err = (supplied - fd).abs() / scale;
                worst = worst.max(err);
                if err > rtol {
                    return Err(Error::Contract(format!(
                        "derivative mismatch at x = {x}: supplied {supplied}, finite difference {fd}"
                    )));
                }
            }
        }
        Ok(worst)
    }
}
