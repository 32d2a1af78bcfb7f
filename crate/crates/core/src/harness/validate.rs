//! The acceptance checks, each reduced to a pass/fail verdict with the
//! measured quantities that decided it.

use std::collections::BTreeMap;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};

use super::config::{Analyses, ExperimentConfig};
use super::run::{run_experiment, EdgeworthReport, NSummary};
use crate::density::{q_polynomials, StudentizedExpansion};
use crate::diffusion::{
    malliavin_derivative, second_malliavin_diag, simulate_path, taylor_step, DiffusionModel, ModelSpec, SimulatedPath,
};
use crate::error::{Error, Result};
use crate::gaussian::{gamma_constants, CenteredFunction, GammaConstants, GaussQuadrature, PowerSpec};
use crate::mc;
use crate::rng::{stream_seed, Stream};
use crate::symbols::symbols;

/// Number of standard errors allowed for Monte Carlo comparisons.
pub const SE_MULTIPLIER: f64 = 3.0;
/// Covariance entries: relative or absolute tolerance, whichever is larger.
pub const COVARIANCE_RTOL: f64 = 0.05;
pub const COVARIANCE_ATOL: f64 = 0.02;
pub const DENSITY_MASS_TOL: f64 = 1e-8;
pub const BASELINE_RATIO_RANGE: (f64, f64) = (1.2, 3.0);
pub const Q_POLY_TOL: f64 = 1e-7;
pub const FIRST_DERIVATIVE_RTOL: f64 = 1e-3;
pub const SECOND_DERIVATIVE_RTOL: f64 = 5e-3;
/// Step of the central differences in the initial condition.
pub const FLOW_FD_STEP: f64 = 1e-4;
pub const Q_POLY_POINTS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// The budgets named in the acceptance criteria.
    Full,
    /// Reduced budgets for smoke runs.
    Quick,
}

struct Budget {
    gamma_reps: usize,
    residual_n: [usize; 3],
    residual_reps: usize,
    clt_n: usize,
    clt_reps: usize,
    density_n: (usize, usize),
    density_reps: usize,
    constant_seeds: u64,
    malliavin_seeds: u64,
    lln_n: usize,
    lln_reps: usize,
}

impl Scale {
    fn budget(self) -> Budget {
        match self {
            Scale::Full => Budget {
                gamma_reps: 100_000,
                residual_n: [64, 256, 1024],
                residual_reps: 10_000,
                clt_n: 1024,
                clt_reps: 10_000,
                density_n: (256, 1024),
                density_reps: 100_000,
                constant_seeds: 20,
                malliavin_seeds: 10,
                lln_n: 4096,
                lln_reps: 400,
            },
            Scale::Quick => Budget {
                gamma_reps: 20_000,
                residual_n: [32, 128, 512],
                residual_reps: 1_000,
                clt_n: 512,
                clt_reps: 3_000,
                density_n: (64, 256),
                density_reps: 10_000,
                constant_seeds: 5,
                malliavin_seeds: 3,
                lln_n: 1024,
                lln_reps: 100,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub title: String,
    pub pass: bool,
    pub metrics: BTreeMap<String, f64>,
    pub detail: String,
}

impl CriterionResult {
    fn new(id: u8, title: &str) -> Self {
        Self { id, title: title.into(), pass: true, metrics: BTreeMap::new(), detail: String::new() }
    }

    fn metric(&mut self, name: impl Into<String>, v: f64) {
        self.metrics.insert(name.into(), v);
    }

    /// Records a sub-check; the criterion fails if any sub-check fails.
    fn check(&mut self, ok: bool, what: impl AsRef<str>) {
        if !ok {
            self.pass = false;
            if !self.detail.is_empty() {
                self.detail.push_str("; ");
            }
            self.detail.push_str(what.as_ref());
        }
    }

    pub fn line(&self) -> String {
        format!("criterion {:>2}: {} {}", self.id, if self.pass { "PASS" } else { "FAIL" }, self.title)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub version: String,
    pub scale: Scale,
    pub seed: u64,
    pub criteria: Vec<CriterionResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("validation scale={:?} seed={} version={}\n", self.scale, self.seed, self.version);
        for c in &self.criteria {
            out.push_str(&c.line());
            out.push('\n');
            for (k, v) in &c.metrics {
                out.push_str(&format!("    {k} = {v:.9e}\n"));
            }
            if !c.detail.is_empty() {
                out.push_str(&format!("    failed: {}\n", c.detail));
            }
        }
        let passed = self.criteria.iter().filter(|c| c.pass).count();
        out.push_str(&format!("{passed}/{} criteria passed\n", self.criteria.len()));
        out
    }
}

pub const CRITERIA: [(u8, &str); 10] = [
    (1, "quadratic universal constants"),
    (2, "third-cumulant identity"),
    (3, "stochastic expansion order"),
    (4, "joint stable limit covariance"),
    (5, "anticipative symbol vanishes for constant volatility"),
    (6, "studentized density"),
    (7, "q-polynomial table"),
    (8, "Malliavin derivative solvers"),
    (9, "law of large numbers for path functionals"),
    (10, "reproducibility across worker counts"),
];

/// Runs every criterion on a pool of `workers` threads (0 = default).
pub fn validate(scale: Scale, seed: u64, workers: usize) -> ValidationReport {
    let ids: Vec<u8> = CRITERIA.iter().map(|c| c.0).collect();
    validate_only(scale, seed, workers, &ids)
}

/// Runs the listed criteria in the given order.
pub fn validate_only(scale: Scale, seed: u64, workers: usize, ids: &[u8]) -> ValidationReport {
    let criteria = mc::with_workers(workers, || ids.iter().map(|&id| criterion(id, scale, seed)).collect());
    ValidationReport { version: env!("CARGO_PKG_VERSION").into(), scale, seed, criteria }
}

/// Evaluates one criterion; internal errors count as failures.
pub fn criterion(id: u8, scale: Scale, seed: u64) -> CriterionResult {
    let title = CRITERIA.iter().find(|c| c.0 == id).map_or("unknown criterion", |c| c.1);
    let mut r = CriterionResult::new(id, title);
    let b = scale.budget();
    let seed = stream_seed(seed, id as u64);
    let outcome = match id {
        1 => quadratic_constants(&mut r, &b, seed),
        2 => third_cumulant(&mut r, &b, seed),
        3 => expansion_order(&mut r, &b, seed),
        4 => joint_covariance(&mut r, &b, seed),
        5 => constant_volatility_symbols(&mut r, &b, seed),
        6 => studentized_density(&mut r, &b, seed),
        7 => q_table(&mut r, seed),
        8 => malliavin_solvers(&mut r, &b, seed),
        9 => lln_functionals(&mut r, &b, seed),
        10 => reproducibility(&mut r, seed),
        _ => Err(Error::InvalidArgument(format!("no criterion {id}"))),
    };
    if let Err(e) = outcome {
        r.check(false, format!("error: {e}"));
    }
    r
}

fn within_se(value: f64, target: f64, se: f64) -> bool {
    (value - target).abs() <= SE_MULTIPLIER * se
}

fn tanh_config(n: Vec<usize>, reps: usize, seed: u64, analyses: Analyses) -> ExperimentConfig {
    ExperimentConfig { model: ModelSpec::TanhVol, p: 2.0, n, reps, seed, analyses, ..Default::default() }
}

fn summary(report: &EdgeworthReport, i: usize) -> &NSummary {
    &report.per_n[i]
}

fn quadratic_constants(r: &mut CriterionResult, b: &Budget, seed: u64) -> Result<()> {
    let g = gamma_constants(&CenteredFunction::Hermite { k: 2 }, b.gamma_reps, seed)?;
    let exact = GammaConstants::quadratic();
    r.metric("gamma1", g.gamma1);
    r.metric("gamma1_se", g.gamma1_se);
    r.metric("gamma2", g.gamma2);
    r.metric("gamma2_se", g.gamma2_se);
    r.check(within_se(g.gamma1, exact.gamma1, g.gamma1_se), "gamma1 outside 3 SE of 16/3");
    r.check(within_se(g.gamma2, exact.gamma2, g.gamma2_se), "gamma2 outside 3 SE of 8/3");
    Ok(())
}

fn third_cumulant(r: &mut CriterionResult, b: &Budget, seed: u64) -> Result<()> {
    for k in [2usize, 4] {
        let f = CenteredFunction::Hermite { k };
        let g = gamma_constants(&f, b.gamma_reps, stream_seed(seed, k as u64))?;
        let brute = GaussQuadrature::new(64).expect(|x| f.value(x).powi(3));
        r.metric(format!("h{k}_kappa3"), g.kappa3);
        r.metric(format!("h{k}_kappa3_se"), g.kappa3_se);
        r.metric(format!("h{k}_third_moment"), brute);
        r.check(within_se(g.kappa3, brute, g.kappa3_se), format!("H{k}: kappa3 outside 3 SE of E[f^3]"));
    }
    r.check((r.metrics["h2_third_moment"] - 8.0).abs() < 1e-10, "E[H2^3] quadrature differs from 8");
    Ok(())
}

fn expansion_order(r: &mut CriterionResult, b: &Budget, seed: u64) -> Result<()> {
    let analyses = Analyses { studentized: false, ..Analyses::default() };
    let report = run_experiment(&tanh_config(b.residual_n.to_vec(), b.residual_reps, seed, analyses))?;
    let l2: Vec<f64> = report.per_n.iter().map(|s| s.residual_l2.map_or(f64::NAN, |e| e.value)).collect();
    for (s, v) in report.per_n.iter().zip(&l2) {
        r.metric(format!("residual_l2_n{}", s.n), *v);
        r.metric(format!("residual_l2_se_n{}", s.n), s.residual_l2.map_or(f64::NAN, |e| e.se));
    }
    r.metric("log_slope", report.residual_slope.unwrap_or(f64::NAN));
    r.check(l2.windows(2).all(|w| w[1] < w[0]), "residual norm does not strictly decrease");
    Ok(())
}

fn joint_covariance(r: &mut CriterionResult, b: &Budget, seed: u64) -> Result<()> {
    let analyses = Analyses { clt: true, studentized: false, ..Analyses::default() };
    let report = run_experiment(&tanh_config(vec![b.clt_n], b.clt_reps, seed, analyses))?;
    let s = summary(&report, 0);
    let clt = s.clt.as_ref().ok_or_else(|| Error::Contract("covariance summary missing".into()))?;
    for (i, j) in [(0, 0), (0, 1), (1, 1), (2, 2)] {
        let (emp, xi) = (clt.empirical[i][j].value, clt.xi_mean[i][j].value);
        r.metric(format!("cov{}{}", i + 1, j + 1), emp);
        r.metric(format!("xi{}{}", i + 1, j + 1), xi);
        let tol = (COVARIANCE_RTOL * xi.abs()).max(COVARIANCE_ATOL);
        r.check((emp - xi).abs() <= tol, format!("entry {}{} off by more than {tol:.3e}", i + 1, j + 1));
    }
    for (i, j) in [(0, 2), (1, 2)] {
        let e = clt.empirical[i][j];
        r.metric(format!("cov{}{}", i + 1, j + 1), e.value);
        r.metric(format!("cov{}{}_se", i + 1, j + 1), e.se);
        r.check(within_se(e.value, 0.0, e.se), format!("entry {}{} not within 3 SE of 0", i + 1, j + 1));
    }
    r.metric("mean_n", clt.n_total.value);
    r.metric("mean_mu3", clt.mu3.value);
    r.metric("mean_n_minus_mu3", clt.n_minus_mu3.value);
    r.metric("mean_n_minus_mu3_se", clt.n_minus_mu3.se);
    r.check(within_se(clt.n_minus_mu3.value, 0.0, clt.n_minus_mu3.se), "mean of N_n differs from mean mu3");
    Ok(())
}

fn constant_volatility_symbols(r: &mut CriterionResult, b: &Budget, seed: u64) -> Result<()> {
    let mut checked = 0usize;
    let mut nonzero = 0usize;
    for p in [2.0, 4.0] {
        let spec = PowerSpec::new(p)?;
        let gammas = if p == 2.0 {
            GammaConstants::quadratic()
        } else {
            gamma_constants(&CenteredFunction::power(spec), 2_000, seed)?
        };
        for sigma in [0.5, 1.0, 2.5] {
            let model = DiffusionModel::constant(sigma)?.with_domain(-1e6, 1e6);
            for s in 0..b.constant_seeds {
                let path = simulate_path(&model, 64, 16, stream_seed(seed, s))?;
                let sym = symbols(&path, &model, spec, &gammas)?;
                checked += 1;
                if sym.h4 != 0.0 || sym.h5 != 0.0 {
                    nonzero += 1;
                }
            }
        }
    }
    r.metric("paths", checked as f64);
    r.metric("nonzero", nonzero as f64);
    r.check(nonzero == 0, "H4 or H5 nonzero on some path");
    Ok(())
}

/// Composite Gauss–Legendre on `[-40, 40]` with unit panels.
fn total_mass(e: &StudentizedExpansion, dn: f64) -> f64 {
    let gl = GaussLegendre::new(NonZeroUsize::new(30).expect("nonzero"));
    (-40..40).map(|i| gl.integrate(i as f64, i as f64 + 1.0, |y| e.density(dn, y))).sum()
}

fn studentized_density(r: &mut CriterionResult, b: &Budget, seed: u64) -> Result<()> {
    let (n0, n1) = b.density_n;
    let dens = Analyses { density: true, expansion: false, ..Analyses::default() };
    let near = run_experiment(&tanh_config(vec![n0], b.density_reps, seed, dens))?;
    let base = Analyses { expansion: false, ..Analyses::default() };
    let far = run_experiment(&tanh_config(vec![n1], b.density_reps, stream_seed(seed, 1), base))?;
    let (s0, s1) = (summary(&near, 0), summary(&far, 0));
    let d = s0.density.as_ref().ok_or_else(|| Error::Contract("density summary missing".into()))?;
    let fitted = StudentizedExpansion { a: d.a, b: d.b };
    r.metric("coef_a", d.a);
    r.metric("coef_b", d.b);

    let mut worst = 0.0f64;
    for e in [fitted, StudentizedExpansion { a: 1.4, b: -0.9 }, StudentizedExpansion { a: -3.0, b: 2.0 }] {
        for dn in [1.0, 0.25, 1.0 / 64.0, 1.0 / 1024.0, 1e-6, 0.0] {
            worst = worst.max((total_mass(&e, dn) - 1.0).abs());
        }
    }
    r.metric("max_mass_error", worst);
    r.check(worst <= DENSITY_MASS_TOL, "density does not integrate to one");

    let m0 = s0.studentized.ok_or_else(|| Error::Contract("distribution metrics missing".into()))?;
    let m1 = s1.studentized.ok_or_else(|| Error::Contract("distribution metrics missing".into()))?;
    r.metric(format!("ks_normal_n{n0}"), m0.ks_normal.value);
    r.metric(format!("ks_normal_se_n{n0}"), m0.ks_normal.se);
    r.metric(format!("ks_corrected_n{n0}"), m0.ks_corrected.value);
    r.metric(format!("ks_corrected_se_n{n0}"), m0.ks_corrected.se);
    r.metric(format!("iae_normal_n{n0}"), m0.iae_normal.value);
    r.metric(format!("iae_corrected_n{n0}"), m0.iae_corrected.value);
    r.metric(format!("ks_normal_n{n1}"), m1.ks_normal.value);
    r.metric(format!("ks_normal_se_n{n1}"), m1.ks_normal.se);
    r.metric(format!("nonpositive_f_n_n{n0}"), s0.nonpositive_f_n as f64);
    r.metric(format!("nonpositive_f_n_n{n1}"), s1.nonpositive_f_n as f64);
    r.check(m0.ks_corrected.value < m0.ks_normal.value, "corrected CDF not closer than the normal");
    let ratio = m0.ks_normal.value / m1.ks_normal.value;
    r.metric("baseline_ratio", ratio);
    r.check(
        (BASELINE_RATIO_RANGE.0..=BASELINE_RATIO_RANGE.1).contains(&ratio),
        "baseline distance ratio outside [1.2, 3.0]",
    );
    Ok(())
}

/// `g(y) = sin(1.7 y) + 0.3 y^3` and its first two derivatives.
fn q_test_function(y: f64) -> [f64; 3] {
    [
        (1.7 * y).sin() + 0.3 * y.powi(3),
        1.7 * (1.7 * y).cos() + 0.9 * y * y,
        -2.89 * (1.7 * y).sin() + 1.8 * y,
    ]
}

/// Fourth-order central differences of `h` at `x`.
fn central_difference(h: impl Fn(f64) -> f64, x: f64, order: usize, step: f64) -> f64 {
    let (f1, f2, b1, b2) = (h(x + step), h(x + 2.0 * step), h(x - step), h(x - 2.0 * step));
    match order {
        1 => (8.0 * (f1 - b1) - (f2 - b2)) / (12.0 * step),
        _ => (-f2 + 16.0 * f1 - 30.0 * h(x) + 16.0 * b1 - b2) / (12.0 * step * step),
    }
}

fn q_table(r: &mut CriterionResult, seed: u64) -> Result<()> {
    let mut rng = Stream::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..Q_POLY_POINTS {
        let z = -3.0 + 6.0 * rng.uniform();
        let x = 0.5 + 2.5 * rng.uniform();
        let (y, s) = (z / x.sqrt(), 1.0 / x.sqrt());
        let g = q_test_function(y);
        for beta in 1..=2usize {
            let mut expanded = 0.0;
            for v in 0..=beta {
                expanded += q_polynomials(beta, v)?.eval(y, s) * g[v];
            }
            let step = if beta == 1 { 1e-3 } else { 2e-3 };
            let fd = central_difference(|xx| q_test_function(z / xx.sqrt())[0], x, beta, step);
            worst = worst.max((fd - expanded).abs() / expanded.abs().max(1.0));
        }
    }
    r.metric("points", Q_POLY_POINTS as f64);
    r.metric("max_error", worst);
    r.check(worst <= Q_POLY_TOL, "q-polynomial expansion disagrees with finite differences");
    Ok(())
}

/// `D_s X_t` by Milstein integration of the joint system `(X, D_s X)` from
/// `D_s X_s = b1(X_s)`, driven by the path's own increments.
fn direct_first_derivative(path: &SimulatedPath, model: &DiffusionModel, s: usize, t: usize) -> f64 {
    let dt = path.fine_dt;
    let mut u = model.b1(path.x[s]);
    for k in s..t {
        let c = model.coefficients(path.x[k]);
        let dw = path.dw[k];
        u *= 1.0 + c.d1_b2 * dt + c.d1_b1 * dw + 0.5 * (c.d1_b1 * c.d1_b1 + c.b1 * c.d2_b1) * (dw * dw - dt);
    }
    u
}

/// `D_s D_s X_t = Phi''(X_s) b1(X_s)^2 + Phi'(X_s) b1'(X_s) b1(X_s)`, where
/// `Phi` is the frozen-noise flow from `s` to `t`, differentiated by
/// central differences in its starting point. Also returns the sum of the
/// absolute values of the two terms, the scale for relative errors.
fn flow_second_derivative(path: &SimulatedPath, model: &DiffusionModel, s: usize, t: usize) -> (f64, f64) {
    let flow = |x0: f64| (s..t).fold(x0, |x, k| taylor_step(model, x, path.dw[k], path.dz[k], path.fine_dt));
    let (x, h) = (path.x[s], FLOW_FD_STEP);
    let (up, mid, down) = (flow(x + h), flow(x), flow(x - h));
    let d1 = (up - down) / (2.0 * h);
    let d2 = (up - 2.0 * mid + down) / (h * h);
    let c = model.coefficients(x);
    let (a, b) = (d2 * c.b1 * c.b1, d1 * c.d1_b1 * c.b1);
    (a + b, a.abs() + b.abs())
}

fn malliavin_solvers(r: &mut CriterionResult, b: &Budget, seed: u64) -> Result<()> {
    let model = DiffusionModel::tanh_vol();
    let (n, k) = (1024, 256);
    let total = n * k;
    let pairs = [(0, total / 2), (total / 4, total / 2), (total / 4, 3 * total / 4), (total / 2, total)];
    let (mut worst1, mut worst2) = (0.0f64, 0.0f64);
    for i in 0..b.malliavin_seeds {
        let path = simulate_path(&model, n, k, stream_seed(seed, i))?;
        for &(s, t) in &pairs {
            let ratio = malliavin_derivative(&path, &model, s, t)?;
            let direct = direct_first_derivative(&path, &model, s, t);
            worst1 = worst1.max(((ratio - direct) / direct).abs());
            let diag = second_malliavin_diag(&path, &model, s, t)?;
            let (oracle, scale) = flow_second_derivative(&path, &model, s, t);
            worst2 = worst2.max((diag - oracle).abs() / scale);
        }
    }
    r.metric("first_max_rel_error", worst1);
    r.metric("second_max_rel_error", worst2);
    r.check(worst1 <= FIRST_DERIVATIVE_RTOL, "first derivative disagrees with direct integration");
    r.check(worst2 <= SECOND_DERIVATIVE_RTOL, "second derivative disagrees with the flow oracle");
    Ok(())
}

fn lln_functionals(r: &mut CriterionResult, b: &Budget, seed: u64) -> Result<()> {
    let analyses = Analyses { lln: true, expansion: false, studentized: false, ..Analyses::default() };
    let cfg = ExperimentConfig { refine: 8, ..tanh_config(vec![b.lln_n], b.lln_reps, seed, analyses) };
    let report = run_experiment(&cfg)?;
    let l = summary(&report, 0).lln.clone().ok_or_else(|| Error::Contract("LLN summary missing".into()))?;
    r.metric("rho_sup", l.rho_sup.value);
    r.metric("cubic_error", l.cubic_error.value);
    r.metric("cubic_error_se", l.cubic_error.se);
    r.metric("sup_error", l.sup_error.value);
    r.metric("sup_error_se", l.sup_error.se);
    r.check(within_se(l.cubic_error.value, 0.0, l.cubic_error.se), "cubic functional error exceeds 3 SE");
    r.check(within_se(l.sup_error.value, 0.0, l.sup_error.se), "sup functional error exceeds 3 SE");
    Ok(())
}

/// Runs criteria 1 to 9 at the quick scale with one and with three workers.
fn reproducibility(r: &mut CriterionResult, seed: u64) -> Result<()> {
    let ids: Vec<u8> = (1..=9).collect();
    let one = validate_only(Scale::Quick, seed, 1, &ids).to_json();
    let three = validate_only(Scale::Quick, seed, 3, &ids).to_json();
    r.metric("report_bytes", one.len() as f64);
    r.check(one == three, "reports differ between worker counts");
    Ok(())
}
