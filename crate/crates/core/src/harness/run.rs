//! Monte Carlo experiments: per-replication pipeline, deterministic
//! aggregation and artifact output.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::compare::{compare_distributions, DistributionMetrics};
use super::config::ExperimentConfig;
use crate::density::{silverman_bandwidth, Estimate, ScalarExpectations, StudentizedExpansion, SymbolRecord};
use crate::diffusion::{simulate_path, DiffusionModel, SimulatedPath};
use crate::error::{Error, Result};
use crate::gaussian::{gamma_constants, CenteredFunction, GammaConstants, PowerSpec};
use crate::mc;
use crate::rng::{stream_seed, Stream};
use crate::statistics::{
    expansion_terms, f_n_estimator, limit_c, limit_v, lln_functional, lln_limit_linear, martingale_term,
    power_variation, studentize, ExpansionTerms,
};
use crate::symbols::{symbols, SymbolCoefficients};

/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// Everything computed on one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replication {
    pub seed: u64,
    /// Second-order fields are NaN unless the expansion analysis ran.
    pub terms: ExpansionTerms,
    pub symbols: Option<SymbolCoefficients>,
    /// `[cubic functional, sup functional, int a ds]`.
    pub lln: Option<[f64; 3]>,
}

/// Components: `M_n`, `Delta^{-1/2}(F_n - C)`, `N_n - mu_3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltSummary {
    pub empirical: [[Estimate; 3]; 3],
    pub xi_mean: [[Estimate; 3]; 3],
    pub n_total: Estimate,
    pub mu3: Estimate,
    pub n_minus_mu3: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub expectations: ScalarExpectations,
    pub a: f64,
    pub b: f64,
    pub bandwidth: Option<f64>,
}

/// Errors of two path-dependent Riemann functionals with `a = b1(X)^2`:
/// `g = a w(1)^3` (limit 0) and `g = a max_j |w(j/K)|` (limit `rho_K int a`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlnSummary {
    pub rho_sup: Estimate,
    pub cubic_error: Estimate,
    pub sup_error: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NSummary {
    pub n: usize,
    pub reps: usize,
    pub completed: usize,
    pub failures: BTreeMap<String, usize>,
    pub nonpositive_f_n: usize,
    pub means: BTreeMap<String, Estimate>,
    /// `L^2` norm of the expansion residual divided by `Delta^{1/2}`.
    pub residual_l2: Option<Estimate>,
    /// Correlation of `M_n` between consecutive replications.
    pub lag1_corr_m: f64,
    pub clt: Option<CltSummary>,
    pub studentized: Option<DistributionMetrics>,
    pub density: Option<DensitySummary>,
    pub lln: Option<LlnSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeworthReport {
    pub version: String,
    pub model: String,
    /// The configuration with `workers` and `out` cleared.
    pub config: ExperimentConfig,
    pub seed_rule: String,
    pub gammas: Option<GammaConstants>,
    pub per_n: Vec<NSummary>,
    /// Least-squares slope of `log residual_l2` against `log n`.
    pub residual_slope: Option<f64>,
}

impl EdgeworthReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub struct NRows {
    pub n: usize,
    pub replications: Vec<Replication>,
}

pub struct ExperimentOutput {
    pub report: EdgeworthReport,
    pub rows: Vec<NRows>,
}

/// Runs the configured experiment and writes artifacts when `out` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<EdgeworthReport> {
    let output = run_experiment_rows(config)?;
    if let Some(dir) = &config.out {
        write_artifacts(&output, dir)?;
    }
    Ok(output.report)
}

/// Runs the experiment and keeps every completed replication.
pub fn run_experiment_rows(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    mc::with_workers(config.workers, || run_inner(config))
}

fn run_inner(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let model = config.model.build()?;
    let p = config.power()?;
    let a = config.analyses;
    let gammas = if a.needs_symbols() { Some(universal_constants(p, config)?) } else { None };
    let rho_sup = if a.lln { Some(sup_constant(config.refine, 100_000, stream_seed(config.seed, u64::MAX - 1))) } else { None };

    let mut per_n = Vec::new();
    let mut rows = Vec::new();
    for &n in &config.n {
        let results = mc::par_map(config.reps, |r| {
            let seed = stream_seed(config.seed, r as u64);
            replicate(&model, p, n, seed, config, gammas.as_ref())
        });
        let mut failures: BTreeMap<String, usize> = BTreeMap::new();
        let mut first = None;
        let mut reps = Vec::with_capacity(results.len());
        for res in results {
            match res {
                Ok(v) => reps.push(v),
                Err(e) => {
                    *failures.entry(e.kind().to_string()).or_default() += 1;
                    first.get_or_insert(e);
                }
            }
        }
        let failed = config.reps - reps.len();
        if failed as f64 > MAX_FAILURE_RATE * config.reps as f64 {
            return Err(Error::FailureThreshold {
                n,
                failed,
                reps: config.reps,
                first: first.map(|e| e.to_string()).unwrap_or_default(),
            });
        }
        per_n.push(summarize(n, config, &reps, failures, rho_sup)?);
        rows.push(NRows { n, replications: reps });
    }

    let pts: Vec<(f64, f64)> = per_n
        .iter()
        .filter_map(|s| s.residual_l2.map(|r| ((s.n as f64).ln(), r.value.ln())))
        .collect();
    let residual_slope = (pts.len() >= 2).then(|| {
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        mc::ols_slope(&x, &y)
    });

    let mut echoed = config.clone();
    echoed.workers = 0;
    echoed.out = None;
    Ok(ExperimentOutput {
        report: EdgeworthReport {
            version: env!("CARGO_PKG_VERSION").to_string(),
            model: config.model.label(),
            config: echoed,
            seed_rule: format!("replication r uses stream_seed({}, r)", config.seed),
            gammas,
            per_n,
            residual_slope,
        },
        rows,
    })
}

/// Closed form for `p = 2`, Monte Carlo otherwise.
pub fn universal_constants(p: PowerSpec, config: &ExperimentConfig) -> Result<GammaConstants> {
    if p.p == 2.0 {
        Ok(GammaConstants::quadratic())
    } else {
        gamma_constants(&CenteredFunction::power(p), config.gamma_reps, stream_seed(config.seed, u64::MAX))
    }
}

/// `E[max_{0 <= j <= K} |W(j / K)|]` by Monte Carlo.
pub fn sup_constant(k: usize, reps: usize, seed: u64) -> Estimate {
    let sd = (1.0 / k as f64).sqrt();
    let draws = mc::par_map(reps, |r| {
        let mut rng = Stream::substream(seed, r as u64);
        let (mut w, mut m) = (0.0f64, 0.0f64);
        for _ in 0..k {
            w += sd * rng.normal();
            m = m.max(w.abs());
        }
        m
    });
    Estimate::of(&draws)
}

/// Expansion fields that need no second-order terms; the rest are NaN.
pub fn first_order_terms(path: &SimulatedPath, model: &DiffusionModel, p: PowerSpec) -> ExpansionTerms {
    let s = path.obs_dt().sqrt();
    let v_n = power_variation(path, p);
    let v_limit = limit_v(path, model, p);
    let f_n = f_n_estimator(path, p);
    let z_n = (v_n - v_limit) / s;
    ExpansionTerms {
        seed: path.seed,
        n: path.obs_n,
        p: p.p,
        v_n,
        v_limit,
        f_n,
        c_limit: limit_c(path, model, p),
        m_n: martingale_term(path, model, p),
        n1: f64::NAN,
        n2: f64::NAN,
        n3: f64::NAN,
        n4: f64::NAN,
        n5: f64::NAN,
        z_n,
        studentized: studentize(z_n, f_n).unwrap_or(f64::NAN),
        residual: f64::NAN,
    }
}

fn replicate(
    model: &DiffusionModel,
    p: PowerSpec,
    n: usize,
    seed: u64,
    config: &ExperimentConfig,
    gammas: Option<&GammaConstants>,
) -> Result<Replication> {
    let a = config.analyses;
    let path = simulate_path(model, n, config.refine, seed)?;
    let terms = if a.needs_expansion() { expansion_terms(&path, model, p)? } else { first_order_terms(&path, model, p) };
    let symbols = match gammas {
        Some(g) if a.needs_symbols() => Some(symbols(&path, model, p, g)?),
        _ => None,
    };
    let lln = a.lln.then(|| {
        let weight = |x: f64| model.b1(x).powi(2);
        let cubic = lln_functional(&path, weight, |a, w| a * w[w.len() - 1].powi(3));
        let sup = lln_functional(&path, weight, |a, w| a * w.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        [cubic, sup, lln_limit_linear(&path, weight, 1.0)]
    });
    Ok(Replication { seed, terms, symbols, lln })
}

fn column<T>(rows: &[T], f: impl Fn(&T) -> f64) -> Vec<f64> {
    rows.iter().map(f).collect()
}

fn summarize(
    n: usize,
    config: &ExperimentConfig,
    reps: &[Replication],
    failures: BTreeMap<String, usize>,
    rho_sup: Option<Estimate>,
) -> Result<NSummary> {
    let a = config.analyses;
    let terms: Vec<&ExpansionTerms> = reps.iter().map(|r| &r.terms).collect();
    let nonpositive_f_n = terms.iter().filter(|t| !(t.f_n > 0.0)).count();
    let mut means = BTreeMap::new();
    let mut put = |name: &str, v: Vec<f64>| {
        means.insert(name.to_string(), Estimate::of(&v));
    };
    put("v_n", column(&terms, |t| t.v_n));
    put("v_limit", column(&terms, |t| t.v_limit));
    put("f_n", column(&terms, |t| t.f_n));
    put("c_limit", column(&terms, |t| t.c_limit));
    put("f_hat", column(&terms, |t| t.f_hat()));
    put("m_n", column(&terms, |t| t.m_n));
    put("z_n", column(&terms, |t| t.z_n));
    let stud: Vec<f64> = terms.iter().map(|t| t.studentized).filter(|v| v.is_finite()).collect();
    put("studentized", stud.clone());
    if a.needs_expansion() {
        put("n1", column(&terms, |t| t.n1));
        put("n2", column(&terms, |t| t.n2));
        put("n3", column(&terms, |t| t.n3));
        put("n4", column(&terms, |t| t.n4));
        put("n5", column(&terms, |t| t.n5));
        put("n_total", column(&terms, |t| t.n_total()));
        put("residual", column(&terms, |t| t.residual));
    }
    let syms: Vec<&SymbolCoefficients> = reps.iter().filter_map(|r| r.symbols.as_ref()).collect();
    if !syms.is_empty() {
        let vals: Vec<Vec<f64>> = syms.iter().map(|s| s.csv_values()).collect();
        for (k, name) in SymbolCoefficients::csv_header().iter().enumerate() {
            put(name, column(&vals, |v| v[k]));
        }
    }

    let residual_l2 = a.needs_expansion().then(|| {
        let sq = column(&terms, |t| (t.residual * (n as f64).sqrt()).powi(2));
        let e = Estimate::of(&sq);
        let l2 = e.value.sqrt();
        Estimate { value: l2, se: e.se / (2.0 * l2) }
    });

    let m = column(&terms, |t| t.m_n);
    let lag1_corr_m = if m.len() > 2 {
        mc::covariance(&m[..m.len() - 1], &m[1..]) / mc::variance(&m)
    } else {
        f64::NAN
    };

    let clt = (a.clt && !syms.is_empty()).then(|| {
        let mu3 = column(&syms, |s| s.mu3);
        let comps = [
            m.clone(),
            column(&terms, |t| t.f_hat()),
            terms.iter().zip(&mu3).map(|(t, u)| t.n_total() - u).collect::<Vec<f64>>(),
        ];
        let mut empirical = [[Estimate { value: 0.0, se: 0.0 }; 3]; 3];
        let mut xi_mean = empirical;
        for i in 0..3 {
            for j in 0..3 {
                let (v, se) = mc::covariance_se(&comps[i], &comps[j]);
                empirical[i][j] = Estimate { value: v, se };
                xi_mean[i][j] = Estimate::of(&column(&syms, |s| s.xi_int[i][j]));
            }
        }
        CltSummary {
            empirical,
            xi_mean,
            n_total: Estimate::of(&column(&terms, |t| t.n_total())),
            mu3: Estimate::of(&mu3),
            n_minus_mu3: Estimate::of(&comps[2]),
        }
    });

    let density = (a.density && !syms.is_empty()).then(|| {
        let records: Vec<SymbolRecord> = reps
            .iter()
            .filter_map(|r| {
                r.symbols.map(|s| SymbolRecord {
                    c_limit: r.terms.c_limit,
                    h1_tilde: s.h1_tilde,
                    h2: s.h2,
                    h3_tilde: s.h3_tilde,
                    h4: s.h4,
                    h5: s.h5,
                })
            })
            .collect();
        let expectations = ScalarExpectations::from_records(&records);
        let (ca, cb) = expectations.coefficients();
        let bw = config.bandwidth.or_else(|| {
            let h = silverman_bandwidth(&column(&records, |r| r.c_limit));
            (h > 0.0).then_some(h)
        });
        DensitySummary { expectations, a: ca, b: cb, bandwidth: bw }
    });

    let studentized = if a.studentized && !stud.is_empty() {
        let e = density.as_ref().map_or(StudentizedExpansion { a: 0.0, b: 0.0 }, |d| StudentizedExpansion { a: d.a, b: d.b });
        Some(compare_distributions(&stud, &e, 1.0 / n as f64)?)
    } else {
        None
    };

    let lln = match rho_sup {
        Some(rho) if a.lln => {
            let l: Vec<[f64; 3]> = reps.iter().filter_map(|r| r.lln).collect();
            let cubic = Estimate::of(&column(&l, |v| v[0]));
            let sup = Estimate::of(&column(&l, |v| v[1] - rho.value * v[2]));
            let ia = mc::mean(&column(&l, |v| v[2]));
            Some(LlnSummary {
                rho_sup: rho,
                cubic_error: cubic,
                sup_error: Estimate { value: sup.value, se: sup.se.hypot(ia * rho.se) },
            })
        }
        _ => None,
    };

    Ok(NSummary {
        n,
        reps: config.reps,
        completed: reps.len(),
        failures,
        nonpositive_f_n,
        means,
        residual_l2,
        lag1_corr_m,
        clt,
        studentized,
        density,
        lln,
    })
}

fn io(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

/// Writes `report.json`, `expansion_n{n}.csv` and, when symbols were
/// computed, `symbols_n{n}.csv` into `dir`.
pub fn write_artifacts(output: &ExperimentOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io)?;
    std::fs::write(dir.join("report.json"), output.report.to_json()).map_err(io)?;
    for rows in &output.rows {
        let mut w = csv::Writer::from_path(dir.join(format!("expansion_n{}.csv", rows.n))).map_err(io)?;
        w.write_record(ExpansionTerms::csv_header()).map_err(io)?;
        for r in &rows.replications {
            w.write_record(r.terms.csv_record()).map_err(io)?;
        }
        w.flush().map_err(io)?;
        if rows.replications.iter().any(|r| r.symbols.is_some()) {
            let mut w = csv::Writer::from_path(dir.join(format!("symbols_n{}.csv", rows.n))).map_err(io)?;
            let mut header = vec!["seed".to_string()];
            header.extend(SymbolCoefficients::csv_header());
            w.write_record(&header).map_err(io)?;
            for r in &rows.replications {
                if let Some(s) = &r.symbols {
                    let mut rec = vec![r.seed.to_string()];
                    rec.extend(s.csv_values().iter().map(|v| v.to_string()));
                    w.write_record(&rec).map_err(io)?;
                }
            }
            w.flush().map_err(io)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::ModelSpec;
    use crate::harness::config::Analyses;

    fn small(model: ModelSpec, n: Vec<usize>, reps: usize) -> ExperimentConfig {
        ExperimentConfig { model, n, reps, seed: 11, ..Default::default() }
    }

    #[test]
    fn single_brownian_path_matches_hand_values() {
        let cfg = small(ModelSpec::Bm, vec![4], 1);
        let out = run_experiment_rows(&cfg).unwrap();
        let seed = stream_seed(11, 0);
        let path = simulate_path(&DiffusionModel::bm(), 4, cfg.refine, seed).unwrap();
        let v: f64 = path.obs_dw().iter().map(|d| d * d).sum();
        let s = &out.report.per_n[0];
        assert_eq!(out.rows[0].replications[0].seed, seed);
        assert!((s.means["v_n"].value - v).abs() < 1e-14);
        assert!((s.means["m_n"].value - 2.0 * (v - 1.0)).abs() < 1e-13);
        assert!((s.means["v_limit"].value - 1.0).abs() < 1e-14);
        for k in ["n1", "n2", "n3", "n4", "n5"] {
            assert_eq!(s.means[k].value, 0.0);
        }
    }

    #[test]
    fn report_ignores_worker_count() {
        let mut cfg = small(ModelSpec::TanhVol, vec![16, 32], 1500);
        cfg.analyses = Analyses { lln: true, clt: true, density: true, ..Analyses::default() };
        cfg.workers = 1;
        let a = run_experiment(&cfg).unwrap().to_json();
        cfg.workers = 3;
        let b = run_experiment(&cfg).unwrap().to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn failures_above_threshold_abort() {
        // Geometric motion drops below half its starting volatility on many paths.
        let cfg = small(ModelSpec::Custom { b1: "x".into(), b2: "0".into(), x0: 1.0 }, vec![64], 200);
        match run_experiment(&cfg) {
            Err(Error::FailureThreshold { n: 64, failed, reps: 200, first }) => {
                assert!(failed > 2);
                assert!(first.contains("lower bound"), "{first}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn substreams_are_uncorrelated() {
        let cfg = small(ModelSpec::TanhVol, vec![32], 4000);
        let r = run_experiment(&cfg).unwrap();
        let s = &r.per_n[0];
        assert!(s.lag1_corr_m.abs() < 3.0 / (cfg.reps as f64).sqrt(), "{}", s.lag1_corr_m);
        assert_eq!(s.completed, cfg.reps);
    }

    #[test]
    fn artifacts_are_written() {
        let dir = std::env::temp_dir().join(format!("pvedge-artifacts-{}", std::process::id()));
        let mut cfg = small(ModelSpec::TanhVol, vec![8], 5);
        cfg.analyses.symbols = true;
        cfg.out = Some(dir.clone());
        run_experiment(&cfg).unwrap();
        let text = std::fs::read_to_string(dir.join("expansion_n8.csv")).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("seed,n,p,"));
        let sym = std::fs::read_to_string(dir.join("symbols_n8.csv")).unwrap();
        assert!(sym.starts_with("seed,xi11,"));
        let report: EdgeworthReport =
            serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
        assert_eq!(report.per_n[0].n, 8);
        std::fs::remove_dir_all(&dir).ok();
    }
}
