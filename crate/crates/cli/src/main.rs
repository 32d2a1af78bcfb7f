//! `pvedge`: simulate diffusions, compute power-variation statistics and
//! their second-order expansion, fit corrected densities and run the
//! acceptance checks.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pv_edgeworth::density::{
    fit_density_model, fit_with_bandwidth, ScalarExpectations, StudentizedExpansion, SymbolRecord, SymbolSample,
};
use pv_edgeworth::diffusion::{simulate_path, ModelSpec};
use pv_edgeworth::harness::validate::{validate, Scale};
use pv_edgeworth::harness::{run_experiment, run_experiment_rows, write_artifacts, Analyses, ExperimentConfig};
use pv_edgeworth::rng::stream_seed;
use pv_edgeworth::statistics::ExpansionTerms;
use pv_edgeworth::symbols::SymbolCoefficients;
use pv_edgeworth::{mc, Error};

#[derive(Parser)]
#[command(name = "pvedge", version, about = "Edgeworth expansions for power variations of diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Emit simulated paths (t, W, X, Y) on the fine grid.
    Simulate,
    /// Per-path V_n, V, F_n, C, M_n and the studentized statistic.
    Estimate,
    /// Second-order terms per path plus the aggregated report.
    Expansion,
    /// Per-path symbol coefficients.
    Symbols,
    /// Fit the corrected densities and evaluate them on a grid.
    Density,
    /// Run the acceptance checks.
    Validate {
        /// Reduced budgets.
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// bm, bm-drift, tanh-vol or custom (with --b1, --b2, --x0).
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    b1: Option<String>,
    #[arg(long, global = true)]
    b2: Option<String>,
    #[arg(long, global = true)]
    x0: Option<f64>,
    #[arg(long, global = true)]
    p: Option<f64>,
    /// Observation counts, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long, global = true)]
    refine: Option<usize>,
    #[arg(long, global = true)]
    reps: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; results go to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    /// Kernel bandwidth for density fits.
    #[arg(long, global = true)]
    bandwidth: Option<f64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

enum Failure {
    Lib(Error),
    Io(std::io::Error),
    Checks,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(3),
        Err(Failure::Io(e)) => {
            eprintln!("pvedge: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("pvedge: {e}");
            match e {
                Error::Config(_) | Error::Parse { .. } | Error::ObservationCount(_) | Error::InvalidArgument(_) => {
                    ExitCode::from(2)
                }
                Error::Io(_) => ExitCode::from(1),
                _ => ExitCode::from(3),
            }
        }
    }
}

fn build_config(c: &Common, analyses: Analyses) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.analyses = analyses;
    if let Some(name) = &c.model {
        cfg.model = if name == "custom" {
            let (Some(b1), Some(b2)) = (&c.b1, &c.b2) else {
                return Err(Error::Config("custom model needs --b1 and --b2".into()));
            };
            ModelSpec::Custom { b1: b1.clone(), b2: b2.clone(), x0: c.x0.unwrap_or(0.0) }
        } else {
            ModelSpec::from_name(name)?
        };
    }
    if let Some(v) = c.p {
        cfg.p = v;
    }
    if let Some(v) = &c.n {
        cfg.n = v.clone();
    }
    if let Some(v) = c.refine {
        cfg.refine = v;
    }
    if let Some(v) = c.reps {
        cfg.reps = v;
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.bandwidth {
        cfg.bandwidth = Some(v);
    }
    if let Some(v) = c.workers {
        cfg.workers = v;
    }
    cfg.out = None;
    cfg.validate()?;
    Ok(cfg)
}

/// Stdout, or `dir/name` when an output directory was given.
fn sink(out: &Option<PathBuf>, name: &str) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Box::new(std::io::BufWriter::new(std::fs::File::create(dir.join(name))?))
        }
        None => Box::new(std::io::BufWriter::new(std::io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(out: &Option<PathBuf>, name: &str, value: &T) -> Result<(), Failure> {
    let mut w = sink(out, name)?;
    writeln!(w, "{}", serde_json::to_string_pretty(value).expect("serializable"))?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let c = &cli.common;
    match cli.command {
        Command::Simulate => simulate(c),
        Command::Estimate => estimate(c),
        Command::Expansion => expansion(c),
        Command::Symbols => symbols(c),
        Command::Density => density(c),
        Command::Validate { quick } => {
            let scale = if quick { Scale::Quick } else { Scale::Full };
            let report = validate(scale, c.seed.unwrap_or(1), c.workers.unwrap_or(0));
            for line in report.criteria.iter().map(|r| r.line()) {
                eprintln!("{line}");
            }
            let (name, text) = match c.format {
                Format::Json => ("validate.json", report.to_json() + "\n"),
                Format::Csv => ("validate.txt", report.to_text()),
            };
            let mut w = sink(&c.out, name)?;
            w.write_all(text.as_bytes())?;
            w.flush()?;
            if report.all_passed() {
                Ok(())
            } else {
                Err(Failure::Checks)
            }
        }
    }
}

#[derive(Serialize)]
struct PathRecord {
    seed: u64,
    n: usize,
    refine: usize,
    w: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
}

fn simulate(c: &Common) -> Result<(), Failure> {
    let mut cfg = build_config(c, Analyses::none())?;
    if c.reps.is_none() {
        cfg.reps = 1;
    }
    let model = cfg.model.build()?;
    let n = cfg.n[0];
    let paths = mc::with_workers(cfg.workers, || {
        mc::par_map(cfg.reps, |r| simulate_path(&model, n, cfg.refine, stream_seed(cfg.seed, r as u64)))
    });
    let paths = paths.into_iter().collect::<Result<Vec<_>, _>>()?;
    if c.format == Format::Json {
        let recs: Vec<PathRecord> = paths
            .into_iter()
            .map(|p| PathRecord { seed: p.seed, n, refine: cfg.refine, w: p.w, x: p.x, y: p.y })
            .collect();
        return write_json(&c.out, "paths.json", &recs);
    }
    let mut w = csv::Writer::from_writer(sink(&c.out, "paths.csv")?);
    w.write_record(["seed", "k", "t", "w", "x", "y"])?;
    for p in &paths {
        for k in 0..p.x.len() {
            w.write_record([
                p.seed.to_string(),
                k.to_string(),
                (k as f64 * p.fine_dt).to_string(),
                p.w[k].to_string(),
                p.x[k].to_string(),
                p.y[k].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

const ESTIMATE_COLUMNS: [&str; 10] = ["seed", "n", "p", "v_n", "v_limit", "f_n", "c_limit", "m_n", "z_n", "studentized"];

fn estimate_values(t: &ExpansionTerms) -> [String; 10] {
    [
        t.seed.to_string(),
        t.n.to_string(),
        t.p.to_string(),
        t.v_n.to_string(),
        t.v_limit.to_string(),
        t.f_n.to_string(),
        t.c_limit.to_string(),
        t.m_n.to_string(),
        t.z_n.to_string(),
        t.studentized.to_string(),
    ]
}

fn estimate(c: &Common) -> Result<(), Failure> {
    let cfg = build_config(c, Analyses::none())?;
    let out = run_experiment_rows(&cfg)?;
    let terms: Vec<ExpansionTerms> = out.rows.iter().flat_map(|r| r.replications.iter().map(|x| x.terms)).collect();
    if c.format == Format::Json {
        return write_json(&c.out, "estimate.json", &terms);
    }
    let mut w = csv::Writer::from_writer(sink(&c.out, "estimate.csv")?);
    w.write_record(ESTIMATE_COLUMNS)?;
    for t in &terms {
        w.write_record(estimate_values(t))?;
    }
    w.flush()?;
    Ok(())
}

fn expansion(c: &Common) -> Result<(), Failure> {
    let cfg = build_config(c, Analyses::default())?;
    match (&c.out, c.format) {
        (Some(dir), _) => {
            let out = run_experiment_rows(&cfg)?;
            write_artifacts(&out, dir)?;
            print_summary(&out.report.per_n);
            Ok(())
        }
        (None, Format::Json) => {
            let report = run_experiment(&cfg)?;
            write_json(&None, "", &report)
        }
        (None, Format::Csv) => {
            let out = run_experiment_rows(&cfg)?;
            let mut w = csv::Writer::from_writer(sink(&None, "")?);
            w.write_record(ExpansionTerms::csv_header())?;
            for r in out.rows.iter().flat_map(|r| &r.replications) {
                w.write_record(r.terms.csv_record())?;
            }
            w.flush()?;
            print_summary(&out.report.per_n);
            Ok(())
        }
    }
}

fn print_summary(per_n: &[pv_edgeworth::harness::NSummary]) {
    for s in per_n {
        let l2 = s.residual_l2.map_or(f64::NAN, |e| e.value);
        eprintln!(
            "n = {:>6}: {} of {} replications, {} with F_n <= 0, residual L2 / sqrt(dn) = {l2:.4e}",
            s.n, s.completed, s.reps, s.nonpositive_f_n
        );
    }
}

#[derive(Serialize)]
struct SymbolRow {
    seed: u64,
    n: usize,
    symbols: SymbolCoefficients,
}

fn symbols(c: &Common) -> Result<(), Failure> {
    let analyses = Analyses { symbols: true, expansion: false, studentized: false, ..Analyses::none() };
    let cfg = build_config(c, analyses)?;
    let out = run_experiment_rows(&cfg)?;
    let rows: Vec<SymbolRow> = out
        .rows
        .iter()
        .flat_map(|r| r.replications.iter().filter_map(move |x| x.symbols.map(|s| SymbolRow { seed: x.seed, n: r.n, symbols: s })))
        .collect();
    if c.format == Format::Json {
        return write_json(&c.out, "symbols.json", &rows);
    }
    let mut w = csv::Writer::from_writer(sink(&c.out, "symbols.csv")?);
    let mut header = vec!["seed".to_string(), "n".to_string()];
    header.extend(SymbolCoefficients::csv_header());
    w.write_record(&header)?;
    for r in &rows {
        let mut rec = vec![r.seed.to_string(), r.n.to_string()];
        rec.extend(r.symbols.csv_values().iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct DensityOutput {
    n: usize,
    bandwidth: f64,
    a: f64,
    b: f64,
    expectations: ScalarExpectations,
    studentized: Vec<[f64; 5]>,
    joint: Vec<[f64; 4]>,
}

fn density(c: &Common) -> Result<(), Failure> {
    let analyses = Analyses { density: true, expansion: false, studentized: false, ..Analyses::none() };
    let cfg = build_config(c, analyses)?;
    let out = run_experiment_rows(&cfg)?;
    let rows = &out.rows[0];
    let records: Vec<SymbolRecord> = rows
        .replications
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
    let sample = SymbolSample::new(records, cfg.seed)?;
    let model = match cfg.bandwidth {
        Some(h) => fit_with_bandwidth(&sample, h)?,
        None => fit_density_model(&sample)?,
    };
    let dn = 1.0 / rows.n as f64;
    let st = model.studentized();
    let normal = StudentizedExpansion { a: 0.0, b: 0.0 };
    let studentized: Vec<[f64; 5]> = (0..=200)
        .map(|i| {
            let y = -5.0 + 0.05 * i as f64;
            [y, normal.density(0.0, y), st.density(dn, y), normal.cdf(0.0, y), st.cdf(dn, y)]
        })
        .collect();
    let (lo, hi) = model.support();
    let zmax = 4.0 * hi.sqrt();
    let mut joint = Vec::new();
    for i in 0..=40 {
        let x = lo + (hi - lo) * i as f64 / 40.0;
        for j in 0..=80 {
            let z = -zmax + 2.0 * zmax * j as f64 / 80.0;
            let d = model.joint_density(dn, z, x);
            joint.push([z, x, d.leading, d.total]);
        }
    }
    if c.format == Format::Json {
        let out = DensityOutput {
            n: rows.n,
            bandwidth: model.bandwidth,
            a: st.a,
            b: st.b,
            expectations: model.expectations,
            studentized,
            joint,
        };
        return write_json(&c.out, "density.json", &out);
    }
    let mut w = csv::Writer::from_writer(sink(&c.out, "studentized_grid.csv")?);
    w.write_record(["y", "normal_pdf", "corrected_pdf", "normal_cdf", "corrected_cdf"])?;
    for r in &studentized {
        w.write_record(r.map(|v| v.to_string()))?;
    }
    w.flush()?;
    if let Some(dir) = &c.out {
        let mut w = csv::Writer::from_path(Path::new(dir).join("joint_grid.csv"))?;
        w.write_record(["z", "x", "leading", "total"])?;
        for r in &joint {
            w.write_record(r.map(|v| v.to_string()))?;
        }
        w.flush()?;
    }
    eprintln!("bandwidth = {:.6e}, a = {:.6e}, b = {:.6e}", model.bandwidth, st.a, st.b);
    Ok(())
}
