//! Browser bindings: corrected density curves, path previews and a small
//! Monte Carlo run of the studentized statistic.

use wasm_bindgen::prelude::*;

use pv_edgeworth::density::StudentizedExpansion;
use pv_edgeworth::diffusion::{simulate_path, ModelSpec};
use pv_edgeworth::harness::{run_experiment_rows, Analyses, ExperimentConfig};

fn js(e: pv_edgeworth::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Flattened `(y, normal, corrected)` triples on `points` grid nodes of
/// `[-half_width, half_width]`.
#[wasm_bindgen]
pub fn density_curve(a: f64, b: f64, dn: f64, half_width: f64, points: usize) -> Vec<f64> {
    let st = StudentizedExpansion { a, b };
    let normal = StudentizedExpansion { a: 0.0, b: 0.0 };
    let points = points.max(2);
    let mut out = Vec::with_capacity(3 * points);
    for i in 0..points {
        let y = -half_width + 2.0 * half_width * i as f64 / (points - 1) as f64;
        out.extend([y, normal.density(dn, y), st.density(dn, y)]);
    }
    out
}

/// `X` on the fine grid of one simulated path.
#[wasm_bindgen]
pub fn simulate_preview(model: &str, n: usize, refine: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    let m = ModelSpec::from_name(model).and_then(|s| s.build()).map_err(js)?;
    Ok(simulate_path(&m, n, refine, seed).map_err(js)?.x)
}

/// Studentized statistics and the fitted correction from one experiment.
#[wasm_bindgen]
pub struct Experiment {
    samples: Vec<f64>,
    a: f64,
    b: f64,
    ks_normal: f64,
    ks_corrected: f64,
}

#[wasm_bindgen]
impl Experiment {
    pub fn samples(&self) -> Vec<f64> {
        self.samples.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn a(&self) -> f64 {
        self.a
    }

    #[wasm_bindgen(getter)]
    pub fn b(&self) -> f64 {
        self.b
    }

    #[wasm_bindgen(getter)]
    pub fn ks_normal(&self) -> f64 {
        self.ks_normal
    }

    #[wasm_bindgen(getter)]
    pub fn ks_corrected(&self) -> f64 {
        self.ks_corrected
    }
}

/// Runs `reps` replications of the quadratic variation at `n` observations.
#[wasm_bindgen]
pub fn run_studentized(model: &str, n: usize, reps: usize, seed: u64) -> Result<Experiment, JsError> {
    let cfg = ExperimentConfig {
        model: ModelSpec::from_name(model).map_err(js)?,
        n: vec![n],
        reps,
        seed,
        refine: 8,
        analyses: Analyses { symbols: true, density: true, studentized: true, ..Analyses::none() },
        ..Default::default()
    };
    let out = run_experiment_rows(&cfg).map_err(js)?;
    let summary = &out.report.per_n[0];
    let samples: Vec<f64> = out.rows[0]
        .replications
        .iter()
        .map(|r| r.terms.studentized)
        .filter(|v| v.is_finite())
        .collect();
    let (a, b) = summary.density.as_ref().map_or((0.0, 0.0), |d| (d.a, d.b));
    let (ks_normal, ks_corrected) =
        summary.studentized.as_ref().map_or((f64::NAN, f64::NAN), |m| (m.ks_normal.value, m.ks_corrected.value));
    Ok(Experiment { samples, a, b, ks_normal, ks_corrected })
}
