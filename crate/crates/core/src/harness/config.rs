//! Experiment configuration, read from TOML and overridable field by field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::diffusion::{check_grid, ModelSpec, DEFAULT_REFINE};
use crate::error::{Error, Result};
use crate::gaussian::PowerSpec;

/// Which per-path computations and summaries to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Analyses {
    pub lln: bool,
    pub clt: bool,
    pub expansion: bool,
    pub symbols: bool,
    pub density: bool,
    pub studentized: bool,
}

impl Default for Analyses {
    fn default() -> Self {
        Self { lln: false, clt: false, expansion: true, symbols: false, density: false, studentized: true }
    }
}

impl Analyses {
    pub fn none() -> Self {
        Self { lln: false, clt: false, expansion: false, symbols: false, density: false, studentized: false }
    }

    /// Whether per-path symbols are required.
    pub fn needs_symbols(&self) -> bool {
        self.symbols || self.clt || self.density
    }

    /// Whether the full set of expansion terms is required.
    pub fn needs_expansion(&self) -> bool {
        self.expansion || self.clt
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub p: f64,
    pub n: Vec<usize>,
    pub refine: usize,
    pub reps: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Replications for the universal constants when no closed form applies.
    pub gamma_reps: usize,
    /// Kernel bandwidth for density fits; Silverman's rule when absent.
    pub bandwidth: Option<f64>,
    /// Worker threads; 0 uses the library default.
    pub workers: usize,
    #[serde(deserialize_with = "model_field")]
    pub model: ModelSpec,
    pub analyses: Analyses,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::TanhVol,
            p: 2.0,
            n: vec![64, 256, 1024],
            refine: DEFAULT_REFINE,
            reps: 10_000,
            seed: 20_240_101,
            out: None,
            analyses: Analyses::default(),
            gamma_reps: 100_000,
            bandwidth: None,
            workers: 0,
        }
    }
}

/// Accepts either a bare model name or a table with a `name` key.
fn model_field<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<ModelSpec, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Field {
        Name(String),
        Spec(ModelSpec),
    }
    match Field::deserialize(d)? {
        Field::Name(s) => ModelSpec::from_name(&s).map_err(serde::de::Error::custom),
        Field::Spec(s) => Ok(s),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Fails for seeds above `i64::MAX`, which TOML integers cannot hold.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn power(&self) -> Result<PowerSpec> {
        PowerSpec::new(self.p).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks every field; errors are reported as [`Error::Config`].
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        if self.reps < 1 {
            return Err(Error::Config("reps must be >= 1".into()));
        }
        if self.n.is_empty() {
            return Err(Error::Config("n list is empty".into()));
        }
        for &n in &self.n {
            check_grid(n, self.refine).map_err(cfg)?;
        }
        let p = self.power()?;
        let a = &self.analyses;
        if a.needs_expansion() || a.needs_symbols() {
            p.require_expansion().map_err(cfg)?;
        } else {
            p.require_lln().map_err(cfg)?;
        }
        if (a.needs_expansion() || a.needs_symbols())
            && self.refine < crate::statistics::MIN_EXPANSION_REFINE
        {
            return Err(Error::Config(format!(
                "refine must be >= {} for expansion terms",
                crate::statistics::MIN_EXPANSION_REFINE
            )));
        }
        if let Some(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Config(format!("bandwidth {h} must be positive")));
            }
        }
        if a.needs_symbols() && self.gamma_reps < 2 && !p.is_even_integer() {
            return Err(Error::Config("gamma_reps must be >= 2".into()));
        }
        self.model.build().map_err(cfg)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_name_and_table_models() {
        let c = ExperimentConfig::from_toml_str("model = \"bm\"\nn = [4]\nreps = 1").unwrap();
        assert_eq!(c.model, ModelSpec::Bm);
        let c = ExperimentConfig::from_toml_str(
            "n = [8]\n[model]\nname = \"custom\"\nb1 = \"1 + 0.2*sin(x)\"\nb2 = \"-x\"\nx0 = 0.1\n",
        )
        .unwrap();
        assert!(matches!(c.model, ModelSpec::Custom { .. }));
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig { out: Some("out".into()), bandwidth: Some(0.1), ..Default::default() };
        assert_eq!(ExperimentConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "reps = 0",
            "n = [6]",
            "n = []",
            "p = 3.0",
            "model = \"nope\"",
            "unknown = 1",
            "refine = 4",
            "bandwidth = -1.0",
        ] {
            assert!(matches!(ExperimentConfig::from_toml_str(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn lln_only_allows_small_p() {
        let text = "p = 1.5\nrefine = 4\n[analyses]\nexpansion = false\nstudentized = false\nlln = true\n";
        assert!(ExperimentConfig::from_toml_str(text).is_ok());
    }
}
