//! Experiment configuration: JSON file format, CLI overrides and the
//! deterministic per-trial seed derivation.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use fglab_core::bp::BpOptions;
use fglab_core::exact::EnumBudget;
use fglab_core::io::model_spec_from_value;
use fglab_core::models::ModelSpec;
use fglab_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Poisson,
    Regular,
    Percolated,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poisson" => Ok(ModelKind::Poisson),
            "regular" => Ok(ModelKind::Regular),
            "percolated" => Ok(ModelKind::Percolated),
            other => Err(Error::InvalidParameter(format!(
                "unknown model kind {other:?}"
            ))),
        }
    }
}

fn default_kind() -> ModelKind {
    ModelKind::Poisson
}

fn default_trials() -> usize {
    50
}

fn default_d() -> f64 {
    1.0
}

fn default_seed() -> u64 {
    1
}

fn default_budget() -> u128 {
    EnumBudget::default().0
}

/// On-disk experiment configuration. All fields have defaults so partial
/// configs stay valid; CLI flags override the file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Model preset (`{"preset": "ksat", "k": 3, "beta": 0.5}`) or explicit
    /// `{"spins", "k", "family", "rho"}` object.
    pub model: Value,
    #[serde(default = "default_kind")]
    pub model_kind: ModelKind,
    pub n_grid: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials_per_n: usize,
    #[serde(default = "default_d")]
    pub d: f64,
    #[serde(default)]
    pub eps: f64,
    /// Radius for the non-reconstruction column of plain trial records.
    #[serde(default)]
    pub ell: usize,
    /// Radii for the per-radius columns of the phase scan.
    #[serde(default)]
    pub ell_grid: Vec<usize>,
    /// Coupling grid for the phase scan; requires a preset model.
    #[serde(default)]
    pub beta_grid: Vec<f64>,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    #[serde(default = "default_budget")]
    pub enum_budget: u128,
    /// Resample each trial until the graph is acyclic (diagnostics aid).
    #[serde(default)]
    pub acyclic_only: bool,
    #[serde(default)]
    pub bp_damping: Option<f64>,
    #[serde(default)]
    pub bp_tol: Option<f64>,
    #[serde(default)]
    pub bp_max_iter: Option<usize>,
    /// Worker threads for independent trials; 1 keeps everything serial.
    #[serde(default)]
    pub jobs: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        if self.n_grid.is_empty() {
            return Err(Error::InvalidParameter("empty n grid".into()));
        }
        if self.trials_per_n == 0 {
            return Err(Error::InvalidParameter("trials_per_n must be >= 1".into()));
        }
        if self.model_kind != ModelKind::Poisson && (self.d.fract() != 0.0 || self.d < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "regular models need an integer degree d >= 1, got {}",
                self.d
            )));
        }
        if !(0.0..1.0).contains(&self.eps) {
            return Err(Error::InvalidParameter("eps must lie in [0, 1)".into()));
        }
        let spec = model_spec_from_value(&self.model)?;
        Ok(ResolvedConfig {
            spec,
            config: self.clone(),
            budget: EnumBudget(self.enum_budget),
        })
    }
}

/// Validated configuration with the model spec materialized.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub spec: ModelSpec<f64>,
    pub config: ExperimentConfig,
    pub budget: EnumBudget,
}

impl ResolvedConfig {
    pub fn bp_options(&self, acyclic: bool) -> BpOptions {
        BpOptions {
            damping: self
                .config
                .bp_damping
                .unwrap_or(if acyclic { 0.0 } else { 0.5 }),
            tol: self.config.bp_tol.unwrap_or(1e-10),
            max_iter: self.config.bp_max_iter.unwrap_or(300),
        }
    }

    pub fn jobs(&self) -> usize {
        self.config.jobs.unwrap_or(1).max(1)
    }

    /// Rebuilds the model spec with a preset's `beta` replaced; phase scans
    /// sweep this. Errors when the model is not a preset.
    pub fn spec_with_beta(&self, beta: f64) -> Result<ModelSpec<f64>> {
        let mut value = self.config.model.clone();
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Error::InvalidParameter("model must be a JSON object".into()))?;
        if !obj.contains_key("preset") {
            return Err(Error::InvalidParameter(
                "beta sweeps need a preset model".into(),
            ));
        }
        obj.insert("beta".into(), serde_json::json!(beta));
        model_spec_from_value(&value)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-trial seed from `(master seed, grid point, trial index)`.
/// Each input is mixed before the next is folded in, so nearby masters,
/// sizes and trial indices land on unrelated streams.
pub fn trial_seed(master: u64, n: usize, trial: usize) -> u64 {
    let h = splitmix64(master);
    let h = splitmix64(h ^ n as u64);
    splitmix64(h ^ trial as u64)
}

/// Sub-seed for auxiliary randomness inside one trial (deletions, variable
/// picks), separated from the generator stream.
pub fn aux_seed(seed: u64, salt: u64) -> u64 {
    splitmix64(seed ^ salt.wrapping_mul(0xA076_1D64_78BD_642F))
}
