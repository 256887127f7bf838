//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, RtkError};
use crate::mixture::{Component, IsotropicGaussianMixture, MixtureSpec};
use crate::samplers::{EnergyEstimator, InnerKind, ProjectionRule, StepRule};

/// Mixture given inline or by path (relative to the config file).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, rename = "component", skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<Component>,
}

impl MixtureConfig {
    pub fn inline(mix: &IsotropicGaussianMixture) -> Self {
        let spec = mix.to_spec();
        Self {
            file: None,
            dim: Some(spec.dim),
            components: spec.components,
        }
    }

    pub fn resolve(&self, base_dir: Option<&Path>) -> Result<IsotropicGaussianMixture> {
        match (&self.file, self.dim) {
            (Some(file), None) if self.components.is_empty() => {
                let path = match base_dir {
                    Some(dir) if file.is_relative() => dir.join(file),
                    _ => file.clone(),
                };
                IsotropicGaussianMixture::from_file(&path)
            }
            (None, Some(dim)) => IsotropicGaussianMixture::from_spec(MixtureSpec {
                dim,
                components: self.components.clone(),
            }),
            _ => Err(RtkError::InvalidMixture(
                "[mixture] needs either `file` or `dim` with [[mixture.component]] entries".into(),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleMode {
    /// Segments at the given fractions of the horizon.
    Fixed,
    /// `eta = eta_for(L)` and the outer-step count from the accuracy target.
    Theory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub mode: ScheduleMode,
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    /// Target accuracy for `theory` mode.
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Overrides the estimated smoothness.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothness: Option<f64>,
}

fn default_fractions() -> Vec<f64> {
    vec![0.0, 0.2, 0.4, 0.6, 0.8]
}

fn default_eps() -> f64 {
    0.1
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            mode: ScheduleMode::Fixed,
            fractions: default_fractions(),
            eps: default_eps(),
            smoothness: None,
        }
    }
}

/// Worst-case oracle errors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorConfig {
    #[serde(default)]
    pub score: f64,
    #[serde(default)]
    pub energy: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothnessConfig {
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_probes() -> usize {
    crate::smoothness::DEFAULT_PROBES
}

impl Default for SmoothnessConfig {
    fn default() -> Self {
        Self {
            probes: default_probes(),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Ddpm,
    Ula,
    Mala,
    Uld,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase", deny_unknown_fields)]
pub enum StepConfig {
    Fixed { step: f64 },
    Smoothness { scale: f64 },
    Theory { multiplier: f64, eps: f64 },
}

impl From<StepConfig> for StepRule {
    fn from(s: StepConfig) -> Self {
        match s {
            StepConfig::Fixed { step } => StepRule::Fixed { step },
            StepConfig::Smoothness { scale } => StepRule::Smoothness { scale },
            StepConfig::Theory { multiplier, eps } => StepRule::Theory { multiplier, eps },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum EstimatorConfig {
    Exact,
    /// Missing fields take the defaults derived from the score error.
    Taylor {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        order: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta_t: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProjectionConfig {
    Explicit { outer_radius: f64, inner_radius: f64 },
    Default { eps: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub name: String,
    pub kind: MethodKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<StepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<ProjectionConfig>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub lazy: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub friction: Option<f64>,
}

impl MethodConfig {
    /// Inner kernel for RTK methods; `None` for DDPM.
    pub fn inner_kind(&self, score_error: f64) -> Option<InnerKind> {
        match self.kind {
            MethodKind::Ddpm => None,
            MethodKind::Ula => Some(InnerKind::Ula),
            MethodKind::Uld => Some(InnerKind::Uld { friction: self.friction }),
            MethodKind::Mala => {
                let estimator = match self.estimator.unwrap_or(EstimatorConfig::Exact) {
                    EstimatorConfig::Exact => EnergyEstimator::Exact,
                    EstimatorConfig::Taylor { order, delta_t } => {
                        let EnergyEstimator::Taylor { order: u0, delta_t: dt0 } =
                            EnergyEstimator::taylor_default(score_error)
                        else {
                            unreachable!()
                        };
                        EnergyEstimator::Taylor {
                            order: order.unwrap_or(u0),
                            delta_t: delta_t.unwrap_or(dt0),
                        }
                    }
                };
                let projection = self.projection.map(|p| match p {
                    ProjectionConfig::Explicit { outer_radius, inner_radius } => {
                        ProjectionRule::Explicit { outer_radius, inner_radius }
                    }
                    ProjectionConfig::Default { eps } => ProjectionRule::Default { eps },
                });
                Some(InnerKind::Mala { projection, estimator, lazy: self.lazy })
            }
        }
    }

    pub fn step_rule(&self) -> StepRule {
        self.step
            .map(StepRule::from)
            .unwrap_or(StepRule::Smoothness { scale: 0.1 })
    }
}

fn default_reference_size() -> usize {
    100_000
}

fn default_bins() -> usize {
    crate::metrics::DEFAULT_BINS
}

fn default_max_outer() -> usize {
    64
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_metric_seed() -> u64 {
    0x5eed
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizon: f64,
    pub nfe_budgets: Vec<u64>,
    pub n_samples: usize,
    pub master_seed: u64,
    /// Seeds to repeat every run with; defaults to `[master_seed]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_reference_size")]
    pub reference_size: usize,
    #[serde(default = "default_bins")]
    pub bins_per_dim: usize,
    #[serde(default = "default_max_outer")]
    pub max_outer_steps: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_metric_seed")]
    pub metric_seed: u64,
    /// Write measured wall times; off keeps outputs byte-stable.
    #[serde(default)]
    pub record_wall_time: bool,
    pub mixture: MixtureConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub error: ErrorConfig,
    #[serde(default)]
    pub smoothness: SmoothnessConfig,
    #[serde(default, rename = "method")]
    pub methods: Vec<MethodConfig>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| RtkError::Config {
            path: PathBuf::from("<config>"),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| RtkError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| RtkError::Config {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        cfg.base_dir = path.parent().map(Path::to_owned);
        cfg.validate().map_err(|e| RtkError::Config {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| vec![self.master_seed])
    }

    pub fn mixture(&self) -> Result<IsotropicGaussianMixture> {
        self.mixture.resolve(self.base_dir.as_deref())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(RtkError::param("horizon", "must be positive"));
        }
        if self.nfe_budgets.is_empty() {
            return Err(RtkError::param("nfe_budgets", "must not be empty"));
        }
        if self.nfe_budgets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(RtkError::param("nfe_budgets", "must be strictly increasing"));
        }
        if self.n_samples == 0 {
            return Err(RtkError::param("n_samples", "must be at least 1"));
        }
        if self.reference_size == 0 {
            return Err(RtkError::param("reference_size", "must be at least 1"));
        }
        if self.bins_per_dim == 0 {
            return Err(RtkError::param("bins_per_dim", "must be at least 1"));
        }
        if self.seeds.as_ref().is_some_and(|s| s.is_empty()) {
            return Err(RtkError::param("seeds", "must not be empty when given"));
        }
        let mut names: Vec<&str> = self.methods.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(RtkError::param("method", "names must be unique"));
        }
        Ok(())
    }

    /// The Gaussian-mixture study: 12 unit-circle components in 10-D with
    /// variance 0.007, five fixed segments over `T = 6`, and the five
    /// samplers compared against each other.
    pub fn paper_preset() -> Self {
        let mix = IsotropicGaussianMixture::circle(12, 10, 1.0, 0.007).expect("valid preset mixture");
        let method = |name: &str, kind: MethodKind| MethodConfig {
            name: name.to_owned(),
            kind,
            step: None,
            estimator: None,
            projection: None,
            lazy: false,
            friction: None,
        };
        Self {
            horizon: 6.0,
            nfe_budgets: vec![50, 100, 200, 500, 1000],
            n_samples: 2000,
            master_seed: 2024,
            seeds: None,
            reference_size: default_reference_size(),
            bins_per_dim: default_bins(),
            max_outer_steps: default_max_outer(),
            output_dir: default_output_dir(),
            metric_seed: default_metric_seed(),
            record_wall_time: false,
            mixture: MixtureConfig::inline(&mix),
            schedule: ScheduleConfig::default(),
            error: ErrorConfig::default(),
            smoothness: SmoothnessConfig::default(),
            methods: vec![
                method("DDPM", MethodKind::Ddpm),
                MethodConfig {
                    step: Some(StepConfig::Smoothness { scale: 0.5 }),
                    ..method("RTK-ULA", MethodKind::Ula)
                },
                MethodConfig {
                    step: Some(StepConfig::Smoothness { scale: 0.5 }),
                    ..method("RTK-ULD", MethodKind::Uld)
                },
                MethodConfig {
                    step: Some(StepConfig::Smoothness { scale: 0.5 }),
                    estimator: Some(EstimatorConfig::Exact),
                    ..method("RTK-MALA", MethodKind::Mala)
                },
                MethodConfig {
                    step: Some(StepConfig::Smoothness { scale: 0.5 }),
                    estimator: Some(EstimatorConfig::Taylor { order: None, delta_t: None }),
                    ..method("RTK-MALA-score", MethodKind::Mala)
                },
            ],
            base_dir: None,
        }
    }
}
