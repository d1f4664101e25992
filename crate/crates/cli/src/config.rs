//! Flat TOML experiment configuration.

use std::path::{Path, PathBuf};

use rscm_core::datagen::{GeneratorKind, GeneratorSpec, LipschitzMap, Mixing, TauLaw};
use rscm_core::deterministic::URoute;
use rscm_core::WeightFunction;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorName {
    Gaussian,
    SinCorrelated,
    CustomLipschitz,
    /// A `p × n` CSV table given by `data_path`.
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingName {
    /// Standard normal entries scaled to spectral norm 1.
    Normalized,
    /// Standard normal entries, unscaled.
    Raw,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    /// Closed form (gaussian and sin_correlated only).
    Exact,
    /// Monte Carlo over `moment_draws` fresh columns.
    Estimate,
    /// `moments_path` (p × p second moment) and optional `mean_path`.
    File,
}

/// Every key of the config file. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub generator: GeneratorName,
    #[serde(default)]
    pub p: Option<usize>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "default_mixing")]
    pub mixing: MixingName,
    #[serde(default)]
    pub lipschitz_map: Option<String>,
    #[serde(default = "default_tau_law")]
    pub tau_law: String,
    #[serde(default)]
    pub signal_scale: f64,
    #[serde(default)]
    pub data_path: Option<PathBuf>,
    #[serde(default)]
    pub tau_path: Option<PathBuf>,
    #[serde(default)]
    pub signal_path: Option<PathBuf>,
    #[serde(default = "default_moments")]
    pub moments: MomentSource,
    #[serde(default)]
    pub moment_draws: Option<usize>,
    #[serde(default)]
    pub moments_path: Option<PathBuf>,
    #[serde(default)]
    pub mean_path: Option<PathBuf>,

    #[serde(default = "default_weight")]
    pub weight_function: String,
    #[serde(default)]
    pub gamma: Option<f64>,

    #[serde(default)]
    pub grid_min: Option<f64>,
    #[serde(default)]
    pub grid_max: Option<f64>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Absolute `ε`; overrides `eps_fraction`.
    #[serde(default)]
    pub eps: Option<f64>,
    /// `ε` relative to the spectral range.
    #[serde(default = "default_eps_fraction")]
    pub eps_fraction: f64,
    /// `ε` relative to the range for the CDF used in the KS distance.
    #[serde(default = "default_ks_eps_fraction")]
    pub ks_eps_fraction: f64,
    /// Real point where `(1/p) tr (Ĉ + zI)⁻¹` is compared with its prediction.
    #[serde(default = "default_z")]
    pub z: f64,
    #[serde(default = "default_route")]
    pub u_route: URoute,

    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,

    #[serde(default = "default_true")]
    pub with_signal: bool,
    #[serde(default)]
    pub alignment: bool,
    /// Adds per-trial KS distances to `mc-study`.
    #[serde(default)]
    pub concentration_study: bool,
}

fn default_mixing() -> MixingName {
    MixingName::Normalized
}
fn default_tau_law() -> String {
    "constant(1)".into()
}
fn default_moments() -> MomentSource {
    MomentSource::Exact
}
fn default_weight() -> String {
    "min_lin_inv(5)".into()
}
fn default_grid_points() -> usize {
    400
}
fn default_eps_fraction() -> f64 {
    1e-2
}
fn default_ks_eps_fraction() -> f64 {
    1e-6
}
fn default_z() -> f64 {
    1.0
}
fn default_route() -> URoute {
    URoute::Direct
}
fn default_trials() -> usize {
    1
}
fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}
fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    /// Minimal generated config; everything else at its default.
    pub fn generated(generator: GeneratorName, p: usize, n: usize) -> Self {
        Self {
            generator,
            p: Some(p),
            n: Some(n),
            mixing: default_mixing(),
            lipschitz_map: None,
            tau_law: default_tau_law(),
            signal_scale: 0.0,
            data_path: None,
            tau_path: None,
            signal_path: None,
            moments: default_moments(),
            moment_draws: None,
            moments_path: None,
            mean_path: None,
            weight_function: default_weight(),
            gamma: None,
            grid_min: None,
            grid_max: None,
            grid_points: default_grid_points(),
            eps: None,
            eps_fraction: default_eps_fraction(),
            ks_eps_fraction: default_ks_eps_fraction(),
            z: default_z(),
            u_route: default_route(),
            trials: default_trials(),
            seed: 0,
            outputs: default_outputs(),
            with_signal: true,
            alignment: false,
            concentration_study: false,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks everything that does not need the data.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.grid_points == 0 {
            return bad("grid_points must be at least 1".into());
        }
        if let (Some(lo), Some(hi)) = (self.grid_min, self.grid_max) {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return bad(format!("grid_min {lo} exceeds grid_max {hi}"));
            }
        }
        for (name, v) in [
            ("eps_fraction", Some(self.eps_fraction)),
            ("ks_eps_fraction", Some(self.ks_eps_fraction)),
            ("eps", self.eps),
            ("z", Some(self.z)),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return bad(format!("gamma must be positive, got {g}"));
            }
        }
        self.weight()?;
        match self.generator {
            GeneratorName::External => {
                if self.data_path.is_none() {
                    return bad("generator = \"external\" needs data_path".into());
                }
                if self.moments != MomentSource::File {
                    return bad("external data needs moments = \"file\"; moments are never estimated from the analyzed data".into());
                }
            }
            _ => {
                self.generator_spec(self.seed)?;
            }
        }
        if self.moments == MomentSource::File && self.moments_path.is_none() {
            return bad("moments = \"file\" needs moments_path".into());
        }
        if self.moments == MomentSource::Exact && self.generator == GeneratorName::CustomLipschitz {
            return bad("custom_lipschitz has no closed-form moments; use moments = \"estimate\" or \"file\"".into());
        }
        Ok(())
    }

    pub fn gamma(&self) -> Result<f64, CliError> {
        self.gamma
            .ok_or_else(|| CliError::Config("gamma is required".into()))
    }

    pub fn weight(&self) -> Result<WeightFunction, CliError> {
        WeightFunction::from_name(&self.weight_function).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Generator for this config with the given seed.
    pub fn generator_spec(&self, seed: u64) -> Result<GeneratorSpec, CliError> {
        let cfg_err = |e: rscm_core::Error| CliError::Config(e.to_string());
        let (p, n) = match (self.p, self.n) {
            (Some(p), Some(n)) => (p, n),
            _ => return Err(CliError::Config("generated data needs p and n".into())),
        };
        let kind = match self.generator {
            GeneratorName::Gaussian => GeneratorKind::Gaussian,
            GeneratorName::SinCorrelated => GeneratorKind::SinCorrelated,
            GeneratorName::CustomLipschitz => {
                let name = self.lipschitz_map.as_deref().ok_or_else(|| {
                    CliError::Config("custom_lipschitz needs lipschitz_map".into())
                })?;
                GeneratorKind::CustomLipschitz(LipschitzMap::from_name(name).map_err(cfg_err)?)
            }
            GeneratorName::External => return Err(CliError::Config("external data has no generator".into())),
        };
        let mixing = match self.mixing {
            MixingName::Normalized => Mixing::Random { normalize: true },
            MixingName::Raw => Mixing::Random { normalize: false },
            MixingName::Identity => Mixing::Identity,
        };
        let spec = GeneratorSpec {
            kind,
            p,
            n,
            mixing: Some(mixing),
            tau_law: TauLaw::from_name(&self.tau_law).map_err(cfg_err)?,
            signal_scale: self.signal_scale,
            seed,
        };
        spec.validate().map_err(cfg_err)?;
        Ok(spec)
    }
}
