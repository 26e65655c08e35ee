//! Run configuration: a TOML document with one table per component.
//!
//! Unknown keys are rejected, every field has a default, and dotted-key
//! overrides (`chain.replicas=200`) are applied to the parsed document before
//! it is validated. When the same key is overridden twice the last value wins.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::jumpchain::{BoundaryPolicy, RateChoice};
use crate::model::{GainFunction, GainParams, KernelParams, SynapticKernel};
use crate::noise::NoiseSettings;
use crate::spde::SpdeSettings;
use crate::wave::WaveSettings;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub gain: GainParams,
    pub kernel: KernelParams,
}

/// Jump-chain runs on a ring of `populations` nodes built from the kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    pub populations: usize,
    /// Population sizes `N` of the LLN ladder.
    pub sizes: Vec<u32>,
    pub horizon: f64,
    pub replicas: usize,
    pub output_points: usize,
    pub initial: Vec<f64>,
    pub rates: RateChoice,
    pub policy: BoundaryPolicy,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            populations: 3,
            sizes: vec![50, 100, 200, 400, 800],
            horizon: 1.0,
            replicas: 1000,
            output_points: 201,
            initial: vec![0.3, 0.46, 0.64],
            rates: RateChoice::Primary,
            policy: BoundaryPolicy::Error,
        }
    }
}

/// Single-population diffusion runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdeConfig {
    pub population_size: f64,
    pub horizon: f64,
    pub dt: f64,
    pub initial: f64,
    pub output_points: usize,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self { population_size: 1e4, horizon: 0.5, dt: 1e-4, initial: 0.2, output_points: 201 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlnRules {
    pub slope_min: f64,
    pub slope_max: f64,
}

impl Default for LlnRules {
    fn default() -> Self {
        Self { slope_min: -0.65, slope_max: -0.35 }
    }
}

/// One population with `w_11 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CltConfig {
    pub population_size: u32,
    /// Second size for the stability comparison of the scaled variance.
    pub compare_size: u32,
    pub replicas: usize,
    pub initial: f64,
    pub horizon: f64,
    pub variance_tol: f64,
    pub ks_alpha: f64,
}

impl Default for CltConfig {
    fn default() -> Self {
        Self {
            population_size: 400,
            compare_size: 100,
            replicas: 10_000,
            initial: 0.2,
            horizon: 1.0,
            variance_tol: 0.05,
            ks_alpha: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuumConfig {
    /// Gain threshold for the `c > 0` runs; overrides `model.gain.kappa`.
    pub kappa: f64,
    pub replicas: usize,
    pub moment: f64,
    /// Required ratio of the last to the first `E_m`.
    pub fraction: f64,
}

impl Default for ContinuumConfig {
    fn default() -> Self {
        Self { kappa: 0.6, replicas: 200, moment: 2.0, fraction: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseCheckConfig {
    pub draws: usize,
    pub levels: Vec<usize>,
    pub half_length: usize,
    pub dt: f64,
}

impl Default for NoiseCheckConfig {
    fn default() -> Self {
        Self { draws: 100_000, levels: vec![4, 8, 16, 32], half_length: 2, dt: 0.005 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveCheckConfig {
    /// Threshold of the asymmetric case.
    pub asymmetric_kappa: f64,
}

impl Default for WaveCheckConfig {
    fn default() -> Self {
        Self { asymmetric_kappa: 0.4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessConfig {
    pub seed: u64,
    /// Below this many replicas a statistical verdict is reported as inconclusive.
    pub min_replicas: usize,
    pub lln: LlnRules,
    pub clt: CltConfig,
    pub continuum: ContinuumConfig,
    pub noise: NoiseCheckConfig,
    pub wave: WaveCheckConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_917,
            min_replicas: 100,
            lln: LlnRules::default(),
            clt: CltConfig::default(),
            continuum: ContinuumConfig::default(),
            noise: NoiseCheckConfig::default(),
            wave: WaveCheckConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: String,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: "out".into(), formats: vec![OutputFormat::Csv, OutputFormat::Svg] }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub model: ModelConfig,
    pub wave: WaveSettings,
    pub chain: ChainConfig,
    pub sde: SdeConfig,
    pub noise: NoiseSettings,
    pub spde: SpdeSettings,
    pub harness: HarnessConfig,
    pub output: OutputConfig,
}

fn config_error(key: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config { key: key.into(), message: message.into() }
}

/// Parses the right-hand side of an override as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets `key.path = value` inside `doc`, creating intermediate tables.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_error(assignment, "override must have the form key.path=value"))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_error(key, "empty key segment"));
    }
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| config_error(key, format!("`{part}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl Config {
    pub fn from_table(doc: toml::Table) -> Result<Self> {
        let config: Config = serde_path_to_error::deserialize(toml::Value::Table(doc))
            .map_err(|e| config_error(e.path().to_string(), e.inner().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| config_error("<document>", e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        Self::from_table(doc)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn gain(&self) -> Result<GainFunction> {
        GainFunction::from_params(self.model.gain)
    }

    pub fn kernel(&self) -> Result<SynapticKernel> {
        SynapticKernel::from_params(self.model.kernel)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_error(key, format!("must be positive and finite, got {v}")))
            }
        };
        let increasing = |key: &str, v: &[f64]| {
            if !v.is_empty() && v.windows(2).all(|w| w[0] < w[1]) {
                Ok(())
            } else {
                Err(config_error(key, "must be a nonempty strictly increasing list"))
            }
        };
        positive("model.gain.gamma", self.model.gain.gamma)?;
        positive("model.kernel.sigma", self.model.kernel.sigma)?;
        positive("wave.half_length", self.wave.half_length)?;
        positive("wave.h", self.wave.h)?;
        positive("wave.tol", self.wave.tol)?;

        let c = &self.chain;
        if c.populations == 0 {
            return Err(config_error("chain.populations", "must be at least 1"));
        }
        increasing("chain.sizes", &c.sizes.iter().map(|&n| n as f64).collect::<Vec<_>>())?;
        positive("chain.horizon", c.horizon)?;
        if c.output_points < 2 {
            return Err(config_error("chain.output_points", "must be at least 2"));
        }
        if c.replicas < 2 {
            return Err(config_error("chain.replicas", "must be at least 2"));
        }
        if c.initial.len() != c.populations || c.initial.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return Err(config_error("chain.initial", "needs one activity in (0, 1) per population"));
        }

        positive("sde.population_size", self.sde.population_size)?;
        positive("sde.horizon", self.sde.horizon)?;
        positive("sde.dt", self.sde.dt)?;
        if !(self.sde.initial > 0.0 && self.sde.initial < 1.0) {
            return Err(config_error("sde.initial", "must lie in (0, 1)"));
        }

        positive("noise.epsilon", self.noise.epsilon)?;
        if self.noise.cells_per_unit == 0 {
            return Err(config_error("noise.cells_per_unit", "must be positive"));
        }
        for &m in &self.spde.levels {
            if m == 0 || self.noise.cells_per_unit % (4 * m) != 0 {
                return Err(config_error("noise.cells_per_unit", format!("must be a multiple of 4m for level m = {m}")));
            }
            if self.spde.level_half_length(m) >= self.spde.reference_half_length {
                return Err(config_error("spde.reference_half_length", format!("must exceed L^m for m = {m}")));
            }
        }
        increasing("spde.levels", &self.spde.levels.iter().map(|&m| m as f64).collect::<Vec<_>>())?;
        positive("spde.population_size", self.spde.population_size)?;
        positive("spde.dt", self.spde.dt)?;
        positive("spde.horizon", self.spde.horizon)?;
        if self.spde.dt > self.spde.dt_max {
            return Err(config_error("spde.dt", format!("exceeds spde.dt_max = {}", self.spde.dt_max)));
        }
        if let Some(d) = self.spde.delta {
            positive("spde.delta", d)?;
        }

        let h = &self.harness;
        positive("harness.lln.slope_max - slope_min", h.lln.slope_max - h.lln.slope_min)?;
        positive("harness.clt.variance_tol", h.clt.variance_tol)?;
        positive("harness.clt.ks_alpha", h.clt.ks_alpha)?;
        positive("harness.clt.horizon", h.clt.horizon)?;
        if !(h.clt.initial > 0.0 && h.clt.initial < 1.0) {
            return Err(config_error("harness.clt.initial", "must lie in (0, 1)"));
        }
        positive("harness.continuum.moment", h.continuum.moment)?;
        positive("harness.continuum.fraction", h.continuum.fraction)?;
        increasing("harness.noise.levels", &h.noise.levels.iter().map(|&m| m as f64).collect::<Vec<_>>())?;
        positive("harness.noise.dt", h.noise.dt)?;
        if h.noise.draws < 2 || h.noise.half_length == 0 {
            return Err(config_error("harness.noise", "needs at least 2 draws and a positive half-length"));
        }
        if self.output.directory.is_empty() {
            return Err(config_error("output.directory", "must not be empty"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::KernelFamily;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = Config::default();
        c.validate().unwrap();
        let back = Config::from_toml_str(&c.to_toml(), &[]).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn unknown_keys_report_their_path() {
        let err = Config::from_toml_str("[chain]\nreplica = 3\n", &[]).unwrap_err();
        match err {
            Error::Config { key, .. } => assert!(key.starts_with("chain"), "{key}"),
            other => panic!("{other:?}"),
        }
        let err = Config::from_toml_str("[model.gain]\ngamma = 8.0\nkappa = 0.5\nbeta = 1\n", &[]).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key.starts_with("model.gain")), "{err:?}");
    }

    #[test]
    fn overrides_last_wins_and_types_parse() {
        let o = |s: &str| s.to_string();
        let c = Config::from_toml_str(
            "",
            &[o("chain.replicas=50"), o("model.kernel.family=gaussian"), o("chain.replicas = 70"), o("spde.delta=0.02")],
        )
        .unwrap();
        assert_eq!(c.chain.replicas, 70);
        assert_eq!(c.model.kernel.family, KernelFamily::Gaussian);
        assert_eq!(c.spde.delta, Some(0.02));
        let a = Config::from_toml_str("", &[o("wave.h=0.1"), o("chain.replicas=9")]).unwrap();
        let b = Config::from_toml_str("", &[o("chain.replicas=9"), o("wave.h=0.1")]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn validation_names_the_key() {
        let bad = Config::from_toml_str("", &["chain.sizes=[100, 50]".into()]).unwrap_err();
        assert!(matches!(bad, Error::Config { ref key, .. } if key == "chain.sizes"));
        let bad = Config::from_toml_str("", &["noise.cells_per_unit=64".into()]).unwrap_err();
        assert!(matches!(bad, Error::Config { ref key, .. } if key == "noise.cells_per_unit"));
        assert!(Config::from_toml_str("", &["novalue".into()]).is_err());
    }
}
