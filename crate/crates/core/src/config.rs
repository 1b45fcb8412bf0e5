//! Simulation configuration file and content digests.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cascade::DEFAULT_STAGE_CAP;
use crate::error::{Error, Result};
use crate::failure::{FailureDefaults, FailureModel, MaintenanceEffect};
use crate::network::Network;
use crate::redispatch::LpWeights;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "format_version")]
    pub format_version: u32,
    #[serde(default)]
    pub failure: FailureDefaults,
    #[serde(default)]
    pub maintenance: MaintenanceEffect,
    #[serde(default = "stage_cap")]
    pub stage_cap: u32,
    #[serde(default)]
    pub lp: LpWeights,
    /// Record loading traces for every branch instead of maintainable ones only.
    #[serde(default)]
    pub full_traces: bool,
}

fn format_version() -> u32 {
    FORMAT_VERSION
}

fn stage_cap() -> u32 {
    DEFAULT_STAGE_CAP
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            format_version: FORMAT_VERSION,
            failure: FailureDefaults::default(),
            maintenance: MaintenanceEffect::default(),
            stage_cap: DEFAULT_STAGE_CAP,
            lp: LpWeights::default(),
            full_traces: false,
        }
    }
}

impl SimulationConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            path: format!("$.{}", e.path()),
            message: e.inner().to_string(),
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn check(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported format_version {}", self.format_version)));
        }
        self.failure.line.check()?;
        self.failure.transformer.check()?;
        for p in self.failure.overrides.values() {
            p.check()?;
        }
        self.maintenance.check()?;
        if !(self.lp.shed > 0.0 && self.lp.redispatch >= 0.0) {
            return Err(Error::Config(format!("LP weights {:?} must be positive", self.lp)));
        }
        Ok(())
    }

    pub fn failure_model(&self, network: &Network) -> Result<FailureModel> {
        FailureModel::for_network(network, &self.failure)
    }
}

/// Hex SHA-256 of `bytes`.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn network_hash(network: &Network) -> String {
    digest(network.to_json().as_bytes())
}

/// Digest of everything that shapes the sampled distribution besides the
/// network: failure parameters, stage cap and LP weights.
pub fn model_hash(model: &FailureModel, config: &SimulationConfig) -> String {
    let doc = serde_json::json!({
        "failure_model": model,
        "stage_cap": config.stage_cap,
        "lp": config.lp,
    });
    digest(doc.to_string().as_bytes())
}

pub fn effect_hash(effect: &MaintenanceEffect) -> String {
    digest(serde_json::to_string(effect).expect("effect serializes").as_bytes())
}
