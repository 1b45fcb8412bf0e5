//! On-disk workspace: network, configuration, sample set, cached factor
//! matrices and a manifest of the hashes tying them together.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use gridrisk_core::config::{self, SimulationConfig, FORMAT_VERSION};
use gridrisk_core::failure::FailureModel;
use gridrisk_core::network::Network;
use gridrisk_core::risk::{build_factors, SurvivalFactors};
use gridrisk_core::sampling::{self, SampleSet};

use crate::AppError;

pub const NETWORK_FILE: &str = "network.json";
pub const CONFIG_FILE: &str = "config.json";
pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const MATRICES_FILE: &str = "matrices.bin";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Serialize, Deserialize, Clone, Debug, Default, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub network_hash: Option<String>,
    pub config_hash: Option<String>,
    pub samples: Option<SamplesEntry>,
    pub matrices: Option<MatricesEntry>,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SamplesEntry {
    pub master_seed: u64,
    pub count: u64,
    pub network_hash: String,
    pub model_hash: String,
}

/// The cache key of `matrices.bin`.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MatricesEntry {
    pub model_hash: String,
    pub effect_hash: String,
    pub config_hash: String,
    pub count: u64,
    pub components: usize,
}

pub struct Workspace {
    pub root: PathBuf,
}

/// Network, configuration and derived hashes, loaded together.
pub struct Loaded {
    pub network: Network,
    pub config: SimulationConfig,
    pub model: FailureModel,
    pub network_hash: String,
    pub config_hash: String,
    pub model_hash: String,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.root.join(file)
    }

    pub fn manifest(&self) -> Result<Manifest, AppError> {
        let path = self.path(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Manifest { format_version: FORMAT_VERSION, ..Default::default() });
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn save_manifest(&self, m: &Manifest) -> Result<(), AppError> {
        fs::write(self.path(MANIFEST_FILE), serde_json::to_string_pretty(m)? + "\n")?;
        Ok(())
    }

    pub fn write_network(&self, network: &Network) -> Result<(), AppError> {
        fs::create_dir_all(&self.root)?;
        fs::write(self.path(NETWORK_FILE), network.to_json() + "\n")?;
        let mut m = self.manifest()?;
        m.network_hash = Some(config::network_hash(network));
        self.save_manifest(&m)
    }

    pub fn load(&self) -> Result<Loaded, AppError> {
        let path = self.path(NETWORK_FILE);
        if !path.exists() {
            return Err(AppError::Usage(format!("no {} in {}; run `import` first", NETWORK_FILE, self.root.display())));
        }
        let network = Network::from_json(&fs::read_to_string(path)?)?;
        let cfg_path = self.path(CONFIG_FILE);
        let (config, config_hash) = if cfg_path.exists() {
            let text = fs::read_to_string(cfg_path)?;
            (SimulationConfig::from_json(&text)?, config::digest(text.as_bytes()))
        } else {
            (SimulationConfig::default(), config::digest(SimulationConfig::default().to_json().as_bytes()))
        };
        let model = config.failure_model(&network)?;
        Ok(Loaded {
            network_hash: config::network_hash(&network),
            model_hash: config::model_hash(&model, &config),
            network,
            config,
            model,
            config_hash,
        })
    }

    pub fn has_samples(&self) -> bool {
        self.path(SAMPLES_FILE).exists()
    }

    /// The sample set, refusing one generated for another network or model.
    pub fn samples(&self, loaded: &Loaded) -> Result<Option<SampleSet>, AppError> {
        if !self.has_samples() {
            return Ok(None);
        }
        let set = sampling::read_jsonl(&self.path(SAMPLES_FILE))?;
        check_fresh(&set, loaded)?;
        Ok(Some(set))
    }

    /// Factor matrices for the current samples and maintenance effect,
    /// read from the cache when its key matches and rebuilt otherwise.
    pub fn factors(&self, loaded: &Loaded, set: &SampleSet, write_cache: bool) -> Result<Arc<SurvivalFactors>, AppError> {
        let effect = &loaded.config.maintenance;
        let key = MatricesEntry {
            model_hash: set.header.model_hash.clone(),
            effect_hash: config::effect_hash(effect),
            config_hash: loaded.config_hash.clone(),
            count: set.len() as u64,
            components: loaded.network.maintainable_ids().len(),
        };
        let mut manifest = self.manifest()?;
        let cache = self.path(MATRICES_FILE);
        if manifest.matrices.as_ref() == Some(&key) && cache.exists() {
            let mut file = std::io::BufReader::new(fs::File::open(&cache)?);
            if let Ok(f) = SurvivalFactors::read_blob(&mut file) {
                if f.n() == set.len() && f.model_hash == key.model_hash && f.effect_hash == key.effect_hash {
                    return Ok(Arc::new(f));
                }
            }
            log::warn!("cached matrices do not match their manifest entry; rebuilding");
        } else if manifest.matrices.is_some() {
            log::info!("cached matrices are stale; rebuilding");
        }
        let f = build_factors(set, &loaded.model, effect, &loaded.network.maintainable_ids())?;
        if write_cache {
            let mut out = std::io::BufWriter::new(fs::File::create(&cache)?);
            f.write_blob(&mut out)?;
            std::io::Write::flush(&mut out)?;
            manifest.matrices = Some(key);
            manifest.config_hash = Some(loaded.config_hash.clone());
            self.save_manifest(&manifest)?;
        }
        Ok(Arc::new(f))
    }
}

pub fn check_fresh(set: &SampleSet, loaded: &Loaded) -> Result<(), AppError> {
    if set.header.network_hash != loaded.network_hash || set.header.model_hash != loaded.model_hash {
        return Err(AppError::Stale(
            "samples were generated for a different network or failure model; rerun `simulate --force`".into(),
        ));
    }
    Ok(())
}

pub fn is_workspace(dir: &Path) -> bool {
    dir.join(NETWORK_FILE).exists()
}
