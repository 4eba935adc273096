use std::path::Path;

use serde::{Deserialize, Serialize};
use takagi::montecarlo::{
    AppendixConfig, CltConfig, GeometricConfig, IdentitiesConfig, LilConfig, LlnConfig,
    MomentsConfig,
};

pub const SEED_ENV: &str = "TAKAGI_SEED";
pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Everything a run reads, in its TOML file form.
///
/// Top-level keys are shared by all subcommands; each suite has its own table.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seq: Option<String>,
    #[serde(rename = "N")]
    pub n: Option<Vec<u64>>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub bits: Option<usize>,
    pub tol: Option<f64>,
    pub grid: Option<u64>,
    pub r: Option<f64>,
    pub format: Option<Format>,
    pub lln: LlnConfig,
    pub clt: CltConfig,
    pub lil: LilConfig,
    pub geometric: GeometricConfig,
    pub appendix: AppendixConfig,
    pub identities: IdentitiesConfig,
    pub moments: MomentsConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config `{}`: {e}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| format!("bad config: {e}"))
    }

    pub fn to_toml(&self) -> Result<String, String> {
        toml::to_string(self).map_err(|e| e.to_string())
    }

    /// Seed from the config, then the environment, then the built-in default.
    pub fn resolve_seed(&mut self) -> Result<u64, String> {
        if self.seed.is_none() {
            if let Ok(v) = std::env::var(SEED_ENV) {
                let seed = v
                    .trim()
                    .parse()
                    .map_err(|_| format!("{SEED_ENV}=`{v}` is not an unsigned integer"))?;
                self.seed = Some(seed);
            }
        }
        Ok(*self.seed.get_or_insert(DEFAULT_SEED))
    }
}

/// `Some(flag)` wins over the file value.
pub fn overlay<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

pub fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}
