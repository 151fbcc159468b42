use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version of the environment config file layout.
pub const ENV_CONFIG_SCHEMA: u32 = 1;

/// Environment parameters, loadable from a TOML file:
///
/// ```toml
/// schema_version = 1
///
/// [grid]
/// size = 5
/// treasure = [0, 4]
/// walls = [[0, 1, 0, 2], [3, 4, 4, 4]]   # blocked edges between adjacent cells (r1, c1, r2, c2)
/// max_steps = 20
///
/// [chainkey]
/// rooms = 6
/// key_branch = 2
/// max_steps = 15
///
/// [minishop]
/// items = 20
/// values_per_attribute = 3
/// catalog_seed = 7
/// max_steps = 8
/// ```
///
/// Every table and key is optional; missing values take the defaults shown.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    #[serde(default = "schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub chainkey: ChainKeyConfig,
    #[serde(default)]
    pub minishop: MiniShopConfig,
}

fn schema() -> u32 {
    ENV_CONFIG_SCHEMA
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            schema_version: ENV_CONFIG_SCHEMA,
            grid: GridConfig::default(),
            chainkey: ChainKeyConfig::default(),
            minishop: MiniShopConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: EnvConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != ENV_CONFIG_SCHEMA {
            return Err(Error::Config(format!(
                "environment config schema_version {} is not supported (expected {ENV_CONFIG_SCHEMA})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("env config serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub size: usize,
    pub treasure: [usize; 2],
    pub walls: Vec<[usize; 4]>,
    pub max_steps: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            size: 5,
            treasure: [0, 4],
            walls: vec![
                [0, 1, 0, 2],
                [1, 1, 1, 2],
                [2, 1, 2, 2],
                [3, 3, 4, 3],
                [3, 4, 4, 4],
            ],
            max_steps: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainKeyConfig {
    /// Rooms in the main chain; the exit door is in the last one.
    pub rooms: usize,
    /// Chain room from which the key room branches off.
    pub key_branch: usize,
    pub max_steps: usize,
}

impl Default for ChainKeyConfig {
    fn default() -> Self {
        ChainKeyConfig {
            rooms: 6,
            key_branch: 2,
            max_steps: 15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiniShopConfig {
    pub items: usize,
    pub values_per_attribute: usize,
    pub catalog_seed: u64,
    pub max_steps: usize,
}

impl Default for MiniShopConfig {
    fn default() -> Self {
        MiniShopConfig {
            items: 20,
            values_per_attribute: 3,
            catalog_seed: 7,
            max_steps: 8,
        }
    }
}
