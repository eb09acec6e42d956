// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};

use quebian_core::node::NodeConfig;
use serde::{Deserialize, Serialize};

pub const CONFIG_ENV: &str = "QUEBIAN_CONFIG";
pub const PORT_ENV: &str = "QUEBIAN_PORT";
pub const DEFAULT_PORT: u16 = 8468;

/// Gateway configuration file. Relative paths resolve against the working
/// directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub ledger_path: PathBuf,
    /// Wallet file of the DID the gateway signs proposals with. Created on
    /// first start.
    pub identity_path: PathBuf,
    pub node: NodeConfig,
    pub commit_timeout_ms: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            ledger_path: "quebian.ledger".into(),
            identity_path: "gateway.did.json".into(),
            node: NodeConfig::default(),
            commit_timeout_ms: 5000,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
}

impl GatewayConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })
    }

    /// Loads `path` if given, else the file named by `QUEBIAN_CONFIG`, else
    /// defaults.
    pub fn resolve(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) => Self::load(Path::new(&p)),
                None => Ok(Self::default()),
            },
        }
    }
}
