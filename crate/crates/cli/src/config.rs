use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use community_forge::equilibrium::GlobalParams;
use community_forge::numerics::NumericsConfig;

use crate::CliError;

/// One run configuration: model parameters, numerical knobs, the RNG seed
/// for agent sampling, and where outputs go.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: GlobalParams,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::missing_input(format!("cannot read config {path:?}: {e}")))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("malformed config {path:?}: {e}")))?;
        config
            .params
            .validate()
            .map_err(|e| CliError::usage(format!("invalid model parameters: {e}")))?;
        config
            .numerics
            .validate()
            .map_err(|e| CliError::usage(format!("invalid numerics: {e}")))?;
        Ok(config)
    }
}
