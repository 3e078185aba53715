//! File-backed configuration and the resolved record written next to every
//! output.

use std::path::{Path, PathBuf};

use elastisr_core::fem::DatasetParams;
use elastisr_core::models::ModelConfig;
use elastisr_core::train::TrainConfig;
use elastisr_core::Execution;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "ELASTISR_OUT";
pub const RUN_CONFIG_FILE: &str = "run_config.toml";

/// Settings read from `--config`. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: DatasetParams,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config file {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub checkpoints: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
}

/// Fully merged settings of one invocation: defaults, then the config file,
/// then flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_file: Option<PathBuf>,
    pub execution: Execution,
    pub paths: Paths,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes to TOML")
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
        }
        std::fs::write(path, self.to_toml()).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::runtime(format!("invalid run config {}: {e}", path.display())))
    }
}

/// `$ELASTISR_OUT` if set, otherwise `./runs`.
pub fn out_root() -> PathBuf {
    std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use elastisr_core::models::Arch;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: FileConfig = toml::from_str("[train]\nepochs = 7\n[model]\narch = \"fsrcnn\"\n[model.rdn]\ngrowth = 16\n").unwrap();
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.train.lr, 1e-4);
        assert_eq!(cfg.model.arch, Arch::Fsrcnn);
        assert_eq!(cfg.model.rdn.growth, 16);
        assert_eq!(cfg.model.rdn.features, 32);
        assert_eq!(cfg.dataset.lr_res, 32);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("[train]\nepochz = 7\n").is_err());
        assert!(toml::from_str::<FileConfig>("[trian]\n").is_err());
    }

    #[test]
    fn run_config_round_trips_through_toml() {
        let run = RunConfig {
            command: "train".into(),
            config_file: None,
            execution: Execution::Sequential,
            paths: Paths { data: Some("d".into()), checkpoints: vec!["a.ckpt".into()], ..Default::default() },
            samples: Some(vec![1, 2]),
            dataset: Some(DatasetParams::default()),
            model: Some(ModelConfig::default()),
            train: Some(TrainConfig::default()),
        };
        let back: RunConfig = toml::from_str(&run.to_toml()).unwrap();
        assert_eq!(back, run);
    }
}
