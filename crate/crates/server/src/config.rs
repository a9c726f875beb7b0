//! Settings resolution. Each value comes from the first source that sets
//! it: command line, `MUQAR_*` environment variable, TOML config file,
//! built-in default. Clap covers the first two; this module adds the rest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use muqar_core::forecast::{Architecture, QarKind};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub listen: Option<String>,
    pub registry_dir: Option<PathBuf>,
    pub trend_store: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub model_version: Option<String>,
    pub train: TrainFile,
    pub synthetic: SyntheticFile,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFile {
    pub architecture: Option<String>,
    pub qar_kind: Option<String>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub patience: Option<usize>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub a_max: Option<usize>,
    pub demographic: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticFile {
    pub garments: Option<usize>,
    pub weeks: Option<usize>,
    pub demographics: Option<bool>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.into(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.into(),
            source,
        })
    }
}

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
pub const DEFAULT_REGISTRY: &str = "models";
pub const DEFAULT_TREND_STORE: &str = "records.csv";
pub const DEFAULT_TAXONOMY: &str = "taxonomy.json";

/// First set value wins.
pub fn pick<T>(cli_or_env: Option<T>, file: Option<T>, default: T) -> T {
    cli_or_env.or(file).unwrap_or(default)
}

pub fn parse_architecture(s: &str) -> Result<Architecture, ConfigError> {
    match s.to_ascii_lowercase().replace('-', "_").as_str() {
        "fusion_mlp" | "fusionmlp" => Ok(Architecture::FusionMlp),
        "qar" => Ok(Architecture::Qar),
        "muqar" | "mu_qar" => Ok(Architecture::MuQar),
        _ => Err(ConfigError::Invalid(format!(
            "unknown architecture '{s}' (fusion_mlp, qar, muqar)"
        ))),
    }
}

pub fn parse_qar_kind(s: &str) -> Result<QarKind, ConfigError> {
    QarKind::parse(&s.to_ascii_lowercase().replace('-', "_")).ok_or_else(|| {
        let names: Vec<_> = QarKind::ALL.iter().map(|k| k.name()).collect();
        ConfigError::Invalid(format!("unknown QAR kind '{s}' ({})", names.join(", ")))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_is_cli_then_file_then_default() {
        assert_eq!(pick(Some(1), Some(2), 3), 1);
        assert_eq!(pick(None, Some(2), 3), 2);
        assert_eq!(pick(None, None, 3), 3);
    }

    #[test]
    fn file_config_parses_and_rejects_typos() {
        let c: FileConfig = toml::from_str(
            "seed = 7\nlisten = \"0.0.0.0:9000\"\n[train]\nepochs = 3\nqar_kind = \"cnn\"\n",
        )
        .unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.train.epochs, Some(3));
        assert!(toml::from_str::<FileConfig>("sed = 7\n").is_err());
    }

    #[test]
    fn names_parse() {
        assert_eq!(parse_architecture("MuQAR").unwrap(), Architecture::MuQar);
        assert_eq!(parse_architecture("fusion-mlp").unwrap(), Architecture::FusionMlp);
        assert_eq!(parse_qar_kind("conv-lstm").unwrap(), QarKind::ConvLstm);
        assert!(parse_qar_kind("gru").is_err());
    }
}
