//! `tutor serve` configuration file.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use tutor_core::service::TutorConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServeConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    /// Directory receiving one `<session_id>.jsonl` per session.
    #[serde(default)]
    pub log_dir: Option<PathBuf>,
    /// Forest model used for condition assignment; the rule baseline otherwise.
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(flatten)]
    pub tutor: TutorConfig,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig { listen: default_listen(), log_dir: None, model: None, tutor: TutorConfig::default() }
    }
}

impl ServeConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<ServeConfig> {
        let config: ServeConfig = toml::from_str(text)?;
        config.tutor.validate()?;
        Ok(config)
    }

    /// Relative `log_dir` and `model` paths resolve against the file's directory.
    pub fn load(path: &Path) -> anyhow::Result<ServeConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config = Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.log_dir, &mut config.model].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flattened_tutor_fields() {
        let c = ServeConfig::from_toml(
            r#"
            listen = "0.0.0.0:9000"
            experimental_share = 0.5
            seed = 42
            [prompt]
            prompt_text = "Try BC."
            [weights]
            accuracy = 0.6
            time = 0.2
            length = 0.2
            "#,
        )
        .unwrap();
        assert_eq!(c.listen, "0.0.0.0:9000");
        assert_eq!(c.tutor.experimental_share, 0.5);
        assert_eq!(c.tutor.seed, 42);
        assert_eq!(c.tutor.prompt.prompt_text, "Try BC.");
        assert_eq!(c.tutor.prompt.wait_distribution.len(), 3);
        assert_eq!(c.tutor.weights.accuracy, 0.6);
    }

    #[test]
    fn defaults_and_validation() {
        assert_eq!(ServeConfig::from_toml("").unwrap(), ServeConfig::default());
        assert!(ServeConfig::from_toml("experimental_share = 1.5").is_err());
    }
}
