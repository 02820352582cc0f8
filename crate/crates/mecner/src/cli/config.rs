//! The JSON run configuration and `--set` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::pipeline::ModelConfig;

use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum OutputFormat {
    Text,
    Json,
}

/// Everything a run needs: input paths, model settings, run count,
/// and output format. Unknown keys are rejected so a typo cannot
/// silently fall back to a default.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub train_corpus: Option<PathBuf>,
    pub dev_corpus: Option<PathBuf>,
    pub test_corpus: Option<PathBuf>,
    pub char_embeddings: Option<PathBuf>,
    pub word_embeddings: Option<PathBuf>,
    pub radical_table: Option<PathBuf>,
    pub train_segmentation: Option<PathBuf>,
    pub dev_segmentation: Option<PathBuf>,
    pub test_segmentation: Option<PathBuf>,
    pub model_out: Option<PathBuf>,
    pub model: ModelConfig,
    pub n_runs: usize,
    pub format: Option<OutputFormat>,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            train_corpus: None,
            dev_corpus: None,
            test_corpus: None,
            char_embeddings: None,
            word_embeddings: None,
            radical_table: None,
            train_segmentation: None,
            dev_segmentation: None,
            test_segmentation: None,
            model_out: None,
            model: ModelConfig::default(),
            n_runs: 1,
            format: None,
        }
    }
}

/// Applies one `key=value` override onto the raw JSON tree. Dotted
/// keys descend into objects; the value is parsed as JSON when
/// possible and kept as a string otherwise.
fn apply_override(tree: &mut serde_json::Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects key=value, got {assignment:?}")))?;
    let value: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| {
            CliError::Config(format!("--set {key}: {} is not an object", parts[..i].join(".")))
        })?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    unreachable!("split never yields zero parts");
}

impl CliConfig {
    /// Loads the config file and applies `--set` overrides. Unknown
    /// keys at any level fail the typed parse.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, overrides)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut tree: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| CliError::Config(e.to_string()))?;
        if !tree.is_object() {
            return Err(CliError::Config("configuration must be a JSON object".into()));
        }
        for assignment in overrides {
            apply_override(&mut tree, assignment)?;
        }
        let config: CliConfig =
            serde_json::from_value(tree).map_err(|e| CliError::Config(e.to_string()))?;
        config.model.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }

    /// Fails with the offending key when a referenced path is missing
    /// from the filesystem.
    pub fn check_paths_exist(&self) -> Result<(), CliError> {
        let entries: [(&str, &Option<PathBuf>); 9] = [
            ("train_corpus", &self.train_corpus),
            ("dev_corpus", &self.dev_corpus),
            ("test_corpus", &self.test_corpus),
            ("char_embeddings", &self.char_embeddings),
            ("word_embeddings", &self.word_embeddings),
            ("radical_table", &self.radical_table),
            ("train_segmentation", &self.train_segmentation),
            ("dev_segmentation", &self.dev_segmentation),
            ("test_segmentation", &self.test_segmentation),
        ];
        for (key, path) in entries {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(CliError::Config(format!(
                        "{key}: path {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// The key must be present; names it otherwise.
    pub fn require<'a>(&self, key: &str, value: &'a Option<PathBuf>) -> Result<&'a Path, CliError> {
        value
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("missing required config key {key:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = CliConfig::parse(r#"{"n_runs": 3}"#, &[]).unwrap();
        assert_eq!(c.n_runs, 3);
        assert_eq!(c.model.keep_prob, 0.8);
        assert!(c.train_corpus.is_none());
    }

    #[test]
    fn unknown_top_level_key_is_rejected() {
        let err = CliConfig::parse(r#"{"train_corpsu": "x"}"#, &[]).unwrap_err();
        assert!(err.to_string().contains("train_corpsu"), "{err}");
    }

    #[test]
    fn unknown_nested_key_is_rejected() {
        let err = CliConfig::parse(r#"{"model": {"keep_probb": 0.5}}"#, &[]).unwrap_err();
        assert!(err.to_string().contains("keep_probb"), "{err}");
    }

    #[test]
    fn set_overrides_reach_nested_keys() {
        let c = CliConfig::parse(
            "{}",
            &[
                "model.keep_prob=0.5".to_string(),
                "model.encoder.gru_dim=32".to_string(),
                "n_runs=5".to_string(),
                "train_corpus=/tmp/x.tsv".to_string(),
            ],
        )
        .unwrap();
        assert_eq!(c.model.keep_prob, 0.5);
        assert_eq!(c.model.encoder.gru_dim, 32);
        assert_eq!(c.n_runs, 5);
        assert_eq!(c.train_corpus.unwrap(), PathBuf::from("/tmp/x.tsv"));
    }

    #[test]
    fn set_with_unknown_key_fails_typed_parse() {
        let err = CliConfig::parse("{}", &["model.kep_prob=0.5".to_string()]).unwrap_err();
        assert!(err.to_string().contains("kep_prob"), "{err}");
    }

    #[test]
    fn invalid_model_values_fail_validation() {
        let err = CliConfig::parse(r#"{"model": {"keep_prob": 1.5}}"#, &[]).unwrap_err();
        assert!(err.to_string().contains("keep_prob"), "{err}");
    }
}
