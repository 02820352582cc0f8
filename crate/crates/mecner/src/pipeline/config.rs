//! Model and training configuration.

use serde::{Deserialize, Serialize};

use crate::encoders::EncoderConfig;
use crate::nd::AdamConfig;

use super::error::PipelineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub char_emb_dim: usize,
    pub word_emb_dim: usize,
    pub radical_emb_dim: usize,
    pub keep_prob: f64,
    pub optimizer: AdamConfig,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            char_emb_dim: 200,
            word_emb_dim: 200,
            radical_emb_dim: 200,
            keep_prob: 0.8,
            optimizer: AdamConfig::default(),
            max_epochs: 100,
            patience: 10,
            seed: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.encoder.validate().map_err(PipelineError::Config)?;
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(PipelineError::Config(format!(
                "keep_prob must be in (0, 1], got {}",
                self.keep_prob
            )));
        }
        if self.max_epochs == 0 {
            return Err(PipelineError::Config("max_epochs must be >= 1".into()));
        }
        if self.patience > self.max_epochs {
            return Err(PipelineError::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        for (name, dim) in [
            ("char_emb_dim", self.char_emb_dim),
            ("word_emb_dim", self.word_emb_dim),
            ("radical_emb_dim", self.radical_emb_dim),
        ] {
            if dim == 0 {
                return Err(PipelineError::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_settings() {
        let c = ModelConfig::default();
        assert_eq!(c.encoder.gru_dim, 150);
        assert_eq!(c.encoder.conv_kernel, 3);
        assert_eq!(c.char_emb_dim, 200);
        assert_eq!(c.keep_prob, 0.8);
        assert_eq!(c.max_epochs, 100);
        assert_eq!(c.patience, 10);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn serde_round_trip_is_lossless() {
        let mut c = ModelConfig {
            keep_prob: 0.73,
            ..ModelConfig::default()
        };
        c.optimizer.lr = 2.5e-4;
        c.encoder.use_radical = false;
        let json = serde_json::to_string(&c).unwrap();
        let back: ModelConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let json = r#"{"keep_prob": 0.8, "keeep_prob": 0.9}"#;
        let err = serde_json::from_str::<ModelConfig>(json).unwrap_err();
        assert!(err.to_string().contains("keeep_prob"), "{err}");
    }

    #[test]
    fn invalid_values_fail_validation() {
        let c = ModelConfig {
            keep_prob: 0.0,
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());

        let mut c = ModelConfig::default();
        c.patience = c.max_epochs + 1;
        assert!(c.validate().is_err());

        let mut c = ModelConfig::default();
        c.encoder.conv_kernel = 4;
        assert!(c.validate().is_err());
    }
}
