use serde::{Deserialize, Serialize};

/// Training hyperparameters. Serialized keys mirror the field names exactly,
/// both in `--config` files and in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub embedding_dim: usize,
    pub hidden: usize,
    pub target_encoder_hidden: usize,
    pub vocab: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lambda_or: f64,
    pub lambda_sc: f64,
    pub negatives: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            embedding_dim: 100,
            hidden: 150,
            target_encoder_hidden: 150,
            vocab: 50_000,
            dropout: 0.1,
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 20,
            lambda_or: 1.0,
            lambda_sc: 0.03,
            negatives: 16,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> crate::error::Result<()> {
        let positive = [
            ("embedding_dim", self.embedding_dim),
            ("hidden", self.hidden),
            ("target_encoder_hidden", self.target_encoder_hidden),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(crate::error::KpError::InvalidInput(format!("{name} must be positive")));
            }
        }
        if self.vocab <= 6 {
            return Err(crate::error::KpError::InvalidInput(
                "vocab must exceed the 6 reserved tokens".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(crate::error::KpError::InvalidInput("dropout must be in [0, 1)".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(crate::error::KpError::InvalidInput("learning_rate must be positive".into()));
        }
        if self.lambda_or < 0.0 || self.lambda_sc < 0.0 {
            return Err(crate::error::KpError::InvalidInput("lambdas must be non-negative".into()));
        }
        Ok(())
    }
}
