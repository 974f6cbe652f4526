use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::optim::OptimizerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub layers: usize,
    pub heads: usize,
    pub width: usize,
    /// Hidden width of the gated MLP.
    pub mlp_hidden: usize,
    /// Maximum total sequence length (text plus pose queries).
    pub context: usize,
    pub num_queries: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            heads: 4,
            width: 128,
            mlp_hidden: 256,
            context: 512,
            num_queries: 80,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.heads == 0 || self.width == 0 || self.mlp_hidden == 0 {
            return Err(Error::InvalidArgument(
                "architecture sizes must be positive".into(),
            ));
        }
        if self.width % self.heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "width {} is not divisible by {} heads",
                self.width, self.heads
            )));
        }
        if self.context <= self.num_queries {
            return Err(Error::InvalidArgument(
                "context must exceed the number of pose queries".into(),
            ));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.width / self.heads
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoraConfig {
    pub on: bool,
    pub r: usize,
    pub alpha: f64,
    pub dropout: f64,
}

impl Default for LoraConfig {
    fn default() -> Self {
        Self {
            on: false,
            r: 64,
            alpha: 16.0,
            dropout: 0.05,
        }
    }
}

impl LoraConfig {
    /// Multiplier applied to `B·A`.
    pub fn scale(&self) -> f64 {
        self.alpha / self.r as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::InvalidArgument("LoRA rank must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(
                "LoRA dropout must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Declarative training configuration; every key is optional in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub w_text: f64,
    pub w_pose: f64,
    /// Optimizer registry key (`sgd` or `adam`).
    pub optimizer: String,
    pub momentum: f64,
    pub lora: LoraConfig,
    pub arch: ArchConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            lr: 5e-5,
            batch: 8,
            epochs: 5,
            w_text: 1.0,
            w_pose: 1.0,
            optimizer: "sgd".into(),
            momentum: 0.0,
            lora: LoraConfig::default(),
            arch: ArchConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.lora.on {
            self.lora.validate()?;
        }
        if self.batch == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if self.w_text < 0.0 || self.w_pose < 0.0 || self.w_text + self.w_pose == 0.0 {
            return Err(Error::InvalidArgument(
                "loss weights must be non-negative and not both zero".into(),
            ));
        }
        Ok(())
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            name: self.optimizer.clone(),
            lr: self.lr,
            momentum: self.momentum,
            ..Default::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lora_scale_for_rank_64_alpha_16() {
        let c = LoraConfig::default();
        assert_eq!((c.r, c.alpha, c.dropout), (64, 16.0, 0.05));
        assert_eq!(c.scale(), 0.25);
    }

    #[test]
    fn defaults_follow_reference_hyperparameters() {
        let c = TrainConfig::default();
        assert_eq!((c.lr, c.batch, c.epochs), (5e-5, 8, 5));
        assert_eq!((c.arch.layers, c.arch.heads, c.arch.width), (4, 4, 128));
    }

    #[test]
    fn parses_documented_keys() {
        let c = TrainConfig::from_toml(
            r#"
            seed = 3
            lr = 0.01
            batch = 4
            epochs = 12
            w_text = 1.0
            w_pose = 0.0
            [lora]
            on = true
            r = 8
            alpha = 16.0
            dropout = 0.0
            [arch]
            layers = 2
            heads = 2
            width = 32
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, 3);
        assert!(c.lora.on);
        assert_eq!(c.lora.scale(), 2.0);
        assert_eq!(c.arch.width, 32);
        assert_eq!(c.arch.context, 512);
        c.validate().unwrap();
        assert!(TrainConfig::from_toml("lr = \"fast\"").is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = TrainConfig::default();
        c.arch.heads = 3;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.w_text = 0.0;
        c.w_pose = 0.0;
        assert!(c.validate().is_err());
    }
}
