use serde::{Deserialize, Serialize};

use crate::corpus::EEG_FEATURE_DIM;
use crate::error::{config, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Full,
    Compact,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub model_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub max_positions: usize,
    pub output_dim: usize,
    pub profile: Profile,
}

impl EncoderConfig {
    /// 840 → 768, three layers, eight heads, feed-forward width 2048.
    pub fn full() -> Self {
        EncoderConfig {
            input_dim: EEG_FEATURE_DIM,
            model_dim: 768,
            layers: 3,
            heads: 8,
            ffn_dim: 2048,
            max_positions: 64,
            output_dim: 768,
            profile: Profile::Full,
        }
    }

    /// Small encoder for tests and desk-scale synthetic runs.
    pub fn compact(input_dim: usize, output_dim: usize) -> Self {
        EncoderConfig {
            input_dim,
            model_dim: 32,
            layers: 2,
            heads: 4,
            ffn_dim: 64,
            max_positions: 64,
            output_dim,
            profile: Profile::Compact,
        }
    }

    pub fn for_profile(profile: Profile, input_dim: usize, output_dim: usize) -> Self {
        match profile {
            Profile::Full => EncoderConfig {
                input_dim,
                output_dim,
                ..EncoderConfig::full()
            },
            Profile::Compact => EncoderConfig::compact(input_dim, output_dim),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.input_dim,
            self.model_dim,
            self.heads,
            self.ffn_dim,
            self.max_positions,
            self.output_dim,
        ];
        if dims.contains(&0) {
            return Err(config("encoder dimensions must be positive"));
        }
        if self.model_dim % self.heads != 0 {
            return Err(config(format!(
                "model_dim {} not divisible by heads {}",
                self.model_dim, self.heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub tau_init: f64,
    pub learn_tau: bool,
    /// Weight of the clean-vs-perturbed instance discrimination term.
    pub aux_weight: f64,
    /// Std of the Gaussian perturbation, relative to each segment's feature RMS.
    pub aux_noise: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            epochs: 50,
            tau_init: 0.07,
            learn_tau: false,
            aux_weight: 0.0,
            aux_noise: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(config("batch size must be at least 1"));
        }
        if self.aux_weight < 0.0 {
            return Err(config("aux_weight must be non-negative"));
        }
        if self.tau_init <= 0.0 {
            return Err(config("temperature must be positive"));
        }
        if self.learning_rate <= 0.0 {
            return Err(config("learning rate must be positive"));
        }
        Ok(())
    }
}
