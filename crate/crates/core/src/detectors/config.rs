use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Parallelism;

/// Training hyperparameters shared by all detector families, plus one
/// sub-table per family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Adam step size for the transformers.
    pub lr: f64,
    /// L2 penalty on logistic weights.
    pub l2: f64,
    pub early_stop_patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub parallelism: Parallelism,
    pub logistic: LogisticConfig,
    pub gbdt: GbdtConfig,
    pub transformer: TransformerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 256,
            lr: 1e-3,
            l2: 1e-4,
            early_stop_patience: 5,
            val_fraction: 0.1,
            seed: 0,
            parallelism: Parallelism::default(),
            logistic: LogisticConfig::default(),
            gbdt: GbdtConfig::default(),
            transformer: TransformerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticConfig {
    pub lr: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig { lr: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtConfig {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub min_child_weight: f64,
    pub lambda: f64,
    pub learning_rate: f64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            n_rounds: 100,
            max_depth: 6,
            min_child_weight: 1.0,
            lambda: 1.0,
            learning_rate: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformerConfig {
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_hidden: usize,
    /// Longest character sequence fed to the text model, CLS excluded.
    pub max_len: usize,
    /// Categorical ordinals above this are clipped onto it.
    pub c_max: usize,
    pub dropout: f64,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        TransformerConfig {
            d_model: 64,
            heads: 4,
            layers: 2,
            ff_hidden: 128,
            max_len: 512,
            c_max: 4096,
            dropout: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, detail: String| if ok { Ok(()) } else { Err(Error::config(key, detail)) };
        check(
            self.val_fraction > 0.0 && self.val_fraction <= 0.5,
            "train.val_fraction",
            format!("{} not in (0, 0.5]", self.val_fraction),
        )?;
        check(self.batch_size > 0, "train.batch_size", "must be positive".into())?;
        check(self.epochs > 0, "train.epochs", "must be positive".into())?;
        check(self.lr > 0.0, "train.lr", "must be positive".into())?;
        check(self.l2 >= 0.0, "train.l2", "must be non-negative".into())?;
        check(self.logistic.lr > 0.0, "train.logistic.lr", "must be positive".into())?;
        let g = &self.gbdt;
        check(g.learning_rate > 0.0, "train.gbdt.learning_rate", "must be positive".into())?;
        check(g.lambda >= 0.0, "train.gbdt.lambda", "must be non-negative".into())?;
        check(g.min_child_weight >= 0.0, "train.gbdt.min_child_weight", "must be non-negative".into())?;
        let t = &self.transformer;
        check(
            t.heads > 0 && t.d_model.is_multiple_of(t.heads),
            "train.transformer.heads",
            format!("d_model {} not divisible by {} heads", t.d_model, t.heads),
        )?;
        check(t.d_model.is_multiple_of(2), "train.transformer.d_model", "must be even".into())?;
        check(t.max_len > 0, "train.transformer.max_len", "must be positive".into())?;
        check(
            (0.0..1.0).contains(&t.dropout),
            "train.transformer.dropout",
            format!("{} not in [0, 1)", t.dropout),
        )
    }
}
