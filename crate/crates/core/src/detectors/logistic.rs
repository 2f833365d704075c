use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::features::FeatureMatrix;
use super::split::{check_labels, validation_split, EarlyStopper};
use crate::error::{Error, Result};
use crate::nn::{optimizer_step, Gradients, ParamSet, Tensor};
use crate::par::map_range;
use crate::util::{rng_from, sigmoid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_space: String,
}

impl LogisticModel {
    pub fn margin(&self, x: &FeatureMatrix, i: usize) -> f64 {
        x.row(i).dot(&self.weights) + self.bias
    }
}

/// L2-regularised logistic regression trained with mini-batch Adam and
/// early stopping on validation AUC.
pub fn train_logistic(x: &FeatureMatrix, y: &[u8], strata: Option<&[usize]>, cfg: &TrainConfig) -> Result<LogisticModel> {
    cfg.validate()?;
    check_labels(y, x.n_rows())?;
    let dim = x.n_features;
    let mut params = ParamSet::new();
    params.add("w", Tensor::zeros(&[dim]));
    params.add("b", Tensor::zeros(&[1]));
    let (mut train, val) = validation_split(y, strata, cfg.val_fraction, cfg.seed);
    let val_y: Vec<u8> = val.iter().map(|&i| y[i]).collect();
    let mut stopper = EarlyStopper::new(cfg.early_stop_patience);
    let mut rng = rng_from(cfg.seed, &["logistic", "shuffle"]);
    let beta1 = 0.9;
    for _epoch in 0..cfg.epochs {
        train.shuffle(&mut rng);
        for batch in train.chunks(cfg.batch_size) {
            let w = &params.tensor(0).data;
            let b = params.tensor(1).data[0];
            let mut gw: Vec<f64> = w.iter().map(|&v| cfg.l2 * v).collect();
            let mut gb = 0.0;
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let row = x.row(i);
                let dz = (sigmoid(row.dot(w) + b) - y[i] as f64) * scale;
                row.for_each(|f, v| gw[f] += dz * v);
                gb += dz;
            }
            params.accumulate(&Gradients(vec![gw, vec![gb]]));
            optimizer_step(&mut params, cfg.logistic.lr, beta1, 0.999, 1e-8);
        }
        if !val.is_empty() {
            let model = to_model(&params, x);
            let scores: Vec<f64> = val.iter().map(|&i| sigmoid(model.margin(x, i))).collect();
            if stopper.observe(&scores, &val_y, || params.snapshot())? {
                break;
            }
        }
    }
    if let Some(best) = stopper.into_best() {
        params.restore(&best);
    }
    let model = to_model(&params, x);
    if model.weights.iter().any(|w| !w.is_finite()) || !model.bias.is_finite() {
        return Err(Error::Graph("logistic training diverged".into()));
    }
    Ok(model)
}

fn to_model(p: &ParamSet, x: &FeatureMatrix) -> LogisticModel {
    LogisticModel {
        weights: p.tensor(0).data.clone(),
        bias: p.tensor(1).data[0],
        feature_space: x.space.clone(),
    }
}

/// `sigmoid(w · x + b)` for every row.
pub fn predict_logistic(m: &LogisticModel, x: &FeatureMatrix, cfg: &TrainConfig) -> Result<Vec<f64>> {
    x.check_space(&m.feature_space, m.weights.len())?;
    Ok(map_range(x.n_rows(), cfg.parallelism, |i| sigmoid(m.margin(x, i))))
}
