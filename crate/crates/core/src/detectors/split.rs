//! Validation hold-out and early stopping shared by the iterative detectors.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::eval::metrics::roc_auc;
use crate::util::rng_from;

/// Smallest training set for which a validation split is carved out.
pub const MIN_ROWS_FOR_VALIDATION: usize = 20;

/// Refuse training data that lacks either class.
pub fn check_labels(y: &[u8], n: usize) -> Result<()> {
    if y.len() != n {
        return Err(Error::TensorShape(format!("{} labels for {n} rows", y.len())));
    }
    if !y.contains(&0) || !y.contains(&1) {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Stratified hold-out: from every `(stratum, label)` group a `fraction`
/// (rounded) is moved to validation. Strata default to the labels.
///
/// Returns `(train, validation)`. Validation is empty when the data is too
/// small or the held-out part would miss a class; callers then train for
/// the full epoch budget.
pub fn validation_split(y: &[u8], strata: Option<&[usize]>, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let all: Vec<usize> = (0..y.len()).collect();
    if y.len() < MIN_ROWS_FOR_VALIDATION {
        return (all, Vec::new());
    }
    let mut groups: BTreeMap<(usize, u8), Vec<usize>> = BTreeMap::new();
    for i in 0..y.len() {
        let s = strata.map_or(0, |s| s[i]);
        groups.entry((s, y[i])).or_default().push(i);
    }
    let mut rng = rng_from(seed, &["validation-split"]);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (_, mut idx) in groups {
        idx.shuffle(&mut rng);
        let k = ((idx.len() as f64 * fraction).round() as usize).min(idx.len().saturating_sub(1));
        val.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    let has_both = |idx: &[usize]| idx.iter().any(|&i| y[i] == 0) && idx.iter().any(|&i| y[i] == 1);
    if !has_both(&val) || !has_both(&train) {
        return (all, Vec::new());
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Tracks the best validation AUC and the parameters that produced it.
/// Equal AUCs are ranked by validation log-loss, so models whose scores
/// carry no ranking yet (e.g. constant outputs) still make progress.
pub struct EarlyStopper<S> {
    patience: usize,
    best_auc: f64,
    best_loss: f64,
    best: Option<S>,
    since_best: usize,
}

fn log_loss(probs: &[f64], labels: &[u8]) -> f64 {
    let eps = 1e-15;
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(eps, 1.0 - eps);
            if y == 1 { -p.ln() } else { -(1.0 - p).ln() }
        })
        .sum::<f64>()
        / probs.len().max(1) as f64
}

impl<S> EarlyStopper<S> {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best_auc: f64::NEG_INFINITY,
            best_loss: f64::INFINITY,
            best: None,
            since_best: 0,
        }
    }

    /// Record one epoch's validation probabilities. Returns `true` once
    /// patience is exhausted.
    pub fn observe(&mut self, probs: &[f64], labels: &[u8], snapshot: impl FnOnce() -> S) -> Result<bool> {
        let auc = roc_auc(probs, labels)?;
        let loss = log_loss(probs, labels);
        if auc > self.best_auc || (auc == self.best_auc && loss < self.best_loss) {
            self.best_auc = auc;
            self.best_loss = loss;
            self.best = Some(snapshot());
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        Ok(self.since_best >= self.patience.max(1))
    }

    pub fn best_auc(&self) -> Option<f64> {
        self.best.as_ref().map(|_| self.best_auc)
    }

    pub fn into_best(self) -> Option<S> {
        self.best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_stratified_and_deterministic() {
        let y: Vec<u8> = (0..200).map(|i| (i % 2) as u8).collect();
        let strata: Vec<usize> = (0..200).map(|i| i / 100).collect();
        let (t, v) = validation_split(&y, Some(&strata), 0.1, 3);
        assert_eq!(v.len(), 20);
        assert_eq!(t.len() + v.len(), 200);
        for s in 0..2 {
            for c in 0..2 {
                assert_eq!(v.iter().filter(|&&i| strata[i] == s && y[i] == c).count(), 5);
            }
        }
        assert_eq!(validation_split(&y, Some(&strata), 0.1, 3), (t, v));
    }

    #[test]
    fn tiny_sets_skip_validation() {
        let y = [0, 1, 0, 1];
        assert_eq!(validation_split(&y, None, 0.5, 0), (vec![0, 1, 2, 3], vec![]));
    }

    #[test]
    fn stopper_keeps_best() {
        let labels = [0, 1, 0, 1];
        let mut es = EarlyStopper::new(2);
        assert!(!es.observe(&[0.1, 0.9, 0.2, 0.8], &labels, || 1).unwrap());
        assert!(!es.observe(&[0.9, 0.1, 0.2, 0.8], &labels, || 2).unwrap());
        assert!(es.observe(&[0.5; 4], &labels, || 3).unwrap());
        assert_eq!(es.best_auc(), Some(1.0));
        assert_eq!(es.into_best(), Some(1));
    }

    #[test]
    fn ties_prefer_lower_loss() {
        let labels = [0, 1, 0, 0];
        let mut es = EarlyStopper::new(1);
        assert!(!es.observe(&[0.5; 4], &labels, || 1).unwrap());
        assert!(!es.observe(&[0.3; 4], &labels, || 2).unwrap());
        assert!(es.observe(&[0.9; 4], &labels, || 3).unwrap());
        assert_eq!(es.into_best(), Some(2));
    }
}
