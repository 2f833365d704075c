use crate::error::{Error, Result};

/// Area under the ROC curve as the Mann-Whitney statistic, with midranks
/// for tied scores. Label 1 is the positive (synthetic) class.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::TensorShape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Ranks are 1-based; doubling keeps midranks integral.
    let mut pos_rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid2 = (i + 1 + j + 1) as u128;
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                pos_rank_sum2 += mid2;
            }
        }
        i = j + 1;
    }
    let base2 = (n_pos as u128) * (n_pos as u128 + 1);
    let u2 = pos_rank_sum2 - base2;
    Ok(u2 as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Threshold scores at `threshold` (score >= threshold predicts synthetic).
/// Precision is 0 when nothing is predicted positive; F1 is 0 when
/// precision + recall is 0.
pub fn binary_metrics(scores: &[f64], labels: &[u8], threshold: f64) -> BinaryMetrics {
    let (mut tp, mut fp, mut tn, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fneg += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    BinaryMetrics {
        accuracy: ratio(tp + tn, scores.len()),
        precision,
        recall,
        f1,
    }
}

pub fn accuracy_f1(scores: &[f64], labels: &[u8], threshold: f64) -> (f64, f64) {
    let m = binary_metrics(scores, labels, threshold);
    (m.accuracy, m.f1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1.0;
                    num += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
                }
            }
        }
        num / pairs
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.3, 0.2], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.4; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.3, 0.2], &[1, 0, 1, 0]).unwrap(), 0.75);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[1, 1]), Err(Error::SingleClass)));
    }

    #[test]
    fn degenerate_classifiers() {
        let labels = [1, 0, 1, 0, 1, 0];
        let m = binary_metrics(&[1.0; 6], &labels, 0.5);
        assert_eq!((m.recall, m.precision), (1.0, 0.5));
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
        let (acc, f1) = accuracy_f1(&[0.0; 6], &labels, 0.5);
        assert_eq!((acc, f1), (0.5, 0.0));
        assert_eq!(accuracy_f1(&[0.9, 0.1, 0.8, 0.2, 0.7, 0.3], &labels, 0.5), (1.0, 1.0));
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise(data in prop::collection::vec((0u8..12, 0u8..2), 2..200)) {
            let scores: Vec<f64> = data.iter().map(|&(s, _)| s as f64 / 4.0).collect();
            let labels: Vec<u8> = data.iter().map(|&(_, y)| y).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let auc = roc_auc(&scores, &labels).unwrap();
            prop_assert!((auc - pairwise(&scores, &labels)).abs() < 1e-12);
            let squashed: Vec<f64> = scores.iter().map(|s| (s * 3.0).exp() - 7.0).collect();
            prop_assert_eq!(auc, roc_auc(&squashed, &labels).unwrap());
        }
    }
}
