//! Rank-based ROC-AUC with tie-aware average ranks.
//!
//! The returned value equals the probability that a uniformly random
//! positive outranks a uniformly random negative, ties counting one half.
//! Ranks and pair counts are half-integers well below 2^53, so the rank
//! formula agrees with the O(n^2) pairwise count not just approximately but
//! in exact f64 arithmetic.

use crate::error::{GipaError, Result};
use crate::matrix::Matrix;

/// Tie-aware ROC-AUC of `scores` against binary `labels`.
pub fn roc_auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(GipaError::shape(
            "roc_auc",
            format!("{} scores vs {} labels", scores.len(), labels.len()),
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(GipaError::contract("roc_auc", "NaN score"));
    }
    let positives = labels.iter().filter(|&&y| y == 1.0).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(GipaError::UndefinedAuc(format!(
            "{} positives, {} negatives",
            positives, negatives
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // average rank over each run of tied scores; ranks are 1-based
    let mut rank_pos_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share rank (i+1 + j) / 2
        let rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] == 1.0 {
                rank_pos_sum += rank;
            }
        }
        i = j;
    }

    let p = positives as f64;
    let n = negatives as f64;
    Ok((rank_pos_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Per-label AUC summary over a node subset.
#[derive(Debug, Clone)]
pub struct AucSummary {
    /// One entry per label; `None` when the subset has a single class.
    pub per_label: Vec<Option<f64>>,
    /// Unweighted mean over defined labels.
    pub mean: f64,
    pub n_excluded: usize,
}

/// AUC per label column over `rows`, averaging the labels that have both
/// classes present and reporting the rest as excluded.
pub fn mean_label_auc(scores: &Matrix, labels: &Matrix, rows: &[usize]) -> Result<AucSummary> {
    if scores.rows != labels.rows || scores.cols != labels.cols {
        return Err(GipaError::shape(
            "mean_label_auc",
            format!(
                "scores {}x{} vs labels {}x{}",
                scores.rows, scores.cols, labels.rows, labels.cols
            ),
        ));
    }
    if rows.is_empty() {
        return Err(GipaError::contract("mean_label_auc", "empty node subset"));
    }
    let mut per_label = Vec::with_capacity(labels.cols);
    let mut sum = 0.0;
    let mut defined = 0usize;
    for col in 0..labels.cols {
        let s: Vec<f64> = rows.iter().map(|&i| scores.get(i, col)).collect();
        let y: Vec<f64> = rows.iter().map(|&i| labels.get(i, col)).collect();
        match roc_auc(&s, &y) {
            Ok(a) => {
                per_label.push(Some(a));
                sum += a;
                defined += 1;
            }
            Err(GipaError::UndefinedAuc(_)) => per_label.push(None),
            Err(e) => return Err(e),
        }
    }
    if defined == 0 {
        return Err(GipaError::UndefinedAuc(
            "every label is single-class on this subset".to_string(),
        ));
    }
    Ok(AucSummary {
        mean: sum / defined as f64,
        n_excluded: labels.cols - defined,
        per_label,
    })
}

/// Brute-force pairwise AUC; quadratic, test oracle only.
pub fn pairwise_auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|&(_, &y)| y == 1.0)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|&(_, &y)| y != 1.0)
        .map(|(&s, _)| s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(GipaError::UndefinedAuc("single-class input".to_string()));
    }
    let mut wins = 0.0;
    for &sp in &pos {
        for &sn in &neg {
            if sp > sn {
                wins += 1.0;
            } else if sp == sn {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (pos.len() as f64 * neg.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn perfect_and_inverted_orderings() {
        let labels = [0.0, 0.0, 1.0, 1.0];
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap(), 0.0);
        assert_eq!(roc_auc(&[0.9, 0.1], &[1.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn all_tied_scores_give_half() {
        let scores = [0.4; 6];
        let labels = [1.0, 0.0, 1.0, 0.0, 0.0, 1.0];
        assert_eq!(roc_auc(&scores, &labels).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(
            roc_auc(&[0.1, 0.2], &[1.0, 1.0]),
            Err(GipaError::UndefinedAuc(_))
        ));
        assert!(matches!(
            roc_auc(&[0.1, f64::NAN], &[1.0, 0.0]),
            Err(GipaError::Contract { .. })
        ));
    }

    #[test]
    fn rank_formula_equals_pairwise_oracle_exactly() {
        let mut rng = StdRng::seed_from_u64(41);
        for trial in 0..200 {
            let n = rng.gen_range(2..120);
            // coarse score grid forces many ties
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..7) as f64 / 4.0).collect();
            let labels: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.4))).collect();
            match (roc_auc(&scores, &labels), pairwise_auc(&scores, &labels)) {
                (Ok(a), Ok(b)) => assert_eq!(a, b, "trial {trial} bitwise equality"),
                (Err(GipaError::UndefinedAuc(_)), Err(GipaError::UndefinedAuc(_))) => {}
                (a, b) => panic!("trial {trial}: disagree {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn monotone_transform_leaves_auc_unchanged() {
        let mut rng = StdRng::seed_from_u64(43);
        let scores: Vec<f64> = (0..50).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let labels: Vec<f64> = (0..50).map(|_| f64::from(rng.gen_bool(0.5))).collect();
        let base = roc_auc(&scores, &labels).unwrap();
        let exp: Vec<f64> = scores.iter().map(|&s| s.exp()).collect();
        let affine: Vec<f64> = scores.iter().map(|&s| 3.0 * s + 11.0).collect();
        assert_eq!(roc_auc(&exp, &labels).unwrap(), base);
        assert_eq!(roc_auc(&affine, &labels).unwrap(), base);
    }

    #[test]
    fn per_label_mean_excludes_single_class_columns() {
        // column 0 separable, column 1 single-class, column 2 anti-separable
        let scores = Matrix::from_rows(vec![
            vec![0.9, 0.1, 0.9],
            vec![0.1, 0.2, 0.8],
            vec![0.5, 0.3, 0.1],
        ]);
        let labels = Matrix::from_rows(vec![
            vec![1.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 1.0, 1.0],
        ]);
        let s = mean_label_auc(&scores, &labels, &[0, 1, 2]).unwrap();
        assert_eq!(s.per_label[0], Some(1.0));
        assert_eq!(s.per_label[1], None);
        assert_eq!(s.per_label[2], Some(0.0));
        assert_eq!(s.n_excluded, 1);
        assert_eq!(s.mean, 0.5);

        assert!(matches!(
            mean_label_auc(&scores, &labels, &[]),
            Err(GipaError::Contract { .. })
        ));
        // restricting to one row makes every label single-class
        assert!(matches!(
            mean_label_auc(&scores, &labels, &[0]),
            Err(GipaError::UndefinedAuc(_))
        ));
    }
}
