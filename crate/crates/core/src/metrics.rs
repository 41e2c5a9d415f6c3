//! Ranking metrics for binary classifiers.

use crate::error::{Error, Result};

fn check_lengths(labels: &[f64], scores: &[f64]) -> Result<()> {
    if labels.len() != scores.len() {
        return Err(Error::Shape(format!(
            "{} labels vs {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Shape("empty metric input".into()));
    }
    Ok(())
}

/// Area under the ROC curve: the probability that a random positive outranks
/// a random negative, with ties counted as one half. Degenerate inputs (one
/// class absent) return 0.5.
///
/// Computed from tie-averaged ranks, which matches the brute-force pairwise
/// definition exactly.
pub fn auroc(labels: &[f64], scores: &[f64]) -> Result<f64> {
    check_lengths(labels, scores)?;
    let n = labels.len();
    let pos = labels.iter().filter(|&&y| y > 0.5).count();
    let neg = n - pos;
    if pos == 0 || neg == 0 {
        return Ok(0.5);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // average rank for the tie group, 1-based
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    let rank_sum_pos: f64 = labels
        .iter()
        .zip(&ranks)
        .filter(|(&y, _)| y > 0.5)
        .map(|(_, &r)| r)
        .sum();
    let u = rank_sum_pos - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}

/// Area under the precision-recall curve as average precision: the sum over
/// distinct score thresholds of precision times the recall increment. No
/// trapezoidal interpolation.
pub fn auprc(labels: &[f64], scores: &[f64]) -> Result<f64> {
    check_lengths(labels, scores)?;
    let pos = labels.iter().filter(|&&y| y > 0.5).count();
    if pos == 0 {
        return Err(Error::Data("average precision needs at least one positive".into()));
    }
    let n = labels.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if labels[idx] > 0.5 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += precision * (recall - prev_recall);
        prev_recall = recall;
        i = j + 1;
    }
    Ok(ap)
}

#[cfg(test)]
pub(crate) fn auroc_pairwise_oracle(labels: &[f64], scores: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &yi) in labels.iter().enumerate() {
        if yi <= 0.5 {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj > 0.5 {
                continue;
            }
            den += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    if den == 0.0 {
        0.5
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn auroc_known_values() {
        assert_eq!(auroc(&[1.0, 1.0, 0.0, 0.0], &[0.9, 0.8, 0.2, 0.1]).unwrap(), 1.0);
        let v = auroc(&[1.0, 0.0, 1.0, 0.0], &[0.9, 0.8, 0.7, 0.1]).unwrap();
        assert!((v - 0.75).abs() < 1e-12);
        assert_eq!(auroc(&[1.0, 0.0, 1.0], &[0.4, 0.4, 0.4]).unwrap(), 0.5);
    }

    #[test]
    fn auroc_matches_pairwise_oracle_on_random_instances() {
        let mut rng = rng_from(200, &[]);
        for _ in 0..1000 {
            let n = rng.gen_range(2usize..=200);
            let labels: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.4))).collect();
            // coarse grid to force plenty of ties
            let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..10) as f64) / 10.0).collect();
            let fast = auroc(&labels, &scores).unwrap();
            let slow = auroc_pairwise_oracle(&labels, &scores);
            assert!((fast - slow).abs() < 1e-12, "fast {fast} vs oracle {slow}");
        }
    }

    #[test]
    fn auprc_known_values() {
        assert_eq!(auprc(&[1.0, 1.0, 0.0], &[0.9, 0.8, 0.1]).unwrap(), 1.0);
        let worst = auprc(&[1.0, 0.0], &[0.1, 0.9]).unwrap();
        assert!((worst - 0.5).abs() < 1e-12);
    }

    #[test]
    fn auprc_random_scores_near_prevalence() {
        let mut rng = rng_from(201, &[]);
        let n = 4000;
        let p = 0.3;
        let labels: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(p))).collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let ap = auprc(&labels, &scores).unwrap();
        assert!((ap - p).abs() < 0.05, "ap {ap}");
    }

    proptest! {
        #[test]
        fn auroc_invariant_to_monotone_transform(
            pairs in proptest::collection::vec((0u8..2, 0.0f64..1.0), 4..80)
        ) {
            let labels: Vec<f64> = pairs.iter().map(|(y, _)| *y as f64).collect();
            let scores: Vec<f64> = pairs.iter().map(|(_, s)| *s).collect();
            let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp()).collect();
            let a = auroc(&labels, &scores).unwrap();
            let b = auroc(&labels, &transformed).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn auroc_negation_symmetry(
            pairs in proptest::collection::vec((0u8..2, 0.0f64..1.0), 4..80)
        ) {
            let labels: Vec<f64> = pairs.iter().map(|(y, _)| *y as f64).collect();
            let has_both = labels.iter().any(|&y| y > 0.5) && labels.iter().any(|&y| y < 0.5);
            // distinct scores so there are no ties
            let scores: Vec<f64> = (0..labels.len()).map(|i| i as f64 + pairs[i].1 * 0.5).collect();
            if has_both {
                let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
                let a = auroc(&labels, &scores).unwrap();
                let b = auroc(&labels, &neg).unwrap();
                prop_assert!((a + b - 1.0).abs() < 1e-12);
            }
        }
    }
}
