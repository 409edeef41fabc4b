//! Multi-label evaluation metrics and the Friedman rank statistic.
//!
//! All matrices are label-major: labels as rows, instances as columns.
//! Example-based ranking metrics (ranking loss, coverage, average precision)
//! skip instances without a countable label configuration; hamming loss and
//! the F1 scores always use every cell. Results are `f64` regardless of the
//! score precision.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::float::Float;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty input: need at least one label and one instance")]
    Empty,
    #[error("no instance has both a relevant and an irrelevant label")]
    NoCountableInstances,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// The six evaluation metrics as a flat record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub hamming_loss: f64,
    pub ranking_loss: f64,
    pub coverage: f64,
    pub average_precision: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
}

fn check_shapes<A, B>(a: &Array2<A>, b: &Array2<B>) -> Result<(), MetricsError> {
    if a.dim() != b.dim() {
        return Err(MetricsError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Fraction of label-instance cells where prediction and truth disagree.
pub fn hamming_loss(pred: &Array2<bool>, truth: &Array2<bool>) -> Result<f64, MetricsError> {
    check_shapes(pred, truth)?;
    let wrong = pred
        .iter()
        .zip(truth.iter())
        .filter(|(p, t)| p != t)
        .count();
    Ok(wrong as f64 / pred.len() as f64)
}

/// Label indices of one instance sorted by descending score, ties by
/// ascending label index.
fn descending_order<F: Float>(scores: ArrayView1<F>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Mean fraction of (relevant, irrelevant) label pairs ordered incorrectly,
/// a score tie counting half. Instances lacking either a relevant or an
/// irrelevant label are skipped; if every instance is skipped this is an
/// error.
pub fn ranking_loss<F: Float>(
    scores: &Array2<F>,
    truth: &Array2<bool>,
) -> Result<f64, MetricsError> {
    check_shapes(scores, truth)?;
    let mut total = 0.0;
    let mut counted = 0usize;
    for i in 0..scores.ncols() {
        let rel: Vec<usize> = (0..truth.nrows()).filter(|&j| truth[[j, i]]).collect();
        let irr: Vec<usize> = (0..truth.nrows()).filter(|&j| !truth[[j, i]]).collect();
        if rel.is_empty() || irr.is_empty() {
            continue;
        }
        let mut bad = 0.0;
        for &r in &rel {
            for &w in &irr {
                match scores[[r, i]].partial_cmp(&scores[[w, i]]) {
                    Some(std::cmp::Ordering::Less) => bad += 1.0,
                    Some(std::cmp::Ordering::Equal) => bad += 0.5,
                    _ => {}
                }
            }
        }
        total += bad / (rel.len() * irr.len()) as f64;
        counted += 1;
    }
    if counted == 0 {
        return Err(MetricsError::NoCountableInstances);
    }
    Ok(total / counted as f64)
}

/// Mean, over instances with at least one relevant label, of the 0-based
/// rank of the worst-ranked relevant label.
pub fn coverage<F: Float>(scores: &Array2<F>, truth: &Array2<bool>) -> Result<f64, MetricsError> {
    check_shapes(scores, truth)?;
    let mut total = 0.0;
    let mut counted = 0usize;
    for i in 0..scores.ncols() {
        if !(0..truth.nrows()).any(|j| truth[[j, i]]) {
            continue;
        }
        let order = descending_order(scores.column(i));
        let worst = order
            .iter()
            .enumerate()
            .filter(|(_, &label)| truth[[label, i]])
            .map(|(pos, _)| pos)
            .max()
            .expect("instance has a relevant label");
        total += worst as f64;
        counted += 1;
    }
    if counted == 0 {
        return Err(MetricsError::NoCountableInstances);
    }
    Ok(total / counted as f64)
}

/// Mean, over instances with at least one relevant label, of the average
/// precision at each relevant label's rank.
pub fn average_precision<F: Float>(
    scores: &Array2<F>,
    truth: &Array2<bool>,
) -> Result<f64, MetricsError> {
    check_shapes(scores, truth)?;
    let mut total = 0.0;
    let mut counted = 0usize;
    for i in 0..scores.ncols() {
        if !(0..truth.nrows()).any(|j| truth[[j, i]]) {
            continue;
        }
        let order = descending_order(scores.column(i));
        let mut relevant_seen = 0usize;
        let mut precision_sum = 0.0;
        let mut relevant_total = 0usize;
        for (pos, &label) in order.iter().enumerate() {
            if truth[[label, i]] {
                relevant_seen += 1;
                relevant_total += 1;
                precision_sum += relevant_seen as f64 / (pos + 1) as f64;
            }
        }
        total += precision_sum / relevant_total as f64;
        counted += 1;
    }
    if counted == 0 {
        return Err(MetricsError::NoCountableInstances);
    }
    Ok(total / counted as f64)
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Mean of per-label F1 scores, a label with no positives on either side
/// scoring 0.
pub fn macro_f1(pred: &Array2<bool>, truth: &Array2<bool>) -> Result<f64, MetricsError> {
    check_shapes(pred, truth)?;
    let mut sum = 0.0;
    for j in 0..pred.nrows() {
        let mut tp = 0;
        let mut fp = 0;
        let mut fn_ = 0;
        for i in 0..pred.ncols() {
            match (pred[[j, i]], truth[[j, i]]) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        sum += f1_from_counts(tp, fp, fn_);
    }
    Ok(sum / pred.nrows() as f64)
}

/// F1 over confusion counts pooled across all labels.
pub fn micro_f1(pred: &Array2<bool>, truth: &Array2<bool>) -> Result<f64, MetricsError> {
    check_shapes(pred, truth)?;
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    for (p, t) in pred.iter().zip(truth.iter()) {
        match (*p, *t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(f1_from_counts(tp, fp, fn_))
}

/// Computes all six metrics for one prediction run.
pub fn compute<F: Float>(
    pred: &Array2<bool>,
    scores: &Array2<F>,
    truth: &Array2<bool>,
) -> Result<MetricsReport, MetricsError> {
    Ok(MetricsReport {
        hamming_loss: hamming_loss(pred, truth)?,
        ranking_loss: ranking_loss(scores, truth)?,
        coverage: coverage(scores, truth)?,
        average_precision: average_precision(scores, truth)?,
        macro_f1: macro_f1(pred, truth)?,
        micro_f1: micro_f1(pred, truth)?,
    })
}

/// The Friedman test statistic in both of its usual forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FriedmanStatistic {
    /// The chi-squared form over K methods and N datasets.
    pub chi_squared: f64,
    /// The F-distributed form; infinite when the rankings agree perfectly
    /// across all datasets (the correction denominator vanishes).
    pub f_statistic: f64,
}

/// Evaluates the Friedman statistic from a rank table with methods as rows
/// and datasets as columns (entries are the methods' ranks per dataset,
/// averaged ranks allowed for ties).
pub fn friedman_statistic(ranks: &Array2<f64>) -> Result<FriedmanStatistic, MetricsError> {
    let (k, n) = ranks.dim();
    if k < 2 {
        return Err(MetricsError::InvalidInput(format!(
            "need at least 2 methods, got {k}"
        )));
    }
    if n < 2 {
        return Err(MetricsError::InvalidInput(format!(
            "need at least 2 datasets, got {n}"
        )));
    }
    if ranks.iter().any(|r| !r.is_finite()) {
        return Err(MetricsError::InvalidInput("non-finite rank".into()));
    }
    let kf = k as f64;
    let nf = n as f64;
    let sum_sq: f64 = ranks
        .rows()
        .into_iter()
        .map(|row| {
            let mean = row.sum() / nf;
            mean * mean
        })
        .sum();
    let chi = (12.0 * nf / (kf * (kf + 1.0))) * (sum_sq - kf * (kf + 1.0) * (kf + 1.0) / 4.0);
    let chi = chi.max(0.0);
    let denom = nf * (kf - 1.0) - chi;
    let f = if denom > 0.0 {
        (nf - 1.0) * chi / denom
    } else {
        f64::INFINITY
    };
    Ok(FriedmanStatistic {
        chi_squared: chi,
        f_statistic: f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn b(rows: Vec<Vec<u8>>) -> Array2<bool> {
        let k = rows.len();
        let n = rows[0].len();
        Array2::from_shape_fn((k, n), |(j, i)| rows[j][i] != 0)
    }

    #[test]
    fn hamming_loss_examples() {
        let t = b(vec![vec![1, 0], vec![0, 1]]);
        assert_eq!(hamming_loss(&t, &t).unwrap(), 0.0);
        let complement = t.mapv(|v| !v);
        assert_eq!(hamming_loss(&complement, &t).unwrap(), 1.0);
        let one_wrong = b(vec![vec![1, 0], vec![0, 0]]);
        assert_eq!(hamming_loss(&one_wrong, &t).unwrap(), 0.25);
    }

    #[test]
    fn hamming_loss_complement_identity() {
        let t = b(vec![vec![1, 0, 1], vec![0, 1, 1]]);
        let p = b(vec![vec![1, 1, 0], vec![0, 1, 0]]);
        let flipped = p.mapv(|v| !v);
        let total = hamming_loss(&p, &t).unwrap() + hamming_loss(&flipped, &t).unwrap();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn ranking_loss_examples() {
        let t = b(vec![vec![1, 1], vec![0, 0]]);
        let perfect = array![[0.9, 0.8], [0.1, 0.2]];
        assert_eq!(ranking_loss(&perfect, &t).unwrap(), 0.0);
        let inverted = array![[0.1, 0.2], [0.9, 0.8]];
        assert_eq!(ranking_loss(&inverted, &t).unwrap(), 1.0);

        // One relevant label of three, one of two pairs mis-ordered.
        let t = b(vec![vec![1], vec![0], vec![0]]);
        let s = array![[0.2], [0.5], [0.1]];
        assert_eq!(ranking_loss(&s, &t).unwrap(), 0.5);
    }

    #[test]
    fn ranking_loss_ties_count_half() {
        let t = b(vec![vec![1], vec![0]]);
        let s = array![[0.4], [0.4]];
        assert_eq!(ranking_loss(&s, &t).unwrap(), 0.5);
    }

    #[test]
    fn ranking_loss_skips_uncountable_instances() {
        // First instance all-relevant (skipped), second countable.
        let t = b(vec![vec![1, 1], vec![1, 0]]);
        let s = array![[0.1, 0.9], [0.9, 0.2]];
        assert_eq!(ranking_loss(&s, &t).unwrap(), 0.0);

        let all_relevant = b(vec![vec![1, 1], vec![1, 1]]);
        assert!(matches!(
            ranking_loss(&s, &all_relevant),
            Err(MetricsError::NoCountableInstances)
        ));
    }

    #[test]
    fn coverage_examples() {
        // One relevant label of three, ranked first.
        let t = b(vec![vec![1], vec![0], vec![0]]);
        let s = array![[0.9], [0.5], [0.1]];
        assert_eq!(coverage(&s, &t).unwrap(), 0.0);

        // Single relevant label ranked last of 3.
        let s = array![[0.1], [0.5], [0.9]];
        assert_eq!(coverage(&s, &t).unwrap(), 2.0);

        // k=4, relevant {0,2}, scores strictly descending by label index.
        let t = b(vec![vec![1], vec![0], vec![1], vec![0]]);
        let s = array![[4.0], [3.0], [2.0], [1.0]];
        assert_eq!(coverage(&s, &t).unwrap(), 2.0);
    }

    #[test]
    fn coverage_breaks_ties_by_label_index() {
        // All scores equal: ranks follow label order, so the worst relevant
        // label's rank is its own index.
        let t = b(vec![vec![0], vec![1], vec![0]]);
        let s = array![[0.5], [0.5], [0.5]];
        assert_eq!(coverage(&s, &t).unwrap(), 1.0);
    }

    #[test]
    fn average_precision_examples() {
        let t = b(vec![vec![1], vec![0]]);
        let top = array![[0.9], [0.1]];
        assert_eq!(average_precision(&top, &t).unwrap(), 1.0);

        // The single relevant label ranked second of two.
        let second = array![[0.1], [0.9]];
        assert_eq!(average_precision(&second, &t).unwrap(), 0.5);

        // Instance without relevant labels is skipped.
        let t = b(vec![vec![1, 0], vec![0, 0]]);
        let s = array![[0.9, 0.9], [0.1, 0.1]];
        assert_eq!(average_precision(&s, &t).unwrap(), 1.0);
    }

    #[test]
    fn f1_examples() {
        let t = b(vec![vec![1, 1, 0, 0], vec![1, 1, 0, 0]]);
        assert_eq!(macro_f1(&t, &t).unwrap(), 1.0);
        assert_eq!(micro_f1(&t, &t).unwrap(), 1.0);

        let zeros = t.mapv(|_| false);
        assert_eq!(macro_f1(&zeros, &t).unwrap(), 0.0);
        assert_eq!(micro_f1(&zeros, &t).unwrap(), 0.0);

        // Label 0 perfect, label 1 at F1 = 0.5: macro 0.75 and micro from
        // pooled counts TP=3, FP=1, FN=1.
        let p = b(vec![vec![1, 1, 0, 0], vec![1, 0, 0, 1]]);
        assert_eq!(macro_f1(&p, &t).unwrap(), 0.75);
        assert_eq!(micro_f1(&p, &t).unwrap(), 0.75);
    }

    #[test]
    fn micro_equals_macro_for_identical_label_confusions() {
        let t = b(vec![vec![1, 0, 1, 0], vec![1, 0, 1, 0]]);
        let p = b(vec![vec![1, 1, 0, 0], vec![1, 1, 0, 0]]);
        let ma = macro_f1(&p, &t).unwrap();
        let mi = micro_f1(&p, &t).unwrap();
        assert_abs_diff_eq!(ma, mi, epsilon = 1e-15);
    }

    #[test]
    fn metrics_invariant_under_column_permutation() {
        let t = b(vec![vec![1, 0, 1], vec![0, 1, 1], vec![1, 1, 0]]);
        let p = b(vec![vec![1, 1, 1], vec![0, 0, 1], vec![0, 1, 0]]);
        let s = array![[0.7, 0.2, 0.9], [0.3, 0.8, 0.7], [0.6, 0.5, 0.1]];
        let perm = [2usize, 0, 1];
        let tp = t.select(ndarray::Axis(1), &perm);
        let pp = p.select(ndarray::Axis(1), &perm);
        let sp = s.select(ndarray::Axis(1), &perm);
        let a = compute(&p, &s, &t).unwrap();
        let bm = compute(&pp, &sp, &tp).unwrap();
        assert_eq!(a, bm);
    }

    #[test]
    fn rank_metrics_invariant_under_increasing_transform() {
        let t = b(vec![vec![1, 0, 1], vec![0, 1, 1], vec![1, 1, 0]]);
        let s = array![[0.7, 0.2, 0.9], [0.3, 0.8, 0.7], [0.6, 0.5, 0.1]];
        let transformed = s.mapv(|x| 3.0 * x * x + 1.0);
        assert_eq!(
            ranking_loss(&s, &t).unwrap(),
            ranking_loss(&transformed, &t).unwrap()
        );
        assert_eq!(
            average_precision(&s, &t).unwrap(),
            average_precision(&transformed, &t).unwrap()
        );
        assert_eq!(coverage(&s, &t).unwrap(), coverage(&transformed, &t).unwrap());
    }

    #[test]
    fn shape_and_empty_errors() {
        let t = b(vec![vec![1, 0]]);
        let p = b(vec![vec![1, 0], vec![0, 1]]);
        assert!(matches!(
            hamming_loss(&p, &t),
            Err(MetricsError::ShapeMismatch(_))
        ));
        let empty = Array2::<bool>::from_elem((0, 0), false);
        assert!(matches!(
            hamming_loss(&empty, &empty),
            Err(MetricsError::Empty)
        ));
    }

    #[test]
    fn friedman_three_methods_four_datasets() {
        // Hand evaluation: mean ranks 1.25, 2.0, 2.75 give
        // chi = (12*4 / (3*4)) * (13.125 - 12) = 4.5 and
        // F = 3 * 4.5 / (4*2 - 4.5) = 13.5 / 3.5.
        let ranks = array![
            [1.0, 1.0, 2.0, 1.0],
            [2.0, 3.0, 1.0, 2.0],
            [3.0, 2.0, 3.0, 3.0]
        ];
        let stat = friedman_statistic(&ranks).unwrap();
        assert_abs_diff_eq!(stat.chi_squared, 4.5, epsilon = 1e-12);
        assert_abs_diff_eq!(stat.f_statistic, 13.5 / 3.5, epsilon = 1e-12);
    }

    #[test]
    fn friedman_perfect_agreement_two_methods() {
        // One method always first over N=10: chi = 10 and the F form
        // degenerates to infinity.
        let ranks = ndarray::stack![
            ndarray::Axis(0),
            ndarray::Array1::from_elem(10, 1.0),
            ndarray::Array1::from_elem(10, 2.0)
        ];
        let stat = friedman_statistic(&ranks).unwrap();
        assert_abs_diff_eq!(stat.chi_squared, 10.0, epsilon = 1e-12);
        assert!(stat.f_statistic.is_infinite() && stat.f_statistic > 0.0);
    }

    #[test]
    fn friedman_minimal_balanced_case() {
        let ranks = array![[1.0, 2.0], [2.0, 1.0]];
        let stat = friedman_statistic(&ranks).unwrap();
        assert_abs_diff_eq!(stat.chi_squared, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(stat.f_statistic, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn friedman_rejects_degenerate_tables() {
        let one_method = array![[1.0, 1.0, 1.0]];
        assert!(friedman_statistic(&one_method).is_err());
        let one_dataset = array![[1.0], [2.0]];
        assert!(friedman_statistic(&one_dataset).is_err());
    }
}
