//! Bayesian k-nearest-neighbor multi-label classifier.
//!
//! Fitting estimates, for every label, a smoothed prior and the conditional
//! distribution of the number of positive neighbors given the label's
//! presence or absence, by counting over the training instances themselves
//! (each instance's own column excluded from its neighborhood). Prediction
//! counts positive neighbors among the k nearest training instances and
//! compares the two posteriors.
//!
//! Distances are Euclidean over the feature rows; neighbor ties break toward
//! the lower training index, and posterior ties toward the positive class,
//! so results are deterministic.

use std::cmp::Ordering;

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::float::Float;

#[derive(Debug, Error)]
pub enum MlknnError {
    #[error("need more than {k_neighbors} training instances, got {n_train}")]
    TooFewTrainingInstances { n_train: usize, k_neighbors: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A fitted classifier. Immutable after [`fit`]; prediction is pure.
#[derive(Debug, Clone)]
pub struct MlknnModel<F: Float> {
    k_neighbors: usize,
    smoothing: F,
    train_features: Array2<F>,
    train_labels: Array2<bool>,
    prior_pos: Array1<F>,
    prior_neg: Array1<F>,
    /// Row j, column c: P(c positive neighbors | label j present).
    cond_pos: Array2<F>,
    /// Row j, column c: P(c positive neighbors | label j absent).
    cond_neg: Array2<F>,
}

/// Binary label predictions with the posterior scores that produced them.
/// `labels[[j, t]]` holds iff `scores[[j, t]] >= 0.5`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<F: Float> {
    pub labels: Array2<bool>,
    pub scores: Array2<F>,
}

fn squared_distance<F: Float>(a: &Array2<F>, i: usize, b: &Array2<F>, j: usize) -> F {
    let mut acc = F::zero();
    for r in 0..a.nrows() {
        let d = a[[r, i]] - b[[r, j]];
        acc = acc + d * d;
    }
    acc
}

/// Indices of the `k` nearest columns of `train` to column `col` of `from`,
/// ordered by squared distance with ties broken by ascending index. `skip`
/// excludes one training column (the instance itself during fitting).
fn nearest<F: Float>(
    train: &Array2<F>,
    from: &Array2<F>,
    col: usize,
    k: usize,
    skip: Option<usize>,
) -> Vec<usize> {
    let mut order: Vec<(F, usize)> = (0..train.ncols())
        .filter(|&j| Some(j) != skip)
        .map(|j| (squared_distance(from, col, train, j), j))
        .collect();
    order.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    order.truncate(k);
    order.into_iter().map(|(_, j)| j).collect()
}

fn count_positive(labels: &Array2<bool>, label: usize, neighbors: &[usize]) -> usize {
    neighbors.iter().filter(|&&j| labels[[label, j]]).count()
}

/// Fits the classifier on `train_features` (features as rows, instances as
/// columns) and binary `train_labels` (labels as rows).
pub fn fit<F: Float>(
    train_features: Array2<F>,
    train_labels: Array2<bool>,
    k_neighbors: usize,
    smoothing: F,
) -> Result<MlknnModel<F>, MlknnError> {
    let n = train_features.ncols();
    if train_labels.ncols() != n {
        return Err(MlknnError::ShapeMismatch(format!(
            "{} feature columns but {} label columns",
            n,
            train_labels.ncols()
        )));
    }
    if k_neighbors == 0 {
        return Err(MlknnError::InvalidParameter(
            "k_neighbors must be at least 1".into(),
        ));
    }
    if !(smoothing >= F::zero() && smoothing.is_finite()) {
        return Err(MlknnError::InvalidParameter(
            "smoothing must be >= 0 and finite".into(),
        ));
    }
    if n <= k_neighbors {
        return Err(MlknnError::TooFewTrainingInstances {
            n_train: n,
            k_neighbors,
        });
    }
    let k_labels = train_labels.nrows();
    let s = smoothing;
    let bins = k_neighbors + 1;

    let mut pos_counts = Array2::<usize>::zeros((k_labels, bins));
    let mut neg_counts = Array2::<usize>::zeros((k_labels, bins));
    for i in 0..n {
        let neighbors = nearest(&train_features, &train_features, i, k_neighbors, Some(i));
        for j in 0..k_labels {
            let c = count_positive(&train_labels, j, &neighbors);
            if train_labels[[j, i]] {
                pos_counts[[j, c]] += 1;
            } else {
                neg_counts[[j, c]] += 1;
            }
        }
    }

    let mut prior_pos = Array1::zeros(k_labels);
    let mut prior_neg = Array1::zeros(k_labels);
    let mut cond_pos = Array2::zeros((k_labels, bins));
    let mut cond_neg = Array2::zeros((k_labels, bins));
    let n_f = F::from_usize_lit(n);
    let bins_f = F::from_usize_lit(bins);
    for j in 0..k_labels {
        let total_pos: usize = (0..n).filter(|&i| train_labels[[j, i]]).count();
        let total_neg = n - total_pos;
        prior_pos[j] = (s + F::from_usize_lit(total_pos)) / (s + s + n_f);
        prior_neg[j] = (s + F::from_usize_lit(total_neg)) / (s + s + n_f);
        let denom_pos = s * bins_f + F::from_usize_lit(total_pos);
        let denom_neg = s * bins_f + F::from_usize_lit(total_neg);
        for c in 0..bins {
            cond_pos[[j, c]] = (s + F::from_usize_lit(pos_counts[[j, c]])) / denom_pos;
            cond_neg[[j, c]] = (s + F::from_usize_lit(neg_counts[[j, c]])) / denom_neg;
        }
    }

    Ok(MlknnModel {
        k_neighbors,
        smoothing,
        train_features,
        train_labels,
        prior_pos,
        prior_neg,
        cond_pos,
        cond_neg,
    })
}

impl<F: Float> MlknnModel<F> {
    pub fn k_neighbors(&self) -> usize {
        self.k_neighbors
    }

    pub fn smoothing(&self) -> F {
        self.smoothing
    }

    pub fn n_train(&self) -> usize {
        self.train_features.ncols()
    }

    pub fn n_labels(&self) -> usize {
        self.train_labels.nrows()
    }

    /// Per-label P(label present) and P(label absent).
    pub fn priors(&self) -> (&Array1<F>, &Array1<F>) {
        (&self.prior_pos, &self.prior_neg)
    }

    /// Per-label neighbor-count distributions, rows indexed by label and
    /// columns by count, conditioned on label presence / absence.
    pub fn conditionals(&self) -> (&Array2<F>, &Array2<F>) {
        (&self.cond_pos, &self.cond_neg)
    }

    /// Predicts labels and posterior scores for `test_features` (same
    /// feature rows as training, instances as columns). The score is the
    /// normalized positive posterior, so a score of exactly 0.5 (a posterior
    /// tie) predicts the label present.
    pub fn predict(&self, test_features: &Array2<F>) -> Result<Prediction<F>, MlknnError> {
        if test_features.nrows() != self.train_features.nrows() {
            return Err(MlknnError::ShapeMismatch(format!(
                "test instances have {} features, model was fit on {}",
                test_features.nrows(),
                self.train_features.nrows()
            )));
        }
        let k_labels = self.n_labels();
        let n_test = test_features.ncols();
        let mut labels = Array2::from_elem((k_labels, n_test), false);
        let mut scores = Array2::zeros((k_labels, n_test));
        let half = F::from_f64_lit(0.5);
        for t in 0..n_test {
            let neighbors = nearest(&self.train_features, test_features, t, self.k_neighbors, None);
            for j in 0..k_labels {
                let c = count_positive(&self.train_labels, j, &neighbors);
                let post_pos = self.prior_pos[j] * self.cond_pos[[j, c]];
                let post_neg = self.prior_neg[j] * self.cond_neg[[j, c]];
                let total = post_pos + post_neg;
                // With zero smoothing both posteriors can vanish; treat that
                // as an exact tie.
                let score = if total > F::zero() {
                    post_pos / total
                } else {
                    half
                };
                scores[[j, t]] = score;
                labels[[j, t]] = score >= half;
            }
        }
        Ok(Prediction { labels, scores })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn bools(rows: Vec<Vec<u8>>) -> Array2<bool> {
        let k = rows.len();
        let n = rows[0].len();
        Array2::from_shape_fn((k, n), |(j, i)| rows[j][i] != 0)
    }

    #[test]
    fn smoothed_prior_examples() {
        // 4 training instances, label positive twice: prior (1+2)/(2+4).
        let x = array![[0.0, 1.0, 2.0, 3.0]];
        let y = bools(vec![vec![1, 1, 0, 0]]);
        let model = fit(x, y, 1, 1.0).unwrap();
        assert_abs_diff_eq!(model.priors().0[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(model.priors().1[0], 0.5, epsilon = 1e-15);

        // 8 instances all positive: prior (1+8)/(2+8).
        let x = Array2::from_shape_fn((1, 8), |(_, i)| i as f64);
        let y = bools(vec![vec![1; 8]]);
        let model = fit(x, y, 2, 1.0).unwrap();
        assert_abs_diff_eq!(model.priors().0[0], 0.9, epsilon = 1e-15);
    }

    #[test]
    fn laplace_smoothing_forbids_zero_probabilities() {
        let x = array![[0.0, 1.0, 2.0, 3.0, 10.0]];
        let y = bools(vec![vec![1, 1, 1, 1, 1], vec![0, 0, 0, 0, 0]]);
        let model = fit(x, y, 2, 1.0).unwrap();
        let (cp, cn) = model.conditionals();
        for &p in cp.iter().chain(cn.iter()) {
            assert!(p > 0.0 && p < 1.0, "probability {p} out of (0,1)");
        }
        let (pp, pn) = model.priors();
        for &p in pp.iter().chain(pn.iter()) {
            assert!(p > 0.0 && p < 1.0);
        }
        // Each conditional row is a distribution over counts.
        for j in 0..2 {
            assert_abs_diff_eq!(cp.row(j).sum(), 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(cn.row(j).sum(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn too_few_instances_is_an_error() {
        let x = array![[0.0, 1.0, 2.0]];
        let y = bools(vec![vec![1, 0, 1]]);
        assert!(matches!(
            fit(x, y, 3, 1.0),
            Err(MlknnError::TooFewTrainingInstances { n_train: 3, k_neighbors: 3 })
        ));
    }

    #[test]
    fn predict_rejects_feature_dimension_mismatch() {
        let x = array![[0.0, 1.0, 2.0, 3.0]];
        let y = bools(vec![vec![1, 1, 0, 0]]);
        let model = fit(x, y, 1, 1.0).unwrap();
        let bad = array![[0.0], [1.0]];
        assert!(matches!(
            model.predict(&bad),
            Err(MlknnError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn dominant_evidence_predicts_positive() {
        // A tight all-positive cluster far from an all-negative one.
        let x = array![[0.0, 0.1, 0.2, 10.0, 10.1, 10.2]];
        let y = bools(vec![vec![1, 1, 1, 0, 0, 0]]);
        let model = fit(x, y, 2, 1.0).unwrap();
        let pred = model.predict(&array![[0.1, 10.1]]).unwrap();
        assert!(pred.labels[[0, 0]]);
        assert!(!pred.labels[[0, 1]]);
        assert!(pred.scores[[0, 0]] > 0.5);
        assert!(pred.scores[[0, 1]] < 0.5);
    }

    #[test]
    fn posterior_tie_breaks_positive() {
        // Two mirrored clusters make the count-1 conditional identical for
        // both classes and the priors equal, so a test point whose
        // neighborhood has one positive lands on an exact posterior tie.
        let x = array![[0.0, 0.01, 10.0, 10.01]];
        let y = bools(vec![vec![1, 0, 1, 0]]);
        let model = fit(x, y, 2, 1.0).unwrap();
        let pred = model.predict(&array![[0.005]]).unwrap();
        assert_eq!(pred.scores[[0, 0]], 0.5, "posteriors tie exactly");
        assert!(pred.labels[[0, 0]], "tie resolves to the positive class");
    }

    #[test]
    fn six_instance_hand_oracle() {
        // Hand-enumerated neighborhoods for k=2, s=1 on the line
        // [0,1,2,10,11,12] with labels [1,1,1,0,0,0]: every positive
        // instance sees two positive neighbors and every negative instance
        // two negative ones, giving priors 1/2, P(c=2|pos)=4/6, and
        // P(c=0|neg)=4/6 with 1/6 elsewhere.
        let x = array![[0.0, 1.0, 2.0, 10.0, 11.0, 12.0]];
        let y = bools(vec![vec![1, 1, 1, 0, 0, 0]]);
        let model = fit(x, y, 2, 1.0).unwrap();
        let (pp, pn) = model.priors();
        assert_abs_diff_eq!(pp[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(pn[0], 0.5, epsilon = 1e-15);
        let (cp, cn) = model.conditionals();
        let sixth = 1.0 / 6.0;
        for (got, want) in cp.row(0).iter().zip([sixth, sixth, 4.0 * sixth]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        for (got, want) in cn.row(0).iter().zip([4.0 * sixth, sixth, sixth]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }

        // Test at 1.5: neighbors {1,2}, both positive, so the score is
        // (1/2 * 4/6) / (1/2 * 4/6 + 1/2 * 1/6) = 0.8. Test at 11:
        // neighbors {4,3}, both negative, score 0.2.
        let pred = model.predict(&array![[1.5, 11.0]]).unwrap();
        assert_abs_diff_eq!(pred.scores[[0, 0]], 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(pred.scores[[0, 1]], 0.2, epsilon = 1e-12);
        assert!(pred.labels[[0, 0]]);
        assert!(!pred.labels[[0, 1]]);
    }

    #[test]
    fn predictions_equal_score_threshold() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_fn((3, 20), |_| rng.gen::<f64>());
        let y = Array2::from_shape_fn((4, 20), |_| rng.gen::<bool>());
        let model = fit(x, y, 5, 1.0).unwrap();
        let t = Array2::from_shape_fn((3, 7), |_| rng.gen::<f64>());
        let pred = model.predict(&t).unwrap();
        for (l, s) in pred.labels.iter().zip(pred.scores.iter()) {
            assert_eq!(*l, *s >= 0.5);
            assert!((0.0..=1.0).contains(s));
        }
    }

    #[test]
    fn training_order_does_not_change_predictions() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let x = Array2::from_shape_fn((2, 12), |_| rng.gen::<f64>());
        let y = Array2::from_shape_fn((3, 12), |_| rng.gen::<bool>());
        let t = Array2::from_shape_fn((2, 5), |_| rng.gen::<f64>());
        let model = fit(x.clone(), y.clone(), 4, 1.0).unwrap();
        let base = model.predict(&t).unwrap();

        let perm: Vec<usize> = vec![7, 2, 9, 0, 11, 4, 1, 10, 3, 8, 5, 6];
        let xp = x.select(ndarray::Axis(1), &perm);
        let yp = y.select(ndarray::Axis(1), &perm);
        let model_p = fit(xp, yp, 4, 1.0).unwrap();
        let pred_p = model_p.predict(&t).unwrap();
        assert_eq!(base.labels, pred_p.labels);
        assert_eq!(base.scores, pred_p.scores);
    }
}
