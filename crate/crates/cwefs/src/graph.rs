//! Heat-kernel q-nearest-neighbor affinity graphs and their Laplacians.
//!
//! An affinity entry `S[i][j]` is `exp(-||x_i - x_j||^2 / sigma^2)` when `i`
//! is among the `q` nearest neighbors of `j` or vice versa, and 0 otherwise.
//! The diagonal is 0 and a point is never its own neighbor. Distance ties at
//! the q-th neighbor break by ascending instance index, so graphs are fully
//! deterministic.

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::dataset::MultiChannelDataset;
use crate::float::Float;

/// Errors raised by graph construction.
#[derive(Debug, Error)]
pub enum GraphError {
    #[error("neighbor count q={q} out of range 1..={max} for {n} instances")]
    QOutOfRange { q: usize, n: usize, max: usize },
    #[error("need at least 2 instances to build a graph, found {0}")]
    TooFewInstances(usize),
    #[error("sigma must be positive and finite")]
    BadSigma,
    #[error("point matrix contains a non-finite entry at column {0}")]
    NonFinitePoint(usize),
    #[error("binary labels missing; binarize the dataset before building the label graph")]
    MissingBinaryLabels,
}

/// Symmetric heat-kernel affinity matrix over instances. `s[i][j]` is in
/// `[0, 1]`, the diagonal is 0, and off-diagonal entries are nonzero only for
/// q-nearest-neighbor pairs under the "or" rule.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph<F: Float> {
    pub s: Array2<F>,
    pub q: usize,
    pub sigma: F,
}

/// Graph Laplacian `L = G - S` where `G = diag(row sums of S)`. Row sums of
/// `L` are 0 and the matrix is positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian<F: Float> {
    pub l: Array2<F>,
    pub degree: Array1<F>,
}

/// An affinity graph together with its Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPair<F: Float> {
    pub affinity: AffinityGraph<F>,
    pub laplacian: Laplacian<F>,
}

impl<F: Float> GraphPair<F> {
    pub fn build(points: &Array2<F>, q: usize, sigma: F) -> Result<Self, GraphError> {
        let affinity = build_affinity(points, q, sigma)?;
        let laplacian = build_laplacian(&affinity);
        Ok(Self { affinity, laplacian })
    }
}

/// The graphs a solve needs: one per channel over that channel's feature
/// columns, plus one over the binary label columns.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSet<F: Float> {
    pub channels: Vec<GraphPair<F>>,
    pub labels: GraphPair<F>,
}

impl<F: Float> GraphSet<F> {
    /// Builds all graphs for a binarized dataset with a shared `q` and
    /// `sigma`. Channel graphs use the raw feature columns; the label graph
    /// uses the binary label columns as 0/1 vectors.
    pub fn build(
        dataset: &MultiChannelDataset<F>,
        q: usize,
        sigma: F,
    ) -> Result<Self, GraphError> {
        let channels = dataset
            .channels()
            .iter()
            .map(|block| GraphPair::build(&block.features, q, sigma))
            .collect::<Result<Vec<_>, _>>()?;
        let y = dataset
            .labels_binary_matrix()
            .ok_or(GraphError::MissingBinaryLabels)?;
        let labels = GraphPair::build(&y, q, sigma)?;
        Ok(Self { channels, labels })
    }
}

/// Builds the heat-kernel affinity graph over the columns of `points`
/// (one instance per column).
pub fn build_affinity<F: Float>(
    points: &Array2<F>,
    q: usize,
    sigma: F,
) -> Result<AffinityGraph<F>, GraphError> {
    let n = points.ncols();
    if n < 2 {
        return Err(GraphError::TooFewInstances(n));
    }
    if q < 1 || q > n - 1 {
        return Err(GraphError::QOutOfRange { q, n, max: n - 1 });
    }
    if !(sigma > F::zero() && sigma.is_finite()) {
        return Err(GraphError::BadSigma);
    }
    for (j, col) in points.columns().into_iter().enumerate() {
        if col.iter().any(|x| !x.is_finite()) {
            return Err(GraphError::NonFinitePoint(j));
        }
    }

    let d2 = pairwise_sq_dists(points);

    // neighbor[j] holds the q nearest other instances of column j.
    let mut neighbor = Array2::from_elem((n, n), false);
    let mut order: Vec<usize> = Vec::with_capacity(n - 1);
    for j in 0..n {
        order.clear();
        order.extend((0..n).filter(|&i| i != j));
        order.sort_by(|&a, &b| {
            d2[[a, j]]
                .partial_cmp(&d2[[b, j]])
                .expect("finite distances")
                .then(a.cmp(&b))
        });
        for &i in order.iter().take(q) {
            neighbor[[j, i]] = true;
        }
    }

    let inv_s2 = F::one() / (sigma * sigma);
    let mut s = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            if neighbor[[j, i]] || neighbor[[i, j]] {
                let w = (-d2[[i, j]] * inv_s2).exp();
                s[[i, j]] = w;
                s[[j, i]] = w;
            }
        }
    }
    Ok(AffinityGraph { s, q, sigma })
}

/// Squared Euclidean distances between all column pairs, computed directly
/// per pair (no norm expansion) so results are exact for identical columns.
fn pairwise_sq_dists<F: Float>(points: &Array2<F>) -> Array2<F> {
    let n = points.ncols();
    let mut d2 = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let mut acc = F::zero();
            for (&a, &b) in points.column(i).iter().zip(points.column(j).iter()) {
                let diff = a - b;
                acc = acc + diff * diff;
            }
            d2[[i, j]] = acc;
            d2[[j, i]] = acc;
        }
    }
    d2
}

/// Builds `L = G - S` with `G = diag(row sums of S)`.
pub fn build_laplacian<F: Float>(graph: &AffinityGraph<F>) -> Laplacian<F> {
    let n = graph.s.nrows();
    let degree: Array1<F> = graph.s.rows().into_iter().map(|r| r.sum()).collect();
    let mut l = -graph.s.clone();
    for i in 0..n {
        l[[i, i]] = degree[i];
    }
    Laplacian { l, degree }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_columns_have_unit_affinity() {
        let points = array![[1.0, 1.0, 5.0], [2.0, 2.0, 5.0]];
        let g = build_affinity(&points, 1, 1.0).unwrap();
        assert_eq!(g.s[[0, 1]], 1.0, "exp(0) for identical neighbors");
        assert_eq!(g.s[[0, 0]], 0.0, "diagonal forced to 0");
    }

    #[test]
    fn unit_distance_gives_exp_minus_one() {
        let points = array![[0.0, 1.0]];
        let g = build_affinity(&points, 1, 1.0).unwrap();
        assert_abs_diff_eq!(g.s[[0, 1]], (-1.0_f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(g.s[[0, 1]], 0.3678794, epsilon = 1e-7);
    }

    #[test]
    fn collinear_points_follow_the_or_rule() {
        let points = array![[0.0, 1.0, 10.0]];
        let g = build_affinity(&points, 1, 1.0).unwrap();
        assert!(g.s[[0, 1]] > 0.0, "0 and 1 are mutual nearest neighbors");
        assert!(
            g.s[[1, 2]] > 0.0,
            "1 is the nearest neighbor of 10, so the or-rule links them"
        );
        assert_eq!(g.s[[0, 2]], 0.0, "0 and 10 are in neither neighbor set");
        assert_eq!(g.s, g.s.t(), "symmetric");
    }

    #[test]
    fn two_node_laplacian() {
        let g = AffinityGraph {
            s: array![[0.0, 1.0], [1.0, 0.0]],
            q: 1,
            sigma: 1.0,
        };
        let lap = build_laplacian(&g);
        assert_eq!(lap.l, array![[1.0, -1.0], [-1.0, 1.0]]);
    }

    #[test]
    fn empty_graph_gives_zero_laplacian() {
        let g = AffinityGraph {
            s: Array2::<f64>::zeros((3, 3)),
            q: 1,
            sigma: 1.0,
        };
        let lap = build_laplacian(&g);
        assert!(lap.l.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn random_symmetric_laplacian_row_sums_and_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 5;
        let mut s = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                let w: f64 = rng.gen();
                s[[i, j]] = w;
                s[[j, i]] = w;
            }
        }
        let lap = build_laplacian(&AffinityGraph { s, q: 1, sigma: 1.0 });
        for row in lap.l.rows() {
            assert_abs_diff_eq!(row.sum(), 0.0, epsilon = 1e-10);
        }
        for _ in 0..100 {
            let x: Array1<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let quad = x.dot(&lap.l.dot(&x));
            assert!(quad >= -1e-12, "x^T L x = {quad}");
        }
    }

    #[test]
    fn q_out_of_range_is_rejected() {
        let points = array![[0.0, 1.0, 2.0]];
        assert!(matches!(
            build_affinity(&points, 3, 1.0),
            Err(GraphError::QOutOfRange { .. })
        ));
        assert!(matches!(
            build_affinity(&points, 0, 1.0),
            Err(GraphError::QOutOfRange { .. })
        ));
    }

    #[test]
    fn non_finite_point_is_rejected() {
        let points = array![[0.0, f64::NAN, 2.0]];
        assert!(matches!(
            build_affinity(&points, 1, 1.0),
            Err(GraphError::NonFinitePoint(1))
        ));
    }

    #[test]
    fn scaling_points_preserves_sparsity_pattern() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let points = Array2::from_shape_fn((3, 8), |_| rng.gen::<f64>());
        let scaled = points.mapv(|x| x * 37.5);
        let a = build_affinity(&points, 3, 1.0).unwrap();
        let b = build_affinity(&scaled, 3, 1.0).unwrap();
        for (x, y) in a.s.iter().zip(b.s.iter()) {
            assert_eq!(*x > 0.0, *y > 0.0, "same neighbor structure");
        }
    }
}
