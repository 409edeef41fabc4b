//! Alternating optimization for the channel-wise feature-selection model.
//!
//! Each channel's feature matrix factorizes as `X_v ~ Q_v U^T` against a
//! latent matrix `U` shared across channels, the binary label matrix
//! factorizes as `Y ~ M U^T` over the same `U`, and a simplex-constrained
//! weight vector `alpha` (exponent `gamma`) balances the channels. Graph
//! terms keep `U` consistent with the feature-space and label-space
//! neighborhood structure, and an l2,1 penalty on each `Q_v` drives whole
//! rows toward zero so that row norms score feature importance.
//!
//! One sweep updates `Q`, `U`, `M`, then `alpha`. The factor updates are
//! multiplicative ratios of non-negative terms, so non-negativity is
//! preserved exactly; `alpha` has a closed-form simplex solution. The
//! Laplacian `L = G - S` enters the `U` ratio split by sign: the affinity
//! part `S` joins the numerator and the degree part `G` the denominator,
//! which keeps both sides non-negative.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt::Write as _;

use ndarray::{Array1, Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::MultiChannelDataset;
use crate::float::{fmt_g17, Float};
use crate::graph::GraphSet;

/// Errors raised by the solver and the ranking helpers.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("binary labels missing; binarize the dataset before solving")]
    MissingBinaryLabels,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),
    #[error("objective became non-finite at sweep {sweep}")]
    NonFinite { sweep: usize },
    #[error("selection ratio must lie in (0, 1], got {0}")]
    InvalidRatio(f64),
    #[error("ranking parse error at line {line}: {reason}")]
    RankingParse { line: usize, reason: String },
}

/// Tradeoff and control parameters.
///
/// `lambda` weights label reconstruction, `beta` the per-channel graph term,
/// `eta` the label graph term, `delta` the row-sparsity penalty, and `gamma`
/// (> 1) shapes the channel weights. `epsilon` floors denominators,
/// `max_iters`/`rel_tol` control the sweep loop, `latent_dim` overrides the
/// default latent width (the label count), and `adaptive_weights = false`
/// freezes `alpha` uniform for ablations.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams<F: Float> {
    pub lambda: F,
    pub beta: F,
    pub eta: F,
    pub gamma: F,
    pub delta: F,
    pub epsilon: F,
    pub max_iters: usize,
    pub rel_tol: F,
    pub latent_dim: Option<usize>,
    pub adaptive_weights: bool,
}

impl<F: Float> Default for HyperParams<F> {
    fn default() -> Self {
        Self {
            lambda: F::from_f64_lit(0.1),
            beta: F::from_f64_lit(0.1),
            eta: F::from_f64_lit(0.1),
            gamma: F::from_f64_lit(2.0),
            delta: F::from_f64_lit(0.1),
            epsilon: F::from_f64_lit(1e-12),
            max_iters: 300,
            rel_tol: F::from_f64_lit(1e-6),
            latent_dim: None,
            adaptive_weights: true,
        }
    }
}

impl<F: Float> HyperParams<F> {
    pub fn validate(&self) -> Result<(), SolverError> {
        let err = |msg: String| Err(SolverError::InvalidHyperParams(msg));
        if !(self.lambda > F::zero() && self.lambda.is_finite()) {
            return err("lambda must be positive and finite".into());
        }
        for (name, v) in [("beta", self.beta), ("eta", self.eta), ("delta", self.delta)] {
            if !(v >= F::zero() && v.is_finite()) {
                return err(format!("{name} must be >= 0 and finite"));
            }
        }
        if !(self.gamma > F::one() && self.gamma.is_finite()) {
            return err("gamma must be > 1 and finite".into());
        }
        if !(self.epsilon > F::zero() && self.epsilon.is_finite()) {
            return err("epsilon must be positive and finite".into());
        }
        if self.max_iters == 0 {
            return err("max_iters must be at least 1".into());
        }
        if !(self.rel_tol >= F::zero() && self.rel_tol.is_finite()) {
            return err("rel_tol must be >= 0 and finite".into());
        }
        if self.latent_dim == Some(0) {
            return err("latent_dim must be at least 1".into());
        }
        Ok(())
    }
}

/// Factor matrices, channel weights, and the recorded objective trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState<F: Float> {
    /// Per-channel coefficient matrices, `d_v x r`.
    pub q: Vec<Array2<F>>,
    /// Shared latent matrix, `n x r`.
    pub u: Array2<F>,
    /// Label coefficient matrix, `k x r`.
    pub m: Array2<F>,
    /// Channel weights on the probability simplex.
    pub alpha: Array1<F>,
    /// Objective value at initialization and after each sweep.
    pub objective_trace: Vec<F>,
}

fn binary_labels<F: Float>(data: &MultiChannelDataset<F>) -> Result<Array2<F>, SolverError> {
    data.labels_binary_matrix()
        .ok_or(SolverError::MissingBinaryLabels)
}

fn check_shapes<F: Float>(
    state: &SolverState<F>,
    data: &MultiChannelDataset<F>,
    graphs: &GraphSet<F>,
) -> Result<(), SolverError> {
    let err = |msg: String| Err(SolverError::ShapeMismatch(msg));
    let (n, k, ch) = (data.n(), data.k(), data.ch());
    if state.q.len() != ch {
        return err(format!("{} Q matrices for {ch} channels", state.q.len()));
    }
    if graphs.channels.len() != ch {
        return err(format!("{} channel graphs for {ch} channels", graphs.channels.len()));
    }
    let r = state.u.ncols();
    if state.u.nrows() != n {
        return err(format!("U has {} rows, expected {n}", state.u.nrows()));
    }
    if state.m.dim() != (k, r) {
        return err(format!("M is {:?}, expected ({k}, {r})", state.m.dim()));
    }
    for (v, (q, block)) in state.q.iter().zip(data.channels()).enumerate() {
        if q.dim() != (block.d(), r) {
            return err(format!(
                "Q[{v}] is {:?}, expected ({}, {r})",
                q.dim(),
                block.d()
            ));
        }
    }
    if state.alpha.len() != ch {
        return err(format!("{} weights for {ch} channels", state.alpha.len()));
    }
    for (v, pair) in graphs.channels.iter().enumerate() {
        if pair.laplacian.l.dim() != (n, n) {
            return err(format!("channel {v} Laplacian is {:?}, expected ({n}, {n})", pair.laplacian.l.dim()));
        }
    }
    if graphs.labels.laplacian.l.dim() != (n, n) {
        return err(format!(
            "label Laplacian is {:?}, expected ({n}, {n})",
            graphs.labels.laplacian.l.dim()
        ));
    }
    Ok(())
}

fn frob_sq<F: Float>(m: &Array2<F>) -> F {
    m.iter().map(|&x| x * x).sum()
}

fn trace_quad<F: Float>(l: &Array2<F>, u: &Array2<F>) -> F {
    (l.dot(u) * u).sum()
}

fn l21_norm<F: Float>(m: &Array2<F>) -> F {
    m.rows()
        .into_iter()
        .map(|row| row.iter().map(|&x| x * x).sum::<F>().sqrt())
        .sum()
}

/// Multiplies each row of `m` by the matching entry of `scales`.
fn scale_rows<F: Float>(m: &Array2<F>, scales: &Array1<F>) -> Array2<F> {
    let mut out = m.clone();
    for (mut row, &s) in out.rows_mut().into_iter().zip(scales.iter()) {
        row.mapv_inplace(|x| x * s);
    }
    out
}

/// Draws an initial state: factor entries i.i.d. uniform on `(0.01, 1]` from
/// a seeded generator (strictly positive, so no entry is permanently dead
/// under the multiplicative updates) and uniform channel weights. The draw
/// order is fixed: each `Q_v` in channel order, then `U`, then `M`, each
/// row-major in `f64` before conversion to the scalar type.
pub fn init_state<F: Float>(
    data: &MultiChannelDataset<F>,
    hp: &HyperParams<F>,
    seed: u64,
) -> Result<SolverState<F>, SolverError> {
    hp.validate()?;
    if data.labels_binary().is_none() {
        return Err(SolverError::MissingBinaryLabels);
    }
    let r = hp.latent_dim.unwrap_or(data.k());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows: usize, cols: usize| {
        Array2::from_shape_fn((rows, cols), |_| {
            F::from_f64_lit(1.0 - 0.99 * rng.gen::<f64>())
        })
    };
    let q: Vec<Array2<F>> = data.channels().iter().map(|b| draw(b.d(), r)).collect();
    let u = draw(data.n(), r);
    let m = draw(data.k(), r);
    let ch = data.ch();
    let alpha = Array1::from_elem(ch, F::one() / F::from_usize_lit(ch));
    Ok(SolverState {
        q,
        u,
        m,
        alpha,
        objective_trace: Vec::new(),
    })
}

/// Per-channel cost: feature reconstruction, label reconstruction, both
/// graph traces, and the l2,1 penalty. The label terms repeat in every
/// channel's cost by definition, even though they do not depend on the
/// channel.
pub fn channel_costs<F: Float>(
    state: &SolverState<F>,
    data: &MultiChannelDataset<F>,
    graphs: &GraphSet<F>,
    hp: &HyperParams<F>,
) -> Result<Vec<F>, SolverError> {
    check_shapes(state, data, graphs)?;
    let y = binary_labels(data)?;
    let u = &state.u;
    let label_residual = frob_sq(&(&y - &state.m.dot(&u.t())));
    let label_trace = trace_quad(&graphs.labels.laplacian.l, u);
    let shared = hp.lambda * label_residual + hp.eta * label_trace;
    let mut costs = Vec::with_capacity(data.ch());
    for (v, block) in data.channels().iter().enumerate() {
        let recon = frob_sq(&(&block.features - &state.q[v].dot(&u.t())));
        let e = recon
            + shared
            + hp.beta * trace_quad(&graphs.channels[v].laplacian.l, u)
            + hp.delta * l21_norm(&state.q[v]);
        costs.push(e);
    }
    Ok(costs)
}

/// The weighted objective: `sum_v alpha_v^gamma * e_v` over the per-channel
/// costs of [`channel_costs`].
pub fn objective<F: Float>(
    state: &SolverState<F>,
    data: &MultiChannelDataset<F>,
    graphs: &GraphSet<F>,
    hp: &HyperParams<F>,
) -> Result<F, SolverError> {
    let costs = channel_costs(state, data, graphs, hp)?;
    Ok(costs
        .iter()
        .zip(state.alpha.iter())
        .map(|(&e, &a)| a.powf(hp.gamma) * e)
        .sum())
}

/// Multiplicative update for every `Q_v` with `U` fixed:
/// `Q <- Q .* (X U) ./ (Q U^T U + delta D Q + eps)` where `D` is diagonal
/// with `D_ii = 1 / (2 sqrt(||q_i||^2 + eps))`.
pub fn update_q<F: Float>(
    state: &mut SolverState<F>,
    data: &MultiChannelDataset<F>,
    hp: &HyperParams<F>,
) {
    let eps = hp.epsilon;
    let two = F::from_f64_lit(2.0);
    let utu = state.u.t().dot(&state.u);
    for (block, q) in data.channels().iter().zip(state.q.iter_mut()) {
        let numer = block.features.dot(&state.u);
        let mut denom = q.dot(&utu);
        if hp.delta > F::zero() {
            for (mut drow, qrow) in denom.rows_mut().into_iter().zip(q.rows()) {
                let norm_sq: F = qrow.iter().map(|&x| x * x).sum();
                let scale = hp.delta / (two * (norm_sq + eps).sqrt());
                drow.zip_mut_with(&qrow, |d, &qv| *d = *d + scale * qv);
            }
        }
        Zip::from(&mut *q)
            .and(&numer)
            .and(&denom)
            .for_each(|qv, &nv, &dv| *qv = *qv * nv / (dv + eps));
    }
}

/// Multiplicative update for `U` with `Q`, `M`, `alpha` fixed. Channel terms
/// carry weight `alpha_v^gamma`; the label terms, identical across channels,
/// carry the summed weight. Affinity parts sit in the numerator and degree
/// parts in the denominator.
///
/// Panics if the dataset lacks binary labels (solve entry points check this
/// up front).
pub fn update_u<F: Float>(
    state: &mut SolverState<F>,
    data: &MultiChannelDataset<F>,
    graphs: &GraphSet<F>,
    hp: &HyperParams<F>,
) {
    let y = binary_labels(data).expect("binarized dataset");
    let eps = hp.epsilon;
    let (numer, denom) = {
        let u = &state.u;
        let (n, r) = u.dim();
        let mut numer: Array2<F> = Array2::zeros((n, r));
        let mut denom: Array2<F> = Array2::zeros((n, r));
        let mut weight_sum = F::zero();
        for (v, block) in data.channels().iter().enumerate() {
            let w = state.alpha[v].powf(hp.gamma);
            weight_sum = weight_sum + w;
            let q = &state.q[v];
            let mut num_v = block.features.t().dot(q);
            let mut den_v = u.dot(&q.t().dot(q));
            if hp.beta > F::zero() {
                num_v = num_v + &(graphs.channels[v].affinity.s.dot(u) * hp.beta);
                den_v = den_v
                    + &(scale_rows(u, &graphs.channels[v].laplacian.degree) * hp.beta);
            }
            numer.scaled_add(w, &num_v);
            denom.scaled_add(w, &den_v);
        }
        let mut num_shared = y.t().dot(&state.m) * hp.lambda;
        let mut den_shared = u.dot(&state.m.t().dot(&state.m)) * hp.lambda;
        if hp.eta > F::zero() {
            num_shared = num_shared + &(graphs.labels.affinity.s.dot(u) * hp.eta);
            den_shared = den_shared + &(scale_rows(u, &graphs.labels.laplacian.degree) * hp.eta);
        }
        numer.scaled_add(weight_sum, &num_shared);
        denom.scaled_add(weight_sum, &den_shared);
        (numer, denom)
    };
    Zip::from(&mut state.u)
        .and(&numer)
        .and(&denom)
        .for_each(|uv, &nv, &dv| *uv = *uv * nv / (dv + eps));
}

/// Multiplicative update for `M` with `U` fixed:
/// `M <- M .* (Y U) ./ (M U^T U + eps)`. The channel weights multiply both
/// sides of the ratio and cancel.
///
/// Panics if the dataset lacks binary labels.
pub fn update_m<F: Float>(
    state: &mut SolverState<F>,
    data: &MultiChannelDataset<F>,
    hp: &HyperParams<F>,
) {
    let y = binary_labels(data).expect("binarized dataset");
    let eps = hp.epsilon;
    let numer = y.dot(&state.u);
    let denom = state.m.dot(&state.u.t().dot(&state.u));
    Zip::from(&mut state.m)
        .and(&numer)
        .and(&denom)
        .for_each(|mv, &nv, &dv| *mv = *mv * nv / (dv + eps));
}

/// Closed-form simplex weights for fixed per-channel costs:
/// `alpha_v = e_v^(1/(1-gamma)) / sum_w e_w^(1/(1-gamma))`, with each cost
/// floored at `floor`. If every cost sits below the floor, or the powered
/// costs degenerate, returns uniform weights and logs a warning.
pub fn alpha_from_costs<F: Float>(costs: &[F], gamma: F, floor: F) -> Array1<F> {
    let ch = costs.len();
    let uniform = || Array1::from_elem(ch, F::one() / F::from_usize_lit(ch));
    if ch == 1 {
        return Array1::from_elem(1, F::one());
    }
    if costs.iter().all(|&e| e < floor) {
        log::warn!("all channel costs below the floor; keeping uniform weights");
        return uniform();
    }
    let exponent = F::one() / (F::one() - gamma);
    let powered: Vec<F> = costs.iter().map(|&e| e.max(floor).powf(exponent)).collect();
    let total: F = powered.iter().copied().sum();
    if !(total.is_finite() && total > F::zero()) {
        log::warn!("channel costs too spread to weight; keeping uniform weights");
        return uniform();
    }
    Array1::from_vec(powered) / total
}

/// Recomputes the channel weights from the current costs.
///
/// Panics on an inconsistent state/dataset pairing (solve entry points
/// validate shapes first).
pub fn update_alpha<F: Float>(
    state: &mut SolverState<F>,
    data: &MultiChannelDataset<F>,
    graphs: &GraphSet<F>,
    hp: &HyperParams<F>,
) {
    let costs = channel_costs(state, data, graphs, hp).expect("consistent solver state");
    state.alpha = alpha_from_costs(&costs, hp.gamma, hp.epsilon);
}

/// Runs sweeps from an existing state until the relative objective change
/// drops below `rel_tol` or `max_iters` sweeps have run. Each sweep updates
/// `Q`, `U`, `M`, then (unless `adaptive_weights` is off) `alpha`. The trace
/// records the initial objective and one value per sweep.
pub fn solve_from<F: Float>(
    mut state: SolverState<F>,
    data: &MultiChannelDataset<F>,
    graphs: &GraphSet<F>,
    hp: &HyperParams<F>,
) -> Result<SolverState<F>, SolverError> {
    hp.validate()?;
    let mut prev = objective(&state, data, graphs, hp)?;
    if !prev.is_finite() {
        return Err(SolverError::NonFinite { sweep: 0 });
    }
    state.objective_trace.clear();
    state.objective_trace.push(prev);
    for sweep in 1..=hp.max_iters {
        update_q(&mut state, data, hp);
        update_u(&mut state, data, graphs, hp);
        update_m(&mut state, data, hp);
        if hp.adaptive_weights {
            update_alpha(&mut state, data, graphs, hp);
        }
        let obj = objective(&state, data, graphs, hp)?;
        if !obj.is_finite() {
            return Err(SolverError::NonFinite { sweep });
        }
        state.objective_trace.push(obj);
        let rel = (obj - prev).abs() / prev.max(hp.epsilon);
        if rel < hp.rel_tol {
            break;
        }
        prev = obj;
    }
    Ok(state)
}

/// Initializes from the seed and runs [`solve_from`]. Deterministic for a
/// fixed seed.
pub fn solve<F: Float>(
    data: &MultiChannelDataset<F>,
    graphs: &GraphSet<F>,
    hp: &HyperParams<F>,
    seed: u64,
) -> Result<SolverState<F>, SolverError> {
    let state = init_state(data, hp, seed)?;
    solve_from(state, data, graphs, hp)
}

/// One ranked feature: its channel, row index within the channel, and score.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedFeature<F: Float> {
    pub channel: usize,
    pub feature: usize,
    pub score: F,
}

/// A global ordering of all `(channel, feature)` pairs, scores non-increasing
/// with ties broken by ascending `(channel, feature)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRanking<F: Float> {
    entries: Vec<RankedFeature<F>>,
}

impl<F: Float> FeatureRanking<F> {
    /// Sorts the given scored features into ranking order.
    pub fn from_entries(mut entries: Vec<RankedFeature<F>>) -> Self {
        entries.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then_with(|| (a.channel, a.feature).cmp(&(b.channel, b.feature)))
        });
        Self { entries }
    }

    pub fn entries(&self) -> &[RankedFeature<F>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The first `ceil(ratio * total)` entries as a set. The ceiling is
    /// computed with a tiny guard so that binary representation dust in
    /// `ratio * total` cannot inflate an exact product to the next integer.
    pub fn select_top(&self, ratio: f64) -> Result<BTreeSet<(usize, usize)>, SolverError> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(SolverError::InvalidRatio(ratio));
        }
        if self.entries.is_empty() {
            return Ok(BTreeSet::new());
        }
        let total = self.entries.len();
        let count = ((ratio * total as f64) - 1e-9).ceil() as usize;
        let count = count.clamp(1, total);
        Ok(self
            .entries
            .iter()
            .take(count)
            .map(|e| (e.channel, e.feature))
            .collect())
    }

    /// Renders the ranking as CSV with columns
    /// `global_rank,channel,feature_index,score` (rank starting at 1, scores
    /// with 17 significant digits).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("global_rank,channel,feature_index,score\n");
        for (i, e) in self.entries.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{}", i + 1, e.channel, e.feature, fmt_g17(e.score));
        }
        out
    }

    /// Parses the CSV format produced by [`FeatureRanking::to_csv`]. Entries
    /// are re-sorted, so a hand-edited file still yields a valid ranking.
    pub fn from_csv(text: &str) -> Result<Self, SolverError> {
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        for (idx, line) in text.lines().enumerate() {
            if idx == 0 || line.trim().is_empty() {
                continue;
            }
            let err = |reason: String| SolverError::RankingParse {
                line: idx + 1,
                reason,
            };
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != 4 {
                return Err(err(format!("expected 4 columns, found {}", cells.len())));
            }
            let channel: usize = cells[1]
                .parse()
                .map_err(|_| err(format!("bad channel {:?}", cells[1])))?;
            let feature: usize = cells[2]
                .parse()
                .map_err(|_| err(format!("bad feature index {:?}", cells[2])))?;
            let score: F = cells[3]
                .parse()
                .map_err(|_| err(format!("bad score {:?}", cells[3])))?;
            if !seen.insert((channel, feature)) {
                return Err(err(format!("duplicate feature ({channel}, {feature})")));
            }
            entries.push(RankedFeature {
                channel,
                feature,
                score,
            });
        }
        Ok(Self::from_entries(entries))
    }
}

/// Ranks all features by the l2 norm of their coefficient rows, descending.
pub fn rank_features<F: Float>(state: &SolverState<F>) -> FeatureRanking<F> {
    rank_with(state, |_, norm| norm)
}

/// Like [`rank_features`] but multiplies each row norm by its channel's
/// weight, an experimental scoring variant.
pub fn rank_features_alpha_weighted<F: Float>(state: &SolverState<F>) -> FeatureRanking<F> {
    rank_with(state, |alpha, norm| alpha * norm)
}

fn rank_with<F: Float>(state: &SolverState<F>, score: impl Fn(F, F) -> F) -> FeatureRanking<F> {
    let mut entries = Vec::new();
    for (c, q) in state.q.iter().enumerate() {
        let alpha = state.alpha[c];
        for (f, row) in q.rows().into_iter().enumerate() {
            let norm = row.iter().map(|&x| x * x).sum::<F>().sqrt();
            entries.push(RankedFeature {
                channel: c,
                feature: f,
                score: score(alpha, norm),
            });
        }
    }
    FeatureRanking::from_entries(entries)
}
