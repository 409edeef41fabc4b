//! Multi-channel dataset model: per-channel feature matrices, a dimensional
//! label matrix, and per-instance subject identifiers.
//!
//! All matrices are column-per-instance. The dataset is immutable after
//! construction; the transformation operations (binarization, normalization,
//! subsetting) return new values.

mod io;
mod synthetic;

pub use io::{load_dataset, save_dataset};
pub use synthetic::{generate_synthetic, SyntheticGroundTruth, SyntheticSpec};

use std::collections::BTreeSet;
use std::path::PathBuf;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::float::Float;

/// Errors raised while constructing, loading, or splitting datasets.
#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{row}:{col}: cell {text:?} is not a finite number", .file.display())]
    Parse {
        file: PathBuf,
        row: usize,
        col: usize,
        text: String,
    },
    #[error("{}: expected {expected} columns, found {found}", .file.display())]
    DimensionMismatch {
        file: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{}:{line}: {reason}", .file.display())]
    Manifest {
        file: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("subject-wise split needs at least 2 distinct subjects, found {0}")]
    TooFewSubjects(usize),
}

/// One channel's feature block: a `d_v x n` matrix with rows as features and
/// columns as instances, plus an opaque channel name.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelBlock<F: Float> {
    pub name: String,
    pub features: Array2<F>,
}

impl<F: Float> ChannelBlock<F> {
    /// Number of feature rows in this channel.
    pub fn d(&self) -> usize {
        self.features.nrows()
    }
}

/// Comparator used when turning raw label scores into binary labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinarizeRule {
    /// `score > threshold` maps to 1 (the default).
    GreaterThan,
    /// `score >= threshold` maps to 1.
    GreaterOrEqual,
}

/// A multi-channel dataset: feature blocks, raw label scores, optional
/// binarized labels, and per-instance subject identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelDataset<F: Float> {
    channels: Vec<ChannelBlock<F>>,
    labels_raw: Array2<F>,
    labels_binary: Option<Array2<bool>>,
    subject_ids: Vec<String>,
}

impl<F: Float> MultiChannelDataset<F> {
    /// Builds a dataset and validates the structural invariants: at least one
    /// channel, every channel with exactly `n` columns, labels `k x n` with
    /// `k >= 1` and `n >= 2`, one subject id per instance, all entries finite.
    pub fn new(
        channels: Vec<ChannelBlock<F>>,
        labels_raw: Array2<F>,
        subject_ids: Vec<String>,
    ) -> Result<Self, DatasetError> {
        let ds = Self {
            channels,
            labels_raw,
            labels_binary: None,
            subject_ids,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<(), DatasetError> {
        if self.channels.is_empty() {
            return Err(DatasetError::Invalid("no channels".into()));
        }
        let n = self.labels_raw.ncols();
        let k = self.labels_raw.nrows();
        if n < 2 {
            return Err(DatasetError::Invalid(format!(
                "need at least 2 instances, found {n}"
            )));
        }
        if k < 1 {
            return Err(DatasetError::Invalid("labels have no rows".into()));
        }
        for block in &self.channels {
            if block.features.ncols() != n {
                return Err(DatasetError::Invalid(format!(
                    "channel {:?} has {} columns, labels have {n}",
                    block.name,
                    block.features.ncols()
                )));
            }
            if block.features.iter().any(|x| !x.is_finite()) {
                return Err(DatasetError::Invalid(format!(
                    "channel {:?} contains a non-finite entry",
                    block.name
                )));
            }
        }
        if self.labels_raw.iter().any(|x| !x.is_finite()) {
            return Err(DatasetError::Invalid(
                "labels contain a non-finite entry".into(),
            ));
        }
        if self.subject_ids.len() != n {
            return Err(DatasetError::Invalid(format!(
                "{} subject ids for {n} instances",
                self.subject_ids.len()
            )));
        }
        if let Some(b) = &self.labels_binary {
            if b.dim() != self.labels_raw.dim() {
                return Err(DatasetError::Invalid(
                    "binary labels differ in shape from raw labels".into(),
                ));
            }
        }
        Ok(())
    }

    /// Number of instances.
    pub fn n(&self) -> usize {
        self.labels_raw.ncols()
    }

    /// Number of label dimensions.
    pub fn k(&self) -> usize {
        self.labels_raw.nrows()
    }

    /// Number of channels.
    pub fn ch(&self) -> usize {
        self.channels.len()
    }

    /// Feature counts per channel, in channel order.
    pub fn d_per_channel(&self) -> Vec<usize> {
        self.channels.iter().map(ChannelBlock::d).collect()
    }

    /// Total feature count across channels.
    pub fn total_features(&self) -> usize {
        self.channels.iter().map(ChannelBlock::d).sum()
    }

    /// The ordered channel blocks.
    pub fn channels(&self) -> &[ChannelBlock<F>] {
        &self.channels
    }

    /// Raw label scores, `k x n`.
    pub fn labels_raw(&self) -> &Array2<F> {
        &self.labels_raw
    }

    /// Binarized labels if binarization has been applied.
    pub fn labels_binary(&self) -> Option<&Array2<bool>> {
        self.labels_binary.as_ref()
    }

    /// Binarized labels converted to a 0/1 matrix in the scalar type.
    pub fn labels_binary_matrix(&self) -> Option<Array2<F>> {
        self.labels_binary
            .as_ref()
            .map(|b| b.mapv(|v| if v { F::one() } else { F::zero() }))
    }

    /// Per-instance subject identifiers.
    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub(crate) fn with_binary(mut self, binary: Array2<bool>) -> Self {
        self.labels_binary = Some(binary);
        self
    }

    /// Applies the default strict-greater rule: label is 1 when its raw score
    /// exceeds the threshold. Raw scores are preserved.
    pub fn binarize_labels(&self, threshold: F) -> Self {
        self.binarize_labels_with(threshold, BinarizeRule::GreaterThan)
    }

    /// Binarizes with an explicit comparator rule.
    pub fn binarize_labels_with(&self, threshold: F, rule: BinarizeRule) -> Self {
        let binary = self.labels_raw.mapv(|s| match rule {
            BinarizeRule::GreaterThan => s > threshold,
            BinarizeRule::GreaterOrEqual => s >= threshold,
        });
        let mut out = self.clone();
        out.labels_binary = Some(binary);
        out
    }

    /// Min-max scales every feature row to `[0, 1]`. Constant rows map to
    /// all-zeros. Labels and subjects are untouched. Idempotent.
    pub fn normalize_features(&self) -> Self {
        let mut out = self.clone();
        for block in &mut out.channels {
            for mut row in block.features.axis_iter_mut(Axis(0)) {
                let mut lo = F::infinity();
                let mut hi = F::neg_infinity();
                for &x in row.iter() {
                    lo = lo.min(x);
                    hi = hi.max(x);
                }
                let span = hi - lo;
                if span > F::zero() {
                    row.mapv_inplace(|x| (x - lo) / span);
                } else {
                    row.fill(F::zero());
                }
            }
        }
        out
    }

    /// Restricts the dataset to the given instance columns, in the given
    /// order. Labels (raw and binary) and subject ids follow along.
    pub fn subset(&self, indices: &[usize]) -> Result<Self, DatasetError> {
        let n = self.n();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(DatasetError::InvalidParameter(format!(
                "instance index {bad} out of range for {n} instances"
            )));
        }
        let channels = self
            .channels
            .iter()
            .map(|b| ChannelBlock {
                name: b.name.clone(),
                features: b.features.select(Axis(1), indices),
            })
            .collect();
        let labels_raw = self.labels_raw.select(Axis(1), indices);
        let labels_binary = self
            .labels_binary
            .as_ref()
            .map(|b| b.select(Axis(1), indices));
        let subject_ids = indices.iter().map(|&i| self.subject_ids[i].clone()).collect();
        Ok(Self {
            channels,
            labels_raw,
            labels_binary,
            subject_ids,
        })
    }

    /// Stacks the selected feature rows into one matrix (rows = selected
    /// features in ascending `(channel, feature)` order, columns = instances).
    pub fn stack_features(
        &self,
        selection: &BTreeSet<(usize, usize)>,
    ) -> Result<Array2<F>, DatasetError> {
        let n = self.n();
        let mut out = Array2::zeros((selection.len(), n));
        for (row, &(c, f)) in selection.iter().enumerate() {
            let block = self.channels.get(c).ok_or_else(|| {
                DatasetError::InvalidParameter(format!("channel index {c} out of range"))
            })?;
            if f >= block.d() {
                return Err(DatasetError::InvalidParameter(format!(
                    "feature index {f} out of range for channel {:?}",
                    block.name
                )));
            }
            out.row_mut(row).assign(&block.features.row(f));
        }
        Ok(out)
    }

    /// Splits instances so that no subject appears on both sides. Distinct
    /// subjects (in first-appearance order) are shuffled by a seeded
    /// generator; the first `ceil(train_fraction * #subjects)` subjects form
    /// the training side, clamped so the test side is never empty.
    pub fn split_subjectwise(
        &self,
        train_fraction: f64,
        seed: u64,
    ) -> Result<SplitPlan, DatasetError> {
        check_fraction(train_fraction)?;
        let mut subjects: Vec<&str> = Vec::new();
        for id in &self.subject_ids {
            if !subjects.contains(&id.as_str()) {
                subjects.push(id);
            }
        }
        let s = subjects.len();
        if s < 2 {
            return Err(DatasetError::TooFewSubjects(s));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        subjects.shuffle(&mut rng);
        let count = ((train_fraction * s as f64).ceil() as usize).clamp(1, s - 1);
        let train_subjects: BTreeSet<&str> = subjects[..count].iter().copied().collect();
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (i, id) in self.subject_ids.iter().enumerate() {
            if train_subjects.contains(id.as_str()) {
                train.push(i);
            } else {
                test.push(i);
            }
        }
        Ok(SplitPlan {
            train_instances: train,
            test_instances: test,
            seed,
        })
    }

    /// Splits individual instances regardless of subject, for data without a
    /// meaningful subject structure. The same seeded-shuffle and clamping
    /// rules as the subject-wise split apply, at instance granularity.
    pub fn split_instancewise(
        &self,
        train_fraction: f64,
        seed: u64,
    ) -> Result<SplitPlan, DatasetError> {
        check_fraction(train_fraction)?;
        let n = self.n();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        let count = ((train_fraction * n as f64).ceil() as usize).clamp(1, n - 1);
        let mut train: Vec<usize> = order[..count].to_vec();
        let mut test: Vec<usize> = order[count..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        Ok(SplitPlan {
            train_instances: train,
            test_instances: test,
            seed,
        })
    }
}

fn check_fraction(train_fraction: f64) -> Result<(), DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::InvalidParameter(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    Ok(())
}

/// A train/test partition of instance indices, tagged with the seed that
/// produced it. Indices are ascending within each side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub train_instances: Vec<usize>,
    pub test_instances: Vec<usize>,
    pub seed: u64,
}
