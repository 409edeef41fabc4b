//! End-to-end experiment orchestration.
//!
//! One experiment runs `trials` independent trials. Trial `t` derives its
//! own seed (`base seed + t`), splits the dataset, fits the factorization on
//! the training side only, ranks features, and then for every ratio in the
//! sweep trains the ML-KNN classifier on the selected features and scores
//! the test side with the six metrics. Baseline rankings (seeded random
//! order, per-feature variance) go through the identical selection and
//! evaluation path.
//!
//! Trials run in parallel; results are collected by trial index and reduced
//! in a fixed order, so reports are bit-identical regardless of worker
//! count.

mod config;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use config::{
    parse_ratio_list, Baseline, DataSource, ExperimentConfig, SplitMode, DEFAULT_RATIOS,
};

use crate::dataset::{
    generate_synthetic, load_dataset, DatasetError, MultiChannelDataset, SplitPlan,
};
use crate::float::{fmt_g17, Float};
use crate::graph::{GraphError, GraphSet};
use crate::metrics::{self, MetricsError, MetricsReport};
use crate::mlknn::{self, MlknnError};
use crate::solver::{
    self, rank_features, rank_features_alpha_weighted, FeatureRanking, RankedFeature, SolverError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Mlknn(#[from] MlknnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("trial {trial}, stage {stage}: {source}")]
    Trial {
        trial: usize,
        stage: &'static str,
        #[source]
        source: Box<PipelineError>,
    },
    #[error("io failure on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot serialize report: {0}")]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    /// Process exit code for this error: 2 for configuration problems, 3 for
    /// data problems, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Dataset(_) | PipelineError::Io { .. } => 3,
            PipelineError::Graph(e) => match e {
                GraphError::QOutOfRange { .. } | GraphError::BadSigma => 2,
                _ => 3,
            },
            PipelineError::Solver(e) => match e {
                SolverError::InvalidHyperParams(_) | SolverError::InvalidRatio(_) => 2,
                SolverError::MissingBinaryLabels | SolverError::RankingParse { .. } => 3,
                _ => 4,
            },
            PipelineError::Mlknn(e) => match e {
                MlknnError::TooFewTrainingInstances { .. } | MlknnError::InvalidParameter(_) => 2,
                MlknnError::ShapeMismatch(_) => 4,
            },
            PipelineError::Metrics(_) | PipelineError::Json(_) => 4,
            PipelineError::Trial { source, .. } => source.exit_code(),
        }
    }
}

fn in_stage(trial: usize, stage: &'static str) -> impl Fn(PipelineError) -> PipelineError {
    move |source| PipelineError::Trial {
        trial,
        stage,
        source: Box::new(source),
    }
}

/// Aggregated results: per (method, ratio), the mean and population standard
/// deviation of each metric across trials, plus the raw per-trial values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub methods: Vec<String>,
    pub ratios: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub cells: Vec<SweepCell>,
    #[serde(skip)]
    pub per_trial: Vec<TrialRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub method: String,
    pub ratio: f64,
    pub mean: MetricsReport,
    pub std: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub method: String,
    pub ratio: f64,
    pub trial: usize,
    pub metrics: MetricsReport,
}

/// Loads or synthesizes the configured dataset, min-max normalizes its
/// features, and ensures binary labels exist (binarizing raw labels at the
/// configured threshold when the source provides none).
pub fn load_configured_dataset<F: Float>(
    config: &ExperimentConfig<F>,
) -> Result<MultiChannelDataset<F>, PipelineError> {
    let dataset = match &config.source {
        DataSource::Manifest(path) => load_dataset(path)?,
        DataSource::Synthetic(spec) => generate_synthetic(spec)?.0,
    };
    let dataset = dataset.normalize_features();
    let dataset = if dataset.labels_binary().is_some() {
        dataset
    } else {
        dataset.binarize_labels(config.binarize_threshold)
    };
    Ok(dataset)
}

/// A seeded uniform shuffle of all `(channel, feature)` pairs.
pub fn baseline_random<F: Float>(d_per_channel: &[usize], seed: u64) -> FeatureRanking<F> {
    let mut pairs: Vec<(usize, usize)> = d_per_channel
        .iter()
        .enumerate()
        .flat_map(|(c, &d)| (0..d).map(move |f| (c, f)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs.shuffle(&mut rng);
    let total = pairs.len();
    FeatureRanking::from_entries(
        pairs
            .into_iter()
            .enumerate()
            .map(|(i, (channel, feature))| RankedFeature {
                channel,
                feature,
                score: F::from_usize_lit(total - i),
            })
            .collect(),
    )
}

/// Features ranked by the population variance of their rows, descending,
/// ties by ascending `(channel, feature)`.
pub fn baseline_variance<F: Float>(data: &MultiChannelDataset<F>) -> FeatureRanking<F> {
    let n = F::from_usize_lit(data.n());
    let mut entries = Vec::with_capacity(data.total_features());
    for (channel, block) in data.channels().iter().enumerate() {
        for (feature, row) in block.features.rows().into_iter().enumerate() {
            let mean = row.iter().copied().sum::<F>() / n;
            let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<F>() / n;
            entries.push(RankedFeature {
                channel,
                feature,
                score: var,
            });
        }
    }
    FeatureRanking::from_entries(entries)
}

/// Runs the configured sweep. Deterministic for a fixed config, independent
/// of the rayon worker count.
pub fn run_experiment<F: Float>(
    config: &ExperimentConfig<F>,
) -> Result<SweepReport, PipelineError> {
    config.validate()?;
    let dataset = load_configured_dataset(config)?;
    let methods: Vec<String> = std::iter::once("cwefs".to_string())
        .chain(config.baselines.iter().map(|b| b.name().to_string()))
        .collect();

    let per_trial: Vec<Vec<MetricsReport>> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(&dataset, config, t))
        .collect::<Result<_, _>>()?;

    let n_ratios = config.ratios.len();
    let mut cells = Vec::with_capacity(methods.len() * n_ratios);
    let mut records = Vec::with_capacity(methods.len() * n_ratios * config.trials);
    for (mi, method) in methods.iter().enumerate() {
        for (ri, &ratio) in config.ratios.iter().enumerate() {
            let series: Vec<MetricsReport> = per_trial
                .iter()
                .map(|reports| reports[mi * n_ratios + ri])
                .collect();
            let (mean, std) = aggregate(&series);
            cells.push(SweepCell {
                method: method.clone(),
                ratio,
                mean,
                std,
            });
            for (trial, metrics) in series.into_iter().enumerate() {
                records.push(TrialRecord {
                    method: method.clone(),
                    ratio,
                    trial,
                    metrics,
                });
            }
        }
    }
    Ok(SweepReport {
        methods,
        ratios: config.ratios.clone(),
        trials: config.trials,
        seed: config.seed,
        cells,
        per_trial: records,
    })
}

/// One trial's reports, laid out method-major then ratio, matching the
/// method and ratio order of the config.
fn run_trial<F: Float>(
    dataset: &MultiChannelDataset<F>,
    config: &ExperimentConfig<F>,
    trial: usize,
) -> Result<Vec<MetricsReport>, PipelineError> {
    let seed = config.seed.wrapping_add(trial as u64);
    let plan: SplitPlan = match config.split {
        SplitMode::Subject => dataset.split_subjectwise(config.train_fraction, seed),
        SplitMode::Instance => dataset.split_instancewise(config.train_fraction, seed),
    }
    .map_err(PipelineError::from)
    .map_err(in_stage(trial, "split"))?;
    let train = dataset.subset(&plan.train_instances)?;
    let test = dataset.subset(&plan.test_instances)?;

    // Graph and classifier neighbor counts cannot exceed what the training
    // fold offers; clamp rather than fail on small folds.
    let q_eff = config.graph_q.min(train.n().saturating_sub(1)).max(1);
    if q_eff != config.graph_q {
        log::debug!("trial {trial}: clamping graph.q to {q_eff}");
    }
    let graphs = GraphSet::build(&train, q_eff, config.graph_sigma)
        .map_err(PipelineError::from)
        .map_err(in_stage(trial, "graphs"))?;
    let state = solver::solve(&train, &graphs, &config.hyper, seed)
        .map_err(PipelineError::from)
        .map_err(in_stage(trial, "solve"))?;

    let mut rankings: Vec<FeatureRanking<F>> = Vec::with_capacity(1 + config.baselines.len());
    rankings.push(if config.alpha_weighted_ranking {
        rank_features_alpha_weighted(&state)
    } else {
        rank_features(&state)
    });
    for baseline in &config.baselines {
        rankings.push(match baseline {
            Baseline::Random => baseline_random(&train.d_per_channel(), seed),
            Baseline::Variance => baseline_variance(&train),
        });
    }

    let train_labels = train.labels_binary().expect("binarized dataset").clone();
    let truth = test.labels_binary().expect("binarized dataset").clone();
    let k_eff = config.k_neighbors.min(train.n().saturating_sub(1)).max(1);
    if k_eff != config.k_neighbors {
        log::debug!("trial {trial}: clamping eval.k_neighbors to {k_eff}");
    }

    let mut reports = Vec::with_capacity(rankings.len() * config.ratios.len());
    for ranking in &rankings {
        for &ratio in &config.ratios {
            let selected: BTreeSet<(usize, usize)> = ranking
                .select_top(ratio)
                .map_err(PipelineError::from)
                .map_err(in_stage(trial, "select"))?;
            let train_x = train.stack_features(&selected)?;
            let test_x = test.stack_features(&selected)?;
            let model = mlknn::fit(train_x, train_labels.clone(), k_eff, config.smoothing)
                .map_err(PipelineError::from)
                .map_err(in_stage(trial, "mlknn-fit"))?;
            let pred = model
                .predict(&test_x)
                .map_err(PipelineError::from)
                .map_err(in_stage(trial, "mlknn-predict"))?;
            let report = metrics::compute(&pred.labels, &pred.scores, &truth)
                .map_err(PipelineError::from)
                .map_err(in_stage(trial, "metrics"))?;
            reports.push(report);
        }
    }
    Ok(reports)
}

fn aggregate(series: &[MetricsReport]) -> (MetricsReport, MetricsReport) {
    let n = series.len() as f64;
    let stat = |f: fn(&MetricsReport) -> f64| {
        let mean = series.iter().map(f).sum::<f64>() / n;
        let var = series.iter().map(|r| (f(r) - mean) * (f(r) - mean)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    let (hl_m, hl_s) = stat(|r| r.hamming_loss);
    let (rl_m, rl_s) = stat(|r| r.ranking_loss);
    let (cv_m, cv_s) = stat(|r| r.coverage);
    let (ap_m, ap_s) = stat(|r| r.average_precision);
    let (ma_m, ma_s) = stat(|r| r.macro_f1);
    let (mi_m, mi_s) = stat(|r| r.micro_f1);
    (
        MetricsReport {
            hamming_loss: hl_m,
            ranking_loss: rl_m,
            coverage: cv_m,
            average_precision: ap_m,
            macro_f1: ma_m,
            micro_f1: mi_m,
        },
        MetricsReport {
            hamming_loss: hl_s,
            ranking_loss: rl_s,
            coverage: cv_s,
            average_precision: ap_s,
            macro_f1: ma_s,
            micro_f1: mi_s,
        },
    )
}

const METRIC_COLUMNS: [&str; 6] = [
    "hamming_loss",
    "ranking_loss",
    "coverage",
    "average_precision",
    "macro_f1",
    "micro_f1",
];

fn metric_values(r: &MetricsReport) -> [f64; 6] {
    [
        r.hamming_loss,
        r.ranking_loss,
        r.coverage,
        r.average_precision,
        r.macro_f1,
        r.micro_f1,
    ]
}

/// Writes `aggregate.csv`, `trials.csv`, and `summary.json` into `out_dir`
/// (created if needed) and returns the three paths. Identical reports
/// produce byte-identical files.
pub fn emit_report(report: &SweepReport, out_dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    fs::create_dir_all(out_dir).map_err(|source| PipelineError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let mut aggregate = String::from("method,ratio");
    for col in METRIC_COLUMNS {
        let _ = write!(aggregate, ",mean_{col},std_{col}");
    }
    aggregate.push('\n');
    for cell in &report.cells {
        let _ = write!(aggregate, "{},{}", cell.method, cell.ratio);
        for (m, s) in metric_values(&cell.mean)
            .into_iter()
            .zip(metric_values(&cell.std))
        {
            let _ = write!(aggregate, ",{},{}", fmt_g17(m), fmt_g17(s));
        }
        aggregate.push('\n');
    }

    let mut trials = String::from("method,ratio,trial");
    for col in METRIC_COLUMNS {
        let _ = write!(trials, ",{col}");
    }
    trials.push('\n');
    for row in &report.per_trial {
        let _ = write!(trials, "{},{},{}", row.method, row.ratio, row.trial);
        for v in metric_values(&row.metrics) {
            let _ = write!(trials, ",{}", fmt_g17(v));
        }
        trials.push('\n');
    }

    let mut summary = serde_json::to_string_pretty(report)?;
    summary.push('\n');

    let paths = [
        ("aggregate.csv", aggregate),
        ("trials.csv", trials),
        ("summary.json", summary),
    ];
    let mut written = Vec::with_capacity(3);
    for (name, contents) in paths {
        let path = out_dir.join(name);
        fs::write(&path, contents).map_err(|source| PipelineError::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}
