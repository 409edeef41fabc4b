//! Experiment configuration and its flat key/value file format.
//!
//! A config file holds one `key value` (or `key = value`) pair per line;
//! blank lines and lines starting with `#` are ignored. Exactly one data
//! source must be named: either `data.manifest <path>` (resolved relative to
//! the config file) or a synthetic spec through dotted `synth.*` keys.
//!
//! Recognized keys, with defaults in parentheses:
//!
//! | key | meaning |
//! |-----|---------|
//! | `data.manifest` | dataset manifest path |
//! | `synth.channels` (3) | number of synthetic channels |
//! | `synth.features` (40) | per-channel feature counts, comma list or one value for all |
//! | `synth.instances` (120) | instance count |
//! | `synth.labels` (3) | label count |
//! | `synth.relevant` (8) | planted relevant features per channel |
//! | `synth.noise_sigma` (0.05) | additive noise level |
//! | `synth.seed` (0) | generation seed |
//! | `hyper.lambda/beta/eta/delta` (0.1 each) | objective tradeoffs |
//! | `hyper.gamma` (2) | channel-weight exponent |
//! | `hyper.epsilon` (1e-12) | denominator floor |
//! | `hyper.max_iters` (300), `hyper.rel_tol` (1e-6) | sweep loop control |
//! | `hyper.latent_dim` (label count) | latent width override |
//! | `hyper.adaptive_weights` (true) | learn channel weights vs. keep uniform |
//! | `graph.q` (5), `graph.sigma` (1) | affinity graph parameters |
//! | `eval.k_neighbors` (10), `eval.smoothing` (1) | classifier parameters |
//! | `eval.binarize_threshold` (5) | raw-label cut when no binary labels are stored |
//! | `eval.split` (subject) | `subject` or `instance` splitting |
//! | `rank.alpha_weighted` (false) | scale feature scores by channel weight |
//! | `ratios` (0.05..0.50 step 0.05) | feature-ratio sweep, strictly increasing in (0,1] |
//! | `trials` (50) | independent trials |
//! | `train_fraction` (0.8) | training share per split |
//! | `seed` (0) | base seed; trial t uses seed + t |
//! | `baselines` (random,variance) | comma list, or `none` |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataset::SyntheticSpec;
use crate::float::Float;
use crate::solver::HyperParams;

use super::PipelineError;

/// The default feature-ratio sweep.
pub const DEFAULT_RATIOS: [f64; 10] = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5];

/// Where the experiment's dataset comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Manifest(PathBuf),
    Synthetic(SyntheticSpec),
}

/// How instances are partitioned into train and test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    Subject,
    Instance,
}

/// Trivial reference rankings run alongside the learned one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Random,
    Variance,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::Random => "random",
            Baseline::Variance => "variance",
        }
    }
}

/// Everything one experiment run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig<F: Float> {
    pub source: DataSource,
    pub hyper: HyperParams<F>,
    pub graph_q: usize,
    pub graph_sigma: F,
    pub ratios: Vec<f64>,
    pub trials: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub baselines: Vec<Baseline>,
    pub k_neighbors: usize,
    pub smoothing: F,
    pub binarize_threshold: F,
    pub split: SplitMode,
    pub alpha_weighted_ranking: bool,
}

fn config_err(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, PipelineError> {
    value
        .parse()
        .map_err(|_| config_err(format!("{key}: cannot parse {value:?}")))
}

/// Parses a comma-separated list of ratios, e.g. `0.05,0.1,0.2`.
pub fn parse_ratio_list(text: &str) -> Result<Vec<f64>, PipelineError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value("ratios", s))
        .collect()
}

impl<F: Float> ExperimentConfig<F> {
    /// A config with every field at its default, for the given data source.
    pub fn with_source(source: DataSource) -> Self {
        Self {
            source,
            hyper: HyperParams::default(),
            graph_q: 5,
            graph_sigma: F::one(),
            ratios: DEFAULT_RATIOS.to_vec(),
            trials: 50,
            train_fraction: 0.8,
            seed: 0,
            baselines: vec![Baseline::Random, Baseline::Variance],
            k_neighbors: 10,
            smoothing: F::one(),
            binarize_threshold: F::from_f64_lit(5.0),
            split: SplitMode::Subject,
            alpha_weighted_ranking: false,
        }
    }

    /// Reads and parses a config file; relative dataset paths resolve
    /// against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text. `base_dir` anchors relative manifest paths.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = match line.split_once('=') {
                Some((k, v)) => (k.trim(), v.trim()),
                None => line
                    .split_once(char::is_whitespace)
                    .map(|(k, v)| (k.trim(), v.trim()))
                    .ok_or_else(|| {
                        config_err(format!("line {}: expected 'key value'", lineno + 1))
                    })?,
            };
            if key.is_empty() || value.is_empty() {
                return Err(config_err(format!(
                    "line {}: empty key or value",
                    lineno + 1
                )));
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(config_err(format!("duplicate key {key:?}")));
            }
        }

        let manifest = entries.remove("data.manifest");
        let has_synth = entries.keys().any(|k| k.starts_with("synth."));
        if manifest.is_some() && has_synth {
            return Err(config_err(
                "config names both data.manifest and synth.* keys; pick one source",
            ));
        }
        let source = if let Some(path) = manifest {
            DataSource::Manifest(base_dir.join(path))
        } else if has_synth {
            DataSource::Synthetic(parse_synth_spec(&mut entries)?)
        } else {
            return Err(config_err(
                "config must name a data source: data.manifest or synth.* keys",
            ));
        };

        let mut cfg = Self::with_source(source);
        if let Some(v) = entries.remove("hyper.lambda") {
            cfg.hyper.lambda = parse_float::<F>("hyper.lambda", &v)?;
        }
        if let Some(v) = entries.remove("hyper.beta") {
            cfg.hyper.beta = parse_float::<F>("hyper.beta", &v)?;
        }
        if let Some(v) = entries.remove("hyper.eta") {
            cfg.hyper.eta = parse_float::<F>("hyper.eta", &v)?;
        }
        if let Some(v) = entries.remove("hyper.gamma") {
            cfg.hyper.gamma = parse_float::<F>("hyper.gamma", &v)?;
        }
        if let Some(v) = entries.remove("hyper.delta") {
            cfg.hyper.delta = parse_float::<F>("hyper.delta", &v)?;
        }
        if let Some(v) = entries.remove("hyper.epsilon") {
            cfg.hyper.epsilon = parse_float::<F>("hyper.epsilon", &v)?;
        }
        if let Some(v) = entries.remove("hyper.max_iters") {
            cfg.hyper.max_iters = parse_value("hyper.max_iters", &v)?;
        }
        if let Some(v) = entries.remove("hyper.rel_tol") {
            cfg.hyper.rel_tol = parse_float::<F>("hyper.rel_tol", &v)?;
        }
        if let Some(v) = entries.remove("hyper.latent_dim") {
            cfg.hyper.latent_dim = Some(parse_value("hyper.latent_dim", &v)?);
        }
        if let Some(v) = entries.remove("hyper.adaptive_weights") {
            cfg.hyper.adaptive_weights = parse_value("hyper.adaptive_weights", &v)?;
        }
        if let Some(v) = entries.remove("graph.q") {
            cfg.graph_q = parse_value("graph.q", &v)?;
        }
        if let Some(v) = entries.remove("graph.sigma") {
            cfg.graph_sigma = parse_float::<F>("graph.sigma", &v)?;
        }
        if let Some(v) = entries.remove("eval.k_neighbors") {
            cfg.k_neighbors = parse_value("eval.k_neighbors", &v)?;
        }
        if let Some(v) = entries.remove("eval.smoothing") {
            cfg.smoothing = parse_float::<F>("eval.smoothing", &v)?;
        }
        if let Some(v) = entries.remove("eval.binarize_threshold") {
            cfg.binarize_threshold = parse_float::<F>("eval.binarize_threshold", &v)?;
        }
        if let Some(v) = entries.remove("eval.split") {
            cfg.split = match v.as_str() {
                "subject" => SplitMode::Subject,
                "instance" => SplitMode::Instance,
                other => {
                    return Err(config_err(format!(
                        "eval.split: expected subject or instance, got {other:?}"
                    )))
                }
            };
        }
        if let Some(v) = entries.remove("rank.alpha_weighted") {
            cfg.alpha_weighted_ranking = parse_value("rank.alpha_weighted", &v)?;
        }
        if let Some(v) = entries.remove("ratios") {
            cfg.ratios = parse_ratio_list(&v)?;
        }
        if let Some(v) = entries.remove("trials") {
            cfg.trials = parse_value("trials", &v)?;
        }
        if let Some(v) = entries.remove("train_fraction") {
            cfg.train_fraction = parse_value("train_fraction", &v)?;
        }
        if let Some(v) = entries.remove("seed") {
            cfg.seed = parse_value("seed", &v)?;
        }
        if let Some(v) = entries.remove("baselines") {
            cfg.baselines = parse_baselines(&v)?;
        }

        if let Some(key) = entries.keys().next() {
            return Err(config_err(format!("unknown key {key:?}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if let DataSource::Synthetic(spec) = &self.source {
            spec.validate().map_err(|e| config_err(e.to_string()))?;
        }
        self.hyper.validate().map_err(|e| config_err(e.to_string()))?;
        if self.ratios.is_empty() {
            return Err(config_err("ratios must not be empty"));
        }
        for pair in self.ratios.windows(2) {
            if pair[1] <= pair[0] {
                return Err(config_err(format!(
                    "ratios must be strictly increasing, got {} after {}",
                    pair[1], pair[0]
                )));
            }
        }
        for &r in &self.ratios {
            if !(r > 0.0 && r <= 1.0) {
                return Err(config_err(format!("ratio {r} outside (0, 1]")));
            }
        }
        if self.trials == 0 {
            return Err(config_err("trials must be at least 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(config_err(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.graph_q == 0 {
            return Err(config_err("graph.q must be at least 1"));
        }
        if !(self.graph_sigma > F::zero() && self.graph_sigma.is_finite()) {
            return Err(config_err("graph.sigma must be positive and finite"));
        }
        if self.k_neighbors == 0 {
            return Err(config_err("eval.k_neighbors must be at least 1"));
        }
        if !(self.smoothing >= F::zero() && self.smoothing.is_finite()) {
            return Err(config_err("eval.smoothing must be >= 0 and finite"));
        }
        if !self.binarize_threshold.is_finite() {
            return Err(config_err("eval.binarize_threshold must be finite"));
        }
        let mut seen = Vec::new();
        for b in &self.baselines {
            if seen.contains(b) {
                return Err(config_err(format!("baseline {:?} listed twice", b.name())));
            }
            seen.push(*b);
        }
        Ok(())
    }
}

fn parse_float<F: Float>(key: &str, value: &str) -> Result<F, PipelineError> {
    F::from_str(value).map_err(|_| config_err(format!("{key}: cannot parse {value:?}")))
}

fn parse_synth_spec(
    entries: &mut BTreeMap<String, String>,
) -> Result<SyntheticSpec, PipelineError> {
    let mut spec = SyntheticSpec::default();
    if let Some(v) = entries.remove("synth.channels") {
        spec.ch = parse_value("synth.channels", &v)?;
    }
    let features = entries.remove("synth.features");
    if let Some(v) = entries.remove("synth.instances") {
        spec.n = parse_value("synth.instances", &v)?;
    }
    if let Some(v) = entries.remove("synth.labels") {
        spec.k = parse_value("synth.labels", &v)?;
    }
    if let Some(v) = entries.remove("synth.relevant") {
        spec.relevant_per_channel = parse_value("synth.relevant", &v)?;
    }
    if let Some(v) = entries.remove("synth.noise_sigma") {
        spec.noise_sigma = parse_value("synth.noise_sigma", &v)?;
    }
    if let Some(v) = entries.remove("synth.seed") {
        spec.seed = parse_value("synth.seed", &v)?;
    }
    spec.d_per_channel = match features {
        None => vec![40; spec.ch],
        Some(list) => {
            let counts: Vec<usize> = list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| parse_value("synth.features", s))
                .collect::<Result<_, _>>()?;
            match counts.len() {
                0 => return Err(config_err("synth.features: empty list")),
                1 => vec![counts[0]; spec.ch],
                len if len == spec.ch => counts,
                len => {
                    return Err(config_err(format!(
                        "synth.features lists {len} counts for {} channels",
                        spec.ch
                    )))
                }
            }
        }
    };
    Ok(spec)
}

fn parse_baselines(value: &str) -> Result<Vec<Baseline>, PipelineError> {
    if value == "none" {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match s {
            "random" => Ok(Baseline::Random),
            "variance" => Ok(Baseline::Variance),
            other => Err(config_err(format!(
                "baselines: expected random or variance, got {other:?}"
            ))),
        })
        .collect()
}
