//! Command-line entry point.
//!
//! Subcommands: `synth` (generate a synthetic dataset), `select` (fit and
//! rank features), `eval` (score an existing ranking at one ratio), `run`
//! (full multi-trial sweep), and `friedman` (rank-table statistic).
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use cwefs::dataset::{generate_synthetic, save_dataset, DatasetError, SyntheticSpec};
use cwefs::float::fmt_g17;
use cwefs::graph::GraphSet;
use cwefs::metrics::friedman_statistic;
use cwefs::mlknn;
use cwefs::pipeline::{
    emit_report, load_configured_dataset, parse_ratio_list, run_experiment, DataSource,
    ExperimentConfig, PipelineError, SplitMode,
};
use cwefs::solver::{self, rank_features, rank_features_alpha_weighted, FeatureRanking};

#[derive(Parser)]
#[command(
    name = "cwefs",
    version,
    about = "Channel-weighted multi-label feature selection and evaluation"
)]
struct Cli {
    /// Experiment config file (flat key/value format)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override the base seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the trial count
    #[arg(long, global = true)]
    trials: Option<usize>,

    /// Override the feature-ratio sweep, e.g. 0.1,0.2,0.5
    #[arg(long, global = true)]
    ratios: Option<String>,

    /// Worker thread count (default: one per core)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (and its planted ground truth) into --out
    Synth,
    /// Fit the factorization on the configured dataset and write ranking.csv
    Select {
        /// Also write the per-sweep objective trace
        #[arg(long)]
        trace: bool,
    },
    /// Evaluate a stored ranking at one feature ratio
    Eval {
        /// Ranking CSV produced by `select`
        #[arg(long)]
        ranking: PathBuf,
        /// Fraction of top features to keep, in (0, 1]
        #[arg(long)]
        ratio: f64,
    },
    /// Run the full multi-trial sweep and write report files into --out
    Run,
    /// Print the Friedman statistic for a rank-table CSV (methods x datasets)
    Friedman {
        /// CSV with a header row and a method name in the first column
        table: PathBuf,
    },
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        let mut cause = std::error::Error::source(&e);
        while let Some(c) = cause {
            eprintln!("  caused by: {c}");
            cause = c.source();
        }
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(PipelineError::Config("threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Synth => cmd_synth(&cli),
        Command::Select { trace } => cmd_select(&cli, trace),
        Command::Eval { ref ranking, ratio } => cmd_eval(&cli, ranking, ratio),
        Command::Run => cmd_run(&cli),
        Command::Friedman { ref table } => cmd_friedman(table),
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig<f64>, PipelineError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| PipelineError::Config("this command needs --config".into()))?;
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.trials = trials;
    }
    if let Some(ratios) = &cli.ratios {
        cfg.ratios = parse_ratio_list(ratios)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require_out(cli: &Cli) -> Result<PathBuf, PipelineError> {
    cli.out
        .clone()
        .ok_or_else(|| PipelineError::Config("this command needs --out".into()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    fs::write(path, contents).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn cmd_synth(cli: &Cli) -> Result<(), PipelineError> {
    let out = require_out(cli)?;
    let mut spec = match &cli.config {
        None => SyntheticSpec::default(),
        Some(_) => match load_config(cli)?.source {
            DataSource::Synthetic(spec) => spec,
            DataSource::Manifest(_) => {
                return Err(PipelineError::Config(
                    "synth needs a synthetic data source, not data.manifest".into(),
                ))
            }
        },
    };
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    let (dataset, truth) = generate_synthetic::<f64>(&spec)?;
    let manifest = save_dataset(&dataset, &out)?;
    let mut relevant = String::from("channel,feature\n");
    for &(c, f) in &truth.relevant_features {
        let _ = writeln!(relevant, "{c},{f}");
    }
    let relevant_path = out.join("relevant.csv");
    write_file(&relevant_path, &relevant)?;
    println!("wrote {}", manifest.display());
    println!(
        "wrote {} ({} planted relevant features)",
        relevant_path.display(),
        truth.relevant_features.len()
    );
    Ok(())
}

fn cmd_select(cli: &Cli, trace: bool) -> Result<(), PipelineError> {
    let cfg = load_config(cli)?;
    let out = require_out(cli)?;
    let dataset = load_configured_dataset(&cfg)?;
    let q_eff = cfg.graph_q.min(dataset.n().saturating_sub(1)).max(1);
    let graphs = GraphSet::build(&dataset, q_eff, cfg.graph_sigma)?;
    let state = solver::solve(&dataset, &graphs, &cfg.hyper, cfg.seed)?;
    let ranking = if cfg.alpha_weighted_ranking {
        rank_features_alpha_weighted(&state)
    } else {
        rank_features(&state)
    };
    fs::create_dir_all(&out).map_err(|source| PipelineError::Io {
        path: out.clone(),
        source,
    })?;
    let ranking_path = out.join("ranking.csv");
    write_file(&ranking_path, &ranking.to_csv())?;
    println!("wrote {}", ranking_path.display());
    if trace {
        let mut text = String::from("sweep,objective\n");
        for (sweep, obj) in state.objective_trace.iter().enumerate() {
            let _ = writeln!(text, "{sweep},{}", fmt_g17(*obj));
        }
        let trace_path = out.join("objective_trace.csv");
        write_file(&trace_path, &text)?;
        println!("wrote {}", trace_path.display());
    }
    println!(
        "objective {} after {} sweeps",
        fmt_g17(*state.objective_trace.last().expect("trace never empty")),
        state.objective_trace.len() - 1
    );
    Ok(())
}

fn cmd_eval(cli: &Cli, ranking_path: &Path, ratio: f64) -> Result<(), PipelineError> {
    let cfg = load_config(cli)?;
    let dataset = load_configured_dataset(&cfg)?;
    let text = fs::read_to_string(ranking_path).map_err(|source| PipelineError::Io {
        path: ranking_path.to_path_buf(),
        source,
    })?;
    let ranking = FeatureRanking::<f64>::from_csv(&text)?;
    let plan = match cfg.split {
        SplitMode::Subject => dataset.split_subjectwise(cfg.train_fraction, cfg.seed)?,
        SplitMode::Instance => dataset.split_instancewise(cfg.train_fraction, cfg.seed)?,
    };
    let train = dataset.subset(&plan.train_instances)?;
    let test = dataset.subset(&plan.test_instances)?;
    let selected = ranking.select_top(ratio)?;
    let train_x = train.stack_features(&selected)?;
    let test_x = test.stack_features(&selected)?;
    let train_labels = train.labels_binary().expect("binarized dataset").clone();
    let truth = test.labels_binary().expect("binarized dataset").clone();
    let k_eff = cfg.k_neighbors.min(train.n().saturating_sub(1)).max(1);
    let model = mlknn::fit(train_x, train_labels, k_eff, cfg.smoothing)?;
    let pred = model.predict(&test_x)?;
    let report = cwefs::metrics::compute(&pred.labels, &pred.scores, &truth)?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    print!("{json}");
    if let Some(out) = &cli.out {
        fs::create_dir_all(out).map_err(|source| PipelineError::Io {
            path: out.clone(),
            source,
        })?;
        let path = out.join("metrics.json");
        write_file(&path, &json)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_run(cli: &Cli) -> Result<(), PipelineError> {
    let cfg = load_config(cli)?;
    let out = require_out(cli)?;
    let report = run_experiment(&cfg)?;
    let paths = emit_report(&report, &out)?;
    for path in paths {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_friedman(table: &Path) -> Result<(), PipelineError> {
    let text = fs::read_to_string(table).map_err(|source| PipelineError::Io {
        path: table.to_path_buf(),
        source,
    })?;
    let bad = |msg: String| {
        PipelineError::Dataset(DatasetError::Invalid(format!(
            "rank table {}: {msg}",
            table.display()
        )))
    };
    let mut names = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let mut cells = line.split(',').map(str::trim);
        let name = cells
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| bad(format!("line {}: missing method name", idx + 1)))?;
        let ranks: Vec<f64> = cells
            .map(|c| {
                c.parse::<f64>()
                    .map_err(|_| bad(format!("line {}: bad rank {c:?}", idx + 1)))
            })
            .collect::<Result<_, _>>()?;
        if let Some(first) = rows.first() {
            if ranks.len() != first.len() {
                return Err(bad(format!(
                    "line {}: expected {} ranks, found {}",
                    idx + 1,
                    first.len(),
                    ranks.len()
                )));
            }
        }
        names.push(name.to_string());
        rows.push(ranks);
    }
    if rows.is_empty() {
        return Err(bad("no data rows".into()));
    }
    let datasets = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let ranks = ndarray::Array2::from_shape_vec((names.len(), datasets), flat)
        .map_err(|e| bad(e.to_string()))?;
    let stat = friedman_statistic(&ranks)?;
    println!("methods {}", names.join(","));
    println!("chi_squared {}", fmt_g17(stat.chi_squared));
    println!("f_statistic {}", fmt_g17(stat.f_statistic));
    Ok(())
}
