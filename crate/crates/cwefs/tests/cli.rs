//! End-to-end checks of the command-line binary: file outputs, exit codes,
//! and the synth/select/eval flow.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cwefs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cwefs"))
        .args(args)
        .output()
        .unwrap()
}

fn path_str(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

const SMALL_SYNTH: &str = "synth.channels 2\n\
    synth.features 7, 6\n\
    synth.instances 30\n\
    synth.labels 2\n\
    synth.relevant 2\n\
    synth.noise_sigma 0.05\n\
    synth.seed 5\n\
    trials 2\n\
    ratios 0.2, 0.4\n\
    hyper.max_iters 30\n\
    graph.q 3\n\
    eval.k_neighbors 3\n";

#[test]
fn run_writes_exactly_three_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, SMALL_SYNTH).unwrap();
    let out = dir.path().join("report");
    let result = cwefs(&["run", "--config", &path_str(&cfg), "--out", &path_str(&out)]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );

    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["aggregate.csv", "summary.json", "trials.csv"]);

    let aggregate = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    let mut lines = aggregate.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("method,ratio,"));
    assert!(header.contains("mean_hamming_loss") && header.contains("std_micro_f1"));
    // Three methods times two ratios, method-major.
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6);
    assert!(rows[0].starts_with("cwefs,0.2,"));
    assert!(rows[1].starts_with("cwefs,0.4,"));
    assert!(rows[2].starts_with("random,0.2,"));
    assert!(rows[5].starts_with("variance,0.4,"));

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["methods"][0], "cwefs");
    assert_eq!(summary["methods"][1], "random");
    assert_eq!(summary["methods"][2], "variance");
    assert_eq!(summary["trials"], 2);
    assert_eq!(summary["cells"].as_array().unwrap().len(), 6);

    let trials = fs::read_to_string(out.join("trials.csv")).unwrap();
    // Header plus one row per method, ratio, and trial.
    assert_eq!(trials.lines().count(), 1 + 3 * 2 * 2);
}

#[test]
fn cli_overrides_replace_config_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, SMALL_SYNTH).unwrap();
    let out = dir.path().join("report");
    let result = cwefs(&[
        "run",
        "--config",
        &path_str(&cfg),
        "--out",
        &path_str(&out),
        "--trials",
        "1",
        "--ratios",
        "0.5",
        "--seed",
        "11",
    ]);
    assert!(result.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["trials"], 1);
    assert_eq!(summary["seed"], 11);
    assert_eq!(summary["ratios"].as_array().unwrap().len(), 1);
    assert_eq!(summary["cells"].as_array().unwrap().len(), 3);
}

#[test]
fn synth_select_eval_flow_produces_sane_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, SMALL_SYNTH).unwrap();

    let data_dir = dir.path().join("data");
    let result = cwefs(&[
        "synth",
        "--config",
        &path_str(&cfg),
        "--out",
        &path_str(&data_dir),
    ]);
    assert!(
        result.status.success(),
        "synth stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let manifest = data_dir.join("manifest.txt");
    assert!(manifest.is_file());
    let relevant = fs::read_to_string(data_dir.join("relevant.csv")).unwrap();
    assert!(relevant.starts_with("channel,feature\n"));
    // Two planted rows per channel.
    assert_eq!(relevant.lines().count(), 1 + 4);

    let cfg2 = dir.path().join("loaded.cfg");
    fs::write(
        &cfg2,
        format!(
            "data.manifest {}\nhyper.max_iters 30\ngraph.q 3\neval.k_neighbors 3\n",
            manifest.display()
        ),
    )
    .unwrap();
    let sel_dir = dir.path().join("sel");
    let result = cwefs(&[
        "select",
        "--config",
        &path_str(&cfg2),
        "--out",
        &path_str(&sel_dir),
        "--trace",
    ]);
    assert!(
        result.status.success(),
        "select stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let ranking = fs::read_to_string(sel_dir.join("ranking.csv")).unwrap();
    assert!(ranking.starts_with("global_rank,channel,feature_index,score\n"));
    assert_eq!(ranking.lines().count(), 1 + 13);

    let trace = fs::read_to_string(sel_dir.join("objective_trace.csv")).unwrap();
    let values: Vec<f64> = trace
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(values.len() >= 2);
    assert!(values.iter().all(|v| v.is_finite()));
    assert!(values.last().unwrap() <= values.first().unwrap());

    let result = cwefs(&[
        "eval",
        "--config",
        &path_str(&cfg2),
        "--ranking",
        &path_str(&sel_dir.join("ranking.csv")),
        "--ratio",
        "0.5",
    ]);
    assert!(
        result.status.success(),
        "eval stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let metrics: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&result.stdout)).unwrap();
    for key in [
        "hamming_loss",
        "ranking_loss",
        "average_precision",
        "macro_f1",
        "micro_f1",
    ] {
        let v = metrics[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key} = {v}");
    }
    assert!(metrics["coverage"].as_f64().unwrap() >= 0.0);
}

#[test]
fn friedman_prints_both_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("ranks.csv");
    fs::write(
        &table,
        "method,d1,d2,d3,d4\nalpha,1,1,2,1\nbeta,2,3,1,2\ngamma,3,2,3,3\n",
    )
    .unwrap();
    let result = cwefs(&["friedman", &path_str(&table)]);
    assert!(result.status.success());
    let stdout = String::from_utf8_lossy(&result.stdout);
    let grab = |prefix: &str| -> f64 {
        stdout
            .lines()
            .find_map(|l| l.strip_prefix(prefix))
            .unwrap()
            .trim()
            .parse()
            .unwrap()
    };
    assert!((grab("chi_squared ") - 4.5).abs() < 1e-10);
    assert!((grab("f_statistic ") - 13.5 / 3.5).abs() < 1e-10);
    assert!(stdout.contains("alpha,beta,gamma"));
}

#[test]
fn config_problems_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "bogus_key 1\nsynth.channels 1\n").unwrap();
    let out = dir.path().join("report");
    let result = cwefs(&["run", "--config", &path_str(&cfg), "--out", &path_str(&out)]);
    assert_eq!(result.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&result.stderr).contains("bogus_key"));

    // A missing --config is also a configuration problem.
    let result = cwefs(&["run", "--out", &path_str(&out)]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn data_problems_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, "data.manifest missing/never.txt\n").unwrap();
    let out = dir.path().join("report");
    let result = cwefs(&["run", "--config", &path_str(&cfg), "--out", &path_str(&out)]);
    assert_eq!(result.status.code(), Some(3));

    let result = cwefs(&["friedman", &path_str(&dir.path().join("nope.csv"))]);
    assert_eq!(result.status.code(), Some(3));
}
