use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn matfa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_matfa")).args(args).output().expect("binary runs")
}

fn summary_value(dir: &Path, key: &str) -> String {
    let text = fs::read_to_string(dir.join("summary.txt")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in summary"))
        .to_string()
}

fn simulated(dir: &Path) -> (String, String) {
    let sim_dir = dir.join("sim");
    let out = matfa(&[
        "simulate",
        "--sim",
        "1",
        "--delta",
        "4",
        "--n-obs",
        "60",
        "--generate-only",
        "--seed",
        "5",
        "--out",
        sim_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (
        sim_dir.join("data.m3a").to_str().unwrap().to_string(),
        sim_dir.join("labels.txt").to_str().unwrap().to_string(),
    )
}

#[test]
fn fit_search_replay_and_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, labels) = simulated(tmp.path());

    let fit_dir = tmp.path().join("fit");
    let out = matfa(&[
        "fit", "--data", &data, "--grid-g", "2", "--grid-q", "3", "--grid-r", "2", "--row-models", "CCU",
        "--col-models", "CCU", "--seed", "3", "--starts", "2", "--out", fit_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["leaderboard.tsv", "summary.txt", "mean_g1.tsv", "mean_g2.tsv", "responsibilities.tsv", "manifest.txt"] {
        assert!(fit_dir.join(f).exists(), "{f}");
    }
    assert!(!fit_dir.join("mean_g3.tsv").exists());
    assert_eq!(summary_value(&fit_dir, "model"), "CCU-CCU");
    let mean = fs::read_to_string(fit_dir.join("mean_g1.tsv")).unwrap();
    assert_eq!(mean.lines().count(), 10);
    assert!(mean.lines().all(|l| l.split('\t').count() == 10));

    let replay_dir = tmp.path().join("replay");
    let manifest = fit_dir.join("manifest.txt");
    let out = matfa(&["replay", "--manifest", manifest.to_str().unwrap(), "--out", replay_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(summary_value(&fit_dir, "bic"), summary_value(&replay_dir, "bic"));

    let search_dir = tmp.path().join("search");
    let out = matfa(&[
        "search", "--data", &data, "--grid-g", "1-2", "--grid-q", "3", "--grid-r", "2", "--row-models", "CCU,UUU",
        "--col-models", "CCU", "--starts", "1", "--out", search_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let board = fs::read_to_string(search_dir.join("leaderboard.tsv")).unwrap();
    assert_eq!(board.lines().count(), 1 + 4);
    assert_eq!(summary_value(&search_dir, "G"), "2");

    // MAP labels from the responsibilities file, scored against the truth
    let resp = fs::read_to_string(search_dir.join("responsibilities.tsv")).unwrap();
    let predicted: String = resp.lines().skip(1).map(|l| format!("{}\n", l.rsplit('\t').next().unwrap())).collect();
    let predicted_path = tmp.path().join("predicted.txt");
    fs::write(&predicted_path, predicted).unwrap();
    let eval_dir = tmp.path().join("eval");
    let out = matfa(&[
        "evaluate",
        "--labels",
        &labels,
        "--predicted",
        predicted_path.to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let metrics = fs::read_to_string(eval_dir.join("metrics.txt")).unwrap();
    assert!(metrics.contains("ari = 1.0"), "{metrics}");
    assert!(metrics.contains("misclassification_rate = 0.0"));
}

#[test]
fn semi_supervised_fit_reports_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, labels) = simulated(tmp.path());
    let dir = tmp.path().join("semi");
    let out = matfa(&[
        "fit", "--data", &data, "--labels", &labels, "--supervision", "0.5", "--jitter", "0.01", "--grid-q", "2",
        "--grid-r", "2", "--out", dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(summary_value(&dir, "labeled"), "30");
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("o");
    let out = out_dir.to_str().unwrap();

    assert_eq!(matfa(&["fit", "--grid-g", "x"]).status.code(), Some(2));
    assert_eq!(matfa(&["search", "--data", "x", "--supervision", "0.5", "--out", out]).status.code(), Some(2));

    let bad = tmp.path().join("bad.m3a");
    fs::write(&bad, "2 2 2\n1 2\n3 4\n").unwrap();
    let result = matfa(&["fit", "--data", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(result.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&result.stderr).contains("byte offset"));
    assert_eq!(matfa(&["fit", "--data", "/nonexistent.m3a", "--out", out]).status.code(), Some(3));

    // five observations cannot support three rank-one components
    let tiny = tmp.path().join("tiny.m3a");
    let blocks: Vec<String> = (0..5).map(|i| format!("{i} 1 0\n0 {i} 1\n1 0 {i}\n")).collect();
    fs::write(&tiny, format!("3 3 5\n{}", blocks.join("\n"))).unwrap();
    let result = matfa(&["fit", "--data", tiny.to_str().unwrap(), "--grid-g", "3", "--out", out]);
    assert_eq!(result.status.code(), Some(4), "{}", String::from_utf8_lossy(&result.stderr));
}
