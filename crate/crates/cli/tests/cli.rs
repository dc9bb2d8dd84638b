use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proxyfit_core::data::{load_csv, split, synth_smooth_1d, write_csv};
use proxyfit_core::rng::derive_seed;
use proxyfit_core::{
    ExplanationReport, ProxyTree, ReferenceConfig, ReferenceModel, SplitSpec, Task,
};
use serde_json::Value;

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
        .to_str()
        .unwrap()
        .to_owned()
}

fn proxyfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_proxyfit"))
        .args(args)
        .env_remove("PROXYFIT_OUT")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = proxyfit(args);
    assert!(
        out.status.success(),
        "proxyfit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a small smooth 1-d dataset and returns its path.
fn smooth_csv(dir: &Path, n: usize) -> PathBuf {
    let path = dir.join("smooth.csv");
    write_csv(&synth_smooth_1d(n, 0.1, 4).unwrap().0, &path).unwrap();
    path
}

#[test]
fn gp_model_round_trips_through_file() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = smooth_csv(tmp.path(), 60);
    let out = tmp.path().join("fit");
    ok(&[
        "fit-reference",
        "--data",
        s(&csv),
        "--target",
        "y",
        "--seed",
        "2",
        "--out",
        s(&out),
    ]);

    let loaded =
        ReferenceModel::from_json(&std::fs::read_to_string(out.join("model.json")).unwrap())
            .unwrap();
    let ds = load_csv(&csv, "y", Task::Regression).unwrap();
    let (train, _) = split(&ds, &SplitSpec::new(0.75, derive_seed(2, 0)).unwrap()).unwrap();
    let fresh = ReferenceConfig::Gp(Default::default())
        .with_seed(derive_seed(2, 1))
        .fit(&train)
        .unwrap();
    let a = loaded.predict_summary(&ds.features).unwrap();
    let b = fresh.predict_summary(&ds.features).unwrap();
    for (x, y) in a.means().unwrap().iter().zip(b.means().unwrap()) {
        assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
    }
    let report = json(out.join("fit_report.json"));
    assert_eq!(
        report["fingerprint"],
        Value::String(loaded.fingerprint().unwrap())
    );
    assert!(report["selected"]["hyper"]["lengthscale"].as_f64().unwrap() > 0.0);
}

#[test]
fn three_trees_predict_worse_than_a_hundred() {
    let tmp = tempfile::tempdir().unwrap();
    let rmse = |n: &str| {
        let out = tmp.path().join(n);
        ok(&[
            "fit-reference",
            "--data",
            &data("friedman1.csv"),
            "--target",
            "y",
            "--reference",
            "ensemble",
            "--n-trees",
            n,
            "--out",
            s(&out),
        ]);
        json(out.join("fit_report.json"))["test"]["rmse"]
            .as_f64()
            .unwrap()
    };
    assert!(rmse("3") > rmse("100"));
}

#[test]
fn unknown_target_column_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = proxyfit(&[
        "fit-reference",
        "--data",
        &data("diabetes.csv"),
        "--target",
        "no_such_column",
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("no_such_column"), "{err}");
    assert_eq!(err.trim().lines().count(), 1);
}

#[test]
fn missing_inputs_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("absent.csv");
    let out = proxyfit(&[
        "sweep",
        "--data",
        s(&missing),
        "--target",
        "y",
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = proxyfit(&["sweep", "--target", "y", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = proxyfit(&["explain", "--size", "2", "--cv", "--model", "m.json"]);
    assert_eq!(out.status.code(), Some(2));
}

fn fitted_model(tmp: &Path) -> (PathBuf, PathBuf) {
    let csv = smooth_csv(tmp, 80);
    let out = tmp.join("fit");
    ok(&[
        "fit-reference",
        "--data",
        s(&csv),
        "--target",
        "y",
        "--out",
        s(&out),
    ]);
    (csv, out.join("model.json"))
}

#[test]
fn global_size_one_gives_a_single_leaf() {
    let tmp = tempfile::tempdir().unwrap();
    let (csv, model) = fitted_model(tmp.path());
    let out = tmp.path().join("explain");
    ok(&[
        "explain",
        "--data",
        s(&csv),
        "--target",
        "y",
        "--model",
        s(&model),
        "--size",
        "1",
        "--out",
        s(&out),
    ]);
    let report: ExplanationReport = serde_json::from_value(json(out.join("report.json"))).unwrap();
    assert_eq!(report.complexity, 1);
    assert_eq!(
        ProxyTree::from_document(&report.proxy).unwrap().n_leaves(),
        1
    );
    assert!(std::fs::read_to_string(out.join("tree.dot"))
        .unwrap()
        .contains("μ="));
}

#[test]
fn local_explanation_respects_depth_cap_and_records_center() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("fit");
    ok(&[
        "fit-reference",
        "--data",
        &data("bodyfat_like.csv"),
        "--target",
        "bodyfat",
        "--reference",
        "ensemble",
        "--n-trees",
        "20",
        "--out",
        s(&model),
    ]);
    let out = tmp.path().join("local");
    ok(&[
        "explain",
        "--data",
        &data("bodyfat_like.csv"),
        "--target",
        "bodyfat",
        "--model",
        s(&model.join("model.json")),
        "--mode",
        "local",
        "--center-row",
        "2",
        "--max-depth",
        "3",
        "--cv",
        "--out",
        s(&out),
    ]);
    let report: ExplanationReport = serde_json::from_value(json(out.join("report.json"))).unwrap();
    let tree = ProxyTree::from_document(&report.proxy).unwrap();
    assert!(tree.depth() <= 3);
    let nb = &json(out.join("report.json"))["target_kind"]["neighborhood"];
    assert_eq!(nb["center"].as_array().unwrap().len(), 13);
    assert!(nb["seed"].is_u64());
    assert_eq!(json(out.join("config.json"))["details"]["center_row"], 2);
    let dot = std::fs::read_to_string(out.join("tree.dot")).unwrap();
    assert_eq!(dot.matches("μ=").count(), tree.n_leaves());
}

#[test]
fn local_mode_needs_a_center() {
    let tmp = tempfile::tempdir().unwrap();
    let (csv, model) = fitted_model(tmp.path());
    let base = [
        "explain",
        "--data",
        s(&csv),
        "--target",
        "y",
        "--model",
        s(&model),
        "--mode",
        "local",
    ];
    let out = proxyfit(&base);
    assert_eq!(out.status.code(), Some(2));
    let mut wrong_len = base.to_vec();
    wrong_len.extend(["--center", "0.1,0.2"]);
    assert_eq!(proxyfit(&wrong_len).status.code(), Some(2));
    let mut explicit = base.to_vec();
    let dir = tmp.path().join("explicit");
    explicit.extend(["--center", "-0.5", "--size", "4", "--out", s(&dir)]);
    ok(&explicit);
    assert_eq!(json(dir.join("report.json"))["complexity"], 4);
}

#[test]
fn export_dot_matches_explain_output() {
    let tmp = tempfile::tempdir().unwrap();
    let (csv, model) = fitted_model(tmp.path());
    let out = tmp.path().join("explain");
    ok(&[
        "explain",
        "--data",
        s(&csv),
        "--target",
        "y",
        "--model",
        s(&model),
        "--size",
        "5",
        "--out",
        s(&out),
    ]);
    let dot = tmp.path().join("again.dot");
    ok(&[
        "export-dot",
        "--report",
        s(&out.join("report.json")),
        "--output",
        s(&dot),
    ]);
    assert_eq!(
        std::fs::read(&dot).unwrap(),
        std::fs::read(out.join("tree.dot")).unwrap()
    );
}

#[test]
fn sweep_writes_one_row_per_size() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    ok(&[
        "sweep",
        "--data",
        &data("bodyfat_like.csv"),
        "--target",
        "bodyfat",
        "--sizes",
        "2,4,8,16",
        "--runs",
        "20",
        "--out",
        s(&out),
    ]);
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    let last: Vec<f64> = rows[3]
        .split(',')
        .take(5)
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(last[0], 16.0);
    assert!(
        last[1] <= last[3],
        "utility {} vs prior {}",
        last[1],
        last[3]
    );
    let summary = json(out.join("sweep.json"));
    assert_eq!(summary["prior_minus_utility"].as_array().unwrap().len(), 4);
    assert!(summary["prior_minus_utility"][3]["significant"].is_boolean());
}

#[test]
fn stability_writes_45_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("stab");
    ok(&[
        "stability",
        "--data",
        &data("bodyfat_like.csv"),
        "--target",
        "bodyfat",
        "--approach",
        "prior",
        "--resamples",
        "10",
        "--size",
        "6",
        "--out",
        s(&out),
    ]);
    let csv = std::fs::read_to_string(out.join("pairs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 46);
    assert_eq!(
        json(out.join("stability.json"))["pairwise_d"]
            .as_array()
            .unwrap()
            .len(),
        45
    );
}

#[test]
fn fidelity_writes_point_and_aggregate_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fid");
    ok(&[
        "fidelity",
        "--data",
        &data("friedman1.csv"),
        "--target",
        "y",
        "--reference",
        "ensemble",
        "--n-trees",
        "20",
        "--samples",
        "200",
        "--test-points",
        "6",
        "--size",
        "4",
        "--out",
        s(&out),
    ]);
    let csv = std::fs::read_to_string(out.join("fidelity.csv")).unwrap();
    for approach in ["utility", "prior"] {
        let rows: Vec<&str> = csv.lines().filter(|l| l.starts_with(approach)).collect();
        assert_eq!(rows.len(), 6 + 2);
        assert!(rows
            .iter()
            .any(|r| r.starts_with(&format!("{approach},mean,"))));
    }
    let summary = json(out.join("fidelity.json"));
    assert_eq!(summary["utility"]["per_point"].as_array().unwrap().len(), 6);
    assert_eq!(
        json(out.join("config.json"))["config"]["neighborhood"]["samples"],
        200
    );
}

#[test]
fn flags_override_config_file_and_config_is_echoed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "seed = 11\n\n[data]\npath = {:?}\ntarget = \"bodyfat\"\n\n[reference]\nkind = \"ensemble\"\nn_trees = 7\n\n[proxy]\nsize = 3\n\n[evaluation]\nresamples = 4\n",
            data("bodyfat_like.csv")
        ),
    )
    .unwrap();
    let out = tmp.path().join("stab");
    ok(&[
        "stability",
        "--config",
        s(&cfg),
        "--resamples",
        "5",
        "--out",
        s(&out),
    ]);
    let echo = json(out.join("config.json"));
    assert_eq!(echo["command"], "stability");
    assert_eq!(echo["config"]["seed"], 11);
    assert_eq!(echo["config"]["reference"]["n_trees"], 7);
    assert_eq!(echo["config"]["evaluation"]["resamples"], 5);
    assert_eq!(echo["config"]["proxy"]["size"], 3);
    assert!(echo["config"].get("output").is_none());
    assert_eq!(
        json(out.join("stability.json"))["pairs"]
            .as_array()
            .unwrap()
            .len(),
        10
    );

    std::fs::write(&cfg, "seed = 1\nunknown_key = 3\n").unwrap();
    let bad = proxyfit(&["stability", "--config", s(&cfg)]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_proxyfit"))
        .args([
            "stability",
            "--data",
            &data("bodyfat_like.csv"),
            "--target",
            "bodyfat",
            "--size",
            "2",
            "--resamples",
            "3",
        ])
        .env("PROXYFIT_OUT", tmp.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(tmp.path().join("stability/pairs.csv").exists());
}

#[test]
fn inputs_are_not_modified() {
    let tmp = tempfile::tempdir().unwrap();
    let (csv, model) = fitted_model(tmp.path());
    let before = (std::fs::read(&csv).unwrap(), std::fs::read(&model).unwrap());
    ok(&[
        "explain",
        "--data",
        s(&csv),
        "--target",
        "y",
        "--model",
        s(&model),
        "--cv",
        "--out",
        s(&tmp.path().join("e")),
    ]);
    assert_eq!(
        before,
        (std::fs::read(&csv).unwrap(), std::fs::read(&model).unwrap())
    );
}

#[test]
fn synth_reproduces_bundled_files() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["synth", "--out-dir", s(tmp.path())]);
    for name in ["bodyfat_like.csv", "friedman1.csv", "smooth_1d.csv"] {
        assert_eq!(
            std::fs::read(tmp.path().join(name)).unwrap(),
            std::fs::read(data(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn classification_reference_reports_accuracy() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&[
        "fit-reference",
        "--data",
        &data("breast_cancer.csv"),
        "--target",
        "diagnosis",
        "--task",
        "classification",
        "--reference",
        "ensemble",
        "--n-trees",
        "15",
        "--out",
        s(tmp.path()),
    ]);
    let acc = json(tmp.path().join("fit_report.json"))["test"]["accuracy"]
        .as_f64()
        .unwrap();
    assert!(acc > 0.85, "{acc}");
    let gp = proxyfit(&[
        "fit-reference",
        "--data",
        &data("breast_cancer.csv"),
        "--target",
        "diagnosis",
        "--task",
        "classification",
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(gp.status.code(), Some(2));
}
