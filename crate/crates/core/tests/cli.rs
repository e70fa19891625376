mod common;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qms::trainer::init_model;
use qms::QmsModel;
use tempfile::TempDir;

fn qms(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qms")).args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Blob fixture as CSV with string class labels in the last column.
fn blob_csv(dir: &Path, name: &str, per_class: usize, seed: u64) -> PathBuf {
    let data = common::blobs(per_class, seed);
    let mut text = String::from("x,y,species\n");
    for (col, &label) in data.x().columns().zip(data.y()) {
        let _ = writeln!(text, "{},{},{}", col[0], col[1], ["alpha", "beta", "gamma"][label]);
    }
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const QUICK: [&str; 10] = ["--q", "2", "--epochs", "40", "--batch-size", "32", "--lr", "0.05", "--seed", "3"];

fn train_blobs(dir: &TempDir) -> (PathBuf, PathBuf) {
    let data = blob_csv(dir.path(), "blobs.csv", 30, 1);
    let model = dir.path().join("model.json");
    let mut args = vec!["train", "--data", p(&data), "--label-col", "species", "--out", p(&model), "--quiet"];
    args.extend(QUICK);
    let out = qms(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    (data, model)
}

#[test]
fn train_writes_model_history_and_schema() {
    let dir = TempDir::new().unwrap();
    let (_, model) = train_blobs(&dir);
    let loaded = QmsModel::load(&model).unwrap();
    assert_eq!((loaded.q(), loaded.p(), loaded.m()), (2, 2, 3));
    assert_eq!(loaded.class_names(), ["alpha", "beta", "gamma"]);
    let history = std::fs::read_to_string(dir.path().join("model.json.history.csv")).unwrap();
    let lines: Vec<&str> = history.lines().collect();
    assert_eq!(lines[0], "epoch,loss,train_acc,val_acc,secs");
    assert_eq!(lines.len(), 41);
    assert!(lines[1].starts_with("1,"));
    assert!(dir.path().join("model.json.schema.json").exists());
}

#[test]
fn progress_lines_on_stderr() {
    let dir = TempDir::new().unwrap();
    let data = blob_csv(dir.path(), "blobs.csv", 10, 1);
    let model = dir.path().join("m.json");
    let out = qms(&[
        "train", "--data", p(&data), "--label-col", "species", "--out", p(&model), "--epochs", "2", "--val-fraction", "0.2",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let err = stderr(&out);
    let lines: Vec<&str> = err.lines().filter(|l| l.starts_with("epoch=")).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("epoch=2 loss="));
    assert!(lines[1].contains(" train_acc=") && lines[1].contains(" val_acc=") && lines[1].contains(" secs="));
}

#[test]
fn predict_on_training_file_is_perfect() {
    let dir = TempDir::new().unwrap();
    let (data, model) = train_blobs(&dir);
    let preds = dir.path().join("preds.csv");
    let out = qms(&["predict", "--model", p(&model), "--data", p(&data), "--label-col", "species", "--out", p(&preds)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let truth: Vec<String> = std::fs::read_to_string(&data)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().to_string())
        .collect();
    let text = std::fs::read_to_string(&preds).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("row_index,predicted_label"));
    let predicted: Vec<String> = lines.map(|l| l.split(',').nth(1).unwrap().to_string()).collect();
    assert_eq!(predicted, truth);

    let out = qms(&["evaluate", "--model", p(&model), "--data", p(&data), "--label-col", "species"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "accuracy=1");
}

#[test]
fn emit_members_adds_one_column_per_class() {
    let dir = TempDir::new().unwrap();
    let (data, model) = train_blobs(&dir);
    let preds = dir.path().join("preds.csv");
    let out = qms(&[
        "predict", "--model", p(&model), "--data", p(&data), "--label-col", "species", "--out", p(&preds), "--emit-members",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&preds).unwrap();
    assert!(text.starts_with("row_index,predicted_label,f_0,f_1,f_2\n"));
    for line in text.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 5);
        let f: Vec<f64> = cells[2..].iter().map(|c| c.parse().unwrap()).collect();
        assert!(f.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn dimension_mismatch_exits_2_with_both_sizes() {
    let dir = TempDir::new().unwrap();
    let model_path = dir.path().join("wide.json");
    init_model(3, 16, 2, 1).unwrap().save(&model_path).unwrap();
    let header: Vec<String> = (0..15).map(|i| format!("f{i}")).collect();
    let row: Vec<&str> = vec!["0.5"; 15];
    let data = dir.path().join("narrow.csv");
    std::fs::write(&data, format!("{}\n{}\n", header.join(","), row.join(","))).unwrap();
    let out = qms(&["predict", "--model", p(&model_path), "--data", p(&data), "--out", p(&dir.path().join("o.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("16") && err.contains("15"), "{err}");
    assert_eq!(err.lines().count(), 1, "{err}");
}

#[test]
fn usage_and_config_errors_exit_1() {
    let dir = TempDir::new().unwrap();
    let data = blob_csv(dir.path(), "blobs.csv", 5, 1);
    let missing_out = qms(&["train", "--data", p(&data), "--label-col", "species"]);
    assert_eq!(missing_out.status.code(), Some(1));
    assert!(stderr(&missing_out).contains("--out"));

    let out_path = dir.path().join("m.json");
    let bad_alpha = qms(&["train", "--data", p(&data), "--label-col", "species", "--out", p(&out_path), "--alpha", "1.0"]);
    assert_eq!(bad_alpha.status.code(), Some(1));
    assert!(stderr(&bad_alpha).contains("alpha"));
    assert!(!out_path.exists());

    assert_eq!(qms(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(qms(&[]).status.code(), Some(1));
    let grid = qms(&["sweep", "--data", p(&data), "--label-col", "species", "--param", "q", "--grid", "0,2"]);
    assert_eq!(grid.status.code(), Some(1));
    let param = qms(&["sweep", "--data", p(&data), "--label-col", "species", "--param", "beta", "--grid", "1"]);
    assert_eq!(param.status.code(), Some(1));
}

#[test]
fn data_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("m.json");
    let absent = qms(&["train", "--data", "/nonexistent/x.csv", "--label-col", "y", "--out", p(&out)]);
    assert_eq!(absent.status.code(), Some(2));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,b,y\n1,2,u\n3,oops,v\n4,5,u\n").unwrap();
    let res = qms(&["train", "--data", p(&bad), "--label-col", "y", "--out", p(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains('3'), "{}", stderr(&res));

    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "{\"version\": 3}").unwrap();
    assert_eq!(qms(&["inspect", "--model", p(&garbage)]).status.code(), Some(2));
}

#[test]
fn non_finite_training_exits_3() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("huge.csv");
    std::fs::write(&data, "a,y\n1e300,u\n-1e300,v\n2e300,u\n-2e300,v\n").unwrap();
    let out = qms(&[
        "train", "--data", p(&data), "--label-col", "y", "--out", p(&dir.path().join("m.json")), "--no-standardize", "--q", "1",
        "--epochs", "1", "--quiet",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn inspect_reports_parameter_count() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("bean.json");
    init_model(15, 16, 7, 42).unwrap().save(&model).unwrap();
    let out = qms(&["inspect", "--model", p(&model)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().next(), Some("q=15 p=16 m=7 params=1785"));
    assert_eq!(text.lines().filter(|l| l.starts_with("  ")).count(), 7);
}

#[test]
fn cv_on_blobs_is_perfect() {
    let dir = TempDir::new().unwrap();
    let data = blob_csv(dir.path(), "blobs.csv", 30, 2);
    let report = dir.path().join("cv.csv");
    let args = [
        "cv", "--data", p(&data), "--label-col", "species", "--k", "10", "--out", p(&report), "--q", "2", "--epochs", "100",
        "--batch-size", "32", "--lr", "0.1",
    ];
    let out = qms(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&report).unwrap();
    assert_eq!(text.lines().next(), Some("fold,accuracy"));
    assert_eq!(text.lines().count(), 11);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",1")), "{text}");
    assert!(stdout(&out).contains("mean 100.00%"));
}

#[test]
fn sweep_writes_per_fold_and_summary_rows() {
    let dir = TempDir::new().unwrap();
    let data = blob_csv(dir.path(), "blobs.csv", 10, 3);
    let report = dir.path().join("sweep.csv");
    let mut args = vec![
        "sweep", "--data", p(&data), "--label-col", "species", "--k", "3", "--param", "alpha", "--grid", "0.1,0.3,0.5", "--out",
        p(&report),
    ];
    args.extend(QUICK);
    let out = qms(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let folds = std::fs::read_to_string(&report).unwrap();
    assert_eq!(folds.lines().next(), Some("param_value,fold,accuracy"));
    assert_eq!(folds.lines().count(), 1 + 3 * 3);
    let summary = std::fs::read_to_string(dir.path().join("sweep.csv.summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows[0], "param_value,mean,std");
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("0.1,") && rows[2].starts_with("0.3,") && rows[3].starts_with("0.5,"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let data = blob_csv(dir.path(), "blobs.csv", 10, 4);
    let run = |tag: &str| -> Vec<Vec<u8>> {
        let model = dir.path().join(format!("m{tag}.json"));
        let preds = dir.path().join(format!("p{tag}.csv"));
        let cv = dir.path().join(format!("cv{tag}.csv"));
        let sw = dir.path().join(format!("sw{tag}.csv"));
        let mut common = vec!["--data", p(&data), "--label-col", "species"];
        common.extend(QUICK);
        let mut a = vec!["train", "--out", p(&model), "--quiet"];
        a.extend(&common);
        assert!(qms(&a).status.success());
        let b = ["predict", "--model", p(&model), "--data", p(&data), "--label-col", "species", "--out", p(&preds), "--emit-members"];
        assert!(qms(&b).status.success());
        let mut c = vec!["cv", "--k", "3", "--out", p(&cv)];
        c.extend(&common);
        assert!(qms(&c).status.success());
        let mut d = vec!["sweep", "--k", "3", "--param", "q", "--grid", "1,2", "--out", p(&sw)];
        d.extend(&common);
        assert!(qms(&d).status.success());
        let summary = dir.path().join(format!("sw{tag}.csv.summary.csv"));
        [&model, &preds, &cv, &sw, &summary].iter().map(|f| std::fs::read(f).unwrap()).collect()
    };
    assert_eq!(run("1"), run("2"));
}

#[test]
fn config_file_layers_under_flags() {
    let dir = TempDir::new().unwrap();
    let data = blob_csv(dir.path(), "blobs.csv", 10, 5);
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "q = 4\nepochs = 3\nalpha = 0.25\nstandardize = false\nquiet = true\n").unwrap();
    let model = dir.path().join("m.json");
    let out = qms(&[
        "train", "--config", p(&config), "--data", p(&data), "--label-col", "species", "--out", p(&model), "--q", "2",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(!stderr(&out).contains("epoch="));
    let m = QmsModel::load(&model).unwrap();
    assert_eq!(m.q(), 2);
    assert_eq!(m.alpha().get(0, 1), 0.25);
    assert!(m.scaler().is_none());
    let history = std::fs::read_to_string(dir.path().join("m.json.history.csv")).unwrap();
    assert_eq!(history.lines().count(), 4);

    std::fs::write(&config, "bogus_key = 1\n").unwrap();
    let out = qms(&["train", "--config", p(&config), "--data", p(&data), "--label-col", "species", "--out", p(&model)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_lists_defaults() {
    for sub in ["train", "cv", "sweep"] {
        let out = qms(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0));
        let text = stdout(&out);
        for needle in [
            "--lr <LR>",
            "[default: 1.0]",
            "[default: 0.9]",
            "[default: 0.999]",
            "[default: 1e-8]",
            "[default: 42]",
            "[default: 15]",
            "[default: 0.4]",
        ] {
            assert!(text.contains(needle), "`{sub} --help` lacks {needle}");
        }
    }
    for sub in ["predict", "evaluate", "inspect"] {
        assert_eq!(qms(&[sub, "--help"]).status.code(), Some(0));
    }
}

#[test]
fn categorical_columns_round_trip_through_schema() {
    let dir = TempDir::new().unwrap();
    let mut text = String::from("size,color,kind\n");
    for i in 0..60 {
        let (color, kind) = if i % 2 == 0 { ("red", "apple") } else { ("green", "pear") };
        let _ = writeln!(text, "{},{color},{kind}", (i % 7) as f64);
    }
    let data = dir.path().join("fruit.csv");
    std::fs::write(&data, text).unwrap();
    let model = dir.path().join("fruit.json");
    let mut args = vec!["train", "--data", p(&data), "--label-col", "kind", "--categorical", "color", "--out", p(&model), "--quiet"];
    args.extend(QUICK);
    let out = qms(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(QmsModel::load(&model).unwrap().p(), 3);
    let out = qms(&["evaluate", "--model", p(&model), "--data", p(&data), "--label-col", "kind"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "accuracy=1");
}
