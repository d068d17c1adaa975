use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use faml::trainer::{read_report, HISTORY_FILE, MANIFEST_FILE, REPORT_FILE};

fn faml(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_faml"))
        .args(args)
        .env("FAML_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

const QUICK: [&str; 12] = [
    "--set",
    "epochs=6",
    "--set",
    "warmup_epochs=2",
    "--set",
    "refresh_interval=2",
    "--set",
    "hidden_dims=[8]",
    "--synth-samples-per-class",
    "40",
    "--set",
    "eval_every=3",
];

#[test]
fn synth_twice_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let o = faml(
            &["synth", "--k", "3", "--views", "2", "--seed", "1", "--out", out.to_str().unwrap()],
            tmp.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let files = dir_bytes(&a);
    assert_eq!(files.len(), 3);
    assert_eq!(files, dir_bytes(&b));
}

#[test]
fn synth_defaults_to_output_root() {
    let tmp = tempfile::tempdir().unwrap();
    let o = faml(&["synth", "--samples-per-class", "5"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("synth").join("labels.csv").is_file());
}

#[test]
fn missing_view_file_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let o = faml(
        &["synth", "--views", "3", "--samples-per-class", "5", "--out", data.to_str().unwrap()],
        tmp.path(),
    );
    assert!(o.status.success());
    fs::remove_file(data.join("view_1.csv")).unwrap();
    let o = faml(&["train", "--data", data.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("view_1.csv"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
}

#[test]
fn config_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "epochs = 3\nlearning_rat = 0.1\n").unwrap();
    let o = faml(&["train", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rat"));

    let o = faml(&["train", "--set", "gamma=-1"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = faml(&["train", "--bogus-flag"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = faml(&["train", "--config", "/nonexistent/faml.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn train_then_manifest_rerun_matches() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let mut args = vec!["train", "--out", first.to_str().unwrap()];
    args.extend(QUICK);
    let o = faml(&args, tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));

    let manifest = fs::read_to_string(first.join(MANIFEST_FILE)).unwrap();
    assert!(manifest.contains("\"reconstructed\": true"));
    assert!(manifest.contains("epochs=6"));

    let second = tmp.path().join("second");
    let o = faml(
        &[
            "train",
            "--manifest",
            first.join(MANIFEST_FILE).to_str().unwrap(),
            "--out",
            second.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [HISTORY_FILE, REPORT_FILE, "predictions.csv", "view_0.ckpt", "view_1.ckpt"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
    let history = fs::read_to_string(first.join(HISTORY_FILE)).unwrap();
    assert_eq!(history.lines().count(), 7);

    // Evaluating the stored checkpoints reproduces the training-time report.
    let eval = tmp.path().join("eval");
    let o = faml(
        &["eval", "--run", first.to_str().unwrap(), "--out", eval.to_str().unwrap()],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_report(&eval).unwrap(), read_report(&first).unwrap());
}

#[test]
fn report_is_a_pure_function_of_the_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let mut args = vec!["train", "--out", run.to_str().unwrap()];
    args.extend(QUICK);
    assert!(faml(&args, tmp.path()).status.success());
    // Checkpoints are not needed to regenerate the plot data.
    fs::remove_file(run.join("view_0.ckpt")).unwrap();
    let before = dir_bytes(&run);
    let a = tmp.path().join("report_a");
    let b = tmp.path().join("report_b");
    for out in [&a, &b] {
        let o = faml(&["report", "--run", run.to_str().unwrap(), "--out", out.to_str().unwrap()], tmp.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    assert_eq!(
        fs::read(a.join("evidence_strength.csv")).unwrap(),
        fs::read(run.join("evidence_strength.csv")).unwrap()
    );
    assert_eq!(dir_bytes(&run), before);
}

#[test]
fn sweep_gamma_writes_one_row_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let mut args = vec![
        "sweep-gamma",
        "--values",
        "0.1,0.5,1,5,10",
        "--seeds",
        "2",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "save_trajectory=false",
    ];
    args.extend(QUICK);
    let o = faml(&args, tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("gamma_sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    for (row, gamma) in rows.iter().zip(["0.1", "0.5", "1.0", "5.0", "10.0"]) {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells[0], gamma);
        assert_eq!(cells[1], "2");
        assert_eq!(cells.last().unwrap().split(';').count(), 2);
    }
    assert!(out.join("gamma_5").join("seed_1").join(REPORT_FILE).is_file());
}

#[test]
fn ablate_writes_five_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ablate");
    let mut args = vec!["ablate", "--seeds", "1", "--out", out.to_str().unwrap()];
    args.extend(QUICK);
    let o = faml(&args, tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("ablation.csv")).unwrap();
    let names: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        names,
        ["baseline", "prior", "prior+fairness", "prior+consistency", "full"]
    );
}
