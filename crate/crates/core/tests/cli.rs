use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn interlude(runs: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_interlude"))
        .args(args)
        .env("INTERLUDE_RUNS", runs)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const QUICK: [&str; 4] = ["--preset", "desk", "--optim.steps=20", "--data.n_unlabeled=200"];

#[test]
fn validate_config_echoes_into_the_runs_root() {
    let runs = tempfile::tempdir().unwrap();
    let o = interlude(
        runs.path(),
        &["validate-config", "--preset", "desk", "--loss.lambda_dc=0.5"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("lambda_dc = 0.5"), "{text}");
    assert!(text.contains("# config hash "));

    let dirs: Vec<_> = fs::read_dir(runs.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1);
    assert!(dirs[0].join("resolved.toml").is_file() && dirs[0].join("spec.json").is_file());

    let again = interlude(
        runs.path(),
        &["validate-config", "--preset", "desk", "--loss.lambda_dc=0.5"],
    );
    assert_eq!(stdout(&again), text);
}

#[test]
fn config_problems_exit_with_2() {
    let runs = tempfile::tempdir().unwrap();
    for bad in [
        vec!["validate-config", "--fusion.alpha=0.6"],
        vec!["validate-config", "--loss.nope=1"],
        vec!["validate-config", "--preset", "no-such-preset"],
        vec!["validate-config", "/definitely/not/here.toml"],
    ] {
        let o = interlude(runs.path(), &bad);
        assert_eq!(code(&o), 2, "{bad:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn data_problems_exit_with_3() {
    let runs = tempfile::tempdir().unwrap();
    let cfg = runs.path().join("missing.toml");
    fs::write(
        &cfg,
        "[data]\nsource = \"corpus\"\nformat = \"image-folder\"\npath = \"/definitely/not/here\"\ntest_path = \"/definitely/not/there\"\nn_labels = 4\n",
    )
    .unwrap();
    let o = interlude(runs.path(), &["split", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));

    let junk = runs.path().join("junk.ckpt");
    fs::write(&junk, "junk").unwrap();
    let o = interlude(
        runs.path(),
        &["eval", "--preset", "desk", "--checkpoint", junk.to_str().unwrap()],
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn diverging_training_exits_with_4() {
    let runs = tempfile::tempdir().unwrap();
    let mut args = vec!["train"];
    args.extend(QUICK);
    args.push("--optim.lr=1e30");
    let o = interlude(runs.path(), &args);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn split_train_and_eval() {
    let runs = tempfile::tempdir().unwrap();
    let manifest = runs.path().join("split.jsonl");
    let o = interlude(
        runs.path(),
        &["split", "--preset", "desk", "--out", manifest.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0);
    let lines: Vec<serde_json::Value> = fs::read_to_string(&manifest)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.iter().filter(|v| v["role"] == "labeled").count(), 4);
    assert_eq!(lines.iter().filter(|v| v["role"] == "unlabeled").count(), 2000);

    let run_dir = runs.path().join("run");
    let mut args = vec![
        "train",
        "--run-dir",
        run_dir.to_str().unwrap(),
        "--set",
        "checkpoint_every=10",
    ];
    args.extend(QUICK);
    let o = interlude(runs.path(), &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["steps"], 20);
    let ckpt = run_dir.join("checkpoint.ckpt");
    assert!(ckpt.is_file());

    let mut args = vec!["eval", "--checkpoint", ckpt.to_str().unwrap()];
    args.extend(QUICK);
    let o = interlude(runs.path(), &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let eval: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(eval["step"], 20);
    assert_eq!(eval["error_rate"], summary["final_error"]);
}

#[test]
fn sweep_then_plot_and_redraw() {
    let runs = tempfile::tempdir().unwrap();
    let cfg = runs.path().join("sweep.toml");
    fs::write(
        &cfg,
        "name = \"alpha\"\npreset = \"desk\"\nseeds = [0, 1]\neval_every = 10\n\
         [optim]\nsteps = 20\n[data]\nn_unlabeled = 200\nn_test = 200\n\
         [sweep]\n\"fusion.alpha\" = [0.05, 0.2]\n",
    )
    .unwrap();
    let o = interlude(runs.path(), &["sweep", cfg.to_str().unwrap(), "--plot", "sensitivity"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 2);

    let exp = fs::read_dir(runs.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.is_dir())
        .unwrap();
    assert!(exp.file_name().unwrap().to_str().unwrap().starts_with("alpha-"));
    assert_eq!(
        fs::read_to_string(exp.join("records.jsonl")).unwrap().lines().count(),
        2
    );
    let svg = exp.join("plots/sensitivity.svg");
    let first = fs::read(&svg).unwrap();

    let out = runs.path().join("figs");
    let o = interlude(
        runs.path(),
        &[
            "plot",
            "--records",
            exp.to_str().unwrap(),
            "--kind",
            "learning-curve",
            "--out",
            out.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("learning-curve.svg").is_file() && out.join("learning-curve.csv").is_file());

    fs::remove_file(&svg).unwrap();
    let csv = exp.join("plots/sensitivity.csv");
    let o = interlude(runs.path(), &["plot", "--csv", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(&svg).unwrap(), first);

    let o = interlude(runs.path(), &["sweep", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read_to_string(exp.join("records.jsonl")).unwrap().lines().count(),
        2
    );
}

#[test]
fn runs_dir_flag_overrides_the_environment() {
    let env_root = tempfile::tempdir().unwrap();
    let flag_root = tempfile::tempdir().unwrap();
    let o = interlude(
        env_root.path(),
        &[
            "--runs-dir",
            flag_root.path().to_str().unwrap(),
            "validate-config",
            "--preset",
            "desk",
        ],
    );
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_dir(env_root.path()).unwrap().count(), 0);
    assert_eq!(fs::read_dir(flag_root.path()).unwrap().count(), 1);
}
