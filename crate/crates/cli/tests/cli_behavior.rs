//! Black-box tests of the binary: exit codes, determinism, config handling.

use mppf::models::{ModelId, ModelSpec, ThetaVector};
use mppf::obsgen::{write_dataset, Event, MarkedDataset};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mppf"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn mppf")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn path_str(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

/// Generates a small shared dataset once per temp dir.
fn make_dataset(dir: &Path) -> PathBuf {
    let data = dir.join("d.csv");
    let out = run(&[
        "generate",
        "--model",
        "OU",
        "--T",
        "6",
        "--data-level",
        "7",
        "--seed",
        "3",
        "--out",
        &path_str(&data),
    ]);
    assert_ok(&out);
    data
}

#[test]
fn identical_invocations_reproduce_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let data = make_dataset(dir.path());
    let mut bytes = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let out_path = dir.path().join(name);
        let out = run(&[
            "pf",
            "--data",
            &path_str(&data),
            "--level",
            "3",
            "--particles",
            "200",
            "--seed",
            "42",
            "--out",
            &path_str(&out_path),
        ]);
        assert_ok(&out);
        bytes.push(std::fs::read(&out_path).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn missing_required_setting_exits_2() {
    let out = run(&["pf", "--level", "3"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--data"), "stderr: {err}");
}

#[test]
fn unknown_subcommand_exits_2() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flag_exits_2() {
    let out = run(&["pf", "--no-such-flag", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_bench_kind_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = make_dataset(dir.path());
    let out = run(&[
        "bench",
        "--data",
        &path_str(&data),
        "--kind",
        "nonsense",
        "--out",
        &path_str(&dir.path().join("x.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn degenerate_weights_exit_3() {
    // Zero diffusion from the origin keeps every particle at zero intensity,
    // so an observed event is impossible under the model and all weights
    // vanish together.
    let dir = tempfile::tempdir().unwrap();
    let spec = ModelSpec::new(
        ModelId::Ou,
        0.0,
        ThetaVector::new(Some(0.5), 3.5, 1.0).with_fixed("sigma", 0.0),
    );
    let dataset = MarkedDataset {
        spec,
        horizon: 2,
        data_level: 5,
        seed: 0,
        events: vec![Event { time: 1.5, mark: 0.3 }],
    };
    let data = dir.path().join("impossible.csv");
    write_dataset(&dataset, &data).unwrap();

    let out = run(&[
        "pf",
        "--data",
        &path_str(&data),
        "--level",
        "2",
        "--particles",
        "50",
        "--seed",
        "1",
        "--out",
        &path_str(&dir.path().join("est.csv")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("degenerate"), "stderr: {err}");
}

#[test]
fn flags_override_config_file_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let data = make_dataset(dir.path());
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "level=2\nparticles=150\nseed=77\n").unwrap();
    let est = dir.path().join("est.csv");
    let out = run(&[
        "pf",
        "--data",
        &path_str(&data),
        "--config",
        &path_str(&cfg),
        "--level",
        "3",
        "--out",
        &path_str(&est),
    ]);
    assert_ok(&out);
    let text = std::fs::read_to_string(&est).unwrap();
    assert!(text.contains("# level=3"), "flag should win over the file");
    assert!(text.contains("# particles=150"), "file should win over the default");
    assert!(text.contains("# seed=77"));
}

#[test]
fn theta_overrides_change_the_evaluation_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = make_dataset(dir.path());
    let base = dir.path().join("base.csv");
    let moved = dir.path().join("moved.csv");
    for (path, extra) in [(&base, None), (&moved, Some(("--theta-lambda", "1.2")))] {
        let mut args = vec![
            "pf".to_string(),
            "--data".into(),
            path_str(&data),
            "--level".into(),
            "3".into(),
            "--particles".into(),
            "200".into(),
            "--seed".into(),
            "5".into(),
            "--out".into(),
            path_str(path),
        ];
        if let Some((k, v)) = extra {
            args.push(k.into());
            args.push(v.into());
        }
        let out = bin().args(&args).output().unwrap();
        assert_ok(&out);
    }
    let a = std::fs::read_to_string(&base).unwrap();
    let b = std::fs::read_to_string(&moved).unwrap();
    assert!(b.contains("# theta-lambda=1.2"));
    assert_ne!(a, b, "different parameters must change the estimates");
}

#[test]
fn quadrature_switch_reaches_the_weights() {
    let dir = tempfile::tempdir().unwrap();
    let data = make_dataset(dir.path());
    let mut estimates = Vec::new();
    for rule in ["right", "left"] {
        let est = dir.path().join(format!("{rule}.csv"));
        let out = run(&[
            "pf",
            "--data",
            &path_str(&data),
            "--level",
            "3",
            "--particles",
            "300",
            "--seed",
            "8",
            "--quadrature",
            rule,
            "--out",
            &path_str(&est),
        ]);
        assert_ok(&out);
        estimates.push(std::fs::read_to_string(&est).unwrap());
    }
    assert_ne!(estimates[0], estimates[1]);
}

#[test]
fn horizon_beyond_dataset_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = make_dataset(dir.path());
    let out = run(&[
        "pf",
        "--data",
        &path_str(&data),
        "--T",
        "99",
        "--out",
        &path_str(&dir.path().join("x.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn every_estimator_writes_its_contract_columns() {
    let dir = tempfile::tempdir().unwrap();
    let data = make_dataset(dir.path());
    let d = path_str(&data);
    let cases: Vec<(Vec<&str>, &str)> = vec![
        (vec!["pf", "--level", "2", "--particles", "60"], "t,estimate,cost_steps"),
        (vec!["cpf", "--level", "2", "--particles", "60"], "t,estimate,cost_steps"),
        (vec!["mlpf", "--eps", "0.25"], "t,estimate,cost_steps"),
        (
            vec!["upf", "--M", "40", "--l-trunc", "3", "--p-trunc", "3", "--T", "2"],
            "t,estimate,cost_steps",
        ),
        (
            vec!["score", "--level", "2", "--particles", "60", "--T", "3"],
            "t,estimate,coordinate,cost_steps",
        ),
        (
            vec![
                "sga", "--level", "2", "--particles", "60", "--window", "2", "--iters", "3",
            ],
            "m,theta_b,theta_lambda,theta_sigma,score_theta_b,score_theta_lambda,score_theta_sigma,alpha",
        ),
        (
            vec![
                "bench",
                "--kind",
                "coupling-variance",
                "--levels",
                "1,2,3,4",
                "--particles",
                "80",
                "--reps",
                "5",
                "--T",
                "3",
            ],
            "level,value,stderr,resolved",
        ),
    ];
    for (args, header) in cases {
        let out_path = dir.path().join(format!("{}.out.csv", args[0]));
        let mut full: Vec<&str> = args.clone();
        let out_s = path_str(&out_path);
        full.extend_from_slice(&["--data", &d, "--seed", "4", "--out", &out_s]);
        let out = bin().args(&full).output().unwrap();
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let text = std::fs::read_to_string(&out_path).unwrap();
        let first_data_line = text
            .lines()
            .find(|l| !l.starts_with('#'))
            .unwrap_or_default();
        assert_eq!(first_data_line, header, "wrong columns for {args:?}");
        assert!(text.lines().any(|l| l.starts_with("# command=")));
    }
}
