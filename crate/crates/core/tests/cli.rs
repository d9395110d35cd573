//! End-to-end runs of the `scn` binary on tiny datasets.

use std::path::Path;
use std::process::{Command, Output};

fn scn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scn"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn scn")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn generate_train_evaluate_explain_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    let gen = ok(&scn(
        dir,
        &[
            "--dataset",
            "stars",
            "--out",
            "data",
            "generate",
            "--count",
            "40",
            "--data-seed",
            "3",
        ],
    ));
    assert!(gen.contains("wrote 40 graphs"), "{gen}");
    assert!(dir.join("data/stars.jsonl").is_file());
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("data/stars.jsonl.stats.json")).unwrap()).unwrap();
    assert!(stats.is_object());

    let train = |out: &str| {
        ok(&scn(
            dir,
            &[
                "--dataset",
                "stars",
                "--out",
                out,
                "--seed-list",
                "1,2",
                "train",
                "--data",
                "data/stars.jsonl",
                "--epochs",
                "2",
                "--log-every",
                "0",
            ],
        ))
    };
    train("runs");
    for seed in [1, 2] {
        let run = dir.join(format!("runs/stars_scn/seed_{seed}"));
        for f in ["checkpoint.json", "manifest.json", "losses.csv"] {
            assert!(run.join(f).is_file(), "missing {f} in {}", run.display());
        }
    }
    // identical settings reproduce identical checkpoints
    train("again");
    let a = std::fs::read(dir.join("runs/stars_scn/seed_1/checkpoint.json")).unwrap();
    let b = std::fs::read(dir.join("again/stars_scn/seed_1/checkpoint.json")).unwrap();
    assert_eq!(a, b);

    let eval = ok(&scn(dir, &["--out", "runs", "evaluate"]));
    assert!(eval.contains("Test accuracy"), "{eval}");
    assert!(dir.join("runs/metrics.csv").is_file());
    assert!(dir.join("runs/stars_scn/seed_1/metrics.json").is_file());

    let report = ok(&scn(dir, &["report", "runs"]));
    assert!(report.contains("| stars |"), "{report}");

    ok(&scn(dir, &["--out", "explained", "explain", "runs/stars_scn/seed_1"]));
    assert!(dir.join("explained/explanations.json").is_file());
    let dots = std::fs::read_dir(dir.join("explained"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "dot"))
        .count();
    assert!(dots > 0);
}

#[test]
fn failures_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad_dataset = scn(tmp.path(), &["--dataset", "nope", "train"]);
    assert_eq!(bad_dataset.status.code(), Some(2));
    let missing = scn(tmp.path(), &["--dataset", "stars", "train", "--data", "missing.jsonl"]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("missing.jsonl"));
}
