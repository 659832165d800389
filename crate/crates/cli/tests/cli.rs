use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 3

[synth]
num_labeled = 8
num_test_identities = 10
num_unlabeled_pool = 8
raw_dim = 16
scenes_train = 30
scenes_test = 40

[train]
total_iters = 200
lr_drop_iter = 150

[train.oim]
feature_dim = 8
queue_capacity = 16

[eval]
gallery_sizes = [5, 10]
"#;

fn oimsearch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oimsearch"))
        .args(args)
        .output()
        .unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_train_eval_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("run");
    let common = ["--config", s(&cfg), "--out", s(&out)];

    let gen = json(&oimsearch(&[&["gen"][..], &common].concat()));
    assert_eq!(gen["scenes"], 70);
    assert!(out.join("world.jsonl").exists() && out.join("detections.jsonl").exists());

    let train = json(&oimsearch(
        &[&["train", "--loss", "oim"][..], &common].concat(),
    ));
    assert_eq!(train["config"]["train"]["total_iters"], 200);
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("iteration,lr,loss,train_accuracy"));
    assert_eq!(csv.lines().count(), 201);

    let world = out.join("world.jsonl");
    let eval = json(&oimsearch(
        &[
            &[
                "eval",
                "--world",
                s(&world),
                "--gallery-sizes",
                "5,10,20",
                "--seeds",
                "3",
            ][..],
            &common,
        ]
        .concat(),
    ));
    let rows = eval["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["per_seed"].as_array().unwrap().len(), 3);

    let again = json(&oimsearch(&[&["train"][..], &common].concat()));
    assert_eq!(again["config"], train["config"]);
    assert_eq!(
        std::fs::read_to_string(out.join("metrics.csv")).unwrap(),
        csv
    );

    let sweep = json(&oimsearch(
        &[
            &[
                "sweep",
                "--axis",
                "gallery_size",
                "--values",
                "5,10,39",
                "--seeds",
                "0,1",
            ][..],
            &common,
        ]
        .concat(),
    ));
    assert_eq!(sweep["points"].as_array().unwrap().len(), 6);
    assert!(out.join("sweep_gallery_size.csv").exists());
}

#[test]
fn gradcheck_exit_codes() {
    let ok = oimsearch(&["gradcheck", "--cases", "20"]);
    assert!(json(&ok)["passed"].as_bool().unwrap());
    let bad = oimsearch(&["gradcheck", "--cases", "20", "--corrupt-gradient"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn bad_input_is_reported() {
    let out = oimsearch(&["sweep", "--axis", "colour", "--values", "1"]);
    assert!(!out.status.success());
    let dir = tempfile::tempdir().unwrap();
    let missing = oimsearch(&["eval", "--out", s(dir.path())]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("checkpoint"));
}
