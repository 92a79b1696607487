use std::path::Path;
use std::process::{Command, Output};

fn eae(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eae")).args(args).current_dir(dir).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const SMALL: &[&str] = &[
    "--set", "model.d_model=16", "--set", "model.n_heads=2", "--set", "model.d_ff=32",
    "--set", "amr_encoder.dim=16", "--set", "amr_encoder.heads=2", "--set", "l=4",
];

#[test]
fn synthetic_workflow_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(eae(dir, &["gen-synthetic", "--out", "syn", "--n", "16", "--dev", "6", "--seed", "3"]));
    for f in ["train.jsonl", "dev.jsonl", "ontology.json", "amr_table.json", "config.toml"] {
        assert!(dir.join("syn").join(f).exists(), "{f}");
    }

    let parsed = ok(eae(dir, &["parse-amr", "--config", "syn/config.toml"]));
    assert!(parsed.contains("parsed 16 new passages"), "{parsed}");
    assert!(dir.join("syn/amr_cache").read_dir().unwrap().count() >= 16);

    let mut args = vec!["train", "--config", "syn/config.toml", "--epochs", "2"];
    args.extend_from_slice(SMALL);
    let log = ok(eae(dir, &args));
    assert_eq!(log.lines().filter(|l| l.starts_with("epoch")).count(), 2, "{log}");
    assert!(dir.join("syn/checkpoint.json").exists());

    let report = ok(eae(dir, &["eval", "--checkpoint", "syn/checkpoint.json", "--data", "syn/dev.jsonl", "--predictions", "preds.jsonl"]));
    let report: serde_json::Value = serde_json::from_str(&report).unwrap();
    let f1 = report["arg_c"]["f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1));
    assert_eq!(std::fs::read_to_string(dir.join("preds.jsonl")).unwrap().lines().count(), 6);

    let amr = "(a / appeal-01 :ARG0 (d / district) :ARG2 (c / court))";
    let out = ok(eae(
        dir,
        &[
            "predict", "--checkpoint", "syn/checkpoint.json", "--passage", "the district will appeal to the court .",
            "--trigger", "appeal", "--event-type", "Justice:Appeal", "--amr", amr,
        ],
    ));
    let pred: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(pred["assignment"]["roles"].as_object().unwrap().contains_key("Plaintiff"));
}

#[test]
fn ablation_writes_one_table() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(eae(dir, &["gen-synthetic", "--out", "syn", "--n", "8", "--dev", "4"]));
    let mut args = vec![
        "ablate", "--config", "syn/config.toml", "--epochs", "1", "--amr-modes", "prefix,none", "--copy-modes", "adjusted,off",
        "--seeds", "1,2", "--table", "table.md",
    ];
    args.extend_from_slice(SMALL);
    let out = ok(eae(dir, &args));
    let table = std::fs::read_to_string(dir.join("table.md")).unwrap();
    assert_eq!(out, table);
    assert_eq!(table.lines().count(), 2 + 2 * 2 * 2);
    assert!(table.lines().skip(2).all(|l| l.contains("| 2 |") && l.contains('±')), "{table}");
}

#[test]
fn bad_input_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = eae(dir, &["train", "--set", "nope.x=1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
    let out = eae(dir, &["train"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("paths.train"), "{}", String::from_utf8_lossy(&out.stderr));
    let out = eae(dir, &["train", "--copy-mode", "sometimes"]);
    assert!(!out.status.success());
}
