use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_text2sql")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = cli(args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn sets(data: &Path, art: &Path) -> Vec<String> {
    [
        format!("data_dir={}", data.display()),
        format!("artifact_dir={}", art.display()),
        "ner_epochs=8".into(),
        "nel_epochs=5".into(),
        "nsp_epochs=6".into(),
        "mode=column_type_feature".into(),
    ]
    .into_iter()
    .flat_map(|s| ["--set".to_string(), s])
    .collect()
}

#[test]
fn train_predict_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (data, art) = (dir.path().join("data"), dir.path().join("art"));
    let d = data.to_str().unwrap();
    ok(&["gen-toy", "--out", d, "--n-train", "80", "--n-dev", "20", "--n-test", "20"]);
    let s = sets(&data, &art);
    let with = |cmd: &[&str]| -> Vec<String> { cmd.iter().map(|x| x.to_string()).chain(s.iter().cloned()).collect() };
    let run = |cmd: &[&str]| ok(&with(cmd).iter().map(String::as_str).collect::<Vec<_>>());

    let ann = dir.path().join("ann.jsonl");
    run(&["derive-annotations", "--out", ann.to_str().unwrap()]);
    assert_eq!(std::fs::read_to_string(&ann).unwrap().lines().count(), 80);

    run(&["train-ner"]);
    run(&["train-nel"]);
    run(&["train-nsp"]);
    for f in ["ner.json", "nel.json", "nsp.json", "grammar.txt"] {
        assert!(art.join(f).exists(), "{f} missing");
    }

    let report = dir.path().join("eval.json");
    let table = run(&["evaluate", "--report", report.to_str().unwrap()]);
    assert!(table.contains("ACC_LF="));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["n"], 20);
    assert!(v["acc_exe"].as_f64().unwrap() >= v["acc_lf"].as_f64().unwrap());

    let id = v["verdicts"][0]["record_id"].as_str().unwrap().to_string();
    let out = run(&["predict", "--record", &id]);
    assert!(out.starts_with("question"));

    let out = run(&["grid", "--modes", "baseline,oracle_feature", "--no-ablations", "--report", dir.path().join("g.json").to_str().unwrap()]);
    assert_eq!(out.lines().count(), 3);
}

#[test]
fn malformed_records_exit_with_schema_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["gen-toy", "--out", d, "--n-train", "8", "--n-dev", "4", "--n-test", "4"]);
    std::fs::write(dir.path().join("train.jsonl"), "{\"nt\": \"x\"}\n").unwrap();
    let out = cli(&["induce-grammar", "--set", &format!("data_dir={d}")]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    let out = cli(&["evaluate", "--set", "mode=nonsense"]);
    assert_eq!(out.status.code(), Some(1));
}
