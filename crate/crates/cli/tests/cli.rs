use std::path::Path;
use std::process::{Command, Output};

fn mddphen(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mddphen"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&mddphen(&["train", "--model", "svm"], d)), 1);
    assert_eq!(code(&mddphen(&["no-such-command"], d)), 1);
    assert_eq!(code(&mddphen(&["weaklabel", "--corpus", "c.jsonl", "--bogus"], d)), 1);
    assert_eq!(code(&mddphen(&["train", "--model", "tree", "--features", "f", "--embeddings", "e", "--out", "o"], d)), 1);
    let help = mddphen(&["--help"], d);
    assert_eq!(code(&help), 0);
    assert!(String::from_utf8_lossy(&help.stdout).contains("run-all"));
}

#[test]
fn missing_input_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = mddphen(&["weaklabel", "--corpus", "absent.jsonl", "--out", "w.jsonl"], dir.path());
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn invalid_values_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.jsonl"), "{\"doc_id\": 3}\n").unwrap();
    assert_eq!(code(&mddphen(&["weaklabel", "--corpus", "bad.jsonl", "--out", "w.jsonl"], d)), 1);
    let o = mddphen(&["gen-corpus", "--n-sentences", "50", "--hard-fraction", "2", "--out", "c.jsonl"], d);
    assert_eq!(code(&o), 1);
}

#[test]
fn stages_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ok = |args: &[&str]| {
        let o = mddphen(args, d);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        o
    };
    let o = ok(&["gen-corpus", "--n-sentences", "1500", "--mix", "raw", "--seed", "3", "--out", "notes.jsonl"]);
    let printed: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(printed["command"], "gen-corpus");
    assert_eq!(printed["seed"], 3);
    ok(&["gen-corpus", "--n-sentences", "300", "--mix", "train", "--seed", "4", "--doc-prefix", "g", "--out", "g.jsonl", "--gold", "gold.jsonl"]);
    ok(&["weaklabel", "--corpus", "notes.jsonl", "--ruleset", "default", "--out", "weak.jsonl"]);
    ok(&["build-dataset", "--weak", "weak.jsonl", "--seed", "5", "--out-train", "train.jsonl", "--out-valid", "valid.jsonl"]);
    ok(&["train-embeddings", "--input", "weak.jsonl", "--dim", "50", "--epochs", "3", "--out", "emb.model"]);
    for model in ["knn", "svm", "rf"] {
        let file = format!("{model}.model");
        let preds = format!("preds-{model}.jsonl");
        ok(&["train", "--model", model, "--features", "train.jsonl", "--embeddings", "emb.model", "--n-trees", "20", "--out", &file]);
        ok(&["predict", "--model", &file, "--embeddings", "emb.model", "--input", "gold.jsonl", "--out", &preds]);
    }
    let o = ok(&["evaluate", "--gold", "gold.jsonl", "--pred", "knn=preds-knn.jsonl", "--pred", "preds-svm.jsonl", "--pred", "rf=preds-rf.jsonl", "--out", "eval"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("preds-svm"));
    let report = std::fs::read_to_string(d.join("eval/report.txt")).unwrap();
    assert_eq!(report.lines().count(), 5);
    assert!(std::fs::read_to_string(d.join("eval/errors.txt")).unwrap().starts_with("Examples\tknn\tpreds-svm\trf"));
    assert_eq!(std::fs::read_to_string(d.join("eval/report.csv")).unwrap().lines().count(), 4);

    // wrong embedding width for a trained model
    ok(&["train-embeddings", "--input", "weak.jsonl", "--dim", "20", "--epochs", "1", "--out", "narrow.model"]);
    let o = mddphen(&["predict", "--model", "svm.model", "--embeddings", "narrow.model", "--input", "gold.jsonl", "--out", "x.jsonl"], d);
    assert_eq!(code(&o), 1);
}

#[test]
fn evaluator_accepts_scored_predictions_and_rejects_id_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gold = [("a#0", "positive"), ("a#1", "unknown"), ("a#2", "negated")];
    let gold_lines: String = gold
        .iter()
        .map(|(id, l)| format!("{{\"sentence_id\":\"{id}\",\"doc_id\":\"a\",\"text\":\"t {id}\",\"label\":\"{l}\",\"source\":\"gold\"}}\n"))
        .collect();
    std::fs::write(d.join("gold.jsonl"), gold_lines).unwrap();
    std::fs::write(
        d.join("adapter.jsonl"),
        "{\"sentence_id\":\"a#0\",\"predicted_label\":\"positive\",\"scores\":[0.1,0.7,0.1,0.1]}\n\
         {\"sentence_id\":\"a#1\",\"predicted_label\":\"unknown\",\"scores\":[0.97,0.01,0.01,0.01]}\n\
         {\"sentence_id\":\"a#2\",\"predicted_label\":\"possible\",\"scores\":[0.1,0.1,0.5,0.3]}\n",
    )
    .unwrap();
    let o = mddphen(&["evaluate", "--gold", "gold.jsonl", "--pred", "adapter=adapter.jsonl", "--out", "r"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.join("r/report.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "adapter");
    assert_eq!(row.last().unwrap().parse::<f64>().unwrap(), 2.0 / 3.0);

    std::fs::write(d.join("short.jsonl"), "{\"sentence_id\":\"a#0\",\"predicted_label\":\"positive\"}\n").unwrap();
    let o = mddphen(&["evaluate", "--gold", "gold.jsonl", "--pred", "short.jsonl", "--out", "r2"], d);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("a#1"));
}

#[test]
fn cohort_assigns_cases_and_controls() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("patients.jsonl"),
        "{\"patient_id\":\"p1\",\"icd_codes\":[\"296.2\",\" f33.1 \",\"F32.9\"]}\n\
         {\"patient_id\":\"p2\",\"icd_codes\":[\"401.9\"]}\n\
         {\"patient_id\":\"p3\",\"icd_codes\":[\"296.2\"]}\n",
    )
    .unwrap();
    let o = mddphen(&["cohort", "--patients", "patients.jsonl", "--out", "cohort.jsonl"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = std::fs::read_to_string(d.join("cohort.jsonl")).unwrap();
    let cohorts: Vec<String> = out
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["cohort"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(cohorts, ["case", "control", "excluded"]);
}

#[test]
fn run_all_config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("small.toml"),
        "seed = 5\n[corpus]\nn_sentences = 600\n[test]\nn_sentences = 400\nclass_mix = [0.5, 0.445, 0.036, 0.019]\n\
         [embeddings]\ndim = 24\nepochs = 2\n[forest]\nn_trees = 10\n",
    )
    .unwrap();
    let o = mddphen(&["run-all", "--seed", "1", "--out", "out", "--config", "small.toml"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let config: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("out/config.json")).unwrap()).unwrap();
    assert_eq!(config["seed"], 5);
    assert_eq!(config["embeddings"]["dim"], 24);
    assert_eq!(config["knn"]["k"], 7);
    assert!(config["seeds"]["balance"].is_u64());
    for f in ["weak.jsonl", "train.jsonl", "valid.jsonl", "embeddings.model", "knn.model", "svm.model", "rf.model", "preds-knn.jsonl", "preds-svm.jsonl", "preds-rf.jsonl", "report.csv", "report.txt", "errors.txt"] {
        assert!(d.join("out").join(f).is_file(), "{f} missing");
    }
    std::fs::write(d.join("bad.toml"), "[knn]\nneighbours = 3\n").unwrap();
    assert_eq!(code(&mddphen(&["run-all", "--out", "o2", "--config", "bad.toml"], d)), 1);
    assert_eq!(code(&mddphen(&["run-all", "--out", "o3", "--config", "absent.toml"], d)), 2);
}
