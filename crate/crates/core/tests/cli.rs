use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use typedesc::corpus::{self, Entity, Statement};
use typedesc::synthetic;

fn typedesc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_typedesc")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = typedesc(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn stderr_line(out: &Output) -> String {
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    err
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn prepare_splits_eight_one_one_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("all.jsonl");
    corpus::write_jsonl(&input, &synthetic::generate(10_000, 4)).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["prepare", "--input", s(&input), "--out-dir", s(out), "--seed", "3"]);
    }
    let lines = |p: &Path| fs::read_to_string(p).unwrap().lines().count();
    assert_eq!(lines(&a.join("train.jsonl")), 8_000);
    assert_eq!(lines(&a.join("valid.jsonl")), 1_000);
    assert_eq!(lines(&a.join("test.jsonl")), 1_000);
    for f in ["train.jsonl", "valid.jsonl", "test.jsonl", "value.vocab", "property.vocab", "target.vocab", "template.vocab"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let train = corpus::load_jsonl(&a.join("train.jsonl")).unwrap();
    assert!(train.iter().all(|e| e.template.is_some()));
}

#[test]
fn prepare_drops_short_infoboxes() {
    let dir = tempfile::tempdir().unwrap();
    let stmt = |v: &str| Statement::new("P31", "instance of", v);
    let mut ents: Vec<Entity> = (0..20)
        .map(|i| Entity::new(&format!("Q{i}"), "x", "french singer", (0..5).map(|_| stmt("human")).collect()))
        .collect();
    ents.push(Entity::new("SHORT", "x", "french singer", (0..4).map(|_| stmt("human")).collect()));
    let input = dir.path().join("in.jsonl");
    corpus::write_jsonl(&input, &ents).unwrap();
    let out = dir.path().join("data");
    ok(&["prepare", "--input", s(&input), "--out-dir", s(&out), "--min-statements", "5"]);
    let kept: usize = ["train.jsonl", "valid.jsonl", "test.jsonl"]
        .iter()
        .map(|f| corpus::load_jsonl(&out.join(f)).unwrap().len())
        .sum();
    assert_eq!(kept, 20);
    let all = ["train.jsonl", "valid.jsonl", "test.jsonl"].map(|f| fs::read_to_string(out.join(f)).unwrap()).concat();
    assert!(!all.contains("SHORT"));
}

#[test]
fn annotate_writes_tsv() {
    assert_eq!(ok(&["annotate", "--text", "street in paris , france"]), "street in paris , france\t$hed$ in $mod$ , $mod$\tstreet\n");
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d.txt");
    fs::write(&input, "french singer and painter\n\n2014 film\n").unwrap();
    let out = dir.path().join("d.tsv");
    ok(&["annotate", "--input", s(&input), "--out", s(&out)]);
    assert_eq!(
        fs::read_to_string(&out).unwrap(),
        "french singer and painter\t$mod$ $hed$ and $hed$\tsinger,painter\n2014 film\t$mod$ $hed$\tfilm\n"
    );
}

#[test]
fn errors_are_one_prefixed_line_with_nonzero_exit() {
    let out = typedesc(&["prepare", "--input", "/nonexistent/x.jsonl", "--out-dir", "/tmp/never"]);
    assert!(!out.status.success());
    assert!(stderr_line(&out).starts_with("typedesc: error[corpus]: "));

    let out = typedesc(&["generate", "--bogus"]);
    assert!(!out.status.success());
    assert!(stderr_line(&out).starts_with("typedesc: error[usage]: "));

    let out = typedesc(&["generate", "--checkpoint", "x", "--input", "y", "--out", "z", "--mode", "beam:0"]);
    assert!(stderr_line(&out).starts_with("typedesc: error[usage]: "));

    assert!(ok(&["--help"]).contains("generate"));
}

#[test]
fn evaluate_identical_predictions_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let refs = dir.path().join("refs.jsonl");
    let ents = synthetic::generate(12, 5);
    corpus::write_jsonl(&refs, &ents).unwrap();
    let preds = dir.path().join("preds.jsonl");
    let lines: String = ents
        .iter()
        .map(|e| serde_json::json!({"entity_id": e.entity_id, "hypothesis": e.description}).to_string() + "\n")
        .collect();
    fs::write(&preds, lines).unwrap();
    let report = dir.path().join("report.json");
    let table = ok(&["evaluate", "--predictions", s(&preds), "--references", s(&refs), "--out", s(&report)]);
    assert!(table.contains("100.00"));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    for (k, want) in [("bleu1", 100.0), ("bleu2", 100.0), ("rougeL", 100.0), ("mod_copy", 1.0), ("hed_acc", 1.0)] {
        assert!((v[k].as_f64().unwrap() - want).abs() < 1e-9, "{k} = {}", v[k]);
    }
}

#[test]
fn train_generate_round_trip_on_a_tiny_model() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("all.jsonl");
    corpus::write_jsonl(&input, &synthetic::generate(40, 8)).unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    ok(&["prepare", "--input", s(&input), "--out-dir", s(&data)]);
    let dims = ["hidden=8", "word_dim=8", "prop_dim=4", "pos_dim=4", "max_epochs=2", "batch_size=8"];
    let mut args = vec!["train", "--data-dir", s(&data), "--out-dir", s(&run), "--quiet"];
    for d in &dims {
        args.extend(["--set", d]);
    }
    ok(&args);
    for f in ["model.ckpt", "train_log.csv", "config.txt", "target.vocab"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let log = fs::read_to_string(run.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(fs::read_to_string(run.join("config.txt")).unwrap().contains("hidden = 8"));

    let test = data.join("test.jsonl");
    let ckpt = run.join("model.ckpt");
    let (p1, p2) = (dir.path().join("p1.jsonl"), dir.path().join("p2.jsonl"));
    ok(&["generate", "--checkpoint", s(&ckpt), "--input", s(&test), "--out", s(&p1), "--mode", "beam:2"]);
    ok(&["generate", "--checkpoint", s(&ckpt), "--input", s(&test), "--out", s(&p2), "--mode", "beam:2"]);
    let out = fs::read_to_string(&p1).unwrap();
    assert_eq!(out, fs::read_to_string(&p2).unwrap());
    let n = corpus::load_jsonl(&test).unwrap().len();
    assert_eq!(out.lines().count(), n);
    for line in out.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["entity_id"].is_string() && v["template"].is_string() && v["hypothesis"].is_string());
    }

    let forced = dir.path().join("forced.jsonl");
    ok(&["generate", "--checkpoint", s(&ckpt), "--input", s(&test), "--out", s(&forced), "--template", "$hed$ in $mod$"]);
    for line in fs::read_to_string(&forced).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["template"], "$hed$ in $mod$");
    }

    let mut bytes = fs::read(&ckpt).unwrap();
    bytes[8..12].copy_from_slice(&9u32.to_le_bytes());
    fs::write(&ckpt, bytes).unwrap();
    let out = typedesc(&["generate", "--checkpoint", s(&ckpt), "--input", s(&test), "--out", s(&p1)]);
    let err = stderr_line(&out);
    assert!(err.starts_with("typedesc: error[checkpoint]: ") && err.contains('9'), "{err}");
}
