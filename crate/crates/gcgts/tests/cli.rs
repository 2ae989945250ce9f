//! End-to-end tests of the `gcgts` binary: every subcommand, its output
//! formats, and its failure modes (nonzero exit on any validation problem).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde::Deserialize;
use serde_json::{json, Value};
use tempfile::TempDir;

use gcgts::corpus::{read_corpus, write_corpus};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gcgts")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "expected success, got {:?}\nstderr: {}", out.status, stderr(out));
}

fn assert_fails(out: &Output) -> String {
    assert!(!out.status.success(), "expected a nonzero exit\nstdout: {}", stdout(out));
    stderr(out)
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Writes a small-run config: tiny dimensions, full model, `epochs` epochs.
fn write_config(dir: &Path, corpus: &Path, epochs: usize, dev: bool) -> PathBuf {
    let mut cfg = json!({
        "model": {
            "d_h": 8, "d_r": 4, "d_p": 4, "d_beta": 4, "d_g": 8,
            "l_layers": 1, "t_rounds": 1, "batch_size": 4, "lr": 0.01
        },
        "preset": "gcgts",
        "train": path_str(corpus),
        "epochs": epochs,
        "seed": 5,
        "eval_every": 2,
        "checkpoint_dir": path_str(&dir.join("ckpt"))
    });
    if dev {
        cfg["dev"] = Value::String(path_str(corpus).into());
    }
    let path = dir.join("run.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

/// Generates a corpus and trains one epoch on it; returns (checkpoint, corpus).
fn trained_checkpoint(dir: &Path) -> (PathBuf, PathBuf) {
    let corpus = dir.join("train.jsonl");
    assert_ok(&run(&["generate", "--seed", "11", "--count", "12", "--out", path_str(&corpus)]));
    let config = write_config(dir, &corpus, 1, false);
    assert_ok(&run(&["train", "--config", path_str(&config)]));
    (dir.join("ckpt/model.gcgts"), corpus)
}

// ── generate ─────────────────────────────────────────────────────────────

#[test]
fn generate_writes_a_valid_reingestable_corpus() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("c.jsonl");
    assert_ok(&run(&["generate", "--seed", "3", "--count", "40", "--out", path_str(&out)]));
    let sentences = read_corpus(&out).expect("generated corpus validates");
    assert_eq!(sentences.len(), 40);
    // parse ∘ serialize is the identity on the file.
    let copy = dir.path().join("copy.jsonl");
    write_corpus(&copy, &sentences).unwrap();
    assert_eq!(fs::read(&out).unwrap(), fs::read(&copy).unwrap());
}

#[test]
fn generate_count_zero_writes_an_empty_file() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("empty.jsonl");
    assert_ok(&run(&["generate", "--count", "0", "--out", path_str(&out)]));
    assert_eq!(fs::read(&out).unwrap(), b"");
    assert!(read_corpus(&out).unwrap().is_empty());
}

#[test]
fn generate_rejects_an_unknown_profile() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("c.jsonl");
    let err = assert_fails(&run(&[
        "generate", "--profile", "huge", "--out", path_str(&out),
    ]));
    assert!(err.contains("profile"), "stderr: {err}");
}

// ── train ────────────────────────────────────────────────────────────────

#[test]
fn train_logs_one_json_line_per_epoch_and_saves_a_checkpoint() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("c.jsonl");
    assert_ok(&run(&["generate", "--seed", "11", "--count", "12", "--out", path_str(&corpus)]));
    let config = write_config(dir.path(), &corpus, 3, true);
    let out = run(&["train", "--config", path_str(&config)]);
    assert_ok(&out);

    let lines: Vec<Value> = stdout(&out)
        .lines()
        .map(|l| serde_json::from_str(l).expect("log line is JSON"))
        .collect();
    assert_eq!(lines.len(), 3);
    for (i, line) in lines.iter().enumerate() {
        assert_eq!(line["epoch"], json!(i + 1));
        assert!(line["loss"].as_f64().unwrap().is_finite());
        // eval_every = 2 and the final epoch always evaluates.
        assert_eq!(line.get("dev").is_some(), i + 1 == 2 || i + 1 == 3, "epoch {}", i + 1);
    }
    let model = gcgts::io::load(&dir.path().join("ckpt/model.gcgts")).expect("checkpoint loads");
    assert!(model.config.use_lagcn && model.config.use_ic);
}

#[test]
fn train_is_deterministic_across_runs() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("c.jsonl");
    assert_ok(&run(&["generate", "--seed", "11", "--count", "12", "--out", path_str(&corpus)]));
    let config = write_config(dir.path(), &corpus, 3, true);
    let a_ckpt = dir.path().join("a.gcgts");
    let b_ckpt = dir.path().join("b.gcgts");
    let a = run(&["train", "--config", path_str(&config), "--out", path_str(&a_ckpt)]);
    let b = run(&["train", "--config", path_str(&config), "--out", path_str(&b_ckpt)]);
    assert_ok(&a);
    assert_ok(&b);
    assert_eq!(out_bytes(&a), out_bytes(&b), "loss logs must be bitwise identical");
    assert_eq!(fs::read(&a_ckpt).unwrap(), fs::read(&b_ckpt).unwrap());
}

fn out_bytes(out: &Output) -> &[u8] {
    &out.stdout
}

#[test]
fn train_epochs_zero_saves_the_initialized_model() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("c.jsonl");
    assert_ok(&run(&["generate", "--seed", "11", "--count", "6", "--out", path_str(&corpus)]));
    let config = write_config(dir.path(), &corpus, 0, false);
    let out = run(&["train", "--config", path_str(&config)]);
    assert_ok(&out);
    assert_eq!(stdout(&out), "", "no epochs, no log lines");
    gcgts::io::load(&dir.path().join("ckpt/model.gcgts")).expect("init checkpoint loads");
}

#[test]
fn train_preset_flag_overrides_the_config_file() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("c.jsonl");
    assert_ok(&run(&["generate", "--seed", "11", "--count", "6", "--out", path_str(&corpus)]));
    let config = write_config(dir.path(), &corpus, 1, false); // file says gcgts
    assert_ok(&run(&["train", "--config", path_str(&config), "--preset", "gts"]));
    let model = gcgts::io::load(&dir.path().join("ckpt/model.gcgts")).unwrap();
    assert!(!model.config.use_lagcn && !model.config.use_b_tensor);
    assert!(!model.config.use_uc && !model.config.use_ic);
}

#[test]
fn train_rejects_bad_inputs_before_training() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("c.jsonl");
    assert_ok(&run(&["generate", "--seed", "1", "--count", "4", "--out", path_str(&corpus)]));

    // Unknown key in the run config.
    let cfg = dir.path().join("typo.json");
    fs::write(&cfg, format!(r#"{{"train": "{}", "epoch": 3}}"#, path_str(&corpus))).unwrap();
    assert_fails(&run(&["train", "--config", path_str(&cfg)]));

    // Missing train corpus path.
    let cfg = dir.path().join("no-train.json");
    fs::write(&cfg, "{}").unwrap();
    let err = assert_fails(&run(&["train", "--config", path_str(&cfg)]));
    assert!(err.contains("train corpus"), "stderr: {err}");

    // Unknown preset.
    let cfg = write_config(dir.path(), &corpus, 1, false);
    let err = assert_fails(&run(&["train", "--config", path_str(&cfg), "--preset", "mega"]));
    assert!(err.contains("preset"), "stderr: {err}");

    // Invalid hyperparameters (d_h not a multiple of 4).
    let cfg = dir.path().join("bad-model.json");
    fs::write(
        &cfg,
        json!({"train": path_str(&corpus), "model": {"d_h": 30}}).to_string(),
    )
    .unwrap();
    let err = assert_fails(&run(&["train", "--config", path_str(&cfg)]));
    assert!(err.contains("multiple of 4"), "stderr: {err}");

    // Structurally invalid corpus aborts with its line number.
    let bad = dir.path().join("bad.jsonl");
    fs::write(
        &bad,
        r#"{"chars":["价"],"words":[[0,2]],"pos":["NN"],"deps":[{"head":-1,"rel":"root"}]}"#,
    )
    .unwrap();
    let cfg = write_config(dir.path(), &bad, 1, false);
    let err = assert_fails(&run(&["train", "--config", path_str(&cfg)]));
    assert!(err.contains("line 1"), "stderr: {err}");
}

// ── eval ─────────────────────────────────────────────────────────────────

#[test]
fn eval_reports_the_three_category_metrics() {
    let dir = TempDir::new().unwrap();
    let (ckpt, corpus) = trained_checkpoint(dir.path());
    let out = run(&["eval", "--checkpoint", path_str(&ckpt), "--corpus", path_str(&corpus)]);
    assert_ok(&out);
    let report: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    for category in ["pair", "aspect", "opinion"] {
        for field in ["p", "r", "f1"] {
            let v = report[category][field].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&v), "{category}.{field} = {v}");
        }
    }
    assert_eq!(report["n_sentences"], json!(12));

    // --out writes the same report to a file.
    let report_path = dir.path().join("metrics.json");
    assert_ok(&run(&[
        "eval",
        "--checkpoint",
        path_str(&ckpt),
        "--corpus",
        path_str(&corpus),
        "--out",
        path_str(&report_path),
    ]));
    let from_file: Value =
        serde_json::from_str(fs::read_to_string(&report_path).unwrap().trim()).unwrap();
    assert_eq!(from_file, report);
}

#[test]
fn eval_gold_oracle_is_perfect_without_a_checkpoint() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("c.jsonl");
    assert_ok(&run(&["generate", "--seed", "9", "--count", "25", "--out", path_str(&corpus)]));
    for mode in ["first-char", "all-char"] {
        let out = run(&["eval", "--gold-oracle", "--corpus", path_str(&corpus), "--mode", mode]);
        assert_ok(&out);
        let report: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
        for category in ["pair", "aspect", "opinion"] {
            assert_eq!(report[category]["f1"], json!(1.0), "{mode} {category}");
        }
    }
}

#[test]
fn eval_empty_corpus_reports_zero_counts() {
    let dir = TempDir::new().unwrap();
    let (ckpt, _) = trained_checkpoint(dir.path());
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let out = run(&["eval", "--checkpoint", path_str(&ckpt), "--corpus", path_str(&empty)]);
    assert_ok(&out);
    let report: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(report["n_sentences"], json!(0));
    assert_eq!(report["pair"]["f1"], json!(0.0));
}

#[test]
fn eval_rejects_vocab_mismatch_unless_allowed() {
    let dir = TempDir::new().unwrap();
    let (ckpt, _) = trained_checkpoint(dir.path());
    let foreign = dir.path().join("foreign.jsonl");
    fs::write(
        &foreign,
        r#"{"chars":["天","气"],"words":[[0,2]],"pos":["NN"],"deps":[{"head":-1,"rel":"root"}],"aspects":[],"opinions":[],"pairs":[]}"#,
    )
    .unwrap();
    let err = assert_fails(&run(&[
        "eval", "--checkpoint", path_str(&ckpt), "--corpus", path_str(&foreign),
    ]));
    assert!(err.contains("vocabulary mismatch") && err.contains('天'), "stderr: {err}");
    assert_ok(&run(&[
        "eval",
        "--checkpoint",
        path_str(&ckpt),
        "--corpus",
        path_str(&foreign),
        "--allow-unknown",
    ]));
}

// ── predict ──────────────────────────────────────────────────────────────

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TermLine {
    span: (usize, usize),
    text: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PairLine {
    aspect: TermLine,
    opinion: TermLine,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionLine {
    id: usize,
    aspects: Vec<TermLine>,
    opinions: Vec<TermLine>,
    pairs: Vec<PairLine>,
}

#[test]
fn predict_emits_strictly_parseable_jsonl_with_surface_strings() {
    let dir = TempDir::new().unwrap();
    let (ckpt, corpus_path) = trained_checkpoint(dir.path());
    let out = run(&["predict", "--checkpoint", path_str(&ckpt), "--corpus", path_str(&corpus_path)]);
    assert_ok(&out);

    let corpus = read_corpus(&corpus_path).unwrap();
    let lines: Vec<PredictionLine> = stdout(&out)
        .lines()
        .map(|l| serde_json::from_str(l).expect("prediction line parses strictly"))
        .collect();
    assert_eq!(lines.len(), corpus.len());
    for (k, line) in lines.iter().enumerate() {
        assert_eq!(line.id, k);
        let chars = &corpus[k].chars;
        let check = |t: &TermLine| {
            assert!(t.span.0 < t.span.1 && t.span.1 <= chars.len(), "span {:?}", t.span);
            assert_eq!(t.text, chars[t.span.0..t.span.1].concat());
        };
        line.aspects.iter().for_each(&check);
        line.opinions.iter().for_each(&check);
        for pair in &line.pairs {
            check(&pair.aspect);
            check(&pair.opinion);
            assert!(line.aspects.iter().any(|a| a.span == pair.aspect.span));
            assert!(line.opinions.iter().any(|o| o.span == pair.opinion.span));
        }
    }
}

#[test]
fn predict_accepts_unannotated_sentences_and_pairs_nothing_on_one_word() {
    let dir = TempDir::new().unwrap();
    let (ckpt, _) = trained_checkpoint(dir.path());
    // Parser output only — no aspects/opinions/pairs keys at all.
    let punct = dir.path().join("punct.jsonl");
    fs::write(
        &punct,
        r#"{"chars":["。"],"words":[[0,1]],"pos":["PU"],"deps":[{"head":-1,"rel":"root"}]}"#,
    )
    .unwrap();
    let out = run(&[
        "predict",
        "--checkpoint",
        path_str(&ckpt),
        "--corpus",
        path_str(&punct),
        "--allow-unknown",
    ]);
    assert_ok(&out);
    let line: PredictionLine = serde_json::from_str(stdout(&out).trim()).unwrap();
    // A one-word sentence has a single supervised position, which cannot be
    // both aspect and opinion, so no pair can come out of it.
    assert!(line.pairs.is_empty());
}

// ── visualize ────────────────────────────────────────────────────────────

#[test]
fn visualize_writes_a_pgm_sized_to_the_sentence() {
    let dir = TempDir::new().unwrap();
    let (ckpt, corpus_path) = trained_checkpoint(dir.path());
    let corpus = read_corpus(&corpus_path).unwrap();
    let n = corpus[2].n_chars();
    let pgm = dir.path().join("grid.pgm");
    assert_ok(&run(&[
        "visualize",
        "--checkpoint",
        path_str(&ckpt),
        "--corpus",
        path_str(&corpus_path),
        "--sentence",
        "2",
        "--out",
        path_str(&pgm),
    ]));
    let bytes = fs::read(&pgm).unwrap();
    let header = format!("P5\n{n} {n}\n255\n");
    assert!(bytes.starts_with(header.as_bytes()));
    assert_eq!(bytes.len(), header.len() + n * n);
}

#[test]
fn visualize_rejects_an_out_of_range_sentence_index() {
    let dir = TempDir::new().unwrap();
    let (ckpt, corpus) = trained_checkpoint(dir.path());
    let err = assert_fails(&run(&[
        "visualize",
        "--checkpoint",
        path_str(&ckpt),
        "--corpus",
        path_str(&corpus),
        "--sentence",
        "999",
        "--out",
        path_str(&dir.path().join("grid.pgm")),
    ]));
    assert!(err.contains("out of range"), "stderr: {err}");
}

// ── cross-cutting ────────────────────────────────────────────────────────

#[test]
fn missing_files_fail_with_nonzero_exits() {
    let dir = TempDir::new().unwrap();
    let ghost_path = dir.path().join("ghost");
    let ghost = path_str(&ghost_path);
    assert_fails(&run(&["train", "--config", ghost]));
    assert_fails(&run(&["eval", "--checkpoint", ghost, "--corpus", ghost]));
    assert_fails(&run(&["predict", "--checkpoint", ghost, "--corpus", ghost]));
    assert_fails(&run(&["visualize", "--checkpoint", ghost, "--corpus", ghost, "--out", ghost]));
    // A checkpoint that is not a checkpoint.
    let junk = dir.path().join("junk.gcgts");
    fs::write(&junk, b"GCGTS9 not a checkpoint").unwrap();
    let corpus = dir.path().join("c.jsonl");
    assert_ok(&run(&["generate", "--count", "2", "--out", path_str(&corpus)]));
    let err = assert_fails(&run(&[
        "eval", "--checkpoint", path_str(&junk), "--corpus", path_str(&corpus),
    ]));
    assert!(err.contains("magic"), "stderr: {err}");
}
