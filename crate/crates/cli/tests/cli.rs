//! End-to-end command-line checks: synth determinism, the two training
//! stages, correction, evaluation, grid search, and the exit-code
//! contract (0 ok, 2 input error, 3 numerical abort).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gec() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gec"))
}

fn write_vocab(dir: &Path) -> PathBuf {
    let path = dir.join("vocab.txt");
    let mut lines = vec![
        "<pad>".to_string(),
        "<unk>".to_string(),
        "<s>".to_string(),
        "</s>".to_string(),
        "[MASK]".to_string(),
        "<|startofpiece|>".to_string(),
        "<|endofpiece|>".to_string(),
    ];
    for i in 0..25 {
        lines.push(format!("w{i}"));
    }
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

fn write_clean_corpus(dir: &Path) -> PathBuf {
    let path = dir.join("clean.txt");
    let mut lines = Vec::new();
    for i in 0..40 {
        let a = (i * 3) % 24;
        let b = (i * 5 + 1) % 24;
        let c = (i * 7 + 2) % 24;
        lines.push(format!("w{a} w{b} w{c} w{}", (a + b) % 24));
    }
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

fn write_rules(dir: &Path) -> PathBuf {
    let path = dir.join("rules.json");
    fs::write(
        &path,
        r#"{"p_insert": 0.08, "p_replace": 0.15, "p_delete": 0.08,
            "max_corruptions_per_sentence": 2, "rng_seed": 0}"#,
    )
    .unwrap();
    path
}

fn write_train_config(dir: &Path, vocab_len: usize) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(
        &path,
        format!(
            r#"{{
  "model": {{
    "d_model": 16, "n_layers": 1, "n_heads": 2, "d_ff": 32,
    "vocab_size": {vocab_len}, "label_count": 3,
    "max_positions": 64, "max_block_positions": 12, "dropout": 0.0
  }},
  "train": {{
    "learning_rate": 0.002, "warmup_steps": 5, "batch_size": 8,
    "max_epochs": 3, "eval_interval": 50, "rng_seed": 111
  }}
}}"#
        ),
    )
    .unwrap();
    path
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("command runs")
}

fn assert_code(output: &Output, want: i32) {
    assert_eq!(
        output.status.code(),
        Some(want),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn full_workflow_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    let vocab = write_vocab(dir);
    let clean = write_clean_corpus(dir);
    let rules = write_rules(dir);
    let config = write_train_config(dir, 32);

    // synth: deterministic byte-identical outputs for equal seeds
    let tsv_a = dir.join("pairs_a.tsv");
    let tsv_b = dir.join("pairs_b.tsv");
    for out in [&tsv_a, &tsv_b] {
        let output = run(gec()
            .args(["synth", "--clean"])
            .arg(&clean)
            .arg("--rules")
            .arg(&rules)
            .arg("--vocab")
            .arg(&vocab)
            .args(["--seed", "7", "--out"])
            .arg(out));
        assert_code(&output, 0);
    }
    assert_eq!(fs::read(&tsv_a).unwrap(), fs::read(&tsv_b).unwrap());
    assert!(tsv_a.with_extension("tsv.manifest.json").exists());

    // train sft1
    let ckpt = dir.join("sft1.ckpt");
    let output = run(gec()
        .args(["train", "--stage", "sft1", "--data"])
        .arg(&tsv_a)
        .arg("--dev")
        .arg(&tsv_a)
        .arg("--vocab")
        .arg(&vocab)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&ckpt));
    assert_code(&output, 0);
    assert!(ckpt.exists());
    assert!(dir.join("sft1.ckpt.log.jsonl").exists());

    // sft2 without --init is an input error
    let output = run(gec()
        .args(["train", "--stage", "sft2", "--data"])
        .arg(&tsv_a)
        .arg("--dev")
        .arg(&tsv_a)
        .arg("--vocab")
        .arg(&vocab)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.join("sft2.ckpt")));
    assert_code(&output, 2);

    // train sft2 from the sft1 checkpoint
    let ckpt2 = dir.join("sft2.ckpt");
    let output = run(gec()
        .args(["train", "--stage", "sft2", "--data"])
        .arg(&tsv_a)
        .arg("--dev")
        .arg(&tsv_a)
        .arg("--vocab")
        .arg(&vocab)
        .arg("--config")
        .arg(&config)
        .arg("--init")
        .arg(&ckpt)
        .arg("--out")
        .arg(&ckpt2));
    assert_code(&output, 0);

    // detect prints one label line per input line
    let input = dir.join("input.txt");
    fs::write(&input, "w0 w1 w2\nw3 w4 w5 w6\n").unwrap();
    let output = run(gec().args(["detect", "--model"]).arg(&ckpt2).arg("--in").arg(&input));
    assert_code(&output, 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    let label_lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(label_lines.len(), 2);
    assert_eq!(label_lines[0].split_whitespace().count(), 5);

    // correct with delta=0 copies the input through
    let out_file = dir.join("corrected.txt");
    let trace_file = dir.join("trace.jsonl");
    let output = run(gec()
        .args(["correct", "--model"])
        .arg(&ckpt2)
        .arg("--in")
        .arg(&input)
        .args(["--ctrl", "0,,", "--out"])
        .arg(&out_file)
        .arg("--trace")
        .arg(&trace_file));
    assert_code(&output, 0);
    assert_eq!(fs::read_to_string(&out_file).unwrap(), "w0 w1 w2\nw3 w4 w5 w6\n");
    let traces = fs::read_to_string(&trace_file).unwrap();
    assert_eq!(traces.lines().count(), 2);
    for line in traces.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["decoder_steps"], 0);
    }

    // bad control string is an input error
    let output = run(gec()
        .args(["correct", "--model"])
        .arg(&ckpt2)
        .arg("--in")
        .arg(&input)
        .args(["--ctrl", "nope"]));
    assert_code(&output, 2);

    // evaluate prints a JSON report
    let output = run(gec().args(["evaluate", "--model"]).arg(&ckpt2).arg("--pairs").arg(&tsv_a));
    assert_code(&output, 0);
    let report: serde_json::Value =
        serde_json::from_slice(&output.stdout).expect("valid JSON report");
    assert!(report["score"]["f_half"].is_number());
    assert!(report["detection"]["acc_d"].is_number());

    // grid search with only neutral values reports the uncontrolled config
    let table = dir.join("grid.csv");
    let output = run(gec()
        .args(["grid", "--model"])
        .arg(&ckpt2)
        .arg("--dev")
        .arg(&tsv_a)
        .args(["--delta-grid", "", "--phi-grid", "", "--table"])
        .arg(&table));
    assert_code(&output, 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("best control: \",,\""), "{stdout}");
    let csv = fs::read_to_string(&table).unwrap();
    assert!(csv.starts_with("delta,phi_e,phi_i,precision,recall,f0_5"));

    // bench reports per-phase timings
    let output = run(gec().args(["bench", "--model"]).arg(&ckpt2).arg("--in").arg(&input));
    assert_code(&output, 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("avg detection"), "{stdout}");
    assert!(stdout.contains("decoder steps"), "{stdout}");
}

#[test]
fn detect_only_model_refuses_correct() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    let vocab = write_vocab(dir);
    let clean = write_clean_corpus(dir);
    let rules = write_rules(dir);
    let config = write_train_config(dir, 32);
    let tsv = dir.join("pairs.tsv");
    assert_code(
        &run(gec()
            .args(["synth", "--clean"])
            .arg(&clean)
            .arg("--rules")
            .arg(&rules)
            .arg("--vocab")
            .arg(&vocab)
            .args(["--seed", "9", "--out"])
            .arg(&tsv)),
        0,
    );
    let ckpt = dir.join("detector.ckpt");
    let output = run(gec()
        .args(["train", "--stage", "sft1", "--mode", "detect", "--data"])
        .arg(&tsv)
        .arg("--dev")
        .arg(&tsv)
        .arg("--vocab")
        .arg(&vocab)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&ckpt));
    assert_code(&output, 0);

    let input = dir.join("input.txt");
    fs::write(&input, "w0 w1\n").unwrap();
    let output = run(gec().args(["correct", "--model"]).arg(&ckpt).arg("--in").arg(&input));
    assert_code(&output, 2);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("detection-only model"), "{stderr}");

    // but detect still works
    let output = run(gec().args(["detect", "--model"]).arg(&ckpt).arg("--in").arg(&input));
    assert_code(&output, 0);
}

#[test]
fn divergent_training_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    let vocab = write_vocab(dir);
    let clean = write_clean_corpus(dir);
    let rules = write_rules(dir);
    let tsv = dir.join("pairs.tsv");
    assert_code(
        &run(gec()
            .args(["synth", "--clean"])
            .arg(&clean)
            .arg("--rules")
            .arg(&rules)
            .arg("--vocab")
            .arg(&vocab)
            .args(["--seed", "3", "--out"])
            .arg(&tsv)),
        0,
    );
    let config = dir.join("hot.json");
    fs::write(
        &config,
        r#"{
  "model": {"d_model": 16, "n_layers": 1, "n_heads": 2, "d_ff": 32,
            "vocab_size": 32, "label_count": 3,
            "max_positions": 64, "max_block_positions": 12},
  "train": {"learning_rate": 1e18, "warmup_steps": 0, "batch_size": 4,
            "max_epochs": 5, "eval_interval": 1000000, "rng_seed": 1}
}"#,
    )
    .unwrap();
    let ckpt = dir.join("diverged.ckpt");
    let output = run(gec()
        .args(["train", "--stage", "sft1", "--data"])
        .arg(&tsv)
        .arg("--dev")
        .arg(&tsv)
        .arg("--vocab")
        .arg(&vocab)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&ckpt));
    assert_code(&output, 3);
    assert!(ckpt.exists(), "the pre-divergence checkpoint is still written");
}

#[test]
fn malformed_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    let vocab = write_vocab(dir);
    let rules = write_rules(dir);

    // missing clean file
    let output = run(gec()
        .args(["synth", "--clean"])
        .arg(dir.join("missing.txt"))
        .arg("--rules")
        .arg(&rules)
        .arg("--vocab")
        .arg(&vocab)
        .args(["--out"])
        .arg(dir.join("out.tsv")));
    assert_code(&output, 2);

    // malformed TSV line reports its 1-based number
    let bad = dir.join("bad.tsv");
    fs::write(&bad, "w0 w1\tw0 w1\nonly-source\n").unwrap();
    let config = write_train_config(dir, 32);
    let output = run(gec()
        .args(["train", "--stage", "sft1", "--data"])
        .arg(&bad)
        .arg("--dev")
        .arg(&bad)
        .arg("--vocab")
        .arg(&vocab)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.join("x.ckpt")));
    assert_code(&output, 2);
    assert!(String::from_utf8_lossy(&output.stderr).contains("line 2"));

    // unknown flags are a usage error (clap exits 2)
    let output = run(gec().args(["synth", "--nonsense"]));
    assert_code(&output, 2);
}
