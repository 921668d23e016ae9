use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use hiercase::hiermodel::{HierModel, ModelConfig};
use serde_json::Value;

fn hiercase(args: &[&str], stdin: Option<&[u8]>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_hiercase"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    let mut pipe = child.stdin.take().expect("stdin");
    pipe.write_all(stdin.unwrap_or_default()).expect("stdin writable");
    drop(pipe);
    child.wait_with_output().expect("binary finishes")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 output")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tiny() -> ModelConfig {
    ModelConfig {
        preset: "tiny".into(),
        input_embedding: 16,
        output_embedding: 4,
        enc_cells: 24,
        dec_cells: 24,
        num_buckets: 499,
        context_dim: 12,
        ..ModelConfig::student()
    }
}

fn write_zero_model(dir: &Path) -> PathBuf {
    let path = dir.join("zero.hct");
    HierModel::<f32>::zeros(tiny()).unwrap().save(&path).unwrap();
    path
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn untrained_model_copies_input() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_zero_model(dir.path());
    let out = hiercase(&["predict", "--model", p(&model)], Some(b"hello world\n"));
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out), "hello world\n");
    assert!(stderr(&out).contains("resolved config"));
}

#[test]
fn predict_preserves_line_count() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_zero_model(dir.path());
    let input: &[u8] = b"one line\n\n\xc3\x28 broken\n  spaced   out  \nno newline at end";
    for mode in ["best-path", "full-beam"] {
        let out = hiercase(&["predict", "--model", p(&model), "--mode", mode, "--beam", "3"], Some(input));
        assert!(out.status.success(), "{}", stderr(&out));
        assert_eq!(out.stdout.iter().filter(|b| **b == b'\n').count(), 5);
        assert!(out.stdout.windows(9).any(|w| w == b"\xc3\x28 broken"));
        assert!(stderr(&out).contains("1 of 5 lines"), "{}", stderr(&out));
    }
}

#[test]
fn model_load_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.hct");
    let out = hiercase(&["predict", "--model", p(&missing)], Some(b"x\n"));
    assert_eq!(out.status.code(), Some(2));

    let model = write_zero_model(dir.path());
    let bytes = std::fs::read(&model).unwrap();
    let cut = dir.path().join("cut.hct");
    std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    let out = hiercase(&["inspect", p(&cut)], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("byte"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_2() {
    let out = hiercase(&["predict", "--no-such-flag"], None);
    assert_eq!(out.status.code(), Some(2));
    let out = hiercase(&["--help"], None);
    assert!(out.status.success());
    for sub in ["train", "distill", "predict", "eval", "bench", "noisify", "lm-exp", "inspect"] {
        assert!(stdout(&out).contains(sub), "{sub} missing from help");
    }
}

#[test]
fn inspect_reports_presets() {
    let dir = tempfile::tempdir().unwrap();
    for (name, target) in [("student", 1.3e6), ("teacher", 19.2e6)] {
        let path = dir.path().join(format!("{name}.hct"));
        HierModel::<f32>::zeros(ModelConfig::preset(name).unwrap()).unwrap().save(&path).unwrap();
        let out = hiercase(&["inspect", p(&path)], None);
        assert!(out.status.success(), "{}", stderr(&out));
        let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
        let config: ModelConfig = serde_json::from_value(v["manifest"]["config"].clone()).unwrap();
        assert_eq!(config, ModelConfig::preset(name).unwrap());
        let count = v["manifest"]["param_count"].as_f64().unwrap();
        assert!((count - target).abs() / target <= 0.15, "{name}: {count}");
        assert!(v["sizes"]["quantized_bytes"].as_u64().unwrap() < v["sizes"]["float_bytes"].as_u64().unwrap());
    }
}

const DEMO: &str = "I love iPhone\nMy iPhone is new\nI love Paris\nWe love Paris\nThe iPhone is here\nI love it\n";

#[test]
fn train_then_predict_mixed_case() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    std::fs::write(&corpus, DEMO.repeat(4)).unwrap();
    let config = dir.path().join("config.json");
    let model_section = serde_json::to_value(tiny()).unwrap();
    let settings = serde_json::json!({
        "model": model_section,
        "train": {"epochs": 3, "batch_size": 4, "learning_rate": 0.01, "patience": 100, "valid_fraction": 0.1}
    });
    std::fs::write(&config, settings.to_string()).unwrap();
    let model = dir.path().join("demo.hct");
    let log = dir.path().join("log.jsonl");
    let out = hiercase(
        &[
            "train", "--corpus", p(&corpus), "--output", p(&model), "--config", p(&config),
            "--epochs", "40", "--log", p(&log), "--seed", "3",
        ],
        None,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    // flags beat the config file, which beats the preset
    let resolved = stderr(&out);
    let line = resolved.lines().find(|l| l.starts_with("resolved config: ")).unwrap();
    let v: Value = serde_json::from_str(line.trim_start_matches("resolved config: ")).unwrap();
    assert_eq!(v["train"]["epochs"], 40);
    assert_eq!(v["train"]["batch_size"], 4);
    assert_eq!(v["train"]["seed"], 3);
    assert_eq!(v["train"]["clip_norm"], 5.0);
    assert_eq!(v["model"]["enc_cells"], 24);
    let summary: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(summary["seed"], 3);
    let records = std::fs::read_to_string(&log).unwrap();
    let first: Value = serde_json::from_str(records.lines().next().unwrap()).unwrap();
    for key in ["epoch", "train_loss", "valid_loss", "valid_f1", "seconds"] {
        assert!(first.get(key).is_some());
    }

    let out = hiercase(&["predict", "--model", p(&model)], Some(b"i love iphone\n"));
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out), "I love iPhone\n");

    let again = dir.path().join("again.hct");
    let out = hiercase(
        &["train", "--corpus", p(&corpus), "--output", p(&again), "--config", p(&config), "--epochs", "40", "--seed", "3"],
        None,
    );
    assert!(out.status.success());
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(&again).unwrap());

    let inputs = dir.path().join("inputs.txt");
    std::fs::write(&inputs, "I LOVE IPHONE\nwe love paris\n").unwrap();
    let distilled = dir.path().join("distilled.txt");
    let out = hiercase(&["distill", "--teacher", p(&model), "--input", p(&inputs), "--output", p(&distilled)], None);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(std::fs::read_to_string(&distilled).unwrap(), "I love iPhone\nWe love Paris\n");
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    std::fs::write(&corpus, DEMO).unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"train": {"epochs": 1, "bogus": true}}"#).unwrap();
    let model = dir.path().join("m.hct");
    let out = hiercase(&["train", "--corpus", p(&corpus), "--output", p(&model), "--config", p(&config)], None);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&config, r#"{"optimizer": {}}"#).unwrap();
    let out = hiercase(&["train", "--corpus", p(&corpus), "--output", p(&model), "--config", p(&config)], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(!model.exists());
}

#[test]
fn eval_gates_on_f1() {
    let dir = tempfile::tempdir().unwrap();
    let reference = dir.path().join("ref.txt");
    std::fs::write(&reference, DEMO).unwrap();
    let lexicon = dir.path().join("lex.tsv");
    let out = hiercase(&["train", "--lexicon", "--corpus", p(&reference), "--output", p(&lexicon)], None);
    assert!(out.status.success(), "{}", stderr(&out));

    let out = hiercase(&["eval", "--reference", p(&reference), "--lexicon", p(&lexicon), "--identity"], None);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = stdout(&out);
    assert_eq!(table.lines().count(), 3);
    assert!(table.lines().any(|l| l.starts_with("lexicon\t")));

    let out = hiercase(&["eval", "--reference", p(&reference), "--identity", "--min-f1", "0.5"], None);
    assert_eq!(out.status.code(), Some(1));
    let out = hiercase(&["eval", "--reference", p(&reference), "--lexicon", p(&lexicon), "--min-f1", "0.5", "--json"], None);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(v["systems"]["lexicon"]["f1"].as_f64().unwrap() >= 0.5);
}

#[test]
fn noisify_lm_exp_and_bench() {
    let dir = tempfile::tempdir().unwrap();
    let text = "The Moon is far\nParis is in France\nWe met John in Paris\nJohn saw the Moon\n".repeat(10);
    let corpus = dir.path().join("corpus.txt");
    std::fs::write(&corpus, &text).unwrap();

    let noisy = dir.path().join("noisy.txt");
    let out = hiercase(&["noisify", "--input", p(&corpus), "--output", p(&noisy), "--rate", "1.0", "--seed", "9"], None);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(std::fs::read_to_string(&noisy).unwrap(), text.to_lowercase());
    let summary: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(summary["seed"], 9);

    let report = dir.path().join("lm.json");
    let out = hiercase(
        &[
            "lm-exp", "--train", p(&corpus), "--eval", p(&corpus), "--lexicon-corpus", p(&corpus),
            "--seed", "4", "--output", p(&report), "--check-gap", "0.5",
        ],
        None,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["seed"], 4);
    for arm in ["corrupt-50", "corrupt-25", "normalized-50", "normalized-25", "oracle"] {
        assert!(v["arms"][arm]["perplexity"].as_f64().unwrap() > 1.0, "{arm}");
    }
    let out = hiercase(&["lm-exp", "--train", p(&corpus), "--eval", p(&corpus), "--identity", "--check-gap", "0.0001"], None);
    assert_eq!(out.status.code(), Some(1));

    let model = write_zero_model(dir.path());
    let out = hiercase(
        &["bench", "--corpus", p(&corpus), "--model", p(&model), "--char-reference", "--identity", "--runs", "3", "--json"],
        None,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let systems = v["report"]["systems"].as_array().unwrap();
    assert_eq!(systems.len(), 3);
    assert!(systems.iter().all(|s| s["tokens_per_second"].as_f64().unwrap() > 0.0));
}
