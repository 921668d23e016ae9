use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hiercase::baseline::CaseLexicon;
use hiercase::evalbench::{bench_speed, char_rnn_reference, evaluate, BenchReport, EvalReport};
use hiercase::hiermodel::{read_model_manifest, DecodeMode, HierModel, ModelConfig, Truecaser};
use hiercase::lmexp::{corrupt_arm, noisify, normalized_arm, run_lm_experiment, NoisifyConfig, ORACLE_ARM};
use hiercase::textcore::{Capitalizer, Identity, Sentence};
use hiercase::training::{distill, train, TrainConfig};
use serde_json::{json, Value};

/// Hierarchical word-and-character truecaser.
#[derive(Parser, Debug)]
#[command(name = "hiercase", version, about, propagate_version = true)]
struct Cli {
    /// Random seed; recorded in every JSON artifact.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model (or the lexicon baseline) on cased text, one sentence per line.
    Train(TrainArgs),
    /// Re-case lowercased text with a teacher model to make training data for a student.
    Distill(DistillArgs),
    /// Truecase text line by line (stdin to stdout by default).
    Predict(PredictArgs),
    /// Score systems against cased reference text.
    Eval(EvalArgs),
    /// Measure single-thread throughput at batch size 1.
    Bench(BenchArgs),
    /// Lowercase a random fraction of the cased tokens.
    Noisify(NoisifyArgs),
    /// Compare n-gram perplexities on corrupted, normalized and original text.
    LmExp(LmExpArgs),
    /// Print a model file's header and sizes.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Cased training text.
    #[arg(long)]
    corpus: PathBuf,
    /// Where to write the model.
    #[arg(long)]
    output: PathBuf,
    /// JSON file with optional "model" and "train" objects.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Hyper-parameter preset: student or teacher.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    valid_fraction: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    max_seconds: Option<f64>,
    /// Epoch log (JSON lines); defaults to standard error.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Build the most-frequent-form lexicon instead of a neural model.
    #[arg(long)]
    lexicon: bool,
}

#[derive(Args, Debug)]
struct DistillArgs {
    #[arg(long)]
    teacher: PathBuf,
    /// Input text; it is lowercased before decoding.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value = "best-path")]
    mode: DecodeMode,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Input text; standard input when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output text; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value = "best-path")]
    mode: DecodeMode,
    /// Beam width; the model's own setting when absent.
    #[arg(long)]
    beam: Option<usize>,
}

#[derive(Args, Debug)]
struct Systems {
    /// Neural model file (repeatable).
    #[arg(long)]
    model: Vec<PathBuf>,
    /// Saved lexicon (repeatable).
    #[arg(long)]
    lexicon: Vec<PathBuf>,
    /// Build a lexicon from this cased corpus.
    #[arg(long)]
    lexicon_corpus: Option<PathBuf>,
    /// Include the lowercase-everything system.
    #[arg(long)]
    identity: bool,
    #[arg(long, default_value = "best-path")]
    mode: DecodeMode,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Cased reference text; systems see it lowercased.
    #[arg(long)]
    reference: PathBuf,
    #[command(flatten)]
    systems: Systems,
    /// Exit with status 1 if any system scores below this F1.
    #[arg(long)]
    min_f1: Option<f64>,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    systems: Systems,
    /// Add a pure-character reference as wide as the first model.
    #[arg(long)]
    char_reference: bool,
    /// Use only the first N sentences.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct NoisifyArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Fraction of cased tokens to lowercase.
    #[arg(long)]
    rate: f64,
}

#[derive(Args, Debug)]
struct LmExpArgs {
    /// Cased language-model training text.
    #[arg(long)]
    train: PathBuf,
    /// Cased evaluation text.
    #[arg(long)]
    eval: PathBuf,
    #[command(flatten)]
    systems: Systems,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.25")]
    rates: Vec<f64>,
    /// Exit with status 1 unless perplexities are ordered
    /// corrupt(highest rate) > corrupt(lowest rate) > normalized(highest rate),
    /// with the normalized arm within this relative gap of the original text.
    #[arg(long)]
    check_gap: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    model: PathBuf,
}

/// A run that completed but missed a requested threshold.
#[derive(Debug)]
struct ThresholdFailure(String);

impl std::fmt::Display for ThresholdFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ThresholdFailure {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ThresholdFailure>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Train(args) => cmd_train(args, seed),
        Command::Distill(args) => cmd_distill(args, seed),
        Command::Predict(args) => cmd_predict(args),
        Command::Eval(args) => cmd_eval(args, seed),
        Command::Bench(args) => cmd_bench(args, seed),
        Command::Noisify(args) => cmd_noisify(args, seed),
        Command::LmExp(args) => cmd_lm_exp(args, seed),
        Command::Inspect(args) => cmd_inspect(args),
    }
}

fn log_config(config: &Value) {
    eprintln!("resolved config: {config}");
}

fn read_sentences(path: &Path) -> Result<Vec<Sentence>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(Sentence::parse).filter(|s| !s.is_empty()).collect())
}

fn write_sentences(path: &Path, sentences: &[Sentence]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for s in sentences {
        writeln!(out, "{s}")?;
    }
    out.flush()?;
    Ok(())
}

fn load_model(path: &Path) -> Result<HierModel<f32>> {
    HierModel::<f32>::load(path).with_context(|| format!("loading model {}", path.display()))
}

/// Overlay the keys of `top` onto `base`, recursing into objects.
fn merge(base: &mut Value, top: &Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, t) => *b = t.clone(),
    }
}

/// Preset defaults, then the config file, then command-line flags.
fn resolve_train_config(args: &TrainArgs, seed: Option<u64>) -> Result<(ModelConfig, TrainConfig)> {
    let file: Value = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => json!({}),
    };
    if let Some(obj) = file.as_object() {
        if let Some(k) = obj.keys().find(|k| *k != "model" && *k != "train") {
            bail!("unknown config section {k:?} (expected \"model\" or \"train\")");
        }
    } else {
        bail!("config file must hold a JSON object");
    }
    let file_train = file.get("train").cloned().unwrap_or(json!({}));
    let preset = args
        .preset
        .clone()
        .or_else(|| file_train.get("preset").and_then(Value::as_str).map(str::to_string))
        .unwrap_or_else(|| TrainConfig::default().preset);

    let mut model = serde_json::to_value(ModelConfig::preset(&preset)?)?;
    if let Some(m) = file.get("model") {
        merge(&mut model, m);
    }
    let model: ModelConfig = serde_json::from_value(model).context("model section")?;

    let mut train = serde_json::to_value(TrainConfig::default())?;
    merge(&mut train, &file_train);
    let flags = [
        ("preset", Some(json!(preset))),
        ("epochs", args.epochs.map(|v| json!(v))),
        ("batch_size", args.batch_size.map(|v| json!(v))),
        ("learning_rate", args.learning_rate.map(|v| json!(v))),
        ("clip_norm", args.clip_norm.map(|v| json!(v))),
        ("valid_fraction", args.valid_fraction.map(|v| json!(v))),
        ("patience", args.patience.map(|v| json!(v))),
        ("max_seconds", args.max_seconds.map(|v| json!(v))),
        ("seed", seed.map(|v| json!(v))),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            train[key] = v;
        }
    }
    let train: TrainConfig = serde_json::from_value(train).context("train section")?;
    model.validate()?;
    train.validate()?;
    Ok((model, train))
}

fn cmd_train(args: TrainArgs, seed: Option<u64>) -> Result<()> {
    if args.lexicon {
        log_config(&json!({"system": "lexicon", "corpus": args.corpus, "output": args.output}));
        let lexicon = CaseLexicon::build(&read_sentences(&args.corpus)?)?;
        lexicon.save(&args.output)?;
        println!("{}", json!({"entries": lexicon.len(), "tokens": lexicon.total_tokens()}));
        return Ok(());
    }
    let (model_config, train_config) = resolve_train_config(&args, seed)?;
    log_config(&json!({"model": model_config, "train": train_config}));
    let text = std::fs::read_to_string(&args.corpus).with_context(|| format!("reading {}", args.corpus.display()))?;
    let mut log: Box<dyn Write> = match &args.log {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(io::stderr()),
    };
    let mut log_error = None;
    let outcome = train(model_config, &train_config, text.lines(), &mut |record| {
        let line = serde_json::to_string(record).expect("log records serialize");
        if let Err(e) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            log_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_error {
        return Err(e).context("writing the training log");
    }
    outcome.model.save(&args.output)?;
    println!(
        "{}",
        json!({
            "seed": train_config.seed,
            "epochs_run": outcome.log.len(),
            "best_epoch": outcome.best_epoch,
            "best_valid_loss": outcome.best_valid_loss,
            "stop": outcome.stop,
            "param_count": outcome.model.param_count(),
        })
    );
    Ok(())
}

fn cmd_distill(args: DistillArgs, seed: Option<u64>) -> Result<()> {
    log_config(&json!({"teacher": args.teacher, "input": args.input, "output": args.output, "mode": args.mode}));
    let teacher = load_model(&args.teacher)?;
    let inputs: Vec<Sentence> = read_sentences(&args.input)?.iter().map(Sentence::lowercased).collect();
    let outputs = distill(&teacher, &inputs, args.mode)?;
    write_sentences(&args.output, &outputs)?;
    println!("{}", json!({"sentences": outputs.len(), "mode": args.mode, "seed": seed}));
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let mut system = Truecaser::new(&model, args.mode);
    if let Some(beam) = args.beam {
        if beam == 0 {
            bail!("--beam must be positive");
        }
        system.beam = beam;
    }
    log_config(&json!({"model": args.model, "mode": args.mode, "beam": system.beam}));
    let input: Box<dyn Read> = match &args.input {
        Some(path) => Box::new(File::open(path).with_context(|| format!("opening {}", path.display()))?),
        None => Box::new(io::stdin().lock()),
    };
    let output: Box<dyn Write> = match &args.output {
        Some(path) => Box::new(File::create(path).with_context(|| format!("creating {}", path.display()))?),
        None => Box::new(io::stdout().lock()),
    };
    let (lines, passed) = predict_stream(&system, BufReader::new(input), BufWriter::new(output))?;
    if passed > 0 {
        eprintln!("warning: {passed} of {lines} lines could not be decoded and were passed through unchanged");
    }
    Ok(())
}

/// One output line per input line. Lines that are not UTF-8 or that the
/// model rejects are copied through unchanged and counted.
fn predict_stream(system: &dyn Capitalizer, mut input: impl BufRead, mut output: impl Write) -> Result<(usize, usize)> {
    let (mut lines, mut passed) = (0, 0);
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if input.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        lines += 1;
        let body = buf.strip_suffix(b"\n").unwrap_or(&buf);
        let body = body.strip_suffix(b"\r").unwrap_or(body);
        let decoded = std::str::from_utf8(body)
            .ok()
            .map(Sentence::parse)
            .map(|s| if s.is_empty() { Ok(s) } else { system.truecase(&s) });
        match decoded {
            Some(Ok(s)) => writeln!(output, "{s}")?,
            _ => {
                passed += 1;
                output.write_all(body)?;
                output.write_all(b"\n")?;
            }
        }
    }
    output.flush()?;
    Ok((lines, passed))
}

/// Everything a system might borrow from, kept alive for the run.
struct Loaded {
    models: Vec<HierModel<f32>>,
    lexicons: Vec<CaseLexicon>,
    identity: bool,
    mode: DecodeMode,
}

impl Loaded {
    fn new(systems: &Systems) -> Result<Loaded> {
        let models = systems.model.iter().map(|p| load_model(p)).collect::<Result<Vec<_>>>()?;
        let mut lexicons = systems
            .lexicon
            .iter()
            .map(|p| CaseLexicon::load(p).with_context(|| format!("loading lexicon {}", p.display())))
            .collect::<Result<Vec<_>>>()?;
        if let Some(path) = &systems.lexicon_corpus {
            lexicons.push(CaseLexicon::build(&read_sentences(path)?)?);
        }
        Ok(Loaded {
            models,
            lexicons,
            identity: systems.identity,
            mode: systems.mode,
        })
    }

    fn systems(&self) -> Vec<Box<dyn Capitalizer + '_>> {
        let mut out: Vec<Box<dyn Capitalizer + '_>> = Vec::new();
        for m in &self.models {
            out.push(Box::new(Truecaser::new(m, self.mode)));
        }
        for l in &self.lexicons {
            out.push(Box::new(l));
        }
        if self.identity {
            out.push(Box::new(Identity));
        }
        out
    }
}

fn cmd_eval(args: EvalArgs, seed: Option<u64>) -> Result<()> {
    log_config(&json!({"reference": args.reference, "mode": args.systems.mode, "min_f1": args.min_f1}));
    let references = read_sentences(&args.reference)?;
    let loaded = Loaded::new(&args.systems)?;
    let systems = loaded.systems();
    if systems.is_empty() {
        bail!("no systems given (use --model, --lexicon, --lexicon-corpus or --identity)");
    }
    let mut reports: Vec<(String, EvalReport)> = Vec::new();
    for system in &systems {
        reports.push((system.name(), evaluate(system.as_ref(), &references)?));
    }
    if args.json {
        let systems: serde_json::Map<String, Value> =
            reports.iter().map(|(n, r)| Ok((n.clone(), serde_json::to_value(r)?))).collect::<Result<_>>()?;
        println!("{}", serde_json::to_string_pretty(&json!({"seed": seed, "systems": systems}))?);
    } else {
        println!("{}", EvalReport::tsv_header());
        for (name, report) in &reports {
            println!("{}", report.tsv_row(name));
        }
    }
    if let Some(min) = args.min_f1 {
        let below: Vec<String> = reports
            .iter()
            .filter(|(_, r)| r.f1 < min)
            .map(|(n, r)| format!("{n} F1 {:.4}", r.f1))
            .collect();
        if !below.is_empty() {
            return Err(ThresholdFailure(format!("below F1 {min}: {}", below.join(", "))).into());
        }
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs, seed: Option<u64>) -> Result<()> {
    let seed = seed.unwrap_or(1);
    log_config(&json!({"corpus": args.corpus, "warmup": args.warmup, "runs": args.runs, "limit": args.limit, "seed": seed}));
    let mut corpus = read_sentences(&args.corpus)?;
    if let Some(n) = args.limit {
        corpus.truncate(n);
    }
    let loaded = Loaded::new(&args.systems)?;
    let reference = if args.char_reference {
        let Some(first) = loaded.models.first() else {
            bail!("--char-reference needs a --model to match");
        };
        Some(char_rnn_reference(first.config(), seed))
    } else {
        None
    };
    let owned = loaded.systems();
    let mut systems: Vec<&dyn Capitalizer> = owned.iter().map(|b| b.as_ref()).collect();
    if let Some(r) = &reference {
        systems.push(r);
    }
    if systems.is_empty() {
        bail!("no systems given");
    }
    let report: BenchReport = bench_speed(&systems, &corpus, args.warmup, args.runs)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&json!({"seed": seed, "report": report}))?);
    } else {
        println!("{}", BenchReport::tsv_header());
        for row in report.tsv_rows() {
            println!("{row}");
        }
    }
    Ok(())
}

fn cmd_noisify(args: NoisifyArgs, seed: Option<u64>) -> Result<()> {
    let config = NoisifyConfig {
        corruption_rate: args.rate,
        seed: seed.unwrap_or(1),
    };
    log_config(&json!({"input": args.input, "output": args.output, "noisify": config}));
    let corpus = read_sentences(&args.input)?;
    let noisy = noisify(&corpus, &config)?;
    write_sentences(&args.output, &noisy)?;
    println!("{}", json!({"sentences": noisy.len(), "rate": args.rate, "seed": config.seed}));
    Ok(())
}

fn cmd_lm_exp(args: LmExpArgs, seed: Option<u64>) -> Result<()> {
    let seed = seed.unwrap_or(1);
    log_config(&json!({"train": args.train, "eval": args.eval, "rates": args.rates, "seed": seed, "check_gap": args.check_gap}));
    let train_text = read_sentences(&args.train)?;
    let eval_text = read_sentences(&args.eval)?;
    let loaded = Loaded::new(&args.systems)?;
    let systems = loaded.systems();
    let [normalizer] = systems.as_slice() else {
        bail!("lm-exp needs exactly one normalizing system");
    };
    let exp = run_lm_experiment(&train_text, &eval_text, normalizer.as_ref(), &args.rates, seed)?;
    let text = serde_json::to_string_pretty(&exp)?;
    match &args.output {
        Some(path) => std::fs::write(path, format!("{text}\n"))?,
        None => println!("{text}"),
    }
    if let Some(gap) = args.check_gap {
        let hi = args.rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = args.rates.iter().cloned().fold(f64::INFINITY, f64::min);
        let ppl = |arm: String| exp.arms[&arm].perplexity;
        let (c_hi, c_lo, n_hi, oracle) = (ppl(corrupt_arm(hi)), ppl(corrupt_arm(lo)), ppl(normalized_arm(hi)), ppl(ORACLE_ARM.into()));
        let rel = (n_hi - oracle).abs() / oracle;
        if !(c_hi > c_lo && c_lo > n_hi && rel <= gap) {
            return Err(ThresholdFailure(format!(
                "perplexity check failed: {c_hi:.3}, {c_lo:.3}, {n_hi:.3}; oracle {oracle:.3}, gap {rel:.4}"
            ))
            .into());
        }
    }
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    let bytes = std::fs::read(&args.model).with_context(|| format!("reading {}", args.model.display()))?;
    let manifest = read_model_manifest(&bytes).with_context(|| format!("inspecting {}", args.model.display()))?;
    let model = HierModel::<f32>::from_bytes(&bytes).with_context(|| format!("loading {}", args.model.display()))?;
    let sizes = model.size_report()?;
    println!("{}", serde_json::to_string_pretty(&json!({"manifest": manifest, "sizes": sizes, "file_bytes": bytes.len()}))?);
    Ok(())
}
