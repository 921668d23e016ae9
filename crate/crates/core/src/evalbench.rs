//! Non-lowercase (NL) precision/recall/F1, throughput benchmarking, and the
//! pure character-level comparison system.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::char_bucket;
use crate::hiermodel::tagger::SeqTagger;
use crate::hiermodel::ModelConfig;
use crate::neuralnet::gru::GradSink;
use crate::neuralnet::{ParamLayout, Real};
use crate::textcore::{
    apply_char_labels, classify_word, has_upper, is_cased, lowercase, Capitalizer, CharLabel, LabeledPair, Sentence,
    WordClass,
};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    /// Reference tokens of this class.
    pub references: usize,
    /// Of those, predicted exactly.
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sentences: usize,
    pub tokens: usize,
    pub nl_predictions: usize,
    pub nl_references: usize,
    pub nl_correct: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub token_accuracy: f64,
    /// Predicted tokens that are not a case variant of the reference token.
    pub hard_errors: usize,
    pub by_class: BTreeMap<String, ClassStats>,
}

impl EvalReport {
    pub fn tsv_header() -> &'static str {
        "system\tprecision\trecall\tf1"
    }

    pub fn tsv_row(&self, system: &str) -> String {
        format!("{system}\t{:.4}\t{:.4}\t{:.4}", self.precision, self.recall, self.f1)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Score predictions against references, token by token at the same
/// position. A token counts as NL when it contains an uppercase character;
/// an NL prediction is correct when it equals the reference token.
pub fn eval_nl(predictions: &[Sentence], references: &[Sentence]) -> Result<EvalReport> {
    if predictions.len() != references.len() {
        return Err(Error::Alignment {
            line: predictions.len().min(references.len()) + 1,
            reason: format!("{} prediction lines vs {} reference lines", predictions.len(), references.len()),
        });
    }
    let mut r = EvalReport {
        sentences: references.len(),
        ..EvalReport::default()
    };
    for class in WordClass::ALL {
        r.by_class.insert(class.name().to_string(), ClassStats::default());
    }
    let mut exact = 0;
    for (line, (pred, gold)) in predictions.iter().zip(references).enumerate() {
        if pred.len() != gold.len() {
            return Err(Error::Alignment {
                line: line + 1,
                reason: format!("{} predicted tokens vs {} reference tokens", pred.len(), gold.len()),
            });
        }
        for (p, g) in pred.tokens().iter().zip(gold.tokens()) {
            r.tokens += 1;
            if lowercase(p) != lowercase(g) {
                r.hard_errors += 1;
            }
            let p_nl = has_upper(p);
            let g_nl = has_upper(g);
            r.nl_predictions += usize::from(p_nl);
            r.nl_references += usize::from(g_nl);
            if p_nl && p == g {
                r.nl_correct += 1;
            }
            if p == g {
                exact += 1;
            }
            let stats = r
                .by_class
                .get_mut(classify_word(g)?.name())
                .expect("every class is present");
            stats.references += 1;
            stats.correct += usize::from(p == g);
        }
    }
    for stats in r.by_class.values_mut() {
        stats.accuracy = ratio(stats.correct, stats.references);
    }
    r.precision = ratio(r.nl_correct, r.nl_predictions);
    r.recall = ratio(r.nl_correct, r.nl_references);
    r.f1 = if r.precision > 0.0 && r.recall > 0.0 {
        2.0 * r.precision * r.recall / (r.precision + r.recall)
    } else {
        0.0
    };
    r.token_accuracy = ratio(exact, r.tokens);
    Ok(r)
}

/// Run a capitalizer over lowercased references and score it.
pub fn evaluate(system: &dyn Capitalizer, references: &[Sentence]) -> Result<EvalReport> {
    let preds = references
        .iter()
        .map(|s| system.truecase(&s.lowercased()))
        .collect::<Result<Vec<_>>>()?;
    eval_nl(&preds, references)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpeed {
    pub name: String,
    /// Median over the measured runs.
    pub tokens_per_second: f64,
    /// Relative to the first system of the benchmark.
    pub relative_speed: f64,
    pub runs: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub param_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub float_bytes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantized_bytes: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub reference: String,
    pub sentences: usize,
    pub tokens: usize,
    pub batch_size: usize,
    pub threads: usize,
    pub systems: Vec<SystemSpeed>,
}

impl BenchReport {
    pub fn tsv_header() -> &'static str {
        "system\ttokens_per_second\trelative_speed\tparams"
    }

    pub fn tsv_rows(&self) -> Vec<String> {
        self.systems
            .iter()
            .map(|s| {
                format!(
                    "{}\t{:.1}\t{:.3}\t{}",
                    s.name,
                    s.tokens_per_second,
                    s.relative_speed,
                    s.param_count.map_or_else(|| "-".to_string(), |n| n.to_string())
                )
            })
            .collect()
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Time each system over the corpus one sentence at a time on the calling
/// thread: `warmup` untimed passes, then `runs` timed passes. Outputs must be
/// identical across passes.
pub fn bench_speed(systems: &[&dyn Capitalizer], corpus: &[Sentence], warmup: usize, runs: usize) -> Result<BenchReport> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("benchmark corpus has no sentences".into()));
    }
    if systems.is_empty() {
        return Err(Error::EmptyInput("no systems to benchmark".into()));
    }
    let runs = runs.max(1);
    let lower: Vec<Sentence> = corpus.iter().map(Sentence::lowercased).collect();
    let tokens: usize = lower.iter().map(Sentence::len).sum();
    let mut speeds = Vec::with_capacity(systems.len());
    for system in systems {
        let name = system.name();
        let fail = |e: Error| Error::Bench {
            system: name.clone(),
            reason: e.to_string(),
        };
        let pass = || -> Result<Vec<Sentence>> { lower.iter().map(|s| system.truecase(s)).collect() };
        let mut expected: Option<Vec<Sentence>> = None;
        for _ in 0..warmup {
            expected = Some(pass().map_err(fail)?);
        }
        let mut timings = Vec::with_capacity(runs);
        for _ in 0..runs {
            let start = Instant::now();
            let out = pass().map_err(fail)?;
            let secs = start.elapsed().as_secs_f64().max(1e-9);
            timings.push(tokens as f64 / secs);
            match &expected {
                Some(e) if *e != out => {
                    return Err(Error::Bench {
                        system: name.clone(),
                        reason: "outputs changed between runs".into(),
                    })
                }
                Some(_) => {}
                None => expected = Some(out),
            }
        }
        speeds.push(SystemSpeed {
            name: name.clone(),
            tokens_per_second: median(&timings),
            relative_speed: 0.0,
            runs: timings,
            param_count: None,
            float_bytes: None,
            quantized_bytes: None,
        });
    }
    let base = speeds[0].tokens_per_second;
    for s in &mut speeds {
        s.relative_speed = s.tokens_per_second / base;
    }
    Ok(BenchReport {
        reference: speeds[0].name.clone(),
        sentences: corpus.len(),
        tokens,
        batch_size: 1,
        threads: 1,
        systems: speeds,
    })
}

/// Hyper-parameters of the character-level comparison tagger.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharRnnConfig {
    pub embedding: usize,
    pub label_embedding: usize,
    pub enc_cells: usize,
    pub dec_cells: usize,
    pub fwd_enc_layers: usize,
    pub bwd_enc_layers: usize,
    pub dec_layers: usize,
    pub num_buckets: usize,
    pub beam: usize,
}

impl CharRnnConfig {
    /// Same widths and depths as a hierarchical configuration.
    pub fn matching(config: &ModelConfig) -> CharRnnConfig {
        CharRnnConfig {
            embedding: config.input_embedding,
            label_embedding: config.output_embedding,
            enc_cells: config.enc_cells,
            dec_cells: config.dec_cells,
            fwd_enc_layers: config.fwd_enc_layers,
            bwd_enc_layers: config.bwd_enc_layers,
            dec_layers: config.dec_layers,
            num_buckets: config.num_buckets,
            beam: config.beam,
        }
    }
}

/// Pure character-level truecaser: the whole sentence, spaces included, is
/// one character sequence labeled U/L by a bidirectional GRU encoder and GRU
/// label decoder. There is no word-level stage.
#[derive(Clone, Debug)]
pub struct CharRnn<T> {
    config: CharRnnConfig,
    params: Vec<T>,
    table: usize,
    tagger: SeqTagger,
}

struct CharSeq {
    buckets: Vec<u32>,
    forced: Vec<bool>,
}

impl<T: Real> CharRnn<T> {
    pub fn new(config: CharRnnConfig, seed: u64) -> CharRnn<T> {
        let mut layout = ParamLayout::new();
        let table = layout.add("embedding", &[config.num_buckets, config.embedding]);
        let tagger = SeqTagger::new(
            &mut layout,
            "char",
            config.embedding,
            config.enc_cells,
            config.fwd_enc_layers,
            config.bwd_enc_layers,
            config.label_embedding,
            config.dec_cells,
            config.dec_layers,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..layout.total()).map(|_| T::lit(rng.gen_range(-0.08..0.08))).collect();
        CharRnn {
            config,
            params,
            table,
            tagger,
        }
    }

    pub fn config(&self) -> &CharRnnConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    fn sequence(&self, lower: &Sentence) -> CharSeq {
        let mut buckets = Vec::new();
        let mut forced = Vec::new();
        for (i, tok) in lower.tokens().iter().enumerate() {
            if i > 0 {
                buckets.push(char_bucket(' ', self.config.num_buckets));
                forced.push(true);
            }
            for c in tok.chars() {
                buckets.push(char_bucket(c, self.config.num_buckets));
                forced.push(!is_cased(c));
            }
        }
        CharSeq { buckets, forced }
    }

    fn inputs(&self, buckets: &[u32]) -> Vec<T> {
        let e = self.config.embedding;
        let mut x = Vec::with_capacity(buckets.len() * e);
        for &b in buckets {
            let start = self.table + b as usize * e;
            x.extend_from_slice(&self.params[start..start + e]);
        }
        x
    }

    /// Negative log-likelihood of the gold character labels, with the
    /// gradient added into `grad` when given.
    pub fn loss_and_grad(&self, pair: &LabeledPair, grad: Option<&mut [T]>) -> Result<f64> {
        if pair.lower.is_empty() {
            return Err(Error::EmptyInput("sentence has no tokens".into()));
        }
        let seq = self.sequence(&pair.lower);
        let mut labels = Vec::with_capacity(seq.forced.len());
        for (i, cl) in pair.char_labels.iter().enumerate() {
            if i > 0 {
                labels.push(0);
            }
            labels.extend(cl.iter().map(|l| l.index()));
        }
        if labels.len() != seq.forced.len() {
            return Err(Error::LengthMismatch {
                expected: seq.forced.len(),
                found: labels.len(),
            });
        }
        let p = &self.params;
        let n = labels.len();
        let x = self.inputs(&seq.buckets);
        let enc = self.tagger.encoder.encode(p, &x, n);
        let mut sink = grad.map(GradSink::new);
        let (loss, d_enc, _) = self
            .tagger
            .decoder
            .decode_train(p, sink.as_mut(), &enc.out, &[], &labels, &seq.forced);
        if let Some(g) = sink.as_mut() {
            let dx = self.tagger.encoder.backward(p, g, &enc, &d_enc);
            let g = &mut *g.flat;
            let e = self.config.embedding;
            for (t, &b) in seq.buckets.iter().enumerate() {
                let start = self.table + b as usize * e;
                for (a, &v) in g[start..start + e].iter_mut().zip(&dx[t * e..(t + 1) * e]) {
                    *a += v;
                }
            }
        }
        Ok(loss)
    }

    fn decode(&self, lower: &Sentence) -> Result<Sentence> {
        if lower.is_empty() {
            return Ok(lower.clone());
        }
        let seq = self.sequence(lower);
        let n = seq.forced.len();
        let x = self.inputs(&seq.buckets);
        let enc = self.tagger.encoder.encode(&self.params, &x, n);
        let prep = self.tagger.decoder.prepare(&self.params, &enc.out, &[], n);
        let best = self
            .tagger
            .decoder
            .beam(&self.params, &prep, self.config.beam, &seq.forced)
            .swap_remove(0);
        let mut pos = 0;
        let mut out = Vec::with_capacity(lower.len());
        for (i, tok) in lower.tokens().iter().enumerate() {
            if i > 0 {
                pos += 1;
            }
            let len = tok.chars().count();
            let labels: Vec<CharLabel> = best.labels[pos..pos + len]
                .iter()
                .map(|&l| CharLabel::from_index(l as usize))
                .collect();
            out.push(apply_char_labels(tok, &labels)?);
            pos += len;
        }
        Sentence::from_tokens(out)
    }
}

impl<T: Real> Capitalizer for CharRnn<T> {
    fn name(&self) -> String {
        "char-rnn".into()
    }

    fn truecase(&self, sentence: &Sentence) -> Result<Sentence> {
        self.decode(&sentence.lowercased())
    }
}

/// Build the character-level comparison system at the widths of `config`.
pub fn char_rnn_reference(config: &ModelConfig, seed: u64) -> CharRnn<f32> {
    CharRnn::new(CharRnnConfig::matching(config), seed)
}
