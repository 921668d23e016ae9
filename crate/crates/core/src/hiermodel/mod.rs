//! Two-level truecaser: a word tagger decides SELF (copy) or OTHER for each
//! word, and a character transducer re-cases the OTHER words one character at
//! a time, conditioned on a context vector projected from the word encoders.

mod io;
pub mod tagger;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{char_bucket, ngram_buckets, FeatureConfig};
use crate::neuralnet::gru::GradSink;
use crate::neuralnet::{log_add, matmul, ParamLayout, Real};
use crate::textcore::{apply_labels, is_cased, Capitalizer, CharLabel, LabeledPair, Sentence, WordLabel};

pub use io::{read_model_manifest, ModelManifest};
use tagger::{BiEncoder, LabelDecoder, Prepared, Scored};

/// Network hyper-parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub preset: String,
    pub input_embedding: usize,
    pub output_embedding: usize,
    pub fwd_enc_layers: usize,
    pub bwd_enc_layers: usize,
    pub dec_layers: usize,
    pub enc_cells: usize,
    pub dec_cells: usize,
    pub max_ngram_order: usize,
    pub num_buckets: usize,
    pub beam: usize,
    /// Width of the word context vector handed to the character decoder.
    pub context_dim: usize,
    #[serde(default)]
    pub dedup_ngrams: bool,
    /// Longer inputs are split into chunks of this many words for inference.
    pub max_sentence_words: usize,
}

impl ModelConfig {
    pub fn teacher() -> ModelConfig {
        ModelConfig {
            preset: "teacher".into(),
            input_embedding: 512,
            output_embedding: 512,
            fwd_enc_layers: 2,
            bwd_enc_layers: 2,
            dec_layers: 2,
            enc_cells: 512,
            dec_cells: 512,
            max_ngram_order: 3,
            num_buckets: 5000,
            beam: 2,
            context_dim: 256,
            dedup_ngrams: false,
            max_sentence_words: 200,
        }
    }

    pub fn student() -> ModelConfig {
        ModelConfig {
            preset: "student".into(),
            input_embedding: 128,
            output_embedding: 128,
            fwd_enc_layers: 1,
            bwd_enc_layers: 1,
            dec_layers: 1,
            enc_cells: 128,
            dec_cells: 128,
            max_ngram_order: 3,
            num_buckets: 5000,
            beam: 2,
            context_dim: 64,
            dedup_ngrams: false,
            max_sentence_words: 200,
        }
    }

    pub fn preset(name: &str) -> Result<ModelConfig> {
        match name {
            "teacher" => Ok(ModelConfig::teacher()),
            "student" => Ok(ModelConfig::student()),
            other => Err(Error::Config(format!("unknown preset {other:?} (expected teacher or student)"))),
        }
    }

    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            max_ngram_order: self.max_ngram_order,
            num_buckets: self.num_buckets,
            embedding_dim: self.input_embedding,
            dedup: self.dedup_ngrams,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("input_embedding", self.input_embedding),
            ("output_embedding", self.output_embedding),
            ("fwd_enc_layers", self.fwd_enc_layers),
            ("bwd_enc_layers", self.bwd_enc_layers),
            ("dec_layers", self.dec_layers),
            ("enc_cells", self.enc_cells),
            ("dec_cells", self.dec_cells),
            ("max_ngram_order", self.max_ngram_order),
            ("num_buckets", self.num_buckets),
            ("beam", self.beam),
            ("context_dim", self.context_dim),
            ("max_sentence_words", self.max_sentence_words),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeMode {
    /// Top word-label hypothesis, then the best character path per OTHER word.
    BestPath,
    /// Sum probability mass over the word-label beam per distinct output.
    FullBeam,
}

impl std::str::FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<DecodeMode> {
        match s {
            "best-path" => Ok(DecodeMode::BestPath),
            "full-beam" => Ok(DecodeMode::FullBeam),
            other => Err(Error::Config(format!("unknown decode mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis<L> {
    pub labels: Vec<L>,
    /// Cumulative log-probability.
    pub score: f64,
}

/// Hypotheses sorted best first.
#[derive(Clone, Debug, PartialEq)]
pub struct Beam<L> {
    pub hypotheses: Vec<Hypothesis<L>>,
}

impl<L: Copy> Beam<L> {
    fn from_scored(v: Vec<Scored>, f: impl Fn(usize) -> L) -> Beam<L> {
        Beam {
            hypotheses: v
                .into_iter()
                .map(|s| Hypothesis {
                    labels: s.labels.iter().map(|&l| f(l as usize)).collect(),
                    score: s.score,
                })
                .collect(),
        }
    }

    pub fn best(&self) -> &Hypothesis<L> {
        &self.hypotheses[0]
    }
}

/// Truecased output with the model score of the chosen hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub sentence: Sentence,
    /// Joint log-probability of the best path, or the summed probability of
    /// all beam paths producing this output in full-beam mode.
    pub score: f64,
}

/// Per-sentence state shared by the word and character decoders.
struct Analysis<T> {
    words: Vec<String>,
    word_prep: Prepared<T>,
    /// `n x context_dim`
    ctx: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct HierModel<T> {
    config: ModelConfig,
    features: FeatureConfig,
    layout: ParamLayout,
    params: Vec<T>,
    seed: u64,
    table: usize,
    encoder: BiEncoder,
    word: LabelDecoder,
    ctx_w: usize,
    ctx_b: usize,
    chars: LabelDecoder,
}

impl<T: Real> HierModel<T> {
    /// Parameters drawn uniformly from (-0.08, 0.08).
    pub fn new(config: ModelConfig, seed: u64) -> Result<HierModel<T>> {
        let mut m = HierModel::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in m.params.iter_mut() {
            *v = T::lit(rng.gen_range(-0.08..0.08));
        }
        m.seed = seed;
        Ok(m)
    }

    /// All-zero parameters: every decision is a tie, so the model copies its
    /// input.
    pub fn zeros(config: ModelConfig) -> Result<HierModel<T>> {
        config.validate()?;
        let features = config.features();
        let mut layout = ParamLayout::new();
        let (e, h, o, d, c) = (
            config.input_embedding,
            config.enc_cells,
            config.output_embedding,
            config.dec_cells,
            config.context_dim,
        );
        let table = layout.add("embedding", &[config.num_buckets, e]);
        let encoder = BiEncoder::new(&mut layout, "encoder", e, h, config.fwd_enc_layers, config.bwd_enc_layers);
        let word = LabelDecoder::new(&mut layout, "word", 2 * h, 0, o, d, config.dec_layers);
        let ctx_w = layout.add("context.w", &[2 * h, c]);
        let ctx_b = layout.add("context.b", &[c]);
        let chars = LabelDecoder::new(&mut layout, "char", 2 * h, c, o, d, config.dec_layers);
        let params = vec![T::zero(); layout.total()];
        Ok(HierModel {
            config,
            features,
            layout,
            params,
            seed: 0,
            table,
            encoder,
            word,
            ctx_w,
            ctx_b,
            chars,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn feature_config(&self) -> &FeatureConfig {
        &self.features
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.layout.total()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    /// Replace all parameters, e.g. with a converted copy.
    pub fn set_params(&mut self, params: Vec<T>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::LengthMismatch {
                expected: self.params.len(),
                found: params.len(),
            });
        }
        self.params = params;
        Ok(())
    }

    /// Copy with a different element type.
    pub fn cast<U: Real>(&self) -> HierModel<U> {
        let mut m = HierModel::<U>::zeros(self.config.clone()).expect("config already validated");
        m.params = self.params.iter().map(|v| U::lit(v.as_f64())).collect();
        m.seed = self.seed;
        m
    }

    fn embedding_row(&self, bucket: u32) -> &[T] {
        let e = self.config.input_embedding;
        let start = self.table + bucket as usize * e;
        &self.params[start..start + e]
    }

    fn word_buckets(&self, words: &[String]) -> Result<Vec<Vec<u32>>> {
        words.iter().map(|w| ngram_buckets(w, &self.features)).collect()
    }

    fn sum_rows(&self, buckets: &[Vec<u32>]) -> Vec<T> {
        let e = self.config.input_embedding;
        let mut x = vec![T::zero(); buckets.len() * e];
        for (i, bs) in buckets.iter().enumerate() {
            let row = &mut x[i * e..(i + 1) * e];
            for &b in bs {
                for (a, &v) in row.iter_mut().zip(self.embedding_row(b)) {
                    *a += v;
                }
            }
        }
        x
    }

    fn scatter_rows(&self, g: &mut [T], buckets: &[Vec<u32>], dx: &[T]) {
        let e = self.config.input_embedding;
        for (i, bs) in buckets.iter().enumerate() {
            let d = &dx[i * e..(i + 1) * e];
            for &b in bs {
                let start = self.table + b as usize * e;
                for (a, &v) in g[start..start + e].iter_mut().zip(d) {
                    *a += v;
                }
            }
        }
    }

    /// Character inputs of one lowercase word: one bucket per character and
    /// the mask of caseless positions.
    fn char_buckets(&self, word: &str) -> (Vec<Vec<u32>>, Vec<bool>) {
        word.chars()
            .map(|c| (vec![char_bucket(c, self.config.num_buckets)], !is_cased(c)))
            .unzip()
    }

    fn context(&self, enc: &[T], n: usize) -> Vec<T> {
        let (h2, c) = (2 * self.config.enc_cells, self.config.context_dim);
        let mut ctx = Vec::with_capacity(n * c);
        for _ in 0..n {
            ctx.extend_from_slice(&self.params[self.ctx_b..self.ctx_b + c]);
        }
        matmul(n, h2, c, enc, h2, &self.params[self.ctx_w..self.ctx_w + h2 * c], c, 0, &mut ctx, c, true);
        ctx
    }

    fn analyze(&self, lower: &Sentence) -> Result<Analysis<T>> {
        if lower.is_empty() {
            return Err(Error::EmptyInput("sentence has no tokens".into()));
        }
        let words: Vec<String> = lower.tokens().to_vec();
        let n = words.len();
        let x = self.sum_rows(&self.word_buckets(&words)?);
        let enc = self.encoder.encode(&self.params, &x, n);
        let ctx = self.context(&enc.out, n);
        let word_prep = self.word.prepare(&self.params, &enc.out, &[], n);
        Ok(Analysis { words, word_prep, ctx })
    }

    fn char_prepare_with(&self, word: &str, ctx: &[T]) -> (Prepared<T>, Vec<bool>) {
        let (buckets, forced) = self.char_buckets(word);
        let len = forced.len();
        let x = self.sum_rows(&buckets);
        let enc = self.encoder.encode(&self.params, &x, len);
        let rep: Vec<T> = (0..len).flat_map(|_| ctx.iter().copied()).collect();
        (self.chars.prepare(&self.params, &enc.out, &rep, len), forced)
    }

    fn char_prepare(&self, a: &Analysis<T>, i: usize) -> (Prepared<T>, Vec<bool>) {
        let c = self.config.context_dim;
        self.char_prepare_with(&a.words[i], &a.ctx[i * c..(i + 1) * c])
    }

    fn lower_checked(s: &Sentence) -> Sentence {
        s.lowercased()
    }

    /// Log-probabilities `[SELF, OTHER]` for the word after `prefix`.
    pub fn word_tag_logprobs(&self, sentence: &Sentence, prefix: &[WordLabel]) -> Result<[f64; 2]> {
        let lower = Self::lower_checked(sentence);
        if prefix.len() >= lower.len() {
            return Err(Error::IndexOutOfRange {
                index: prefix.len(),
                len: lower.len(),
            });
        }
        let a = self.analyze(&lower)?;
        let pre: Vec<u8> = prefix.iter().map(|l| l.index() as u8).collect();
        Ok(self.word.next_logprobs(&self.params, &a.word_prep, &pre, &vec![false; lower.len()]))
    }

    /// Log-probabilities `[L, U]` for character `prefix.len()` of word `i`.
    pub fn char_transduce_logprobs(&self, sentence: &Sentence, i: usize, prefix: &[CharLabel]) -> Result<[f64; 2]> {
        let lower = Self::lower_checked(sentence);
        if i >= lower.len() {
            return Err(Error::IndexOutOfRange { index: i, len: lower.len() });
        }
        let a = self.analyze(&lower)?;
        let c = self.config.context_dim;
        self.char_logprobs_with_context(&a.words[i], &a.ctx[i * c..(i + 1) * c], prefix)
    }

    /// Word context vectors, one row per word.
    pub fn context_vectors(&self, sentence: &Sentence) -> Result<Vec<Vec<T>>> {
        let a = self.analyze(&Self::lower_checked(sentence))?;
        Ok(a.ctx.chunks(self.config.context_dim).map(<[T]>::to_vec).collect())
    }

    /// Character decoder log-probabilities for a single word under an
    /// explicit context vector. Nothing else about the sentence is visible.
    pub fn char_logprobs_with_context(&self, word: &str, ctx: &[T], prefix: &[CharLabel]) -> Result<[f64; 2]> {
        if ctx.len() != self.config.context_dim {
            return Err(Error::Dimension(format!(
                "context has {} values, expected {}",
                ctx.len(),
                self.config.context_dim
            )));
        }
        let word = crate::textcore::lowercase(word);
        let len = word.chars().count();
        if len == 0 {
            return Err(Error::EmptyToken);
        }
        if prefix.len() >= len {
            return Err(Error::IndexOutOfRange {
                index: prefix.len(),
                len,
            });
        }
        let (prep, forced) = self.char_prepare_with(&word, ctx);
        let pre: Vec<u8> = prefix.iter().map(|l| l.index() as u8).collect();
        Ok(self.chars.next_logprobs(&self.params, &prep, &pre, &forced))
    }

    /// Joint log-probability of a full word-label sequence.
    pub fn word_sequence_score(&self, sentence: &Sentence, labels: &[WordLabel]) -> Result<f64> {
        let lower = Self::lower_checked(sentence);
        if labels.len() != lower.len() {
            return Err(Error::LengthMismatch {
                expected: lower.len(),
                found: labels.len(),
            });
        }
        let a = self.analyze(&lower)?;
        let l: Vec<u8> = labels.iter().map(|l| l.index() as u8).collect();
        Ok(self.word.sequence_score(&self.params, &a.word_prep, &l, &vec![false; l.len()]))
    }

    /// Joint log-probability of a full character-label sequence of word `i`.
    pub fn char_sequence_score(&self, sentence: &Sentence, i: usize, labels: &[CharLabel]) -> Result<f64> {
        let lower = Self::lower_checked(sentence);
        if i >= lower.len() {
            return Err(Error::IndexOutOfRange { index: i, len: lower.len() });
        }
        let a = self.analyze(&lower)?;
        let (prep, forced) = self.char_prepare(&a, i);
        if labels.len() != forced.len() {
            return Err(Error::LengthMismatch {
                expected: forced.len(),
                found: labels.len(),
            });
        }
        let l: Vec<u8> = labels.iter().map(|l| l.index() as u8).collect();
        Ok(self.chars.sequence_score(&self.params, &prep, &l, &forced))
    }

    pub fn beam_search_words(&self, sentence: &Sentence, beam: usize) -> Result<Beam<WordLabel>> {
        let a = self.analyze(&Self::lower_checked(sentence))?;
        let n = a.words.len();
        let v = self.word.beam(&self.params, &a.word_prep, beam, &vec![false; n]);
        Ok(Beam::from_scored(v, WordLabel::from_index))
    }

    pub fn beam_search_chars(&self, sentence: &Sentence, i: usize, beam: usize) -> Result<Beam<CharLabel>> {
        let lower = Self::lower_checked(sentence);
        if i >= lower.len() {
            return Err(Error::IndexOutOfRange { index: i, len: lower.len() });
        }
        let a = self.analyze(&lower)?;
        let (prep, forced) = self.char_prepare(&a, i);
        let v = self.chars.beam(&self.params, &prep, beam, &forced);
        Ok(Beam::from_scored(v, CharLabel::from_index))
    }

    fn best_chars(&self, a: &Analysis<T>, i: usize, beam: usize) -> Scored {
        let (prep, forced) = self.char_prepare(a, i);
        self.chars
            .beam(&self.params, &prep, beam, &forced)
            .into_iter()
            .next()
            .expect("beam is never empty")
    }

    fn decode_chunk(&self, lower: &Sentence, mode: DecodeMode, beam: usize) -> Result<Decoded> {
        let a = self.analyze(lower)?;
        let n = a.words.len();
        let hyps = self.word.beam(&self.params, &a.word_prep, beam, &vec![false; n]);
        let mut char_cache: Vec<Option<Scored>> = vec![None; n];
        let mut realize = |h: &Scored| -> Result<(Sentence, f64)> {
            let mut score = h.score;
            let mut cl: Vec<Vec<CharLabel>> = vec![Vec::new(); n];
            let wl: Vec<WordLabel> = h.labels.iter().map(|&l| WordLabel::from_index(l as usize)).collect();
            for i in 0..n {
                if wl[i] == WordLabel::Other {
                    let best = char_cache[i].get_or_insert_with(|| self.best_chars(&a, i, beam));
                    score += best.score;
                    cl[i] = best.labels.iter().map(|&l| CharLabel::from_index(l as usize)).collect();
                }
            }
            Ok((apply_labels(lower, &wl, &cl)?, score))
        };
        match mode {
            DecodeMode::BestPath => {
                let (sentence, score) = realize(&hyps[0])?;
                Ok(Decoded { sentence, score })
            }
            DecodeMode::FullBeam => {
                let mut groups: Vec<(Sentence, f64)> = Vec::new();
                for h in &hyps {
                    let (s, score) = realize(h)?;
                    match groups.iter_mut().find(|(g, _)| *g == s) {
                        Some(entry) => entry.1 = log_add(entry.1, score),
                        None => groups.push((s, score)),
                    }
                }
                let mut best = 0;
                for (k, g) in groups.iter().enumerate() {
                    if g.1 > groups[best].1 {
                        best = k;
                    }
                }
                let (sentence, score) = groups.swap_remove(best);
                Ok(Decoded { sentence, score })
            }
        }
    }

    /// Truecase a sentence. The input is lowercased first, so the output
    /// always lowercases back to the lowercased input.
    pub fn truecase_scored(&self, sentence: &Sentence, mode: DecodeMode, beam: usize) -> Result<Decoded> {
        let lower = sentence.lowercased();
        if lower.is_empty() {
            return Ok(Decoded {
                sentence: lower,
                score: 0.0,
            });
        }
        let mut parts = Vec::new();
        let mut score = 0.0;
        for chunk in lower.chunks(self.config.max_sentence_words) {
            let d = self.decode_chunk(&chunk, mode, beam.max(1))?;
            score += d.score;
            parts.push(d.sentence);
        }
        Ok(Decoded {
            sentence: Sentence::concat(parts),
            score,
        })
    }

    pub fn truecase(&self, sentence: &Sentence, mode: DecodeMode) -> Result<Sentence> {
        Ok(self.truecase_scored(sentence, mode, self.config.beam)?.sentence)
    }

    /// Negative log-likelihood of the gold labels:
    /// `-(log P(C|X) + Σ_{OTHER words} log P(y_i|X))`.
    pub fn sentence_loss(&self, pair: &LabeledPair) -> Result<f64> {
        self.loss_and_grad(pair, None)
    }

    /// Sentence loss, with the gradient added into `grad` when given.
    pub fn loss_and_grad(&self, pair: &LabeledPair, grad: Option<&mut [T]>) -> Result<f64> {
        let n = pair.lower.len();
        if n == 0 {
            return Err(Error::EmptyInput("sentence has no tokens".into()));
        }
        if pair.word_labels.len() != n || pair.char_labels.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: pair.word_labels.len().min(pair.char_labels.len()),
            });
        }
        if let Some(g) = grad.as_deref() {
            if g.len() != self.params.len() {
                return Err(Error::LengthMismatch {
                    expected: self.params.len(),
                    found: g.len(),
                });
            }
        }
        let p = &self.params;
        let (h2, c) = (2 * self.config.enc_cells, self.config.context_dim);
        let word_buckets = self.word_buckets(pair.lower.tokens())?;
        let x = self.sum_rows(&word_buckets);
        let enc = self.encoder.encode(p, &x, n);
        let ctx = self.context(&enc.out, n);
        let wl: Vec<usize> = pair.word_labels.iter().map(|l| l.index()).collect();
        let mut sink = grad.map(GradSink::new);
        let (mut loss, mut d_enc, _) = self.word.decode_train(p, sink.as_mut(), &enc.out, &[], &wl, &vec![false; n]);
        let mut d_ctx = vec![T::zero(); n * c];
        for i in 0..n {
            if pair.word_labels[i] != WordLabel::Other {
                continue;
            }
            let word = &pair.lower.tokens()[i];
            let (buckets, forced) = self.char_buckets(word);
            let len = forced.len();
            if pair.char_labels[i].len() != len {
                return Err(Error::LengthMismatch {
                    expected: len,
                    found: pair.char_labels[i].len(),
                });
            }
            let cl: Vec<usize> = pair.char_labels[i].iter().map(|l| l.index()).collect();
            let xc = self.sum_rows(&buckets);
            let ce = self.encoder.encode(p, &xc, len);
            let rep: Vec<T> = (0..len).flat_map(|_| ctx[i * c..(i + 1) * c].iter().copied()).collect();
            let (lc, dce, dcc) = self.chars.decode_train(p, sink.as_mut(), &ce.out, &rep, &cl, &forced);
            loss += lc;
            if let Some(g) = sink.as_mut() {
                let dxc = self.encoder.backward(p, g, &ce, &dce);
                self.scatter_rows(g.flat, &buckets, &dxc);
                let acc = &mut d_ctx[i * c..(i + 1) * c];
                for row in dcc.chunks_exact(c) {
                    for (a, &b) in acc.iter_mut().zip(row) {
                        *a += b;
                    }
                }
            }
        }
        if let Some(g) = sink.as_mut() {
            // context = enc · Wc + bc
            T::gemm(h2, n, c, &enc.out, 1, h2, &d_ctx, c, 1, T::one(), &mut g.flat[self.ctx_w..], c, 1);
            for row in d_ctx.chunks_exact(c) {
                for (a, &b) in g.flat[self.ctx_b..self.ctx_b + c].iter_mut().zip(row) {
                    *a += b;
                }
            }
            T::gemm(n, c, h2, &d_ctx, c, 1, &p[self.ctx_w..], 1, c, T::one(), &mut d_enc, h2, 1);
            let dx = self.encoder.backward(p, g, &enc, &d_enc);
            self.scatter_rows(g.flat, &word_buckets, &dx);
        }
        drop(sink);
        if !loss.is_finite() {
            return Err(Error::NonFinite("sentence loss".into()));
        }
        Ok(loss)
    }
}

/// A model paired with a decoding mode and beam width.
#[derive(Clone, Copy, Debug)]
pub struct Truecaser<'a, T> {
    pub model: &'a HierModel<T>,
    pub mode: DecodeMode,
    pub beam: usize,
}

impl<'a, T: Real> Truecaser<'a, T> {
    pub fn new(model: &'a HierModel<T>, mode: DecodeMode) -> Truecaser<'a, T> {
        Truecaser {
            model,
            mode,
            beam: model.config.beam,
        }
    }
}

impl<T: Real> Capitalizer for Truecaser<'_, T> {
    fn name(&self) -> String {
        format!("hier-{}", self.model.config.preset)
    }

    fn truecase(&self, sentence: &Sentence) -> Result<Sentence> {
        Ok(self.model.truecase_scored(sentence, self.mode, self.beam)?.sentence)
    }
}

impl<T: Real> Capitalizer for HierModel<T> {
    fn name(&self) -> String {
        format!("hier-{}", self.config.preset)
    }

    fn truecase(&self, sentence: &Sentence) -> Result<Sentence> {
        HierModel::truecase(self, sentence, DecodeMode::BestPath)
    }
}

#[cfg(test)]
mod tests;
