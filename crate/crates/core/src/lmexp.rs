//! Case noisification and the n-gram language-model perplexity experiment.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textcore::{has_upper, lowercase, Capitalizer, Sentence};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisifyConfig {
    pub corruption_rate: f64,
    pub seed: u64,
}

impl NoisifyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.corruption_rate) {
            return Err(Error::Config("corruption rate must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Lowercase each token that contains an uppercase character with
/// probability `corruption_rate`. One draw is made per such token, in corpus
/// order.
pub fn noisify(corpus: &[Sentence], config: &NoisifyConfig) -> Result<Vec<Sentence>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    corpus
        .iter()
        .map(|s| {
            let tokens: Vec<String> = s
                .tokens()
                .iter()
                .map(|t| {
                    if has_upper(t) && rng.gen::<f64>() < config.corruption_rate {
                        lowercase(t)
                    } else {
                        t.clone()
                    }
                })
                .collect();
            Sentence::from_tokens(tokens)
        })
        .collect()
}

pub const UNK: &str = "<unk>";
pub const END: &str = "</s>";
pub const DEFAULT_K: f64 = 0.1;
pub const DEFAULT_MIN_COUNT: usize = 2;

const BOS: u32 = u32::MAX;

/// Trigram language model with interpolated add-k smoothing:
///
/// `P1(w) = (c(w) + k) / (N + kV)`,
/// `Pn(w | h) = (c(h, w) + kV · Pn-1(w | h')) / (c(h) + kV)`,
///
/// where `V` counts the predictable symbols (vocabulary, `<unk>`, `</s>`)
/// and `h'` drops the oldest history word. Each level sums to one because
/// the level below does.
#[derive(Clone, Debug)]
pub struct NgramLm {
    k: f64,
    vocab: HashMap<String, u32>,
    words: Vec<String>,
    unigram: Vec<u64>,
    total: u64,
    bigram: HashMap<(u32, u32), u64>,
    bigram_ctx: HashMap<u32, u64>,
    trigram: HashMap<(u32, u32, u32), u64>,
    trigram_ctx: HashMap<(u32, u32), u64>,
}

impl NgramLm {
    pub const ORDER: usize = 3;

    pub fn train(corpus: &[Sentence], k: f64, min_count: usize) -> Result<NgramLm> {
        if k.is_nan() || k <= 0.0 {
            return Err(Error::Config("add-k constant must be positive".into()));
        }
        let mut freq: HashMap<&str, usize> = HashMap::new();
        for s in corpus {
            for t in s.tokens() {
                *freq.entry(t.as_str()).or_default() += 1;
            }
        }
        if corpus.iter().all(Sentence::is_empty) {
            return Err(Error::EmptyInput("language-model corpus has no tokens".into()));
        }
        let mut kept: Vec<&str> = freq.iter().filter(|(_, &n)| n >= min_count).map(|(w, _)| *w).collect();
        kept.sort_unstable();
        let mut words = vec![UNK.to_string(), END.to_string()];
        words.extend(kept.iter().map(|w| w.to_string()));
        let vocab: HashMap<String, u32> = words.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        let mut lm = NgramLm {
            k,
            vocab,
            unigram: vec![0; words.len()],
            words,
            total: 0,
            bigram: HashMap::new(),
            bigram_ctx: HashMap::new(),
            trigram: HashMap::new(),
            trigram_ctx: HashMap::new(),
        };
        for s in corpus {
            let ids = lm.encode(s);
            let (mut u, mut v) = (BOS, BOS);
            for w in ids {
                lm.unigram[w as usize] += 1;
                lm.total += 1;
                *lm.bigram.entry((v, w)).or_default() += 1;
                *lm.bigram_ctx.entry(v).or_default() += 1;
                *lm.trigram.entry((u, v, w)).or_default() += 1;
                *lm.trigram_ctx.entry((u, v)).or_default() += 1;
                u = v;
                v = w;
            }
        }
        Ok(lm)
    }

    /// Number of predictable symbols, `<unk>` and `</s>` included.
    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn predictable(&self) -> &[String] {
        &self.words
    }

    fn id(&self, word: &str) -> u32 {
        self.vocab.get(word).copied().unwrap_or(0)
    }

    /// Word ids followed by `</s>`.
    fn encode(&self, s: &Sentence) -> Vec<u32> {
        let mut ids: Vec<u32> = s.tokens().iter().map(|t| self.id(t)).collect();
        ids.push(1);
        ids
    }

    fn prob_ids(&self, u: u32, v: u32, w: u32) -> f64 {
        let kv = self.k * self.words.len() as f64;
        let p1 = (self.unigram[w as usize] as f64 + self.k) / (self.total as f64 + kv);
        let c2 = self.bigram.get(&(v, w)).copied().unwrap_or(0) as f64;
        let h2 = self.bigram_ctx.get(&v).copied().unwrap_or(0) as f64;
        let p2 = (c2 + kv * p1) / (h2 + kv);
        let c3 = self.trigram.get(&(u, v, w)).copied().unwrap_or(0) as f64;
        let h3 = self.trigram_ctx.get(&(u, v)).copied().unwrap_or(0) as f64;
        (c3 + kv * p2) / (h3 + kv)
    }

    /// `P(word | history)`; only the last two history words matter and a
    /// shorter history is padded with sentence starts. Unknown words map to
    /// `<unk>`.
    pub fn prob(&self, history: &[&str], word: &str) -> f64 {
        let id = |i: usize| -> u32 {
            if i < history.len() {
                self.id(history[history.len() - 1 - i])
            } else {
                BOS
            }
        };
        self.prob_ids(id(1), id(0), self.id(word))
    }

    pub fn perplexity(&self, corpus: &[Sentence]) -> Result<PerplexityReport> {
        let mut nll = 0.0;
        let mut tokens = 0usize;
        let mut oov = 0usize;
        let mut words = 0usize;
        for s in corpus {
            for t in s.tokens() {
                words += 1;
                oov += usize::from(!self.vocab.contains_key(t.as_str()) || t == UNK || t == END);
            }
            let (mut u, mut v) = (BOS, BOS);
            for w in self.encode(s) {
                nll -= self.prob_ids(u, v, w).ln();
                tokens += 1;
                u = v;
                v = w;
            }
        }
        if words == 0 {
            return Err(Error::EmptyInput("evaluation corpus has no tokens".into()));
        }
        Ok(PerplexityReport {
            perplexity: (nll / tokens as f64).exp(),
            oov_rate: oov as f64 / words as f64,
            token_count: tokens,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerplexityReport {
    pub perplexity: f64,
    /// Fraction of evaluation words outside the vocabulary.
    pub oov_rate: f64,
    /// Predicted symbols, end-of-sentence included.
    pub token_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmExperiment {
    pub seed: u64,
    pub k: f64,
    pub min_count: usize,
    pub normalizer: String,
    pub arms: BTreeMap<String, PerplexityReport>,
}

fn percent(rate: f64) -> String {
    format!("{}", (rate * 100.0).round() as i64)
}

pub fn corrupt_arm(rate: f64) -> String {
    format!("corrupt-{}", percent(rate))
}

pub fn normalized_arm(rate: f64) -> String {
    format!("normalized-{}", percent(rate))
}

pub const ORACLE_ARM: &str = "oracle";

/// Re-case a corrupted corpus: the capitalizer sees each whole sentence,
/// and its output replaces the tokens that are lowercase in the corrupted
/// text. Tokens that still carry uppercase were not corrupted and are kept.
pub fn normalize(corrupted: &[Sentence], normalizer: &dyn Capitalizer) -> Result<Vec<Sentence>> {
    corrupted
        .iter()
        .map(|s| {
            let recased = normalizer.truecase(s)?;
            let tokens: Vec<String> = s
                .tokens()
                .iter()
                .zip(recased.tokens())
                .map(|(orig, new)| if has_upper(orig) { orig.clone() } else { new.clone() })
                .collect();
            Sentence::from_tokens(tokens)
        })
        .collect()
}

/// For each rate, train one LM on the corrupted training text and one on the
/// normalized corrupted text; plus one on the original text. All are scored
/// on the clean evaluation text.
pub fn run_lm_experiment(
    train: &[Sentence],
    eval: &[Sentence],
    normalizer: &dyn Capitalizer,
    rates: &[f64],
    seed: u64,
) -> Result<LmExperiment> {
    if train.is_empty() || eval.is_empty() {
        return Err(Error::EmptyInput("language-model experiment needs train and eval text".into()));
    }
    let (k, min_count) = (DEFAULT_K, DEFAULT_MIN_COUNT);
    let score = |corpus: &[Sentence]| -> Result<PerplexityReport> { NgramLm::train(corpus, k, min_count)?.perplexity(eval) };
    let mut arms = BTreeMap::new();
    for &rate in rates {
        let corrupted = noisify(
            train,
            &NoisifyConfig {
                corruption_rate: rate,
                seed,
            },
        )?;
        arms.insert(corrupt_arm(rate), score(&corrupted)?);
        arms.insert(normalized_arm(rate), score(&normalize(&corrupted, normalizer)?)?);
    }
    arms.insert(ORACLE_ARM.into(), score(train)?);
    Ok(LmExperiment {
        seed,
        k,
        min_count,
        normalizer: normalizer.name(),
        arms,
    })
}
