//! Tokenized sentences, case labels, and the case mapping used throughout
//! the crate.
//!
//! Case mapping is per Unicode scalar value. A character is *cased* when its
//! lowercase form `l` has a single-scalar uppercase form `u != l` whose own
//! lowercase form is `l` again. Everything else (digits, punctuation, `ß`,
//! unicameral scripts, characters whose mappings expand) is caseless and is
//! always labeled [`CharLabel::Lower`].

use std::fmt;

use crate::error::{Error, Result};

/// A whitespace-tokenized sentence. Tokens are never empty and never contain
/// whitespace.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Sentence {
    tokens: Vec<String>,
}

impl Sentence {
    /// Split a line on whitespace.
    pub fn parse(line: &str) -> Sentence {
        Sentence {
            tokens: line.split_whitespace().map(str::to_owned).collect(),
        }
    }

    /// Build from tokens, rejecting empty tokens and tokens with whitespace.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Sentence>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        for t in &tokens {
            if t.is_empty() {
                return Err(Error::EmptyToken);
            }
            if t.chars().any(char::is_whitespace) {
                return Err(Error::InvalidToken(t.clone()));
            }
        }
        Ok(Sentence { tokens })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.tokens
    }

    /// Per-token [`lowercase`].
    pub fn lowercased(&self) -> Sentence {
        Sentence {
            tokens: self.tokens.iter().map(|t| lowercase(t)).collect(),
        }
    }

    /// Split into consecutive chunks of at most `max_len` tokens.
    pub fn chunks(&self, max_len: usize) -> Vec<Sentence> {
        self.tokens
            .chunks(max_len.max(1))
            .map(|c| Sentence { tokens: c.to_vec() })
            .collect()
    }

    /// Concatenate sentences token-wise.
    pub fn concat(parts: Vec<Sentence>) -> Sentence {
        Sentence {
            tokens: parts.into_iter().flat_map(|s| s.tokens).collect(),
        }
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

/// Word-level gate: copy the lowercase input (`Same`, SELF) or re-case it
/// with the character transducer (`Other`, OTHER).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WordLabel {
    Same,
    Other,
}

impl WordLabel {
    pub fn index(self) -> usize {
        match self {
            WordLabel::Same => 0,
            WordLabel::Other => 1,
        }
    }

    pub fn from_index(i: usize) -> WordLabel {
        if i == 0 {
            WordLabel::Same
        } else {
            WordLabel::Other
        }
    }
}

impl fmt::Display for WordLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WordLabel::Same => "SELF",
            WordLabel::Other => "OTHER",
        })
    }
}

/// Character-level class: uppercase or lowercase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CharLabel {
    Lower,
    Upper,
}

impl CharLabel {
    pub fn index(self) -> usize {
        match self {
            CharLabel::Lower => 0,
            CharLabel::Upper => 1,
        }
    }

    pub fn from_index(i: usize) -> CharLabel {
        if i == 0 {
            CharLabel::Lower
        } else {
            CharLabel::Upper
        }
    }
}

impl fmt::Display for CharLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CharLabel::Lower => "L",
            CharLabel::Upper => "U",
        })
    }
}

/// Word case taxonomy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WordClass {
    /// all lowercase
    Lc,
    /// first letter uppercase
    Uc,
    /// all caps
    Ca,
    /// mixed case
    Mc,
}

impl WordClass {
    pub const ALL: [WordClass; 4] = [WordClass::Lc, WordClass::Uc, WordClass::Ca, WordClass::Mc];

    pub fn name(self) -> &'static str {
        match self {
            WordClass::Lc => "LC",
            WordClass::Uc => "UC",
            WordClass::Ca => "CA",
            WordClass::Mc => "MC",
        }
    }
}

impl fmt::Display for WordClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn single<I: Iterator<Item = char>>(mut it: I) -> Option<char> {
    let c = it.next()?;
    match it.next() {
        None => Some(c),
        Some(_) => None,
    }
}

/// Single-scalar lowercase mapping; characters whose lowercase expands map
/// to themselves.
pub fn lower_char(c: char) -> char {
    single(c.to_lowercase()).unwrap_or(c)
}

/// Uppercase partner of a lowercase cased character, if any.
pub fn upper_char(c: char) -> Option<char> {
    if lower_char(c) != c {
        return None;
    }
    let u = single(c.to_uppercase())?;
    (u != c && lower_char(u) == c).then_some(u)
}

/// True when `c` takes part in the U/L distinction.
pub fn is_cased(c: char) -> bool {
    upper_char(lower_char(c)).is_some()
}

/// True when `c` is the uppercase half of a cased pair.
pub fn is_upper(c: char) -> bool {
    let l = lower_char(c);
    l != c && upper_char(l) == Some(c)
}

/// Lowercase a token scalar by scalar.
pub fn lowercase(token: &str) -> String {
    token.chars().map(lower_char).collect()
}

/// Token contains at least one uppercase character.
pub fn has_upper(token: &str) -> bool {
    token.chars().any(is_upper)
}

/// Parallel lowercase/gold sentence with the observed latent labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledPair {
    pub lower: Sentence,
    pub gold: Sentence,
    pub word_labels: Vec<WordLabel>,
    pub char_labels: Vec<Vec<CharLabel>>,
}

impl LabeledPair {
    /// Derive the lowercase side from a cased sentence and label it.
    pub fn from_gold(gold: &Sentence) -> Result<LabeledPair> {
        derive_labels(&gold.lowercased(), gold)
    }
}

/// Label a (lowercase, gold) pair.
pub fn derive_labels(lower: &Sentence, gold: &Sentence) -> Result<LabeledPair> {
    if lower.len() != gold.len() {
        return Err(Error::TokenCountMismatch {
            left: lower.len(),
            right: gold.len(),
        });
    }
    let mut word_labels = Vec::with_capacity(lower.len());
    let mut char_labels = Vec::with_capacity(lower.len());
    for (i, (x, y)) in lower.tokens().iter().zip(gold.tokens()).enumerate() {
        if lowercase(y) != *x || x.chars().count() != y.chars().count() {
            return Err(Error::NotCaseVariant { position: i });
        }
        let mut labels = Vec::with_capacity(x.len());
        for (lc, gc) in x.chars().zip(y.chars()) {
            if lc == gc {
                labels.push(CharLabel::Lower);
            } else if upper_char(lc) == Some(gc) {
                labels.push(CharLabel::Upper);
            } else {
                // e.g. a titlecase digraph: lowercases fine but cannot be
                // reproduced by a U/L decision
                return Err(Error::NotCaseVariant { position: i });
            }
        }
        word_labels.push(if x == y { WordLabel::Same } else { WordLabel::Other });
        char_labels.push(labels);
    }
    Ok(LabeledPair {
        lower: lower.clone(),
        gold: gold.clone(),
        word_labels,
        char_labels,
    })
}

/// Re-case one token from its character labels. Labels on caseless
/// characters are ignored.
pub fn apply_char_labels(token: &str, labels: &[CharLabel]) -> Result<String> {
    let n = token.chars().count();
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    Ok(token
        .chars()
        .zip(labels)
        .map(|(c, l)| match l {
            CharLabel::Upper => upper_char(c).unwrap_or(c),
            CharLabel::Lower => c,
        })
        .collect())
}

/// Compose the output sentence: SELF words are copied, OTHER words are
/// re-cased from `char_labels[i]`. Entries of `char_labels` for SELF words
/// are ignored and may be empty.
pub fn apply_labels(
    lower: &Sentence,
    word_labels: &[WordLabel],
    char_labels: &[Vec<CharLabel>],
) -> Result<Sentence> {
    if word_labels.len() != lower.len() {
        return Err(Error::LengthMismatch {
            expected: lower.len(),
            found: word_labels.len(),
        });
    }
    if char_labels.len() != lower.len() {
        return Err(Error::LengthMismatch {
            expected: lower.len(),
            found: char_labels.len(),
        });
    }
    let tokens = lower
        .tokens()
        .iter()
        .zip(word_labels)
        .zip(char_labels)
        .map(|((tok, wl), cl)| match wl {
            WordLabel::Same => Ok(tok.clone()),
            WordLabel::Other => apply_char_labels(tok, cl),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sentence { tokens })
}

/// Classify a token into LC / UC / CA / MC.
pub fn classify_word(token: &str) -> Result<WordClass> {
    let mut chars = token.chars();
    let first = chars.next().ok_or(Error::EmptyToken)?;
    let mut any_upper = false;
    let mut any_cased = false;
    let mut all_cased_upper = true;
    let mut rest_lower = true;
    for (i, c) in token.chars().enumerate() {
        if !is_cased(c) {
            continue;
        }
        any_cased = true;
        let up = is_upper(c);
        any_upper |= up;
        all_cased_upper &= up;
        if i > 0 && up {
            rest_lower = false;
        }
    }
    Ok(if !any_upper {
        WordClass::Lc
    } else if any_cased && all_cased_upper {
        WordClass::Ca
    } else if is_upper(first) && rest_lower {
        WordClass::Uc
    } else {
        WordClass::Mc
    })
}

/// Anything that restores case to lowercase sentences.
pub trait Capitalizer {
    fn name(&self) -> String;

    /// Re-case a sentence. Implementations lowercase their input first, so
    /// the output always lowercases back to `lowercase(input)`.
    fn truecase(&self, sentence: &Sentence) -> Result<Sentence>;
}

impl<C: Capitalizer + ?Sized> Capitalizer for &C {
    fn name(&self) -> String {
        (**self).name()
    }

    fn truecase(&self, sentence: &Sentence) -> Result<Sentence> {
        (**self).truecase(sentence)
    }
}

/// Copies its input (lowercased): the do-nothing system.
#[derive(Clone, Copy, Debug, Default)]
pub struct Identity;

impl Capitalizer for Identity {
    fn name(&self) -> String {
        "identity".into()
    }

    fn truecase(&self, sentence: &Sentence) -> Result<Sentence> {
        Ok(sentence.lowercased())
    }
}

/// Outcome of turning cased corpus lines into labeled pairs.
#[derive(Clone, Debug, Default)]
pub struct Ingested {
    pub pairs: Vec<LabeledPair>,
    /// Lines that were not a case variant of their lowercase side.
    pub rejected: usize,
    /// Blank lines skipped.
    pub blank: usize,
}

impl Ingested {
    pub fn rejection_rate(&self) -> f64 {
        let total = self.pairs.len() + self.rejected;
        if total == 0 {
            0.0
        } else {
            self.rejected as f64 / total as f64
        }
    }
}

/// Ingest a cased corpus, one sentence per line. The lowercase side is
/// derived; unrepresentable lines are dropped and counted.
pub fn ingest<I, S>(lines: I) -> Ingested
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = Ingested::default();
    for line in lines {
        let gold = Sentence::parse(line.as_ref());
        if gold.is_empty() {
            out.blank += 1;
            continue;
        }
        match LabeledPair::from_gold(&gold) {
            Ok(p) => out.pairs.push(p),
            Err(_) => out.rejected += 1,
        }
    }
    out
}
