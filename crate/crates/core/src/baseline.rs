//! Word-level most-frequent-form capitalizer.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::textcore::{lowercase, Capitalizer, Sentence};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexEntry {
    pub form: String,
    pub count: usize,
}

/// Most frequent cased form per lowercase word.
///
/// Sentence-initial tokens are counted in their own table so that
/// positional capitalization does not leak into the general table; the
/// initial table only decides words never seen mid-sentence. The stored
/// count of a form is its mid-sentence count plus its sentence-initial
/// count.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CaseLexicon {
    entries: BTreeMap<String, LexEntry>,
    total_tokens: usize,
}

type FormCounts = BTreeMap<String, BTreeMap<String, usize>>;

/// Highest count wins; ties go to the lexicographically smallest form.
fn argmax(forms: &BTreeMap<String, usize>) -> (&String, usize) {
    let mut best: Option<(&String, usize)> = None;
    for (form, &n) in forms {
        if best.is_none_or(|(_, m)| n > m) {
            best = Some((form, n));
        }
    }
    best.expect("non-empty form table")
}

impl CaseLexicon {
    pub fn build(corpus: &[Sentence]) -> Result<CaseLexicon> {
        let mut general = FormCounts::new();
        let mut initial = FormCounts::new();
        let mut total_tokens = 0;
        for sentence in corpus {
            for (i, tok) in sentence.tokens().iter().enumerate() {
                total_tokens += 1;
                let table = if i == 0 { &mut initial } else { &mut general };
                *table.entry(lowercase(tok)).or_default().entry(tok.clone()).or_default() += 1;
            }
        }
        if total_tokens == 0 {
            return Err(Error::EmptyInput("lexicon corpus has no tokens".into()));
        }
        let mut entries = BTreeMap::new();
        for (key, forms) in &general {
            let (form, n) = argmax(forms);
            let extra = initial.get(key).and_then(|f| f.get(form)).copied().unwrap_or(0);
            entries.insert(
                key.clone(),
                LexEntry {
                    form: form.clone(),
                    count: n + extra,
                },
            );
        }
        for (key, forms) in initial {
            entries.entry(key).or_insert_with(|| {
                let (form, n) = argmax(&forms);
                LexEntry {
                    form: form.clone(),
                    count: n,
                }
            });
        }
        Ok(CaseLexicon { entries, total_tokens })
    }

    pub fn get(&self, key: &str) -> Option<&LexEntry> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_tokens(&self) -> usize {
        self.total_tokens
    }

    /// Replace every known word by its most frequent form; unseen words are
    /// copied.
    pub fn truecase_sentence(&self, sentence: &Sentence) -> Sentence {
        let tokens: Vec<String> = sentence
            .tokens()
            .iter()
            .map(|t| {
                let key = lowercase(t);
                match self.entries.get(&key) {
                    Some(e) => e.form.clone(),
                    None => key,
                }
            })
            .collect();
        Sentence::from_tokens(tokens).expect("tokens come from a valid sentence")
    }

    /// One `key<TAB>form<TAB>count` line per entry, sorted by key.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (k, e) in &self.entries {
            let _ = writeln!(out, "{k}\t{}\t{}", e.form, e.count);
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<CaseLexicon> {
        let mut entries = BTreeMap::new();
        let mut total_tokens = 0;
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let bad = |reason: &str| Error::Alignment {
                line: i + 1,
                reason: reason.to_string(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [key, form, count] = fields[..] else {
                return Err(bad("expected three tab-separated fields"));
            };
            let count: usize = count.parse().map_err(|_| bad("count is not a number"))?;
            if count == 0 {
                return Err(bad("count must be positive"));
            }
            if lowercase(form) != key || key.is_empty() {
                return Err(bad("form does not lowercase to its key"));
            }
            total_tokens += count;
            entries.insert(
                key.to_string(),
                LexEntry {
                    form: form.to_string(),
                    count,
                },
            );
        }
        Ok(CaseLexicon { entries, total_tokens })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<CaseLexicon> {
        CaseLexicon::from_tsv(&std::fs::read_to_string(path)?)
    }
}

impl Capitalizer for CaseLexicon {
    fn name(&self) -> String {
        "lexicon".into()
    }

    fn truecase(&self, sentence: &Sentence) -> Result<Sentence> {
        Ok(self.truecase_sentence(sentence))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(lines: &[&str]) -> Vec<Sentence> {
        lines.iter().map(|l| Sentence::parse(l)).collect()
    }

    #[test]
    fn iphone_example() {
        let lex = CaseLexicon::build(&corpus(&["I love iPhone", "iPhone rocks"])).unwrap();
        assert_eq!(
            lex.get("iphone"),
            Some(&LexEntry {
                form: "iPhone".into(),
                count: 2
            })
        );
        assert_eq!(lex.get("i").unwrap().form, "I");
        let out = lex.truecase(&Sentence::parse("iphone zzzz")).unwrap();
        assert_eq!(out, Sentence::parse("iPhone zzzz"));
    }

    #[test]
    fn simple_and_ties() {
        let lex = CaseLexicon::build(&corpus(&["a a a"])).unwrap();
        assert_eq!(lex.get("a").unwrap().form, "a");
        let lex = CaseLexicon::build(&corpus(&["x Abc ABC"])).unwrap();
        assert_eq!(lex.get("abc").unwrap().form, "ABC");
    }

    #[test]
    fn initial_position_does_not_override() {
        let lex = CaseLexicon::build(&corpus(&["The cat", "The dog", "The end", "see the cat"])).unwrap();
        assert_eq!(lex.get("the").unwrap(), &LexEntry { form: "the".into(), count: 1 });
    }

    #[test]
    fn empty_lexicon_is_identity_and_empty_corpus_errors() {
        let lex = CaseLexicon::default();
        let s = Sentence::parse("hello World");
        assert_eq!(lex.truecase(&s).unwrap(), s.lowercased());
        assert!(CaseLexicon::build(&[]).is_err());
    }

    #[test]
    fn tsv_roundtrip() {
        let lex = CaseLexicon::build(&corpus(&["I love iPhone", "iPhone rocks", "McDonald's is near NASA"])).unwrap();
        let text = lex.to_tsv();
        let back = CaseLexicon::from_tsv(&text).unwrap();
        assert_eq!(back.entries, lex.entries);
        assert!(text.lines().collect::<Vec<_>>().windows(2).all(|w| w[0] < w[1]));
        assert!(CaseLexicon::from_tsv("abc\tXYZ\t1\n").is_err());
        assert!(CaseLexicon::from_tsv("abc\tABC\n").is_err());
    }
}
