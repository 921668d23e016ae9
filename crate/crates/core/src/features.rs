//! Hashed character n-gram features.
//!
//! A word is padded with a boundary symbol on both sides and every substring
//! of length `1..=max_ngram_order` that contains at least one real character
//! is an n-gram. Each n-gram is hashed with 64-bit FNV-1a over its UTF-8 bytes
//! into one of `num_buckets` rows of an embedding table, and the word
//! embedding is the sum of those rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuralnet::Real;

/// Boundary placeholder. A private-use scalar so it never collides with text.
pub const BOUNDARY: char = '\u{E000}';

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub max_ngram_order: usize,
    pub num_buckets: usize,
    pub embedding_dim: usize,
    /// Count each distinct n-gram once per word instead of once per
    /// occurrence.
    #[serde(default)]
    pub dedup: bool,
}

impl FeatureConfig {
    pub fn new(embedding_dim: usize) -> FeatureConfig {
        FeatureConfig {
            max_ngram_order: 3,
            num_buckets: 5000,
            embedding_dim,
            dedup: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_ngram_order == 0 || self.num_buckets == 0 || self.embedding_dim == 0 {
            return Err(Error::Config(format!(
                "feature config fields must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// 64-bit FNV-1a digest.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub fn hash_ngram(ngram: &str, num_buckets: usize) -> usize {
    (fnv1a64(ngram.as_bytes()) % num_buckets as u64) as usize
}

/// All n-grams of `token` with multiplicity, ordered by length then position.
pub fn extract_ngrams(token: &str, config: &FeatureConfig) -> Result<Vec<String>> {
    if token.is_empty() {
        return Err(Error::EmptyToken);
    }
    let mut padded = Vec::with_capacity(token.len() + 2);
    padded.push(BOUNDARY);
    padded.extend(token.chars());
    padded.push(BOUNDARY);
    let mut out = Vec::new();
    for n in 1..=config.max_ngram_order.min(padded.len()) {
        for w in padded.windows(n) {
            if w.iter().all(|&c| c == BOUNDARY) {
                continue;
            }
            let g: String = w.iter().collect();
            if !(config.dedup && out.contains(&g)) {
                out.push(g);
            }
        }
    }
    Ok(out)
}

/// Bucket indices for every n-gram of `token`.
pub fn ngram_buckets(token: &str, config: &FeatureConfig) -> Result<Vec<u32>> {
    Ok(extract_ngrams(token, config)?
        .iter()
        .map(|g| hash_ngram(g, config.num_buckets) as u32)
        .collect())
}

/// Bucket of a single character, used for character-level inputs.
pub fn char_bucket(c: char, num_buckets: usize) -> u32 {
    let mut buf = [0u8; 4];
    hash_ngram(c.encode_utf8(&mut buf), num_buckets) as u32
}

/// Sum of table rows over the n-grams of `token`. `table` is row-major
/// `[num_buckets x embedding_dim]`.
pub fn embed_word<T: Real>(token: &str, table: &[T], config: &FeatureConfig) -> Result<Vec<T>> {
    if table.len() != config.num_buckets * config.embedding_dim {
        return Err(Error::Dimension(format!(
            "table has {} values, expected {} x {}",
            table.len(),
            config.num_buckets,
            config.embedding_dim
        )));
    }
    let d = config.embedding_dim;
    let mut out = vec![T::zero(); d];
    for b in ngram_buckets(token, config)? {
        let row = &table[b as usize * d..(b as usize + 1) * d];
        for (o, &r) in out.iter_mut().zip(row) {
            *o += r;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn show(v: &[String]) -> Vec<String> {
        v.iter().map(|g| g.replace(BOUNDARY, "<s>")).collect()
    }

    /// Independent FNV-1a over the same bytes, written against the published
    /// parameters.
    fn fnv_oracle(s: &str) -> u64 {
        let mut h: u128 = 14695981039346656037;
        for b in s.bytes() {
            h ^= b as u128;
            h = (h * 1099511628211) % (1u128 << 64);
        }
        h as u64
    }

    #[test]
    fn ave_order_3() {
        let g = extract_ngrams("ave", &FeatureConfig::new(4)).unwrap();
        let mut got = show(&g);
        got.sort();
        let mut want: Vec<String> = ["a", "v", "e", "<s>a", "av", "ve", "e<s>", "<s>av", "ave", "ve<s>"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn single_char_order_3() {
        let g = extract_ngrams("a", &FeatureConfig::new(4)).unwrap();
        assert_eq!(show(&g), vec!["a", "<s>a", "a<s>", "<s>a<s>"]);
    }

    #[test]
    fn unigrams_only() {
        let cfg = FeatureConfig { max_ngram_order: 1, ..FeatureConfig::new(4) };
        assert_eq!(extract_ngrams("ab", &cfg).unwrap(), vec!["a", "b"]);
        assert!(matches!(extract_ngrams("", &cfg), Err(Error::EmptyToken)));
    }

    #[test]
    fn dedup_flag() {
        let cfg = FeatureConfig { max_ngram_order: 1, dedup: true, ..FeatureConfig::new(4) };
        assert_eq!(extract_ngrams("aa", &cfg).unwrap(), vec!["a"]);
    }

    #[test]
    fn hash_golden() {
        assert_eq!(fnv_oracle("av"), fnv1a64(b"av"));
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        // frozen from the oracle above
        assert_eq!(fnv1a64(b"av"), 0x089c_5007_b545_acce);
        assert_eq!(hash_ngram("av", 5000), 1294);
        assert_eq!(hash_ngram("av", 1), 0);
    }

    #[test]
    fn embed_examples() {
        let cfg = FeatureConfig { max_ngram_order: 1, num_buckets: 7, embedding_dim: 3, dedup: false };
        let table: Vec<f64> = (0..21).map(|i| i as f64).collect();
        let b = hash_ngram("a", 7);
        let row = &table[b * 3..b * 3 + 3];
        assert_eq!(embed_word("a", &table, &cfg).unwrap(), row);
        let twice: Vec<f64> = row.iter().map(|x| 2.0 * x).collect();
        assert_eq!(embed_word("aa", &table, &cfg).unwrap(), twice);
        let zeros = vec![0.0f64; 21];
        let cfg3 = FeatureConfig { max_ngram_order: 3, ..cfg.clone() };
        assert_eq!(embed_word("ave", &zeros, &cfg3).unwrap(), vec![0.0; 3]);
        assert!(embed_word("a", &table[..20], &cfg).is_err());
    }

    #[test]
    fn bucket_load() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let buckets = 5000;
        let mut load = vec![0usize; buckets];
        let n = 100_000;
        for _ in 0..n {
            let len = rng.gen_range(3..=8);
            let g: String = (0..len).map(|_| rng.gen_range('a'..='z')).collect();
            load[hash_ngram(&g, buckets)] += 1;
        }
        let mean = n as f64 / buckets as f64;
        assert!(*load.iter().max().unwrap() as f64 <= 5.0 * mean);
    }

    fn brute_count(token: &str, order: usize) -> usize {
        let mut padded = vec![BOUNDARY];
        padded.extend(token.chars());
        padded.push(BOUNDARY);
        let mut count = 0;
        for start in 0..padded.len() {
            for end in start + 1..=padded.len() {
                if end - start <= order && padded[start..end].iter().any(|&c| c != BOUNDARY) {
                    count += 1;
                }
            }
        }
        count
    }

    proptest! {
        #[test]
        fn count_matches_enumeration(token in "[a-z'é-]{1,10}", order in 1usize..6) {
            let cfg = FeatureConfig { max_ngram_order: order, ..FeatureConfig::new(2) };
            prop_assert_eq!(extract_ngrams(&token, &cfg).unwrap().len(), brute_count(&token, order));
        }

        #[test]
        fn embed_is_linear(token in "[a-z]{1,8}", seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let cfg = FeatureConfig { max_ngram_order: 3, num_buckets: 11, embedding_dim: 4, dedup: false };
            let a: Vec<f64> = (0..44).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..44).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let ea = embed_word(&token, &a, &cfg).unwrap();
            let eb = embed_word(&token, &b, &cfg).unwrap();
            let eab = embed_word(&token, &ab, &cfg).unwrap();
            for i in 0..4 {
                prop_assert!((eab[i] - ea[i] - eb[i]).abs() < 1e-12);
            }
        }
    }
}
