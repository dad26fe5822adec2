use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::market::EMBEDDING_DIM;

/// Tokens seen this many times or fewer in the training corpus are dropped.
pub const MIN_TOKEN_COUNT: usize = 5;

/// Lowercases, strips punctuation and splits on whitespace.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    text.chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Deterministic hashed bag-of-words embedding into 50 signed slots.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TextHasher {
    /// Tokens that passed the frequency threshold on the training corpus.
    pub vocabulary: BTreeSet<String>,
}

impl TextHasher {
    /// Keeps every token occurring more than [`MIN_TOKEN_COUNT`] times.
    pub fn fit<'a>(corpus: impl IntoIterator<Item = &'a str>) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for doc in corpus {
            for tok in normalize_tokens(doc) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let vocabulary = counts
            .into_iter()
            .filter(|&(_, n)| n > MIN_TOKEN_COUNT)
            .map(|(t, _)| t)
            .collect();
        TextHasher { vocabulary }
    }

    /// L2-normalised signed hash counts; the zero vector stays zero.
    pub fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; EMBEDDING_DIM];
        for tok in normalize_tokens(text) {
            if !self.vocabulary.contains(&tok) {
                continue;
            }
            let h = fnv1a(tok.as_bytes());
            let slot = (h % EMBEDDING_DIM as u64) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[slot] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
