//! Tokenization, stopwords, concept-bank coverage and the token-hash embedder.

use std::collections::{BTreeSet, HashSet};
use std::sync::OnceLock;

use super::GenerationError;
use crate::embedding_index::{normalize, EmbeddingVector};
use crate::hash::fnv1a64;

const STOPWORDS_FILE: &str = include_str!("../../data/stopwords.txt");

/// Lowercased maximal runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn stopwords() -> &'static HashSet<String> {
    static WORDS: OnceLock<HashSet<String>> = OnceLock::new();
    WORDS.get_or_init(|| {
        STOPWORDS_FILE
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect()
    })
}

pub fn is_stopword(token: &str) -> bool {
    stopwords().contains(token)
}

/// The retrieval system's known vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptBank {
    concepts: BTreeSet<String>,
    pub source_path: String,
    unigrams: HashSet<String>,
    phrases: Vec<Vec<String>>,
}

impl ConceptBank {
    /// Terms are trimmed, lowercased and whitespace-collapsed.
    pub fn from_terms<I, S>(terms: I, source_path: impl Into<String>) -> Result<Self, GenerationError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let concepts: BTreeSet<String> = terms
            .into_iter()
            .map(|t| {
                t.as_ref()
                    .split_whitespace()
                    .collect::<Vec<_>>()
                    .join(" ")
                    .to_lowercase()
            })
            .filter(|t| !t.is_empty())
            .collect();
        if concepts.is_empty() {
            return Err(GenerationError::EmptyBank);
        }
        let mut unigrams = HashSet::new();
        let mut phrases = Vec::new();
        for c in &concepts {
            let toks = tokenize(c);
            match toks.len() {
                0 => {}
                1 => {
                    unigrams.insert(toks.into_iter().next().unwrap());
                }
                _ => phrases.push(toks),
            }
        }
        Ok(Self {
            concepts,
            source_path: source_path.into(),
            unigrams,
            phrases,
        })
    }

    /// Newline-delimited file contents; `#` lines are comments.
    pub fn parse(text: &str, source_path: impl Into<String>) -> Result<Self, GenerationError> {
        Self::from_terms(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
            source_path,
        )
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn contains(&self, concept: &str) -> bool {
        self.concepts.contains(concept)
    }

    pub fn concepts(&self) -> impl Iterator<Item = &str> {
        self.concepts.iter().map(String::as_str)
    }

    /// The first `cap` concepts in lexicographic order.
    pub fn sample(&self, cap: usize) -> Vec<&str> {
        self.concepts().take(cap).collect()
    }

    /// Out-of-vocabulary content tokens of `query`: non-stopword tokens that
    /// are neither bank unigrams nor covered by an occurrence of a bank phrase.
    pub fn detect_oov(&self, query: &str) -> BTreeSet<String> {
        let tokens = tokenize(query);
        let mut covered = vec![false; tokens.len()];
        for phrase in &self.phrases {
            if phrase.len() > tokens.len() {
                continue;
            }
            for start in 0..=tokens.len() - phrase.len() {
                if tokens[start..start + phrase.len()] == phrase[..] {
                    covered[start..start + phrase.len()].iter_mut().for_each(|c| *c = true);
                }
            }
        }
        tokens
            .into_iter()
            .zip(covered)
            .filter(|(t, cov)| !cov && !is_stopword(t) && !self.unigrams.contains(t))
            .map(|(t, _)| t)
            .collect()
    }
}

/// Free-function form of [`ConceptBank::detect_oov`].
pub fn detect_oov(query: &str, bank: &ConceptBank) -> BTreeSet<String> {
    bank.detect_oov(query)
}

pub const MIN_HASH_DIM: usize = 8;

/// Signed feature hashing of tokens into `dim` buckets, then L2 normalization.
///
/// Each token is hashed with FNV-1a 64; the bucket is `hash % dim` and the
/// sign is negative when bit 63 is set.
pub fn token_hash_embed(text: &str, dim: usize) -> Result<EmbeddingVector, GenerationError> {
    if dim < MIN_HASH_DIM {
        return Err(GenerationError::InvalidDim(dim));
    }
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(GenerationError::EmptyText);
    }
    let mut acc = vec![0.0f32; dim];
    for t in &tokens {
        let h = fnv1a64(t.as_bytes());
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        acc[(h % dim as u64) as usize] += sign;
    }
    normalize(&acc).map_err(|_| GenerationError::DegenerateText(text.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding_index::dot;
    use proptest::prelude::*;

    fn bank(terms: &[&str]) -> ConceptBank {
        ConceptBank::from_terms(terms, "test").unwrap()
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn stopword_list_has_fifty_entries() {
        assert_eq!(stopwords().len(), 50);
    }

    #[test]
    fn tokenizer_lowercases_and_splits() {
        assert_eq!(tokenize("A pink-colored Necktie!"), ["a", "pink", "colored", "necktie"]);
        assert!(tokenize("!!!").is_empty());
    }

    #[test]
    fn oov_examples() {
        // find/shots/of/in are stopwords; people and outdoors are concepts.
        let b = bank(&["people", "outdoors", "lineup"]);
        assert_eq!(
            b.detect_oov("Find shots of people standing in line outdoors"),
            set(&["standing", "line"])
        );
        let b = bank(&["people", "outdoors"]);
        assert!(b.detect_oov("people outdoors").is_empty());
        assert!(b.detect_oov("").is_empty());
    }

    #[test]
    fn phrases_cover_their_tokens() {
        let b = bank(&["people", "standing in line"]);
        assert!(b.detect_oov("people standing in line").is_empty());
        // the phrase must occur contiguously
        assert_eq!(
            b.detect_oov("people standing near line"),
            set(&["standing", "near", "line"])
        );
    }

    #[test]
    fn bank_parsing() {
        let b = ConceptBank::parse("# header\n  Traffic   Light \ncar\n\ncar\n", "f").unwrap();
        assert_eq!(b.concepts().collect::<Vec<_>>(), ["car", "traffic light"]);
        assert_eq!(
            ConceptBank::parse("# only comments\n", "f"),
            Err(GenerationError::EmptyBank)
        );
    }

    #[test]
    fn hash_embed_examples() {
        let a = token_hash_embed("dog", 64).unwrap();
        let b = token_hash_embed("dog", 64).unwrap();
        assert_eq!(a, b);
        let c = token_hash_embed("dog dog", 64).unwrap();
        assert!((dot(a.as_slice(), c.as_slice()) - 1.0).abs() < 1e-6);
        assert_eq!(token_hash_embed("!!!", 64), Err(GenerationError::EmptyText));
        assert_eq!(token_hash_embed("dog", 4), Err(GenerationError::InvalidDim(4)));
    }

    #[test]
    fn hash_embed_bucket_and_sign() {
        let dim = 16;
        let h = fnv1a64(b"dog");
        let v = token_hash_embed("DOG", dim).unwrap();
        let bucket = (h % dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        assert_eq!(v.as_slice()[bucket], sign);
        assert_eq!(v.as_slice().iter().filter(|x| **x != 0.0).count(), 1);
    }

    #[test]
    fn disjoint_texts_are_nearly_orthogonal() {
        // 1000 pairs of disjoint 3-token texts at dim 256.
        let dim = 256;
        let mut small = 0;
        let pairs = 1000;
        for i in 0..pairs {
            let a = format!("alpha{i} beta{i} gamma{i}");
            let b = format!("delta{i} eps{i} zeta{i}");
            let va = token_hash_embed(&a, dim).unwrap();
            let vb = token_hash_embed(&b, dim).unwrap();
            if dot(va.as_slice(), vb.as_slice()).abs() < 0.25 {
                small += 1;
            }
        }
        assert!(small as f64 >= 0.95 * pairs as f64, "{small}/{pairs}");
    }

    proptest! {
        #[test]
        fn oov_is_subset_and_monotone(
            words in prop::collection::vec("[a-e]{1,3}", 0..10),
            bank_words in prop::collection::vec("[a-e]{1,3}", 1..6),
            extra in "[a-e]{1,3}( [a-e]{1,3})?",
        ) {
            let query = words.join(" ");
            let b = ConceptBank::from_terms(&bank_words, "p").unwrap();
            let oov = b.detect_oov(&query);
            let tokens: BTreeSet<String> = tokenize(&query).into_iter().collect();
            prop_assert!(oov.is_subset(&tokens));
            let mut bigger = bank_words.clone();
            bigger.push(extra);
            let b2 = ConceptBank::from_terms(&bigger, "p").unwrap();
            prop_assert!(b2.detect_oov(&query).is_subset(&oov));
        }

        #[test]
        fn hash_embed_is_unit_norm(text in "[a-z ]{1,40}", dim in 8usize..300) {
            if let Ok(v) = token_hash_embed(&text, dim) {
                prop_assert!((v.l2_norm() - 1.0).abs() < 1e-6);
            }
        }
    }
}
