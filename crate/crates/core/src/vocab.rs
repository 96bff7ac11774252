//! Corpus ingestion, vocabulary construction and sliding-window instances.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::model::Architecture;
use crate::{Error, Result};

/// Splits text on Unicode whitespace. Newlines are ordinary whitespace: the
/// corpus is one token stream without sentence boundaries.
pub fn tokenize(text: &str, lowercase: bool) -> Vec<String> {
    text.split_whitespace()
        .map(|t| if lowercase { t.to_lowercase() } else { t.to_owned() })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps tokens occurring at least `min_count` times, ordered by
    /// descending count with ties broken by first appearance.
    pub fn build<S: AsRef<str>>(tokens: &[S], min_count: u64) -> Result<Self> {
        let min_count = min_count.max(1);
        let mut slots: HashMap<&str, usize> = HashMap::new();
        let mut entries: Vec<(&str, u64)> = Vec::new();
        for tok in tokens {
            let tok = tok.as_ref();
            match slots.get(tok) {
                Some(&i) => entries[i].1 += 1,
                None => {
                    slots.insert(tok, entries.len());
                    entries.push((tok, 1));
                }
            }
        }
        entries.retain(|&(_, c)| c >= min_count);
        if entries.len() < 2 {
            return Err(Error::EmptyVocabulary(entries.len()));
        }
        // stable: equal counts keep first-appearance order
        entries.sort_by_key(|&(_, c)| std::cmp::Reverse(c));
        let words: Vec<String> = entries.iter().map(|(w, _)| (*w).to_owned()).collect();
        let counts = entries.iter().map(|&(_, c)| c).collect();
        Ok(Self::from_parts(words, counts))
    }

    /// Builds a vocabulary from already ordered words and counts.
    pub fn from_words_and_counts(words: Vec<String>, counts: Vec<u64>) -> Result<Self> {
        if words.len() != counts.len() {
            return Err(Error::InvalidCounts(format!(
                "{} words but {} counts",
                words.len(),
                counts.len()
            )));
        }
        if words.len() < 2 {
            return Err(Error::EmptyVocabulary(words.len()));
        }
        let vocab = Self::from_parts(words, counts);
        if vocab.index.len() != vocab.words.len() {
            return Err(Error::InvalidCounts("duplicate words".into()));
        }
        Ok(vocab)
    }

    fn from_parts(words: Vec<String>, counts: Vec<u64>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { words, counts, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn encode(&self, token: &str) -> Result<usize> {
        self.index
            .get(token)
            .copied()
            .ok_or_else(|| Error::UnknownWord(token.to_owned()))
    }

    /// Maps a token stream to ids, dropping out-of-vocabulary tokens.
    pub fn encode_corpus<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens
            .iter()
            .filter_map(|t| self.index.get(t.as_ref()).copied())
            .collect()
    }
}

/// A tokenized text reduced to its vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub vocab: Vocabulary,
    /// Token ids in text order; tokens below `min_count` are dropped.
    pub ids: Vec<usize>,
}

impl Corpus {
    pub fn from_text(text: &str, lowercase: bool, min_count: u64) -> Result<Self> {
        let tokens = tokenize(text, lowercase);
        let vocab = Vocabulary::build(&tokens, min_count)?;
        let ids = vocab.encode_corpus(&tokens);
        Ok(Self { vocab, ids })
    }
}

/// One SGD example. CBOW predicts `target` from `context`; skip-gram
/// predicts every word of `outputs` from `center`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Instance {
    Cbow { context: Vec<usize>, target: usize },
    SkipGram { center: usize, outputs: Vec<usize> },
}

impl Instance {
    pub fn architecture(&self) -> Architecture {
        match self {
            Instance::Cbow { .. } => Architecture::Cbow,
            Instance::SkipGram { .. } => Architecture::SkipGram,
        }
    }

    /// Input-side word ids: the context for CBOW, the center for skip-gram.
    pub fn inputs(&self) -> &[usize] {
        match self {
            Instance::Cbow { context, .. } => context,
            Instance::SkipGram { center, .. } => std::slice::from_ref(center),
        }
    }

    /// Output-side word ids: the target for CBOW, the context for skip-gram.
    pub fn outputs(&self) -> &[usize] {
        match self {
            Instance::Cbow { target, .. } => std::slice::from_ref(target),
            Instance::SkipGram { outputs, .. } => outputs,
        }
    }

    pub fn max_id(&self) -> usize {
        self.inputs()
            .iter()
            .chain(self.outputs())
            .copied()
            .max()
            .unwrap_or(0)
    }
}

/// Emits one instance per position, with up to `window` ids on each side,
/// truncated at the ends of the sequence.
pub fn windows(ids: &[usize], window: usize, architecture: Architecture) -> Vec<Instance> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(ids.len());
    for (pos, &center) in ids.iter().enumerate() {
        let lo = pos.saturating_sub(window);
        let hi = (pos + window + 1).min(ids.len());
        let context: Vec<usize> = ids[lo..pos].iter().chain(&ids[pos + 1..hi]).copied().collect();
        if context.is_empty() {
            continue;
        }
        out.push(match architecture {
            Architecture::Cbow => Instance::Cbow { context, target: center },
            Architecture::SkipGram => Instance::SkipGram { center, outputs: context },
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_drops_rare_tokens() {
        let c = Corpus::from_text("A b a C b a", true, 2).unwrap();
        assert_eq!(c.vocab.words(), ["a", "b"]);
        assert_eq!(c.ids, vec![0, 1, 0, 1, 0]);
        assert!(matches!(Corpus::from_text("x y z", true, 2), Err(Error::EmptyVocabulary(0))));
    }
    use proptest::prelude::*;

    #[test]
    fn build_counts_and_orders() {
        let v = Vocabulary::build(&["a", "b", "a"], 1).unwrap();
        assert_eq!(v.words(), ["a", "b"]);
        assert_eq!(v.counts(), [2, 1]);
    }

    #[test]
    fn min_count_can_empty_the_vocabulary() {
        assert_eq!(
            Vocabulary::build(&["a", "b", "a"], 2),
            Err(Error::EmptyVocabulary(1))
        );
        assert_eq!(Vocabulary::build::<&str>(&[], 1), Err(Error::EmptyVocabulary(0)));
    }

    #[test]
    fn ties_broken_by_first_appearance() {
        let v = Vocabulary::build(&["x", "y", "x", "y", "z"], 1).unwrap();
        assert_eq!(v.words(), ["x", "y", "z"]);
        let v = Vocabulary::build(&["y", "x", "x", "y", "z"], 1).unwrap();
        assert_eq!(v.words(), ["y", "x", "z"]);
    }

    #[test]
    fn encode_known_and_unknown() {
        let v = Vocabulary::build(&["a", "b", "a"], 1).unwrap();
        assert_eq!(v.encode("a"), Ok(0));
        assert_eq!(v.encode("b"), Ok(1));
        assert_eq!(v.encode("c"), Err(Error::UnknownWord("c".into())));
    }

    #[test]
    fn oov_tokens_are_dropped() {
        let toks = tokenize("a b a c a b", true);
        let v = Vocabulary::build(&toks, 2).unwrap();
        assert_eq!(v.encode_corpus(&toks), vec![0, 1, 0, 0, 1]);
    }

    #[test]
    fn tokenize_whitespace_and_case() {
        assert_eq!(tokenize("The  cat\nsat\tDown", true), ["the", "cat", "sat", "down"]);
        assert_eq!(tokenize("The cat", false), ["The", "cat"]);
    }

    #[test]
    fn cbow_windows_truncate_at_edges() {
        let got = windows(&[0, 1, 2], 1, Architecture::Cbow);
        assert_eq!(
            got,
            vec![
                Instance::Cbow { context: vec![1], target: 0 },
                Instance::Cbow { context: vec![0, 2], target: 1 },
                Instance::Cbow { context: vec![1], target: 2 },
            ]
        );
    }

    #[test]
    fn skipgram_windows_mirror_cbow() {
        let got = windows(&[0, 1, 2], 1, Architecture::SkipGram);
        assert_eq!(
            got,
            vec![
                Instance::SkipGram { center: 0, outputs: vec![1] },
                Instance::SkipGram { center: 1, outputs: vec![0, 2] },
                Instance::SkipGram { center: 2, outputs: vec![1] },
            ]
        );
    }

    #[test]
    fn window_clipped_to_corpus() {
        let got = windows(&[0, 1], 5, Architecture::Cbow);
        assert_eq!(
            got,
            vec![
                Instance::Cbow { context: vec![1], target: 0 },
                Instance::Cbow { context: vec![0], target: 1 },
            ]
        );
    }

    fn pairs(instances: &[Instance]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for inst in instances {
            match inst {
                Instance::Cbow { context, target } => {
                    out.extend(context.iter().map(|&c| (*target, c)))
                }
                Instance::SkipGram { center, outputs } => {
                    out.extend(outputs.iter().map(|&c| (*center, c)))
                }
            }
        }
        out
    }

    proptest! {
        #[test]
        fn cbow_and_skipgram_emit_the_same_pairs(
            ids in prop::collection::vec(0usize..6, 2..40),
            window in 1usize..5,
        ) {
            let cbow = windows(&ids, window, Architecture::Cbow);
            let sg = windows(&ids, window, Architecture::SkipGram);
            prop_assert_eq!(cbow.len(), ids.len());
            prop_assert_eq!(pairs(&cbow), pairs(&sg));
            for inst in cbow.iter().chain(&sg) {
                prop_assert!(inst.max_id() < 6);
                let n = match inst {
                    Instance::Cbow { context, .. } => context.len(),
                    Instance::SkipGram { outputs, .. } => outputs.len(),
                };
                prop_assert!((1..=2 * window).contains(&n));
            }
            prop_assert_eq!(windows(&ids, window, Architecture::Cbow), cbow);
        }

        #[test]
        fn vocabulary_is_a_bijection(tokens in prop::collection::vec("[a-e]", 1..60), min in 1u64..4) {
            if let Ok(v) = Vocabulary::build(&tokens, min) {
                for (i, w) in v.words().iter().enumerate() {
                    prop_assert_eq!(v.encode(w).unwrap(), i);
                }
                prop_assert!(v.counts().iter().all(|&c| c >= min));
                prop_assert!(v.counts().windows(2).all(|p| p[0] >= p[1]));
                let kept = v.encode_corpus(&tokens).len() as u64;
                prop_assert_eq!(v.counts().iter().sum::<u64>(), kept);
            }
        }
    }
}
