//! Shared fixtures for the criterion benchmarks.

use embedscope_core::vocab::{tokenize, windows};
use embedscope_core::{Architecture, Instance, ModelConfig, Objective, Vocabulary};

/// A synthetic Zipf-like corpus of `tokens` tokens over `vocab` words.
pub fn zipf_corpus(tokens: usize, vocab: usize) -> String {
    let mut out = String::new();
    let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
    for _ in 0..tokens {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        let u = (state >> 11) as f64 / (1u64 << 53) as f64;
        let rank = ((vocab as f64).powf(u) as usize).min(vocab) - 1;
        out.push_str(&format!("w{rank} "));
    }
    out
}

pub struct Fixture {
    pub vocab: Vocabulary,
    pub instances: Vec<Instance>,
    pub config: ModelConfig,
}

pub fn fixture(architecture: Architecture, objective: Objective, dim: usize) -> Fixture {
    let tokens = tokenize(&zipf_corpus(5_000, 200), true);
    let vocab = Vocabulary::build(&tokens, 1).expect("vocabulary");
    let ids = vocab.encode_corpus(&tokens);
    let instances = windows(&ids, 2, architecture);
    let config = ModelConfig {
        vocab_size: vocab.len(),
        dim,
        architecture,
        objective,
        negatives: 5,
        eta: 0.025,
    };
    Fixture { vocab, instances, config }
}
