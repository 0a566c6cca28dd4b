//! Seeded synthetic corpora for smoke tests, examples and sanity checks.

use std::collections::HashMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{EmbeddedSentence, Sentence};

/// Shape of a toy corpus in which each token always carries the same tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyCorpus {
    pub vocab_size: usize,
    pub num_tags: usize,
    pub num_sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for ToyCorpus {
    fn default() -> Self {
        Self { vocab_size: 20, num_tags: 5, num_sentences: 200, min_len: 5, max_len: 10, seed: 0 }
    }
}

impl ToyCorpus {
    /// Tag of token `w<i>`.
    pub fn tag_of(&self, token_index: usize) -> String {
        format!("T{}", token_index % self.num_tags)
    }

    /// Tokens `w0..w{V-1}` drawn uniformly; token `w<i>` is tagged `T<i mod K>`.
    pub fn generate(&self) -> Vec<Sentence> {
        assert!(self.vocab_size > 0 && self.num_tags > 0 && self.min_len > 0);
        assert!(self.min_len <= self.max_len);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.num_sentences)
            .map(|_| {
                let len = rng.random_range(self.min_len..=self.max_len);
                let ids: Vec<usize> = (0..len).map(|_| rng.random_range(0..self.vocab_size)).collect();
                Sentence {
                    tokens: ids.iter().map(|i| format!("w{i}")).collect(),
                    tags: ids.iter().map(|&i| self.tag_of(i)).collect(),
                }
            })
            .collect()
    }
}

/// Attaches a fixed standard-normal vector of width `dim` to every token type,
/// assigned in order of first appearance. Stands in for precomputed
/// contextual embeddings when none are available.
pub fn random_token_vectors(sentences: &[Sentence], dim: usize, seed: u64) -> Vec<EmbeddedSentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table: HashMap<&str, Vec<f64>> = HashMap::new();
    sentences
        .iter()
        .map(|s| {
            let mut vectors = Array2::zeros((s.len(), dim));
            for (t, token) in s.tokens.iter().enumerate() {
                let v = table
                    .entry(token.as_str())
                    .or_insert_with(|| (0..dim).map(|_| rng.sample(StandardNormal)).collect());
                vectors.row_mut(t).iter_mut().zip(v.iter()).for_each(|(a, b)| *a = *b);
            }
            EmbeddedSentence { tokens: s.tokens.clone(), tags: s.tags.clone(), vectors }
        })
        .collect()
}
