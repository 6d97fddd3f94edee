//! Word embeddings trained from scratch with CBOW and negative sampling, and
//! mean-pooled sentence vectors built from them.

mod cbow;
mod io;

use std::collections::HashMap;

use log::warn;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use cbow::{train_cbow, CbowConfig, CbowSample, NsGradient};
pub use io::{read_embeddings, write_embeddings};

/// Lowercased word tokens. Runs of alphanumerics form a token; a single `-`
/// or `/` between two alphanumerics stays inside it (`phq-9`, `r/o`, `120/80`).
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if (c == '-' || c == '/')
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            current.push(c);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Retained tokens indexed by descending frequency, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    min_count: u64,
}

impl Vocab {
    pub(crate) fn from_entries(entries: Vec<(String, u64)>, min_count: u64) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (t, _))| (t.clone(), i))
            .collect();
        let (tokens, counts) = entries.into_iter().unzip();
        Vocab {
            tokens,
            counts,
            index,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, idx: usize) -> &str {
        &self.tokens[idx]
    }

    pub fn count(&self, idx: usize) -> u64 {
        self.counts[idx]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    /// In-vocabulary indices of `tokens`, dropping the rest.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().filter_map(|t| self.get(t.as_ref())).collect()
    }
}

pub fn build_vocab<S: AsRef<str>>(sentences: &[Vec<S>], min_count: usize) -> Result<Vocab> {
    if min_count == 0 {
        return Err(Error::invalid("min_count must be at least 1"));
    }
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for s in sentences {
        for t in s {
            *freq.entry(t.as_ref()).or_default() += 1;
        }
    }
    if freq.is_empty() {
        warn!("building a vocabulary from an empty corpus");
    }
    let mut entries: Vec<(String, u64)> = freq
        .into_iter()
        .filter(|&(_, c)| c >= min_count as u64)
        .map(|(t, c)| (t.to_string(), c))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(Vocab::from_entries(entries, min_count as u64))
}

/// Vocabulary plus input (context) and output (target) vectors, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel<F: Scalar> {
    vocab: Vocab,
    dim: usize,
    input: Vec<F>,
    output: Vec<F>,
    config: CbowConfig,
    /// Mean negative-sampling loss per epoch.
    epoch_losses: Vec<f64>,
}

impl<F: Scalar> EmbeddingModel<F> {
    /// Assembles a model from raw parameter matrices (`vocab.len() x dim` each).
    pub fn from_parts(vocab: Vocab, dim: usize, input: Vec<F>, output: Vec<F>, config: CbowConfig) -> Result<Self> {
        let n = vocab.len() * dim;
        if dim == 0 || input.len() != n || output.len() != n {
            return Err(Error::invalid(format!(
                "parameter matrices must be {} x {dim}",
                vocab.len()
            )));
        }
        Ok(EmbeddingModel {
            vocab,
            dim,
            input,
            output,
            config,
            epoch_losses: Vec::new(),
        })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &CbowConfig {
        &self.config
    }

    pub fn epoch_losses(&self) -> &[f64] {
        &self.epoch_losses
    }

    pub fn input_vector(&self, idx: usize) -> &[F] {
        &self.input[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn output_vector(&self, idx: usize) -> &[F] {
        &self.output[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn input_matrix(&self) -> &[F] {
        &self.input
    }

    pub fn output_matrix(&self) -> &[F] {
        &self.output
    }

    /// Input vector of `token`, if it is in the vocabulary.
    pub fn vector(&self, token: &str) -> Option<&[F]> {
        self.vocab.get(token).map(|i| self.input_vector(i))
    }

    pub fn all_finite(&self) -> bool {
        self.input.iter().chain(&self.output).all(|v| v.is_finite())
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<F> {
        let (x, y) = (self.vector(a)?, self.vector(b)?);
        let nx = crate::scalar::dot(x, x).sqrt();
        let ny = crate::scalar::dot(y, y).sqrt();
        if nx == F::zero() || ny == F::zero() {
            return Some(F::zero());
        }
        Some(crate::scalar::dot(x, y) / (nx * ny))
    }
}

/// Component-wise mean of the input vectors of in-vocabulary tokens; the zero
/// vector when no token is known.
pub fn embed_sentence<F: Scalar>(model: &EmbeddingModel<F>, sentence_text: &str) -> Vec<F> {
    let ids = model.vocab.encode(&tokenize(sentence_text));
    let mut out = vec![F::zero(); model.dim];
    if ids.is_empty() {
        return out;
    }
    for &i in &ids {
        crate::scalar::axpy(F::one(), model.input_vector(i), &mut out);
    }
    let n = F::from_usize(ids.len()).expect("token count fits the scalar type");
    out.iter_mut().for_each(|v| *v /= n);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(toks("Patient has hx of dysthymia"), ["patient", "has", "hx", "of", "dysthymia"]);
        assert!(toks("").is_empty());
        assert_eq!(toks("PHQ-9 score of zero"), ["phq-9", "score", "of", "zero"]);
        assert_eq!(toks("r/o MDD; BP 120/80."), ["r/o", "mdd", "bp", "120/80"]);
        assert_eq!(toks("well- being -x a--b"), ["well", "being", "x", "a", "b"]);
    }

    #[test]
    fn vocab_min_count_and_order() {
        let mut corpus: Vec<Vec<&str>> = vec![vec!["depression"]; 5];
        corpus.push(vec!["zzz", "mood", "mood", "low", "low"]);
        let v = build_vocab(&corpus, 2).unwrap();
        assert!(v.get("depression").is_some());
        assert!(v.get("zzz").is_none());
        assert_eq!(v.tokens(), ["depression", "low", "mood"]);

        let all = build_vocab(&corpus, 1).unwrap();
        assert_eq!(all.len(), 4);
        assert_eq!(all, build_vocab(&corpus, 1).unwrap());
        assert!(build_vocab(&corpus, 0).is_err());
        assert!(build_vocab::<&str>(&[], 1).unwrap().is_empty());
    }

    fn tiny_model() -> EmbeddingModel<f64> {
        let vocab = Vocab::from_entries(vec![("a".into(), 3), ("b".into(), 2)], 1);
        EmbeddingModel::from_parts(
            vocab,
            3,
            vec![1.0, 2.0, 3.0, -1.0, 0.0, 5.0],
            vec![0.0; 6],
            CbowConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn sentence_embedding_is_a_mean() {
        let m = tiny_model();
        assert_eq!(embed_sentence(&m, "A"), vec![1.0, 2.0, 3.0]);
        assert_eq!(embed_sentence(&m, "nothing known"), vec![0.0, 0.0, 0.0]);
        assert_eq!(embed_sentence(&m, "a b"), vec![0.0, 1.0, 4.0]);
        assert_eq!(embed_sentence(&m, "b x a"), embed_sentence(&m, "a b"));
    }

    #[test]
    fn from_parts_checks_shapes() {
        let vocab = Vocab::from_entries(vec![("a".into(), 1)], 1);
        assert!(EmbeddingModel::<f32>::from_parts(vocab, 2, vec![0.0; 3], vec![0.0; 2], CbowConfig::default()).is_err());
    }
}
