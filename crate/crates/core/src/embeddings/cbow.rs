use std::collections::BTreeMap;

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_vocab, EmbeddingModel, Vocab};
use crate::error::{Error, Result};
use crate::scalar::{axpy, dot, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CbowConfig {
    pub dim: usize,
    /// Maximum context radius on each side of the target.
    pub window: usize,
    /// Noise words drawn per target.
    pub negative: usize,
    pub epochs: usize,
    /// Initial learning rate, decayed linearly towards `min_learning_rate`.
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub min_count: usize,
    /// Draw the effective radius uniformly from `1..=window` per target.
    pub shrink_window: bool,
    pub seed: u64,
}

impl Default for CbowConfig {
    fn default() -> Self {
        CbowConfig {
            dim: 300,
            window: 5,
            negative: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_learning_rate: 0.025 * 1e-4,
            min_count: 2,
            shrink_window: true,
            seed: 1,
        }
    }
}

impl CbowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.epochs == 0 || self.min_count == 0 {
            return Err(Error::invalid("dim, window, epochs and min_count must be positive"));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 || self.min_learning_rate < 0.0 {
            return Err(Error::invalid("learning rates must be positive"));
        }
        Ok(())
    }
}

/// One CBOW training example: the context predicts `target` against `negatives`.
#[derive(Debug, Clone, Copy)]
pub struct CbowSample<'a> {
    pub context: &'a [usize],
    pub target: usize,
    pub negatives: &'a [usize],
}

/// Partial derivatives of the negative-sampling loss, keyed by vocabulary
/// index. Repeated indices are accumulated.
#[derive(Debug, Clone, PartialEq)]
pub struct NsGradient<F> {
    pub loss: F,
    pub input: BTreeMap<usize, Vec<F>>,
    pub output: BTreeMap<usize, Vec<F>>,
}

fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// `-ln(sigmoid(x))`, stable for large |x|.
fn neg_log_sigmoid<F: Scalar>(x: F) -> F {
    if x > F::zero() {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

impl<F: Scalar> EmbeddingModel<F> {
    fn hidden(&self, context: &[usize]) -> Vec<F> {
        let mut h = vec![F::zero(); self.dim];
        for &c in context {
            axpy(F::one(), self.input_vector(c), &mut h);
        }
        let n = F::from_usize(context.len().max(1)).expect("context size fits the scalar type");
        h.iter_mut().for_each(|v| *v /= n);
        h
    }

    /// Loss `-ln s(u_t.h) - sum_n ln s(-u_n.h)` where `h` is the mean of the
    /// context input vectors and `u` are output vectors.
    pub fn ns_loss(&self, sample: &CbowSample<'_>) -> F {
        let h = self.hidden(sample.context);
        let mut loss = neg_log_sigmoid(dot(self.output_vector(sample.target), &h));
        for &n in sample.negatives {
            loss += neg_log_sigmoid(-dot(self.output_vector(n), &h));
        }
        loss
    }

    /// Analytic gradient of [`ns_loss`](Self::ns_loss).
    pub fn ns_gradient(&self, sample: &CbowSample<'_>) -> NsGradient<F> {
        let h = self.hidden(sample.context);
        let mut grad_h = vec![F::zero(); self.dim];
        let mut output: BTreeMap<usize, Vec<F>> = BTreeMap::new();
        let mut loss = F::zero();

        let targets = std::iter::once((sample.target, true)).chain(sample.negatives.iter().map(|&n| (n, false)));
        for (idx, positive) in targets {
            let u = self.output_vector(idx);
            let score = dot(u, &h);
            // d(loss)/d(score): s(score) - 1 for the target, s(score) for noise
            let g = if positive {
                loss += neg_log_sigmoid(score);
                sigmoid(score) - F::one()
            } else {
                loss += neg_log_sigmoid(-score);
                sigmoid(score)
            };
            axpy(g, u, &mut grad_h);
            let entry = output.entry(idx).or_insert_with(|| vec![F::zero(); self.dim]);
            axpy(g, &h, entry);
        }

        let mut input: BTreeMap<usize, Vec<F>> = BTreeMap::new();
        let scale = F::one() / F::from_usize(sample.context.len().max(1)).expect("context size fits");
        for &c in sample.context {
            let entry = input.entry(c).or_insert_with(|| vec![F::zero(); self.dim]);
            axpy(scale, &grad_h, entry);
        }
        NsGradient { loss, input, output }
    }

    fn apply(&mut self, grad: &NsGradient<F>, lr: F) {
        let dim = self.dim;
        for (&idx, g) in &grad.output {
            axpy(-lr, g, &mut self.output[idx * dim..(idx + 1) * dim]);
        }
        for (&idx, g) in &grad.input {
            axpy(-lr, g, &mut self.input[idx * dim..(idx + 1) * dim]);
        }
    }
}

/// Trains CBOW embeddings on tokenized sentences. Single-threaded and fully
/// determined by `config.seed`.
pub fn train_cbow<F: Scalar, S: AsRef<str>>(sentences: &[Vec<S>], config: &CbowConfig) -> Result<EmbeddingModel<F>> {
    config.validate()?;
    let vocab = build_vocab(sentences, config.min_count)?;
    if vocab.is_empty() {
        return Err(Error::invalid("no token reaches min_count; nothing to train on"));
    }
    let encoded: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| vocab.encode(s))
        .filter(|s| s.len() >= 2)
        .collect();
    if encoded.is_empty() {
        return Err(Error::invalid("training stream has no sentence with two known tokens"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.dim;
    let bound = 0.5 / dim as f64;
    let input: Vec<F> = (0..vocab.len() * dim)
        .map(|_| F::from_f64_lossy((rng.gen::<f64>() * 2.0 - 1.0) * bound))
        .collect();
    let output = vec![F::zero(); vocab.len() * dim];
    let mut model = EmbeddingModel::from_parts(vocab, dim, input, output, config.clone())?;

    let noise = noise_distribution(&model.vocab)?;
    let words_per_epoch: usize = encoded.iter().map(Vec::len).sum();
    let total_words = (words_per_epoch * config.epochs) as f64;
    let mut processed = 0usize;
    let mut context = Vec::with_capacity(2 * config.window);
    let mut negatives = Vec::with_capacity(config.negative);

    for _ in 0..config.epochs {
        let mut loss_sum = 0.0f64;
        let mut steps = 0usize;
        for sentence in &encoded {
            for (pos, &target) in sentence.iter().enumerate() {
                let lr = (config.learning_rate * (1.0 - processed as f64 / (total_words + 1.0)))
                    .max(config.min_learning_rate);
                processed += 1;

                let radius = if config.shrink_window {
                    config.window - rng.gen_range(0..config.window)
                } else {
                    config.window
                };
                context.clear();
                let lo = pos.saturating_sub(radius);
                let hi = (pos + radius).min(sentence.len() - 1);
                context.extend((lo..=hi).filter(|&j| j != pos).map(|j| sentence[j]));
                if context.is_empty() {
                    continue;
                }

                negatives.clear();
                for _ in 0..config.negative {
                    let n = noise.sample(&mut rng);
                    if n != target {
                        negatives.push(n);
                    }
                }

                let sample = CbowSample {
                    context: &context,
                    target,
                    negatives: &negatives,
                };
                let grad = model.ns_gradient(&sample);
                loss_sum += grad.loss.to_f64_lossy();
                steps += 1;
                model.apply(&grad, F::from_f64_lossy(lr));
            }
        }
        model.epoch_losses.push(if steps == 0 { 0.0 } else { loss_sum / steps as f64 });
    }
    Ok(model)
}

/// Unigram counts raised to 0.75.
fn noise_distribution(vocab: &Vocab) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(vocab.counts().iter().map(|&c| (c as f64).powf(0.75)))
        .map_err(|e| Error::invalid(format!("noise distribution: {e}")))
}

impl<F: Scalar> EmbeddingModel<F> {
    pub(crate) fn set_epoch_losses(&mut self, losses: Vec<f64>) {
        self.epoch_losses = losses;
    }
}
