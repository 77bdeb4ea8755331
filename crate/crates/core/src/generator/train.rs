use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{EncodedPair, StyledGenerator};
use super::vocab::Vocab;
use super::GenConfig;
use crate::corpus::{project_label, Corpus, Scheme};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenHyper {
    /// Adam step size.
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for GenHyper {
    fn default() -> Self {
        GenHyper {
            learning_rate: 2e-3,
            epochs: 12,
            batch_size: 16,
            clip_norm: 1.0,
            seed: 0,
        }
    }
}

/// Mean per-token training loss of each epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenTrainLog {
    pub initial_loss: f64,
    pub epoch_loss: Vec<f64>,
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    fn new(n: usize) -> Self {
        Adam { m: vec![T::zero(); n], v: vec![T::zero(); n], t: 0 }
    }

    fn step(&mut self, params: &mut [T], grad: &[T], lr: f64) {
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        self.t += 1;
        let c1 = T::of(1.0 - f64::powi(b1, self.t));
        let c2 = T::of(1.0 - f64::powi(b2, self.t));
        let (b1, b2, eps, lr) = (T::of(b1), T::of(b2), T::of(eps), T::of(lr));
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
}

/// Pairs of `corpus` encoded for `model`, styled under the model's scheme.
pub fn encode_corpus<T: Scalar>(model: &StyledGenerator<T>, corpus: &Corpus) -> Result<Vec<EncodedPair>> {
    let scheme = model.config().scheme;
    corpus
        .pairs()
        .iter()
        .map(|p| model.encode_pair(&p.post, &p.response, project_label(p.style, scheme)))
        .collect()
}

pub fn perplexity<T: Scalar>(model: &StyledGenerator<T>, pairs: &[EncodedPair]) -> f64 {
    model.loss(pairs).as_f64().exp()
}

/// Builds a vocabulary from `corpus` and trains a fresh model on it with
/// teacher forcing.
pub fn train_generator<T: Scalar>(
    corpus: &Corpus,
    scheme: Scheme,
    config: &GenConfig,
    hyper: &GenHyper,
) -> Result<(StyledGenerator<T>, GenTrainLog)> {
    let present: BTreeSet<_> = corpus.pairs().iter().map(|p| project_label(p.style, scheme)).collect();
    let missing: Vec<String> = scheme
        .categories()
        .iter()
        .filter(|c| !present.contains(c))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingCategories(missing));
    }
    let config = GenConfig { scheme, ..config.clone() };
    let mut model = StyledGenerator::new(config, Vocab::from_corpus(corpus), hyper.seed)?;
    let pairs = encode_corpus(&model, corpus)?;
    let log = train_on_pairs(&mut model, &pairs, hyper)?;
    Ok((model, log))
}

/// Mini-batch Adam on mean token cross-entropy.
pub fn train_on_pairs<T: Scalar>(
    model: &mut StyledGenerator<T>,
    pairs: &[EncodedPair],
    hyper: &GenHyper,
) -> Result<GenTrainLog> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if hyper.batch_size == 0 || !(hyper.learning_rate > 0.0) {
        return Err(Error::invalid("generator batch_size and learning_rate must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut adam = Adam::new(model.n_params());
    let mut grad = vec![T::zero(); model.n_params()];
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut log = GenTrainLog { initial_loss: model.loss(pairs).as_f64(), epoch_loss: Vec::new() };
    let mut batch = Vec::with_capacity(hyper.batch_size);
    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut tokens = 0usize;
        for chunk in order.chunks(hyper.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| pairs[i].clone()));
            grad.iter_mut().for_each(|g| *g = T::zero());
            let loss = model.accumulate_gradient(&batch, &mut grad);
            let n: usize = batch.iter().map(|p| p.target.len()).sum();
            loss_sum += loss.as_f64() * n as f64;
            tokens += n;
            if hyper.clip_norm > 0.0 {
                let norm = grad.iter().map(|g| g.as_f64() * g.as_f64()).sum::<f64>().sqrt();
                if norm > hyper.clip_norm {
                    let s = T::of(hyper.clip_norm / norm);
                    grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            adam.step(&mut model.params, &grad, hyper.learning_rate);
        }
        let mean = loss_sum / tokens as f64;
        if !mean.is_finite() {
            return Err(Error::invalid("generator training diverged"));
        }
        log.epoch_loss.push(mean);
    }
    Ok(log)
}
