use std::path::Path;

use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{infer_scheme, label_index, Prediction, TextClassifier};
use crate::corpus::{ConcatSample, Scheme, Token, SEPARATOR};
use crate::error::{Error, Result};
use crate::persist::{read_blob, write_blob};
use crate::scalar::{log_sum_exp, softmax, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NGramHyper {
    pub dim: usize,
    pub buckets: usize,
    pub n_max: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for NGramHyper {
    fn default() -> Self {
        NGramHyper {
            dim: 32,
            buckets: 1 << 18,
            n_max: 2,
            learning_rate: 1.0,
            epochs: 10,
            seed: 0,
        }
    }
}

const HASH_BASE: u64 = 1_099_511_628_211;

/// Polynomial rolling hash over the bytes of a word n-gram. Token
/// boundaries feed a 0xff byte, which never occurs inside UTF-8 text.
pub fn ngram_hash<S: AsRef<str>>(tokens: &[S]) -> u64 {
    let mut h: u64 = 0;
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            h = h.wrapping_mul(HASH_BASE).wrapping_add(0xff);
        }
        for b in t.as_ref().bytes() {
            h = h.wrapping_mul(HASH_BASE).wrapping_add(u64::from(b) + 1);
        }
    }
    h
}

/// fastText-style classifier: a sample is the mean of the bucket embeddings
/// of its unigrams and word n-grams (orders 2..=n_max, never spanning a
/// response separator), followed by a linear softmax layer.
#[derive(Clone, Debug)]
pub struct NGramHashModel<T> {
    scheme: Scheme,
    pub dim: usize,
    pub buckets: usize,
    pub n_max: usize,
    /// `buckets x dim`, row-major.
    pub embeddings: Vec<T>,
    /// `categories x dim`, row-major.
    pub output: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct NGramHeader {
    kind: String,
    scheme: Scheme,
    dim: usize,
    buckets: usize,
    n_max: usize,
    /// Buckets stored in the blob after the output matrix; all others are zero.
    rows: Vec<u32>,
}

impl<T: Scalar> NGramHashModel<T> {
    pub fn new(scheme: Scheme, dim: usize, buckets: usize, n_max: usize) -> Result<Self> {
        if dim < 1 || buckets < 1 || n_max < 1 {
            return Err(Error::invalid("dim, buckets and n_max must be at least 1"));
        }
        if buckets > u32::MAX as usize {
            return Err(Error::invalid("too many buckets"));
        }
        Ok(NGramHashModel {
            scheme,
            dim,
            buckets,
            n_max,
            embeddings: vec![T::zero(); buckets * dim],
            output: vec![T::zero(); scheme.n_categories() * dim],
        })
    }

    pub fn n_categories(&self) -> usize {
        self.output.len() / self.dim
    }

    /// Bucket ids of every unigram and n-gram occurrence, with multiplicity.
    pub fn features(&self, tokens: &[Token]) -> Vec<usize> {
        let mut out = Vec::new();
        for segment in tokens.split(|t| t == SEPARATOR) {
            for n in 1..=self.n_max {
                for gram in segment.windows(n) {
                    out.push((ngram_hash(gram) % self.buckets as u64) as usize);
                }
            }
        }
        out
    }

    fn hidden(&self, feats: &[usize]) -> Vec<T> {
        let mut h = vec![T::zero(); self.dim];
        if feats.is_empty() {
            return h;
        }
        for &b in feats {
            for (x, &e) in h.iter_mut().zip(&self.embeddings[b * self.dim..(b + 1) * self.dim]) {
                *x += e;
            }
        }
        let inv = T::one() / T::from_usize(feats.len()).unwrap();
        h.iter_mut().for_each(|x| *x *= inv);
        h
    }

    fn logits_of_hidden(&self, h: &[T]) -> Vec<T> {
        self.output
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(h).map(|(&w, &x)| w * x).sum())
            .collect()
    }

    pub fn logits(&self, tokens: &[Token]) -> Vec<T> {
        self.logits_of_hidden(&self.hidden(&self.features(tokens)))
    }

    /// Cross-entropy of one sample and its gradient: `(loss, d_output,
    /// [(bucket, d_embedding_row)])`. Buckets repeat once per occurrence.
    pub fn loss_and_gradient(&self, tokens: &[Token], label: usize) -> (T, Vec<T>, Vec<(usize, Vec<T>)>) {
        let feats = self.features(tokens);
        let h = self.hidden(&feats);
        let logits = self.logits_of_hidden(&h);
        let loss = log_sum_exp(&logits) - logits[label];
        let mut g = softmax(&logits);
        g[label] -= T::one();
        let mut d_out = vec![T::zero(); self.output.len()];
        let mut d_h = vec![T::zero(); self.dim];
        for (c, &gc) in g.iter().enumerate() {
            let row = &self.output[c * self.dim..(c + 1) * self.dim];
            for k in 0..self.dim {
                d_out[c * self.dim + k] = gc * h[k];
                d_h[k] += gc * row[k];
            }
        }
        let inv = if feats.is_empty() {
            T::zero()
        } else {
            T::one() / T::from_usize(feats.len()).unwrap()
        };
        let d_row: Vec<T> = d_h.iter().map(|&x| x * inv).collect();
        let d_emb = feats.into_iter().map(|b| (b, d_row.clone())).collect();
        (loss, d_out, d_emb)
    }

    /// Per-sample SGD with a learning rate decaying linearly to zero.
    /// Buckets never touched by a training n-gram are zeroed at the end, so
    /// unseen n-grams only dilute the average.
    pub fn train(samples: &[ConcatSample], hyper: &NGramHyper) -> Result<Self> {
        Ok(Self::train_with_log(samples, hyper)?.0)
    }

    pub fn train_with_log(samples: &[ConcatSample], hyper: &NGramHyper) -> Result<(Self, Vec<f64>)> {
        let scheme = infer_scheme(samples)?;
        if !(hyper.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        let mut model = Self::new(scheme, hyper.dim, hyper.buckets, hyper.n_max)?;
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let bound = 1.0 / hyper.dim as f64;
        let init = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        for e in model.embeddings.iter_mut() {
            *e = T::of(init.sample(&mut rng));
        }
        let data: Vec<(Vec<usize>, usize)> = samples
            .iter()
            .map(|s| Ok((model.features(&s.tokens), label_index(scheme, s.label)?)))
            .collect::<Result<_>>()?;
        let mut touched = vec![false; model.buckets];
        for (feats, _) in &data {
            for &b in feats {
                touched[b] = true;
            }
        }

        let dim = model.dim;
        let total_steps = (hyper.epochs * data.len()).max(1) as f64;
        let mut step = 0usize;
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut epoch_loss = Vec::with_capacity(hyper.epochs);
        let mut d_h = vec![T::zero(); dim];
        for _ in 0..hyper.epochs {
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            for &i in &order {
                let (feats, y) = &data[i];
                let lr = T::of(hyper.learning_rate * (1.0 - step as f64 / total_steps));
                step += 1;
                let h = model.hidden(feats);
                let logits = model.logits_of_hidden(&h);
                loss_sum += (log_sum_exp(&logits) - logits[*y]).as_f64();
                let mut g = softmax(&logits);
                g[*y] -= T::one();
                d_h.iter_mut().for_each(|x| *x = T::zero());
                for (c, &gc) in g.iter().enumerate() {
                    let row = &mut model.output[c * dim..(c + 1) * dim];
                    for k in 0..dim {
                        d_h[k] += gc * row[k];
                        row[k] -= lr * gc * h[k];
                    }
                }
                if feats.is_empty() {
                    continue;
                }
                let scale = lr / T::from_usize(feats.len()).unwrap();
                for &b in feats {
                    for (e, &d) in model.embeddings[b * dim..(b + 1) * dim].iter_mut().zip(&d_h) {
                        *e -= scale * d;
                    }
                }
            }
            epoch_loss.push(loss_sum / data.len().max(1) as f64);
        }
        for (b, &t) in touched.iter().enumerate() {
            if !t {
                model.embeddings[b * dim..(b + 1) * dim].fill(T::zero());
            }
        }
        if model.embeddings.iter().chain(&model.output).any(|x| !x.is_finite()) {
            return Err(Error::invalid("n-gram training diverged"));
        }
        Ok((model, epoch_loss))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let dim = self.dim;
        let rows: Vec<u32> = (0..self.buckets)
            .filter(|&b| self.embeddings[b * dim..(b + 1) * dim].iter().any(|x| !x.is_zero()))
            .map(|b| b as u32)
            .collect();
        let mut values = self.output.clone();
        for &b in &rows {
            let b = b as usize;
            values.extend_from_slice(&self.embeddings[b * dim..(b + 1) * dim]);
        }
        let header = NGramHeader {
            kind: "ngram".into(),
            scheme: self.scheme,
            dim,
            buckets: self.buckets,
            n_max: self.n_max,
            rows,
        };
        write_blob(path, &header, &values)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, values): (NGramHeader, Vec<T>) = read_blob(path)?;
        if header.kind != "ngram" {
            return Err(Error::Format(format!("expected ngram model, found {}", header.kind)));
        }
        let mut model = Self::new(header.scheme, header.dim, header.buckets, header.n_max)?;
        let n_out = model.output.len();
        if values.len() != n_out + header.rows.len() * model.dim {
            return Err(Error::Format("ngram parameter count mismatch".into()));
        }
        model.output.copy_from_slice(&values[..n_out]);
        let dim = model.dim;
        for (k, &b) in header.rows.iter().enumerate() {
            let b = b as usize;
            if b >= model.buckets {
                return Err(Error::Format("bucket out of range".into()));
            }
            model.embeddings[b * dim..(b + 1) * dim]
                .copy_from_slice(&values[n_out + k * dim..n_out + (k + 1) * dim]);
        }
        Ok(model)
    }
}

impl<T: Scalar> TextClassifier<T> for NGramHashModel<T> {
    fn scheme(&self) -> Scheme {
        self.scheme
    }

    fn predict(&self, tokens: &[Token]) -> Prediction<T> {
        Prediction::from_distribution(self.scheme, softmax(&self.logits(tokens)))
    }
}
