use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{infer_scheme, label_index, Prediction, TextClassifier};
use crate::corpus::{ConcatSample, Scheme, Token, SEPARATOR};
use crate::error::{Error, Result};
use crate::persist::FORMAT_VERSION;
use crate::scalar::{log_sum_exp, softmax, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BowHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for BowHyper {
    fn default() -> Self {
        BowHyper {
            learning_rate: 0.5,
            epochs: 30,
            l2: 1e-6,
            batch_size: 16,
            seed: 0,
        }
    }
}

/// Sparse term-frequency vector, sorted by feature id.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCounts<T> {
    pub entries: Vec<(usize, T)>,
}

impl<T: Scalar> FeatureCounts<T> {
    pub fn count_of(&self, feature: usize) -> T {
        self.entries
            .binary_search_by_key(&feature, |&(f, _)| f)
            .map_or(T::zero(), |i| self.entries[i].1)
    }
}

/// Multinomial logistic regression over raw unigram term frequencies.
#[derive(Clone, Debug)]
pub struct BowModel<T> {
    scheme: Scheme,
    vocabulary: Vec<Token>,
    index: HashMap<Token, usize>,
    /// Feature-major: `weights[f * n_categories + c]`.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct BowFile {
    format_version: u32,
    kind: String,
    scheme: Scheme,
    vocabulary: Vec<Token>,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// Per-epoch mean training objective; entry 0 is before any update.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub objective: Vec<f64>,
}

impl<T: Scalar> BowModel<T> {
    /// A zero-weight model over a fixed vocabulary (sorted and de-duplicated).
    pub fn zeros(scheme: Scheme, vocabulary: impl IntoIterator<Item = Token>) -> Self {
        let mut vocabulary: Vec<Token> = vocabulary
            .into_iter()
            .filter(|t| t != SEPARATOR)
            .collect();
        vocabulary.sort();
        vocabulary.dedup();
        let index = vocabulary
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let c = scheme.n_categories();
        BowModel {
            scheme,
            weights: vec![T::zero(); vocabulary.len() * c],
            bias: vec![T::zero(); c],
            vocabulary,
            index,
        }
    }

    pub fn vocabulary(&self) -> &[Token] {
        &self.vocabulary
    }

    pub fn n_categories(&self) -> usize {
        self.bias.len()
    }

    pub fn is_trained(&self) -> bool {
        !self.vocabulary.is_empty()
    }

    pub fn feature_id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn feature_weights(&self, feature: usize) -> &[T] {
        let c = self.n_categories();
        &self.weights[feature * c..(feature + 1) * c]
    }

    /// Term frequencies of in-vocabulary tokens; the separator and unknown tokens are dropped.
    pub fn featurize(&self, tokens: &[Token]) -> FeatureCounts<T> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for t in tokens {
            if let Some(&f) = self.index.get(t.as_str()) {
                *counts.entry(f).or_default() += 1;
            }
        }
        FeatureCounts {
            entries: counts
                .into_iter()
                .map(|(f, n)| (f, T::from_usize(n).unwrap()))
                .collect(),
        }
    }

    pub fn logits(&self, counts: &FeatureCounts<T>) -> Vec<T> {
        let c = self.n_categories();
        let mut out = self.bias.clone();
        for &(f, x) in &counts.entries {
            for (o, &w) in out.iter_mut().zip(&self.weights[f * c..(f + 1) * c]) {
                *o += w * x;
            }
        }
        out
    }

    pub fn predict_counts(&self, counts: &FeatureCounts<T>) -> Prediction<T> {
        self.prediction_from_logits(&self.logits(counts))
    }

    pub fn prediction_from_logits(&self, logits: &[T]) -> Prediction<T> {
        Prediction::from_distribution(self.scheme, softmax(logits))
    }

    /// Mean cross-entropy plus `l2/2 * |W|^2` and its gradient (weights, bias).
    pub fn objective_and_gradient(
        &self,
        batch: &[(FeatureCounts<T>, usize)],
        l2: T,
    ) -> (T, Vec<T>, Vec<T>) {
        let c = self.n_categories();
        let mut gw = vec![T::zero(); self.weights.len()];
        let mut gb = vec![T::zero(); c];
        let mut loss = T::zero();
        let scale = T::one() / T::from_usize(batch.len().max(1)).unwrap();
        for (counts, y) in batch {
            let logits = self.logits(counts);
            loss += log_sum_exp(&logits) - logits[*y];
            let mut g = softmax(&logits);
            g[*y] -= T::one();
            for (b, gi) in gb.iter_mut().zip(&g) {
                *b += *gi * scale;
            }
            for &(f, x) in &counts.entries {
                for (w, gi) in gw[f * c..(f + 1) * c].iter_mut().zip(&g) {
                    *w += *gi * x * scale;
                }
            }
        }
        let mut sq = T::zero();
        for (g, &w) in gw.iter_mut().zip(&self.weights) {
            *g += l2 * w;
            sq += w * w;
        }
        (loss * scale + l2 * sq / T::of(2.0), gw, gb)
    }

    fn objective(&self, data: &[(FeatureCounts<T>, usize)], l2: T) -> f64 {
        let n = T::from_usize(data.len().max(1)).unwrap();
        let ce: T = data
            .iter()
            .map(|(x, y)| {
                let l = self.logits(x);
                log_sum_exp(&l) - l[*y]
            })
            .sum();
        let sq: T = self.weights.iter().map(|&w| w * w).sum();
        (ce / n + l2 * sq / T::of(2.0)).as_f64()
    }

    pub fn train(samples: &[ConcatSample], hyper: &BowHyper) -> Result<Self> {
        Ok(Self::train_with_log(samples, hyper)?.0)
    }

    /// Mini-batch SGD. The L2 term is applied as a proximal shrink
    /// `w / (1 + lr * l2)` so that very large penalties stay stable.
    pub fn train_with_log(samples: &[ConcatSample], hyper: &BowHyper) -> Result<(Self, TrainLog)> {
        let scheme = infer_scheme(samples)?;
        if hyper.batch_size == 0 || !(hyper.learning_rate > 0.0) || !(hyper.l2 >= 0.0) {
            return Err(Error::invalid("bow: batch_size, learning_rate must be positive and l2 non-negative"));
        }
        let mut model = Self::zeros(
            scheme,
            samples.iter().flat_map(|s| s.tokens.iter().cloned()),
        );
        let data: Vec<(FeatureCounts<T>, usize)> = samples
            .iter()
            .map(|s| Ok((model.featurize(&s.tokens), label_index(scheme, s.label)?)))
            .collect::<Result<_>>()?;
        let c = model.n_categories();
        let l2 = T::of(hyper.l2);
        let lr = T::of(hyper.learning_rate);
        let shrink = T::one() / (T::one() + lr * l2);
        let mut log = TrainLog {
            objective: vec![model.objective(&data, l2)],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut gw = vec![T::zero(); model.weights.len()];
        let mut touched: Vec<usize> = Vec::new();
        for _ in 0..hyper.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(hyper.batch_size) {
                let scale = lr / T::from_usize(batch.len()).unwrap();
                let mut gb = vec![T::zero(); c];
                for &i in batch {
                    let (counts, y) = &data[i];
                    let mut g = softmax(&model.logits(counts));
                    g[*y] -= T::one();
                    for (b, gi) in gb.iter_mut().zip(&g) {
                        *b += *gi;
                    }
                    for &(f, x) in &counts.entries {
                        touched.push(f);
                        for (w, gi) in gw[f * c..(f + 1) * c].iter_mut().zip(&g) {
                            *w += *gi * x;
                        }
                    }
                }
                for (b, g) in model.bias.iter_mut().zip(&gb) {
                    *b -= scale * *g;
                }
                touched.sort_unstable();
                touched.dedup();
                for &f in &touched {
                    for k in f * c..(f + 1) * c {
                        model.weights[k] -= scale * gw[k];
                        gw[k] = T::zero();
                    }
                }
                touched.clear();
                if hyper.l2 > 0.0 {
                    for w in model.weights.iter_mut() {
                        *w *= shrink;
                    }
                }
            }
            log.objective.push(model.objective(&data, l2));
        }
        if model.weights.iter().chain(&model.bias).any(|w| !w.is_finite()) {
            return Err(Error::invalid("bow training diverged; lower the learning rate"));
        }
        Ok((model, log))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = BowFile {
            format_version: FORMAT_VERSION,
            kind: "bow".into(),
            scheme: self.scheme,
            vocabulary: self.vocabulary.clone(),
            weights: self.weights.iter().map(|w| w.as_f64()).collect(),
            bias: self.bias.iter().map(|w| w.as_f64()).collect(),
        };
        let bytes = serde_json::to_vec(&file)?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let file: BowFile = serde_json::from_slice(&bytes)?;
        if file.format_version != FORMAT_VERSION || file.kind != "bow" {
            return Err(Error::Format(format!(
                "expected bow model version {FORMAT_VERSION}, found {} version {}",
                file.kind, file.format_version
            )));
        }
        let mut model = Self::zeros(file.scheme, file.vocabulary);
        if file.weights.len() != model.weights.len() || file.bias.len() != model.bias.len() {
            return Err(Error::Format("bow parameter shape mismatch".into()));
        }
        model.weights = file.weights.into_iter().map(T::of).collect();
        model.bias = file.bias.into_iter().map(T::of).collect();
        Ok(model)
    }
}

impl<T: Scalar> TextClassifier<T> for BowModel<T> {
    fn scheme(&self) -> Scheme {
        self.scheme
    }

    fn predict(&self, tokens: &[Token]) -> Prediction<T> {
        self.predict_counts(&self.featurize(tokens))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Category;

    fn toks(s: &str) -> Vec<Token> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn sample(s: &str, label: Category) -> ConcatSample {
        ConcatSample {
            tokens: toks(s),
            label,
            n_responses: 1,
        }
    }

    fn toy() -> Vec<ConcatSample> {
        let mut v = Vec::new();
        for _ in 0..10 {
            v.push(sample("x", Category::Female));
            v.push(sample("y", Category::Male));
        }
        v
    }

    fn toy_hyper() -> BowHyper {
        BowHyper {
            epochs: 100,
            ..BowHyper::default()
        }
    }

    #[test]
    fn separable_toy_is_learned() {
        let (m, log) = BowModel::<f64>::train_with_log(&toy(), &toy_hyper()).unwrap();
        for s in toy() {
            assert_eq!(m.predict(&s.tokens).label, s.label);
        }
        let p = m.predict(&toks("x"));
        assert_eq!(p.label, Category::Female);
        assert!(p.confidence > 0.9);
        assert!(log.objective.last().unwrap() <= &log.objective[0]);
    }

    #[test]
    fn duplicated_token_keeps_label() {
        let m = BowModel::<f64>::train(&toy(), &toy_hyper()).unwrap();
        assert_eq!(m.predict(&toks("x x")).label, m.predict(&toks("x")).label);
    }

    #[test]
    fn empty_input_predicts_from_bias() {
        let m = BowModel::<f64>::train(&toy(), &toy_hyper()).unwrap();
        let p = m.predict(&[]);
        assert_eq!(p.distribution, softmax(&m.bias));
        let unknown = m.predict(&toks("never seen"));
        assert_eq!(unknown.distribution, p.distribution);
    }

    #[test]
    fn huge_l2_gives_near_uniform_predictions() {
        let hyper = BowHyper {
            l2: 1e6,
            batch_size: 20,
            ..toy_hyper()
        };
        let m = BowModel::<f64>::train(&toy(), &hyper).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-5));
        let p = m.predict(&toks("x"));
        assert!((p.distribution[0] - 0.5).abs() < 1e-3);
        let q = m.predict(&toks("y"));
        assert!((p.distribution[0] - q.distribution[0]).abs() < 1e-5);
    }

    #[test]
    fn single_category_is_rejected() {
        let v = vec![sample("a", Category::Ff), sample("b", Category::Ff)];
        assert!(BowModel::<f64>::train(&v, &BowHyper::default()).is_err());
    }

    #[test]
    fn separator_is_not_a_feature() {
        let v = vec![
            sample(&format!("a {SEPARATOR} b"), Category::Ff),
            sample("c", Category::Mm),
        ];
        let m = BowModel::<f64>::train(&v, &BowHyper::default()).unwrap();
        assert!(m.feature_id(SEPARATOR).is_none());
        assert_eq!(m.vocabulary(), &["a", "b", "c"]);
    }

    #[test]
    fn training_is_deterministic() {
        let a = BowModel::<f64>::train(&toy(), &toy_hyper()).unwrap();
        let b = BowModel::<f64>::train(&toy(), &toy_hyper()).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.bias, b.bias);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let data = vec![
            sample("a b b c", Category::Ff),
            sample("c d", Category::Fm),
            sample("a d d", Category::Mf),
            sample("b", Category::Mm),
        ];
        let mut m = BowModel::<f64>::zeros(Scheme::FourWay, data.iter().flat_map(|s| s.tokens.clone()));
        // deterministic non-trivial parameters
        for (i, w) in m.weights.iter_mut().enumerate() {
            *w = ((i * 37 % 11) as f64 - 5.0) * 0.07;
        }
        for (i, b) in m.bias.iter_mut().enumerate() {
            *b = i as f64 * 0.1 - 0.15;
        }
        let batch: Vec<_> = data
            .iter()
            .map(|s| (m.featurize(&s.tokens), label_index(Scheme::FourWay, s.label).unwrap()))
            .collect();
        let l2 = 0.01;
        let (_, gw, gb) = m.objective_and_gradient(&batch, l2);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        fn param(m: &mut BowModel<f64>, k: usize) -> &mut f64 {
            let nw = m.weights.len();
            if k < nw {
                &mut m.weights[k]
            } else {
                &mut m.bias[k - nw]
            }
        }
        for k in 0..m.weights.len() + m.bias.len() {
            let orig = *param(&mut m, k);
            *param(&mut m, k) = orig + h;
            let plus = m.objective_and_gradient(&batch, l2).0;
            *param(&mut m, k) = orig - h;
            let minus = m.objective_and_gradient(&batch, l2).0;
            *param(&mut m, k) = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = if k < gw.len() { gw[k] } else { gb[k - gw.len()] };
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn save_load_round_trip() {
        let m = BowModel::<f64>::train(&toy(), &toy_hyper()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bow.json");
        m.save(&p).unwrap();
        let back = BowModel::<f64>::load(&p).unwrap();
        assert_eq!(back.weights, m.weights);
        assert_eq!(back.vocabulary(), m.vocabulary());
        assert_eq!(back.predict(&toks("x")), m.predict(&toks("x")));
    }

    #[test]
    fn works_in_single_precision() {
        let m = BowModel::<f32>::train(&toy(), &toy_hyper()).unwrap();
        assert_eq!(m.predict(&toks("y")).label, Category::Male);
    }
}
