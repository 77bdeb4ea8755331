use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{EncodedPair, StyledGenerator};
use super::vocab::{Vocab, BOS, EOS, RESERVED};
use super::GenConfig;
use crate::error::{Error, Result};

const STEP: f64 = 1e-5;
const COORDINATES: usize = 240;
/// Denominator floor of the relative error, so coordinates whose gradient
/// is numerically zero do not dominate.
const FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mutation {
    None,
    /// Forward pass sums the two attention routes instead of averaging them.
    DropMergeAverage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub coordinates: usize,
    pub worst_coordinate: usize,
}

/// Largest relative error between analytic and central-difference
/// gradients over randomly chosen parameters of a randomly initialised model.
pub fn grad_check(config: &GenConfig, seed: u64) -> Result<f64> {
    Ok(grad_check_with(config, seed, COORDINATES, Mutation::None)?.max_relative_error)
}

pub fn grad_check_with(
    config: &GenConfig,
    seed: u64,
    coordinates: usize,
    mutation: Mutation,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_words = config.vocab_size.saturating_sub(RESERVED.len()).max(3);
    let vocab = Vocab::from_tokens((0..n_words).map(|i| format!("t{i:03}")));
    let mut model = StyledGenerator::<f64>::new(config.clone(), vocab, seed)?;
    model.randomize_all(seed.wrapping_add(1), 0.5);
    if mutation == Mutation::DropMergeAverage {
        model.corrupt_merge_average();
    }
    let max_len = model.config().max_len;
    if max_len < 2 {
        return Err(Error::invalid("gradient check needs max_len >= 2"));
    }
    let n_styles = model.config().scheme.n_categories();
    let vocab_len = model.vocab().len();
    let batch: Vec<EncodedPair> = (0..3)
        .map(|_| {
            let n_post = rng.random_range(1..=max_len.min(5));
            let post: Vec<usize> = (0..n_post).map(|_| rng.random_range(RESERVED.len()..vocab_len)).collect();
            let n_resp = rng.random_range(1..max_len.min(5));
            let resp: Vec<usize> = (0..n_resp).map(|_| rng.random_range(RESERVED.len()..vocab_len)).collect();
            let mut input = vec![BOS];
            input.extend(&resp);
            let mut target = resp;
            target.push(EOS);
            EncodedPair { post, input, target, style: rng.random_range(0..n_styles) }
        })
        .collect();

    let (_, analytic) = model.loss_and_gradient(&batch);
    let n = model.n_params();
    let picks = index::sample(&mut rng, n, coordinates.min(n));
    let mut report = GradCheckReport { max_relative_error: 0.0, coordinates: picks.len(), worst_coordinate: 0 };
    for k in picks.iter() {
        let orig = model.params[k];
        model.params[k] = orig + STEP;
        let plus = model.loss(&batch);
        model.params[k] = orig - STEP;
        let minus = model.loss(&batch);
        model.params[k] = orig;
        let numeric = (plus - minus) / (2.0 * STEP);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
        if rel > report.max_relative_error {
            report.max_relative_error = rel;
            report.worst_coordinate = k;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Scheme;

    fn tiny(heads: usize) -> GenConfig {
        GenConfig { dim: 8, heads, layers: 1, ffn_dim: 16, max_len: 6, vocab_size: 12, scheme: Scheme::FourWay }
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        for heads in [1, 2] {
            let err = grad_check(&tiny(heads), 7).unwrap();
            assert!(err <= 1e-4, "heads {heads}: max relative error {err}");
        }
        let two_layers = GenConfig { layers: 2, ..tiny(2) };
        let r = grad_check_with(&two_layers, 3, 300, Mutation::None).unwrap();
        assert!(r.max_relative_error <= 1e-4, "{r:?}");
    }

    #[test]
    fn dropping_the_merge_average_is_detected() {
        let r = grad_check_with(&tiny(2), 7, 240, Mutation::DropMergeAverage).unwrap();
        assert!(r.max_relative_error > 1e-2, "{r:?}");
    }
}
