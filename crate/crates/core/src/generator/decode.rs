use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::StyledGenerator;
use super::vocab::{Vocab, BOS, EOS};
use crate::corpus::{Category, Token};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case", deny_unknown_fields)]
pub enum Decoding {
    Greedy,
    /// Sample from the `k` most likely tokens after dividing logits by `temperature`.
    TopK { k: usize, temperature: f64, seed: u64 },
}

/// Decoded response ids (without the end token).
pub fn generate_ids<T: Scalar>(
    model: &StyledGenerator<T>,
    post: &[usize],
    style: usize,
    strategy: &Decoding,
    max_len: usize,
) -> Result<Vec<usize>> {
    if let Decoding::TopK { k, temperature, .. } = strategy {
        if *k == 0 || !(*temperature > 0.0) {
            return Err(Error::invalid("top-k decoding needs k >= 1 and a positive temperature"));
        }
    }
    let limit = max_len.min(model.config().max_len - 1);
    let ex = model.encode_post_ids(post)?;
    let mut rng = match strategy {
        Decoding::TopK { seed, .. } => Some(ChaCha8Rng::seed_from_u64(*seed)),
        Decoding::Greedy => None,
    };
    let mut input = vec![BOS];
    while input.len() <= limit {
        let logits = model.next_logits(&ex, &input, style);
        let mut ranked: Vec<(usize, f64)> = logits
            .iter()
            .enumerate()
            .filter(|&(i, _)| i == EOS || !Vocab::is_reserved(i))
            .map(|(i, &x)| (i, x.as_f64()))
            .collect();
        // stable sort keeps the lowest id first among ties
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        let next = match (strategy, rng.as_mut()) {
            (Decoding::TopK { k, temperature, .. }, Some(rng)) if *k > 1 => {
                let top = &ranked[..(*k).min(ranked.len())];
                let max = top[0].1;
                let weights: Vec<f64> = top.iter().map(|&(_, x)| ((x - max) / temperature).exp()).collect();
                let dist = WeightedIndex::new(&weights).map_err(|e| Error::invalid(e.to_string()))?;
                top[dist.sample(rng)].0
            }
            _ => ranked[0].0,
        };
        if next == EOS {
            break;
        }
        input.push(next);
    }
    Ok(input[1..].to_vec())
}

pub fn generate<T: Scalar>(
    model: &StyledGenerator<T>,
    post: &[Token],
    category: Category,
    strategy: &Decoding,
    max_len: usize,
) -> Result<Vec<Token>> {
    let style = model.style_index(category)?;
    let ids = generate_ids(model, &model.vocab().encode(post), style, strategy, max_len)?;
    Ok(ids.into_iter().map(|i| model.vocab().token(i).to_string()).collect())
}

/// One line of a generation output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub post: String,
    pub category: Category,
    pub response: String,
    /// Gold response of the post, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

pub fn write_generations(path: &Path, records: &[GenerationRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_generations(path: &Path) -> Result<Vec<GenerationRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() }))
        .collect()
}
