//! Style-conditioned response generator.
//!
//! A small transformer encoder/decoder with one set of blocks shared by both
//! sides. The style of a response (a category of some [`Scheme`]) enters
//! every decoder block through a learned style embedding.

mod checkpoint;
mod decode;
mod gradcheck;
pub mod layers;
mod model;
mod train;
mod vocab;

pub use decode::{generate, generate_ids, read_generations, write_generations, Decoding, GenerationRecord};
pub use gradcheck::{grad_check, grad_check_with, GradCheckReport, Mutation};
pub use model::{merge_routes, BlockTrace, EncodedPair, StyledGenerator};
pub use train::{encode_corpus, perplexity, train_generator, train_on_pairs, GenHyper, GenTrainLog};
pub use vocab::{Vocab, BOS, EOS, PAD, RESERVED, SEP, UNK};

use serde::{Deserialize, Serialize};

use crate::corpus::Scheme;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ffn_dim: usize,
    /// Longest post, and longest response plus its end token.
    pub max_len: usize,
    /// Filled in from the vocabulary when a model is built.
    pub vocab_size: usize,
    pub scheme: Scheme,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            dim: 64,
            heads: 2,
            layers: 2,
            ffn_dim: 128,
            max_len: 32,
            vocab_size: 0,
            scheme: Scheme::FourWay,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("dim", self.dim),
            ("heads", self.heads),
            ("layers", self.layers),
            ("ffn_dim", self.ffn_dim),
            ("max_len", self.max_len),
            ("vocab_size", self.vocab_size),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("generator {name} must be at least 1")));
        }
        if !self.dim.is_multiple_of(self.heads) {
            return Err(Error::invalid(format!(
                "generator dim {} is not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        Ok(())
    }
}
