//! Gender-pair dialogue style analysis.
//!
//! The pipeline runs from a (synthetic or supplied) dialogue corpus through
//! gender-pair classifiers, classifier-based pivot word discovery and
//! pivot-free classification, to a style-conditioned response generator and
//! the metrics used to judge its outputs.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common `f64` instantiations.

pub mod attack;
pub mod corpus;
pub mod error;
pub mod generator;
pub mod genmetrics;
pub mod persist;
pub mod pivot;
pub mod scalar;
pub mod synthgen;
pub mod textclf;

pub use corpus::{Category, ConcatSample, Corpus, DialoguePair, Gender, Scheme, StylePair, Token};
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type BowModel = textclf::BowModel<f64>;
pub type NGramHashModel = textclf::NGramHashModel<f64>;
pub type Prediction = textclf::Prediction<f64>;
pub type StyledGenerator = generator::StyledGenerator<f64>;
