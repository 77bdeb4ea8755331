//! Gender-pair text classifiers trained on concatenated responses.
//!
//! Two linear models share the [`TextClassifier`] interface: a unigram
//! bag-of-words logistic regression ([`BowModel`]) and a hashed word-n-gram
//! averaged-embedding model ([`NGramHashModel`]).

mod bow;
mod eval;
mod ngram;

pub use bow::{BowHyper, BowModel, FeatureCounts};
pub use eval::{evaluate, ClassMetrics, EvalReport};
pub use ngram::{ngram_hash, NGramHashModel, NGramHyper};

use serde::{Deserialize, Serialize};

use crate::corpus::{Category, Scheme, Token};
use crate::scalar::{argmax, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction<T> {
    pub label: Category,
    pub confidence: T,
    pub distribution: Vec<T>,
}

impl<T: Scalar> Prediction<T> {
    pub(crate) fn from_distribution(scheme: Scheme, distribution: Vec<T>) -> Self {
        let best = argmax(&distribution);
        Prediction {
            label: scheme.categories()[best],
            confidence: distribution[best],
            distribution,
        }
    }

    /// Probability assigned to `category`, zero if it is not in the scheme.
    pub fn probability_of(&self, scheme: Scheme, category: Category) -> T {
        scheme
            .index_of(category)
            .map_or(T::zero(), |i| self.distribution[i])
    }
}

pub trait TextClassifier<T: Scalar> {
    fn scheme(&self) -> Scheme;

    fn predict(&self, tokens: &[Token]) -> Prediction<T>;

    fn categories(&self) -> &'static [Category] {
        self.scheme().categories()
    }
}

impl<T: Scalar, C: TextClassifier<T> + ?Sized> TextClassifier<T> for &C {
    fn scheme(&self) -> Scheme {
        (**self).scheme()
    }

    fn predict(&self, tokens: &[Token]) -> Prediction<T> {
        (**self).predict(tokens)
    }
}

fn label_index(scheme: Scheme, label: Category) -> crate::Result<usize> {
    scheme.index_of(label).ok_or_else(|| crate::Error::SchemeMismatch {
        expected: scheme.to_string(),
        found: label.to_string(),
    })
}

/// Scheme of a labelled sample set. Label sets valid under both the three-
/// and four-way schemes (only ff and mm) resolve to four-way.
pub fn infer_scheme(samples: &[crate::ConcatSample]) -> crate::Result<Scheme> {
    let labels: std::collections::BTreeSet<_> = samples.iter().map(|s| s.label).collect();
    if labels.len() < 2 {
        return Err(crate::Error::invalid(
            "training needs at least two categories",
        ));
    }
    [Scheme::TwoWay, Scheme::FourWay, Scheme::ThreeWay]
        .into_iter()
        .find(|s| labels.iter().all(|l| l.belongs_to(*s)))
        .ok_or_else(|| crate::Error::invalid("sample labels mix schemes"))
}
