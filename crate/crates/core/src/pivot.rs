//! Classifier-based pivot word discovery.
//!
//! A word type is a candidate pivot of category `y` for a correctly
//! classified sample when deleting every occurrence of it flips the
//! prediction or lowers the confidence by more than `confidence_drop`. It
//! becomes a pivot once it has been a candidate in more than `min_frequency`
//! samples.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Category, ConcatSample, Scheme, Token};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::textclf::{BowModel, FeatureCounts, Prediction, TextClassifier};

pub const DEFAULT_CONFIDENCE_DROP: f64 = 0.5;
pub const DEFAULT_MIN_FREQUENCY: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct PivotSet {
    pub scheme: Scheme,
    pub confidence_drop: f64,
    pub min_frequency: usize,
    /// Candidate counts `p(t, s)` for every token that was a candidate at
    /// least once, including those below the frequency cutoff.
    pub frequency: BTreeMap<Category, BTreeMap<Token, usize>>,
}

#[derive(Serialize, Deserialize)]
struct PivotEntry {
    token: Token,
    frequency: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PivotFile {
    scheme: Scheme,
    confidence_drop: f64,
    min_frequency: usize,
    categories: BTreeMap<Category, Vec<PivotEntry>>,
}

impl PivotSet {
    /// Pivots of `category` with their frequencies, in token order.
    pub fn pivots_of(&self, category: Category) -> impl Iterator<Item = (&Token, usize)> + '_ {
        self.frequency
            .get(&category)
            .into_iter()
            .flatten()
            .filter(move |(_, &n)| n > self.min_frequency)
            .map(|(t, &n)| (t, n))
    }

    pub fn tokens_of(&self, category: Category) -> BTreeSet<Token> {
        self.pivots_of(category).map(|(t, _)| t.clone()).collect()
    }

    /// Pivot sets of all scheme categories, including empty ones.
    pub fn sets(&self) -> BTreeMap<Category, BTreeSet<Token>> {
        self.scheme
            .categories()
            .iter()
            .map(|&c| (c, self.tokens_of(c)))
            .collect()
    }

    pub fn total(&self) -> usize {
        self.scheme.categories().iter().map(|&c| self.pivots_of(c).count()).sum()
    }

    /// Adds the candidate counts of a discovery run over other samples with
    /// the same model and thresholds.
    pub fn absorb(&mut self, other: &PivotSet) -> Result<()> {
        if other.scheme != self.scheme
            || other.confidence_drop != self.confidence_drop
            || other.min_frequency != self.min_frequency
        {
            return Err(Error::invalid("pivot sets differ in scheme or thresholds"));
        }
        for (&c, counts) in &other.frequency {
            let mine = self.frequency.entry(c).or_default();
            for (t, &n) in counts {
                *mine.entry(t.clone()).or_default() += n;
            }
        }
        Ok(())
    }

    /// The same counts under a different frequency cutoff.
    pub fn with_min_frequency(&self, min_frequency: usize) -> PivotSet {
        PivotSet { min_frequency, ..self.clone() }
    }

    pub fn to_json(&self) -> Result<String> {
        let categories = self
            .scheme
            .categories()
            .iter()
            .map(|&c| {
                let entries = self
                    .pivots_of(c)
                    .map(|(t, frequency)| PivotEntry { token: t.clone(), frequency })
                    .collect();
                (c, entries)
            })
            .collect();
        let file = PivotFile {
            scheme: self.scheme,
            confidence_drop: self.confidence_drop,
            min_frequency: self.min_frequency,
            categories,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Parses the output of [`PivotSet::to_json`]. Sub-threshold counts are not stored there.
    pub fn from_json(text: &str) -> Result<PivotSet> {
        let file: PivotFile = serde_json::from_str(text)?;
        for c in file.categories.keys() {
            if !c.belongs_to(file.scheme) {
                return Err(Error::SchemeMismatch {
                    expected: file.scheme.to_string(),
                    found: c.to_string(),
                });
            }
        }
        let frequency = file
            .categories
            .into_iter()
            .map(|(c, es)| (c, es.into_iter().map(|e| (e.token, e.frequency)).collect()))
            .collect();
        Ok(PivotSet {
            scheme: file.scheme,
            confidence_drop: file.confidence_drop,
            min_frequency: file.min_frequency,
            frequency,
        })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("category\ttoken\tfrequency\n");
        for &c in self.scheme.categories() {
            for (t, n) in self.pivots_of(c) {
                let _ = writeln!(out, "{c}\t{t}\t{n}");
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<PivotSet> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// A sample's term frequencies with cached logits, for cheap deletions.
pub struct CachedSample<'m, T> {
    model: &'m BowModel<T>,
    pub counts: FeatureCounts<T>,
    pub logits: Vec<T>,
}

impl<'m, T: Scalar> CachedSample<'m, T> {
    pub fn new(model: &'m BowModel<T>, tokens: &[Token]) -> Self {
        Self::from_counts(model, model.featurize(tokens))
    }

    pub fn from_counts(model: &'m BowModel<T>, counts: FeatureCounts<T>) -> Self {
        let logits = model.logits(&counts);
        CachedSample { model, counts, logits }
    }

    pub fn prediction(&self) -> Prediction<T> {
        self.model.prediction_from_logits(&self.logits)
    }

    /// Prediction with every occurrence of feature `f` removed.
    pub fn without_feature(&self, f: usize) -> Prediction<T> {
        let x = self.counts.count_of(f);
        if x.is_zero() {
            return self.prediction();
        }
        let logits: Vec<T> = self
            .logits
            .iter()
            .zip(self.model.feature_weights(f))
            .map(|(&l, &w)| l - w * x)
            .collect();
        self.model.prediction_from_logits(&logits)
    }

    pub fn without(&self, token: &str) -> Prediction<T> {
        match self.model.feature_id(token) {
            Some(f) => self.without_feature(f),
            None => self.prediction(),
        }
    }
}

/// Prediction for `base_counts` with all occurrences of `token` deleted,
/// obtained by subtracting the token's contribution from the full logits.
pub fn repredict_without<T: Scalar>(
    model: &BowModel<T>,
    base_counts: &FeatureCounts<T>,
    token: &str,
) -> Prediction<T> {
    CachedSample::from_counts(model, base_counts.clone()).without(token)
}

pub fn discover_pivots<T: Scalar>(
    model: &BowModel<T>,
    samples: &[ConcatSample],
    confidence_drop: f64,
    min_frequency: usize,
) -> Result<PivotSet> {
    if !model.is_trained() {
        return Err(Error::Untrained);
    }
    if !(0.0..=1.0).contains(&confidence_drop) {
        return Err(Error::invalid(format!(
            "confidence_drop must be in [0, 1], got {confidence_drop}"
        )));
    }
    let scheme = model.scheme();
    let drop = T::of(confidence_drop);
    let mut counts: BTreeMap<Category, BTreeMap<usize, usize>> = BTreeMap::new();
    for s in samples {
        if !s.label.belongs_to(scheme) {
            return Err(Error::SchemeMismatch {
                expected: scheme.to_string(),
                found: s.label.to_string(),
            });
        }
        let cached = CachedSample::new(model, &s.tokens);
        let base = cached.prediction();
        if base.label != s.label {
            continue;
        }
        for &(f, _) in &cached.counts.entries {
            let after = cached.without_feature(f);
            if after.label != s.label || base.confidence - after.confidence > drop {
                *counts.entry(s.label).or_default().entry(f).or_default() += 1;
            }
        }
    }
    let frequency = counts
        .into_iter()
        .map(|(c, m)| {
            let named = m
                .into_iter()
                .map(|(f, n)| (model.vocabulary()[f].clone(), n))
                .collect();
            (c, named)
        })
        .collect();
    Ok(PivotSet { scheme, confidence_drop, min_frequency, frequency })
}
