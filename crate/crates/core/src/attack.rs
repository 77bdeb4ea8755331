//! Pivot-free classification: recall of each target category after the
//! pivot words of some source category are deleted from its test samples.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Category, ConcatSample, Token};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::textclf::TextClassifier;

/// Remove every occurrence of the given tokens. Separators are kept.
pub fn strip_pivots(sample: &ConcatSample, pivots: &BTreeSet<Token>) -> ConcatSample {
    ConcatSample {
        tokens: sample
            .tokens
            .iter()
            .filter(|t| !pivots.contains(*t))
            .cloned()
            .collect(),
        label: sample.label,
        n_responses: sample.n_responses,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackCell {
    pub recall_after: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub source: String,
    pub cells: BTreeMap<Category, AttackCell>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub targets: Vec<Category>,
    pub baseline: BTreeMap<Category, f64>,
    /// One row per source pivot set, in the order given.
    pub rows: Vec<AttackRow>,
}

impl AttackReport {
    pub fn cell(&self, source: &str, target: Category) -> Option<AttackCell> {
        self.rows
            .iter()
            .find(|r| r.source == source)
            .and_then(|r| r.cells.get(&target).copied())
    }

    /// Fixed-width table: sources down, targets across, `recall (delta)` cells.
    pub fn to_text(&self) -> String {
        let width = 14;
        let mut out = format!("{:<10}", "removed");
        for t in &self.targets {
            let _ = write!(out, "{:>width$}", t.as_str());
        }
        out.push('\n');
        let _ = write!(out, "{:<10}", "none");
        for t in &self.targets {
            let _ = write!(out, "{:>width$}", format!("{:.2}", self.baseline[t]));
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<10}", row.source);
            for t in &self.targets {
                let c = row.cells[t];
                let _ = write!(out, "{:>width$}", format_cell(c));
            }
            out.push('\n');
        }
        out
    }
}

/// `0.07 (-0.70)`: recall after stripping, then its change against baseline.
pub fn format_cell(c: AttackCell) -> String {
    // keep "-0.00" out of the table
    let delta = if c.delta.abs() < 0.005 { 0.0 } else { c.delta };
    format!("{:.2} ({}{:.2})", c.recall_after, if delta >= 0.0 { "+" } else { "" }, delta)
}

fn recall<T: Scalar, C: TextClassifier<T> + ?Sized>(model: &C, samples: &[&ConcatSample], target: Category) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let hits = samples
        .iter()
        .filter(|s| model.predict(&s.tokens).label == target)
        .count();
    hits as f64 / samples.len() as f64
}

/// Recall of every target category with each source's pivots stripped from
/// that target's samples. Sources may come from another scheme.
pub fn attack_matrix<T: Scalar, C: TextClassifier<T> + ?Sized>(
    model: &C,
    test_samples: &[ConcatSample],
    pivot_sets: &[(String, BTreeSet<Token>)],
) -> Result<AttackReport> {
    let scheme = model.scheme();
    if let Some(s) = test_samples.iter().find(|s| !s.label.belongs_to(scheme)) {
        return Err(Error::SchemeMismatch {
            expected: scheme.to_string(),
            found: s.label.to_string(),
        });
    }
    let targets = scheme.categories().to_vec();
    let by_target: BTreeMap<Category, Vec<&ConcatSample>> = targets
        .iter()
        .map(|&t| (t, test_samples.iter().filter(|s| s.label == t).collect()))
        .collect();
    let baseline: BTreeMap<Category, f64> = targets
        .iter()
        .map(|&t| (t, recall(model, &by_target[&t], t)))
        .collect();
    let rows = pivot_sets
        .iter()
        .map(|(source, pivots)| {
            let cells = targets
                .iter()
                .map(|&t| {
                    let recall_after = if pivots.is_empty() {
                        baseline[&t]
                    } else {
                        let stripped: Vec<ConcatSample> =
                            by_target[&t].iter().map(|s| strip_pivots(s, pivots)).collect();
                        recall(model, &stripped.iter().collect::<Vec<_>>(), t)
                    };
                    (t, AttackCell { recall_after, delta: recall_after - baseline[&t] })
                })
                .collect();
            AttackRow { source: source.clone(), cells }
        })
        .collect();
    Ok(AttackReport { targets, baseline, rows })
}
