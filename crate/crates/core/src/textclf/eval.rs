use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{label_index, TextClassifier};
use crate::corpus::{Category, ConcatSample, Scheme};
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub category: Category,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scheme: Scheme,
    pub per_category: Vec<ClassMetrics>,
    pub macro_f1: f64,
    pub accuracy: f64,
    /// `confusion[true][predicted]`, indexed in scheme category order.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalReport {
    pub fn from_confusion(scheme: Scheme, confusion: Vec<Vec<usize>>) -> Self {
        let k = scheme.n_categories();
        let total: usize = confusion.iter().flatten().sum();
        let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let per_category: Vec<ClassMetrics> = (0..k)
            .map(|i| {
                let support: usize = confusion[i].iter().sum();
                let predicted: usize = (0..k).map(|r| confusion[r][i]).sum();
                let precision = ratio(confusion[i][i], predicted);
                let recall = ratio(confusion[i][i], support);
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                ClassMetrics { category: scheme.categories()[i], precision, recall, f1, support }
            })
            .collect();
        let macro_f1 = per_category.iter().map(|c| c.f1).sum::<f64>() / k as f64;
        EvalReport { scheme, per_category, macro_f1, accuracy: ratio(correct, total), confusion }
    }

    pub fn recall_of(&self, category: Category) -> Option<f64> {
        self.per_category.iter().find(|c| c.category == category).map(|c| c.recall)
    }

    /// Confusion count between two categories, summed over both directions.
    pub fn confusion_between(&self, a: Category, b: Category) -> usize {
        match (self.scheme.index_of(a), self.scheme.index_of(b)) {
            (Some(i), Some(j)) => self.confusion[i][j] + self.confusion[j][i],
            _ => 0,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,precision,recall,f1,support\n");
        for c in &self.per_category {
            let _ = writeln!(out, "{},{},{},{},{}", c.category, c.precision, c.recall, c.f1, c.support);
        }
        let _ = writeln!(out, "macro,,,{},", self.macro_f1);
        out
    }

    pub fn confusion_csv(&self) -> String {
        let cats = self.scheme.categories();
        let mut out = String::from("true\\predicted");
        for c in cats {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
        for (c, row) in cats.iter().zip(&self.confusion) {
            let _ = write!(out, "{c}");
            for n in row {
                let _ = write!(out, ",{n}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn evaluate<T: Scalar, C: TextClassifier<T> + ?Sized>(
    model: &C,
    samples: &[ConcatSample],
) -> Result<EvalReport> {
    let scheme = model.scheme();
    let k = scheme.n_categories();
    let mut confusion = vec![vec![0usize; k]; k];
    for s in samples {
        let truth = label_index(scheme, s.label)?;
        let pred = label_index(scheme, model.predict(&s.tokens).label)?;
        confusion[truth][pred] += 1;
    }
    Ok(EvalReport::from_confusion(scheme, confusion))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_have_unit_f1() {
        let r = EvalReport::from_confusion(Scheme::ThreeWay, vec![vec![5, 0, 0], vec![0, 4, 0], vec![0, 0, 6]]);
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn hand_computed_metrics() {
        // truth female: 3 right, 1 wrong; truth male: 2 right, 2 wrong
        let r = EvalReport::from_confusion(Scheme::TwoWay, vec![vec![3, 1], vec![2, 2]]);
        let f = &r.per_category[0];
        assert_eq!(f.precision, 3.0 / 5.0);
        assert_eq!(f.recall, 0.75);
        assert!((f.f1 - 2.0 * 0.6 * 0.75 / 1.35).abs() < 1e-15);
        assert_eq!(r.per_category[1].support, 4);
        assert_eq!(r.accuracy, 5.0 / 8.0);
        assert_eq!(r.confusion_between(Category::Female, Category::Male), 3);
    }

    #[test]
    fn empty_class_counts_as_zero() {
        let r = EvalReport::from_confusion(Scheme::TwoWay, vec![vec![0, 0], vec![0, 3]]);
        assert_eq!(r.per_category[0].f1, 0.0);
        assert_eq!(r.macro_f1, 0.5);
    }

    #[test]
    fn csv_has_one_row_per_category() {
        let r = EvalReport::from_confusion(Scheme::FourWay, vec![vec![1; 4]; 4]);
        assert_eq!(r.to_csv().lines().count(), 6);
        assert!(r.confusion_csv().starts_with("true\\predicted,ff,fm,mf,mm"));
    }
}
