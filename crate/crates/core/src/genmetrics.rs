//! Metrics for generated responses: BLEU, DIST-1, style accuracy, and
//! pivot word precision and recall.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{concat_responses, Category, Gender, Scheme, Token};
use crate::error::{Error, Result};
use crate::generator::GenerationRecord;
use crate::pivot::PivotSet;
use crate::scalar::Scalar;
use crate::textclf::TextClassifier;

/// Generated responses grouped by the category they were asked for.
#[derive(Clone, Debug, PartialEq)]
pub struct StyledOutputs {
    pub scheme: Scheme,
    pub responses: BTreeMap<Category, Vec<Vec<Token>>>,
}

impl StyledOutputs {
    pub fn new(scheme: Scheme, responses: BTreeMap<Category, Vec<Vec<Token>>>) -> Result<Self> {
        if let Some(c) = responses.keys().find(|c| !c.belongs_to(scheme)) {
            return Err(Error::SchemeMismatch { expected: scheme.tag().into(), found: c.to_string() });
        }
        Ok(StyledOutputs { scheme, responses })
    }

    pub fn from_records(scheme: Scheme, records: &[GenerationRecord]) -> Result<Self> {
        let mut responses: BTreeMap<Category, Vec<Vec<Token>>> = BTreeMap::new();
        for r in records {
            responses.entry(r.category).or_default().push(crate::corpus::tokenize(&r.response));
        }
        Self::new(scheme, responses)
    }

    /// The generation vocabulary.
    pub fn vocabulary(&self) -> BTreeSet<&str> {
        self.responses.values().flatten().flatten().map(String::as_str).collect()
    }

    pub fn token_count(&self, category: Category) -> usize {
        self.responses.get(&category).map_or(0, |r| r.iter().map(Vec::len).sum())
    }
}

fn ngram_counts(tokens: &[Token], n: usize) -> HashMap<&[Token], usize> {
    let mut m = HashMap::new();
    for w in tokens.windows(n) {
        *m.entry(w).or_insert(0) += 1;
    }
    m
}

/// Corpus BLEU over 1- and 2-grams with one reference per hypothesis:
/// geometric mean of the clipped precisions times the brevity penalty.
/// A zero 2-gram numerator is smoothed to `1 / (count + 1)`.
pub fn bleu<R: AsRef<[Token]>, H: AsRef<[Token]>>(references: &[R], hypotheses: &[H]) -> Result<f64> {
    if references.len() != hypotheses.len() {
        return Err(Error::Dimension(format!(
            "{} references for {} hypotheses",
            references.len(),
            hypotheses.len()
        )));
    }
    if hypotheses.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut matched = [0usize; 2];
    let mut total = [0usize; 2];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (r, h) in references.iter().zip(hypotheses) {
        let (r, h) = (r.as_ref(), h.as_ref());
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=2 {
            let rc = ngram_counts(r, n);
            for (g, c) in ngram_counts(h, n) {
                matched[n - 1] += c.min(rc.get(g).copied().unwrap_or(0));
                total[n - 1] += c;
            }
        }
    }
    if matched[0] == 0 {
        return Ok(0.0);
    }
    let p1 = matched[0] as f64 / total[0] as f64;
    let p2 = if matched[1] == 0 {
        1.0 / (total[1] + 1) as f64
    } else {
        matched[1] as f64 / total[1] as f64
    };
    let bp = if hyp_len > ref_len { 1.0 } else { (1.0 - ref_len as f64 / hyp_len as f64).exp() };
    Ok(bp * (p1 * p2).sqrt())
}

/// Distinct unigram types over unigram tokens.
pub fn dist1<H: AsRef<[Token]>>(hypotheses: &[H]) -> Result<f64> {
    let mut types = BTreeSet::new();
    let mut tokens = 0usize;
    for h in hypotheses {
        for t in h.as_ref() {
            types.insert(t.as_str());
            tokens += 1;
        }
    }
    if tokens == 0 {
        return Err(Error::invalid("no tokens generated"));
    }
    Ok(types.len() as f64 / tokens as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AccSettings {
    /// Responses per concatenated sample.
    pub concat_n: usize,
    pub trials_per_category: usize,
    pub seed: u64,
}

impl Default for AccSettings {
    fn default() -> Self {
        AccSettings { concat_n: 20, trials_per_category: 200, seed: 0 }
    }
}

/// Fraction of concatenated output samples that `classifier` assigns to
/// `expected(category)`.
fn concat_accuracy<T: Scalar, C: TextClassifier<T> + ?Sized>(
    outputs: &StyledOutputs,
    classifier: &C,
    settings: &AccSettings,
    expected: impl Fn(Category) -> Category,
) -> Result<f64> {
    if settings.concat_n == 0 || settings.trials_per_category == 0 {
        return Err(Error::invalid("concat_n and trials_per_category must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let (mut hits, mut trials) = (0usize, 0usize);
    for (&cat, pool) in &outputs.responses {
        if pool.len() < settings.concat_n {
            return Err(Error::NotEnoughResponses {
                category: cat.to_string(),
                available: pool.len(),
                required: settings.concat_n,
            });
        }
        let want = expected(cat);
        for _ in 0..settings.trials_per_category {
            let tokens = concat_responses(pool, settings.concat_n, &mut rng);
            if classifier.predict(&tokens).label == want {
                hits += 1;
            }
            trials += 1;
        }
    }
    if trials == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(hits as f64 / trials as f64)
}

/// ACC: style accuracy under a classifier of the outputs' own scheme.
pub fn style_acc<T: Scalar, C: TextClassifier<T> + ?Sized>(
    outputs: &StyledOutputs,
    classifier: &C,
    settings: &AccSettings,
) -> Result<f64> {
    if outputs.scheme != classifier.scheme() {
        return Err(Error::SchemeMismatch {
            expected: outputs.scheme.tag().into(),
            found: classifier.scheme().tag().into(),
        });
    }
    concat_accuracy(outputs, classifier, settings, |c| c)
}

/// ACC-2: accuracy of the speaker gender under a two-way classifier. `None`
/// for three-way outputs, whose merged fm/mf category has no single speaker
/// gender.
pub fn style_acc2<T: Scalar, C: TextClassifier<T> + ?Sized>(
    outputs: &StyledOutputs,
    classifier: &C,
    settings: &AccSettings,
) -> Result<Option<f64>> {
    if classifier.scheme() != Scheme::TwoWay {
        return Err(Error::SchemeMismatch { expected: Scheme::TwoWay.tag().into(), found: classifier.scheme().tag().into() });
    }
    if outputs.scheme == Scheme::ThreeWay {
        return Ok(None);
    }
    let acc = concat_accuracy(outputs, classifier, settings, |c| match c.speaker_gender() {
        Some(Gender::Female) => Category::Female,
        _ => Category::Male,
    })?;
    Ok(Some(acc))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PwpScores {
    pub micro: f64,
    pub per_category: BTreeMap<Category, f64>,
}

fn pivots_for(pivots: &PivotSet, category: Category) -> Result<BTreeSet<Token>> {
    if !category.belongs_to(pivots.scheme) {
        return Err(Error::SchemeMismatch { expected: pivots.scheme.tag().into(), found: category.to_string() });
    }
    Ok(pivots.tokens_of(category))
}

/// Pivot word precision: the share of a category's generated tokens that are
/// pivots of that category, and the token-weighted micro average.
pub fn pwp(outputs: &StyledOutputs, pivots: &PivotSet) -> Result<PwpScores> {
    let mut per_category = BTreeMap::new();
    let (mut hits, mut total) = (0usize, 0usize);
    for (&cat, responses) in &outputs.responses {
        let omega = pivots_for(pivots, cat)?;
        let n = outputs.token_count(cat);
        if n == 0 {
            return Err(Error::invalid(format!("category {cat} has no generated tokens")));
        }
        let h = responses.iter().flatten().filter(|t| omega.contains(*t)).count();
        per_category.insert(cat, h as f64 / n as f64);
        hits += h;
        total += n;
    }
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(PwpScores { micro: hits as f64 / total as f64, per_category })
}

fn recall(responses: &[Vec<Token>], omega: &BTreeSet<Token>, source: Category) -> Result<f64> {
    if omega.is_empty() {
        return Err(Error::EmptyPivotSet(source.to_string()));
    }
    let seen: BTreeSet<&Token> = responses.iter().flatten().filter(|t| omega.contains(*t)).collect();
    Ok(seen.len() as f64 / omega.len() as f64)
}

/// Pivot word recall: the share of a category's pivot types that appear at
/// least once in its outputs.
pub fn pwr(outputs: &StyledOutputs, pivots: &PivotSet) -> Result<BTreeMap<Category, f64>> {
    outputs
        .responses
        .iter()
        .map(|(&cat, responses)| Ok((cat, recall(responses, &pivots_for(pivots, cat)?, cat)?)))
        .collect()
}

/// [`pwr`] over the categories whose pivot set is non-empty; the skipped
/// categories are returned alongside.
pub fn pwr_nonempty(outputs: &StyledOutputs, pivots: &PivotSet) -> Result<(BTreeMap<Category, f64>, Vec<Category>)> {
    let mut scores = BTreeMap::new();
    let mut skipped = Vec::new();
    for (&cat, responses) in &outputs.responses {
        let omega = pivots_for(pivots, cat)?;
        if omega.is_empty() {
            skipped.push(cat);
        } else {
            scores.insert(cat, recall(responses, &omega, cat)?);
        }
    }
    Ok((scores, skipped))
}

/// A score of each target category's outputs against every source
/// category's pivots, over one or more pivot sets (for example four-way and
/// two-way).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossMatrix {
    pub targets: Vec<Category>,
    pub sources: Vec<Category>,
    /// `values[target][source]`.
    pub values: Vec<Vec<f64>>,
}

impl CrossMatrix {
    pub fn get(&self, target: Category, source: Category) -> Option<f64> {
        let t = self.targets.iter().position(|&c| c == target)?;
        let s = self.sources.iter().position(|&c| c == source)?;
        Some(self.values[t][s])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("target\\source");
        for s in &self.sources {
            let _ = write!(out, ",{s}");
        }
        out.push('\n');
        for (t, row) in self.targets.iter().zip(&self.values) {
            out.push_str(t.as_str());
            for v in row {
                let _ = write!(out, ",{v:.4}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn cross_pwr(outputs: &StyledOutputs, pivot_sets: &[&PivotSet]) -> Result<CrossMatrix> {
    let sources: Vec<(Category, BTreeSet<Token>)> = pivot_sets
        .iter()
        .flat_map(|set| set.scheme.categories().iter().map(move |&c| (c, set.tokens_of(c))))
        .collect();
    cross_matrix(outputs, sources)
}

/// [`cross_pwr`] restricted to the source categories with a non-empty pivot
/// set; the skipped sources are returned alongside.
pub fn cross_pwr_nonempty(outputs: &StyledOutputs, pivot_sets: &[&PivotSet]) -> Result<(CrossMatrix, Vec<Category>)> {
    let (sources, empty): (Vec<_>, Vec<_>) = pivot_sets
        .iter()
        .flat_map(|set| set.scheme.categories().iter().map(move |&c| (c, set.tokens_of(c))))
        .partition(|(_, omega)| !omega.is_empty());
    Ok((cross_matrix(outputs, sources)?, empty.into_iter().map(|(c, _)| c).collect()))
}

/// PWP of each target category's outputs against every source category's
/// pivots. An empty source set scores zero.
pub fn cross_pwp(outputs: &StyledOutputs, pivot_sets: &[&PivotSet]) -> Result<CrossMatrix> {
    let sources: Vec<(Category, BTreeSet<Token>)> = pivot_sets
        .iter()
        .flat_map(|set| set.scheme.categories().iter().map(move |&c| (c, set.tokens_of(c))))
        .collect();
    let targets: Vec<Category> = outputs.responses.keys().copied().collect();
    let values = targets
        .iter()
        .map(|&t| {
            let n = outputs.token_count(t);
            if n == 0 {
                return Err(Error::invalid(format!("category {t} has no generated tokens")));
            }
            let tokens = || outputs.responses[&t].iter().flatten();
            Ok(sources
                .iter()
                .map(|(_, omega)| tokens().filter(|w| omega.contains(*w)).count() as f64 / n as f64)
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(CrossMatrix { targets, sources: sources.into_iter().map(|(c, _)| c).collect(), values })
}

fn cross_matrix(outputs: &StyledOutputs, sources: Vec<(Category, BTreeSet<Token>)>) -> Result<CrossMatrix> {
    let targets: Vec<Category> = outputs.responses.keys().copied().collect();
    let values = targets
        .iter()
        .map(|t| {
            let responses = &outputs.responses[t];
            sources.iter().map(|(s, omega)| recall(responses, omega, *s)).collect()
        })
        .collect::<Result<_>>()?;
    Ok(CrossMatrix { targets, sources: sources.into_iter().map(|(c, _)| c).collect(), values })
}

/// All metrics of one generator run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub bleu: f64,
    pub dist1: f64,
    pub acc: f64,
    /// `None` where ACC-2 is not applicable.
    pub acc2: Option<f64>,
    pub pwp: PwpScores,
    pub pwr: BTreeMap<Category, f64>,
    pub cross_pwr: CrossMatrix,
}

impl MetricsReport {
    /// Unweighted mean of the per-category PWR values.
    pub fn mean_pwr(&self) -> f64 {
        if self.pwr.is_empty() {
            return 0.0;
        }
        self.pwr.values().sum::<f64>() / self.pwr.len() as f64
    }
}

/// Inputs for [`evaluate_outputs`].
pub struct MetricInputs<'a, C2: ?Sized> {
    pub references: &'a [Vec<Token>],
    pub hypotheses: &'a [Vec<Token>],
    pub outputs: &'a StyledOutputs,
    pub pivots: &'a PivotSet,
    /// Pivot sets for the cross-category matrix.
    pub cross_sets: &'a [&'a PivotSet],
    pub gender_classifier: Option<&'a C2>,
}

pub fn evaluate_outputs<T, C, C2>(inputs: &MetricInputs<'_, C2>, classifier: &C, settings: &AccSettings) -> Result<MetricsReport>
where
    T: Scalar,
    C: TextClassifier<T> + ?Sized,
    C2: TextClassifier<T> + ?Sized,
{
    let acc2 = match inputs.gender_classifier {
        Some(c2) => style_acc2(inputs.outputs, c2, settings)?,
        None => None,
    };
    Ok(MetricsReport {
        bleu: bleu(inputs.references, inputs.hypotheses)?,
        dist1: dist1(inputs.hypotheses)?,
        acc: style_acc(inputs.outputs, classifier, settings)?,
        acc2,
        pwp: pwp(inputs.outputs, inputs.pivots)?,
        pwr: pwr(inputs.outputs, inputs.pivots)?,
        cross_pwr: cross_pwr(inputs.outputs, inputs.cross_sets)?,
    })
}

/// Fixed-width table with one row per run; BLEU is scaled by 100 and PWR is
/// the per-category mean.
pub fn metrics_table(rows: &[(String, &MetricsReport)]) -> String {
    let mut out = format!(
        "{:<10}{:>8}{:>8}{:>8}{:>8}{:>8}{:>8}\n",
        "ID", "BLEU", "DIST", "ACC", "ACC-2", "PWP", "PWR"
    );
    for (id, r) in rows {
        let acc2 = r.acc2.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
        let _ = writeln!(
            out,
            "{:<10}{:>8.2}{:>8.3}{:>8.3}{:>8}{:>8.3}{:>8.3}",
            id,
            r.bleu * 100.0,
            r.dist1,
            r.acc,
            acc2,
            r.pwp.micro,
            r.mean_pwr()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textclf::Prediction;
    use proptest::prelude::*;
    use std::cell::RefCell;

    fn toks(s: &str) -> Vec<Token> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn pivot_set(scheme: Scheme, sets: &[(Category, &[&str])]) -> PivotSet {
        let frequency = sets
            .iter()
            .map(|(c, ws)| (*c, ws.iter().map(|w| (w.to_string(), 50usize)).collect()))
            .collect();
        PivotSet { scheme, confidence_drop: 0.5, min_frequency: 10, frequency }
    }

    fn outputs(entries: &[(Category, &[&str])]) -> StyledOutputs {
        StyledOutputs::new(Scheme::FourWay, entries.iter().map(|(c, rs)| (*c, rs.iter().map(|r| toks(r)).collect())).collect()).unwrap()
    }

    #[test]
    fn bleu_identity_is_exactly_one() {
        let refs = vec![toks("a b c"), toks("d e f g"), toks("h")];
        assert_eq!(bleu(&refs, &refs).unwrap(), 1.0);
    }

    #[test]
    fn bleu_hand_case_and_disjoint_case() {
        let b = bleu(&[toks("a b c d")], &[toks("a b c")]).unwrap();
        assert!((b - (1.0f64 - 4.0 / 3.0).exp()).abs() < 1e-12);
        assert!((b - 0.7165).abs() < 1e-4);
        assert_eq!(bleu(&[toks("a b")], &[toks("c d")]).unwrap(), 0.0);
        // zero 2-gram matches are smoothed, not zeroed
        let s = bleu(&[toks("a b c")], &[toks("c b a")]).unwrap();
        assert!((s - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(bleu::<Vec<Token>, Vec<Token>>(&[], &[]).is_err());
        assert!(bleu(&[toks("a")], &[toks("a"), toks("b")]).is_err());
    }

    #[test]
    fn dist1_examples() {
        assert_eq!(dist1(&[toks("a a a a")]).unwrap(), 0.25);
        assert_eq!(dist1(&[toks("a b"), toks("b c")]).unwrap(), 0.75);
        assert_eq!(dist1(&[toks("x y z")]).unwrap(), 1.0);
        assert!(dist1(&[toks("")]).is_err());
    }

    #[test]
    fn pwp_hand_cases() {
        let p = pivot_set(Scheme::FourWay, &[(Category::Ff, &["a"]), (Category::Mm, &["z"])]);
        let o = outputs(&[(Category::Ff, &["a b", "a c"])]);
        assert_eq!(pwp(&o, &p).unwrap().per_category[&Category::Ff], 0.5);
        let none = outputs(&[(Category::Ff, &["b c"]), (Category::Mm, &["y"])]);
        assert_eq!(pwp(&none, &p).unwrap().micro, 0.0);
        let all = outputs(&[(Category::Ff, &["a a"]), (Category::Mm, &["z"])]);
        assert_eq!(pwp(&all, &p).unwrap().micro, 1.0);
        let empty = outputs(&[(Category::Ff, &[""])]);
        assert!(pwp(&empty, &p).is_err());
    }

    #[test]
    fn pwr_hand_cases() {
        let p = pivot_set(Scheme::FourWay, &[(Category::Ff, &["a", "b", "c", "d"]), (Category::Fm, &[])]);
        let o = outputs(&[(Category::Ff, &["a x", "b a a"])]);
        assert_eq!(pwr(&o, &p).unwrap()[&Category::Ff], 0.5);
        let o = outputs(&[(Category::Ff, &["x y"])]);
        assert_eq!(pwr(&o, &p).unwrap()[&Category::Ff], 0.0);
        let o = outputs(&[(Category::Fm, &["x y"])]);
        match pwr(&o, &p) {
            Err(Error::EmptyPivotSet(c)) => assert_eq!(c, "fm"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cross_pwr_diagonal_matches_pwr_and_includes_gender_columns() {
        let p4 = pivot_set(
            Scheme::FourWay,
            &[(Category::Ff, &["a", "b"]), (Category::Fm, &["c"]), (Category::Mf, &["d"]), (Category::Mm, &["e", "a"])],
        );
        let p2 = pivot_set(Scheme::TwoWay, &[(Category::Female, &["a", "d"]), (Category::Male, &["e"])]);
        let o = outputs(&[(Category::Ff, &["a c"]), (Category::Mm, &["e e b"])]);
        let m = cross_pwr(&o, &[&p4, &p2]).unwrap();
        assert_eq!(m.sources.len(), 6);
        let own = pwr(&o, &p4).unwrap();
        for (&c, &v) in &own {
            assert_eq!(m.get(c, c), Some(v));
        }
        assert_eq!(m.get(Category::Ff, Category::Female), Some(0.5));
        assert_eq!(m.get(Category::Mm, Category::Ff), Some(0.5));
        assert!(m.to_csv().starts_with("target\\source,ff,fm,mf,mm,female,male\n"));
        let sparse = pivot_set(Scheme::TwoWay, &[(Category::Female, &["a"])]);
        assert!(matches!(cross_pwr(&o, &[&sparse]), Err(Error::EmptyPivotSet(_))));
        let (m, skipped) = cross_pwr_nonempty(&o, &[&p4, &sparse]).unwrap();
        assert_eq!(skipped, vec![Category::Male]);
        assert_eq!(m.sources.len(), 5);
        assert_eq!(m.get(Category::Ff, Category::Female), Some(1.0));
    }

    #[test]
    fn pwr_nonempty_skips_empty_sets() {
        let p4 = pivot_set(Scheme::FourWay, &[(Category::Ff, &["a", "b"])]);
        let o = outputs(&[(Category::Ff, &["a c"]), (Category::Mm, &["e"])]);
        assert!(matches!(pwr(&o, &p4), Err(Error::EmptyPivotSet(_))));
        let (scores, skipped) = pwr_nonempty(&o, &p4).unwrap();
        assert_eq!(scores, BTreeMap::from([(Category::Ff, 0.5)]));
        assert_eq!(skipped, vec![Category::Mm]);
    }

    #[test]
    fn cross_pwp_diagonal_matches_pwp() {
        let p4 = pivot_set(Scheme::FourWay, &[(Category::Ff, &["a", "b"]), (Category::Mm, &["e"])]);
        let o = outputs(&[(Category::Ff, &["a c", "b"]), (Category::Mm, &["e e b a"])]);
        let m = cross_pwp(&o, &[&p4]).unwrap();
        let own = pwp(&o, &p4).unwrap().per_category;
        assert_eq!(m.get(Category::Ff, Category::Ff), Some(own[&Category::Ff]));
        assert_eq!(m.get(Category::Mm, Category::Mm), Some(own[&Category::Mm]));
        assert_eq!(m.get(Category::Mm, Category::Ff), Some(0.5));
        assert_eq!(m.get(Category::Ff, Category::Mm), Some(0.0));
        assert_eq!(m.get(Category::Ff, Category::Fm), Some(0.0));
    }

    struct Always(Scheme, Category);

    impl TextClassifier<f64> for Always {
        fn scheme(&self) -> Scheme {
            self.0
        }
        fn predict(&self, _: &[Token]) -> Prediction<f64> {
            let n = self.0.n_categories();
            let mut d = vec![0.0; n];
            d[self.0.index_of(self.1).unwrap()] = 1.0;
            Prediction::from_distribution(self.0, d)
        }
    }

    struct Coin(RefCell<ChaCha8Rng>);

    impl TextClassifier<f64> for Coin {
        fn scheme(&self) -> Scheme {
            Scheme::FourWay
        }
        fn predict(&self, _: &[Token]) -> Prediction<f64> {
            use rand::Rng;
            let k = self.0.borrow_mut().random_range(0..4);
            let mut d = vec![0.0; 4];
            d[k] = 1.0;
            Prediction::from_distribution(Scheme::FourWay, d)
        }
    }

    fn pool(n: usize) -> Vec<Vec<Token>> {
        (0..n).map(|i| vec![format!("w{i}")]).collect()
    }

    #[test]
    fn constant_classifier_on_its_own_category_scores_one() {
        let o = StyledOutputs::new(Scheme::FourWay, [(Category::Mf, pool(25))].into_iter().collect()).unwrap();
        let s = AccSettings { trials_per_category: 30, ..Default::default() };
        assert_eq!(style_acc(&o, &Always(Scheme::FourWay, Category::Mf), &s).unwrap(), 1.0);
        let short = StyledOutputs::new(Scheme::FourWay, [(Category::Mf, pool(5))].into_iter().collect()).unwrap();
        assert!(matches!(
            style_acc(&short, &Always(Scheme::FourWay, Category::Mf), &s),
            Err(Error::NotEnoughResponses { .. })
        ));
        assert!(style_acc(&o, &Always(Scheme::TwoWay, Category::Male), &s).is_err());
    }

    #[test]
    fn random_classifier_scores_near_chance() {
        let o = StyledOutputs::new(Scheme::FourWay, Scheme::FourWay.categories().iter().map(|&c| (c, pool(40))).collect()).unwrap();
        let s = AccSettings { trials_per_category: 100, ..Default::default() };
        let acc = style_acc(&o, &Coin(RefCell::new(ChaCha8Rng::seed_from_u64(11))), &s).unwrap();
        assert!((acc - 0.25).abs() <= 0.05, "{acc}");
    }

    #[test]
    fn acc2_maps_to_speaker_gender_and_is_undefined_for_merged_outputs() {
        let s = AccSettings { trials_per_category: 10, ..Default::default() };
        let four = StyledOutputs::new(Scheme::FourWay, [(Category::Ff, pool(20)), (Category::Mf, pool(20))].into_iter().collect()).unwrap();
        let female = Always(Scheme::TwoWay, Category::Female);
        assert_eq!(style_acc2(&four, &female, &s).unwrap(), Some(1.0));
        let mixed = StyledOutputs::new(Scheme::FourWay, [(Category::Ff, pool(20)), (Category::Fm, pool(20))].into_iter().collect()).unwrap();
        assert_eq!(style_acc2(&mixed, &female, &s).unwrap(), Some(0.5));
        let three = StyledOutputs::new(Scheme::ThreeWay, [(Category::FmMf, pool(20)), (Category::Ff, pool(20))].into_iter().collect()).unwrap();
        assert_eq!(style_acc2(&three, &female, &s).unwrap(), None);
    }

    #[test]
    fn table_scales_bleu_and_marks_missing_acc2() {
        let p = pivot_set(Scheme::FourWay, &[(Category::Ff, &["a"])]);
        let o = outputs(&[(Category::Ff, &["a b"])]);
        let r = MetricsReport {
            bleu: 0.0394,
            dist1: 0.5,
            acc: 0.9,
            acc2: None,
            pwp: pwp(&o, &p).unwrap(),
            pwr: pwr(&o, &p).unwrap(),
            cross_pwr: cross_pwr(&o, &[&p]).unwrap_or(CrossMatrix { targets: vec![], sources: vec![], values: vec![] }),
        };
        let t = metrics_table(&[("model-1".into(), &r)]);
        assert!(t.contains("3.94"), "{t}");
        assert!(t.lines().nth(1).unwrap().contains(" -"), "{t}");
        let json = serde_json::to_value(&r).unwrap();
        for key in ["bleu", "dist1", "acc", "acc2", "pwp", "pwr", "cross_pwr"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    fn arb_outputs() -> impl Strategy<Value = Vec<(usize, Vec<usize>)>> {
        prop::collection::vec((0usize..4, prop::collection::vec(0usize..12, 0..6)), 1..30)
    }

    fn build(raw: &[(usize, Vec<usize>)]) -> StyledOutputs {
        let cats = Scheme::FourWay.categories();
        let mut m: BTreeMap<Category, Vec<Vec<Token>>> = BTreeMap::new();
        for (c, ws) in raw {
            m.entry(cats[*c]).or_default().push(ws.iter().map(|w| format!("t{w}")).collect());
        }
        StyledOutputs::new(Scheme::FourWay, m).unwrap()
    }

    fn random_pivots() -> PivotSet {
        let words: [&[&str]; 4] = [&["t0", "t1", "t2"], &["t3", "t4"], &["t5", "t6", "t0"], &["t7", "t8", "t9"]];
        let cats = Scheme::FourWay.categories();
        pivot_set(Scheme::FourWay, &(0..4).map(|i| (cats[i], words[i])).collect::<Vec<_>>())
    }

    proptest! {
        #[test]
        fn bleu_and_dist1_ignore_hypothesis_order(
            pairs in prop::collection::vec(
                (prop::collection::vec(0usize..6, 1..6), prop::collection::vec(0usize..6, 1..6)), 1..12),
            rot in 0usize..12,
        ) {
            let w = |v: &Vec<usize>| -> Vec<Token> { v.iter().map(|i| format!("w{i}")).collect() };
            let refs: Vec<Vec<Token>> = pairs.iter().map(|p| w(&p.0)).collect();
            let hyps: Vec<Vec<Token>> = pairs.iter().map(|p| w(&p.1)).collect();
            let k = rot % pairs.len();
            let mut r2 = refs.clone();
            let mut h2 = hyps.clone();
            r2.rotate_left(k);
            h2.rotate_left(k);
            r2.reverse();
            h2.reverse();
            prop_assert!((bleu(&refs, &hyps).unwrap() - bleu(&r2, &h2).unwrap()).abs() < 1e-12);
            prop_assert_eq!(dist1(&hyps).unwrap(), dist1(&h2).unwrap());
        }

        #[test]
        fn micro_pwp_is_the_token_weighted_mean(raw in arb_outputs()) {
            let o = build(&raw);
            prop_assume!(o.responses.keys().all(|&c| o.token_count(c) > 0));
            let s = pwp(&o, &random_pivots()).unwrap();
            let total: usize = o.responses.keys().map(|&c| o.token_count(c)).sum();
            let hits: f64 = s.per_category.iter().map(|(&c, v)| v * o.token_count(c) as f64).sum();
            prop_assert!((s.micro - hits / total as f64).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&s.micro));
        }

        #[test]
        fn pwr_never_drops_when_outputs_grow(raw in arb_outputs(), extra in arb_outputs()) {
            let small = build(&raw);
            let mut all = raw.clone();
            all.extend(extra);
            let big = build(&all);
            let p = random_pivots();
            let a = pwr(&small, &p).unwrap();
            let b = pwr(&big, &p).unwrap();
            for (c, v) in a {
                prop_assert!(b[&c] >= v);
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
