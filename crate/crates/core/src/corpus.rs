//! Dialogue corpus: labels, the three categorisation schemes, JSONL I/O,
//! balanced splits and concatenated classifier samples.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Token = String;

/// Joins the responses inside a [`ConcatSample`]. Never a feature.
pub const SEPARATOR: &str = "⟂SEP⟂";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Female, Gender::Male];

    pub fn code(self) -> char {
        match self {
            Gender::Female => 'f',
            Gender::Male => 'm',
        }
    }

    pub fn from_code(code: &str) -> Option<Gender> {
        match code {
            "f" => Some(Gender::Female),
            "m" => Some(Gender::Male),
            _ => None,
        }
    }

    pub fn other(self) -> Gender {
        match self {
            Gender::Female => Gender::Male,
            Gender::Male => Gender::Female,
        }
    }
}

/// Who is speaking to whom. The label renders the listener first: a male
/// speaker talking to a female listener is `fm`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StylePair {
    pub speaker: Gender,
    pub listener: Gender,
}

impl StylePair {
    pub const fn new(speaker: Gender, listener: Gender) -> Self {
        StylePair { speaker, listener }
    }

    /// All four pairs in canonical label order: ff, fm, mf, mm.
    pub fn all() -> [StylePair; 4] {
        use Gender::*;
        [
            StylePair::new(Female, Female),
            StylePair::new(Male, Female),
            StylePair::new(Female, Male),
            StylePair::new(Male, Male),
        ]
    }

    pub fn label(self) -> String {
        format!("{}{}", self.listener.code(), self.speaker.code())
    }

    pub fn is_same_gender(self) -> bool {
        self.speaker == self.listener
    }

    /// The pair seen from the other side of the exchange.
    pub fn reversed(self) -> StylePair {
        StylePair::new(self.listener, self.speaker)
    }

    pub fn category(self) -> Category {
        project_label(self, Scheme::FourWay)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "2way", alias = "TwoWay")]
    TwoWay,
    #[serde(rename = "3way", alias = "ThreeWay")]
    ThreeWay,
    #[serde(rename = "4way", alias = "FourWay")]
    FourWay,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::TwoWay, Scheme::ThreeWay, Scheme::FourWay];

    pub fn categories(self) -> &'static [Category] {
        use Category::*;
        match self {
            Scheme::TwoWay => &[Female, Male],
            Scheme::ThreeWay => &[Ff, FmMf, Mm],
            Scheme::FourWay => &[Ff, Fm, Mf, Mm],
        }
    }

    pub fn n_categories(self) -> usize {
        self.categories().len()
    }

    pub fn index_of(self, category: Category) -> Option<usize> {
        self.categories().iter().position(|&c| c == category)
    }

    /// Short artifact tag: `2way`, `3way`, `4way`.
    pub fn tag(self) -> &'static str {
        match self {
            Scheme::TwoWay => "2way",
            Scheme::ThreeWay => "3way",
            Scheme::FourWay => "4way",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2way" | "two-way" | "TwoWay" => Ok(Scheme::TwoWay),
            "3way" | "three-way" | "ThreeWay" => Ok(Scheme::ThreeWay),
            "4way" | "four-way" | "FourWay" => Ok(Scheme::FourWay),
            other => Err(Error::invalid(format!("unknown scheme {other:?}"))),
        }
    }
}

/// A class label under one of the schemes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Female,
    Male,
    Ff,
    FmMf,
    Fm,
    Mf,
    Mm,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Female => "female",
            Category::Male => "male",
            Category::Ff => "ff",
            Category::FmMf => "fm/mf",
            Category::Fm => "fm",
            Category::Mf => "mf",
            Category::Mm => "mm",
        }
    }

    pub fn scheme(self) -> Scheme {
        match self {
            Category::Female | Category::Male => Scheme::TwoWay,
            Category::FmMf => Scheme::ThreeWay,
            Category::Ff | Category::Mm => Scheme::FourWay,
            Category::Fm | Category::Mf => Scheme::FourWay,
        }
    }

    /// Whether the category exists under `scheme` (ff and mm belong to both
    /// the three- and four-way schemes).
    pub fn belongs_to(self, scheme: Scheme) -> bool {
        scheme.index_of(self).is_some()
    }

    /// Speaker gender implied by the category, if it determines one.
    pub fn speaker_gender(self) -> Option<Gender> {
        match self {
            Category::Female | Category::Ff | Category::Mf => Some(Gender::Female),
            Category::Male | Category::Mm | Category::Fm => Some(Gender::Male),
            Category::FmMf => None,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "female" => Category::Female,
            "male" => Category::Male,
            "ff" => Category::Ff,
            "fm/mf" | "mf/fm" => Category::FmMf,
            "fm" => Category::Fm,
            "mf" => Category::Mf,
            "mm" => Category::Mm,
            other => return Err(Error::UnknownCategory(other.to_string())),
        })
    }
}

impl Serialize for Category {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn project_label(style: StylePair, scheme: Scheme) -> Category {
    use Gender::*;
    match scheme {
        Scheme::TwoWay => match style.speaker {
            Female => Category::Female,
            Male => Category::Male,
        },
        Scheme::ThreeWay => match (style.listener, style.speaker) {
            (Female, Female) => Category::Ff,
            (Male, Male) => Category::Mm,
            _ => Category::FmMf,
        },
        Scheme::FourWay => match (style.listener, style.speaker) {
            (Female, Female) => Category::Ff,
            (Female, Male) => Category::Fm,
            (Male, Female) => Category::Mf,
            (Male, Male) => Category::Mm,
        },
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DialoguePair {
    pub post: Vec<Token>,
    pub response: Vec<Token>,
    pub style: StylePair,
    pub dialogue_id: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Synthetic,
    External,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pairs: Vec<DialoguePair>,
    vocabulary: BTreeMap<Token, usize>,
    provenance: Provenance,
}

fn check_token(tok: &str) -> std::result::Result<(), String> {
    if tok.is_empty() {
        return Err("empty token".into());
    }
    if tok.chars().any(char::is_whitespace) {
        return Err(format!("token {tok:?} contains whitespace"));
    }
    Ok(())
}

fn check_pair(pair: &DialoguePair) -> std::result::Result<(), String> {
    if pair.response.is_empty() {
        return Err("empty response".into());
    }
    for tok in pair.post.iter().chain(&pair.response) {
        check_token(tok)?;
    }
    if pair.response.iter().any(|t| t == SEPARATOR) {
        return Err(format!("response contains the reserved separator {SEPARATOR}"));
    }
    Ok(())
}

impl Corpus {
    pub fn new(pairs: Vec<DialoguePair>, provenance: Provenance) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        for (i, p) in pairs.iter().enumerate() {
            check_pair(p).map_err(|message| Error::Parse {
                line: i + 1,
                message,
            })?;
        }
        Ok(Self::new_unchecked(pairs, provenance))
    }

    fn new_unchecked(pairs: Vec<DialoguePair>, provenance: Provenance) -> Self {
        let mut vocabulary = BTreeMap::new();
        for p in &pairs {
            for t in p.post.iter().chain(&p.response) {
                *vocabulary.entry(t.clone()).or_insert(0) += 1;
            }
        }
        Corpus {
            pairs,
            vocabulary,
            provenance,
        }
    }

    pub fn pairs(&self) -> &[DialoguePair] {
        &self.pairs
    }

    pub fn vocabulary(&self) -> &BTreeMap<Token, usize> {
        &self.vocabulary
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Subset by pair index, keeping the given order. An empty selection is allowed
    /// here since split parts (e.g. a zero tune fraction) may legitimately be empty.
    pub fn select(&self, indices: &[usize]) -> Corpus {
        let pairs = indices.iter().map(|&i| self.pairs[i].clone()).collect();
        Corpus::new_unchecked(pairs, self.provenance)
    }

    /// Restrict to pairs whose dialogue id is in `ids`, preserving corpus order.
    pub fn filter_ids(&self, ids: &std::collections::BTreeSet<String>) -> Corpus {
        let pairs = self
            .pairs
            .iter()
            .filter(|p| ids.contains(&p.dialogue_id))
            .cloned()
            .collect();
        Corpus::new_unchecked(pairs, self.provenance)
    }

    /// Responses grouped by category under `scheme`, in corpus order.
    pub fn responses_by_category(&self, scheme: Scheme) -> BTreeMap<Category, Vec<&[Token]>> {
        let mut groups: BTreeMap<Category, Vec<&[Token]>> = BTreeMap::new();
        for p in &self.pairs {
            groups
                .entry(project_label(p.style, scheme))
                .or_default()
                .push(&p.response);
        }
        groups
    }

    pub fn category_counts(&self, scheme: Scheme) -> BTreeMap<Category, usize> {
        let mut counts: BTreeMap<Category, usize> =
            scheme.categories().iter().map(|&c| (c, 0)).collect();
        for p in &self.pairs {
            *counts.entry(project_label(p.style, scheme)).or_insert(0) += 1;
        }
        counts
    }

    pub fn dialogue_ids(&self) -> Vec<String> {
        self.pairs.iter().map(|p| p.dialogue_id.clone()).collect()
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for p in &self.pairs {
            let rec = Record::from_pair(p);
            serde_json::to_writer(&mut out, &rec)?;
            out.push(b'\n');
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    post: String,
    response: String,
    speaker_gender: String,
    listener_gender: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dialogue_id: Option<String>,
}

impl Record {
    fn from_pair(p: &DialoguePair) -> Self {
        Record {
            post: p.post.join(" "),
            response: p.response.join(" "),
            speaker_gender: p.style.speaker.code().to_string(),
            listener_gender: p.style.listener.code().to_string(),
            dialogue_id: Some(p.dialogue_id.clone()),
        }
    }
}

/// Whitespace tokenization, as used for corpus text.
pub fn tokenize(s: &str) -> Vec<Token> {
    s.split_whitespace().map(str::to_owned).collect()
}

/// Parse JSONL corpus text. Blank lines are skipped.
pub fn parse_corpus(reader: impl BufRead, provenance: Provenance) -> Result<Corpus> {
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let gender = |code: &str, field: &str| {
            Gender::from_code(code).ok_or_else(|| Error::Parse {
                line: lineno,
                message: format!("unknown gender code {code:?} in {field}"),
            })
        };
        let speaker = gender(&rec.speaker_gender, "speaker_gender")?;
        let listener = gender(&rec.listener_gender, "listener_gender")?;
        let pair = DialoguePair {
            post: tokenize(&rec.post),
            response: tokenize(&rec.response),
            style: StylePair::new(speaker, listener),
            dialogue_id: rec.dialogue_id.unwrap_or_else(|| format!("L{lineno}")),
        };
        check_pair(&pair).map_err(|message| Error::Parse {
            line: lineno,
            message,
        })?;
        pairs.push(pair);
    }
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(Corpus::new_unchecked(pairs, provenance))
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(f), Provenance::External)
}

#[derive(Clone, Debug)]
pub struct Split {
    pub train: Corpus,
    pub tune: Corpus,
    pub test: Corpus,
}

/// Stratified split by four-way category. Test takes `test_fraction` of each
/// category; the remainder is down-sampled to the smallest category count and
/// `tune_fraction` of that balanced pool is held out per category.
pub fn split_and_balance(
    corpus: &Corpus,
    test_fraction: f64,
    tune_fraction: f64,
    seed: u64,
) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test_fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    if !(0.0..1.0).contains(&tune_fraction) || test_fraction + tune_fraction >= 1.0 {
        return Err(Error::invalid(format!(
            "tune_fraction {tune_fraction} with test_fraction {test_fraction} must sum below 1"
        )));
    }
    let mut groups: BTreeMap<Category, Vec<usize>> = Scheme::FourWay
        .categories()
        .iter()
        .map(|&c| (c, Vec::new()))
        .collect();
    for (i, p) in corpus.pairs.iter().enumerate() {
        groups.get_mut(&p.style.category()).expect("four-way").push(i);
    }
    let missing: Vec<String> = groups
        .iter()
        .filter(|(_, v)| v.is_empty())
        .map(|(c, _)| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingCategories(missing));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test = Vec::new();
    let mut pools = Vec::new();
    for idx in groups.values_mut() {
        idx.shuffle(&mut rng);
        let n_test = ((idx.len() as f64) * test_fraction).round() as usize;
        let n_test = n_test.min(idx.len() - 1);
        test.extend_from_slice(&idx[..n_test]);
        pools.push(idx[n_test..].to_vec());
    }
    let balanced = pools.iter().map(Vec::len).min().expect("four categories");
    let n_tune = ((balanced as f64) * tune_fraction).round() as usize;
    let mut train = Vec::new();
    let mut tune = Vec::new();
    for pool in &pools {
        tune.extend_from_slice(&pool[..n_tune]);
        train.extend_from_slice(&pool[n_tune..balanced]);
    }
    train.sort_unstable();
    tune.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        train: corpus.select(&train),
        tune: corpus.select(&tune),
        test: corpus.select(&test),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConcatSample {
    pub tokens: Vec<Token>,
    pub label: Category,
    pub n_responses: usize,
}

/// Join `n` distinct responses drawn uniformly from `pool` with the separator.
pub fn concat_responses<S: AsRef<[Token]>>(pool: &[S], n: usize, rng: &mut impl Rng) -> Vec<Token> {
    let picks = index::sample(rng, pool.len(), n);
    let mut tokens = Vec::new();
    for (k, i) in picks.iter().enumerate() {
        if k > 0 {
            tokens.push(SEPARATOR.to_string());
        }
        tokens.extend(pool[i].as_ref().iter().cloned());
    }
    tokens
}

/// Concatenation sampling over grouped responses: `samples_per_category`
/// samples per category, each from `n` responses drawn without replacement.
pub fn concat_from_groups<S: AsRef<[Token]>>(
    groups: &BTreeMap<Category, Vec<S>>,
    scheme: Scheme,
    n: usize,
    samples_per_category: usize,
    rng: &mut impl Rng,
) -> Result<Vec<ConcatSample>> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let mut samples = Vec::with_capacity(samples_per_category * scheme.n_categories());
    for &cat in scheme.categories() {
        let pool = groups.get(&cat).map(Vec::as_slice).unwrap_or(&[]);
        if pool.len() < n {
            return Err(Error::NotEnoughResponses {
                category: cat.to_string(),
                available: pool.len(),
                required: n,
            });
        }
        for _ in 0..samples_per_category {
            samples.push(ConcatSample {
                tokens: concat_responses(pool, n, rng),
                label: cat,
                n_responses: n,
            });
        }
    }
    Ok(samples)
}

pub fn build_concat_samples(
    corpus: &Corpus,
    scheme: Scheme,
    n: usize,
    samples_per_category: usize,
    seed: u64,
) -> Result<Vec<ConcatSample>> {
    let groups = corpus.responses_by_category(scheme);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    concat_from_groups(&groups, scheme, n, samples_per_category, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn pair(id: usize, speaker: Gender, listener: Gender, resp: &str) -> DialoguePair {
        DialoguePair {
            post: tokenize("hello there"),
            response: tokenize(resp),
            style: StylePair::new(speaker, listener),
            dialogue_id: format!("d{id}"),
        }
    }

    fn corpus_with_counts(counts: [usize; 4]) -> Corpus {
        let mut pairs = Vec::new();
        let mut id = 0;
        for (style, &n) in StylePair::all().iter().zip(&counts) {
            for _ in 0..n {
                pairs.push(pair(id, style.speaker, style.listener, "a b"));
                id += 1;
            }
        }
        Corpus::new(pairs, Provenance::Synthetic).unwrap()
    }

    #[test]
    fn label_renders_listener_first() {
        let s = StylePair::new(Gender::Male, Gender::Female);
        assert_eq!(s.label(), "fm");
        assert_eq!(s.category(), Category::Fm);
        assert_eq!(StylePair::new(Gender::Female, Gender::Male).label(), "mf");
    }

    #[test]
    fn projection_examples() {
        use Gender::*;
        assert_eq!(
            project_label(StylePair::new(Female, Male), Scheme::TwoWay),
            Category::Female
        );
        assert_eq!(
            project_label(StylePair::new(Male, Female), Scheme::ThreeWay),
            Category::FmMf
        );
        assert_eq!(
            project_label(StylePair::new(Male, Male), Scheme::FourWay),
            Category::Mm
        );
    }

    #[test]
    fn projection_is_surjective_and_consistent() {
        for scheme in Scheme::ALL {
            let image: std::collections::BTreeSet<_> = StylePair::all()
                .iter()
                .map(|&s| project_label(s, scheme))
                .collect();
            assert_eq!(image.len(), scheme.n_categories());
            assert!(image.iter().all(|c| c.belongs_to(scheme)));
        }
        // the four-way label determines the coarser ones
        for a in StylePair::all() {
            for b in StylePair::all() {
                if a.category() == b.category() {
                    for scheme in Scheme::ALL {
                        assert_eq!(project_label(a, scheme), project_label(b, scheme));
                    }
                }
            }
        }
    }

    #[test]
    fn category_round_trips_through_strings() {
        for scheme in Scheme::ALL {
            for &c in scheme.categories() {
                assert_eq!(c.as_str().parse::<Category>().unwrap(), c);
            }
        }
    }

    #[test]
    fn loads_single_record() {
        let text = r#"{"post":"a b","response":"c","speaker_gender":"m","listener_gender":"f"}"#;
        let c = parse_corpus(Cursor::new(text), Provenance::External).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.pairs()[0].style.label(), "fm");
        assert_eq!(c.pairs()[0].post, vec!["a", "b"]);
        assert_eq!(c.vocabulary().len(), 3);
    }

    #[test]
    fn empty_file_is_an_error() {
        let err = parse_corpus(Cursor::new(""), Provenance::External).unwrap_err();
        assert_eq!(err.to_string(), "empty corpus");
    }

    #[test]
    fn unknown_gender_names_the_line() {
        let text = concat!(
            r#"{"post":"a","response":"c","speaker_gender":"m","listener_gender":"f"}"#,
            "\n",
            r#"{"post":"a","response":"c","speaker_gender":"m","listener_gender":"x"}"#
        );
        match parse_corpus(Cursor::new(text), Provenance::External) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_is_an_error() {
        let text = "{not json}\n";
        assert!(matches!(
            parse_corpus(Cursor::new(text), Provenance::External),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn jsonl_round_trip() {
        let c = corpus_with_counts([2, 1, 1, 3]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        c.write_jsonl(&path).unwrap();
        let back = load_corpus(&path).unwrap();
        assert_eq!(back.pairs(), c.pairs());
    }

    #[test]
    fn balanced_split_counts() {
        let c = corpus_with_counts([100, 100, 100, 100]);
        let s = split_and_balance(&c, 0.25, 0.1, 7).unwrap();
        assert_eq!(s.test.len(), 100);
        assert_eq!(s.train.len() + s.tune.len(), 300);
        for (_, n) in s.train.category_counts(Scheme::FourWay) {
            assert_eq!(n, s.train.len() / 4);
        }
        let mut joint = s.train.category_counts(Scheme::FourWay);
        for (c, n) in s.tune.category_counts(Scheme::FourWay) {
            *joint.get_mut(&c).unwrap() += n;
        }
        assert!(joint.values().all(|&n| n == 75));
    }

    #[test]
    fn unbalanced_split_is_down_sampled() {
        let c = corpus_with_counts([200, 100, 100, 100]);
        let s = split_and_balance(&c, 0.25, 0.1, 1).unwrap();
        let counts = s.train.category_counts(Scheme::FourWay);
        let first = counts[&Category::Ff];
        assert!(counts.values().all(|&n| n == first));
        // 75 per category remain before tuning hold-out
        assert_eq!(first + s.tune.category_counts(Scheme::FourWay)[&Category::Ff], 75);
        assert_eq!(s.test.category_counts(Scheme::FourWay)[&Category::Ff], 50);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let c = corpus_with_counts([40, 30, 20, 25]);
        let a = split_and_balance(&c, 0.2, 0.1, 99).unwrap();
        let b = split_and_balance(&c, 0.2, 0.1, 99).unwrap();
        assert_eq!(a.train.dialogue_ids(), b.train.dialogue_ids());
        assert_eq!(a.test.dialogue_ids(), b.test.dialogue_ids());
        let mut seen = std::collections::BTreeSet::new();
        for id in a
            .train
            .dialogue_ids()
            .into_iter()
            .chain(a.tune.dialogue_ids())
            .chain(a.test.dialogue_ids())
        {
            assert!(seen.insert(id), "dialogue id reused across splits");
        }
    }

    #[test]
    fn split_reports_missing_categories() {
        let c = corpus_with_counts([5, 0, 5, 0]);
        match split_and_balance(&c, 0.2, 0.1, 0) {
            Err(Error::MissingCategories(m)) => assert_eq!(m, vec!["fm", "mm"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let c = corpus_with_counts([5, 5, 5, 5]);
        assert!(split_and_balance(&c, 0.0, 0.1, 0).is_err());
        assert!(split_and_balance(&c, 0.6, 0.5, 0).is_err());
    }

    #[test]
    fn concat_identity_case() {
        let c = Corpus::new(
            vec![pair(0, Gender::Female, Gender::Female, "a b")],
            Provenance::Synthetic,
        )
        .unwrap();
        let mut groups = BTreeMap::new();
        groups.insert(Category::Ff, vec![c.pairs()[0].response.clone()]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pool = &groups[&Category::Ff];
        assert_eq!(concat_responses(pool, 1, &mut rng), vec!["a", "b"]);
    }

    #[test]
    fn concat_structure_and_determinism() {
        let mut pairs = Vec::new();
        for (k, style) in StylePair::all().iter().enumerate() {
            for i in 0..30 {
                let resp = format!("t{k} u{i} v");
                pairs.push(pair(k * 100 + i, style.speaker, style.listener, &resp));
            }
        }
        let c = Corpus::new(pairs, Provenance::Synthetic).unwrap();
        let s = build_concat_samples(&c, Scheme::FourWay, 20, 50, 3).unwrap();
        assert_eq!(s.len(), 200);
        for x in &s {
            assert_eq!(x.tokens.iter().filter(|t| *t == SEPARATOR).count(), 19);
            assert_eq!(x.tokens.len(), 20 * 3 + 19);
            assert_eq!(x.n_responses, 20);
        }
        assert_eq!(s, build_concat_samples(&c, Scheme::FourWay, 20, 50, 3).unwrap());
    }

    #[test]
    fn concat_needs_enough_responses() {
        let c = corpus_with_counts([3, 3, 3, 3]);
        assert!(matches!(
            build_concat_samples(&c, Scheme::FourWay, 4, 1, 0),
            Err(Error::NotEnoughResponses { .. })
        ));
        // merged schemes pool responses
        assert!(build_concat_samples(&c, Scheme::TwoWay, 6, 1, 0).is_ok());
    }
}
