//! Synthetic dialogue corpus with planted gender-pair style signals.
//!
//! Every response token is drawn from a per-category emission table. With
//! probability `pivot_rate` a position belongs to the style channel, which
//! emits a punctuation run, a first-person pronoun, or a topic-lexicon token;
//! otherwise it is drawn from a Zipfian shared pool. Topic draws split between
//! the speaker-gender lexicon and a pair-specific lexicon, with
//! cross-gender pairs pulled toward each other by `lambda` (style matching).
//! A `cross_talk` fraction of topic draws is uniform over every lexicon, so
//! no category is free of other categories' vocabulary.
//!
//! Because sampling reads the same table that [`GroundTruth`] is derived
//! from, the planted pivots are exact rather than estimated.

use std::collections::{BTreeMap, BTreeSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    Category, Corpus, DialoguePair, Gender, Provenance, Scheme, StylePair, Token,
};
use crate::error::{Error, Result};

pub const PUNCTUATION_RUNS: [&str; 5] = ["~~", "!!!!", "~~~~", "!!??", "???"];
pub const PRONOUNS: [&str; 2] = ["我", "你"];

const FEMALE_THEMES: [&str; 5] = ["idol", "drama", "makeup", "skirt", "shop"];
const MALE_THEMES: [&str; 5] = ["phone", "nation", "game", "car", "stock"];
const PAIR_THEMES: [(&str, [&str; 5]); 4] = [
    ("ff", ["kpop", "mask", "bang", "cheap", "taobao"]),
    ("fm", ["morning", "night", "photo", "read", "work"]),
    ("mf", ["uncle", "brother", "drink", "city", "uhhuh"]),
    ("mm", ["huawei", "apple", "samsung", "usa", "taiwan"]),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileParams {
    /// Share of style-channel draws that are punctuation runs.
    pub punctuation_run_rate: f64,
    /// Share of style-channel draws that are first-person pronouns.
    pub pronoun_rate: f64,
    pub mean_length: f64,
}

/// A gender's materialised speaking profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleProfile {
    pub topic_lexicon: Vec<(Token, f64)>,
    pub punctuation_run_rate: f64,
    pub pronoun_rate: f64,
    pub mean_length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub shared_vocab_size: usize,
    pub lexicon_size_per_gender: usize,
    pub pair_lexicon_size: usize,
    pub pivot_rate: f64,
    pub lambda: f64,
    pub female_skew: f64,
    /// Fraction of topic draws that go to the pair-specific lexicon.
    pub pair_share: f64,
    /// Fraction of topic draws spread uniformly over all lexicons.
    pub cross_talk: f64,
    /// Zipf exponent inside each topic lexicon (0 = uniform).
    pub lexicon_skew: f64,
    /// Zipf exponent of the shared pool.
    pub shared_skew: f64,
    pub pairs_per_category: usize,
    pub seed: u64,
    pub female: ProfileParams,
    pub male: ProfileParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            shared_vocab_size: 300,
            lexicon_size_per_gender: 40,
            pair_lexicon_size: 5,
            pivot_rate: 0.15,
            lambda: 0.0,
            female_skew: 0.7,
            pair_share: 0.3,
            cross_talk: 0.2,
            lexicon_skew: 0.0,
            shared_skew: 1.0,
            pairs_per_category: 2000,
            seed: 0,
            female: ProfileParams {
                punctuation_run_rate: 0.2,
                pronoun_rate: 0.12,
                mean_length: 14.0,
            },
            male: ProfileParams {
                punctuation_run_rate: 0.05,
                pronoun_rate: 0.05,
                mean_length: 9.0,
            },
        }
    }
}

fn unit(name: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid(format!("{name} must be in [0, 1], got {x}")));
    }
    Ok(())
}

impl SynthConfig {
    pub fn profile_params(&self, g: Gender) -> &ProfileParams {
        match g {
            Gender::Female => &self.female,
            Gender::Male => &self.male,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, size) in [
            ("shared_vocab_size", self.shared_vocab_size),
            ("lexicon_size_per_gender", self.lexicon_size_per_gender),
            ("pair_lexicon_size", self.pair_lexicon_size),
        ] {
            if size == 0 {
                return Err(Error::invalid(format!(
                    "{name} must be at least 1 to keep lexicons disjoint and non-empty"
                )));
            }
        }
        if self.pairs_per_category == 0 {
            return Err(Error::invalid("pairs_per_category must be at least 1"));
        }
        unit("pivot_rate", self.pivot_rate)?;
        unit("lambda", self.lambda)?;
        unit("female_skew", self.female_skew)?;
        unit("pair_share", self.pair_share)?;
        unit("cross_talk", self.cross_talk)?;
        for (g, p) in [("female", &self.female), ("male", &self.male)] {
            unit(&format!("{g}.punctuation_run_rate"), p.punctuation_run_rate)?;
            unit(&format!("{g}.pronoun_rate"), p.pronoun_rate)?;
            if p.punctuation_run_rate + p.pronoun_rate > 1.0 {
                return Err(Error::invalid(format!(
                    "{g}: punctuation_run_rate + pronoun_rate exceeds 1"
                )));
            }
            if !(p.mean_length >= 1.0) || !p.mean_length.is_finite() {
                return Err(Error::invalid(format!("{g}.mean_length must be >= 1")));
            }
        }
        for (name, s) in [("lexicon_skew", self.lexicon_skew), ("shared_skew", self.shared_skew)] {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub planted_pivots: BTreeMap<Category, BTreeSet<Token>>,
    /// Per-position emission probability of every style token, per four-way category.
    pub style_emission: BTreeMap<Token, BTreeMap<Category, f64>>,
    pub profile_params: SynthConfig,
}

impl GroundTruth {
    /// Planted pivots under a coarser scheme. A merged category emits the
    /// average of its (balanced) member categories.
    pub fn planted_for(&self, scheme: Scheme) -> BTreeMap<Category, BTreeSet<Token>> {
        if scheme == Scheme::FourWay {
            return self.planted_pivots.clone();
        }
        let cats = scheme.categories();
        let mut out: BTreeMap<Category, BTreeSet<Token>> =
            cats.iter().map(|&c| (c, BTreeSet::new())).collect();
        for (tok, per_cat) in &self.style_emission {
            let merged: Vec<f64> = cats
                .iter()
                .map(|&c| {
                    let members: Vec<f64> = StylePair::all()
                        .iter()
                        .filter(|s| crate::corpus::project_label(**s, scheme) == c)
                        .map(|s| per_cat[&s.category()])
                        .collect();
                    members.iter().sum::<f64>() / members.len() as f64
                })
                .collect();
            if let Some(i) = strict_argmax(&merged) {
                out.get_mut(&cats[i]).unwrap().insert(tok.clone());
            }
        }
        out
    }
}

fn strict_argmax(xs: &[f64]) -> Option<usize> {
    let best = crate::scalar::argmax(xs);
    let unique = xs
        .iter()
        .enumerate()
        .all(|(i, &x)| i == best || x < xs[best]);
    (unique && xs[best] > 0.0).then_some(best)
}

fn zipf(n: usize, s: f64) -> Vec<f64> {
    (0..n).map(|i| ((i + 1) as f64).powf(-s)).collect()
}

fn normalise(ws: &[f64]) -> Vec<f64> {
    let total: f64 = ws.iter().sum();
    ws.iter().map(|w| w / total).collect()
}

fn themed(prefix: &str, themes: &[&str; 5], n: usize) -> Vec<Token> {
    (0..n)
        .map(|i| format!("{prefix}_{}{}", themes[i % themes.len()], i / themes.len()))
        .collect()
}

/// Compiled emission tables for a [`SynthConfig`].
#[derive(Clone, Debug)]
pub struct SynthModel {
    config: SynthConfig,
    vocab: Vec<Token>,
    n_shared: usize,
    /// Per four-way category (canonical order), per-position probabilities over `vocab`.
    emission: Vec<Vec<f64>>,
    samplers: Vec<WeightedIndex<f64>>,
    profiles: BTreeMap<Gender, StyleProfile>,
}

impl SynthModel {
    pub fn new(config: &SynthConfig) -> Result<Self> {
        config.validate()?;
        let mut vocab: Vec<Token> = (0..config.shared_vocab_size).map(|i| format!("w{i:03}")).collect();
        let n_shared = vocab.len();
        let shared = normalise(&zipf(n_shared, config.shared_skew));

        let mut add = |tokens: Vec<Token>| {
            let start = vocab.len();
            vocab.extend(tokens);
            start..vocab.len()
        };
        let punct = add(PUNCTUATION_RUNS.iter().map(|s| s.to_string()).collect());
        let pron = add(PRONOUNS.iter().map(|s| s.to_string()).collect());
        let lex_weights = normalise(&zipf(config.lexicon_size_per_gender, config.lexicon_skew));
        let pair_weights = normalise(&zipf(config.pair_lexicon_size, config.lexicon_skew));
        let fem = add(themed("f", &FEMALE_THEMES, config.lexicon_size_per_gender));
        let mal = add(themed("m", &MALE_THEMES, config.lexicon_size_per_gender));
        let pairs: Vec<_> = PAIR_THEMES
            .iter()
            .map(|(p, th)| add(themed(p, th, config.pair_lexicon_size)))
            .collect();
        let v = vocab.len();

        let gender_lex = |g: Gender| match g {
            Gender::Female => fem.clone(),
            Gender::Male => mal.clone(),
        };
        let lex_dist = |range: std::ops::Range<usize>, weights: &[f64]| {
            let mut d = vec![0.0; v];
            for (i, w) in range.zip(weights) {
                d[i] = *w;
            }
            d
        };
        let fem_d = lex_dist(fem.clone(), &lex_weights);
        let mal_d = lex_dist(mal.clone(), &lex_weights);
        let pair_d: Vec<Vec<f64>> = pairs.iter().map(|r| lex_dist(r.clone(), &pair_weights)).collect();
        // uniform over the six lexicons, each with its own internal weights
        let mut background = vec![0.0; v];
        for d in [&fem_d, &mal_d].into_iter().chain(pair_d.iter()) {
            for (b, x) in background.iter_mut().zip(d) {
                *b += x / 6.0;
            }
        }
        let punct_d = lex_dist(punct.clone(), &vec![1.0 / PUNCTUATION_RUNS.len() as f64; PUNCTUATION_RUNS.len()]);
        let pron_d = lex_dist(pron.clone(), &vec![1.0 / PRONOUNS.len() as f64; PRONOUNS.len()]);

        let lambda = config.lambda;
        let skew = config.female_skew;
        let mix = |parts: &[(f64, &Vec<f64>)]| {
            let mut d = vec![0.0; v];
            for (w, part) in parts {
                if *w == 0.0 {
                    continue;
                }
                for (x, p) in d.iter_mut().zip(part.iter()) {
                    *x += w * p;
                }
            }
            d
        };
        let gendered = |g: Gender| if g == Gender::Female { &fem_d } else { &mal_d };
        let matched_gender = mix(&[(skew, &fem_d), (1.0 - skew, &mal_d)]);
        // fm is index 1, mf index 2 in canonical order
        let matched_pair = mix(&[(0.5, &pair_d[1]), (0.5, &pair_d[2])]);

        let mut emission = Vec::with_capacity(4);
        let mut samplers = Vec::with_capacity(4);
        for (k, style) in StylePair::all().into_iter().enumerate() {
            let sp = config.profile_params(style.speaker);
            let (gendered_d, pair_mix, pronoun_rate) = if style.is_same_gender() {
                (gendered(style.speaker).clone(), pair_d[k].clone(), sp.pronoun_rate)
            } else {
                let matched_pron = skew * config.female.pronoun_rate + (1.0 - skew) * config.male.pronoun_rate;
                (
                    mix(&[(1.0 - lambda, gendered(style.speaker)), (lambda, &matched_gender)]),
                    mix(&[(1.0 - lambda, &pair_d[k]), (lambda, &matched_pair)]),
                    (1.0 - lambda) * sp.pronoun_rate + lambda * matched_pron,
                )
            };
            let topic_rate = (1.0 - sp.punctuation_run_rate - pronoun_rate).max(0.0);
            let topic = mix(&[
                (config.cross_talk, &background),
                ((1.0 - config.cross_talk) * (1.0 - config.pair_share), &gendered_d),
                ((1.0 - config.cross_talk) * config.pair_share, &pair_mix),
            ]);
            let style_channel = mix(&[
                (sp.punctuation_run_rate, &punct_d),
                (pronoun_rate, &pron_d),
                (topic_rate, &topic),
            ]);
            let mut d: Vec<f64> = style_channel.iter().map(|p| p * config.pivot_rate).collect();
            for (x, s) in d[..n_shared].iter_mut().zip(&shared) {
                *x += (1.0 - config.pivot_rate) * s;
            }
            samplers.push(WeightedIndex::new(&d).map_err(|e| Error::invalid(e.to_string()))?);
            emission.push(d);
        }

        let profiles = Gender::ALL
            .into_iter()
            .map(|g| {
                let p = config.profile_params(g);
                let topic_lexicon = gender_lex(g)
                    .zip(&lex_weights)
                    .map(|(i, &w)| (vocab[i].clone(), w))
                    .collect();
                (
                    g,
                    StyleProfile {
                        topic_lexicon,
                        punctuation_run_rate: p.punctuation_run_rate,
                        pronoun_rate: p.pronoun_rate,
                        mean_length: p.mean_length,
                    },
                )
            })
            .collect();

        Ok(SynthModel {
            config: config.clone(),
            vocab,
            n_shared,
            emission,
            samplers,
            profiles,
        })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    pub fn vocabulary(&self) -> &[Token] {
        &self.vocab
    }

    pub fn shared_pool(&self) -> &[Token] {
        &self.vocab[..self.n_shared]
    }

    pub fn profile(&self, g: Gender) -> &StyleProfile {
        &self.profiles[&g]
    }

    fn style_index(style: StylePair) -> usize {
        StylePair::all().iter().position(|&s| s == style).expect("four pairs")
    }

    /// Per-position emission probability of `token` for the pair.
    pub fn emission_probability(&self, style: StylePair, token: &str) -> f64 {
        self.vocab
            .iter()
            .position(|t| t == token)
            .map_or(0.0, |i| self.emission[Self::style_index(style)][i])
    }

    fn sample_tokens(&self, style: StylePair, rng: &mut impl Rng) -> Vec<Token> {
        let mean = self.config.profile_params(style.speaker).mean_length;
        let len = Poisson::new(mean).expect("mean_length validated").sample(rng) as usize;
        let len = len.max(1);
        let sampler = &self.samplers[Self::style_index(style)];
        (0..len).map(|_| self.vocab[sampler.sample(rng)].clone()).collect()
    }

    pub fn sample_response(&self, style: StylePair, rng: &mut impl Rng) -> Vec<Token> {
        self.sample_tokens(style, rng)
    }

    /// A post is written by the listener, addressing the speaker.
    pub fn sample_post(&self, style: StylePair, rng: &mut impl Rng) -> Vec<Token> {
        self.sample_tokens(style.reversed(), rng)
    }

    pub fn ground_truth(&self) -> GroundTruth {
        let style_tokens = self.n_shared..self.vocab.len();
        let mut planted: BTreeMap<Category, BTreeSet<Token>> = StylePair::all()
            .iter()
            .map(|s| (s.category(), BTreeSet::new()))
            .collect();
        let mut style_emission = BTreeMap::new();
        for i in style_tokens {
            let probs: Vec<f64> = self.emission.iter().map(|d| d[i]).collect();
            if let Some(k) = strict_argmax(&probs) {
                planted
                    .get_mut(&StylePair::all()[k].category())
                    .unwrap()
                    .insert(self.vocab[i].clone());
            }
            style_emission.insert(
                self.vocab[i].clone(),
                StylePair::all()
                    .iter()
                    .zip(&probs)
                    .map(|(s, &p)| (s.category(), p))
                    .collect(),
            );
        }
        GroundTruth {
            planted_pivots: planted,
            style_emission,
            profile_params: self.config.clone(),
        }
    }

    pub fn generate(&self) -> (Corpus, GroundTruth) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let mut pairs = Vec::with_capacity(4 * self.config.pairs_per_category);
        for style in StylePair::all() {
            for i in 0..self.config.pairs_per_category {
                let post = self.sample_post(style, &mut rng);
                let response = self.sample_response(style, &mut rng);
                pairs.push(DialoguePair {
                    post,
                    response,
                    style,
                    dialogue_id: format!("syn-{}-{i:05}", style.label()),
                });
            }
        }
        let corpus = Corpus::new(pairs, Provenance::Synthetic).expect("generated pairs are valid");
        (corpus, self.ground_truth())
    }
}

pub fn generate_corpus(config: &SynthConfig) -> Result<(Corpus, GroundTruth)> {
    Ok(SynthModel::new(config)?.generate())
}

/// One response for `style`. Compiles the emission tables on every call;
/// use [`SynthModel`] directly when sampling in bulk.
pub fn sample_response(style: StylePair, config: &SynthConfig, rng: &mut impl Rng) -> Result<Vec<Token>> {
    Ok(SynthModel::new(config)?.sample_response(style, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Gender::*, Scheme};

    fn small(pairs: usize) -> SynthConfig {
        SynthConfig {
            pairs_per_category: pairs,
            ..SynthConfig::default()
        }
    }

    fn is_shared(tok: &str) -> bool {
        tok.starts_with('w') && tok[1..].chars().all(|c| c.is_ascii_digit())
    }

    #[test]
    fn zero_pivot_rate_emits_only_shared_tokens() {
        let cfg = SynthConfig {
            pivot_rate: 0.0,
            ..small(50)
        };
        let (corpus, truth) = generate_corpus(&cfg).unwrap();
        assert!(corpus.pairs().iter().all(|p| p.response.iter().all(|t| is_shared(t))));
        assert!(truth.planted_pivots.values().all(BTreeSet::is_empty));
        for per_cat in truth.style_emission.values() {
            assert!(per_cat.values().all(|&p| p == 0.0));
        }
    }

    #[test]
    fn degenerate_length_is_one_shared_token() {
        let mut cfg = small(1);
        cfg.pivot_rate = 0.0;
        cfg.female.mean_length = 1.0;
        cfg.male.mean_length = 1.0;
        let model = SynthModel::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut lens = BTreeSet::new();
        for _ in 0..300 {
            let r = model.sample_response(StylePair::new(Male, Male), &mut rng);
            assert!(is_shared(&r[0]));
            lens.insert(r.len());
        }
        // Poisson(1) zeros are clamped, so length 1 dominates and 0 never occurs
        assert!(!lens.contains(&0));
        assert!(lens.contains(&1));
    }

    #[test]
    fn same_gender_mixture_ignores_lambda_and_other_gender() {
        let cfg = SynthConfig {
            lambda: 0.9,
            cross_talk: 0.0,
            ..small(1)
        };
        let model = SynthModel::new(&cfg).unwrap();
        let ff = StylePair::new(Female, Female);
        let base = SynthModel::new(&SynthConfig { lambda: 0.0, ..cfg.clone() }).unwrap();
        for tok in model.vocabulary() {
            assert_eq!(
                model.emission_probability(ff, tok),
                base.emission_probability(ff, tok)
            );
            if tok.starts_with("m_") || tok.starts_with("mm_") || tok.starts_with("fm_") {
                assert_eq!(model.emission_probability(ff, tok), 0.0);
            }
        }
    }

    #[test]
    fn full_matching_with_full_skew_replaces_male_lexicon() {
        let cfg = SynthConfig {
            lambda: 1.0,
            female_skew: 1.0,
            cross_talk: 0.0,
            ..small(1)
        };
        let model = SynthModel::new(&cfg).unwrap();
        let fm = StylePair::new(Male, Female);
        let ff = StylePair::new(Female, Female);
        for tok in model.vocabulary().iter().filter(|t| t.starts_with("m_")) {
            assert_eq!(model.emission_probability(fm, tok), 0.0);
        }
        let f_tok = "f_idol0";
        assert!(model.emission_probability(fm, f_tok) > 0.0);
        // speaker-male punctuation rate and shared pool still apply, so compare lexicon shares
        let ratio = model.emission_probability(fm, f_tok) / model.emission_probability(fm, "f_drama0");
        let ratio_ff = model.emission_probability(ff, f_tok) / model.emission_probability(ff, "f_drama0");
        assert!((ratio - ratio_ff).abs() < 1e-12);
    }

    #[test]
    fn lambda_zero_keeps_cross_pair_lexicons_disjoint() {
        let cfg = SynthConfig {
            cross_talk: 0.0,
            ..small(1)
        };
        let model = SynthModel::new(&cfg).unwrap();
        let fm = StylePair::new(Male, Female);
        let mf = StylePair::new(Female, Male);
        for tok in model.vocabulary() {
            if tok.starts_with("fm_") {
                assert_eq!(model.emission_probability(mf, tok), 0.0);
            }
            if tok.starts_with("mf_") {
                assert_eq!(model.emission_probability(fm, tok), 0.0);
            }
        }
        let truth = model.ground_truth();
        let sets: Vec<_> = truth.planted_pivots.values().collect();
        for i in 0..sets.len() {
            for j in i + 1..sets.len() {
                assert!(sets[i].is_disjoint(sets[j]));
            }
        }
    }

    #[test]
    fn maximal_matching_makes_cross_gender_lexicon_draws_identical() {
        let cfg = SynthConfig {
            lambda: 1.0,
            female_skew: 0.5,
            ..small(1)
        };
        let model = SynthModel::new(&cfg).unwrap();
        let fm = StylePair::new(Male, Female);
        let mf = StylePair::new(Female, Male);
        let lexicon = |t: &String| {
            !is_shared(t) && !PUNCTUATION_RUNS.contains(&t.as_str()) && !PRONOUNS.contains(&t.as_str())
        };
        let norm = |s: StylePair| {
            let total: f64 = model
                .vocabulary()
                .iter()
                .filter(|t| lexicon(t))
                .map(|t| model.emission_probability(s, t))
                .sum();
            model
                .vocabulary()
                .iter()
                .filter(|t| lexicon(t))
                .map(|t| model.emission_probability(s, t) / total)
                .collect::<Vec<_>>()
        };
        for (a, b) in norm(fm).iter().zip(norm(mf)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn emission_rows_are_distributions() {
        let model = SynthModel::new(&SynthConfig { lambda: 0.4, ..small(1) }).unwrap();
        for s in StylePair::all() {
            let total: f64 = model.vocabulary().iter().map(|t| model.emission_probability(s, t)).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small(30);
        let (a, ta) = generate_corpus(&cfg).unwrap();
        let (b, tb) = generate_corpus(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert_eq!(a.category_counts(Scheme::FourWay).values().copied().collect::<Vec<_>>(), vec![30; 4]);
    }

    #[test]
    fn planted_pivots_are_empirically_maximal() {
        let cfg = SynthConfig {
            lambda: 0.0,
            pivot_rate: 0.15,
            ..small(2000)
        };
        let (corpus, truth) = generate_corpus(&cfg).unwrap();
        let mut counts: BTreeMap<(Category, &str), usize> = BTreeMap::new();
        let mut totals: BTreeMap<Category, usize> = BTreeMap::new();
        for p in corpus.pairs() {
            let c = p.style.category();
            *totals.entry(c).or_default() += p.response.len();
            for t in &p.response {
                *counts.entry((c, t.as_str())).or_default() += 1;
            }
        }
        let freq = |c: Category, t: &str| {
            counts.get(&(c, t)).copied().unwrap_or(0) as f64 / totals[&c] as f64
        };
        let mut checked = 0;
        for (&cat, toks) in &truth.planted_pivots {
            for t in toks {
                for &other in Scheme::FourWay.categories() {
                    if other != cat {
                        assert!(freq(cat, t) > freq(other, t), "{t} planted for {cat} but not maximal vs {other}");
                    }
                }
                checked += 1;
            }
        }
        assert!(checked >= 4 * cfg.pair_lexicon_size);
    }

    #[test]
    fn female_responses_are_longer() {
        let cfg = SynthConfig {
            pairs_per_category: 2000,
            ..SynthConfig::default()
        };
        let (corpus, _) = generate_corpus(&cfg).unwrap();
        let mut sums = [0usize; 2];
        let mut ns = [0usize; 2];
        for p in corpus.pairs() {
            let g = p.style.speaker as usize;
            sums[g] += p.response.len();
            ns[g] += 1;
        }
        let f = sums[0] as f64 / ns[0] as f64;
        let m = sums[1] as f64 / ns[1] as f64;
        assert!(f - m > 3.0, "female {f} male {m}");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(generate_corpus(&SynthConfig { pair_lexicon_size: 0, ..small(1) }).is_err());
        assert!(generate_corpus(&SynthConfig { lambda: 1.5, ..small(1) }).is_err());
        let mut c = small(1);
        c.male.mean_length = 0.5;
        assert!(generate_corpus(&c).is_err());
    }

    #[test]
    fn merged_scheme_ground_truth() {
        let truth = SynthModel::new(&small(1)).unwrap().ground_truth();
        let two = truth.planted_for(Scheme::TwoWay);
        assert!(two[&Category::Female].contains("f_idol0"));
        assert!(two[&Category::Male].contains("m_phone0"));
        assert!(two[&Category::Female].contains("~~"));
    }
}
