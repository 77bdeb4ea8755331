use std::path::{Path, PathBuf};

use genderpair::generator::{GenConfig, GenHyper};
use genderpair::genmetrics::AccSettings;
use genderpair::synthgen::{ProfileParams, SynthConfig};
use genderpair::textclf::{BowHyper, NGramHyper};
use genderpair::Scheme;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Everything a pipeline run depends on. Random procedures take their seed
/// from [`stage_seed`], so no section carries a seed of its own.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub seed: u64,
    /// Schemes that scheme-specific stages run for.
    pub schemes: Vec<Scheme>,
    pub paths: Paths,
    pub synth: Synth,
    pub split: SplitSettings,
    pub classifier: Classifier,
    pub pivots: Pivots,
    pub generator: Generator,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub out_dir: PathBuf,
    /// Read pairs from this JSONL file instead of synthesising them.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Synth {
    pub pairs_per_category: usize,
    pub shared_vocab_size: usize,
    pub lexicon_size_per_gender: usize,
    pub pair_lexicon_size: usize,
    pub pivot_rate: f64,
    pub lambda: f64,
    pub female_skew: f64,
    pub pair_share: f64,
    pub cross_talk: f64,
    pub lexicon_skew: f64,
    pub shared_skew: f64,
    pub female: ProfileParams,
    pub male: ProfileParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSettings {
    pub test_fraction: f64,
    pub tune_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Classifier {
    /// Responses concatenated into one classifier input.
    pub concat_n: usize,
    /// Training inputs per scheme, divided evenly over its categories.
    pub train_samples: usize,
    pub test_samples_per_category: usize,
    pub bow: Bow,
    pub ngram: NGram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Bow {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub batch_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NGram {
    pub dim: usize,
    pub buckets: usize,
    pub n_max: usize,
    pub learning_rate: f64,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Pivots {
    pub confidence_drop: f64,
    pub min_frequency: usize,
    /// Concatenated training inputs per category scanned for pivots.
    pub samples_per_category: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Generator {
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub train_pairs_per_category: usize,
    pub test_posts_per_category: usize,
    pub top_k: usize,
    pub temperature: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Metrics {
    pub concat_n: usize,
    pub trials_per_category: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            schemes: Scheme::ALL.to_vec(),
            paths: Paths::default(),
            synth: Synth::default(),
            split: SplitSettings::default(),
            classifier: Classifier::default(),
            pivots: Pivots::default(),
            generator: Generator::default(),
            metrics: Metrics::default(),
        }
    }
}

impl Default for Paths {
    fn default() -> Self {
        Paths { out_dir: PathBuf::from("runs/default"), corpus: None }
    }
}

impl Default for Synth {
    fn default() -> Self {
        let d = SynthConfig::default();
        Synth {
            pairs_per_category: d.pairs_per_category,
            shared_vocab_size: d.shared_vocab_size,
            lexicon_size_per_gender: d.lexicon_size_per_gender,
            pair_lexicon_size: d.pair_lexicon_size,
            pivot_rate: d.pivot_rate,
            lambda: d.lambda,
            female_skew: d.female_skew,
            pair_share: d.pair_share,
            cross_talk: d.cross_talk,
            lexicon_skew: d.lexicon_skew,
            shared_skew: d.shared_skew,
            female: d.female,
            male: d.male,
        }
    }
}

impl Default for SplitSettings {
    fn default() -> Self {
        SplitSettings { test_fraction: 0.2, tune_fraction: 0.1 }
    }
}

impl Default for Classifier {
    fn default() -> Self {
        Classifier {
            concat_n: 20,
            train_samples: 8000,
            test_samples_per_category: 500,
            bow: Bow::default(),
            ngram: NGram::default(),
        }
    }
}

impl Default for Bow {
    fn default() -> Self {
        let d = BowHyper::default();
        Bow { learning_rate: d.learning_rate, epochs: d.epochs, l2: d.l2, batch_size: d.batch_size }
    }
}

impl Default for NGram {
    fn default() -> Self {
        let d = NGramHyper::default();
        NGram { dim: d.dim, buckets: d.buckets, n_max: d.n_max, learning_rate: d.learning_rate, epochs: d.epochs }
    }
}

impl Default for Pivots {
    fn default() -> Self {
        Pivots {
            confidence_drop: genderpair::pivot::DEFAULT_CONFIDENCE_DROP,
            min_frequency: genderpair::pivot::DEFAULT_MIN_FREQUENCY,
            samples_per_category: 20_000,
        }
    }
}

impl Default for Generator {
    fn default() -> Self {
        let c = GenConfig::default();
        let h = GenHyper::default();
        Generator {
            dim: c.dim,
            heads: c.heads,
            layers: c.layers,
            ffn_dim: c.ffn_dim,
            max_len: c.max_len,
            learning_rate: h.learning_rate,
            epochs: h.epochs,
            batch_size: h.batch_size,
            clip_norm: h.clip_norm,
            train_pairs_per_category: 300,
            test_posts_per_category: 100,
            top_k: 10,
            temperature: 1.0,
        }
    }
}

impl Default for Metrics {
    fn default() -> Self {
        let d = AccSettings::default();
        Metrics { concat_n: d.concat_n, trials_per_category: d.trials_per_category }
    }
}

/// Seed of one random procedure: the global seed mixed with a stage tag.
pub fn stage_seed(global: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, then a splitmix64 finaliser
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = h ^ global.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn invalid(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{key}: {msg}"))
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: PipelineConfig = toml::from_str(text).map_err(|e| CliError::Validation(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Applies `key.path=value` overrides. Values are parsed as TOML and fall
    /// back to plain strings.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, CliError> {
        let mut tree = toml::Value::try_from(self).expect("config serialises");
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| CliError::Validation(format!("override {item:?} is not key=value")))?;
            let key = key.trim();
            let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            let (parents, leaf) = match key.rsplit_once('.') {
                Some((p, l)) => (p.split('.').collect::<Vec<_>>(), l),
                None => (Vec::new(), key),
            };
            let mut node = &mut tree;
            for part in parents {
                node = node
                    .as_table_mut()
                    .ok_or_else(|| invalid(key, "not a table"))?
                    .get_mut(part)
                    .ok_or_else(|| invalid(key, "unknown key"))?;
            }
            let table = node.as_table_mut().ok_or_else(|| invalid(key, "not a table"))?;
            if !table.contains_key(leaf) && !is_optional_key(key) {
                return Err(invalid(key, "unknown key"));
            }
            table.insert(leaf.to_string(), value);
        }
        let config: PipelineConfig = tree.try_into().map_err(|e: toml::de::Error| CliError::Validation(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", self.schema_version),
            ));
        }
        if self.schemes.is_empty() {
            return Err(invalid("schemes", "at least one scheme is required"));
        }
        if let Err(e) = self.synth_config(0).validate() {
            // Core messages lead with the field name; report it as a key path.
            let msg = match e {
                genderpair::Error::InvalidArgument(m) => m,
                other => other.to_string(),
            };
            let field = msg.split([' ', ':']).next().unwrap_or_default();
            return Err(CliError::Validation(format!("synth.{field}: {msg}")));
        }
        let s = &self.split;
        if !(s.test_fraction > 0.0 && s.test_fraction < 1.0) {
            return Err(invalid("split.test_fraction", "must be in (0, 1)"));
        }
        if !(0.0..1.0).contains(&s.tune_fraction) || s.test_fraction + s.tune_fraction >= 1.0 {
            return Err(invalid("split.tune_fraction", "must be in [0, 1) with test_fraction summing below 1"));
        }
        let c = &self.classifier;
        for (key, v) in [
            ("classifier.concat_n", c.concat_n),
            ("classifier.train_samples", c.train_samples),
            ("classifier.test_samples_per_category", c.test_samples_per_category),
            ("classifier.bow.epochs", c.bow.epochs),
            ("classifier.bow.batch_size", c.bow.batch_size),
            ("classifier.ngram.dim", c.ngram.dim),
            ("classifier.ngram.buckets", c.ngram.buckets),
            ("classifier.ngram.n_max", c.ngram.n_max),
            ("classifier.ngram.epochs", c.ngram.epochs),
            ("pivots.samples_per_category", self.pivots.samples_per_category),
            ("generator.epochs", self.generator.epochs),
            ("generator.batch_size", self.generator.batch_size),
            ("generator.train_pairs_per_category", self.generator.train_pairs_per_category),
            ("generator.test_posts_per_category", self.generator.test_posts_per_category),
            ("generator.top_k", self.generator.top_k),
            ("metrics.concat_n", self.metrics.concat_n),
            ("metrics.trials_per_category", self.metrics.trials_per_category),
        ] {
            if v == 0 {
                return Err(invalid(key, "must be at least 1"));
            }
        }
        for (key, v) in [
            ("classifier.bow.learning_rate", c.bow.learning_rate),
            ("classifier.ngram.learning_rate", c.ngram.learning_rate),
            ("generator.learning_rate", self.generator.learning_rate),
            ("generator.temperature", self.generator.temperature),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(key, "must be positive"));
            }
        }
        if !(c.bow.l2 >= 0.0) {
            return Err(invalid("classifier.bow.l2", "must be non-negative"));
        }
        if !(self.generator.clip_norm >= 0.0) {
            return Err(invalid("generator.clip_norm", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.pivots.confidence_drop) {
            return Err(invalid("pivots.confidence_drop", "must be in [0, 1]"));
        }
        if self.generator.test_posts_per_category < self.metrics.concat_n {
            return Err(invalid(
                "generator.test_posts_per_category",
                "must be at least metrics.concat_n, which style accuracy concatenates",
            ));
        }
        self.gen_config(Scheme::FourWay)
            .validate()
            .map_err(|e| invalid("generator", e))?;
        Ok(())
    }

    pub fn synth_config(&self, seed: u64) -> SynthConfig {
        let s = self.synth.clone();
        SynthConfig {
            shared_vocab_size: s.shared_vocab_size,
            lexicon_size_per_gender: s.lexicon_size_per_gender,
            pair_lexicon_size: s.pair_lexicon_size,
            pivot_rate: s.pivot_rate,
            lambda: s.lambda,
            female_skew: s.female_skew,
            pair_share: s.pair_share,
            cross_talk: s.cross_talk,
            lexicon_skew: s.lexicon_skew,
            shared_skew: s.shared_skew,
            pairs_per_category: s.pairs_per_category,
            seed,
            female: s.female,
            male: s.male,
        }
    }

    pub fn bow_hyper(&self, seed: u64) -> BowHyper {
        let b = &self.classifier.bow;
        BowHyper { learning_rate: b.learning_rate, epochs: b.epochs, l2: b.l2, batch_size: b.batch_size, seed }
    }

    pub fn ngram_hyper(&self, seed: u64) -> NGramHyper {
        let n = &self.classifier.ngram;
        NGramHyper {
            dim: n.dim,
            buckets: n.buckets,
            n_max: n.n_max,
            learning_rate: n.learning_rate,
            epochs: n.epochs,
            seed,
        }
    }

    /// The vocabulary size is filled in when the model is built.
    pub fn gen_config(&self, scheme: Scheme) -> GenConfig {
        let g = &self.generator;
        GenConfig {
            dim: g.dim,
            heads: g.heads,
            layers: g.layers,
            ffn_dim: g.ffn_dim,
            max_len: g.max_len,
            vocab_size: 1,
            scheme,
        }
    }

    pub fn gen_hyper(&self, seed: u64) -> GenHyper {
        let g = &self.generator;
        GenHyper {
            learning_rate: g.learning_rate,
            epochs: g.epochs,
            batch_size: g.batch_size,
            clip_norm: g.clip_norm,
            seed,
        }
    }

    pub fn acc_settings(&self, seed: u64) -> AccSettings {
        AccSettings { concat_n: self.metrics.concat_n, trials_per_category: self.metrics.trials_per_category, seed }
    }
}

fn is_optional_key(key: &str) -> bool {
    key == "paths.corpus"
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_defaults_parse_back() {
        let c = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(PipelineConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = PipelineConfig::from_toml("[synth]\nlamda = 0.3\n").unwrap_err();
        assert!(err.to_string().contains("lamda"), "{err}");
        let err = PipelineConfig::from_toml("[synth]\nseed = 3\n").unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn validation_names_the_key() {
        let err = PipelineConfig::from_toml("[pivots]\nconfidence_drop = 1.5\n").unwrap_err();
        assert!(err.to_string().starts_with("pivots.confidence_drop"), "{err}");
        let err = PipelineConfig::from_toml("schema_version = 7\n").unwrap_err();
        assert!(err.to_string().starts_with("schema_version"), "{err}");
        let err = PipelineConfig::from_toml("[generator]\nheads = 3\n").unwrap_err();
        assert!(err.to_string().starts_with("generator"), "{err}");
    }

    #[test]
    fn overrides_follow_key_paths() {
        let c = PipelineConfig::default()
            .with_overrides(&["synth.lambda=0.3".into(), "schemes=[\"3way\"]".into(), "paths.corpus=x.jsonl".into()])
            .unwrap();
        assert_eq!(c.synth.lambda, 0.3);
        assert_eq!(c.schemes, vec![Scheme::ThreeWay]);
        assert_eq!(c.paths.corpus, Some(PathBuf::from("x.jsonl")));
        assert!(PipelineConfig::default().with_overrides(&["synth.nope=1".into()]).is_err());
        assert!(PipelineConfig::default().with_overrides(&["synth.lambda=2".into()]).is_err());
        assert!(PipelineConfig::default().with_overrides(&["lambda".into()]).is_err());
    }

    #[test]
    fn stage_seeds_differ_by_tag_and_global_seed() {
        assert_eq!(stage_seed(0, "synth"), stage_seed(0, "synth"));
        assert_ne!(stage_seed(0, "synth"), stage_seed(0, "split"));
        assert_ne!(stage_seed(0, "synth"), stage_seed(1, "synth"));
    }
}
