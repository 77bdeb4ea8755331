//! Artifact names and locations inside a run directory.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use genderpair::corpus::{load_corpus, Split};
use genderpair::Scheme;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{io_error, CliError};

/// Generator runs are numbered like the rows of the generation table.
pub fn gen_id(scheme: Scheme) -> &'static str {
    match scheme {
        Scheme::TwoWay => "model-1",
        Scheme::ThreeWay => "model-2",
        Scheme::FourWay => "model-3",
    }
}

pub fn classifier_dir(scheme: Scheme) -> String {
    format!("model-{}", scheme.tag())
}

pub struct Run {
    pub dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitIds {
    train: Vec<String>,
    tune: Vec<String>,
    test: Vec<String>,
}

impl Run {
    pub fn new(dir: &Path) -> Self {
        Run { dir: dir.to_path_buf() }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    pub fn corpus(&self) -> PathBuf {
        self.path("corpus.jsonl")
    }

    pub fn split(&self) -> PathBuf {
        self.path("split.json")
    }

    pub fn bow(&self, scheme: Scheme) -> PathBuf {
        self.path(&classifier_dir(scheme)).join("bow.bin")
    }

    pub fn ngram(&self, scheme: Scheme) -> PathBuf {
        self.path(&classifier_dir(scheme)).join("ngram.bin")
    }

    pub fn classifier_eval(&self) -> PathBuf {
        self.path("eval/classifiers.json")
    }

    pub fn pivots(&self, scheme: Scheme) -> PathBuf {
        self.path(&format!("pivots/pivots-{}.json", scheme.tag()))
    }

    pub fn attack(&self) -> PathBuf {
        self.path("attack/attack.json")
    }

    pub fn gen_dir(&self, scheme: Scheme) -> PathBuf {
        self.path("gen").join(gen_id(scheme))
    }

    pub fn generator(&self, scheme: Scheme) -> PathBuf {
        self.gen_dir(scheme).join("generator.bin")
    }

    pub fn generations(&self, scheme: Scheme) -> PathBuf {
        self.gen_dir(scheme).join("generations.jsonl")
    }

    pub fn gen_metrics(&self, scheme: Scheme) -> PathBuf {
        self.gen_dir(scheme).join("metrics.json")
    }

    /// Errors unless `path` exists. `artifact` is the name shown to the user.
    pub fn require(
        &self,
        path: &Path,
        stage: &'static str,
        artifact: &str,
        producer: &'static str,
    ) -> Result<(), CliError> {
        if path.exists() {
            Ok(())
        } else {
            Err(CliError::MissingArtifact { stage, artifact: artifact.to_string(), producer })
        }
    }

    pub fn write(&self, path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
        }
        fs::write(path, contents).map_err(|e| io_error(path, e))
    }

    pub fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
        text.push('\n');
        self.write(path, text)
    }

    pub fn read_json<T: DeserializeOwned>(&self, path: &Path) -> Result<T, CliError> {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
    }

    pub fn ensure_dir(&self, path: &Path) -> Result<(), CliError> {
        fs::create_dir_all(path).map_err(|e| io_error(path, e))
    }

    pub fn save_split(&self, split: &Split) -> Result<(), CliError> {
        let ids = SplitIds {
            train: split.train.dialogue_ids(),
            tune: split.tune.dialogue_ids(),
            test: split.test.dialogue_ids(),
        };
        self.write_json(&self.split(), &ids)
    }

    /// The corpus and its split, as written by the synth stage.
    pub fn load_split(&self, stage: &'static str) -> Result<Split, CliError> {
        self.require(&self.corpus(), stage, "corpus.jsonl", "synth")?;
        self.require(&self.split(), stage, "split.json", "synth")?;
        let corpus = load_corpus(&self.corpus())?;
        let ids: SplitIds = self.read_json(&self.split())?;
        let part = |v: Vec<String>| corpus.filter_ids(&v.into_iter().collect::<BTreeSet<_>>());
        Ok(Split { train: part(ids.train), tune: part(ids.tune), test: part(ids.test) })
    }
}
