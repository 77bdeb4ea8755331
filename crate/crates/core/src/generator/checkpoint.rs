use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::StyledGenerator;
use super::vocab::Vocab;
use super::GenConfig;
use crate::corpus::Token;
use crate::error::{Error, Result};
use crate::persist::{read_blob, write_blob};
use crate::scalar::Scalar;

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    config: GenConfig,
    vocab: Vec<Token>,
}

impl<T: Scalar> StyledGenerator<T> {
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = Header {
            kind: "generator".into(),
            config: self.config().clone(),
            vocab: self.vocab().tokens().to_vec(),
        };
        write_blob(path, &header, &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, params): (Header, Vec<T>) = read_blob(path)?;
        if header.kind != "generator" {
            return Err(Error::Format(format!("expected generator checkpoint, found {}", header.kind)));
        }
        let mut model = StyledGenerator::new(header.config, Vocab::from_list(header.vocab), 0)?;
        if params.len() != model.params.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} parameters, configuration needs {}",
                params.len(),
                model.params.len()
            )));
        }
        model.params = params;
        Ok(model)
    }
}
