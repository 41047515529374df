//! Versioned binary checkpoints: JSON header with configuration, vocabulary
//! and tensor layout, then the parameters as little-endian `f64`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::extractive::{ClassifierModel, ExtractiveModel, TinyConfig};
use super::generative::GenerativeModel;
use super::tensor::{ParamSet, TensorShape};
use super::train::TrainConfig;
use super::vocab::Vocab;
use crate::binfmt::{self, PayloadReader, PayloadWriter};
use crate::error::{Error, Result};
use crate::text::TokenizerConfig;

const MAGIC: &[u8; 8] = b"RBKTINY\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Extractive,
    Classifier,
    Generative,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: ModelKind,
    pub config: TinyConfig,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    pub tokenizer: TokenizerConfig,
    pub vocab: Vec<String>,
    pub tensors: Vec<TensorShape>,
    #[serde(default)]
    pub pos_weight: Option<f64>,
    #[serde(default)]
    pub config_hash: Option<String>,
}

fn write(path: &Path, header: &CheckpointHeader, params: &ParamSet) -> Result<()> {
    let mut w = PayloadWriter::default();
    w.f64s(&params.flat());
    binfmt::write_artifact(path, MAGIC, header, &w.finish())
}

/// Header and flat parameter vector of a checkpoint file.
pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, Vec<f64>)> {
    let (header, payload): (CheckpointHeader, _) = binfmt::read_artifact(path, MAGIC)?;
    let mut r = PayloadReader::new(&payload);
    let flat = r.f64s()?;
    Ok((header, flat))
}

fn expect_kind(header: &CheckpointHeader, kind: ModelKind) -> Result<()> {
    if header.kind != kind {
        return Err(Error::Format(format!(
            "checkpoint holds a {:?} model, expected {:?}",
            header.kind, kind
        )));
    }
    Ok(())
}

fn header(
    kind: ModelKind,
    config: &TinyConfig,
    vocab: &Vocab,
    params: &ParamSet,
    train: Option<&TrainConfig>,
    pos_weight: Option<f64>,
    config_hash: Option<&str>,
) -> CheckpointHeader {
    CheckpointHeader {
        kind,
        config: config.clone(),
        train: train.cloned(),
        tokenizer: vocab.tokenizer,
        vocab: vocab.tokens.clone(),
        tensors: params.shapes(),
        pos_weight,
        config_hash: config_hash.map(str::to_string),
    }
}

impl ExtractiveModel {
    pub fn save(&self, path: &Path, train: Option<&TrainConfig>, config_hash: Option<&str>) -> Result<()> {
        let h = header(ModelKind::Extractive, &self.config, &self.vocab, &self.params, train, None, config_hash);
        write(path, &h, &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (h, flat) = read_checkpoint(path)?;
        expect_kind(&h, ModelKind::Extractive)?;
        let mut m = ExtractiveModel::new(h.config, Vocab::from_tokens(h.vocab, h.tokenizer));
        m.params.load_flat(&h.tensors, &flat)?;
        Ok(m)
    }
}

impl ClassifierModel {
    pub fn save(&self, path: &Path, train: Option<&TrainConfig>, config_hash: Option<&str>) -> Result<()> {
        let h = header(ModelKind::Classifier, &self.config, &self.vocab, &self.params, train, None, config_hash);
        write(path, &h, &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (h, flat) = read_checkpoint(path)?;
        expect_kind(&h, ModelKind::Classifier)?;
        let mut m = ClassifierModel::new(h.config, Vocab::from_tokens(h.vocab, h.tokenizer));
        m.params.load_flat(&h.tensors, &flat)?;
        Ok(m)
    }
}

impl GenerativeModel {
    pub fn save(&self, path: &Path, train: Option<&TrainConfig>, config_hash: Option<&str>) -> Result<()> {
        let h = header(
            ModelKind::Generative,
            &self.config,
            &self.vocab,
            &self.params,
            train,
            Some(self.pos_weight),
            config_hash,
        );
        write(path, &h, &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (h, flat) = read_checkpoint(path)?;
        expect_kind(&h, ModelKind::Generative)?;
        let pos_weight = h.pos_weight.unwrap_or(1.0);
        let mut m = GenerativeModel::new(h.config, Vocab::from_tokens(h.vocab, h.tokenizer), pos_weight);
        m.params.load_flat(&h.tensors, &flat)?;
        Ok(m)
    }
}
