//! TF-IDF n-gram features and linear classifiers (logistic regression and a
//! soft-margin linear SVM) trained with seeded stochastic gradient descent.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotate::{Instance, Label};
use crate::binfmt::{self, PayloadReader, PayloadWriter};
use crate::error::{Error, Result};
use crate::eval::Prediction;
use crate::index::{l2_normalize, smoothed_idf, SparseVec};
use crate::reviews::BiasType;
use crate::text::TokenizerConfig;

const MAGIC: &[u8; 8] = b"RBKLINER";
pub const DEFAULT_MAX_FEATURES: usize = 1000;
pub const MAX_NGRAM: usize = 3;

/// Text fed to the baselines for one instance: question, a space, answer.
pub fn instance_text(inst: &Instance) -> String {
    format!("{} {}", inst.question, inst.answer_text)
}

/// All 1- to `max_n`-grams of a token sequence, space-joined.
pub fn ngrams(tokens: &[String], max_n: usize) -> Vec<String> {
    let mut out = Vec::new();
    for n in 1..=max_n {
        for w in tokens.windows(n) {
            out.push(w.join(" "));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramFeaturizer {
    pub tokenizer: TokenizerConfig,
    pub max_n: usize,
    pub max_features: usize,
    /// Selected n-grams sorted lexicographically; position is the column.
    pub vocabulary: Vec<String>,
    pub idf: Vec<f64>,
    #[serde(skip)]
    lookup: HashMap<String, u32>,
}

/// Sparse design matrix with a fixed column count.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub dim: usize,
    pub rows: Vec<SparseVec>,
}

impl FeatureMatrix {
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        FeatureMatrix {
            dim,
            rows: rows
                .iter()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .filter(|(_, v)| **v != 0.0)
                        .map(|(j, v)| (j as u32, *v))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            dim: self.dim,
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

/// Fit the vocabulary: the `max_features` most frequent n-grams by total
/// corpus count, ties broken lexicographically.
pub fn fit_featurizer(texts: &[String], max_features: usize, tokenizer: TokenizerConfig) -> Result<NgramFeaturizer> {
    if texts.is_empty() {
        return Err(Error::EmptyCorpus("featurizer needs at least one text".into()));
    }
    if max_features == 0 {
        return Err(Error::InvalidArgument("max_features must be positive".into()));
    }
    let grams: Vec<Vec<String>> = texts
        .par_iter()
        .map(|t| ngrams(&tokenizer.words(t), MAX_NGRAM))
        .collect();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in &grams {
        for g in doc {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyCorpus("no tokens in featurizer corpus".into()));
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.truncate(max_features);
    let mut vocabulary: Vec<String> = ranked.into_iter().map(|(g, _)| g.to_string()).collect();
    vocabulary.sort();

    let lookup: HashMap<String, u32> = vocabulary
        .iter()
        .enumerate()
        .map(|(i, g)| (g.clone(), i as u32))
        .collect();
    let mut df = vec![0usize; vocabulary.len()];
    for doc in &grams {
        let mut seen: Vec<u32> = doc.iter().filter_map(|g| lookup.get(g).copied()).collect();
        seen.sort_unstable();
        seen.dedup();
        for id in seen {
            df[id as usize] += 1;
        }
    }
    let n = texts.len() as f64;
    let idf = df.iter().map(|&d| smoothed_idf(n, d as f64)).collect();
    Ok(NgramFeaturizer {
        tokenizer,
        max_n: MAX_NGRAM,
        max_features,
        vocabulary,
        idf,
        lookup,
    })
}

impl NgramFeaturizer {
    fn rebuild_lookup(&mut self) {
        self.lookup = self
            .vocabulary
            .iter()
            .enumerate()
            .map(|(i, g)| (g.clone(), i as u32))
            .collect();
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.len()
    }

    /// L2-normalized TF-IDF vector over the fitted vocabulary.
    pub fn transform_one(&self, text: &str) -> SparseVec {
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for g in ngrams(&self.tokenizer.words(text), self.max_n) {
            if let Some(&id) = self.lookup.get(&g) {
                *counts.entry(id).or_insert(0) += 1;
            }
        }
        l2_normalize(
            counts
                .into_iter()
                .map(|(id, c)| (id, c as f64 * self.idf[id as usize]))
                .collect(),
        )
    }

    pub fn transform(&self, texts: &[String]) -> FeatureMatrix {
        FeatureMatrix {
            dim: self.dim(),
            rows: texts.par_iter().map(|t| self.transform_one(t)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Logistic,
    Hinge,
}

impl LossKind {
    pub fn short_name(self) -> &'static str {
        match self {
            LossKind::Logistic => "lr",
            LossKind::Hinge => "svm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: LossKind,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub class_weight_pos: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Minibatch size; 0 means full batch.
    pub batch_size: usize,
    pub seed: u64,
    /// Divide the step by `sqrt(1 + epoch)`.
    pub decay: bool,
    /// Weight on positive-class losses; `None` uses `N_neg / N_pos`.
    pub class_weight_pos: Option<f64>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            epochs: 50,
            lr: 0.5,
            batch_size: 16,
            seed: 13,
            decay: true,
            class_weight_pos: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean minibatch objective over each epoch.
    pub epoch_losses: Vec<f64>,
}

fn dot(w: &[f64], x: &[(u32, f64)]) -> f64 {
    x.iter().map(|&(j, v)| w[j as usize] * v).sum()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Regularized training objective and its (sub)gradient on a set of rows.
///
/// Logistic: `(1/N) Σ ω_i CE_i + (reg/2) ||w||²`.
/// Hinge: `(1/N) Σ ω_i max(0, 1 - ỹ_i s_i) + (reg/2) ||w||²` with
/// `ỹ ∈ {-1, +1}`. `ω_i` is `class_weight_pos` for positives, else 1.
pub fn objective(
    kind: LossKind,
    weights: &[f64],
    bias: f64,
    x: &FeatureMatrix,
    y: &[u8],
    reg: f64,
    class_weight_pos: f64,
) -> (f64, Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (row, &yi) in x.rows.iter().zip(y) {
        let s = dot(weights, row) + bias;
        let omega = if yi == 1 { class_weight_pos } else { 1.0 };
        let dscore = match kind {
            LossKind::Logistic => {
                // CE = softplus(s) - y s
                loss += omega * (softplus(s) - yi as f64 * s);
                omega * (sigmoid(s) - yi as f64)
            }
            LossKind::Hinge => {
                let ys = if yi == 1 { 1.0 } else { -1.0 };
                let margin = 1.0 - ys * s;
                if margin > 0.0 {
                    loss += omega * margin;
                    -omega * ys
                } else {
                    0.0
                }
            }
        };
        for &(j, v) in row {
            gw[j as usize] += dscore * v / n;
        }
        gb += dscore / n;
    }
    loss /= n;
    let norm_sq: f64 = weights.iter().map(|w| w * w).sum();
    loss += 0.5 * reg * norm_sq;
    for (g, w) in gw.iter_mut().zip(weights) {
        *g += reg * w;
    }
    (loss, gw, gb)
}

fn check_labels(x: &FeatureMatrix, y: &[u8]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::EmptyCorpus("no training rows".into()));
    }
    if let Some(bad) = y.iter().find(|&&v| v > 1) {
        return Err(Error::InvalidArgument(format!("label {bad} is not 0 or 1")));
    }
    for row in &x.rows {
        for &(j, v) in row {
            if j as usize >= x.dim || !v.is_finite() {
                return Err(Error::InvalidArgument("feature out of range or not finite".into()));
            }
        }
    }
    Ok(())
}

fn default_class_weight(y: &[u8]) -> f64 {
    let pos = y.iter().filter(|&&v| v == 1).count();
    let neg = y.len() - pos;
    if pos == 0 || neg == 0 {
        1.0
    } else {
        neg as f64 / pos as f64
    }
}

fn train_linear(kind: LossKind, x: &FeatureMatrix, y: &[u8], reg: f64, cfg: &SgdConfig) -> Result<(LinearModel, TrainReport)> {
    check_labels(x, y)?;
    if !(cfg.lr > 0.0) || !(reg >= 0.0) {
        return Err(Error::InvalidArgument("lr must be positive and regularization non-negative".into()));
    }
    let class_weight_pos = cfg.class_weight_pos.unwrap_or_else(|| default_class_weight(y));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = vec![0.0; x.dim];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..x.len()).collect();
    let batch = if cfg.batch_size == 0 { x.len() } else { cfg.batch_size.min(x.len()) };
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        if batch < x.len() {
            order.shuffle(&mut rng);
        }
        let step = if cfg.decay { cfg.lr / (1.0 + epoch as f64).sqrt() } else { cfg.lr };
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(batch) {
            let xb = x.select(chunk);
            let yb: Vec<u8> = chunk.iter().map(|&i| y[i]).collect();
            let (loss, gw, gb) = objective(kind, &w, b, &xb, &yb, reg, class_weight_pos);
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite loss at epoch {epoch}; try a smaller learning rate than {}",
                    cfg.lr
                )));
            }
            total += loss;
            batches += 1;
            for (wj, g) in w.iter_mut().zip(&gw) {
                *wj -= step * g;
            }
            b -= step * gb;
        }
        epoch_losses.push(total / batches as f64);
    }
    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(Error::Divergence(format!(
            "parameters are not finite; try a smaller learning rate than {}",
            cfg.lr
        )));
    }
    Ok((
        LinearModel {
            kind,
            weights: w,
            bias: b,
            class_weight_pos,
        },
        TrainReport { epoch_losses },
    ))
}

/// Logistic regression minimizing mean weighted cross-entropy plus
/// `l2 * ||w||² / 2`.
pub fn train_logreg(x: &FeatureMatrix, y: &[u8], l2: f64, cfg: &SgdConfig) -> Result<(LinearModel, TrainReport)> {
    train_linear(LossKind::Logistic, x, y, l2, cfg)
}

/// Regularization strength of the SVM objective for penalty `c` on `n` rows:
/// minimizing `||w||²/(2cN) + mean hinge` is minimizing
/// `||w||²/2 + c Σ hinge`.
pub fn svm_reg(c: f64, n: usize) -> f64 {
    1.0 / (c * n as f64)
}

/// Soft-margin linear SVM trained by hinge-loss subgradient descent.
pub fn train_svm(x: &FeatureMatrix, y: &[u8], c: f64, cfg: &SgdConfig) -> Result<(LinearModel, TrainReport)> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument("SVM penalty c must be positive".into()));
    }
    train_linear(LossKind::Hinge, x, y, svm_reg(c, x.len()), cfg)
}

impl LinearModel {
    fn check_dim(&self, x: &FeatureMatrix) -> Result<()> {
        if x.dim != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                found: x.dim,
            });
        }
        Ok(())
    }

    pub fn decision(&self, row: &[(u32, f64)]) -> f64 {
        dot(&self.weights, row) + self.bias
    }

    /// Sigmoid probabilities for logistic models, raw margins for hinge.
    pub fn predict_scores(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(x.rows
            .iter()
            .map(|r| {
                let s = self.decision(r);
                match self.kind {
                    LossKind::Logistic => sigmoid(s),
                    LossKind::Hinge => s,
                }
            })
            .collect())
    }

    /// Logistic: probability ≥ `threshold`. Hinge: margin ≥ 0.
    pub fn predict_labels(&self, x: &FeatureMatrix, threshold: f64) -> Result<Vec<u8>> {
        let cut = match self.kind {
            LossKind::Logistic => threshold,
            LossKind::Hinge => 0.0,
        };
        Ok(self.predict_scores(x)?.into_iter().map(|s| u8::from(s >= cut)).collect())
    }
}

/// Hyperparameters of a baseline run, stored in the model file header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub kind: LossKind,
    pub max_features: usize,
    /// L2 strength for logistic regression.
    pub l2: f64,
    /// Penalty for the SVM.
    pub c: f64,
    pub sgd: SgdConfig,
    pub per_bias_type: bool,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            kind: LossKind::Logistic,
            max_features: DEFAULT_MAX_FEATURES,
            l2: 1e-4,
            c: 1.0,
            sgd: SgdConfig::default(),
            per_bias_type: false,
        }
    }
}

/// A fitted featurizer plus one global model and optional per-bias-type
/// models.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineBundle {
    pub config: BaselineConfig,
    pub featurizer: NgramFeaturizer,
    pub global: LinearModel,
    pub per_type: BTreeMap<BiasType, LinearModel>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BundleHeader {
    kind: LossKind,
    max_features: usize,
    seed: u64,
    config: BaselineConfig,
    tokenizer: TokenizerConfig,
    vocabulary: usize,
    per_type: Vec<BiasType>,
    #[serde(default)]
    config_hash: Option<String>,
}

fn fit_model(config: &BaselineConfig, x: &FeatureMatrix, y: &[u8]) -> Result<LinearModel> {
    let (m, _) = match config.kind {
        LossKind::Logistic => train_logreg(x, y, config.l2, &config.sgd)?,
        LossKind::Hinge => train_svm(x, y, config.c, &config.sgd)?,
    };
    Ok(m)
}

impl BaselineBundle {
    pub fn model_name(&self) -> String {
        format!("tfidf-{}", self.config.kind.short_name())
    }

    pub fn train(instances: &[Instance], config: &BaselineConfig) -> Result<Self> {
        let texts: Vec<String> = instances.iter().map(instance_text).collect();
        let featurizer = fit_featurizer(&texts, config.max_features, TokenizerConfig::default())?;
        let x = featurizer.transform(&texts);
        let y: Vec<u8> = instances.iter().map(|i| i.label.as_u8()).collect();
        let global = fit_model(config, &x, &y)?;

        let mut per_type = BTreeMap::new();
        if config.per_bias_type {
            let groups: Vec<(BiasType, Vec<usize>)> = BiasType::ALL
                .iter()
                .map(|&b| {
                    let idx: Vec<usize> = (0..instances.len()).filter(|&i| instances[i].bias_type == b).collect();
                    (b, idx)
                })
                .filter(|(_, idx)| !idx.is_empty())
                .collect();
            let fitted: Vec<(BiasType, LinearModel)> = groups
                .par_iter()
                .map(|(b, idx)| {
                    let yb: Vec<u8> = idx.iter().map(|&i| y[i]).collect();
                    fit_model(config, &x.select(idx), &yb).map(|m| (*b, m))
                })
                .collect::<Result<_>>()?;
            per_type.extend(fitted);
        }
        Ok(BaselineBundle {
            config: config.clone(),
            featurizer,
            global,
            per_type,
        })
    }

    pub fn model_for(&self, bias: BiasType) -> &LinearModel {
        self.per_type.get(&bias).unwrap_or(&self.global)
    }

    pub fn predict(&self, instances: &[Instance], threshold: f64, run: u64) -> Result<Vec<Prediction>> {
        let texts: Vec<String> = instances.iter().map(instance_text).collect();
        let x = self.featurizer.transform(&texts);
        let name = self.model_name();
        instances
            .iter()
            .zip(x.rows)
            .map(|(inst, row)| {
                let m = self.model_for(inst.bias_type);
                let one = FeatureMatrix { dim: x.dim, rows: vec![row] };
                let score = m.predict_scores(&one)?[0];
                let label = m.predict_labels(&one, threshold)?[0];
                Ok(Prediction {
                    id: inst.id.clone(),
                    model: name.clone(),
                    run,
                    score,
                    label: Label::from_positive(label == 1),
                    answer: None,
                })
            })
            .collect()
    }

    pub fn save(&self, path: &Path, config_hash: Option<&str>) -> Result<()> {
        let header = BundleHeader {
            kind: self.config.kind,
            max_features: self.config.max_features,
            seed: self.config.sgd.seed,
            config: self.config.clone(),
            tokenizer: self.featurizer.tokenizer,
            vocabulary: self.featurizer.dim(),
            per_type: self.per_type.keys().copied().collect(),
            config_hash: config_hash.map(str::to_string),
        };
        let mut w = PayloadWriter::default();
        for (g, idf) in self.featurizer.vocabulary.iter().zip(&self.featurizer.idf) {
            w.str(g);
            w.f64(*idf);
        }
        let mut put = |m: &LinearModel| {
            w.f64s(&m.weights);
            w.f64(m.bias);
            w.f64(m.class_weight_pos);
        };
        put(&self.global);
        for m in self.per_type.values() {
            put(m);
        }
        binfmt::write_artifact(path, MAGIC, &header, &w.finish())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, payload): (BundleHeader, _) = binfmt::read_artifact(path, MAGIC)?;
        let mut r = PayloadReader::new(&payload);
        let mut vocabulary = Vec::with_capacity(header.vocabulary);
        let mut idf = Vec::with_capacity(header.vocabulary);
        for _ in 0..header.vocabulary {
            vocabulary.push(r.str()?);
            idf.push(r.f64()?);
        }
        let mut featurizer = NgramFeaturizer {
            tokenizer: header.tokenizer,
            max_n: MAX_NGRAM,
            max_features: header.max_features,
            vocabulary,
            idf,
            lookup: HashMap::new(),
        };
        featurizer.rebuild_lookup();
        let mut get = || -> Result<LinearModel> {
            let weights = r.f64s()?;
            if weights.len() != header.vocabulary {
                return Err(Error::Format("weight vector length does not match vocabulary".into()));
            }
            Ok(LinearModel {
                kind: header.kind,
                weights,
                bias: r.f64()?,
                class_weight_pos: r.f64()?,
            })
        };
        let global = get()?;
        let mut per_type = BTreeMap::new();
        for b in &header.per_type {
            per_type.insert(*b, get()?);
        }
        Ok(BaselineBundle {
            config: header.config,
            featurizer,
            global,
            per_type,
        })
    }

    pub fn read_config_hash(path: &Path) -> Result<Option<String>> {
        let (header, _): (BundleHeader, _) = binfmt::read_artifact(path, MAGIC)?;
        Ok(header.config_hash)
    }
}
