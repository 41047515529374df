//! Extractive span model (start/end vectors over encoder states) and the
//! sequence classifier applied to answer text.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{Encoder, EncoderConfig, Mixing};
use super::losses::{ce_instance, mrc_instance};
use super::tensor::{axpy, dot, matvec_add, matvec_t_add, outer_add, softmax, Init, ParamSet};
use super::train::Trainable;
use super::vocab::{TokenSequence, Vocab};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TinyConfig {
    pub hidden: usize,
    pub layers: usize,
    pub max_len: usize,
    pub mixing: Mixing,
    /// Longest extractable span, in tokens, minus one.
    pub max_span: usize,
    /// Longest generated answer, in tokens, before the end marker.
    pub max_answer_len: usize,
    pub seed: u64,
}

impl Default for TinyConfig {
    fn default() -> Self {
        TinyConfig {
            hidden: 64,
            layers: 2,
            max_len: 512,
            mixing: Mixing::Mean,
            max_span: 64,
            max_answer_len: 48,
            seed: 13,
        }
    }
}

impl TinyConfig {
    pub fn encoder(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            hidden: self.hidden,
            layers: self.layers,
            max_len: self.max_len,
            mixing: self.mixing,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanPrediction {
    pub start_probs: Vec<f64>,
    pub end_probs: Vec<f64>,
    /// Highest-scoring valid `(s, e)` and its score `ŷ_s[s]·ŷ_e[e]`.
    pub best: Option<(usize, usize, f64)>,
}

/// Best `(s, e)` with `from ≤ s ≤ e ≤ s + max_span`, scored by
/// `start[s]·end[e]`. Ties keep the earliest pair.
pub fn best_span(start: &[f64], end: &[f64], from: usize, max_span: usize) -> Option<(usize, usize, f64)> {
    let n = start.len().min(end.len());
    let mut best: Option<(usize, usize, f64)> = None;
    for s in from..n {
        for e in s..n.min(s + max_span + 1) {
            let score = start[s] * end[e];
            if best.is_none_or(|(_, _, b)| score > b) {
                best = Some((s, e, score));
            }
        }
    }
    best
}

/// Context text of the predicted span, or `None` when no valid pair exists.
pub fn extract_span(pred: &SpanPrediction, seq: &TokenSequence, context: &str) -> Option<String> {
    pred.best.map(|(s, e, _)| seq.context_text(context, s, e).to_string())
}

#[derive(Debug, Clone)]
pub struct ExtExample {
    pub seq: TokenSequence,
    pub gold: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct ExtractiveModel {
    pub config: TinyConfig,
    pub vocab: Vocab,
    pub params: ParamSet,
    encoder: Encoder,
    start: usize,
    end: usize,
}

impl ExtractiveModel {
    pub fn new(config: TinyConfig, vocab: Vocab) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::default();
        let encoder = Encoder::new(config.encoder(vocab.len()), &mut params, &mut rng, "enc");
        let start = params.add("span.start", 1, config.hidden, Init::FanIn, &mut rng);
        let end = params.add("span.end", 1, config.hidden, Init::FanIn, &mut rng);
        ExtractiveModel {
            config,
            vocab,
            params,
            encoder,
            start,
            end,
        }
    }

    /// Start and end logits `S·T_i`, `E·T_i` for every position.
    pub fn logits(&self, seq: &TokenSequence) -> Result<(Vec<f64>, Vec<f64>)> {
        let st = self.encoder.forward(&self.params, &seq.ids, &seq.segments)?;
        Ok(self.heads(&st.hidden))
    }

    fn heads(&self, hidden: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let s = self.params.tensors[self.start].row(0);
        let e = self.params.tensors[self.end].row(0);
        (
            hidden.iter().map(|t| dot(s, t)).collect(),
            hidden.iter().map(|t| dot(e, t)).collect(),
        )
    }

    pub fn predict(&self, seq: &TokenSequence) -> Result<SpanPrediction> {
        let (s, e) = self.logits(seq)?;
        let start_probs = softmax(&s);
        let end_probs = softmax(&e);
        let best = best_span(&start_probs, &end_probs, seq.context_start(), self.config.max_span);
        Ok(SpanPrediction {
            start_probs,
            end_probs,
            best,
        })
    }
}

impl Trainable for ExtractiveModel {
    type Example = ExtExample;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn accumulate(&self, ex: &ExtExample, scale: f64, g: &mut ParamSet) -> Result<f64> {
        let st = self.encoder.forward(&self.params, &ex.seq.ids, &ex.seq.segments)?;
        let (sl, el) = self.heads(&st.hidden);
        if ex.gold.0 >= sl.len() || ex.gold.1 >= sl.len() {
            return Err(Error::InvalidArgument("gold span outside sequence".into()));
        }
        let (loss, ds, de) = mrc_instance(&sl, &el, ex.gold);
        let svec = self.params.tensors[self.start].row(0).to_vec();
        let evec = self.params.tensors[self.end].row(0).to_vec();
        let mut dh = vec![vec![0.0; self.config.hidden]; st.hidden.len()];
        for (i, t) in st.hidden.iter().enumerate() {
            axpy(g.tensors[self.start].row_mut(0), scale * ds[i], t);
            axpy(g.tensors[self.end].row_mut(0), scale * de[i], t);
            axpy(&mut dh[i], scale * ds[i], &svec);
            axpy(&mut dh[i], scale * de[i], &evec);
        }
        self.encoder.backward(&self.params, &st, dh, g);
        Ok(loss)
    }
}

#[derive(Debug, Clone)]
pub struct ClsExample {
    pub seq: TokenSequence,
    pub label: usize,
}

/// Mean-pooled encoder states followed by a two-way softmax layer.
#[derive(Debug, Clone)]
pub struct ClassifierModel {
    pub config: TinyConfig,
    pub vocab: Vocab,
    pub params: ParamSet,
    encoder: Encoder,
    w: usize,
    b: usize,
}

pub const NUM_CLASSES: usize = 2;

impl ClassifierModel {
    pub fn new(config: TinyConfig, vocab: Vocab) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
        let mut params = ParamSet::default();
        let encoder = Encoder::new(config.encoder(vocab.len()), &mut params, &mut rng, "cls.enc");
        let w = params.add("cls.w", NUM_CLASSES, config.hidden, Init::FanIn, &mut rng);
        let b = params.add("cls.b", 1, NUM_CLASSES, Init::Zeros, &mut rng);
        ClassifierModel {
            config,
            vocab,
            params,
            encoder,
            w,
            b,
        }
    }

    fn pooled(hidden: &[Vec<f64>]) -> Vec<f64> {
        let mut m = vec![0.0; hidden[0].len()];
        for h in hidden {
            axpy(&mut m, 1.0 / hidden.len() as f64, h);
        }
        m
    }

    pub fn logits(&self, seq: &TokenSequence) -> Result<Vec<f64>> {
        let st = self.encoder.forward(&self.params, &seq.ids, &seq.segments)?;
        let mut z = self.params.tensors[self.b].data.clone();
        matvec_add(&self.params.tensors[self.w], &Self::pooled(&st.hidden), &mut z);
        Ok(z)
    }

    /// Probability of class 1.
    pub fn predict_proba(&self, seq: &TokenSequence) -> Result<f64> {
        Ok(softmax(&self.logits(seq)?)[1])
    }
}

impl Trainable for ClassifierModel {
    type Example = ClsExample;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn accumulate(&self, ex: &ClsExample, scale: f64, g: &mut ParamSet) -> Result<f64> {
        if ex.label >= NUM_CLASSES {
            return Err(Error::InvalidArgument("class label out of range".into()));
        }
        let st = self.encoder.forward(&self.params, &ex.seq.ids, &ex.seq.segments)?;
        let pooled = Self::pooled(&st.hidden);
        let mut z = self.params.tensors[self.b].data.clone();
        matvec_add(&self.params.tensors[self.w], &pooled, &mut z);
        let (loss, dz) = ce_instance(&z, ex.label);
        let dz: Vec<f64> = dz.iter().map(|d| d * scale).collect();
        outer_add(&mut g.tensors[self.w], &dz, &pooled);
        axpy(&mut g.tensors[self.b].data, 1.0, &dz);
        let mut dpool = vec![0.0; self.config.hidden];
        matvec_t_add(&self.params.tensors[self.w], &dz, &mut dpool);
        let n = st.hidden.len() as f64;
        let dh = vec![dpool.iter().map(|d| d / n).collect::<Vec<_>>(); st.hidden.len()];
        self.encoder.backward(&self.params, &st, dh, g);
        Ok(loss)
    }
}
