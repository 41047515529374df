//! Conversion from annotated instances to model examples, and end-to-end
//! prediction for the extractive and generative variants.

use rayon::prelude::*;

use super::extractive::{extract_span, ClassifierModel, ClsExample, ExtExample, ExtractiveModel, TinyConfig};
use super::generative::{GenExample, GenerativeModel};
use super::vocab::{pack, Vocab, EOS};
use crate::annotate::{Instance, Label};
use crate::error::Result;
use crate::eval::Prediction;
use crate::text::TokenizerConfig;

pub const EXT_MODEL_NAME: &str = "tiny-ext";
pub const GEN_MODEL_NAME: &str = "tiny-gen";
pub const DECISION_THRESHOLD: f64 = 0.5;

/// Vocabulary over questions, contexts and answers.
pub fn build_vocab(instances: &[Instance], cap: usize) -> Result<Vocab> {
    let texts = instances
        .iter()
        .flat_map(|i| [i.question.as_str(), i.context.as_str(), i.answer_text.as_str()]);
    Vocab::build(texts, cap, TokenizerConfig::default())
}

/// Examples for span training. Instances whose answer was truncated out of
/// the sequence are skipped; the count of skipped instances is returned.
pub fn ext_examples(instances: &[Instance], vocab: &Vocab, max_len: usize) -> Result<(Vec<ExtExample>, usize)> {
    let mut out = Vec::with_capacity(instances.len());
    let mut skipped = 0;
    for inst in instances {
        let seq = pack(vocab, &inst.question, &inst.context, max_len)?;
        let end = inst.answer_start + inst.answer_text.chars().count();
        match seq.gold_span(inst.answer_start, end) {
            Some(gold) => out.push(ExtExample { seq, gold }),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} instances skipped: answer not inside the packed sequence");
    }
    Ok((out, skipped))
}

/// Classifier examples over the gold answer text.
pub fn cls_examples(instances: &[Instance], vocab: &Vocab, max_len: usize) -> Result<Vec<ClsExample>> {
    instances
        .iter()
        .map(|inst| {
            Ok(ClsExample {
                seq: pack(vocab, &inst.question, &inst.answer_text, max_len)?,
                label: inst.label.as_u8() as usize,
            })
        })
        .collect()
}

pub fn gen_examples(instances: &[Instance], vocab: &Vocab, config: &TinyConfig) -> Result<Vec<GenExample>> {
    instances
        .iter()
        .map(|inst| {
            let mut target = vocab.encode_words(&inst.answer_text);
            target.truncate(config.max_answer_len);
            target.push(EOS);
            Ok(GenExample {
                seq: pack(vocab, &inst.question, &inst.context, config.max_len)?,
                target,
                label: inst.label.as_u8(),
            })
        })
        .collect()
}

/// `N_neg / N_pos` over the instances, or 1 when a class is absent.
pub fn positive_weight(instances: &[Instance]) -> f64 {
    let pos = instances.iter().filter(|i| i.label.is_positive()).count();
    let neg = instances.len() - pos;
    if pos == 0 || neg == 0 {
        1.0
    } else {
        neg as f64 / pos as f64
    }
}

/// Span extractor followed by the answer classifier, which sees the
/// extracted text at prediction time.
pub struct ExtPipeline {
    pub extractor: ExtractiveModel,
    pub classifier: ClassifierModel,
}

impl ExtPipeline {
    pub fn predict(&self, instances: &[Instance], run: u64) -> Result<Vec<Prediction>> {
        let max_len = self.extractor.config.max_len;
        instances
            .par_iter()
            .map(|inst| {
                let seq = pack(&self.extractor.vocab, &inst.question, &inst.context, max_len)?;
                let pred = self.extractor.predict(&seq)?;
                let answer = extract_span(&pred, &seq, &inst.context).unwrap_or_default();
                let cls_seq = pack(&self.classifier.vocab, &inst.question, &answer, self.classifier.config.max_len)?;
                let score = self.classifier.predict_proba(&cls_seq)?;
                Ok(Prediction {
                    id: inst.id.clone(),
                    model: EXT_MODEL_NAME.to_string(),
                    run,
                    score,
                    label: Label::from_positive(score >= DECISION_THRESHOLD),
                    answer: Some(answer),
                })
            })
            .collect()
    }
}

pub fn predict_generative(model: &GenerativeModel, instances: &[Instance], run: u64) -> Result<Vec<Prediction>> {
    instances
        .par_iter()
        .map(|inst| {
            let seq = pack(&model.vocab, &inst.question, &inst.context, model.config.max_len)?;
            let g = model.generate(&seq)?;
            Ok(Prediction {
                id: inst.id.clone(),
                model: GEN_MODEL_NAME.to_string(),
                run,
                score: g.score,
                label: Label::from_positive(g.score >= DECISION_THRESHOLD),
                answer: Some(g.text),
            })
        })
        .collect()
}
