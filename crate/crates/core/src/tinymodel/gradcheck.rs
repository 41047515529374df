//! Finite-difference verification of the hand-written backward passes.
//!
//! Each check draws a small random model (hidden 3 to 5, one or two layers,
//! mean or attention mixing) and one random example, then compares the
//! analytic gradient over every parameter with central differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::encoder::Mixing;
use super::extractive::{ClassifierModel, ClsExample, ExtExample, ExtractiveModel, TinyConfig};
use super::generative::{GenExample, GenerativeModel, LossTerms};
use super::tensor::ParamSet;
use super::train::Trainable;
use super::vocab::{TokenSequence, Vocab, EOS, SEP};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;

/// `||a - b|| / max(||a||, ||b||)`, with the denominator floored at 1e-12.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

/// Central differences of `loss` with respect to every parameter.
pub fn central_differences(params: &ParamSet, step: f64, loss: impl Fn(&ParamSet) -> Result<f64>) -> Result<Vec<f64>> {
    let mut p = params.clone();
    let mut out = Vec::with_capacity(params.num_params());
    for k in 0..params.num_params() {
        let orig = *p.scalar_mut(k);
        *p.scalar_mut(k) = orig + step;
        let fp = loss(&p)?;
        *p.scalar_mut(k) = orig - step;
        let fm = loss(&p)?;
        *p.scalar_mut(k) = orig;
        out.push((fp - fm) / (2.0 * step));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradTarget {
    /// Start/end span loss of the extractive model.
    Span,
    /// Two-way cross-entropy of the answer classifier.
    Classification,
    /// Teacher-forced token loss of the generative model.
    Generation,
    /// Class-weighted binary cross-entropy of the generative model's head.
    WeightedBce,
    /// Generation plus weighted BCE.
    Combined,
}

impl GradTarget {
    pub const ALL: [GradTarget; 5] = [
        GradTarget::Span,
        GradTarget::Classification,
        GradTarget::Generation,
        GradTarget::WeightedBce,
        GradTarget::Combined,
    ];
}

fn random_config(rng: &mut ChaCha8Rng) -> Result<(TinyConfig, Vocab)> {
    let words: Vec<String> = (0..rng.random_range(3..8)).map(|i| format!("w{i}")).collect();
    let vocab = Vocab::build(words.iter().map(String::as_str), 64, Default::default())?;
    let config = TinyConfig {
        hidden: rng.random_range(3..6),
        layers: rng.random_range(1..3),
        max_len: 12,
        mixing: if rng.random_bool(0.5) { Mixing::Mean } else { Mixing::Attention },
        max_span: 4,
        max_answer_len: 4,
        seed: rng.random(),
    };
    Ok((config, vocab))
}

pub fn random_sequence(rng: &mut ChaCha8Rng, vocab_size: usize) -> TokenSequence {
    let q = rng.random_range(1..3);
    let c = rng.random_range(2..7);
    let mut ids: Vec<u32> = (0..q).map(|_| rng.random_range(5..vocab_size as u32)).collect();
    ids.push(SEP);
    ids.extend((0..c).map(|_| rng.random_range(1..vocab_size as u32)));
    let mut segments = vec![0u8; q + 1];
    segments.extend(vec![1u8; c]);
    TokenSequence {
        ids,
        segments,
        sep: q,
        context_spans: (0..c).map(|i| (i, i + 1)).collect(),
        truncated: false,
    }
}

fn check_trainable<M: Trainable + Clone>(model: &M, ex: &M::Example, set: impl Fn(&mut M, &ParamSet)) -> Result<f64> {
    let mut analytic = model.params().zeros_like();
    model.accumulate(ex, 1.0, &mut analytic)?;
    let numeric = central_differences(model.params(), FD_STEP, |p| {
        let mut m = model.clone();
        set(&mut m, p);
        m.loss(ex)
    })?;
    Ok(relative_error(&analytic.flat(), &numeric))
}

/// A random generative model and example.
pub fn random_generative_case(rng: &mut ChaCha8Rng) -> Result<(GenerativeModel, GenExample)> {
    let (config, vocab) = random_config(rng)?;
    let pos_weight = rng.random_range(1.0..4.0);
    let model = GenerativeModel::new(config, vocab.clone(), pos_weight);
    let len = rng.random_range(0..4);
    let mut target: Vec<u32> = (0..len).map(|_| rng.random_range(5..vocab.len() as u32)).collect();
    target.push(EOS);
    let ex = GenExample {
        seq: random_sequence(rng, vocab.len()),
        target,
        label: rng.random_range(0..2),
    };
    Ok((model, ex))
}

fn check_terms(model: &GenerativeModel, ex: &GenExample, terms: LossTerms) -> Result<f64> {
    let mut analytic = model.params.zeros_like();
    model.accumulate_terms(ex, terms, 1.0, &mut analytic)?;
    let numeric = central_differences(&model.params, FD_STEP, |p| {
        let mut m = model.clone();
        m.params = p.clone();
        let mut scratch = p.zeros_like();
        let (lg, lb) = m.accumulate_terms(ex, terms, 0.0, &mut scratch)?;
        Ok(if terms.generative { lg } else { 0.0 } + if terms.bce { lb } else { 0.0 })
    })?;
    Ok(relative_error(&analytic.flat(), &numeric))
}

/// Relative gradient error for each of `configs` random configurations.
pub fn gradient_suite(target: GradTarget, configs: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errors = Vec::with_capacity(configs);
    for _ in 0..configs {
        let err = match target {
            GradTarget::Span => {
                let (config, vocab) = random_config(&mut rng)?;
                let model = ExtractiveModel::new(config, vocab.clone());
                let seq = random_sequence(&mut rng, vocab.len());
                let s = rng.random_range(seq.context_start()..seq.len());
                let e = rng.random_range(s..seq.len());
                check_trainable(&model, &ExtExample { seq, gold: (s, e) }, |m, p| m.params = p.clone())?
            }
            GradTarget::Classification => {
                let (config, vocab) = random_config(&mut rng)?;
                let model = ClassifierModel::new(config, vocab.clone());
                let ex = ClsExample {
                    seq: random_sequence(&mut rng, vocab.len()),
                    label: rng.random_range(0..2),
                };
                check_trainable(&model, &ex, |m, p| m.params = p.clone())?
            }
            GradTarget::Generation | GradTarget::WeightedBce | GradTarget::Combined => {
                let (model, ex) = random_generative_case(&mut rng)?;
                let terms = match target {
                    GradTarget::Generation => LossTerms::GENERATIVE,
                    GradTarget::WeightedBce => LossTerms::BCE,
                    _ => LossTerms::TOTAL,
                };
                check_terms(&model, &ex, terms)?
            }
        };
        errors.push(err);
    }
    Ok(errors)
}
