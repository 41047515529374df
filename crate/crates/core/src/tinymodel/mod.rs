//! Desk-scale neural models for evidence extraction, answer classification
//! and answer generation, with hand-written reverse-mode gradients.

pub mod checkpoint;
pub mod data;
pub mod encoder;
pub mod extractive;
pub mod generative;
pub mod gradcheck;
pub mod losses;
pub mod synthetic;
pub mod tensor;
pub mod train;
pub mod vocab;

pub use checkpoint::{read_checkpoint, CheckpointHeader, ModelKind};
pub use data::{build_vocab, cls_examples, ext_examples, gen_examples, positive_weight, predict_generative, ExtPipeline};
pub use encoder::{Encoder, EncoderConfig, EncoderState, Mixing};
pub use extractive::{
    best_span, extract_span, ClassifierModel, ClsExample, ExtExample, ExtractiveModel, SpanPrediction, TinyConfig,
};
pub use generative::{GenExample, Generation, GenerativeModel, LossTerms};
pub use losses::{loss_bce, loss_ce, loss_generative, loss_mrc, loss_total_generative};
pub use tensor::{ParamSet, Tensor};
pub use train::{mean_loss, train, TrainConfig, TrainReport, Trainable};
pub use vocab::{pack, TokenSequence, Vocab};
