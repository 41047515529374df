//! Evaluation metrics, significance testing and report assembly.

pub mod metrics;
pub mod report;
pub mod stats;

pub use metrics::{macro_prf, normalize_answer, roc_auc, roc_points, span_f1_em, Confusion, MacroPrf, SpanScore};
pub use report::{build_report, EvalReport, MetricBlock, ModelReport, Prediction};
pub use stats::{welch_t_test, WelchTest};
