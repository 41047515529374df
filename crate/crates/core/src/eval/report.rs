//! Per-bias-type and overall evaluation reports.
//!
//! The overall block is computed over all instances jointly, not averaged
//! over bias types. When a model has several runs (seeds), each metric is the
//! mean over runs and confusion counts are pooled.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{macro_prf, roc_auc, roc_points, span_f1_em, Confusion};
use super::stats::{welch_t_test, WelchTest};
use crate::annotate::{Instance, Label};
use crate::error::{Error, Result};
use crate::reviews::BiasType;

/// One model output for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub model: String,
    #[serde(default)]
    pub run: u64,
    /// Ranking score for the positive (Low) class.
    pub score: f64,
    pub label: Label,
    /// Extracted or generated evidence, when the model produces one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanBlock {
    pub f1: f64,
    pub em: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClsEvalResult {
    pub precision: f64,
    pub recall: f64,
    pub macro_f1: f64,
    /// `None` when the block holds only one gold class.
    pub roc_auc: Option<f64>,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBlock {
    /// A bias type name or `overall`.
    pub scope: String,
    pub n: usize,
    pub span: Option<SpanBlock>,
    pub classification: ClsEvalResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    pub runs: Vec<u64>,
    /// Bias-type blocks in [`BiasType::ALL`] order, then `overall`.
    pub blocks: Vec<MetricBlock>,
    pub missing: Vec<String>,
    /// Pooled ROC curve over all runs, `None` for single-class data.
    pub roc: Option<Vec<(f64, f64)>>,
    /// Overall macro-F1 of each run, in run order.
    pub run_macro_f1: Vec<f64>,
}

impl ModelReport {
    pub fn overall(&self) -> &MetricBlock {
        self.blocks.last().expect("overall block always present")
    }

    pub fn block(&self, scope: &str) -> Option<&MetricBlock> {
        self.blocks.iter().find(|b| b.scope == scope)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub model_a: String,
    pub model_b: String,
    pub metric: String,
    pub test: String,
    pub result: WelchTest,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub models: Vec<ModelReport>,
    pub comparisons: Vec<Comparison>,
}

struct Row<'a> {
    inst: &'a Instance,
    pred: &'a Prediction,
}

fn block_for(scope: &str, runs: &[Vec<Row<'_>>]) -> Result<MetricBlock> {
    let mut precision = 0.0;
    let mut recall = 0.0;
    let mut macro_f1 = 0.0;
    let mut auc_sum = 0.0;
    let mut auc_defined = true;
    let mut span_sum = (0.0, 0.0);
    let mut has_span = false;
    let mut confusion = Confusion::default();
    for rows in runs {
        let labels: Vec<bool> = rows.iter().map(|r| r.inst.label.is_positive()).collect();
        let preds: Vec<bool> = rows.iter().map(|r| r.pred.label.is_positive()).collect();
        let scores: Vec<f64> = rows.iter().map(|r| r.pred.score).collect();
        let m = macro_prf(&labels, &preds)?;
        precision += m.precision;
        recall += m.recall;
        macro_f1 += m.macro_f1;
        confusion.tp += m.confusion.tp;
        confusion.fp += m.confusion.fp;
        confusion.fn_ += m.confusion.fn_;
        confusion.tn += m.confusion.tn;
        match roc_auc(&scores, &labels) {
            Ok(a) => auc_sum += a,
            Err(Error::UndefinedMetric(_)) => auc_defined = false,
            Err(e) => return Err(e),
        }
        let answered: Vec<_> = rows
            .iter()
            .filter_map(|r| r.pred.answer.as_deref().map(|a| span_f1_em(a, &r.inst.answer_text)))
            .collect();
        if !answered.is_empty() {
            has_span = true;
            // rows without an answer score zero
            let n = rows.len() as f64;
            let f1: f64 = answered.iter().map(|s| s.f1).sum::<f64>();
            let em: f64 = answered.iter().map(|s| s.em).sum::<f64>();
            span_sum.0 += f1 / n;
            span_sum.1 += em / n;
        }
    }
    let k = runs.len() as f64;
    Ok(MetricBlock {
        scope: scope.to_string(),
        n: runs.first().map_or(0, Vec::len),
        span: has_span.then(|| SpanBlock {
            f1: span_sum.0 / k,
            em: span_sum.1 / k,
        }),
        classification: ClsEvalResult {
            precision: precision / k,
            recall: recall / k,
            macro_f1: macro_f1 / k,
            roc_auc: auc_defined.then(|| auc_sum / k),
            confusion,
        },
    })
}

/// Score `predictions` against `instances`, one report per model.
pub fn build_report(predictions: &[Prediction], instances: &[Instance]) -> Result<EvalReport> {
    let by_id: HashMap<&str, &Instance> = instances.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut grouped: BTreeMap<&str, BTreeMap<u64, HashMap<&str, &Prediction>>> = BTreeMap::new();
    for p in predictions {
        if !by_id.contains_key(p.id.as_str()) {
            return Err(Error::InvalidArgument(format!(
                "prediction for unknown instance {} (model {})",
                p.id, p.model
            )));
        }
        if grouped
            .entry(&p.model)
            .or_default()
            .entry(p.run)
            .or_default()
            .insert(&p.id, p)
            .is_some()
        {
            return Err(Error::InvalidArgument(format!(
                "duplicate prediction for {} (model {}, run {})",
                p.id, p.model, p.run
            )));
        }
    }

    let mut ordered: Vec<&Instance> = instances.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));

    let mut models = Vec::new();
    for (model, runs) in &grouped {
        // an instance counts only if every run predicted it
        let mut missing = BTreeSet::new();
        for inst in &ordered {
            if runs.values().any(|preds| !preds.contains_key(inst.id.as_str())) {
                missing.insert(inst.id.clone());
            }
        }
        if missing.len() == ordered.len() {
            return Err(Error::InvalidArgument(format!("model {model} has no usable predictions")));
        }
        let rows_for = |filter: Option<BiasType>| -> Vec<Vec<Row<'_>>> {
            runs.values()
                .map(|preds| {
                    ordered
                        .iter()
                        .filter(|i| !missing.contains(&i.id))
                        .filter(|i| filter.is_none_or(|b| i.bias_type == b))
                        .map(|i| Row {
                            inst: i,
                            pred: preds[i.id.as_str()],
                        })
                        .collect()
                })
                .collect()
        };

        let mut blocks = Vec::new();
        for bias in BiasType::ALL {
            let rows = rows_for(Some(bias));
            if rows[0].is_empty() {
                continue;
            }
            blocks.push(block_for(bias.as_str(), &rows)?);
        }
        let all = rows_for(None);
        blocks.push(block_for("overall", &all)?);

        let mut run_macro_f1 = Vec::new();
        for rows in &all {
            run_macro_f1.push(block_for("overall", std::slice::from_ref(rows))?.classification.macro_f1);
        }

        let pooled_scores: Vec<f64> = all.iter().flatten().map(|r| r.pred.score).collect();
        let pooled_labels: Vec<bool> = all.iter().flatten().map(|r| r.inst.label.is_positive()).collect();
        let roc = match roc_points(&pooled_scores, &pooled_labels) {
            Ok(p) => Some(p),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };

        if !missing.is_empty() {
            log::warn!("model {model}: {} instances without predictions excluded", missing.len());
        }
        models.push(ModelReport {
            model: model.to_string(),
            runs: runs.keys().copied().collect(),
            blocks,
            missing: missing.into_iter().collect(),
            roc,
            run_macro_f1,
        });
    }

    let mut comparisons = Vec::new();
    for (i, a) in models.iter().enumerate() {
        for b in &models[i + 1..] {
            if a.run_macro_f1.len() < 2 || b.run_macro_f1.len() < 2 {
                continue;
            }
            if let Ok(result) = welch_t_test(&a.run_macro_f1, &b.run_macro_f1) {
                comparisons.push(Comparison {
                    model_a: a.model.clone(),
                    model_b: b.model.clone(),
                    metric: "macro_f1".into(),
                    test: "welch".into(),
                    significant: result.significant(),
                    result,
                });
            }
        }
    }
    Ok(EvalReport { models, comparisons })
}

fn fmt_value(v: f64) -> String {
    format!("{v:.6}")
}

impl EvalReport {
    /// Long-format CSV with columns `bias_type,metric,model,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bias_type,metric,model,value\n");
        for m in &self.models {
            for b in &m.blocks {
                let c = &b.classification;
                let mut rows: Vec<(&str, String)> = vec![
                    ("n", b.n.to_string()),
                    ("precision", fmt_value(c.precision)),
                    ("recall", fmt_value(c.recall)),
                    ("macro_f1", fmt_value(c.macro_f1)),
                    (
                        "roc_auc",
                        c.roc_auc.map(fmt_value).unwrap_or_else(|| "undefined".into()),
                    ),
                    ("tp", c.confusion.tp.to_string()),
                    ("fp", c.confusion.fp.to_string()),
                    ("fn", c.confusion.fn_.to_string()),
                    ("tn", c.confusion.tn.to_string()),
                ];
                if let Some(s) = b.span {
                    rows.push(("span_f1", fmt_value(s.f1)));
                    rows.push(("span_em", fmt_value(s.em)));
                }
                for (metric, value) in rows {
                    let _ = writeln!(out, "{},{},{},{}", b.scope, metric, csv_field(&m.model), value);
                }
            }
        }
        out
    }

    /// `model,fpr,tpr` rows of each model's pooled ROC curve.
    pub fn roc_csv(&self) -> String {
        let mut out = String::from("model,fpr,tpr\n");
        for m in &self.models {
            for (fpr, tpr) in m.roc.iter().flatten() {
                let _ = writeln!(out, "{},{},{}", csv_field(&m.model), fmt_value(*fpr), fmt_value(*tpr));
            }
        }
        out
    }

    pub fn significance_csv(&self) -> String {
        let mut out = String::from("model_a,model_b,metric,test,t,df,p,significant\n");
        for c in &self.comparisons {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                csv_field(&c.model_a),
                csv_field(&c.model_b),
                c.metric,
                c.test,
                fmt_value(c.result.t),
                fmt_value(c.result.df),
                fmt_value(c.result.p),
                c.significant
            );
        }
        out
    }

    /// Markdown table: one section per bias type with a row per model.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Risk of bias inference\n");
        let mut scopes: Vec<String> = BiasType::ALL.iter().map(|b| b.as_str().to_string()).collect();
        scopes.push("overall".into());
        for scope in scopes {
            let rows: Vec<(&ModelReport, &MetricBlock)> = self
                .models
                .iter()
                .filter_map(|m| m.block(&scope).map(|b| (m, b)))
                .collect();
            if rows.is_empty() {
                continue;
            }
            let _ = writeln!(out, "\n## {scope}\n");
            out.push_str("| Model | N | Precision | Recall | Macro-F1 | ROC AUC | EM | Span F1 |\n");
            out.push_str("|---|---:|---:|---:|---:|---:|---:|---:|\n");
            for (m, b) in rows {
                let c = &b.classification;
                let pct = |v: f64| format!("{:.2}", 100.0 * v);
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {} | {} | {} |",
                    m.model,
                    b.n,
                    pct(c.precision),
                    pct(c.recall),
                    pct(c.macro_f1),
                    c.roc_auc.map(|a| format!("{a:.2}")).unwrap_or_else(|| "n/a".into()),
                    b.span.map(|s| pct(s.em)).unwrap_or_else(|| "-".into()),
                    b.span.map(|s| pct(s.f1)).unwrap_or_else(|| "-".into()),
                );
            }
        }
        if !self.comparisons.is_empty() {
            out.push_str("\n## Significance (Welch t-test on per-run macro-F1, p < 0.05)\n\n");
            out.push_str("| Model A | Model B | t | df | p | significant |\n|---|---|---:|---:|---:|---|\n");
            for c in &self.comparisons {
                let _ = writeln!(
                    out,
                    "| {} | {} | {:.3} | {:.2} | {:.4} | {} |",
                    c.model_a, c.model_b, c.result.t, c.result.df, c.result.p, c.significant
                );
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::Provenance;

    fn inst(id: &str, bias: BiasType, label: Label) -> Instance {
        Instance {
            id: id.into(),
            bias_type: bias,
            question: "q".into(),
            context: "ctx answer".into(),
            answer_text: "answer".into(),
            answer_start: 4,
            label,
            provenance: Provenance {
                review_id: "r".into(),
                study_id: "s".into(),
                pubmed_id: "p".into(),
                sentence_index: 0,
                similarity: 1.0,
            },
        }
    }

    fn pred(id: &str, model: &str, score: f64) -> Prediction {
        Prediction {
            id: id.into(),
            model: model.into(),
            run: 0,
            score,
            label: Label::from_positive(score >= 0.5),
            answer: None,
        }
    }

    #[test]
    fn single_type_overall_equals_type_block() {
        let insts = vec![
            inst("1", BiasType::Attrition, Label::Low),
            inst("2", BiasType::Attrition, Label::HighUnclear),
            inst("3", BiasType::Attrition, Label::Low),
        ];
        let preds = vec![pred("1", "m", 0.9), pred("2", "m", 0.7), pred("3", "m", 0.2)];
        let r = build_report(&preds, &insts).unwrap();
        let m = &r.models[0];
        assert_eq!(m.blocks.len(), 2);
        let mut typed = m.blocks[0].clone();
        typed.scope = "overall".into();
        assert_eq!(&typed, m.overall());
        assert_eq!(m.overall().classification.confusion.total(), 3);
    }

    #[test]
    fn missing_predictions_are_listed_and_excluded() {
        let insts = vec![
            inst("1", BiasType::Other, Label::Low),
            inst("2", BiasType::Other, Label::HighUnclear),
            inst("3", BiasType::Other, Label::Low),
        ];
        let r = build_report(&[pred("1", "m", 0.9), pred("2", "m", 0.1)], &insts).unwrap();
        assert_eq!(r.models[0].missing, ["3"]);
        assert_eq!(r.models[0].overall().n, 2);
        assert!(build_report(&[pred("9", "m", 0.9)], &insts).is_err());
    }

    #[test]
    fn single_class_block_has_undefined_auc() {
        let insts = vec![inst("1", BiasType::Other, Label::Low), inst("2", BiasType::Other, Label::Low)];
        let r = build_report(&[pred("1", "m", 0.9), pred("2", "m", 0.1)], &insts).unwrap();
        assert_eq!(r.models[0].overall().classification.roc_auc, None);
        assert!(r.to_csv().contains("overall,roc_auc,m,undefined"));
        assert!(r.models[0].roc.is_none());
    }

    #[test]
    fn runs_are_averaged_and_compared() {
        let insts: Vec<_> = (0..6)
            .map(|i| inst(&i.to_string(), BiasType::Selection, Label::from_positive(i % 2 == 0)))
            .collect();
        let mut preds = Vec::new();
        for run in 0..3u64 {
            for i in 0..6 {
                let good = if i % 2 == 0 { 0.9 } else { 0.1 };
                let bad = if i < run as usize + 2 { 0.9 } else { 0.1 };
                preds.push(Prediction { run, ..pred(&i.to_string(), "good", good) });
                preds.push(Prediction { run, ..pred(&i.to_string(), "bad", bad) });
            }
        }
        let r = build_report(&preds, &insts).unwrap();
        assert_eq!(r.models.len(), 2);
        assert_eq!(r.models[1].model, "good");
        assert_eq!(r.models[1].overall().classification.macro_f1, 1.0);
        assert_eq!(r.models[1].overall().classification.confusion.total(), 18);
        assert_eq!(r.comparisons.len(), 1);
        assert!(r.significance_csv().lines().count() == 2);
    }

    #[test]
    fn csv_and_markdown_shapes() {
        let insts = vec![
            inst("1", BiasType::Selection, Label::Low),
            inst("2", BiasType::Reporting, Label::HighUnclear),
        ];
        let mut p = pred("1", "lr", 0.9);
        p.answer = Some("answer".into());
        let r = build_report(&[p, pred("2", "lr", 0.2)], &insts).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("bias_type,metric,model,value\n"));
        assert!(csv.contains("selection,span_em,lr,1.000000"));
        assert!(csv.contains("overall,span_f1,lr,0.500000"));
        let md = r.to_markdown();
        assert!(md.contains("## selection") && md.contains("## overall"));
        assert!(r.roc_csv().starts_with("model,fpr,tpr\nlr,0.000000,0.000000"));
    }
}
