//! Distant supervision: align review support text with article sentences and
//! turn each match into a question/context/answer instance with a binary
//! risk-of-bias label.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Article;
use crate::error::{Error, Result};
use crate::index::TfidfIndex;
use crate::reviews::{BiasType, Judgement, Reject, RejectReason, SupportRecord};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_WINDOW: usize = 3;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

pub const Q_SEQUENCE_GENERATION: &str = "Was the allocation sequence random?";
pub const Q_ALLOCATION_CONCEALMENT: &str =
    "Was the allocation sequence concealed until participants were enrolled and assigned to interventions?";
pub const Q_PERFORMANCE: &str =
    "Were the trial participants, staff, and study personnel blind to the intervention?";
pub const Q_DETECTION: &str = "Was the outcome assessor blinded to the intervention?";
pub const Q_ATTRITION: &str = "Was the incomplete outcome data addressed?";
pub const Q_REPORTING: &str = "Is the study free from selective reporting?";
pub const Q_OTHER: &str = "Is the study free from other types of bias?";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuestionSubtype {
    SequenceGeneration,
    AllocationConcealment,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SignalingQuestion {
    pub bias_type: BiasType,
    pub text: &'static str,
    pub subtype: QuestionSubtype,
}

/// The seven fixed signaling questions, two of them for selection bias.
pub const SIGNALING_QUESTIONS: [SignalingQuestion; 7] = [
    SignalingQuestion {
        bias_type: BiasType::Selection,
        text: Q_SEQUENCE_GENERATION,
        subtype: QuestionSubtype::SequenceGeneration,
    },
    SignalingQuestion {
        bias_type: BiasType::Selection,
        text: Q_ALLOCATION_CONCEALMENT,
        subtype: QuestionSubtype::AllocationConcealment,
    },
    SignalingQuestion {
        bias_type: BiasType::Performance,
        text: Q_PERFORMANCE,
        subtype: QuestionSubtype::None,
    },
    SignalingQuestion {
        bias_type: BiasType::Detection,
        text: Q_DETECTION,
        subtype: QuestionSubtype::None,
    },
    SignalingQuestion {
        bias_type: BiasType::Attrition,
        text: Q_ATTRITION,
        subtype: QuestionSubtype::None,
    },
    SignalingQuestion {
        bias_type: BiasType::Reporting,
        text: Q_REPORTING,
        subtype: QuestionSubtype::None,
    },
    SignalingQuestion {
        bias_type: BiasType::Other,
        text: Q_OTHER,
        subtype: QuestionSubtype::None,
    },
];

/// Binary class label; `Low` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Low,
    HighUnclear,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Low
    }

    /// 1 for `Low`, 0 for `HighUnclear`.
    pub fn as_u8(self) -> u8 {
        u8::from(self.is_positive())
    }

    pub fn from_positive(positive: bool) -> Self {
        if positive {
            Label::Low
        } else {
            Label::HighUnclear
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Low => "low",
            Label::HighUnclear => "high-unclear",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub review_id: String,
    pub study_id: String,
    pub pubmed_id: String,
    pub sentence_index: usize,
    pub similarity: f64,
}

/// One extraction + classification example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub bias_type: BiasType,
    pub question: String,
    pub context: String,
    pub answer_text: String,
    /// Character offset of `answer_text` within `context`.
    pub answer_start: usize,
    pub label: Label,
    pub provenance: Provenance,
}

impl Instance {
    /// Whether `context[answer_start..answer_start + len(answer_text)] == answer_text`.
    pub fn slice_ok(&self) -> bool {
        let len = self.answer_text.chars().count();
        crate::text::char_slice(&self.context, self.answer_start, self.answer_start + len)
            == self.answer_text
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportMatch {
    pub pubmed_id: String,
    pub sentence_index: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatchOutcome {
    Matched(SupportMatch),
    /// Best candidate did not exceed the threshold.
    BelowThreshold(f64),
    /// No sentence shares a term with the support text, or the article is
    /// not in the index.
    NoMatch,
}

/// Find the sentence most similar to the record's support text. Only a
/// similarity strictly above `threshold` counts.
pub fn match_support_detailed(record: &SupportRecord, index: &TfidfIndex, threshold: f64) -> MatchOutcome {
    let filter = record.pubmed_id.as_deref();
    if let Some(id) = filter {
        if !index.has_article(id) {
            return MatchOutcome::NoMatch;
        }
    }
    let hits = match index.query(&record.support_text, 1, filter) {
        Ok(h) => h,
        Err(_) => return MatchOutcome::NoMatch,
    };
    match hits.into_iter().next() {
        None => MatchOutcome::NoMatch,
        Some(h) if h.similarity > threshold => MatchOutcome::Matched(SupportMatch {
            pubmed_id: h.meta.pubmed_id,
            sentence_index: h.meta.sentence_index,
            similarity: h.similarity,
        }),
        Some(h) => MatchOutcome::BelowThreshold(h.similarity),
    }
}

pub fn match_support(record: &SupportRecord, index: &TfidfIndex, threshold: f64) -> Option<SupportMatch> {
    match match_support_detailed(record, index, threshold) {
        MatchOutcome::Matched(m) => Some(m),
        _ => None,
    }
}

/// Join sentences `[i - window, i + window]` (clipped) with single spaces and
/// return the context with the character offset of sentence `i` in it.
pub fn build_context(article: &Article, sentence_index: usize, window: usize) -> Result<(String, usize)> {
    let n = article.sentences.len();
    if sentence_index >= n {
        return Err(Error::InvalidArgument(format!(
            "sentence {sentence_index} out of range for article {} with {n} sentences",
            article.pubmed_id
        )));
    }
    let lo = sentence_index.saturating_sub(window);
    let hi = (sentence_index + window).min(n - 1);
    let mut context = String::new();
    let mut answer_start = 0;
    let mut chars = 0;
    for (k, s) in article.sentences[lo..=hi].iter().enumerate() {
        if k > 0 {
            context.push(' ');
            chars += 1;
        }
        if lo + k == sentence_index {
            answer_start = chars;
        }
        context.push_str(&s.text);
        chars += s.text.chars().count();
    }
    Ok((context, answer_start))
}

/// Pick the signaling question for a record. Selection records mentioning
/// concealment get the allocation-concealment question.
pub fn assign_question(record: &SupportRecord) -> SignalingQuestion {
    let wanted = match record.bias_type {
        BiasType::Selection => {
            let conceal = record.raw_domain_label.to_lowercase().contains("conceal")
                || record.support_text.to_lowercase().contains("conceal");
            if conceal {
                QuestionSubtype::AllocationConcealment
            } else {
                QuestionSubtype::SequenceGeneration
            }
        }
        _ => QuestionSubtype::None,
    };
    *SIGNALING_QUESTIONS
        .iter()
        .find(|q| q.bias_type == record.bias_type && q.subtype == wanted)
        .expect("every bias type has a question")
}

pub fn label_instance(judgement: Judgement) -> Label {
    match judgement {
        Judgement::Low => Label::Low,
        Judgement::High | Judgement::Unclear => Label::HighUnclear,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotationConfig {
    pub threshold: f64,
    pub window: usize,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        AnnotationConfig {
            threshold: DEFAULT_THRESHOLD,
            window: DEFAULT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub low: usize,
    pub high_unclear: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationStats {
    pub rows_in: usize,
    pub instances: usize,
    pub rejects: usize,
    pub rejects_by_reason: BTreeMap<String, usize>,
    pub per_bias_type: BTreeMap<BiasType, ClassCounts>,
}

#[derive(Debug, Clone, Default)]
pub struct AnnotationOutput {
    pub instances: Vec<Instance>,
    pub rejects: Vec<Reject>,
    pub stats: AnnotationStats,
}

/// Run the annotation stage over parsed records. `upstream_rejects` are rows
/// already rejected while parsing review tables; they are carried into the
/// rejects stream so that rows in equals instances plus rejects.
pub fn run_annotation(
    records: &[SupportRecord],
    upstream_rejects: &[Reject],
    articles: &[Article],
    index: &TfidfIndex,
    config: &AnnotationConfig,
) -> Result<AnnotationOutput> {
    let by_id: HashMap<&str, &Article> = articles.iter().map(|a| (a.pubmed_id.as_str(), a)).collect();
    let mut out = AnnotationOutput {
        rejects: upstream_rejects.to_vec(),
        ..Default::default()
    };
    let mut seen_ids = BTreeSet::new();

    for record in records {
        if crate::text::normalize_whitespace(&record.support_text).is_empty() {
            out.rejects.push(Reject::from_record(record, RejectReason::EmptySupport, None));
            continue;
        }
        let m = match match_support_detailed(record, index, config.threshold) {
            MatchOutcome::Matched(m) => m,
            MatchOutcome::BelowThreshold(best) => {
                out.rejects
                    .push(Reject::from_record(record, RejectReason::BelowThreshold, Some(best)));
                continue;
            }
            MatchOutcome::NoMatch => {
                out.rejects.push(Reject::from_record(record, RejectReason::NoMatch, None));
                continue;
            }
        };
        let article = by_id.get(m.pubmed_id.as_str()).ok_or_else(|| {
            Error::InvalidArgument(format!("index refers to article {} not in the corpus", m.pubmed_id))
        })?;
        let (context, answer_start) = build_context(article, m.sentence_index, config.window)?;
        let question = assign_question(record);
        let id = format!("{}:{}:{}", record.review_id, record.study_id, record.row);
        if !seen_ids.insert(id.clone()) {
            return Err(Error::InvalidArgument(format!("duplicate record id {id}")));
        }
        out.instances.push(Instance {
            id,
            bias_type: record.bias_type,
            question: question.text.to_string(),
            context,
            answer_text: article.sentences[m.sentence_index].text.clone(),
            answer_start,
            label: label_instance(record.judgement),
            provenance: Provenance {
                review_id: record.review_id.clone(),
                study_id: record.study_id.clone(),
                pubmed_id: m.pubmed_id,
                sentence_index: m.sentence_index,
                similarity: m.similarity,
            },
        });
    }

    let stats = &mut out.stats;
    stats.rows_in = records.len() + upstream_rejects.len();
    stats.instances = out.instances.len();
    stats.rejects = out.rejects.len();
    for r in &out.rejects {
        *stats.rejects_by_reason.entry(r.reason.as_str().to_string()).or_insert(0) += 1;
    }
    for inst in &out.instances {
        let c = stats.per_bias_type.entry(inst.bias_type).or_default();
        match inst.label {
            Label::Low => c.low += 1,
            Label::HighUnclear => c.high_unclear += 1,
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub test_fraction: f64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub per_bias_type: BTreeMap<BiasType, SplitCounts>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Split instances so each bias type contributes `round(n * test_fraction)`
/// of its instances to the test side, chosen by a seeded shuffle of the
/// type's ids in sorted order.
pub fn stratified_split(instances: &[Instance], test_fraction: f64, seed: u64) -> Result<SplitManifest> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let mut groups: BTreeMap<BiasType, Vec<&str>> = BTreeMap::new();
    for inst in instances {
        groups.entry(inst.bias_type).or_default().push(&inst.id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut manifest = SplitManifest {
        seed,
        test_fraction,
        train_ids: Vec::new(),
        test_ids: Vec::new(),
        per_bias_type: BTreeMap::new(),
        warnings: Vec::new(),
    };
    for (bias, mut ids) in groups {
        ids.sort_unstable();
        let before = ids.len();
        ids.dedup();
        if ids.len() != before {
            return Err(Error::InvalidArgument(format!("duplicate instance ids in {bias}")));
        }
        ids.shuffle(&mut rng);
        let n = ids.len();
        let n_test = if n == 1 {
            let msg = format!("bias type {bias} has a single instance; assigned to train");
            log::warn!("{msg}");
            manifest.warnings.push(msg);
            0
        } else {
            (n as f64 * test_fraction).round() as usize
        };
        manifest.test_ids.extend(ids[..n_test].iter().map(|s| s.to_string()));
        manifest.train_ids.extend(ids[n_test..].iter().map(|s| s.to_string()));
        manifest.per_bias_type.insert(
            bias,
            SplitCounts {
                train: n - n_test,
                test: n_test,
            },
        );
    }
    manifest.train_ids.sort();
    manifest.test_ids.sort();
    Ok(manifest)
}

/// Partition instances by a manifest, keeping input order within each side.
pub fn apply_split(instances: &[Instance], manifest: &SplitManifest) -> (Vec<Instance>, Vec<Instance>) {
    let test: BTreeSet<&str> = manifest.test_ids.iter().map(String::as_str).collect();
    instances.iter().cloned().partition(|i| !test.contains(i.id.as_str()))
}
