//! Systematic-review risk-of-bias tables in the normalized interchange format.
//!
//! ```json
//! {
//!   "review_id": "CD000001",
//!   "studies": [
//!     {
//!       "study_id": "Smith 2010",
//!       "pubmed_id": "12345678",
//!       "rows": [
//!         {"domain": "Random sequence generation (selection bias)",
//!          "judgement": "low",
//!          "support": "Quote: \"computer generated random numbers\""}
//!       ]
//!     }
//!   ]
//! }
//! ```
//!
//! `pubmed_id` is optional. Judgements are `low`, `high` or `unclear` in any
//! case. Rows with an empty judgement or empty support text are routed to the
//! rejects stream instead of failing the whole file.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::text::normalize_whitespace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasType {
    Selection,
    Performance,
    Detection,
    Attrition,
    Reporting,
    Other,
}

impl BiasType {
    pub const ALL: [BiasType; 6] = [
        BiasType::Selection,
        BiasType::Performance,
        BiasType::Detection,
        BiasType::Attrition,
        BiasType::Reporting,
        BiasType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BiasType::Selection => "selection",
            BiasType::Performance => "performance",
            BiasType::Detection => "detection",
            BiasType::Attrition => "attrition",
            BiasType::Reporting => "reporting",
            BiasType::Other => "other",
        }
    }
}

impl fmt::Display for BiasType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BiasType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_lowercase();
        let lower = lower.strip_suffix(" bias").unwrap_or(&lower);
        BiasType::ALL
            .into_iter()
            .find(|b| b.as_str() == lower)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown bias type {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Judgement {
    Low,
    High,
    Unclear,
}

impl FromStr for Judgement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "low" => Ok(Judgement::Low),
            "high" => Ok(Judgement::High),
            "unclear" => Ok(Judgement::Unclear),
            other => Err(Error::InvalidArgument(format!("unknown judgement {other:?}"))),
        }
    }
}

/// One ground-truth row from a review's risk-of-bias table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportRecord {
    pub review_id: String,
    pub study_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pubmed_id: Option<String>,
    /// Position of the row within its study's table.
    pub row: usize,
    pub bias_type: BiasType,
    pub judgement: Judgement,
    pub support_text: String,
    /// Table heading exactly as it appeared in the review.
    pub raw_domain_label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    EmptySupport,
    EmptyJudgement,
    NoMatch,
    BelowThreshold,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::EmptySupport => "empty-support",
            RejectReason::EmptyJudgement => "empty-judgement",
            RejectReason::NoMatch => "no-match",
            RejectReason::BelowThreshold => "below-threshold",
        }
    }
}

/// A table row that did not become a dataset instance, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub review_id: String,
    pub study_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pubmed_id: Option<String>,
    pub row: usize,
    pub domain: String,
    pub reason: RejectReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_similarity: Option<f64>,
}

impl Reject {
    pub fn from_record(record: &SupportRecord, reason: RejectReason, best: Option<f64>) -> Self {
        Reject {
            review_id: record.review_id.clone(),
            study_id: record.study_id.clone(),
            pubmed_id: record.pubmed_id.clone(),
            row: record.row,
            domain: record.raw_domain_label.clone(),
            reason,
            best_similarity: best,
        }
    }
}

/// Ordered keyword rules mapping a table heading to a bias type. The first
/// rule with any matching keyword wins; unmatched headings map to
/// [`BiasType::Other`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainRules {
    pub rules: Vec<(BiasType, Vec<String>)>,
}

impl Default for DomainRules {
    fn default() -> Self {
        let rule = |b, kws: &[&str]| (b, kws.iter().map(|s| s.to_string()).collect());
        DomainRules {
            rules: vec![
                rule(BiasType::Selection, &["sequence", "randomi", "allocation"]),
                rule(
                    BiasType::Performance,
                    &["blinding of participants", "personnel", "performance"],
                ),
                rule(BiasType::Detection, &["outcome assess", "detection"]),
                rule(BiasType::Attrition, &["incomplete outcome", "attrition"]),
                rule(BiasType::Reporting, &["selective reporting", "reporting"]),
            ],
        }
    }
}

impl DomainRules {
    pub fn map(&self, raw_domain_label: &str) -> BiasType {
        let label = raw_domain_label.to_lowercase();
        self.rules
            .iter()
            .find(|(_, kws)| kws.iter().any(|k| label.contains(&k.to_lowercase())))
            .map(|(b, _)| *b)
            .unwrap_or(BiasType::Other)
    }
}

/// Map a table heading to its bias type with the default rules.
pub fn map_domain_label(raw_domain_label: &str) -> BiasType {
    DomainRules::default().map(raw_domain_label)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedReview {
    pub review_id: String,
    pub records: Vec<SupportRecord>,
    pub rejects: Vec<Reject>,
}

impl ParsedReview {
    pub fn rows(&self) -> usize {
        self.records.len() + self.rejects.len()
    }
}

/// Parse one interchange document.
pub fn parse_review_table(doc: &str, rules: &DomainRules) -> Result<ParsedReview> {
    let value: Value = serde_json::from_str(doc)?;
    let root = value
        .as_object()
        .ok_or_else(|| Error::schema("$", "expected an object"))?;
    let review_id = required_str(root.get("review_id"), "review_id")?;
    let studies = root
        .get("studies")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::schema("studies", "expected an array"))?;

    let mut parsed = ParsedReview {
        review_id: review_id.clone(),
        ..Default::default()
    };
    for (si, study) in studies.iter().enumerate() {
        let loc = format!("studies[{si}]");
        let study = study
            .as_object()
            .ok_or_else(|| Error::schema(&loc, "expected an object"))?;
        let study_id = required_str(study.get("study_id"), &format!("{loc}.study_id"))?;
        let pubmed_id = match study.get("pubmed_id") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) if s.trim().is_empty() => None,
            Some(Value::String(s)) => Some(s.trim().to_string()),
            Some(Value::Number(n)) => Some(n.to_string()),
            Some(_) => {
                return Err(Error::schema(
                    format!("{loc}.pubmed_id"),
                    "expected a string or number",
                ))
            }
        };
        let rows = study
            .get("rows")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::schema(format!("{loc}.rows"), "expected an array"))?;
        for (ri, row) in rows.iter().enumerate() {
            let rloc = format!("{loc}.rows[{ri}]");
            let row = row
                .as_object()
                .ok_or_else(|| Error::schema(&rloc, "expected an object"))?;
            let domain = required_str(row.get("domain"), &format!("{rloc}.domain"))?;
            let judgement_raw = optional_str(row.get("judgement"), &format!("{rloc}.judgement"))?;
            let support = normalize_whitespace(&optional_str(
                row.get("support"),
                &format!("{rloc}.support"),
            )?);

            let mut reject = |reason| {
                parsed.rejects.push(Reject {
                    review_id: review_id.clone(),
                    study_id: study_id.clone(),
                    pubmed_id: pubmed_id.clone(),
                    row: ri,
                    domain: domain.clone(),
                    reason,
                    best_similarity: None,
                })
            };
            if judgement_raw.trim().is_empty() {
                reject(RejectReason::EmptyJudgement);
                continue;
            }
            if support.is_empty() {
                reject(RejectReason::EmptySupport);
                continue;
            }
            let judgement = judgement_raw.parse::<Judgement>().map_err(|_| {
                Error::schema(
                    format!("{rloc}.judgement"),
                    format!("expected low/high/unclear, got {judgement_raw:?}"),
                )
            })?;
            parsed.records.push(SupportRecord {
                review_id: review_id.clone(),
                study_id: study_id.clone(),
                pubmed_id: pubmed_id.clone(),
                row: ri,
                bias_type: rules.map(&domain),
                judgement,
                support_text: support,
                raw_domain_label: domain,
            });
        }
    }
    Ok(parsed)
}

fn required_str(v: Option<&Value>, loc: &str) -> Result<String> {
    match v {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
        Some(Value::String(_)) => Err(Error::schema(loc, "must not be empty")),
        Some(_) => Err(Error::schema(loc, "expected a string")),
        None => Err(Error::schema(loc, "missing required field")),
    }
}

fn optional_str(v: Option<&Value>, loc: &str) -> Result<String> {
    match v {
        None | Some(Value::Null) => Ok(String::new()),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(Error::schema(loc, "expected a string")),
    }
}

/// Contract for converters from licensed review formats (for example RM5
/// exports) into the interchange document parsed by [`parse_review_table`].
/// No converter ships with this crate.
pub trait InterchangeConverter {
    /// Convert one source review into an interchange JSON document.
    fn to_interchange(&self, source: &[u8]) -> Result<String>;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(rows: &str) -> String {
        format!(r#"{{"review_id":"CD1","studies":[{{"study_id":"S1","pubmed_id":"11","rows":[{rows}]}}]}}"#)
    }

    #[test]
    fn sequence_generation_row_is_selection() {
        let d = doc(r#"{"domain":"Random sequence generation","judgement":"low","support":"randomization was stratified by BMI"}"#);
        let p = parse_review_table(&d, &DomainRules::default()).unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.records[0].bias_type, BiasType::Selection);
        assert_eq!(p.records[0].judgement, Judgement::Low);
        assert_eq!(p.records[0].pubmed_id.as_deref(), Some("11"));
    }

    #[test]
    fn empty_support_goes_to_rejects() {
        let d = doc(r#"{"domain":"Other bias","judgement":"High","support":"   "},{"domain":"Other bias","judgement":"","support":"x"}"#);
        let p = parse_review_table(&d, &DomainRules::default()).unwrap();
        assert!(p.records.is_empty());
        assert_eq!(p.rejects[0].reason, RejectReason::EmptySupport);
        assert_eq!(p.rejects[0].reason.as_str(), "empty-support");
        assert_eq!(p.rejects[1].reason, RejectReason::EmptyJudgement);
    }

    #[test]
    fn schema_errors_name_location() {
        let d = doc(r#"{"domain":"Other bias","judgement":3,"support":"x"}"#);
        match parse_review_table(&d, &DomainRules::default()) {
            Err(Error::Schema { location, .. }) => assert_eq!(location, "studies[0].rows[0].judgement"),
            other => panic!("unexpected {other:?}"),
        }
        let d = doc(r#"{"judgement":"low","support":"x"}"#);
        match parse_review_table(&d, &DomainRules::default()) {
            Err(Error::Schema { location, .. }) => assert_eq!(location, "studies[0].rows[0].domain"),
            other => panic!("unexpected {other:?}"),
        }
        let d = doc(r#"{"domain":"x","judgement":"maybe","support":"x"}"#);
        assert!(matches!(
            parse_review_table(&d, &DomainRules::default()),
            Err(Error::Schema { .. })
        ));
    }

    #[test]
    fn three_studies_six_domains() {
        let domains = [
            "Random sequence generation (selection bias)",
            "Allocation concealment (selection bias)",
            "Blinding of participants and personnel (performance bias)",
            "Blinding of outcome assessment (detection bias)",
            "Incomplete outcome data (attrition bias)",
            "Selective reporting (reporting bias)",
        ];
        let rows: Vec<String> = domains
            .iter()
            .map(|d| format!(r#"{{"domain":"{d}","judgement":"unclear","support":"s"}}"#))
            .collect();
        let studies: Vec<String> = (0..3)
            .map(|i| format!(r#"{{"study_id":"S{i}","rows":[{}]}}"#, rows.join(",")))
            .collect();
        let d = format!(r#"{{"review_id":"R","studies":[{}]}}"#, studies.join(","));
        let p = parse_review_table(&d, &DomainRules::default()).unwrap();
        assert_eq!(p.records.len(), 3 * 6);
        assert!(p.rejects.is_empty());
        assert!(p.records.iter().all(|r| r.pubmed_id.is_none()));
    }

    #[test]
    fn domain_rule_table() {
        let cases = [
            ("Allocation concealment (selection bias)", BiasType::Selection),
            ("Random sequence generation", BiasType::Selection),
            ("Blinding of participants and personnel", BiasType::Performance),
            ("Performance bias", BiasType::Performance),
            // "blinding of outcome assessment": no selection or performance
            // keyword, then "outcome assess" matches the detection rule.
            ("Blinding of outcome assessment", BiasType::Detection),
            ("Incomplete outcome data (attrition bias)", BiasType::Attrition),
            ("Selective reporting (reporting bias)", BiasType::Reporting),
            ("Other sources of bias", BiasType::Other),
            ("BLINDING OF OUTCOME ASSESSMENT", BiasType::Detection),
        ];
        for (label, expected) in cases {
            assert_eq!(map_domain_label(label), expected, "{label}");
        }
    }

    #[test]
    fn first_rule_wins() {
        // mentions both allocation (selection) and reporting
        assert_eq!(map_domain_label("allocation reporting"), BiasType::Selection);
    }

    #[test]
    fn bias_type_parses_names() {
        assert_eq!("Selection bias".parse::<BiasType>().unwrap(), BiasType::Selection);
        assert_eq!("other".parse::<BiasType>().unwrap(), BiasType::Other);
        assert!("nope".parse::<BiasType>().is_err());
    }
}
