//! Lenient extraction of `{answer, evidence}` from model replies.
//!
//! The first balanced `{...}` block is read as an object whose keys and
//! string values may use single or double quotes. Anything that does not
//! yield an answer of YES or NO is a parse failure, scored as NO with empty
//! evidence.

use robkit_core::annotate::Label;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Answer {
    Yes,
    No,
}

impl Answer {
    pub fn label(self) -> Label {
        Label::from_positive(self == Answer::Yes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmVerdict {
    pub answer: Answer,
    pub evidence: String,
    pub raw: String,
    pub parse_ok: bool,
}

impl LlmVerdict {
    fn fallback(raw: &str) -> Self {
        LlmVerdict {
            answer: Answer::No,
            evidence: String::new(),
            raw: raw.to_string(),
            parse_ok: false,
        }
    }
}

pub fn parse_verdict(raw: &str) -> LlmVerdict {
    let chars: Vec<char> = raw.chars().collect();
    let mut from = 0;
    while let Some(open) = chars[from..].iter().position(|&c| c == '{').map(|p| p + from) {
        let mut parser = Parser { s: &chars, i: open };
        if let Some(pairs) = parser.object() {
            let get = |k: &str| pairs.iter().find(|(key, _)| key.eq_ignore_ascii_case(k)).map(|(_, v)| v.trim());
            let answer = match get("answer").map(str::to_ascii_uppercase).as_deref() {
                Some("YES") => Some(Answer::Yes),
                Some("NO") => Some(Answer::No),
                _ => None,
            };
            if let Some(answer) = answer {
                return LlmVerdict {
                    answer,
                    evidence: get("evidence").unwrap_or_default().to_string(),
                    raw: raw.to_string(),
                    parse_ok: true,
                };
            }
        }
        from = open + 1;
    }
    LlmVerdict::fallback(raw)
}

struct Parser<'a> {
    s: &'a [char],
    i: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.s.get(self.i).is_some_and(|c| c.is_whitespace()) {
            self.i += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.s.get(self.i) == Some(&c) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn string(&mut self) -> Option<String> {
        self.skip_ws();
        let quote = *self.s.get(self.i)?;
        if quote != '"' && quote != '\'' {
            return None;
        }
        self.i += 1;
        let mut out = String::new();
        loop {
            let c = *self.s.get(self.i)?;
            self.i += 1;
            match c {
                '\\' => {
                    let e = *self.s.get(self.i)?;
                    self.i += 1;
                    out.push(match e {
                        'n' => '\n',
                        't' => '\t',
                        'r' => '\r',
                        other => other,
                    });
                }
                c if c == quote => return Some(out),
                c => out.push(c),
            }
        }
    }

    /// Bare words such as `YES` or `null`, up to a delimiter.
    fn bare(&mut self) -> Option<String> {
        self.skip_ws();
        let start = self.i;
        while self.s.get(self.i).is_some_and(|c| !matches!(c, ',' | '}' | ':') && !c.is_whitespace()) {
            self.i += 1;
        }
        (self.i > start).then(|| self.s[start..self.i].iter().collect())
    }

    fn value(&mut self) -> Option<String> {
        self.skip_ws();
        match self.s.get(self.i)? {
            '"' | '\'' => self.string(),
            _ => self.bare().map(|v| if v == "null" { String::new() } else { v }),
        }
    }

    fn object(&mut self) -> Option<Vec<(String, String)>> {
        if !self.eat('{') {
            return None;
        }
        let mut pairs = Vec::new();
        loop {
            if self.eat('}') {
                return Some(pairs);
            }
            let key = self.string().or_else(|| self.bare())?;
            if !self.eat(':') {
                return None;
            }
            let v = self.value()?;
            pairs.push((key, v));
            if self.eat(',') {
                continue;
            }
            if self.eat('}') {
                return Some(pairs);
            }
            return None;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_json() {
        let v = parse_verdict(r#"{"answer":"YES","evidence":"randomization was stratified"}"#);
        assert_eq!((v.answer, v.evidence.as_str(), v.parse_ok), (Answer::Yes, "randomization was stratified", true));
    }

    #[test]
    fn single_quotes_inside_prose() {
        let v = parse_verdict("Sure! Here you go:\n{\n  'answer': 'no', \n  'evidence': ''\n}.\nThanks");
        assert_eq!((v.answer, v.evidence.as_str(), v.parse_ok), (Answer::No, "", true));
    }

    #[test]
    fn skips_unrelated_braces() {
        let v = parse_verdict("set {a} then {'answer': 'YES', 'evidence': 'it\\'s blinded',}");
        assert_eq!((v.answer, v.evidence.as_str()), (Answer::Yes, "it's blinded"));
    }

    #[test]
    fn garbage_falls_back_to_no() {
        for raw in ["", "I cannot answer", "{'answer': 'MAYBE'}", "{'answer': 'YES'"] {
            let v = parse_verdict(raw);
            assert_eq!((v.answer, v.parse_ok, v.evidence.as_str()), (Answer::No, false, ""));
        }
    }

    #[test]
    fn answers_map_to_labels() {
        assert_eq!(Answer::Yes.label(), Label::Low);
        assert_eq!(Answer::No.label(), Label::HighUnclear);
    }
}
