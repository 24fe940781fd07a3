use std::collections::BTreeMap;
use std::fmt;

use crate::concepts::{candidate, normalize_name, RawAnnotation, CANDIDATES};

/// One reason a response could not be turned into a full annotation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ParseIssue {
    MissingConcept(String),
    InvalidValue { concept: String, value: String },
}

impl fmt::Display for ParseIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseIssue::MissingConcept(c) => write!(f, "missing concept `{c}`"),
            ParseIssue::InvalidValue { concept, value } => {
                write!(f, "invalid value `{value}` for `{concept}`")
            }
        }
    }
}

/// Every problem found in a response, sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseFailure(pub Vec<ParseIssue>);

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

impl std::error::Error for ParseFailure {}

impl ParseFailure {
    /// Follow-up instruction asking the model to fix exactly these issues.
    pub fn repair_instruction(&self) -> String {
        let mut s = String::from("Your answer could not be used:\n");
        for issue in &self.0 {
            s.push_str(&format!("- {issue}\n"));
        }
        s.push_str(
            "Reply again with the complete list, one `concept: value` line per concept, \
             using only the admissible values.\n",
        );
        s
    }
}

fn strip_fences(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.starts_with("```"))
}

fn key_value_lines(text: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for line in strip_fences(text) {
        let line = line.trim_start_matches(['-', '*', '•', ' ']);
        let Some((k, v)) = line.split_once(':').or_else(|| line.split_once('=')) else {
            continue;
        };
        let name = normalize_name(k);
        if candidate(&name).is_some() {
            out.push((name, v.trim().to_string()));
        }
    }
    out
}

fn json_pairs(text: &str) -> Option<Vec<(String, String)>> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    let obj: BTreeMap<String, serde_json::Value> = serde_json::from_str(&text[start..=end]).ok()?;
    Some(
        obj.into_iter()
            .map(|(k, v)| {
                let v = match v {
                    serde_json::Value::String(s) => s,
                    serde_json::Value::Bool(true) => "yes".into(),
                    serde_json::Value::Bool(false) => "no".into(),
                    other => other.to_string(),
                };
                (normalize_name(&k), v)
            })
            .filter(|(k, _)| candidate(k).is_some())
            .collect(),
    )
}

/// Reads `concept: value` lines, falling back to a JSON object. Lines that
/// do not name a candidate are ignored. Succeeds only when all 14
/// candidates have one admissible value; values come back in canonical
/// spelling.
pub fn parse_response(text: &str) -> Result<RawAnnotation, ParseFailure> {
    let mut pairs = key_value_lines(text);
    if pairs.is_empty() {
        pairs = json_pairs(text).unwrap_or_default();
    }
    let mut found: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (k, v) in pairs {
        found.entry(k).or_default().push(v);
    }

    let mut issues = Vec::new();
    let mut raw = RawAnnotation::new();
    for c in &CANDIDATES {
        let Some(values) = found.get(c.name) else {
            issues.push(ParseIssue::MissingConcept(c.name.into()));
            continue;
        };
        let mut canon: Vec<String> = Vec::new();
        for v in values {
            let mut probe = RawAnnotation::new();
            probe.set(c.name, v);
            match probe.validated() {
                Ok(ok) => canon.push(ok.get(c.name).expect("validated key").to_string()),
                Err(_) => issues.push(ParseIssue::InvalidValue {
                    concept: c.name.into(),
                    value: v.clone(),
                }),
            }
        }
        canon.sort();
        canon.dedup();
        match canon.as_slice() {
            [one] => {
                raw.set(c.name, one);
            }
            [] => {}
            many => issues.push(ParseIssue::InvalidValue {
                concept: c.name.into(),
                value: many.join(" / "),
            }),
        }
    }
    if issues.is_empty() {
        Ok(raw)
    } else {
        issues.sort();
        Err(ParseFailure(issues))
    }
}
