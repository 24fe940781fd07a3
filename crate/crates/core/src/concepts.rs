//! The concept taxonomy and the maps between raw annotation values and the
//! binary vectors the models consume.
//!
//! Three layers of representation:
//!
//! * [`RawAnnotation`]: the 14 candidate concepts with string values, as
//!   extracted from an anamnesis.
//! * [`ExpandedVector`]: 20 bits, one column per binary candidate and one
//!   column per value of each multi-valued candidate.
//! * [`ConceptVector`]: the final 9 predictable + 5 patient-provided concepts.
//!   Excluded columns are dropped and `dysphonia_light_moderate` is merged
//!   into `dysphonia_moderate`.
//!
//! Names are the contract everywhere. Files and wire formats key values by
//! name; index order is only used inside a process.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const N_CANDIDATES: usize = 14;
pub const N_EXPANDED: usize = 20;
pub const N_PREDICTED: usize = 9;
pub const N_PROVIDED: usize = 5;
pub const N_TASK_INPUT: usize = N_PREDICTED + N_PROVIDED;

/// One raw concept and how its values land in expanded columns.
#[derive(Debug, Clone, Copy)]
pub struct Candidate {
    pub name: &'static str,
    /// Admissible canonical values and the column (offset into `columns`) each
    /// one sets, if any.
    pub values: &'static [(&'static str, Option<usize>)],
    pub columns: &'static [&'static str],
}

impl Candidate {
    pub fn is_binary(&self) -> bool {
        self.columns.len() == 1
    }

    fn canonical_value(&self, raw: &str) -> Option<&'static str> {
        let v = normalize_token(raw);
        if let Some((canon, _)) = self.values.iter().find(|(c, _)| *c == v) {
            return Some(canon);
        }
        let alias = match (self.name, v.as_str()) {
            ("gender", "m" | "man") => "male",
            ("gender", "f" | "woman") => "female",
            ("gender", _) => return None,
            ("dysphonia" | "mucous", _) => return None,
            (_, "true" | "present" | "y" | "1") => "yes",
            (_, "false" | "absent" | "n" | "0") => "no",
            _ => return None,
        };
        self.values.iter().find(|(c, _)| *c == alias).map(|(c, _)| *c)
    }

    /// The value used when a non-critical concept is missing.
    fn negative_value(&self) -> Option<&'static str> {
        self.values
            .iter()
            .find(|(_, col)| col.is_none())
            .map(|(v, _)| *v)
    }
}

const YES_NO: &[(&str, Option<usize>)] = &[("yes", Some(0)), ("no", None)];

/// Gender is encoded as a single `gender_male` bit. The choice of male = 1 is
/// arbitrary; this table is the only place it is made.
const GENDER: &[(&str, Option<usize>)] = &[("male", Some(0)), ("female", None)];

const DYSPHONIA: &[(&str, Option<usize>)] = &[
    ("absent", Some(0)),
    ("light", Some(1)),
    ("light-moderate", Some(2)),
    ("moderate", Some(3)),
    ("severe", Some(4)),
];

const MUCOUS: &[(&str, Option<usize>)] = &[
    ("pink", Some(0)),
    ("hyperemic", Some(1)),
    ("eutrophic", Some(2)),
    ("none", None),
];

macro_rules! binary {
    ($name:literal) => {
        Candidate {
            name: $name,
            values: YES_NO,
            columns: &[$name],
        }
    };
}

pub static CANDIDATES: [Candidate; N_CANDIDATES] = [
    binary!("smoking"),
    binary!("professional_voice_use"),
    Candidate {
        name: "dysphonia",
        values: DYSPHONIA,
        columns: &[
            "dysphonia_absent",
            "dysphonia_light",
            "dysphonia_light_moderate",
            "dysphonia_moderate",
            "dysphonia_severe",
        ],
    },
    binary!("irregular_mucosal_wave"),
    Candidate {
        name: "mucous",
        values: MUCOUS,
        columns: &["mucous_pink", "mucous_hyperemic", "mucous_eutrophic"],
    },
    binary!("diplophonia"),
    binary!("strain"),
    binary!("roughness"),
    binary!("breathiness"),
    binary!("asthenicity"),
    binary!("phonasthenia"),
    binary!("glottic_hourglass_configuration"),
    binary!("dysodia"),
    Candidate {
        name: "gender",
        values: GENDER,
        columns: &["gender_male"],
    },
];

pub const PREDICTED: [&str; N_PREDICTED] = [
    "dysphonia_absent",
    "dysphonia_light",
    "dysphonia_moderate",
    "dysphonia_severe",
    "diplophonia",
    "strain",
    "roughness",
    "breathiness",
    "asthenicity",
];

pub const PROVIDED: [&str; N_PROVIDED] = [
    "smoke",
    "professional_voice_use",
    "gender",
    "phonasthenia",
    "dysodia",
];

pub const EXCLUDED: [&str; 5] = [
    "irregular_mucosal_wave",
    "mucous_pink",
    "mucous_hyperemic",
    "mucous_eutrophic",
    "glottic_hourglass_configuration",
];

/// Indices of the mutually exclusive dysphonia grades inside [`PREDICTED`].
pub const DYSPHONIA_GROUP: std::ops::Range<usize> = 0..4;

const PREDICTED_LABELS: [&str; N_PREDICTED] = [
    "Dysphonia absent",
    "Dysphonia light",
    "Dysphonia moderate",
    "Dysphonia severe",
    "Diplophonia",
    "Strain",
    "Roughness",
    "Breathiness",
    "Asthenicity",
];

const PROVIDED_LABELS: [&str; N_PROVIDED] = [
    "Smoke",
    "Professional use of voice",
    "Gender (male)",
    "Phonasthenia",
    "Dysodia",
];

/// Expanded column feeding each final predicted concept.
const PREDICTED_SOURCES: [&str; N_PREDICTED] = [
    "dysphonia_absent",
    "dysphonia_light",
    "dysphonia_moderate",
    "dysphonia_severe",
    "diplophonia",
    "strain",
    "roughness",
    "breathiness",
    "asthenicity",
];

const PROVIDED_SOURCES: [&str; N_PROVIDED] = [
    "smoking",
    "professional_voice_use",
    "gender_male",
    "phonasthenia",
    "dysodia",
];

/// Columns OR-ed into another column during projection.
const MERGES: [(&str, &str); 1] = [("dysphonia_light_moderate", "dysphonia_moderate")];

fn normalize_token(raw: &str) -> String {
    raw.trim()
        .trim_matches(|c: char| c == '"' || c == '\'' || c == '.' || c == ',')
        .trim()
        .to_lowercase()
        .replace(['_', ' '], "-")
}

/// Normalizes a concept name as written by a human or an LLM into the
/// snake_case identifier used by the schema.
pub fn normalize_name(raw: &str) -> String {
    raw.trim()
        .trim_matches(|c: char| c == '"' || c == '\'' || c == '*' || c == '-' || c == '`')
        .trim()
        .to_lowercase()
        .replace([' ', '-'], "_")
}

pub fn candidate(name: &str) -> Option<&'static Candidate> {
    CANDIDATES.iter().find(|c| c.name == name)
}

/// Names of the 20 expanded columns, in order.
pub fn expanded_names() -> &'static [&'static str] {
    static NAMES: OnceLock<Vec<&'static str>> = OnceLock::new();
    NAMES.get_or_init(|| CANDIDATES.iter().flat_map(|c| c.columns.iter().copied()).collect())
}

pub fn expanded_index(name: &str) -> Option<usize> {
    expanded_names().iter().position(|n| *n == name)
}

pub fn predicted_index(name: &str) -> Option<usize> {
    PREDICTED.iter().position(|n| *n == name)
}

pub fn provided_index(name: &str) -> Option<usize> {
    PROVIDED.iter().position(|n| *n == name)
}

/// Candidate concept name → value string.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RawAnnotation(pub BTreeMap<String, String>);

impl RawAnnotation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, concept: &str, value: &str) -> &mut Self {
        self.0.insert(concept.to_string(), value.to_string());
        self
    }

    pub fn get(&self, concept: &str) -> Option<&str> {
        self.0.get(concept).map(String::as_str)
    }

    /// Every concept at its negative value and dysphonia absent.
    pub fn negative() -> Self {
        let mut raw = Self::new();
        for c in &CANDIDATES {
            let v = if c.name == "dysphonia" {
                "absent"
            } else {
                c.negative_value().expect("non-dysphonia candidates have a negative value")
            };
            raw.set(c.name, v);
        }
        raw
    }

    /// Maps every value to its canonical spelling. Unknown keys and values
    /// are errors; missing keys are left missing.
    pub fn validated(&self) -> Result<RawAnnotation> {
        let mut out = RawAnnotation::new();
        for (k, v) in &self.0 {
            let cand = candidate(k).ok_or_else(|| Error::UnknownConcept(k.clone()))?;
            let canon = cand.canonical_value(v).ok_or_else(|| Error::Annotation {
                concept: k.clone(),
                reason: format!("inadmissible value `{v}`"),
            })?;
            out.set(k, canon);
        }
        Ok(out)
    }
}

/// The 20 one-hot expanded columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExpandedVector(pub [u8; N_EXPANDED]);

impl ExpandedVector {
    pub fn get(&self, name: &str) -> Option<u8> {
        expanded_index(name).map(|i| self.0[i])
    }
}

/// One-hot encodes a raw annotation.
///
/// Missing binary concepts count as absent and are logged; clinical notes
/// tend to omit negatives. A missing dysphonia grade is an error because
/// the grade group must be exactly one-hot.
pub fn one_hot_expand(raw: &RawAnnotation) -> Result<ExpandedVector> {
    let raw = raw.validated()?;
    let mut bits = [0u8; N_EXPANDED];
    let mut offset = 0;
    for cand in &CANDIDATES {
        let value = match raw.get(cand.name) {
            Some(v) => v,
            None if cand.name == "dysphonia" => {
                return Err(Error::Annotation {
                    concept: cand.name.into(),
                    reason: "missing value".into(),
                });
            }
            None => {
                log::warn!("concept `{}` missing, treated as negative", cand.name);
                cand.negative_value().expect("has a negative value")
            }
        };
        let (_, col) = cand
            .values
            .iter()
            .find(|(v, _)| *v == value)
            .expect("validated value");
        if let Some(c) = col {
            bits[offset + c] = 1;
        }
        offset += cand.columns.len();
    }
    Ok(ExpandedVector(bits))
}

/// Inverse of [`one_hot_expand`] on well-formed vectors.
pub fn decode_expanded(expanded: &ExpandedVector) -> Result<RawAnnotation> {
    let mut raw = RawAnnotation::new();
    let mut offset = 0;
    for cand in &CANDIDATES {
        let group = &expanded.0[offset..offset + cand.columns.len()];
        let set: Vec<usize> = group
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0)
            .map(|(i, _)| i)
            .collect();
        let value = match set.as_slice() {
            [] => cand.negative_value(),
            [i] => cand
                .values
                .iter()
                .find(|(_, c)| *c == Some(*i))
                .map(|(v, _)| *v),
            _ => None,
        }
        .ok_or_else(|| Error::Annotation {
            concept: cand.name.into(),
            reason: format!("bit pattern {group:?} is not a valid one-hot group"),
        })?;
        raw.set(cand.name, value);
        offset += cand.columns.len();
    }
    Ok(raw)
}

/// Final concept values: 9 predicted (ĉ) followed by 5 patient-provided (c").
///
/// Entries are `0.0` or `1.0` for gold vectors; soft probabilities are
/// allowed when the vector carries model output.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConceptVector {
    pub predicted: [f64; N_PREDICTED],
    pub provided: [f64; N_PROVIDED],
}

impl ConceptVector {
    /// Checks the binary and dysphonia one-hot invariants of gold vectors.
    pub fn validate_gold(&self) -> Result<()> {
        let binary = |v: &f64| *v == 0.0 || *v == 1.0;
        if !self.predicted.iter().all(binary) || !self.provided.iter().all(binary) {
            return Err(Error::Validation("gold concepts must be 0 or 1".into()));
        }
        let grades: f64 = self.predicted[DYSPHONIA_GROUP].iter().sum();
        if grades != 1.0 {
            return Err(Error::Validation(format!(
                "exactly one dysphonia grade must be set, found {grades}"
            )));
        }
        Ok(())
    }

    pub fn task_input(&self) -> [f64; N_TASK_INPUT] {
        let mut out = [0.0; N_TASK_INPUT];
        out[..N_PREDICTED].copy_from_slice(&self.predicted);
        out[N_PREDICTED..].copy_from_slice(&self.provided);
        out
    }

    pub fn predicted_named(&self) -> BTreeMap<String, u8> {
        PREDICTED
            .iter()
            .zip(&self.predicted)
            .map(|(n, &v)| (n.to_string(), v as u8))
            .collect()
    }

    pub fn provided_named(&self) -> BTreeMap<String, u8> {
        PROVIDED
            .iter()
            .zip(&self.provided)
            .map(|(n, &v)| (n.to_string(), v as u8))
            .collect()
    }

    /// Builds a vector from name-keyed maps; every name must be present and
    /// every value 0 or 1.
    pub fn from_named(
        predicted: &BTreeMap<String, u8>,
        provided: &BTreeMap<String, u8>,
    ) -> Result<Self> {
        Ok(Self {
            predicted: named_bits(predicted, &PREDICTED, "concepts")?,
            provided: named_bits(provided, &PROVIDED, "patient")?,
        })
    }
}

pub(crate) fn named_bits<const N: usize>(
    map: &BTreeMap<String, u8>,
    names: &[&str; N],
    field: &str,
) -> Result<[f64; N]> {
    if let Some(extra) = map.keys().find(|k| !names.contains(&k.as_str())) {
        return Err(Error::Validation(format!("{field}.{extra}: unknown concept")));
    }
    let mut out = [0.0; N];
    for (i, name) in names.iter().enumerate() {
        match map.get(*name) {
            Some(0) => {}
            Some(1) => out[i] = 1.0,
            Some(v) => {
                return Err(Error::Validation(format!(
                    "{field}.{name}: value {v} is not 0 or 1"
                )))
            }
            None => {
                return Err(Error::Validation(format!(
                    "{field}.{name}: missing ({} of {N} given)",
                    map.len()
                )))
            }
        }
    }
    Ok(out)
}

/// Drops excluded columns, applies merges and splits into predicted and
/// patient-provided concepts.
pub fn project_final(expanded: &ExpandedVector) -> ConceptVector {
    let mut bits = expanded.0;
    for (from, into) in MERGES {
        let f = expanded_index(from).expect("merge source in schema");
        let t = expanded_index(into).expect("merge target in schema");
        bits[t] |= bits[f];
    }
    let pick = |name: &str| f64::from(bits[expanded_index(name).expect("source column")]);
    let mut cv = ConceptVector::default();
    for (slot, src) in cv.predicted.iter_mut().zip(PREDICTED_SOURCES) {
        *slot = pick(src);
    }
    for (slot, src) in cv.provided.iter_mut().zip(PROVIDED_SOURCES) {
        *slot = pick(src);
    }
    cv
}

/// Task-head input `[ĉ, c"]`. Values pass through unchanged, so soft
/// probabilities work as well as bits.
pub fn concat_for_task(predicted: &[f64], provided: &[f64]) -> Result<[f64; N_TASK_INPUT]> {
    if predicted.len() != N_PREDICTED {
        return Err(Error::shape("concat_for_task", N_PREDICTED, predicted.len()));
    }
    if provided.len() != N_PROVIDED {
        return Err(Error::shape("concat_for_task", N_PROVIDED, provided.len()));
    }
    let mut out = [0.0; N_TASK_INPUT];
    out[..N_PREDICTED].copy_from_slice(predicted);
    out[N_PREDICTED..].copy_from_slice(provided);
    Ok(out)
}

#[derive(Serialize)]
struct SchemaDoc {
    version: u32,
    candidates: Vec<CandidateDoc>,
    expanded: Vec<&'static str>,
    predictable: Vec<ConceptDoc>,
    patient_provided: Vec<ConceptDoc>,
    excluded: Vec<&'static str>,
    groups: Vec<GroupDoc>,
    merges: Vec<MergeDoc>,
    encodings: BTreeMap<&'static str, &'static str>,
}

#[derive(Serialize)]
struct CandidateDoc {
    name: &'static str,
    values: Vec<&'static str>,
    columns: Vec<&'static str>,
}

#[derive(Serialize)]
struct ConceptDoc {
    name: &'static str,
    label: &'static str,
    group: &'static str,
    source: &'static str,
}

#[derive(Serialize)]
struct GroupDoc {
    name: &'static str,
    members: Vec<&'static str>,
    exclusive: bool,
}

#[derive(Serialize)]
struct MergeDoc {
    from: &'static str,
    into: &'static str,
}

/// The schema as a stable, pretty-printed JSON document.
pub fn schema_json() -> &'static str {
    static JSON: OnceLock<String> = OnceLock::new();
    JSON.get_or_init(|| {
        let doc = SchemaDoc {
            version: 1,
            candidates: CANDIDATES
                .iter()
                .map(|c| CandidateDoc {
                    name: c.name,
                    values: c.values.iter().map(|(v, _)| *v).collect(),
                    columns: c.columns.to_vec(),
                })
                .collect(),
            expanded: expanded_names().to_vec(),
            predictable: PREDICTED
                .iter()
                .enumerate()
                .map(|(i, &name)| ConceptDoc {
                    name,
                    label: PREDICTED_LABELS[i],
                    group: if DYSPHONIA_GROUP.contains(&i) {
                        "dysphonia"
                    } else {
                        "features"
                    },
                    source: PREDICTED_SOURCES[i],
                })
                .collect(),
            patient_provided: PROVIDED
                .iter()
                .enumerate()
                .map(|(i, &name)| ConceptDoc {
                    name,
                    label: PROVIDED_LABELS[i],
                    group: "patient",
                    source: PROVIDED_SOURCES[i],
                })
                .collect(),
            excluded: EXCLUDED.to_vec(),
            groups: vec![GroupDoc {
                name: "dysphonia",
                members: PREDICTED[DYSPHONIA_GROUP].to_vec(),
                exclusive: true,
            }],
            merges: MERGES
                .iter()
                .map(|&(from, into)| MergeDoc { from, into })
                .collect(),
            encodings: BTreeMap::from([("gender", "male = 1, female = 0")]),
        };
        serde_json::to_string_pretty(&doc).expect("schema serializes")
    })
}

/// SHA-256 of [`schema_json`], hex encoded. Checkpoints carry it.
pub fn schema_hash() -> &'static str {
    static HASH: OnceLock<String> = OnceLock::new();
    HASH.get_or_init(|| hex::encode(Sha256::digest(schema_json().as_bytes())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn gold(dysphonia: &str) -> RawAnnotation {
        let mut raw = RawAnnotation::negative();
        raw.set("dysphonia", dysphonia);
        raw
    }

    #[test]
    fn schema_sizes() {
        assert_eq!(CANDIDATES.len(), 14);
        assert_eq!(expanded_names().len(), 20);
        let p: HashSet<_> = PREDICTED.iter().collect();
        let q: HashSet<_> = PROVIDED.iter().collect();
        let x: HashSet<_> = EXCLUDED.iter().collect();
        assert!(p.is_disjoint(&q) && p.is_disjoint(&x) && q.is_disjoint(&x));
        for name in EXCLUDED {
            assert!(expanded_index(name).is_some(), "{name}");
        }
    }

    #[test]
    fn moderate_expands_to_single_grade_bit() {
        let e = one_hot_expand(&gold("moderate")).unwrap();
        assert_eq!(e.get("dysphonia_absent"), Some(0));
        assert_eq!(e.get("dysphonia_light"), Some(0));
        assert_eq!(e.get("dysphonia_moderate"), Some(1));
        assert_eq!(e.get("dysphonia_severe"), Some(0));
    }

    #[test]
    fn light_moderate_merges_into_moderate() {
        let e = one_hot_expand(&gold("light-moderate")).unwrap();
        assert_eq!(e.get("dysphonia_light_moderate"), Some(1));
        let cv = project_final(&e);
        assert_eq!(cv.predicted[..4], [0.0, 0.0, 1.0, 0.0]);
        // spelling variants normalize to the same value
        assert_eq!(one_hot_expand(&gold("Light moderate")).unwrap(), e);
    }

    #[test]
    fn negative_annotation_is_absent_only() {
        let e = one_hot_expand(&RawAnnotation::negative()).unwrap();
        let absent = expanded_index("dysphonia_absent").unwrap();
        for (i, &b) in e.0.iter().enumerate() {
            assert_eq!(b, u8::from(i == absent), "column {}", expanded_names()[i]);
        }
    }

    #[test]
    fn unknown_value_names_the_concept() {
        let mut raw = gold("absent");
        raw.set("roughness", "sometimes");
        match one_hot_expand(&raw) {
            Err(Error::Annotation { concept, .. }) => assert_eq!(concept, "roughness"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_binary_defaults_to_zero_but_dysphonia_is_required() {
        let mut raw = RawAnnotation::new();
        raw.set("dysphonia", "severe");
        let cv = project_final(&one_hot_expand(&raw).unwrap());
        assert_eq!(cv.predicted, [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(cv.provided, [0.0; 5]);
        assert!(one_hot_expand(&RawAnnotation::new()).is_err());
    }

    #[test]
    fn excluded_bits_project_away() {
        let mut bits = [0u8; N_EXPANDED];
        for name in EXCLUDED {
            bits[expanded_index(name).unwrap()] = 1;
        }
        let cv = project_final(&ExpandedVector(bits));
        assert_eq!(cv, ConceptVector::default());
        assert_eq!(cv.task_input().len(), 14);
    }

    #[test]
    fn concat_is_positional() {
        let mut p = [0.0; 9];
        p[0] = 1.0;
        let q = [0.0, 0.0, 1.0, 0.0, 0.0];
        let c = concat_for_task(&p, &q).unwrap();
        let ones: Vec<usize> = (0..14).filter(|&i| c[i] == 1.0).collect();
        assert_eq!(ones, vec![0, 11]);
        assert_eq!(concat_for_task(&[0.0; 9], &[0.0; 5]).unwrap(), [0.0; 14]);
        let soft = [0.3; 9];
        assert_eq!(concat_for_task(&soft, &q).unwrap()[..9], soft);
        assert!(concat_for_task(&[0.0; 8], &q).is_err());
    }

    #[test]
    fn decode_recovers_raw_values() {
        let mut raw = gold("light");
        raw.set("mucous", "hyperemic").set("gender", "male").set("strain", "yes");
        let back = decode_expanded(&one_hot_expand(&raw).unwrap()).unwrap();
        assert_eq!(back, raw);
    }

    #[test]
    fn gold_validation() {
        let cv = project_final(&one_hot_expand(&gold("absent")).unwrap());
        cv.validate_gold().unwrap();
        let mut bad = cv;
        bad.predicted[1] = 1.0;
        assert!(bad.validate_gold().is_err());
    }

    #[test]
    fn named_round_trip_and_errors() {
        let cv = project_final(&one_hot_expand(&gold("severe")).unwrap());
        let back = ConceptVector::from_named(&cv.predicted_named(), &cv.provided_named()).unwrap();
        assert_eq!(back, cv);

        let mut p = cv.provided_named();
        p.insert("smoke".into(), 2);
        let err = ConceptVector::from_named(&cv.predicted_named(), &p).unwrap_err();
        assert!(err.to_string().contains("patient.smoke"), "{err}");
    }

    #[test]
    fn schema_json_is_stable() {
        let doc: serde_json::Value = serde_json::from_str(schema_json()).unwrap();
        assert_eq!(doc["predictable"].as_array().unwrap().len(), 9);
        assert_eq!(doc["patient_provided"].as_array().unwrap().len(), 5);
        assert_eq!(schema_hash().len(), 64);
        assert_eq!(schema_json(), schema_json());
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn raw_strategy() -> impl Strategy<Value = RawAnnotation> {
        let per: Vec<BoxedStrategy<&'static str>> = CANDIDATES
            .iter()
            .map(|c| {
                let vals: Vec<&'static str> = c.values.iter().map(|(v, _)| *v).collect();
                proptest::sample::select(vals).boxed()
            })
            .collect();
        per.prop_map(|vals| {
            let mut raw = RawAnnotation::new();
            for (c, v) in CANDIDATES.iter().zip(vals) {
                raw.set(c.name, v);
            }
            raw
        })
    }

    proptest! {
        #[test]
        fn expand_project_is_total_and_stable(raw in raw_strategy()) {
            let e = one_hot_expand(&raw).unwrap();
            let again = one_hot_expand(&raw.validated().unwrap()).unwrap();
            prop_assert_eq!(e, again);
            let cv = project_final(&e);
            prop_assert!(cv.validate_gold().is_ok());
            prop_assert_eq!(decode_expanded(&e).unwrap(), raw);
        }
    }
}
