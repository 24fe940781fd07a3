use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::Error;

/// Value of the `v` field this build speaks.
pub const WIRE_VERSION: u32 = 1;

/// One example to score: either a raw embedding with all five patient bits,
/// or the id of a demo example. With an id, `patient` entries replace the
/// stored bits.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patient: Option<BTreeMap<String, u8>>,
}

/// Either one instance inline or a list under `instances`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    pub v: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patient: Option<BTreeMap<String, u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instances: Option<Vec<Instance>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptValue {
    pub name: String,
    pub prob: f64,
    pub bit: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBody {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example_id: Option<String>,
    pub patient: BTreeMap<String, u8>,
    /// The 9 predicted concepts in schema order; null for heads without a
    /// concept layer.
    pub concepts: Option<Vec<ConceptValue>>,
    pub task_prob: f64,
    pub task_label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub v: u32,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<PredictionBody>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<Vec<PredictionBody>>,
}

/// The instance to intervene on plus the concepts to force, keyed by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterveneRequest {
    pub v: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patient: Option<BTreeMap<String, u8>>,
    #[serde(default)]
    pub overrides: BTreeMap<String, u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBody {
    pub concepts: Vec<ConceptValue>,
    pub task_prob: f64,
    pub task_label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterveneResponse {
    pub v: u32,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example_id: Option<String>,
    pub overrides: BTreeMap<String, u8>,
    pub before: StateBody,
    pub after: StateBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleSummary {
    pub id: String,
    pub label: u8,
    pub concepts: BTreeMap<String, u8>,
    pub patient: BTreeMap<String, u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamplesResponse {
    pub v: u32,
    pub total: usize,
    pub examples: Vec<ExampleSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model: String,
}

/// Error body: `{"error": message, "field": path}`; `field` is omitted when
/// no single field is at fault.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ApiError {
    pub fn bad_request(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            status: 400,
            error: message.into(),
            field: Some(field.into()),
        }
    }

    pub fn not_found(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            status: 404,
            error: message.into(),
            field: Some(field.into()),
        }
    }

    /// A body that failed to deserialize, located by its JSON path.
    pub fn from_json(err: serde_path_to_error::Error<serde_json::Error>) -> Self {
        let path = err.path().to_string();
        Self {
            status: 400,
            error: err.into_inner().to_string(),
            field: (path != ".").then_some(path),
        }
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        let status = match err {
            Error::Validation(_) | Error::UnknownConcept(_) | Error::Shape { .. } | Error::Contract(_) => 400,
            _ => 500,
        };
        // Validation messages lead with the offending path, e.g. `patient.smoke: ...`.
        let (field, error) = match &err {
            Error::Validation(msg) => match msg.split_once(": ") {
                Some((f, rest)) if !f.contains(' ') => (Some(f.to_string()), rest.to_string()),
                _ => (None, msg.clone()),
            },
            other => (None, other.to_string()),
        };
        Self { status, error, field }
    }
}
