//! Prediction and concept intervention over HTTP.
//!
//! The handlers here are plain functions of a [`ServingState`] and a parsed
//! request, so they can be called and tested without a socket; [`router`]
//! mounts them on axum. Field names and status codes are documented in
//! `WIRE.md` next to this crate's manifest.

mod http;
mod wire;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use sha2::{Digest, Sha256};

pub use http::{router, serve, serve_on};
pub use wire::{
    ApiError, ConceptValue, ExampleSummary, ExamplesResponse, HealthResponse, Instance,
    InterveneRequest, InterveneResponse, PredictRequest, PredictResponse, PredictionBody,
    StateBody, WIRE_VERSION,
};

use crate::concepts::{named_bits, schema_hash, ConceptVector, N_PREDICTED, N_PROVIDED, PREDICTED, PROVIDED};
use crate::data::{load_dataset, Dataset};
use crate::models::{
    binarize, load_checkpoint, AnyModel, Batch, Checkpoint, ConceptState, HeadModel,
};
use crate::nn::Matrix;
use crate::{Error, Result};

/// Everything a request may read. Built once at startup and never mutated.
#[derive(Debug)]
pub struct ServingState {
    model: AnyModel,
    tag: String,
    demo: Option<Dataset>,
    index: HashMap<String, usize>,
}

impl ServingState {
    /// Checks the checkpoint's schema hash and that the demo dataset, if any,
    /// matches the model's input width.
    pub fn new(checkpoint: Checkpoint, demo: Option<Dataset>) -> Result<Self> {
        if checkpoint.schema_sha256 != schema_hash() {
            return Err(Error::SchemaMismatch {
                expected: schema_hash().into(),
                found: checkpoint.schema_sha256,
            });
        }
        checkpoint.model.validate()?;
        let model = checkpoint.model;
        let digest = hex::encode(Sha256::digest(serde_json::to_vec(&model)?));
        let tag = format!("{}-{}", model.arch(), &digest[..12]);
        let mut index = HashMap::new();
        if let Some(ds) = &demo {
            if !ds.is_empty() && ds.dim() != model.embedding_dim() {
                return Err(Error::Validation(format!(
                    "demo dataset has embedding dim {}, model expects {}",
                    ds.dim(),
                    model.embedding_dim()
                )));
            }
            index = ds.examples.iter().enumerate().map(|(i, e)| (e.id.clone(), i)).collect();
        }
        Ok(Self {
            model,
            tag,
            demo,
            index,
        })
    }

    /// Loads a checkpoint (refusing one written against another schema) and
    /// an optional demo dataset.
    pub fn load(checkpoint: impl AsRef<Path>, demo: Option<&Path>) -> Result<Self> {
        let ckpt = load_checkpoint(checkpoint)?;
        let demo = demo.map(load_dataset).transpose()?;
        Self::new(ckpt, demo)
    }

    pub fn model(&self) -> &AnyModel {
        &self.model
    }

    /// Architecture plus a short digest of the weights.
    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn demo(&self) -> Option<&Dataset> {
        self.demo.as_ref()
    }
}

/// One instance resolved against the demo dataset.
struct Resolved {
    example_id: Option<String>,
    embedding: Vec<f64>,
    provided: [f64; N_PROVIDED],
    gold: Option<ConceptVector>,
}

fn resolve(state: &ServingState, inst: &Instance, prefix: &str) -> Result<Resolved, ApiError> {
    let field = |name: &str| format!("{prefix}{name}");
    let (example_id, embedding, gold, mut patient) = match (&inst.embedding, &inst.example_id) {
        (Some(_), Some(_)) => {
            return Err(ApiError::bad_request(
                field("example_id"),
                "give either embedding or example_id, not both",
            ))
        }
        (None, None) => {
            return Err(ApiError::bad_request(field("embedding"), "embedding or example_id is required"))
        }
        (Some(e), None) => (None, e.clone(), None, BTreeMap::new()),
        (None, Some(id)) => {
            let demo = state
                .demo
                .as_ref()
                .ok_or_else(|| ApiError::bad_request(field("example_id"), "no demo dataset is loaded"))?;
            let ex = state
                .index
                .get(id)
                .map(|&i| &demo.examples[i])
                .ok_or_else(|| ApiError::not_found(field("example_id"), format!("unknown example `{id}`")))?;
            (
                Some(id.clone()),
                ex.embedding.clone(),
                Some(ex.concepts),
                ex.concepts.provided_named(),
            )
        }
    };
    let m = state.model.embedding_dim();
    if embedding.len() != m {
        return Err(ApiError::bad_request(
            field("embedding"),
            format!("expected {m} values, got {}", embedding.len()),
        ));
    }
    if let Some(given) = &inst.patient {
        patient.extend(given.iter().map(|(k, v)| (k.clone(), *v)));
    }
    let provided = named_bits(&patient, &PROVIDED, &field("patient")).map_err(ApiError::from)?;
    Ok(Resolved {
        example_id,
        embedding,
        provided,
        gold,
    })
}

fn concept_values(state: &ConceptState) -> Vec<ConceptValue> {
    PREDICTED
        .iter()
        .enumerate()
        .map(|(i, name)| ConceptValue {
            name: name.to_string(),
            prob: state.concept_probs[i],
            bit: state.concept_bits[i] as u8,
        })
        .collect()
}

fn state_body(state: &ConceptState) -> StateBody {
    StateBody {
        concepts: concept_values(state),
        task_prob: state.task_prob,
        task_label: binarize(state.task_prob) as u8,
    }
}

fn predict_resolved(state: &ServingState, r: &Resolved, prefix: &str) -> Result<PredictionBody, ApiError> {
    let patient = PROVIDED
        .iter()
        .zip(&r.provided)
        .map(|(n, &v)| (n.to_string(), v as u8))
        .collect();
    let (concepts, task_prob) = match &state.model {
        AnyModel::Cbm(_) | AnyModel::Cem(_) => {
            let s = state
                .model
                .predict_one(&r.embedding, &r.provided, &[None; N_PREDICTED])
                .map_err(ApiError::from)?;
            (Some(concept_values(&s)), s.task_prob)
        }
        AnyModel::Baseline(_) | AnyModel::Ideal(_) => {
            let gold = match (&state.model, r.gold) {
                (AnyModel::Ideal(_), None) => {
                    return Err(ApiError::bad_request(
                        format!("{prefix}example_id"),
                        "the ideal head reads gold concepts; give example_id",
                    ))
                }
                (_, g) => g.map(|g| g.predicted).unwrap_or([0.0; N_PREDICTED]),
            };
            let batch = Batch {
                embeddings: Matrix::row_vector(&r.embedding),
                concepts: Matrix::row_vector(&gold),
                provided: Matrix::row_vector(&r.provided),
                labels: vec![0.0],
            };
            let p = state.model.predict(&batch).map_err(ApiError::from)?;
            (None, p.task_probs[0])
        }
    };
    Ok(PredictionBody {
        example_id: r.example_id.clone(),
        patient,
        concepts,
        task_prob,
        task_label: binarize(task_prob) as u8,
    })
}

fn check_version(v: u32) -> Result<(), ApiError> {
    if v != WIRE_VERSION {
        return Err(ApiError::bad_request("v", format!("unsupported version {v}, expected {WIRE_VERSION}")));
    }
    Ok(())
}

pub fn handle_health(state: &ServingState) -> HealthResponse {
    HealthResponse {
        status: "ok".into(),
        model: state.tag.clone(),
    }
}

/// First `limit` demo examples, without embeddings.
pub fn handle_examples(state: &ServingState, limit: Option<usize>) -> ExamplesResponse {
    let examples = state.demo.as_ref().map(|d| d.examples.as_slice()).unwrap_or(&[]);
    ExamplesResponse {
        v: WIRE_VERSION,
        total: examples.len(),
        examples: examples
            .iter()
            .take(limit.unwrap_or(examples.len()))
            .map(|e| ExampleSummary {
                id: e.id.clone(),
                label: e.label,
                concepts: e.concepts.predicted_named(),
                patient: e.concepts.provided_named(),
            })
            .collect(),
    }
}

/// Evaluation-mode prediction. A request with `instances` is answered with
/// `predictions`, otherwise with `prediction`.
pub fn handle_predict(state: &ServingState, req: &PredictRequest) -> Result<PredictResponse, ApiError> {
    check_version(req.v)?;
    let single = Instance {
        embedding: req.embedding.clone(),
        example_id: req.example_id.clone(),
        patient: req.patient.clone(),
    };
    let mut resp = PredictResponse {
        v: WIRE_VERSION,
        model: state.tag.clone(),
        prediction: None,
        predictions: None,
    };
    match &req.instances {
        Some(list) => {
            if single.embedding.is_some() || single.example_id.is_some() || single.patient.is_some() {
                return Err(ApiError::bad_request(
                    "instances",
                    "instances cannot be combined with top-level embedding, example_id or patient",
                ));
            }
            let out = list
                .iter()
                .enumerate()
                .map(|(i, inst)| {
                    let prefix = format!("instances[{i}].");
                    predict_resolved(state, &resolve(state, inst, &prefix)?, &prefix)
                })
                .collect::<Result<Vec<_>, _>>()?;
            resp.predictions = Some(out);
        }
        None => {
            resp.prediction = Some(predict_resolved(state, &resolve(state, &single, "")?, "")?);
        }
    }
    Ok(resp)
}

/// Before and after states for one example under the requested overrides.
pub fn handle_intervene(state: &ServingState, req: &InterveneRequest) -> Result<InterveneResponse, ApiError> {
    check_version(req.v)?;
    if !matches!(state.model, AnyModel::Cbm(_) | AnyModel::Cem(_)) {
        return Err(ApiError::bad_request(
            "overrides",
            format!("the `{}` head has no concept layer to intervene on", state.model.arch()),
        ));
    }
    let inst = Instance {
        embedding: req.embedding.clone(),
        example_id: req.example_id.clone(),
        patient: req.patient.clone(),
    };
    let r = resolve(state, &inst, "")?;
    let out = state
        .model
        .intervene(&r.embedding, &r.provided, &req.overrides)
        .map_err(|e| match e {
            Error::UnknownConcept(name) => {
                ApiError::bad_request(format!("overrides.{name}"), format!("unknown concept `{name}`"))
            }
            other => ApiError::from(other),
        })?;
    Ok(InterveneResponse {
        v: WIRE_VERSION,
        model: state.tag.clone(),
        example_id: r.example_id,
        overrides: req.overrides.clone(),
        before: state_body(&out.before),
        after: state_body(&out.after),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concepts::schema_json;
    use crate::data::{synth_generate, SynthConfig};
    use crate::models::{Arch, ArchConfig};

    fn state(arch: Arch) -> ServingState {
        let cfg = SynthConfig {
            n_examples: 12,
            embedding_dim: 12,
            ..SynthConfig::default()
        };
        let ds = synth_generate(&cfg).unwrap();
        let model = AnyModel::init(arch, 12, &ArchConfig::default(), 3).unwrap();
        ServingState::new(Checkpoint::new(model, ArchConfig::default()), Some(ds)).unwrap()
    }

    fn by_id(id: &str) -> PredictRequest {
        serde_json::from_value(serde_json::json!({"v": 1, "example_id": id})).unwrap()
    }

    #[test]
    fn example_id_matches_library_call() {
        let s = state(Arch::Cbm);
        let ex = &s.demo().unwrap().examples[2];
        let body = handle_predict(&s, &by_id(&ex.id)).unwrap().prediction.unwrap();
        let direct = s
            .model()
            .predict_one(&ex.embedding, &ex.concepts.provided, &[None; N_PREDICTED])
            .unwrap();
        assert_eq!(body.task_prob, direct.task_prob);
        let probs: Vec<f64> = body.concepts.unwrap().iter().map(|c| c.prob).collect();
        assert_eq!(probs, direct.concept_probs);
    }

    #[test]
    fn singleton_batch_equals_single() {
        for arch in Arch::ALL {
            let s = state(arch);
            let id = s.demo().unwrap().examples[0].id.clone();
            let one = handle_predict(&s, &by_id(&id)).unwrap().prediction.unwrap();
            let batch: PredictRequest =
                serde_json::from_value(serde_json::json!({"v": 1, "instances": [{"example_id": id}]})).unwrap();
            let many = handle_predict(&s, &batch).unwrap().predictions.unwrap();
            assert_eq!(many, vec![one], "{arch}");
        }
    }

    #[test]
    fn bad_patient_bit_names_field() {
        let s = state(Arch::Cem);
        let req: PredictRequest = serde_json::from_value(serde_json::json!({
            "v": 1,
            "embedding": vec![0.0; 12],
            "patient": {"smoke": 2, "gender": 0, "professional_voice_use": 0, "phonasthenia": 0, "dysodia": 0}
        }))
        .unwrap();
        let err = handle_predict(&s, &req).unwrap_err();
        assert_eq!(err.status, 400);
        assert_eq!(err.field.as_deref(), Some("patient.smoke"));
    }

    #[test]
    fn embedding_width_and_version_checked() {
        let s = state(Arch::Cbm);
        let req: PredictRequest =
            serde_json::from_value(serde_json::json!({"v": 1, "instances": [{"embedding": [1.0], "patient": {}}]})).unwrap();
        let err = handle_predict(&s, &req).unwrap_err();
        assert_eq!(err.field.as_deref(), Some("instances[0].embedding"));
        let mut req = by_id("x");
        req.v = 2;
        assert_eq!(handle_predict(&s, &req).unwrap_err().field.as_deref(), Some("v"));
        assert_eq!(handle_predict(&s, &by_id("missing")).unwrap_err().status, 404);
    }

    #[test]
    fn intervention_identities() {
        for arch in [Arch::Cbm, Arch::Cem] {
            let s = state(arch);
            let id = s.demo().unwrap().examples[1].id.clone();
            let req = |overrides: BTreeMap<String, u8>| InterveneRequest {
                v: 1,
                embedding: None,
                example_id: Some(id.clone()),
                patient: None,
                overrides,
            };
            let empty = handle_intervene(&s, &req(BTreeMap::new())).unwrap();
            assert_eq!(empty.before, empty.after);

            let own: BTreeMap<String, u8> = empty
                .before
                .concepts
                .iter()
                .take(1)
                .map(|c| (c.name.clone(), c.bit))
                .collect();
            // CEM mixes with the soft probability, so only the hard CBM
            // bottleneck is a fixed point under its own bits.
            if arch == Arch::Cbm {
                let fixed = handle_intervene(&s, &req(own)).unwrap();
                assert_eq!(fixed.after.task_prob, fixed.before.task_prob);
            }

            let all: BTreeMap<String, u8> =
                PREDICTED.iter().enumerate().map(|(i, n)| (n.to_string(), (i % 2) as u8)).collect();
            let forced = handle_intervene(&s, &req(all.clone())).unwrap();
            for c in &forced.after.concepts {
                assert_eq!(c.prob, f64::from(all[&c.name]));
            }

            let bad = handle_intervene(&s, &req(BTreeMap::from([("volume".to_string(), 1)]))).unwrap_err();
            assert_eq!(bad.field.as_deref(), Some("overrides.volume"));
        }
        let err = handle_intervene(
            &state(Arch::Baseline),
            &InterveneRequest {
                v: 1,
                embedding: Some(vec![0.0; 12]),
                example_id: None,
                patient: None,
                overrides: BTreeMap::new(),
            },
        )
        .unwrap_err();
        assert_eq!(err.status, 400);
    }

    #[test]
    fn examples_and_health() {
        let s = state(Arch::Cbm);
        let ex = handle_examples(&s, Some(5));
        assert_eq!((ex.total, ex.examples.len()), (12, 5));
        assert_eq!(ex.examples[0].concepts.len(), 9);
        let h = handle_health(&s);
        assert_eq!(h.status, "ok");
        assert!(h.model.starts_with("cbm-"));
        assert!(schema_json().starts_with('{'));
    }

    #[test]
    fn foreign_schema_refused() {
        let model = AnyModel::init(Arch::Cbm, 12, &ArchConfig::default(), 0).unwrap();
        let mut ckpt = Checkpoint::new(model, ArchConfig::default());
        ckpt.schema_sha256 = "0".repeat(64);
        let err = ServingState::new(ckpt, None).unwrap_err().to_string();
        assert!(err.contains(schema_hash()) && err.contains(&"0".repeat(64)));
    }

    #[test]
    fn demo_width_must_match() {
        let ds = synth_generate(&SynthConfig {
            n_examples: 4,
            embedding_dim: 10,
            ..SynthConfig::default()
        })
        .unwrap();
        let model = AnyModel::init(Arch::Cbm, 12, &ArchConfig::default(), 0).unwrap();
        assert!(ServingState::new(Checkpoint::new(model, ArchConfig::default()), Some(ds)).is_err());
    }
}
