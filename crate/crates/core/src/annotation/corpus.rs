use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::client::ChatClient;
use super::parse::parse_response;
use super::prompt::{build_prompt, AnamnesisDoc, ChatMessage, FewShotExample, Role};
use crate::concepts::{RawAnnotation, CANDIDATES};
use crate::{Error, RecordProblem, Result};

/// One annotated document, as stored in JSON Lines files. Gold files only
/// need `id` and `values`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: String,
    pub values: RawAnnotation,
    #[serde(default)]
    pub raw_response: String,
    #[serde(default)]
    pub prompt_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnnotateOptions {
    /// Concurrent requests in flight.
    pub workers: usize,
    /// Send one repair request after a parse failure.
    pub repair: bool,
}

impl Default for AnnotateOptions {
    fn default() -> Self {
        Self {
            workers: 4,
            repair: true,
        }
    }
}

fn annotate_one(
    client: &dyn ChatClient,
    doc: &AnamnesisDoc,
    examples: &[FewShotExample],
    repair: bool,
) -> AnnotationRecord {
    let mut record = AnnotationRecord {
        id: doc.id.clone(),
        values: RawAnnotation::new(),
        raw_response: String::new(),
        prompt_sha256: String::new(),
        error: None,
    };
    let prompt = match build_prompt(doc, examples) {
        Ok(p) => p,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    record.prompt_sha256 = prompt.sha256();
    let mut messages = prompt.messages;
    let attempts = if repair { 2 } else { 1 };
    for attempt in 0..attempts {
        let text = match client.complete(&messages) {
            Ok(t) => t,
            Err(e) => {
                record.error = Some(e.to_string());
                return record;
            }
        };
        record.raw_response = text.clone();
        match parse_response(&text) {
            Ok(values) => {
                record.values = values;
                record.error = None;
                return record;
            }
            Err(failure) => {
                log::debug!("{}: attempt {} unparseable: {failure}", doc.id, attempt + 1);
                record.error = Some(failure.to_string());
                messages.push(ChatMessage::new(Role::Assistant, text));
                messages.push(ChatMessage::new(Role::User, failure.repair_instruction()));
            }
        }
    }
    record
}

/// Annotates every document. Failures stay inside their record; the result
/// is sorted by id.
pub fn annotate_corpus(
    client: &dyn ChatClient,
    docs: &[AnamnesisDoc],
    examples: &[FewShotExample],
    options: AnnotateOptions,
) -> Result<Vec<AnnotationRecord>> {
    if examples.is_empty() {
        return Err(Error::Config("at least one few-shot example is required".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut out: Vec<AnnotationRecord> = pool.install(|| {
        use rayon::prelude::*;
        docs.par_iter()
            .map(|d| annotate_one(client, d, examples, options.repair))
            .collect()
    });
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

pub fn read_records<R: BufRead>(reader: R, origin: &Path) -> Result<Vec<AnnotationRecord>> {
    let mut out = Vec::new();
    let mut problems = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<AnnotationRecord>(&line) {
            Ok(r) => out.push(r),
            Err(e) => problems.push(RecordProblem {
                line: i + 1,
                reason: e.to_string(),
            }),
        }
    }
    if !problems.is_empty() {
        return Err(Error::Dataset {
            path: origin.to_path_buf(),
            problems,
        });
    }
    Ok(out)
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    let path = path.as_ref();
    read_records(BufReader::new(File::open(path)?), path)
}

pub fn save_records(path: impl AsRef<Path>, records: &[AnnotationRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads every `*.txt` file of a directory as a document named by its stem.
pub fn load_docs(dir: impl AsRef<Path>) -> Result<Vec<AnamnesisDoc>> {
    let mut docs = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Validation(format!("bad file name {}", path.display())))?
            .to_string();
        docs.push(AnamnesisDoc::new(id, std::fs::read_to_string(&path)?)?);
    }
    docs.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(docs)
}

fn sentence(concept: &str, value: &str) -> Option<String> {
    let yes = value == "yes";
    let s = match concept {
        "smoking" => if yes { "Smoker." } else { "Non-smoker." },
        "professional_voice_use" => {
            if yes {
                "Uses the voice professionally."
            } else {
                "No professional voice use."
            }
        }
        "dysphonia" => {
            return Some(match value {
                "absent" => "Voice is euphonic.".into(),
                grade => format!("Dysphonia of {grade} degree."),
            })
        }
        "mucous" => {
            return Some(match value {
                "none" => "Mucosa not described.".into(),
                m => format!("{}{} mucosa.", m[..1].to_uppercase(), &m[1..]),
            })
        }
        "gender" => return Some(format!("Patient is {value}.")),
        other if yes => return Some(format!("Presents {}.", other.replace('_', " "))),
        _ => return None,
    };
    Some(s.into())
}

/// Synthetic documents with known annotations, rendered from templates.
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<(AnamnesisDoc, RawAnnotation)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut values = RawAnnotation::new();
            let mut text = vec![format!("Case {}.", i + 1)];
            for c in &CANDIDATES {
                let options: Vec<&str> = c.values.iter().map(|(v, _)| *v).collect();
                let value = if c.is_binary() && c.name != "gender" {
                    if rng.random_bool(0.3) { "yes" } else { "no" }
                } else {
                    options.choose(&mut rng).expect("non-empty")
                };
                values.set(c.name, value);
                text.extend(sentence(c.name, value));
            }
            let doc = AnamnesisDoc::new(format!("doc{i:03}"), text.join(" ")).expect("non-empty");
            (doc, values)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{default_examples, Fault, MockLlm};

    #[test]
    fn echo_gold_round_trips() {
        let corpus = synthetic_corpus(12, 1);
        let docs: Vec<AnamnesisDoc> = corpus.iter().map(|(d, _)| d.clone()).collect();
        let mock = MockLlm::echo_gold(corpus.iter().map(|(d, v)| (d, v)));
        let out = annotate_corpus(&mock, &docs, &default_examples(), AnnotateOptions::default()).unwrap();
        assert_eq!(out.len(), 12);
        for (r, (d, v)) in out.iter().zip(&corpus) {
            assert_eq!(r.id, d.id);
            assert_eq!(&r.values, v);
            assert!(r.error.is_none());
            assert_eq!(r.prompt_sha256.len(), 64);
        }
    }

    #[test]
    fn dropped_concept_is_repaired_or_reported() {
        let corpus = synthetic_corpus(10, 2);
        let docs: Vec<AnamnesisDoc> = corpus.iter().map(|(d, _)| d.clone()).collect();
        let mock = || {
            MockLlm::echo_gold(corpus.iter().map(|(d, v)| (d, v))).with_fault(
                "doc004",
                Fault::DropOnce {
                    concept: "strain".into(),
                },
            )
        };
        let ex = default_examples();
        let no_repair = AnnotateOptions {
            repair: false,
            ..AnnotateOptions::default()
        };
        let out = annotate_corpus(&mock(), &docs, &ex, no_repair).unwrap();
        let errors: Vec<&str> = out.iter().filter(|r| r.error.is_some()).map(|r| r.id.as_str()).collect();
        assert_eq!(errors, vec!["doc004"]);
        assert!(out[4].error.as_ref().unwrap().contains("strain"));

        let m = mock();
        let out = annotate_corpus(&m, &docs, &ex, AnnotateOptions::default()).unwrap();
        assert!(out.iter().all(|r| r.error.is_none()));
        assert_eq!(out[4].values, corpus[4].1);
        assert_eq!(m.calls(), 11);
    }

    #[test]
    fn transport_failure_is_isolated() {
        let corpus = synthetic_corpus(3, 3);
        let docs: Vec<AnamnesisDoc> = corpus.iter().map(|(d, _)| d.clone()).collect();
        let mock = MockLlm::echo_gold(corpus.iter().map(|(d, v)| (d, v))).with_fault("doc001", Fault::Unreachable);
        let out = annotate_corpus(&mock, &docs, &default_examples(), AnnotateOptions::default()).unwrap();
        assert!(out[1].error.is_some());
        assert!(out[0].error.is_none() && out[2].error.is_none());
    }

    #[test]
    fn empty_corpus() {
        let out = annotate_corpus(&MockLlm::default(), &[], &default_examples(), AnnotateOptions::default()).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        let corpus = synthetic_corpus(3, 4);
        let recs: Vec<AnnotationRecord> = corpus
            .iter()
            .map(|(d, v)| AnnotationRecord {
                id: d.id.clone(),
                values: v.clone(),
                raw_response: "x".into(),
                prompt_sha256: "y".into(),
                error: None,
            })
            .collect();
        save_records(&path, &recs).unwrap();
        assert_eq!(load_records(&path).unwrap(), recs);
        let gold: AnnotationRecord =
            serde_json::from_str(r#"{"id":"g","values":{"strain":"yes"}}"#).unwrap();
        assert_eq!(gold.raw_response, "");
    }
}
