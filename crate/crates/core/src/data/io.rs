//! JSON Lines dataset files.
//!
//! An optional first line carries a header:
//!
//! ```text
//! {"vdx_dataset":1,"schema_sha256":"…","provenance":"…"}
//! ```
//!
//! Every other line is one example, keyed by concept name:
//!
//! ```text
//! {"id":"p001","embedding":[…],"concepts":{…9 names…},"patient":{…5 names…},"label":1}
//! ```
//!
//! `"frames": [[…], …]` may replace `"embedding"`; frames are max-pooled on
//! load.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{max_pool, Dataset, FrameFeatures, LabeledExample};
use crate::concepts::{schema_hash, ConceptVector};
use crate::nn::Matrix;
use crate::{Error, RecordProblem, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    vdx_dataset: u32,
    schema_sha256: String,
    #[serde(default)]
    provenance: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frames: Option<Vec<Vec<f64>>>,
    concepts: BTreeMap<String, u8>,
    patient: BTreeMap<String, u8>,
    label: u8,
}

impl Record {
    fn into_example(self) -> Result<LabeledExample> {
        let embedding = match (self.embedding, self.frames) {
            (Some(e), None) => e,
            (None, Some(frames)) => max_pool(&FrameFeatures {
                id: self.id.clone(),
                frames: Matrix::from_rows(&frames)?,
                source: "file".into(),
            })?,
            (Some(_), Some(_)) => {
                return Err(Error::Validation("both `embedding` and `frames` given".into()))
            }
            (None, None) => {
                return Err(Error::Validation("neither `embedding` nor `frames` given".into()))
            }
        };
        if self.label > 1 {
            return Err(Error::Validation(format!("label {} is not 0 or 1", self.label)));
        }
        let concepts = ConceptVector::from_named(&self.concepts, &self.patient)?;
        concepts.validate_gold()?;
        Ok(LabeledExample {
            id: self.id,
            embedding,
            concepts,
            label: self.label,
        })
    }

    fn from_example(ex: &LabeledExample) -> Self {
        Record {
            id: ex.id.clone(),
            embedding: Some(ex.embedding.clone()),
            frames: None,
            concepts: ex.concepts.predicted_named(),
            patient: ex.concepts.provided_named(),
            label: ex.label,
        }
    }
}

/// Reads a dataset, collecting every bad line before failing.
pub fn read_dataset<R: BufRead>(reader: R, origin: &Path) -> Result<Dataset> {
    let mut problems = Vec::new();
    let mut examples: Vec<(usize, LabeledExample)> = Vec::new();
    let mut provenance = origin.display().to_string();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 && line.contains("\"vdx_dataset\"") {
            match serde_json::from_str::<Header>(&line) {
                Ok(h) if h.schema_sha256 != schema_hash() => {
                    return Err(Error::SchemaMismatch {
                        expected: schema_hash().to_string(),
                        found: h.schema_sha256,
                    })
                }
                Ok(h) => {
                    if !h.provenance.is_empty() {
                        provenance = h.provenance;
                    }
                }
                Err(e) => problems.push(RecordProblem {
                    line: line_no,
                    reason: format!("bad header: {e}"),
                }),
            }
            continue;
        }
        let parsed = serde_json::from_str::<Record>(&line)
            .map_err(Error::from)
            .and_then(Record::into_example);
        match parsed {
            Ok(ex) => examples.push((line_no, ex)),
            Err(e) => problems.push(RecordProblem {
                line: line_no,
                reason: e.to_string(),
            }),
        }
    }

    let dim = examples.first().map_or(0, |(_, e)| e.embedding.len());
    let mut seen = BTreeMap::new();
    for (line, ex) in &examples {
        if ex.embedding.len() != dim {
            problems.push(RecordProblem {
                line: *line,
                reason: format!("embedding dim {} differs from {dim}", ex.embedding.len()),
            });
        }
        if ex.embedding.iter().any(|v| !v.is_finite()) {
            problems.push(RecordProblem {
                line: *line,
                reason: "non-finite embedding value".into(),
            });
        }
        if let Some(first) = seen.insert(ex.id.clone(), *line) {
            problems.push(RecordProblem {
                line: *line,
                reason: format!("duplicate id `{}` (first on line {first})", ex.id),
            });
        }
    }
    if !problems.is_empty() {
        problems.sort_by_key(|p| p.line);
        return Err(Error::Dataset {
            path: origin.to_path_buf(),
            problems,
        });
    }
    Dataset::new(examples.into_iter().map(|(_, e)| e).collect(), provenance)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_dataset(BufReader::new(file), path)
}

pub fn write_dataset<W: Write>(mut writer: W, dataset: &Dataset) -> Result<()> {
    let header = Header {
        vdx_dataset: 1,
        schema_sha256: schema_hash().to_string(),
        provenance: dataset.provenance.clone(),
    };
    serde_json::to_writer(&mut writer, &header)?;
    writeln!(writer)?;
    for ex in &dataset.examples {
        serde_json::to_writer(&mut writer, &Record::from_example(ex))?;
        writeln!(writer)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn save_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let file = File::create(path)?;
    write_dataset(BufWriter::new(file), dataset)
}

/// Loads a frames file (pooling on the way in) and writes pooled embeddings.
pub fn pool_file(input: impl AsRef<Path>, output: impl AsRef<Path>) -> Result<Dataset> {
    let ds = load_dataset(input)?;
    save_dataset(output, &ds)?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthConfig};
    use std::io::Cursor;

    fn small() -> Dataset {
        let mut cfg = SynthConfig::default();
        cfg.n_examples = 12;
        cfg.embedding_dim = 10;
        synth_generate(&cfg).unwrap()
    }

    fn line_for(ex: &LabeledExample) -> serde_json::Value {
        serde_json::to_value(Record::from_example(ex)).unwrap()
    }

    #[test]
    fn round_trip_is_lossless() {
        let ds = small();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds).unwrap();
        let back = read_dataset(Cursor::new(buf), Path::new("mem")).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn short_concept_record_rejected_with_line_number() {
        let ds = small();
        let mut v = line_for(&ds.examples[1]);
        v["concepts"].as_object_mut().unwrap().remove("strain");
        let text = format!("{}\n{}\n", line_for(&ds.examples[0]), v);
        match read_dataset(Cursor::new(text), Path::new("bad.jsonl")) {
            Err(Error::Dataset { problems, .. }) => {
                assert_eq!(problems.len(), 1);
                assert_eq!(problems[0].line, 2);
                assert!(problems[0].reason.contains("strain"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn problems_are_aggregated() {
        let ds = small();
        let a = line_for(&ds.examples[0]);
        let mut short = line_for(&ds.examples[1]);
        short["embedding"] = serde_json::json!([1.0, 2.0]);
        let text = format!("{a}\nnot json\n{a}\n{short}\n");
        match read_dataset(Cursor::new(text), Path::new("bad.jsonl")) {
            Err(Error::Dataset { problems, .. }) => {
                let lines: Vec<usize> = problems.iter().map(|p| p.line).collect();
                assert_eq!(lines, vec![2, 3, 4]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn frames_are_pooled_on_load() {
        let ds = small();
        let ex = &ds.examples[0];
        // two frames whose elementwise max is the embedding
        let lower: Vec<f64> = ex.embedding.iter().map(|v| v - 1.0).collect();
        let mut v = line_for(ex);
        let obj = v.as_object_mut().unwrap();
        obj.remove("embedding");
        obj.insert("frames".into(), serde_json::json!([lower, ex.embedding]));
        let framed = read_dataset(Cursor::new(v.to_string()), Path::new("f")).unwrap();
        let pooled = read_dataset(Cursor::new(line_for(ex).to_string()), Path::new("p")).unwrap();
        assert_eq!(framed.examples, pooled.examples);
    }

    #[test]
    fn foreign_schema_header_refused() {
        let text = r#"{"vdx_dataset":1,"schema_sha256":"00","provenance":""}"#;
        assert!(matches!(
            read_dataset(Cursor::new(text), Path::new("h")),
            Err(Error::SchemaMismatch { .. })
        ));
    }
}
