//! Examples, datasets and the ways to obtain them: frame pooling, JSON Lines
//! files, a synthetic corpus and k-fold splits.

mod folds;
mod io;
mod pool;
mod synth;

use std::collections::HashSet;

pub use folds::{kfold_indices, kfold_split, Fold};
pub use io::{load_dataset, pool_file, read_dataset, save_dataset, write_dataset};
pub use pool::{max_pool, FrameFeatures};
pub use synth::{synth_generate, with_concept_noise, GradeTable, Projection, SynthConfig};

use crate::concepts::ConceptVector;
use crate::{Error, Result};

/// One utterance with its pooled embedding, gold concepts and label
/// (`0` euphonic, `1` pathological).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub id: String,
    pub embedding: Vec<f64>,
    pub concepts: ConceptVector,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<LabeledExample>,
    /// Synthetic config hash or source path.
    pub provenance: String,
}

impl Dataset {
    pub fn new(examples: Vec<LabeledExample>, provenance: impl Into<String>) -> Result<Self> {
        let ds = Self {
            examples,
            provenance: provenance.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let dim = self.dim();
        for ex in &self.examples {
            if !seen.insert(ex.id.as_str()) {
                return Err(Error::Validation(format!("duplicate id `{}`", ex.id)));
            }
            if ex.embedding.len() != dim {
                return Err(Error::Validation(format!(
                    "`{}` has embedding dim {}, expected {dim}",
                    ex.id,
                    ex.embedding.len()
                )));
            }
            if ex.embedding.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("`{}` has a non-finite embedding", ex.id)));
            }
            if ex.label > 1 {
                return Err(Error::Validation(format!("`{}` has label {}", ex.id, ex.label)));
            }
            ex.concepts
                .validate_gold()
                .map_err(|e| Error::Validation(format!("`{}`: {e}", ex.id)))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Embedding dimension (0 for an empty dataset).
    pub fn dim(&self) -> usize {
        self.examples.first().map_or(0, |e| e.embedding.len())
    }

    pub fn labels(&self) -> Vec<u8> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn find(&self, id: &str) -> Option<&LabeledExample> {
        self.examples.iter().find(|e| e.id == id)
    }
}
