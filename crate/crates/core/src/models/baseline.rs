use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cbm::{check_head, column};
use super::{check_batch, Arch, ArchConfig, Batch, HeadModel, LossWeights, ParamGroup, Prediction};
use crate::concepts::{ConceptVector, N_TASK_INPUT};
use crate::nn::{bce_loss, Activation, Gradients, Matrix, Mlp, Parameters};
use crate::{Error, Result};

/// End-to-end classifier on the embedding, without concepts. Trained on the
/// task BCE alone; loss weights are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub head: Mlp,
}

impl BaselineModel {
    pub fn new(embedding_dim: usize, config: &ArchConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = Mlp::with_hidden(
            embedding_dim,
            config.baseline.hidden(),
            1,
            Activation::Sigmoid,
            &mut rng,
        )?;
        Ok(Self { head })
    }

    pub fn validate(&self) -> Result<()> {
        check_head("baseline head", &self.head, None, 1, Activation::Sigmoid)
    }
}

impl Parameters for BaselineModel {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        self.head.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.head.tensors_mut()
    }
}

fn task_loss_and_grad(head: &Mlp, x: &Matrix, labels: &[f64]) -> Result<(f64, Gradients)> {
    let (y, cache) = head.forward(x)?;
    let (loss, g) = bce_loss(y.as_slice(), labels)?;
    let (tape, _) = head.backward(&cache, &column(&g))?;
    Ok((loss, tape.into_gradients()))
}

impl HeadModel for BaselineModel {
    fn arch(&self) -> Arch {
        Arch::Baseline
    }

    fn embedding_dim(&self) -> usize {
        self.head.in_dim()
    }

    fn loss(&self, batch: &Batch, _weights: LossWeights) -> Result<f64> {
        check_batch(batch, Some(self.embedding_dim()))?;
        let y = self.head.predict(&batch.embeddings)?;
        Ok(bce_loss(y.as_slice(), &batch.labels)?.0)
    }

    fn loss_and_grad(&self, batch: &Batch, _weights: LossWeights) -> Result<(f64, Gradients)> {
        check_batch(batch, Some(self.embedding_dim()))?;
        task_loss_and_grad(&self.head, &batch.embeddings, &batch.labels)
    }

    fn predict(&self, batch: &Batch) -> Result<Prediction> {
        check_batch(batch, Some(self.embedding_dim()))?;
        Ok(Prediction {
            concept_probs: None,
            concept_bits: None,
            task_probs: self.head.predict(&batch.embeddings)?.into_vec(),
        })
    }

    fn param_groups(&self) -> Vec<ParamGroup> {
        vec![ParamGroup::Task; self.head.layers().len() * 2]
    }
}

/// Task head over gold concepts and patient bits. An upper reference for the
/// concept models: it sees exactly what a perfect concept head would emit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealCbm {
    pub task_head: Mlp,
    /// Width of the embeddings in the datasets it is paired with. Unused by
    /// the computation.
    pub embedding_dim: usize,
}

impl IdealCbm {
    pub fn new(embedding_dim: usize, config: &ArchConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let task_head = Mlp::with_hidden(
            N_TASK_INPUT,
            &config.task_hidden,
            1,
            Activation::Sigmoid,
            &mut rng,
        )?;
        Ok(Self {
            task_head,
            embedding_dim,
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_head(
            "ideal task head",
            &self.task_head,
            Some(N_TASK_INPUT),
            1,
            Activation::Sigmoid,
        )
    }

    fn input(batch: &Batch) -> Result<Matrix> {
        batch.concepts.hconcat(&batch.provided)
    }
}

/// Ideal-model probabilities for explicit gold concept vectors.
pub fn ideal_predict(model: &IdealCbm, gold: &[ConceptVector]) -> Result<Vec<f64>> {
    if gold.is_empty() {
        return Err(Error::Validation("no concept vectors".into()));
    }
    let rows: Vec<[f64; N_TASK_INPUT]> = gold
        .iter()
        .map(|c| {
            c.validate_gold()?;
            Ok(c.task_input())
        })
        .collect::<Result<_>>()?;
    Ok(model.task_head.predict(&Matrix::from_rows(&rows)?)?.into_vec())
}

impl Parameters for IdealCbm {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        self.task_head.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.task_head.tensors_mut()
    }
}

impl HeadModel for IdealCbm {
    fn arch(&self) -> Arch {
        Arch::Ideal
    }

    fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    fn loss(&self, batch: &Batch, _weights: LossWeights) -> Result<f64> {
        check_batch(batch, None)?;
        let y = self.task_head.predict(&Self::input(batch)?)?;
        Ok(bce_loss(y.as_slice(), &batch.labels)?.0)
    }

    fn loss_and_grad(&self, batch: &Batch, _weights: LossWeights) -> Result<(f64, Gradients)> {
        check_batch(batch, None)?;
        task_loss_and_grad(&self.task_head, &Self::input(batch)?, &batch.labels)
    }

    fn predict(&self, batch: &Batch) -> Result<Prediction> {
        check_batch(batch, None)?;
        Ok(Prediction {
            concept_probs: None,
            concept_bits: None,
            task_probs: self.task_head.predict(&Self::input(batch)?)?.into_vec(),
        })
    }

    fn param_groups(&self) -> Vec<ParamGroup> {
        vec![ParamGroup::Task; self.task_head.layers().len() * 2]
    }
}
