//! Classification heads over pooled embeddings.
//!
//! | architecture | input to task head                         | concept loss |
//! |--------------|---------------------------------------------|--------------|
//! | [`CbmModel`] | 9 concept probabilities (train) or bits (eval) + 5 patient bits | yes |
//! | [`CemModel`] | 14 concept embeddings of width `h`          | yes |
//! | [`BaselineModel`] | the embedding itself                  | no  |
//! | [`IdealCbm`] | 9 gold concepts + 5 patient bits            | no  |
//!
//! All heads implement [`HeadModel`]; [`AnyModel`] wraps them for
//! checkpoints and serving.

mod baseline;
mod cbm;
mod cem;
mod checkpoint;
mod loss;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use baseline::{ideal_predict, BaselineModel, IdealCbm};
pub use cbm::{BottleneckMode, CbmModel, CbmOutput};
pub use cem::{CemModel, CemOutput};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use loss::{joint_loss, JointLoss};

use crate::concepts::{predicted_index, N_PREDICTED, N_PROVIDED};
use crate::data::{Dataset, LabeledExample};
use crate::nn::{Differentiable, Gradients, Matrix, Parameters};
use crate::{Error, Result};

/// Decision threshold on concept and task probabilities; `p >= 0.5` is
/// positive.
pub const THRESHOLD: f64 = 0.5;

#[inline]
pub fn binarize(p: f64) -> f64 {
    if p >= THRESHOLD {
        1.0
    } else {
        0.0
    }
}

/// Weights of the two terms of the joint loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Multiplies the mean concept BCE (λ).
    pub concept: f64,
    pub task: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            concept: 0.9,
            task: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.concept >= 0.0 && self.task >= 0.0) {
            return Err(Error::Config(format!("loss weights must be >= 0: {self:?}")));
        }
        Ok(())
    }
}

/// A mini-batch in matrix form.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub embeddings: Matrix,
    /// Gold predicted concepts, `(batch, 9)`.
    pub concepts: Matrix,
    /// Patient-provided concepts, `(batch, 5)`.
    pub provided: Matrix,
    pub labels: Vec<f64>,
}

impl Batch {
    pub fn from_examples<'a, I>(examples: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a LabeledExample>,
    {
        let mut emb = Vec::new();
        let mut con = Vec::new();
        let mut pro = Vec::new();
        let mut labels = Vec::new();
        for ex in examples {
            emb.push(ex.embedding.as_slice());
            con.push(ex.concepts.predicted);
            pro.push(ex.concepts.provided);
            labels.push(f64::from(ex.label));
        }
        if labels.is_empty() {
            return Err(Error::Validation("empty batch".into()));
        }
        Ok(Self {
            embeddings: Matrix::from_rows(&emb)?,
            concepts: Matrix::from_rows(&con)?,
            provided: Matrix::from_rows(&pro)?,
            labels,
        })
    }

    pub fn from_dataset(dataset: &Dataset, indices: &[usize]) -> Result<Self> {
        Self::from_examples(indices.iter().map(|&i| &dataset.examples[i]))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Cbm,
    Cem,
    Baseline,
    Ideal,
}

impl Arch {
    pub const ALL: [Arch; 4] = [Arch::Cbm, Arch::Cem, Arch::Baseline, Arch::Ideal];

    pub fn has_concepts(self) -> bool {
        matches!(self, Arch::Cbm | Arch::Cem)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Cbm => "cbm",
            Arch::Cem => "cem",
            Arch::Baseline => "baseline",
            Arch::Ideal => "ideal",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cbm" => Ok(Arch::Cbm),
            "cem" => Ok(Arch::Cem),
            "baseline" => Ok(Arch::Baseline),
            "ideal" => Ok(Arch::Ideal),
            other => Err(Error::Config(format!(
                "unknown architecture `{other}` (expected cbm, cem, baseline or ideal)"
            ))),
        }
    }
}

/// End-to-end head depth variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineDepth {
    /// `[128]`
    One,
    /// `[256, 128]`
    Two,
    /// `[512, 256, 128]`
    Three,
}

impl BaselineDepth {
    pub fn hidden(self) -> &'static [usize] {
        match self {
            BaselineDepth::One => &[128],
            BaselineDepth::Two => &[256, 128],
            BaselineDepth::Three => &[512, 256, 128],
        }
    }
}

/// Hidden widths of every head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub concept_hidden: Vec<usize>,
    pub task_hidden: Vec<usize>,
    pub baseline: BaselineDepth,
    pub cem_embedding: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            concept_hidden: vec![256, 128],
            task_hidden: vec![64],
            baseline: BaselineDepth::Two,
            cem_embedding: 16,
        }
    }
}

/// Which optimizer group a tensor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    /// Concept head, or CEM generators and scorer.
    Concept,
    Task,
}

/// Predictions for a batch in evaluation mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `(batch, 9)` concept probabilities, absent for concept-free heads.
    pub concept_probs: Option<Matrix>,
    pub concept_bits: Option<Matrix>,
    pub task_probs: Vec<f64>,
}

/// Common interface of every head.
pub trait HeadModel: Parameters + Clone + Send + Sync {
    fn arch(&self) -> Arch;

    fn embedding_dim(&self) -> usize;

    /// Joint loss at training-time settings.
    fn loss(&self, batch: &Batch, weights: LossWeights) -> Result<f64>;

    fn loss_and_grad(&self, batch: &Batch, weights: LossWeights) -> Result<(f64, Gradients)>;

    /// Evaluation-mode forward pass.
    fn predict(&self, batch: &Batch) -> Result<Prediction>;

    /// Group of each tensor, aligned with [`Parameters::tensors`].
    fn param_groups(&self) -> Vec<ParamGroup>;
}

/// Loss-and-gradient view of a head for [`crate::nn::gradcheck`].
#[derive(Debug, Clone)]
pub struct Objective<M>(pub M);

impl<M: HeadModel> Parameters for Objective<M> {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        self.0.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.0.tensors_mut()
    }
}

impl<M: HeadModel> Differentiable for Objective<M> {
    type Input = (Batch, LossWeights);

    fn loss(&self, (batch, weights): &Self::Input) -> Result<f64> {
        self.0.loss(batch, *weights)
    }

    fn loss_and_grad(&self, (batch, weights): &Self::Input) -> Result<(f64, Gradients)> {
        self.0.loss_and_grad(batch, *weights)
    }
}

/// Per-concept replacement values; `None` leaves the prediction alone.
pub type ConceptOverrides = [Option<f64>; N_PREDICTED];

/// Validates a name-keyed override map.
pub fn parse_overrides(map: &BTreeMap<String, u8>) -> Result<ConceptOverrides> {
    let mut out = [None; N_PREDICTED];
    for (name, &v) in map {
        let i = predicted_index(name).ok_or_else(|| Error::UnknownConcept(name.clone()))?;
        if v > 1 {
            return Err(Error::Validation(format!(
                "overrides.{name}: value {v} is not 0 or 1"
            )));
        }
        out[i] = Some(f64::from(v));
    }
    Ok(out)
}

/// Concept and task state of one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptState {
    pub concept_probs: [f64; N_PREDICTED],
    pub concept_bits: [f64; N_PREDICTED],
    pub task_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intervention {
    pub before: ConceptState,
    pub after: ConceptState,
}

/// Any of the four heads, tagged by architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum AnyModel {
    Cbm(CbmModel),
    Cem(CemModel),
    Baseline(BaselineModel),
    Ideal(IdealCbm),
}

macro_rules! dispatch {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            AnyModel::Cbm($m) => $body,
            AnyModel::Cem($m) => $body,
            AnyModel::Baseline($m) => $body,
            AnyModel::Ideal($m) => $body,
        }
    };
}

impl AnyModel {
    /// Freshly initialized head.
    pub fn init(arch: Arch, embedding_dim: usize, config: &ArchConfig, seed: u64) -> Result<Self> {
        Ok(match arch {
            Arch::Cbm => AnyModel::Cbm(CbmModel::new(embedding_dim, config, seed)?),
            Arch::Cem => AnyModel::Cem(CemModel::new(embedding_dim, config, seed)?),
            Arch::Baseline => AnyModel::Baseline(BaselineModel::new(embedding_dim, config, seed)?),
            Arch::Ideal => AnyModel::Ideal(IdealCbm::new(embedding_dim, config, seed)?),
        })
    }

    /// Evaluation-mode prediction for one example, with optional overrides
    /// on the predicted concepts.
    pub fn predict_one(
        &self,
        embedding: &[f64],
        provided: &[f64; N_PROVIDED],
        overrides: &ConceptOverrides,
    ) -> Result<ConceptState> {
        let emb = Matrix::row_vector(embedding);
        let prov = Matrix::row_vector(provided);
        match self {
            AnyModel::Cbm(m) => {
                let out = m.forward(&emb, &prov, BottleneckMode::HardEval, overrides)?;
                Ok(ConceptState {
                    concept_probs: row9(&out.concept_probs),
                    concept_bits: row9(&out.concept_bits),
                    task_prob: out.task_probs[0],
                })
            }
            AnyModel::Cem(m) => {
                let out = m.forward(&emb, &prov, overrides)?;
                let probs = row9(&out.concept_probs);
                Ok(ConceptState {
                    concept_probs: probs,
                    concept_bits: probs.map(binarize),
                    task_prob: out.task_probs[0],
                })
            }
            AnyModel::Baseline(_) | AnyModel::Ideal(_) => Err(Error::Contract(format!(
                "`{}` head has no concept layer",
                self.arch()
            ))),
        }
    }

    /// Counterfactual prediction with some predicted concepts replaced.
    pub fn intervene(
        &self,
        embedding: &[f64],
        provided: &[f64; N_PROVIDED],
        overrides: &BTreeMap<String, u8>,
    ) -> Result<Intervention> {
        let parsed = parse_overrides(overrides)?;
        let before = self.predict_one(embedding, provided, &[None; N_PREDICTED])?;
        let after = self.predict_one(embedding, provided, &parsed)?;
        Ok(Intervention { before, after })
    }
}

fn row9(m: &Matrix) -> [f64; N_PREDICTED] {
    let mut out = [0.0; N_PREDICTED];
    out.copy_from_slice(m.row(0));
    out
}

impl Parameters for AnyModel {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        dispatch!(self, m => m.tensors())
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        dispatch!(self, m => m.tensors_mut())
    }
}

impl HeadModel for AnyModel {
    fn arch(&self) -> Arch {
        dispatch!(self, m => m.arch())
    }

    fn embedding_dim(&self) -> usize {
        dispatch!(self, m => m.embedding_dim())
    }

    fn loss(&self, batch: &Batch, weights: LossWeights) -> Result<f64> {
        dispatch!(self, m => m.loss(batch, weights))
    }

    fn loss_and_grad(&self, batch: &Batch, weights: LossWeights) -> Result<(f64, Gradients)> {
        dispatch!(self, m => m.loss_and_grad(batch, weights))
    }

    fn predict(&self, batch: &Batch) -> Result<Prediction> {
        dispatch!(self, m => m.predict(batch))
    }

    fn param_groups(&self) -> Vec<ParamGroup> {
        dispatch!(self, m => m.param_groups())
    }
}

pub(crate) fn check_batch(batch: &Batch, embedding_dim: Option<usize>) -> Result<()> {
    let n = batch.labels.len();
    if batch.concepts.shape() != (n, N_PREDICTED) {
        return Err(Error::shape(
            "batch concepts",
            format!("({n}, {N_PREDICTED})"),
            format!("{:?}", batch.concepts.shape()),
        ));
    }
    if batch.provided.shape() != (n, N_PROVIDED) {
        return Err(Error::shape(
            "batch provided concepts",
            format!("({n}, {N_PROVIDED})"),
            format!("{:?}", batch.provided.shape()),
        ));
    }
    if let Some(m) = embedding_dim {
        if batch.embeddings.shape() != (n, m) {
            return Err(Error::shape(
                "batch embeddings",
                format!("({n}, {m})"),
                format!("{:?}", batch.embeddings.shape()),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::Batch;
    use crate::nn::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_batch(n: usize, m: usize, seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let emb: Vec<f64> = (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let con: Vec<f64> = (0..n * 9).map(|_| f64::from(u8::from(rng.random_bool(0.4)))).collect();
        let pro: Vec<f64> = (0..n * 5).map(|_| f64::from(u8::from(rng.random_bool(0.4)))).collect();
        Batch {
            embeddings: Matrix::from_vec(n, m, emb).unwrap(),
            concepts: Matrix::from_vec(n, 9, con).unwrap(),
            provided: Matrix::from_vec(n, 5, pro).unwrap(),
            labels: (0..n).map(|i| (i % 2) as f64).collect(),
        }
    }
}
