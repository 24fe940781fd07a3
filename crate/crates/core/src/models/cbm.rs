use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    binarize, check_batch, joint_loss, Arch, ArchConfig, Batch, ConceptOverrides, HeadModel,
    LossWeights, ParamGroup, Prediction,
};
use crate::concepts::{N_PREDICTED, N_PROVIDED, N_TASK_INPUT};
use crate::nn::{sigmoid, Activation, Gradients, Matrix, Mlp, Parameters};
use crate::{Error, Result};

/// What the task head receives from the concept head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BottleneckMode {
    /// Concept probabilities; used for training.
    SoftTrain,
    /// Thresholded concept bits.
    HardEval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbmOutput {
    /// Concept-head output before overrides.
    pub concept_logits: Matrix,
    /// After overrides.
    pub concept_probs: Matrix,
    pub concept_bits: Matrix,
    pub task_probs: Vec<f64>,
}

/// Concept bottleneck: `g: embedding -> 9 concept logits` followed by a
/// sigmoid, and `f: [concepts, patient bits] -> P(pathological)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbmModel {
    pub concept_head: Mlp,
    pub task_head: Mlp,
}

pub(super) fn prefixed<'a>(prefix: &str, mlp: &'a Mlp) -> Vec<(String, &'a [f64])> {
    mlp.tensors()
        .into_iter()
        .map(|(n, t)| (format!("{prefix}.{n}"), t))
        .collect()
}

pub(super) fn column(values: &[f64]) -> Matrix {
    Matrix::from_vec(values.len(), 1, values.to_vec()).expect("column length")
}

pub(super) fn check_head(
    name: &'static str,
    mlp: &Mlp,
    in_dim: Option<usize>,
    out_dim: usize,
    output: Activation,
) -> Result<()> {
    if in_dim.is_some_and(|d| d != mlp.in_dim()) || mlp.out_dim() != out_dim {
        return Err(Error::shape(
            name,
            format!("{} -> {out_dim}", in_dim.map_or("*".into(), |d| d.to_string())),
            format!("{} -> {}", mlp.in_dim(), mlp.out_dim()),
        ));
    }
    if mlp.layers().last().map(|l| l.activation) != Some(output) {
        return Err(Error::Validation(format!("{name} must end in {output:?}")));
    }
    Ok(())
}

impl CbmModel {
    pub fn new(embedding_dim: usize, config: &ArchConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let concept_head = Mlp::with_hidden(
            embedding_dim,
            &config.concept_hidden,
            N_PREDICTED,
            Activation::Identity,
            &mut rng,
        )?;
        let task_head = Mlp::with_hidden(
            N_TASK_INPUT,
            &config.task_hidden,
            1,
            Activation::Sigmoid,
            &mut rng,
        )?;
        Ok(Self {
            concept_head,
            task_head,
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_head(
            "cbm concept head",
            &self.concept_head,
            None,
            N_PREDICTED,
            Activation::Identity,
        )?;
        check_head(
            "cbm task head",
            &self.task_head,
            Some(N_TASK_INPUT),
            1,
            Activation::Sigmoid,
        )
    }

    pub fn concept_logits(&self, embeddings: &Matrix) -> Result<Matrix> {
        self.concept_head.predict(embeddings)
    }

    pub fn concept_probs(&self, embeddings: &Matrix) -> Result<Matrix> {
        Ok(self.concept_logits(embeddings)?.map(sigmoid))
    }

    /// Task head on explicit concept values, `(batch, 9)` and `(batch, 5)`.
    pub fn task_from_concepts(&self, concepts: &Matrix, provided: &Matrix) -> Result<Vec<f64>> {
        if provided.cols() != N_PROVIDED {
            return Err(Error::shape("cbm provided concepts", N_PROVIDED, provided.cols()));
        }
        Ok(self
            .task_head
            .predict(&concepts.hconcat(provided)?)?
            .into_vec())
    }

    /// Overrides replace both the probability and the bit of a concept.
    pub fn forward(
        &self,
        embeddings: &Matrix,
        provided: &Matrix,
        mode: BottleneckMode,
        overrides: &ConceptOverrides,
    ) -> Result<CbmOutput> {
        let concept_logits = self.concept_logits(embeddings)?;
        let mut probs = concept_logits.map(sigmoid);
        for r in 0..probs.rows() {
            for (p, o) in probs.row_mut(r).iter_mut().zip(overrides) {
                if let Some(v) = o {
                    *p = *v;
                }
            }
        }
        let bits = probs.map(binarize);
        let task_input = match mode {
            BottleneckMode::SoftTrain => &probs,
            BottleneckMode::HardEval => &bits,
        };
        let task_probs = self.task_from_concepts(task_input, provided)?;
        Ok(CbmOutput {
            concept_logits,
            concept_probs: probs,
            concept_bits: bits,
            task_probs,
        })
    }
}

impl Parameters for CbmModel {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = prefixed("concept", &self.concept_head);
        out.extend(prefixed("task", &self.task_head));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.concept_head.tensors_mut();
        out.extend(self.task_head.tensors_mut());
        out
    }
}

impl HeadModel for CbmModel {
    fn arch(&self) -> Arch {
        Arch::Cbm
    }

    fn embedding_dim(&self) -> usize {
        self.concept_head.in_dim()
    }

    fn loss(&self, batch: &Batch, weights: LossWeights) -> Result<f64> {
        check_batch(batch, Some(self.embedding_dim()))?;
        let probs = self.concept_probs(&batch.embeddings)?;
        let task = self.task_from_concepts(&probs, &batch.provided)?;
        Ok(joint_loss(Some(&probs), &batch.concepts, &task, &batch.labels, weights)?.total)
    }

    fn loss_and_grad(&self, batch: &Batch, weights: LossWeights) -> Result<(f64, Gradients)> {
        check_batch(batch, Some(self.embedding_dim()))?;
        let (logits, concept_cache) = self.concept_head.forward(&batch.embeddings)?;
        let probs = logits.map(sigmoid);
        let (task, task_cache) = self.task_head.forward(&probs.hconcat(&batch.provided)?)?;
        let loss = joint_loss(
            Some(&probs),
            &batch.concepts,
            task.as_slice(),
            &batch.labels,
            weights,
        )?;
        let (task_tape, dx) = self.task_head.backward(&task_cache, &column(&loss.task_grad))?;
        let mut dprobs = loss.concept_grad.expect("concept gradient");
        for r in 0..dprobs.rows() {
            let p = probs.row(r);
            for ((g, d), &p) in dprobs
                .row_mut(r)
                .iter_mut()
                .zip(&dx.row(r)[..N_PREDICTED])
                .zip(p)
            {
                *g = (*g + d) * p * (1.0 - p);
            }
        }
        let (concept_tape, _) = self.concept_head.backward(&concept_cache, &dprobs)?;
        let mut grads = concept_tape.into_gradients();
        grads.extend(task_tape.into_gradients());
        Ok((loss.total, grads))
    }

    fn predict(&self, batch: &Batch) -> Result<Prediction> {
        check_batch(batch, Some(self.embedding_dim()))?;
        let out = self.forward(
            &batch.embeddings,
            &batch.provided,
            BottleneckMode::HardEval,
            &[None; N_PREDICTED],
        )?;
        Ok(Prediction {
            concept_probs: Some(out.concept_probs),
            concept_bits: Some(out.concept_bits),
            task_probs: out.task_probs,
        })
    }

    fn param_groups(&self) -> Vec<ParamGroup> {
        let n_concept = self.concept_head.layers().len() * 2;
        let n_task = self.task_head.layers().len() * 2;
        let mut out = vec![ParamGroup::Concept; n_concept];
        out.extend(vec![ParamGroup::Task; n_task]);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testutil::random_batch;
    use crate::models::Objective;
    use crate::nn::gradcheck;

    fn small() -> ArchConfig {
        ArchConfig {
            concept_hidden: vec![6],
            task_hidden: vec![5],
            ..ArchConfig::default()
        }
    }

    fn by_hand(mlp: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for layer in mlp.layers() {
            let mut next = layer.bias.clone();
            for (i, x) in h.iter().enumerate() {
                for (j, o) in next.iter_mut().enumerate() {
                    *o += x * layer.weight[(i, j)];
                }
            }
            h = next
                .into_iter()
                .map(|z| match layer.activation {
                    Activation::Identity => z,
                    Activation::Relu => z.max(0.0),
                    Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
                })
                .collect();
        }
        h
    }

    #[test]
    fn forward_matches_hand_computation() {
        let m = CbmModel::new(4, &small(), 3).unwrap();
        let b = random_batch(3, 4, 9);
        let out = m
            .forward(&b.embeddings, &b.provided, BottleneckMode::HardEval, &[None; 9])
            .unwrap();
        for r in 0..3 {
            let logits = by_hand(&m.concept_head, b.embeddings.row(r));
            assert_eq!(logits.as_slice(), out.concept_logits.row(r));
            for (i, z) in logits.iter().enumerate() {
                let p = 1.0 / (1.0 + (-z).exp());
                assert!((p - out.concept_probs[(r, i)]).abs() < 1e-15);
                assert_eq!(out.concept_bits[(r, i)], if p >= 0.5 { 1.0 } else { 0.0 });
            }
            let mut x = out.concept_bits.row(r).to_vec();
            x.extend_from_slice(b.provided.row(r));
            assert!((by_hand(&m.task_head, &x)[0] - out.task_probs[r]).abs() < 1e-15);
        }
        assert!(out.task_probs.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn zeroed_concept_head_ties_to_one() {
        let mut m = CbmModel::new(4, &small(), 3).unwrap();
        for t in m.concept_head.tensors_mut() {
            t.fill(0.0);
        }
        let b = random_batch(2, 4, 9);
        let out = m.predict(&b).unwrap();
        assert!(out.concept_probs.unwrap().as_slice().iter().all(|&p| p == 0.5));
        assert!(out.concept_bits.unwrap().as_slice().iter().all(|&c| c == 1.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = CbmModel::new(5, &small(), 1).unwrap();
        let b = random_batch(4, 5, 2);
        let r = gradcheck(&Objective(m), &(b, LossWeights::default()), 1e-5).unwrap();
        assert!(r.max_rel_error <= 1e-4, "{r:?}");
    }

    #[test]
    fn overrides_fix_bits() {
        let m = CbmModel::new(4, &small(), 3).unwrap();
        let b = random_batch(3, 4, 9);
        let mut o = [None; 9];
        o[2] = Some(1.0);
        o[5] = Some(0.0);
        let out = m
            .forward(&b.embeddings, &b.provided, BottleneckMode::HardEval, &o)
            .unwrap();
        for r in 0..3 {
            assert_eq!(out.concept_bits[(r, 2)], 1.0);
            assert_eq!(out.concept_bits[(r, 5)], 0.0);
        }
    }

    #[test]
    fn rejects_wrong_embedding_width() {
        let m = CbmModel::new(4, &small(), 3).unwrap();
        let b = random_batch(2, 5, 1);
        assert!(matches!(m.predict(&b), Err(Error::Shape { .. })));
    }
}
