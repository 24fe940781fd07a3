use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cbm::{check_head, column, prefixed};
use super::{
    check_batch, joint_loss, Arch, ArchConfig, Batch, ConceptOverrides, HeadModel, LossWeights,
    ParamGroup, Prediction,
};
use crate::concepts::{N_PREDICTED, N_PROVIDED, N_TASK_INPUT};
use crate::nn::{Activation, ForwardCache, Gradients, Matrix, Mlp, Parameters};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CemOutput {
    /// Scorer outputs after overrides, `(batch, 9)`.
    pub concept_probs: Matrix,
    /// Task-head input, `(batch, 14 * h)`.
    pub embeddings: Matrix,
    pub task_probs: Vec<f64>,
}

/// Concept embedding model.
///
/// Each predicted concept has a positive and a negative generator
/// (`Linear + ReLU`, embedding -> `h`). A scorer shared by all concepts maps
/// `[c+, c-]` to a probability `p`, and the concept embedding is
/// `p * c+ + (1 - p) * c-`. Patient-provided concepts pick one of two learned
/// `h`-vectors by their bit. The task head reads all 14 embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CemModel {
    pub positive: Vec<Mlp>,
    pub negative: Vec<Mlp>,
    pub scorer: Mlp,
    /// `(5, h)`, selected when the patient bit is 1.
    pub patient_positive: Matrix,
    pub patient_negative: Matrix,
    pub task_head: Mlp,
}

struct Pass {
    pos: Vec<(Matrix, ForwardCache)>,
    neg: Vec<(Matrix, ForwardCache)>,
    scorer_cache: ForwardCache,
    /// Raw scorer output, `(batch, 9)`.
    probs: Matrix,
    task_input: Matrix,
}

impl CemModel {
    pub fn new(embedding_dim: usize, config: &ArchConfig, seed: u64) -> Result<Self> {
        let h = config.cem_embedding;
        if h == 0 {
            return Err(Error::Config("cem_embedding must be > 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let generator =
            |rng: &mut ChaCha8Rng| Mlp::new(&[embedding_dim, h], &[Activation::Relu], rng);
        let mut positive = Vec::with_capacity(N_PREDICTED);
        let mut negative = Vec::with_capacity(N_PREDICTED);
        for _ in 0..N_PREDICTED {
            positive.push(generator(&mut rng)?);
            negative.push(generator(&mut rng)?);
        }
        let scorer = Mlp::new(&[2 * h, 1], &[Activation::Sigmoid], &mut rng)?;
        let bound = (6.0 / (N_PROVIDED + h) as f64).sqrt();
        let mut patient = || {
            let data = (0..N_PROVIDED * h)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            Matrix::from_vec(N_PROVIDED, h, data)
        };
        let patient_positive = patient()?;
        let patient_negative = patient()?;
        let task_head = Mlp::with_hidden(
            N_TASK_INPUT * h,
            &config.task_hidden,
            1,
            Activation::Sigmoid,
            &mut rng,
        )?;
        Ok(Self {
            positive,
            negative,
            scorer,
            patient_positive,
            patient_negative,
            task_head,
        })
    }

    pub fn embedding_width(&self) -> usize {
        self.patient_positive.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.embedding_width();
        if self.positive.len() != N_PREDICTED || self.negative.len() != N_PREDICTED {
            return Err(Error::Validation(format!(
                "cem needs {N_PREDICTED} generator pairs, got {} / {}",
                self.positive.len(),
                self.negative.len()
            )));
        }
        let m = self.positive[0].in_dim();
        for g in self.positive.iter().chain(&self.negative) {
            if g.in_dim() != m || g.out_dim() != h {
                return Err(Error::shape(
                    "cem generator",
                    format!("{m} -> {h}"),
                    format!("{} -> {}", g.in_dim(), g.out_dim()),
                ));
            }
        }
        check_head("cem scorer", &self.scorer, Some(2 * h), 1, Activation::Sigmoid)?;
        if self.patient_negative.shape() != (N_PROVIDED, h)
            || self.patient_positive.shape() != (N_PROVIDED, h)
        {
            return Err(Error::shape(
                "cem patient embeddings",
                format!("({N_PROVIDED}, {h})"),
                format!("{:?}", self.patient_negative.shape()),
            ));
        }
        check_head(
            "cem task head",
            &self.task_head,
            Some(N_TASK_INPUT * h),
            1,
            Activation::Sigmoid,
        )
    }

    fn pass(&self, embeddings: &Matrix, provided: &Matrix, overrides: &ConceptOverrides) -> Result<Pass> {
        if provided.cols() != N_PROVIDED || provided.rows() != embeddings.rows() {
            return Err(Error::shape(
                "cem provided concepts",
                format!("({}, {N_PROVIDED})", embeddings.rows()),
                format!("{:?}", provided.shape()),
            ));
        }
        let n = embeddings.rows();
        let h = self.embedding_width();
        let pos: Vec<_> = self
            .positive
            .iter()
            .map(|g| g.forward(embeddings))
            .collect::<Result<_>>()?;
        let neg: Vec<_> = self
            .negative
            .iter()
            .map(|g| g.forward(embeddings))
            .collect::<Result<_>>()?;

        // Row i * n + b of the scorer input is [c+_i(b), c-_i(b)].
        let mut stacked = Matrix::zeros(N_PREDICTED * n, 2 * h);
        for i in 0..N_PREDICTED {
            for b in 0..n {
                let row = stacked.row_mut(i * n + b);
                row[..h].copy_from_slice(pos[i].0.row(b));
                row[h..].copy_from_slice(neg[i].0.row(b));
            }
        }
        let (scores, scorer_cache) = self.scorer.forward(&stacked)?;
        let mut probs = Matrix::zeros(n, N_PREDICTED);
        for i in 0..N_PREDICTED {
            for b in 0..n {
                probs[(b, i)] = scores[(i * n + b, 0)];
            }
        }

        let mut task_input = Matrix::zeros(n, N_TASK_INPUT * h);
        for b in 0..n {
            let row = task_input.row_mut(b);
            for i in 0..N_PREDICTED {
                let p = overrides[i].unwrap_or(probs[(b, i)]);
                let block = &mut row[i * h..(i + 1) * h];
                for ((o, cp), cn) in block.iter_mut().zip(pos[i].0.row(b)).zip(neg[i].0.row(b)) {
                    *o = p * cp + (1.0 - p) * cn;
                }
            }
            for j in 0..N_PROVIDED {
                let bit = provided[(b, j)];
                let block = &mut row[(N_PREDICTED + j) * h..(N_PREDICTED + j + 1) * h];
                for ((o, cp), cn) in block
                    .iter_mut()
                    .zip(self.patient_positive.row(j))
                    .zip(self.patient_negative.row(j))
                {
                    *o = bit * cp + (1.0 - bit) * cn;
                }
            }
        }
        Ok(Pass {
            pos,
            neg,
            scorer_cache,
            probs,
            task_input,
        })
    }

    /// Overrides set the scorer output of a concept to exactly 0 or 1, which
    /// selects its negative or positive embedding.
    pub fn forward(
        &self,
        embeddings: &Matrix,
        provided: &Matrix,
        overrides: &ConceptOverrides,
    ) -> Result<CemOutput> {
        let pass = self.pass(embeddings, provided, overrides)?;
        let task_probs = self.task_head.predict(&pass.task_input)?.into_vec();
        let mut probs = pass.probs;
        for r in 0..probs.rows() {
            for (p, o) in probs.row_mut(r).iter_mut().zip(overrides) {
                if let Some(v) = o {
                    *p = *v;
                }
            }
        }
        Ok(CemOutput {
            concept_probs: probs,
            embeddings: pass.task_input,
            task_probs,
        })
    }
}

impl Parameters for CemModel {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for i in 0..N_PREDICTED {
            out.extend(prefixed(&format!("positive{i}"), &self.positive[i]));
            out.extend(prefixed(&format!("negative{i}"), &self.negative[i]));
        }
        out.extend(prefixed("scorer", &self.scorer));
        out.push(("patient_positive".into(), self.patient_positive.as_slice()));
        out.push(("patient_negative".into(), self.patient_negative.as_slice()));
        out.extend(prefixed("task", &self.task_head));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for (p, n) in self.positive.iter_mut().zip(self.negative.iter_mut()) {
            out.extend(p.tensors_mut());
            out.extend(n.tensors_mut());
        }
        out.extend(self.scorer.tensors_mut());
        out.push(self.patient_positive.as_mut_slice());
        out.push(self.patient_negative.as_mut_slice());
        out.extend(self.task_head.tensors_mut());
        out
    }
}

impl HeadModel for CemModel {
    fn arch(&self) -> Arch {
        Arch::Cem
    }

    fn embedding_dim(&self) -> usize {
        self.positive[0].in_dim()
    }

    fn loss(&self, batch: &Batch, weights: LossWeights) -> Result<f64> {
        check_batch(batch, Some(self.embedding_dim()))?;
        let pass = self.pass(&batch.embeddings, &batch.provided, &[None; N_PREDICTED])?;
        let task = self.task_head.predict(&pass.task_input)?;
        Ok(joint_loss(
            Some(&pass.probs),
            &batch.concepts,
            task.as_slice(),
            &batch.labels,
            weights,
        )?
        .total)
    }

    fn loss_and_grad(&self, batch: &Batch, weights: LossWeights) -> Result<(f64, Gradients)> {
        check_batch(batch, Some(self.embedding_dim()))?;
        let n = batch.len();
        let h = self.embedding_width();
        let pass = self.pass(&batch.embeddings, &batch.provided, &[None; N_PREDICTED])?;
        let (task, task_cache) = self.task_head.forward(&pass.task_input)?;
        let loss = joint_loss(
            Some(&pass.probs),
            &batch.concepts,
            task.as_slice(),
            &batch.labels,
            weights,
        )?;
        let (task_tape, dx) = self.task_head.backward(&task_cache, &column(&loss.task_grad))?;
        let concept_grad = loss.concept_grad.expect("concept gradient");

        let mut d_scores = Matrix::zeros(N_PREDICTED * n, 1);
        let mut d_pos: Vec<Matrix> = (0..N_PREDICTED).map(|_| Matrix::zeros(n, h)).collect();
        let mut d_neg: Vec<Matrix> = (0..N_PREDICTED).map(|_| Matrix::zeros(n, h)).collect();
        for i in 0..N_PREDICTED {
            for b in 0..n {
                let p = pass.probs[(b, i)];
                let g_mix = &dx.row(b)[i * h..(i + 1) * h];
                let cp = pass.pos[i].0.row(b);
                let cn = pass.neg[i].0.row(b);
                let mut dp = concept_grad[(b, i)];
                for k in 0..h {
                    dp += g_mix[k] * (cp[k] - cn[k]);
                    d_pos[i][(b, k)] = p * g_mix[k];
                    d_neg[i][(b, k)] = (1.0 - p) * g_mix[k];
                }
                d_scores[(i * n + b, 0)] = dp;
            }
        }
        let (scorer_tape, d_stacked) = self.scorer.backward(&pass.scorer_cache, &d_scores)?;
        for i in 0..N_PREDICTED {
            for b in 0..n {
                let row = d_stacked.row(i * n + b);
                for k in 0..h {
                    d_pos[i][(b, k)] += row[k];
                    d_neg[i][(b, k)] += row[h + k];
                }
            }
        }

        let mut grads = Gradients::default();
        for i in 0..N_PREDICTED {
            let (tp, _) = self.positive[i].backward(&pass.pos[i].1, &d_pos[i])?;
            let (tn, _) = self.negative[i].backward(&pass.neg[i].1, &d_neg[i])?;
            grads.extend(tp.into_gradients());
            grads.extend(tn.into_gradients());
        }
        grads.extend(scorer_tape.into_gradients());

        let mut g_pp = vec![0.0; N_PROVIDED * h];
        let mut g_pn = vec![0.0; N_PROVIDED * h];
        for b in 0..n {
            for j in 0..N_PROVIDED {
                let bit = batch.provided[(b, j)];
                let g = &dx.row(b)[(N_PREDICTED + j) * h..(N_PREDICTED + j + 1) * h];
                for k in 0..h {
                    g_pp[j * h + k] += bit * g[k];
                    g_pn[j * h + k] += (1.0 - bit) * g[k];
                }
            }
        }
        grads.0.push(g_pp);
        grads.0.push(g_pn);
        grads.extend(task_tape.into_gradients());
        Ok((loss.total, grads))
    }

    fn predict(&self, batch: &Batch) -> Result<Prediction> {
        check_batch(batch, Some(self.embedding_dim()))?;
        let out = self.forward(&batch.embeddings, &batch.provided, &[None; N_PREDICTED])?;
        Ok(Prediction {
            concept_bits: Some(out.concept_probs.map(super::binarize)),
            concept_probs: Some(out.concept_probs),
            task_probs: out.task_probs,
        })
    }

    fn param_groups(&self) -> Vec<ParamGroup> {
        let n_concept = N_PREDICTED * 2 * 2 + self.scorer.layers().len() * 2;
        let mut out = vec![ParamGroup::Concept; n_concept];
        out.extend(vec![ParamGroup::Task; 2 + self.task_head.layers().len() * 2]);
        out
    }
}
