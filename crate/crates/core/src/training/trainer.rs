use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, Metrics};
use crate::data::Dataset;
use crate::models::{Arch, Batch, HeadModel, LossWeights, ParamGroup};
use crate::nn::{Adam, AdamConfig, Gradients};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Leading epochs trained on the concept loss only. Ignored by heads
    /// without concepts.
    pub warmup_epochs: usize,
    pub lr_concept: f64,
    pub lr_task: f64,
    /// Learning rate of the end-to-end baseline.
    pub lr_baseline: f64,
    pub weights: LossWeights,
    pub batch_size: usize,
    /// Post-warm-up epochs without improvement tolerated before stopping.
    pub patience: usize,
    /// Required gain in validation macro F1 to count as an improvement.
    pub min_delta: f64,
    pub seed: u64,
    pub k: usize,
    /// Share of each training split held out for early stopping.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            warmup_epochs: 2,
            lr_concept: 5e-5,
            lr_task: 5e-4,
            lr_baseline: 5e-5,
            weights: LossWeights::default(),
            batch_size: 16,
            patience: 5,
            min_delta: 0.0,
            seed: 0,
            k: 10,
            val_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.epochs == 0 || self.warmup_epochs >= self.epochs {
            return bad(format!(
                "need 0 <= warmup_epochs < epochs, got {} and {}",
                self.warmup_epochs, self.epochs
            ));
        }
        for (name, lr) in [
            ("lr_concept", self.lr_concept),
            ("lr_task", self.lr_task),
            ("lr_baseline", self.lr_baseline),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be > 0, got {lr}"));
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size must be > 0".into());
        }
        if !(self.min_delta >= 0.0) {
            return bad(format!("min_delta must be >= 0, got {}", self.min_delta));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 0.5) {
            return bad(format!("val_fraction must be in (0, 0.5), got {}", self.val_fraction));
        }
        self.weights.validate()
    }

    fn warmup_for(&self, arch: Arch) -> usize {
        if arch.has_concepts() {
            self.warmup_epochs
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub warmup: bool,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_task_accuracy: f64,
    pub val_macro_f1: f64,
    pub val_concept_accuracy: Option<f64>,
    /// Whether this epoch became the kept snapshot.
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    /// Snapshot of the best monitored epoch.
    pub model: M,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

struct GroupedAdam {
    groups: Vec<ParamGroup>,
    concept: Adam,
    task: Adam,
}

impl GroupedAdam {
    fn new<M: HeadModel>(model: &M, cfg: &TrainConfig) -> Self {
        let groups = model.param_groups();
        let lens: Vec<(ParamGroup, usize)> = groups
            .iter()
            .zip(model.tensors())
            .map(|(&g, (_, t))| (g, t.len()))
            .collect();
        let pick = |want: ParamGroup| -> Vec<usize> {
            lens.iter().filter(|(g, _)| *g == want).map(|&(_, n)| n).collect()
        };
        let task_lr = if model.arch() == Arch::Baseline {
            cfg.lr_baseline
        } else {
            cfg.lr_task
        };
        Self {
            concept: Adam::with_lengths(AdamConfig::with_lr(cfg.lr_concept), &pick(ParamGroup::Concept)),
            task: Adam::with_lengths(AdamConfig::with_lr(task_lr), &pick(ParamGroup::Task)),
            groups,
        }
    }

    fn step<M: HeadModel>(&mut self, model: &mut M, grads: Gradients) -> Result<()> {
        let mut concept_p = Vec::new();
        let mut task_p = Vec::new();
        let mut concept_g = Gradients::default();
        let mut task_g = Gradients::default();
        for ((p, g), group) in model.tensors_mut().into_iter().zip(grads.0).zip(&self.groups) {
            match group {
                ParamGroup::Concept => {
                    concept_p.push(p);
                    concept_g.0.push(g);
                }
                ParamGroup::Task => {
                    task_p.push(p);
                    task_g.0.push(g);
                }
            }
        }
        if !concept_p.is_empty() {
            self.concept.step(concept_p, &concept_g)?;
        }
        self.task.step(task_p, &task_g)
    }
}

fn full_loss<M: HeadModel>(model: &M, dataset: &Dataset, weights: LossWeights) -> Result<f64> {
    let all: Vec<usize> = (0..dataset.len()).collect();
    model.loss(&Batch::from_dataset(dataset, &all)?, weights)
}

/// Mini-batch Adam on the joint loss with warm-up and early stopping on
/// validation macro F1 (ties broken by lower validation loss). Only epochs
/// after the warm-up are eligible as snapshots.
pub fn train<M: HeadModel>(
    model: M,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<M>> {
    train_with_observer(model, train_set, val_set, cfg, |_, _| {})
}

/// [`train`], calling `observer(epoch, model)` after every epoch's updates.
pub fn train_with_observer<M: HeadModel>(
    mut model: M,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
    mut observer: impl FnMut(usize, &M),
) -> Result<TrainOutcome<M>> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Validation(format!(
            "empty split: {} training and {} validation examples",
            train_set.len(),
            val_set.len()
        )));
    }
    for ds in [train_set, val_set] {
        if ds.dim() != model.embedding_dim() {
            return Err(Error::shape("train", model.embedding_dim(), ds.dim()));
        }
    }
    let warmup = cfg.warmup_for(model.arch());
    let mut opt = GroupedAdam::new(&model, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, f64, usize, M)> = None;
    let mut stale = 0usize;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        let in_warmup = epoch <= warmup;
        let weights = if in_warmup {
            LossWeights {
                task: 0.0,
                ..cfg.weights
            }
        } else {
            cfg.weights
        };
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = Batch::from_dataset(train_set, chunk)?;
            let (loss, grads) = model.loss_and_grad(&batch, weights)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFiniteLoss {
                    param: format!("epoch {epoch}"),
                });
            }
            loss_sum += loss * chunk.len() as f64;
            opt.step(&mut model, grads)?;
        }
        observer(epoch, &model);

        let metrics: Metrics = evaluate(&model, val_set)?;
        let val_loss = full_loss(&model, val_set, cfg.weights)?;
        let mut improved = false;
        if !in_warmup {
            improved = match &best {
                None => true,
                Some((f1, loss, _, _)) => {
                    metrics.task_macro_f1 > f1 + cfg.min_delta
                        || (metrics.task_macro_f1 >= *f1 && val_loss < *loss)
                }
            };
            if improved {
                best = Some((metrics.task_macro_f1, val_loss, epoch, model.clone()));
                stale = 0;
            } else {
                stale += 1;
            }
        }
        log::debug!(
            "{} epoch {epoch}: train {:.4} val {:.4} f1 {:.4}",
            model.arch(),
            loss_sum / train_set.len() as f64,
            val_loss,
            metrics.task_macro_f1
        );
        history.push(EpochRecord {
            epoch,
            warmup: in_warmup,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss,
            val_task_accuracy: metrics.task_accuracy,
            val_macro_f1: metrics.task_macro_f1,
            val_concept_accuracy: metrics.concept_accuracy,
            improved,
        });
        if !in_warmup && stale > cfg.patience {
            stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    let (_, _, best_epoch, model) = best.expect("at least one post-warm-up epoch");
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthConfig};
    use crate::models::{ArchConfig, CbmModel, IdealCbm};
    use crate::nn::Parameters;

    fn tiny_data(seed: u64) -> (Dataset, Dataset) {
        let cfg = SynthConfig {
            n_examples: 60,
            embedding_dim: 12,
            seed,
            ..SynthConfig::separable()
        };
        let ds = synth_generate(&cfg).unwrap();
        let train: Vec<usize> = (0..48).collect();
        let val: Vec<usize> = (48..60).collect();
        (ds.subset(&train), ds.subset(&val))
    }

    fn small_arch() -> ArchConfig {
        ArchConfig {
            concept_hidden: vec![8],
            task_hidden: vec![6],
            ..ArchConfig::default()
        }
    }

    fn task_head_snapshot(m: &CbmModel) -> Vec<Vec<f64>> {
        m.task_head.tensors().into_iter().map(|(_, t)| t.to_vec()).collect()
    }

    #[test]
    fn warmup_leaves_task_head_untouched() {
        let (tr, va) = tiny_data(1);
        let model = CbmModel::new(12, &small_arch(), 3).unwrap();
        let initial = task_head_snapshot(&model);
        let cfg = TrainConfig {
            epochs: 3,
            warmup_epochs: 2,
            ..TrainConfig::default()
        };
        let mut heads = Vec::new();
        let mut concepts = Vec::new();
        train_with_observer(model.clone(), &tr, &va, &cfg, |_, m: &CbmModel| {
            heads.push(task_head_snapshot(m));
            concepts.push(m.concept_head.clone());
        })
        .unwrap();
        assert_eq!(heads[0], initial);
        assert_eq!(heads[1], initial);
        assert_ne!(heads[2], initial);
        assert_ne!(concepts[0], model.concept_head);
    }

    #[test]
    fn patience_zero_stops_at_first_stall() {
        let (tr, mut va) = tiny_data(2);
        // label noise caps the achievable validation score
        for ex in va.examples.iter_mut().step_by(2) {
            ex.label = 1 - ex.label;
        }
        let cfg = TrainConfig {
            epochs: 30,
            warmup_epochs: 0,
            patience: 0,
            lr_task: 0.05,
            ..TrainConfig::default()
        };
        let out = train(IdealCbm::new(12, &small_arch(), 0).unwrap(), &tr, &va, &cfg).unwrap();
        let first_stall = out.history.iter().position(|r| !r.improved).unwrap();
        assert_eq!(out.history.len(), first_stall + 1);
        assert!(out.stopped_early);
    }

    #[test]
    fn seeded_runs_repeat() {
        let (tr, va) = tiny_data(3);
        let cfg = TrainConfig {
            epochs: 4,
            ..TrainConfig::default()
        };
        let a = train(CbmModel::new(12, &small_arch(), 5).unwrap(), &tr, &va, &cfg).unwrap();
        let b = train(CbmModel::new(12, &small_arch(), 5).unwrap(), &tr, &va, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn best_snapshot_dominates_history() {
        let (tr, va) = tiny_data(4);
        let cfg = TrainConfig {
            epochs: 12,
            ..TrainConfig::default()
        };
        let out = train(CbmModel::new(12, &small_arch(), 1).unwrap(), &tr, &va, &cfg).unwrap();
        let best = &out.history[out.best_epoch - 1];
        for r in out.history.iter().filter(|r| !r.warmup) {
            assert!(best.val_macro_f1 >= r.val_macro_f1);
        }
        assert_eq!(evaluate(&out.model, &va).unwrap().task_macro_f1, best.val_macro_f1);
    }

    #[test]
    fn rejects_empty_split_and_bad_config() {
        let (tr, va) = tiny_data(5);
        let m = IdealCbm::new(12, &small_arch(), 0).unwrap();
        let empty = tr.subset(&[]);
        assert!(matches!(
            train(m.clone(), &empty, &va, &TrainConfig::default()),
            Err(Error::Validation(_))
        ));
        let cfg = TrainConfig {
            warmup_epochs: 30,
            ..TrainConfig::default()
        };
        assert!(matches!(train(m, &tr, &va, &cfg), Err(Error::Config(_))));
    }
}
