use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::concepts::{N_PREDICTED, PREDICTED};
use crate::data::Dataset;
use crate::models::{binarize, Batch, HeadModel};
use crate::{Error, Result};

/// Binary confusion counts with class 1 as positive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_labels(pred: &[u8], gold: &[u8]) -> Result<Self> {
        if pred.len() != gold.len() {
            return Err(Error::shape("confusion", gold.len(), pred.len()));
        }
        let mut c = Confusion::default();
        for (&p, &g) in pred.iter().zip(gold) {
            match (p, g) {
                (1, 1) => c.tp += 1,
                (1, 0) => c.fp += 1,
                (0, 0) => c.tn += 1,
                (0, 1) => c.fn_ += 1,
                _ => {
                    return Err(Error::Validation(format!(
                        "labels must be 0 or 1, got prediction {p} and gold {g}"
                    )))
                }
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// F1 of class 1 (`pathological`) and class 0 (`euphonic`). A class that
    /// is neither present nor predicted scores 1.
    pub fn class_f1(&self) -> [f64; 2] {
        let f1 = |tp: usize, fp: usize, fn_: usize| {
            if tp + fp + fn_ == 0 {
                1.0
            } else {
                2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
            }
        };
        [f1(self.tn, self.fn_, self.fp), f1(self.tp, self.fp, self.fn_)]
    }

    /// Unweighted mean of the two per-class F1 scores.
    pub fn macro_f1(&self) -> f64 {
        let [neg, pos] = self.class_f1();
        (neg + pos) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    /// Micro average over every (example, predicted concept) slot; absent
    /// for heads without concepts.
    pub concept_accuracy: Option<f64>,
    pub per_concept_accuracy: Option<BTreeMap<String, f64>>,
    pub task_accuracy: f64,
    pub task_macro_f1: f64,
    pub confusion: Confusion,
}

/// Task metrics from probabilities thresholded at 0.5.
pub fn task_metrics(probs: &[f64], gold: &[u8]) -> Result<(f64, f64, Confusion)> {
    if probs.is_empty() {
        return Err(Error::Validation("no predictions to score".into()));
    }
    let pred: Vec<u8> = probs.iter().map(|&p| binarize(p) as u8).collect();
    let c = Confusion::from_labels(&pred, gold)?;
    Ok((c.accuracy(), c.macro_f1(), c))
}

/// Evaluation-mode metrics of `model` on `dataset`.
pub fn evaluate<M: HeadModel>(model: &M, dataset: &Dataset) -> Result<Metrics> {
    if dataset.is_empty() {
        return Err(Error::Validation("cannot evaluate on an empty dataset".into()));
    }
    let all: Vec<usize> = (0..dataset.len()).collect();
    let batch = Batch::from_dataset(dataset, &all)?;
    let pred = model.predict(&batch)?;
    let gold = dataset.labels();
    let (task_accuracy, task_macro_f1, confusion) = task_metrics(&pred.task_probs, &gold)?;

    let (concept_accuracy, per_concept_accuracy) = match &pred.concept_bits {
        Some(bits) => {
            let n = dataset.len();
            let mut per = [0usize; N_PREDICTED];
            for r in 0..n {
                for (i, hit) in per.iter_mut().enumerate() {
                    if bits[(r, i)] == batch.concepts[(r, i)] {
                        *hit += 1;
                    }
                }
            }
            let total: usize = per.iter().sum();
            let breakdown = PREDICTED
                .iter()
                .zip(per)
                .map(|(name, hit)| (name.to_string(), hit as f64 / n as f64))
                .collect();
            (
                Some(total as f64 / (n * N_PREDICTED) as f64),
                Some(breakdown),
            )
        }
        None => (None, None),
    };
    Ok(Metrics {
        n: dataset.len(),
        concept_accuracy,
        per_concept_accuracy,
        task_accuracy,
        task_macro_f1,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let c = Confusion::from_labels(&[1, 1, 0, 0], &[1, 0, 0, 0]).unwrap();
        assert_eq!(c.accuracy(), 0.75);
        let [neg, pos] = c.class_f1();
        assert!((pos - 2.0 / 3.0).abs() < 1e-15);
        assert!((neg - 0.8).abs() < 1e-15);
        assert!((c.macro_f1() - 0.7333333333333333).abs() < 1e-15);
    }

    #[test]
    fn constant_positive_on_balanced_set() {
        let c = Confusion::from_labels(&[1, 1, 1, 1], &[1, 1, 0, 0]).unwrap();
        assert_eq!(c.accuracy(), 0.5);
        assert!((c.macro_f1() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn all_correct_is_perfect() {
        for gold in [vec![1, 0, 1], vec![1, 1, 1], vec![0, 0]] {
            let c = Confusion::from_labels(&gold, &gold).unwrap();
            assert_eq!((c.accuracy(), c.macro_f1()), (1.0, 1.0));
        }
    }

    #[test]
    fn threshold_tie_counts_as_positive() {
        let (acc, _, c) = task_metrics(&[0.5, 0.49], &[1, 0]).unwrap();
        assert_eq!(acc, 1.0);
        assert_eq!(c.tp, 1);
    }
}
