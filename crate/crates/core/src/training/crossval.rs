use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{evaluate, Metrics};
use super::trainer::{train, TrainConfig, TrainOutcome};
use crate::data::{kfold_indices, kfold_split, Dataset};
use crate::models::{AnyModel, Arch, ArchConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub metrics: Option<Metrics>,
    pub best_epoch: Option<usize>,
    pub error: Option<String>,
}

/// The three headline numbers, as a mean or a standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub concept_accuracy: Option<f64>,
    pub task_accuracy: f64,
    pub task_macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub arch: Arch,
    pub k: usize,
    pub seed: u64,
    pub config_sha256: String,
    pub folds: Vec<FoldResult>,
    /// Over successful folds.
    pub mean: MetricSummary,
    /// Sample standard deviation (n - 1) over successful folds.
    pub std: MetricSummary,
}

impl CvReport {
    pub fn failed_folds(&self) -> Vec<usize> {
        self.folds
            .iter()
            .filter(|f| f.metrics.is_none())
            .map(|f| f.fold)
            .collect()
    }

    /// `value (±std)` per metric.
    pub fn table_row(&self) -> String {
        let cell = |m: f64, s: f64| format!("{m:.4} (±{s:.4})");
        let concept = match (self.mean.concept_accuracy, self.std.concept_accuracy) {
            (Some(m), Some(s)) => cell(m, s),
            _ => "-".into(),
        };
        format!(
            "{:<8} concept {}  task acc {}  task F1 {}",
            self.arch,
            concept,
            cell(self.mean.task_accuracy, self.std.task_accuracy),
            cell(self.mean.task_macro_f1, self.std.task_macro_f1)
        )
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn summarize(folds: &[FoldResult]) -> Result<(MetricSummary, MetricSummary)> {
    let ok: Vec<&Metrics> = folds.iter().filter_map(|f| f.metrics.as_ref()).collect();
    if ok.is_empty() {
        let reasons: Vec<String> = folds
            .iter()
            .filter_map(|f| f.error.as_ref().map(|e| format!("fold {}: {e}", f.fold)))
            .collect();
        return Err(Error::Validation(format!("every fold failed: {}", reasons.join("; "))));
    }
    let col = |f: fn(&Metrics) -> f64| mean_std(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
    let (ta, ta_s) = col(|m| m.task_accuracy);
    let (tf, tf_s) = col(|m| m.task_macro_f1);
    let concept: Option<Vec<f64>> = ok.iter().map(|m| m.concept_accuracy).collect();
    let (ca, ca_s) = match concept {
        Some(v) => {
            let (m, s) = mean_std(&v);
            (Some(m), Some(s))
        }
        None => (None, None),
    };
    Ok((
        MetricSummary {
            concept_accuracy: ca,
            task_accuracy: ta,
            task_macro_f1: tf,
        },
        MetricSummary {
            concept_accuracy: ca_s,
            task_accuracy: ta_s,
            task_macro_f1: tf_s,
        },
    ))
}

fn config_hash(arch: Arch, arch_cfg: &ArchConfig, cfg: &TrainConfig, provenance: &str) -> String {
    let text = serde_json::json!({
        "arch": arch,
        "arch_config": arch_cfg,
        "train_config": cfg,
        "data": provenance,
    })
    .to_string();
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Trains a fresh `arch` head on `data`, holding out a stratified
/// `cfg.val_fraction` share for early stopping. `cfg.seed` drives the split,
/// the initialization and the batch order.
pub fn fit_holdout(
    arch: Arch,
    data: &Dataset,
    arch_cfg: &ArchConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<AnyModel>> {
    cfg.validate()?;
    let inner_k = ((1.0 / cfg.val_fraction).round() as usize).max(2);
    let inner = kfold_indices(&data.labels(), inner_k, cfg.seed, true)?;
    let fit = data.subset(&inner[0].train);
    let val = data.subset(&inner[0].test);
    let model = AnyModel::init(arch, data.dim(), arch_cfg, cfg.seed)?;
    train(model, &fit, &val, cfg)
}

fn run_fold(
    arch: Arch,
    train_data: &Dataset,
    test_data: &Dataset,
    arch_cfg: &ArchConfig,
    cfg: &TrainConfig,
    fold: usize,
) -> Result<(Metrics, usize)> {
    let fold_cfg = TrainConfig {
        seed: cfg.seed.wrapping_add(fold as u64),
        ..cfg.clone()
    };
    let out = fit_holdout(arch, train_data, arch_cfg, &fold_cfg)?;
    Ok((evaluate(&out.model, test_data)?, out.best_epoch))
}

/// Stratified `cfg.k`-fold cross-validation with one fresh model per fold
/// seeded by `cfg.seed + fold`. Each training split holds out
/// `cfg.val_fraction` for early stopping. Folds run in parallel; a failed
/// fold is recorded rather than aborting the run.
pub fn cross_validate(
    arch: Arch,
    dataset: &Dataset,
    arch_cfg: &ArchConfig,
    cfg: &TrainConfig,
) -> Result<CvReport> {
    cross_validate_split(arch, dataset, dataset, arch_cfg, cfg)
}

/// As [`cross_validate`], but training on `train_view` and testing on
/// `test_view`: two datasets with the same examples in the same order that
/// may differ in their concept annotations (e.g. noisy training concepts).
pub fn cross_validate_split(
    arch: Arch,
    train_view: &Dataset,
    test_view: &Dataset,
    arch_cfg: &ArchConfig,
    cfg: &TrainConfig,
) -> Result<CvReport> {
    cfg.validate()?;
    if train_view.len() != test_view.len()
        || train_view
            .examples
            .iter()
            .zip(&test_view.examples)
            .any(|(a, b)| a.id != b.id || a.label != b.label)
    {
        return Err(Error::Validation(
            "training and test views must list the same examples".into(),
        ));
    }
    let folds = kfold_split(test_view, cfg.k, cfg.seed, true)?;
    let results: Vec<FoldResult> = folds
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let tr = train_view.subset(&f.train);
            let te = test_view.subset(&f.test);
            match run_fold(arch, &tr, &te, arch_cfg, cfg, i) {
                Ok((metrics, best)) => FoldResult {
                    fold: i,
                    metrics: Some(metrics),
                    best_epoch: Some(best),
                    error: None,
                },
                Err(e) => {
                    log::warn!("{arch} fold {i} failed: {e}");
                    FoldResult {
                        fold: i,
                        metrics: None,
                        best_epoch: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let (mean, std) = summarize(&results)?;
    Ok(CvReport {
        arch,
        k: cfg.k,
        seed: cfg.seed,
        config_sha256: config_hash(arch, arch_cfg, cfg, &train_view.provenance),
        folds: results,
        mean,
        std,
    })
}
