use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::corpus::AnnotationRecord;
use crate::concepts::{expanded_names, one_hot_expand, RawAnnotation, CANDIDATES};
use crate::{Error, Result};

/// Scores under one slot-counting convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConventionScore {
    pub slots: usize,
    pub correct: usize,
    /// `slots - correct`.
    pub total_errors: usize,
    pub concept_accuracy: f64,
    /// Unweighted mean of the F1 of every (slot, value) pair that occurs in
    /// the gold or the predictions.
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationMetrics {
    pub docs: usize,
    /// Docs whose prediction record carries an error; all their slots count
    /// as wrong.
    pub failed_docs: usize,
    /// 14 slots per document, one per candidate concept.
    pub raw: ConventionScore,
    /// 20 slots per document, one per one-hot column.
    pub expanded: ConventionScore,
}

const MISSING: &str = "<missing>";

/// Builds a score from `(gold, predicted)` value rows, one entry per slot.
fn score_slots(rows: &[(Vec<String>, Vec<String>)], names: &[&str]) -> ConventionScore {
    let mut slots = 0;
    let mut correct = 0;
    // (slot, value) -> (tp, fp, fn)
    let mut counts: BTreeMap<(usize, String), (usize, usize, usize)> = BTreeMap::new();
    for (gold, pred) in rows {
        for s in 0..names.len() {
            slots += 1;
            let (g, p) = (&gold[s], &pred[s]);
            if g == p {
                correct += 1;
                counts.entry((s, g.clone())).or_default().0 += 1;
            } else {
                counts.entry((s, p.clone())).or_default().1 += 1;
                counts.entry((s, g.clone())).or_default().2 += 1;
            }
        }
    }
    let f1s: Vec<f64> = counts
        .iter()
        .filter(|((_, v), _)| v != MISSING)
        .map(|(_, &(tp, fp, fn_))| 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
        .collect();
    let macro_f1 = if f1s.is_empty() {
        1.0
    } else {
        f1s.iter().sum::<f64>() / f1s.len() as f64
    };
    ConventionScore {
        slots,
        correct,
        total_errors: slots - correct,
        concept_accuracy: if slots == 0 { 1.0 } else { correct as f64 / slots as f64 },
        macro_f1,
    }
}

fn raw_row(values: &RawAnnotation) -> Vec<String> {
    CANDIDATES
        .iter()
        .map(|c| values.get(c.name).unwrap_or(MISSING).to_string())
        .collect()
}

fn expanded_row(values: &RawAnnotation) -> Vec<String> {
    match one_hot_expand(values) {
        Ok(v) => v.0.iter().map(|b| b.to_string()).collect(),
        Err(_) => vec![MISSING.to_string(); expanded_names().len()],
    }
}

/// Compares predicted against gold annotations by document id. The id sets
/// must match; order does not matter.
pub fn score_annotations(pred: &[AnnotationRecord], gold: &[AnnotationRecord]) -> Result<AnnotationMetrics> {
    let gold_by_id: HashMap<&str, &AnnotationRecord> = gold.iter().map(|r| (r.id.as_str(), r)).collect();
    let pred_by_id: HashMap<&str, &AnnotationRecord> = pred.iter().map(|r| (r.id.as_str(), r)).collect();
    if gold_by_id.len() != gold.len() || pred_by_id.len() != pred.len() {
        return Err(Error::Validation("duplicate document ids".into()));
    }
    let g_ids: BTreeSet<&str> = gold_by_id.keys().copied().collect();
    let p_ids: BTreeSet<&str> = pred_by_id.keys().copied().collect();
    if g_ids != p_ids {
        let only_gold: Vec<&&str> = g_ids.difference(&p_ids).take(5).collect();
        let only_pred: Vec<&&str> = p_ids.difference(&g_ids).take(5).collect();
        return Err(Error::Validation(format!(
            "document ids differ: gold-only {only_gold:?}, prediction-only {only_pred:?}"
        )));
    }

    let mut raw_rows = Vec::new();
    let mut exp_rows = Vec::new();
    let mut failed = 0;
    for id in &g_ids {
        let g = gold_by_id[id].values.validated()?;
        if let Some(c) = CANDIDATES.iter().find(|c| g.get(c.name).is_none()) {
            return Err(Error::Annotation {
                concept: c.name.into(),
                reason: format!("missing from gold record `{id}`"),
            });
        }
        let p_rec = pred_by_id[id];
        let p = if p_rec.error.is_some() {
            failed += 1;
            RawAnnotation::new()
        } else {
            p_rec.values.validated()?
        };
        raw_rows.push((raw_row(&g), raw_row(&p)));
        exp_rows.push((expanded_row(&g), expanded_row(&p)));
    }
    let raw_names: Vec<&str> = CANDIDATES.iter().map(|c| c.name).collect();
    Ok(AnnotationMetrics {
        docs: g_ids.len(),
        failed_docs: failed,
        raw: score_slots(&raw_rows, &raw_names),
        expanded: score_slots(&exp_rows, expanded_names()),
    })
}
