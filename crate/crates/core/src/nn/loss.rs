use crate::{Error, Result};

/// Probability clamp shared by the loss and by every metric that reads
/// probabilities.
pub const PROB_EPS: f64 = 1e-7;

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Mean binary cross-entropy over all elements and its gradient with respect
/// to each prediction.
///
/// Predictions are clamped to `[PROB_EPS, 1 - PROB_EPS]`; where the clamp is
/// active the gradient is zero, matching the clamped function exactly.
pub fn bce_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::shape("bce_loss", pred.len(), target.len()));
    }
    if pred.is_empty() {
        return Err(Error::Validation("bce_loss on empty input".into()));
    }
    if let Some((i, t)) = target
        .iter()
        .enumerate()
        .find(|(_, &t)| t != 0.0 && t != 1.0)
    {
        return Err(Error::Validation(format!(
            "bce target at index {i} is {t}, expected 0 or 1"
        )));
    }
    if let Some(i) = pred.iter().position(|p| !p.is_finite()) {
        return Err(Error::Validation(format!("prediction at index {i} is not finite")));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.iter().zip(target) {
        let pc = clamp_prob(p);
        loss -= t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
        let g = if p == pc {
            (-t / pc + (1.0 - t) / (1.0 - pc)) / n
        } else {
            0.0
        };
        grad.push(g);
    }
    Ok((loss / n, grad))
}
