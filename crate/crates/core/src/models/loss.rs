use super::LossWeights;
use crate::concepts::N_PREDICTED;
use crate::nn::{bce_loss, Matrix};
use crate::{Error, Result};

/// Value and gradients of the joint objective
/// `task * BCE(y_hat, y) + concept * mean_i BCE(c_hat_i, c_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLoss {
    pub total: f64,
    /// Unweighted mean concept BCE, 0 without concept predictions.
    pub concept: f64,
    /// Unweighted mean task BCE.
    pub task: f64,
    /// d total / d concept probabilities, `(batch, 9)`.
    pub concept_grad: Option<Matrix>,
    /// d total / d task probabilities.
    pub task_grad: Vec<f64>,
}

/// Both BCE terms are batch means; the concept term also averages over the
/// nine concepts.
pub fn joint_loss(
    concept_probs: Option<&Matrix>,
    gold_concepts: &Matrix,
    task_probs: &[f64],
    labels: &[f64],
    weights: LossWeights,
) -> Result<JointLoss> {
    weights.validate()?;
    let (task, mut task_grad) = bce_loss(task_probs, labels)?;
    task_grad.iter_mut().for_each(|g| *g *= weights.task);
    let mut total = weights.task * task;

    let (concept, concept_grad) = match concept_probs {
        Some(p) => {
            if p.shape() != gold_concepts.shape() || p.cols() != N_PREDICTED {
                return Err(Error::shape(
                    "joint_loss concepts",
                    format!("{:?}", gold_concepts.shape()),
                    format!("{:?}", p.shape()),
                ));
            }
            let (l, mut g) = bce_loss(p.as_slice(), gold_concepts.as_slice())?;
            g.iter_mut().for_each(|v| *v *= weights.concept);
            total += weights.concept * l;
            (l, Some(Matrix::from_vec(p.rows(), p.cols(), g)?))
        }
        None => (0.0, None),
    };
    Ok(JointLoss {
        total,
        concept,
        task,
        concept_grad,
        task_grad,
    })
}
