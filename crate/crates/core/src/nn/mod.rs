//! Dense-network numerics: matrices, layers, binary cross-entropy, Adam and a
//! central-difference gradient checker.
//!
//! Everything is `f64`. Parameters are exposed as an ordered list of flat
//! tensors through [`Parameters`]; gradients ([`Gradients`]) and optimizer
//! moments follow the same order.

mod gradcheck;
mod layer;
mod loss;
mod matrix;
mod optim;

pub use gradcheck::{gradcheck, gradcheck_with_step, Differentiable, GradCheckReport, GRAD_FLOOR};
pub use layer::{Activation, DenseLayer, ForwardCache, GradTape, LayerGrad, Mlp};
pub use loss::{bce_loss, clamp_prob, PROB_EPS};
pub use matrix::Matrix;
pub use optim::{optim_step, Adam, AdamConfig};

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Ordered, named access to a model's trainable tensors.
pub trait Parameters {
    fn tensors(&self) -> Vec<(String, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_total(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

/// Gradients aligned tensor-by-tensor with [`Parameters::tensors`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    pub fn zeros_like<P: Parameters + ?Sized>(params: &P) -> Self {
        Gradients(
            params
                .tensors()
                .into_iter()
                .map(|(_, t)| vec![0.0; t.len()])
                .collect(),
        )
    }

    pub fn extend(&mut self, other: Gradients) {
        self.0.extend(other.0);
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_and_symmetric() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        for z in [-5.0, -0.3, 0.7, 12.0] {
            assert!((sigmoid(z) + sigmoid(-z) - 1.0).abs() < 1e-15);
        }
    }
}
