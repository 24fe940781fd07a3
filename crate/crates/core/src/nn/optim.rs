use serde::{Deserialize, Serialize};

use super::{GradTape, Gradients, Mlp, Parameters};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<P: Parameters + ?Sized>(config: AdamConfig, params: &P) -> Self {
        let lens: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
        Self::with_lengths(config, &lens)
    }

    /// State for tensors of the given lengths.
    pub fn with_lengths(config: AdamConfig, lens: &[usize]) -> Self {
        let zeros: Vec<Vec<f64>> = lens.iter().map(|&n| vec![0.0; n]).collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.first, &self.second)
    }

    /// Bias-corrected Adam update applied in place.
    ///
    /// From a fresh state a zero gradient leaves every parameter untouched.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &Gradients) -> Result<()> {
        if params.len() != self.first.len() || grads.0.len() != self.first.len() {
            return Err(Error::shape(
                "Adam::step",
                format!("{} tensors", self.first.len()),
                format!("{} params / {} grads", params.len(), grads.0.len()),
            ));
        }
        for (i, (p, g)) in params.iter().zip(&grads.0).enumerate() {
            if p.len() != self.first[i].len() || g.len() != p.len() {
                return Err(Error::shape("Adam::step", self.first[i].len(), g.len()));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as f64;
        let c1 = 1.0 - beta1.powf(t);
        let c2 = 1.0 - beta2.powf(t);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(&grads.0)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for (((w, &gi), mi), vi) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// One Adam step on an [`Mlp`] from its [`GradTape`].
pub fn optim_step(mlp: &mut Mlp, tape: &GradTape, state: &mut Adam) -> Result<()> {
    let grads = tape.clone().into_gradients();
    state.step(mlp.tensors_mut(), &grads)
}
