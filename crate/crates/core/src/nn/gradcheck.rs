use rayon::prelude::*;

use super::{Gradients, Parameters};
use crate::{Error, Result};

/// A model whose scalar objective can be evaluated with and without
/// analytic gradients.
pub trait Differentiable: Parameters {
    type Input: ?Sized + Sync;

    fn loss(&self, input: &Self::Input) -> Result<f64>;
    fn loss_and_grad(&self, input: &Self::Input) -> Result<(f64, Gradients)>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `tensor[index]` of the worst entry.
    pub worst: Option<String>,
    pub checked: usize,
}

const CHUNK: usize = 512;

/// Smallest denominator of the relative error. With a loss of order one and
/// a step of 1e-5 the central difference carries roughly 1e-11 of rounding
/// noise, so entries below this magnitude are in effect judged on an
/// absolute error of `tolerance * GRAD_FLOOR`.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Compares every analytic gradient entry with a central difference of
/// step `eps` and returns the largest
/// `|analytic - numeric| / max(|analytic|, |numeric|, GRAD_FLOOR)`.
pub fn gradcheck<M>(model: &M, input: &M::Input, eps: f64) -> Result<GradCheckReport>
where
    M: Differentiable + Clone + Send + Sync,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Config(format!("gradcheck eps {eps} outside [1e-7, 1e-3]")));
    }
    gradcheck_with_step(model, input, eps)
}

/// Same as [`gradcheck`] without the step-range guard, for studying how the
/// estimate degrades with coarse steps.
pub fn gradcheck_with_step<M>(model: &M, input: &M::Input, eps: f64) -> Result<GradCheckReport>
where
    M: Differentiable + Clone + Send + Sync,
{
    let (_, analytic) = model.loss_and_grad(input)?;
    let names: Vec<(String, usize)> = model
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.len()))
        .collect();
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("gradcheck step {eps} must be positive")));
    }
    if analytic.0.len() != names.len()
        || analytic.0.iter().zip(&names).any(|(g, (_, n))| g.len() != *n)
    {
        return Err(Error::Contract("analytic gradient shape differs from parameters".into()));
    }

    let mut jobs = Vec::new();
    for (t, (_, len)) in names.iter().enumerate() {
        let mut start = 0;
        while start < *len {
            let end = (start + CHUNK).min(*len);
            jobs.push((t, start, end));
            start = end;
        }
    }

    let results: Vec<Result<(f64, String)>> = jobs
        .par_iter()
        .map(|&(t, start, end)| {
            let mut probe = model.clone();
            let mut worst = (0.0f64, String::new());
            for i in start..end {
                let name = || format!("{}[{i}]", names[t].0);
                let original = probe.tensors()[t].1[i];
                probe.tensors_mut()[t][i] = original + eps;
                let plus = probe.loss(input)?;
                probe.tensors_mut()[t][i] = original - eps;
                let minus = probe.loss(input)?;
                probe.tensors_mut()[t][i] = original;
                if !plus.is_finite() || !minus.is_finite() {
                    return Err(Error::NonFiniteLoss { param: name() });
                }
                let numeric = (plus - minus) / (2.0 * eps);
                let a = analytic.0[t][i];
                let denom = a.abs().max(numeric.abs()).max(GRAD_FLOOR);
                let rel = (a - numeric).abs() / denom;
                if rel > worst.0 || worst.1.is_empty() {
                    worst = (rel, name());
                }
            }
            Ok(worst)
        })
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: names.iter().map(|(_, n)| n).sum(),
    };
    for r in results {
        let (rel, name) = r?;
        if report.worst.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some(name);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{bce_loss, Activation, Matrix, Mlp};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Mean BCE of a sigmoid-output network against fixed targets.
    #[derive(Clone)]
    struct BceNet(Mlp);

    impl Parameters for BceNet {
        fn tensors(&self) -> Vec<(String, &[f64])> {
            self.0.tensors()
        }
        fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
            self.0.tensors_mut()
        }
    }

    impl Differentiable for BceNet {
        type Input = (Matrix, Vec<f64>);

        fn loss(&self, (x, t): &Self::Input) -> Result<f64> {
            Ok(bce_loss(self.0.predict(x)?.as_slice(), t)?.0)
        }

        fn loss_and_grad(&self, (x, t): &Self::Input) -> Result<(f64, Gradients)> {
            let (out, cache) = self.0.forward(x)?;
            let (loss, g) = bce_loss(out.as_slice(), t)?;
            let up = Matrix::from_vec(out.rows(), out.cols(), g)?;
            let (tape, _) = self.0.backward(&cache, &up)?;
            Ok((loss, tape.into_gradients()))
        }
    }

    /// Sum of outputs of a purely linear network: gradients are exact.
    #[derive(Clone)]
    struct LinearSum(Mlp);

    impl Parameters for LinearSum {
        fn tensors(&self) -> Vec<(String, &[f64])> {
            self.0.tensors()
        }
        fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
            self.0.tensors_mut()
        }
    }

    impl Differentiable for LinearSum {
        type Input = Matrix;

        fn loss(&self, x: &Matrix) -> Result<f64> {
            Ok(self.0.predict(x)?.as_slice().iter().sum())
        }

        fn loss_and_grad(&self, x: &Matrix) -> Result<(f64, Gradients)> {
            let (out, cache) = self.0.forward(x)?;
            let up = Matrix::filled(out.rows(), out.cols(), 1.0);
            let (tape, _) = self.0.backward(&cache, &up)?;
            Ok((out.as_slice().iter().sum(), tape.into_gradients()))
        }
    }

    fn random_input(rows: usize, cols: usize, seed: u64) -> Matrix {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn linear_model_is_exact_to_rounding() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = LinearSum(
            Mlp::new(&[5, 4, 3], &[Activation::Identity, Activation::Identity], &mut rng).unwrap(),
        );
        let report = gradcheck(&net, &random_input(3, 5, 9), 1e-5).unwrap();
        assert!(report.max_rel_error <= 1e-7, "{report:?}");
        assert_eq!(report.checked, net.0.param_count());
    }

    #[test]
    fn two_layer_sigmoid_net_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = BceNet(Mlp::with_hidden(6, &[8], 2, Activation::Sigmoid, &mut rng).unwrap());
        let x = random_input(4, 6, 8);
        let t = vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0];
        let report = gradcheck(&net, &(x, t), 1e-5).unwrap();
        assert!(report.max_rel_error <= 1e-4, "{report:?}");
    }

    #[test]
    fn coarse_step_is_orders_of_magnitude_worse() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let net = BceNet(
            Mlp::new(&[3, 4, 1], &[Activation::Sigmoid, Activation::Sigmoid], &mut rng).unwrap(),
        );
        let mut net = net;
        for w in net.0.layers_mut()[0].weight.as_mut_slice() {
            *w *= 4.0;
        }
        let input = (random_input(2, 3, 4), vec![1.0, 0.0]);
        let fine = gradcheck(&net, &input, 1e-5).unwrap().max_rel_error;
        let coarse = gradcheck_with_step(&net, &input, 1e-1).unwrap().max_rel_error;
        assert!(coarse > 100.0 * fine, "fine {fine} coarse {coarse}");
    }

    #[test]
    fn eps_outside_range_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = LinearSum(Mlp::new(&[2, 1], &[Activation::Identity], &mut rng).unwrap());
        assert!(gradcheck(&net, &Matrix::zeros(1, 2), 1e-2).is_err());
        assert!(gradcheck(&net, &Matrix::zeros(1, 2), 1e-9).is_err());
    }
}
