//! Checking analytic gradients of every head against central differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vdx::concepts::{N_PREDICTED, N_PROVIDED};
use vdx::models::{AnyModel, Arch, ArchConfig, Batch, LossWeights, Objective};
use vdx::nn::{gradcheck, Matrix};

fn main() -> vdx::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (n, m) = (4, 10);
    let mut draw = |rows: usize, cols: usize, bits: bool| {
        let data = (0..rows * cols)
            .map(|_| if bits { f64::from(rng.random_bool(0.5) as u8) } else { rng.random_range(-1.0..1.0) })
            .collect();
        Matrix::from_vec(rows, cols, data)
    };
    let batch = Batch {
        embeddings: draw(n, m, false)?,
        concepts: draw(n, N_PREDICTED, true)?,
        provided: draw(n, N_PROVIDED, true)?,
        labels: vec![1.0, 0.0, 1.0, 1.0],
    };
    let cfg = ArchConfig {
        concept_hidden: vec![32, 16],
        task_hidden: vec![16],
        ..ArchConfig::default()
    };
    for arch in Arch::ALL {
        let model = AnyModel::init(arch, m, &cfg, 1)?;
        let report = gradcheck(&Objective(model), &(batch.clone(), LossWeights::default()), 1e-5)?;
        println!(
            "{arch:<8} {:>6} entries, max relative error {:.2e} at {}",
            report.checked,
            report.max_rel_error,
            report.worst.unwrap_or_default()
        );
    }
    Ok(())
}
