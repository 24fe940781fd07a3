//! Generating the synthetic corpus and inspecting its stratified folds.

use vdx::data::{kfold_split, synth_generate, with_concept_noise, SynthConfig};

fn main() -> vdx::Result<()> {
    let cfg = SynthConfig {
        embedding_dim: 64,
        ..SynthConfig::default()
    };
    let ds = synth_generate(&cfg)?;
    let labels = ds.labels();
    let pos = labels.iter().filter(|&&l| l == 1).count();
    println!("{} examples, {pos} pathological, dim {}, config {}", ds.len(), ds.dim(), cfg.hash());

    for (i, fold) in kfold_split(&ds, 10, 0, true)?.iter().enumerate() {
        let p = fold.test.iter().filter(|&&j| labels[j] == 1).count();
        println!("fold {i}: {} test ({p} pathological), {} train", fold.test.len(), fold.train.len());
    }

    let noisy = with_concept_noise(&ds, 0.1, 1)?;
    let flipped: usize = ds
        .examples
        .iter()
        .zip(&noisy.examples)
        .map(|(a, b)| a.concepts.predicted.iter().zip(b.concepts.predicted).filter(|(x, y)| **x != *y).count())
        .sum();
    println!("10% concept noise changed {flipped} of {} bits", ds.len() * 9);
    Ok(())
}
