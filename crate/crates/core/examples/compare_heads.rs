//! Cross-validated comparison of the four heads on one synthetic corpus.
//! The concept heads train on concepts with 10% annotation noise; every
//! head is scored against the clean ones.

use vdx::data::{synth_generate, with_concept_noise, SynthConfig};
use vdx::models::{Arch, ArchConfig};
use vdx::training::{cross_validate_split, TrainConfig};

fn main() -> vdx::Result<()> {
    let clean = synth_generate(&SynthConfig {
        embedding_dim: 96,
        ..SynthConfig::default()
    })?;
    let noisy = with_concept_noise(&clean, 0.1, 3)?;
    let cfg = TrainConfig::default();
    for arch in Arch::ALL {
        let train_view = if arch.has_concepts() { &noisy } else { &clean };
        let report = cross_validate_split(arch, train_view, &clean, &ArchConfig::default(), &cfg)?;
        println!("{}", report.table_row());
    }
    Ok(())
}
