//! Counterfactual predictions: forcing concepts on a trained CBM.

use std::collections::BTreeMap;

use vdx::concepts::PREDICTED;
use vdx::data::{synth_generate, SynthConfig};
use vdx::models::{Arch, ArchConfig};
use vdx::training::{fit_holdout, TrainConfig};

fn main() -> vdx::Result<()> {
    let ds = synth_generate(&SynthConfig {
        embedding_dim: 64,
        ..SynthConfig::separable()
    })?;
    let model = fit_holdout(Arch::Cbm, &ds, &ArchConfig::default(), &TrainConfig::default())?.model;
    let ex = ds.examples.iter().find(|e| e.label == 1).expect("a pathological example");

    let overrides = BTreeMap::from([("dysphonia_absent".to_string(), 1u8), ("dysphonia_severe".to_string(), 0u8)]);
    let out = model.intervene(&ex.embedding, &ex.concepts.provided, &overrides)?;
    println!("{:<20} {:>8} {:>8}", "concept", "before", "after");
    for (i, name) in PREDICTED.iter().enumerate() {
        println!("{name:<20} {:>8.3} {:>8.3}", out.before.concept_probs[i], out.after.concept_probs[i]);
    }
    println!("{:<20} {:>8.3} {:>8.3}", "P(pathological)", out.before.task_prob, out.after.task_prob);
    Ok(())
}
