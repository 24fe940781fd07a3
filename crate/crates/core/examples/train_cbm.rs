//! Training a concept bottleneck model with warm-up and early stopping,
//! then saving and reloading the checkpoint.

use vdx::data::{synth_generate, SynthConfig};
use vdx::models::{load_checkpoint, save_checkpoint, Arch, ArchConfig, Checkpoint};
use vdx::training::{evaluate, fit_holdout, TrainConfig};

fn main() -> vdx::Result<()> {
    let ds = synth_generate(&SynthConfig {
        embedding_dim: 128,
        ..SynthConfig::default()
    })?;
    let arch_cfg = ArchConfig::default();
    let out = fit_holdout(Arch::Cbm, &ds, &arch_cfg, &TrainConfig::default())?;
    for r in &out.history {
        println!(
            "epoch {:2}{} train {:.4} val {:.4} acc {:.3} F1 {:.3} concepts {:.3}{}",
            r.epoch,
            if r.warmup { " (warm-up)" } else { "" },
            r.train_loss,
            r.val_loss,
            r.val_task_accuracy,
            r.val_macro_f1,
            r.val_concept_accuracy.unwrap_or(f64::NAN),
            if r.improved { " *" } else { "" }
        );
    }
    println!("kept epoch {}", out.best_epoch);

    let path = std::env::temp_dir().join("vdx_example_cbm.ckpt");
    save_checkpoint(&path, &Checkpoint::new(out.model, arch_cfg))?;
    let back = load_checkpoint(&path)?;
    let m = evaluate(&back.model, &ds)?;
    println!(
        "reloaded from {}: task accuracy {:.3}, macro F1 {:.3}, concept accuracy {:.3}",
        path.display(),
        m.task_accuracy,
        m.task_macro_f1,
        m.concept_accuracy.unwrap_or(f64::NAN)
    );
    Ok(())
}
