//! From a categorical annotation to the 20-bit expansion and the 9 + 5
//! concepts the models consume.

use vdx::concepts::{one_hot_expand, project_final, schema_hash, RawAnnotation, PREDICTED, PROVIDED};

fn main() -> vdx::Result<()> {
    let mut raw = RawAnnotation::negative();
    raw.set("dysphonia", "light-moderate")
        .set("roughness", "yes")
        .set("smoking", "yes")
        .set("gender", "female");

    let expanded = one_hot_expand(&raw)?;
    println!("expanded ({} bits): {:?}", expanded.0.len(), expanded.0);

    let final_vec = project_final(&expanded);
    println!("predicted concepts:");
    for (name, v) in PREDICTED.iter().zip(final_vec.predicted) {
        println!("  {name:<20} {v}");
    }
    println!("patient-provided:");
    for (name, v) in PROVIDED.iter().zip(final_vec.provided) {
        println!("  {name:<20} {v}");
    }
    println!("schema sha256 {}", schema_hash());
    Ok(())
}
