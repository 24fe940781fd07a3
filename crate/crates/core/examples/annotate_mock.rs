//! Annotating a synthetic corpus with a scripted LLM and scoring it under
//! both slot conventions.

use vdx::annotation::{
    annotate_corpus, default_examples, score_annotations, synthetic_corpus, AnamnesisDoc, AnnotateOptions,
    AnnotationRecord, Fault, MockLlm,
};

fn main() -> vdx::Result<()> {
    let corpus = synthetic_corpus(69, 7);
    let docs: Vec<AnamnesisDoc> = corpus.iter().map(|(d, _)| d.clone()).collect();
    let gold: Vec<AnnotationRecord> = corpus
        .iter()
        .map(|(d, v)| AnnotationRecord {
            id: d.id.clone(),
            values: v.clone(),
            raw_response: String::new(),
            prompt_sha256: String::new(),
            error: None,
        })
        .collect();

    let mock = MockLlm::echo_gold(corpus.iter().map(|(d, v)| (d, v)))
        .with_fault(
            "doc003",
            Fault::WrongValue {
                concept: "dysphonia".into(),
                value: "severe".into(),
            },
        )
        .with_fault("doc010", Fault::DropOnce { concept: "strain".into() })
        .with_fault("doc020", Fault::DropAlways { concept: "gender".into() });

    let records = annotate_corpus(&mock, &docs, &default_examples(), AnnotateOptions::default())?;
    println!("{} requests for {} documents", mock.calls(), docs.len());
    for r in records.iter().filter(|r| r.error.is_some()) {
        println!("{}: {}", r.id, r.error.as_deref().unwrap_or_default());
    }
    let score = score_annotations(&records, &gold)?;
    for (name, s) in [("14 categorical slots", &score.raw), ("20 one-hot slots", &score.expanded)] {
        println!(
            "{name}: accuracy {:.4}, macro F1 {:.4}, {} errors over {} slots",
            s.concept_accuracy, s.macro_f1, s.total_errors, s.slots
        );
    }
    Ok(())
}
