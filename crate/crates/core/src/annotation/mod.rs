//! Concept extraction from anamnesis text with a few-shot prompted LLM.
//!
//! [`build_prompt`] assembles the instructions, the bundled examples and the
//! target document; a [`ChatClient`] returns free text; [`parse_response`]
//! turns it into a [`RawAnnotation`](crate::concepts::RawAnnotation) or a
//! list of issues, which [`annotate_corpus`] sends back once as a repair
//! request. [`score_annotations`] compares the result against gold records.

mod client;
mod corpus;
mod parse;
mod prompt;
mod score;

pub use client::{ChatClient, Fault, HttpChatClient, LlmClientConfig, MockLlm};
pub use corpus::{
    annotate_corpus, load_docs, load_records, read_records, save_records, synthetic_corpus,
    AnnotateOptions, AnnotationRecord,
};
pub use parse::{parse_response, ParseFailure, ParseIssue};
pub use prompt::{
    build_prompt, default_examples, instruction_block, load_examples, render_values,
    AnamnesisDoc, ChatMessage, FewShotExample, Prompt, Role, EXAMPLE_CLOSE, EXAMPLE_OPEN,
};
pub use score::{score_annotations, AnnotationMetrics, ConventionScore};
