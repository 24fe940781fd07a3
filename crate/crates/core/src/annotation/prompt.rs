use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::concepts::{RawAnnotation, CANDIDATES};
use crate::{Error, Result};

/// A clinical free-text document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnamnesisDoc {
    pub id: String,
    pub text: String,
}

impl AnamnesisDoc {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let doc = Self {
            id: id.into(),
            text: text.into(),
        };
        doc.validate()?;
        Ok(doc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::Validation(format!("document `{}` is empty", self.id)));
        }
        Ok(())
    }
}

/// An input document with its expected annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub text: String,
    pub values: RawAnnotation,
}

impl FewShotExample {
    /// Requires every candidate with an admissible value.
    pub fn validated(&self) -> Result<FewShotExample> {
        let values = self.values.validated()?;
        if let Some(c) = CANDIDATES.iter().find(|c| values.get(c.name).is_none()) {
            return Err(Error::Annotation {
                concept: c.name.into(),
                reason: "missing from few-shot example".into(),
            });
        }
        Ok(FewShotExample {
            text: self.text.clone(),
            values,
        })
    }
}

/// Parses a JSON array of few-shot examples.
pub fn load_examples(text: &str) -> Result<Vec<FewShotExample>> {
    let raw: Vec<FewShotExample> = serde_json::from_str(text)?;
    raw.iter().map(FewShotExample::validated).collect()
}

/// The bundled four-example set.
pub fn default_examples() -> Vec<FewShotExample> {
    load_examples(include_str!("../../fixtures/few_shot.json")).expect("bundled examples are valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

/// A chat transcript ready to send.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub messages: Vec<ChatMessage>,
}

impl Prompt {
    /// Plain-text rendering, one `[role]` header per message.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            out.push_str(&format!("[{role}]\n{}\n", m.content));
        }
        out
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.render().as_bytes()))
    }
}

pub const EXAMPLE_OPEN: &str = "<example>";
pub const EXAMPLE_CLOSE: &str = "</example>";

/// Role, task, concept list and output contract. Each candidate name appears
/// once.
pub fn instruction_block() -> String {
    let mut s = String::from(
        "You are a medical assistant specialised in phoniatrics and speech therapy.\n\
         You will read the anamnesis of a patient, written by the doctor who examined them.\n\
         Your task is to fill in the value of each concept below using only what the \
         anamnesis states or clearly implies. When a finding is not mentioned, use the \
         negative value (no, none, or absent).\n\n\
         Concepts and admissible values:\n",
    );
    for c in &CANDIDATES {
        let values: Vec<&str> = c.values.iter().map(|(v, _)| *v).collect();
        s.push_str(&format!("- {}: {}\n", c.name, values.join(" | ")));
    }
    s.push_str(
        "\nOutput format: one line per concept, in the order listed, written as \
         `concept: value` with the concept name exactly as above and one admissible value. \
         Write nothing else.\n",
    );
    s
}

/// Canonical `concept: value` lines in candidate order.
pub fn render_values(values: &RawAnnotation) -> String {
    let mut s = String::new();
    for c in &CANDIDATES {
        if let Some(v) = values.get(c.name) {
            s.push_str(&format!("{}: {}\n", c.name, v));
        }
    }
    s
}

/// Builds the few-shot prompt for `doc`. Output is byte-stable for equal
/// inputs.
pub fn build_prompt(doc: &AnamnesisDoc, examples: &[FewShotExample]) -> Result<Prompt> {
    if examples.is_empty() {
        return Err(Error::Config("at least one few-shot example is required".into()));
    }
    doc.validate()?;
    let mut system = instruction_block();
    system.push_str("\nAnnotated examples follow.\n");
    for ex in examples {
        let ex = ex.validated()?;
        system.push_str(&format!(
            "\n{EXAMPLE_OPEN}\nAnamnesis:\n{}\n\nAnnotation:\n{}{EXAMPLE_CLOSE}\n",
            ex.text.trim(),
            render_values(&ex.values)
        ));
    }
    Ok(Prompt {
        messages: vec![
            ChatMessage::new(Role::System, system),
            ChatMessage::new(Role::User, format!("Anamnesis:\n{}", doc.text.trim())),
        ],
    })
}
