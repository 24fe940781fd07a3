//! The few-shot prompt sent for one anamnesis, and parsing a reply.

use vdx::annotation::{build_prompt, default_examples, parse_response, AnamnesisDoc};

fn main() -> vdx::Result<()> {
    let doc = AnamnesisDoc::new(
        "demo",
        "Female, 41, singer. Smoker. Hoarse voice for three months, rough and strained. \
         Hyperemic mucosa. Moderate dysphonia.",
    )?;
    let prompt = build_prompt(&doc, &default_examples())?;
    println!("{}", prompt.render());
    println!("prompt sha256 {}", prompt.sha256());

    let reply = "smoking: yes\nprofessional_voice_use: yes\ndysphonia: moderate\nmucous: hyperemic\n\
                 strain: yes\nroughness: yes\ngender: female";
    match parse_response(reply) {
        Ok(values) => println!("parsed {values:?}"),
        Err(failure) => println!("incomplete reply, repair request:\n{}", failure.repair_instruction()),
    }
    Ok(())
}
