//! Regenerates the shipped language profiles from the bundled corpora.
//!
//! Usage: cargo run -p monitor-core --example build_profiles

use monitor_core::langid::build_profile;
use monitor_core::resources::langid::{corpus_split, LANGUAGES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("resources/langid/profiles");
    for lang in LANGUAGES {
        let split = corpus_split(lang)?;
        let profile = build_profile(&split.train, lang)?;
        std::fs::write(dir.join(format!("{lang}.tsv")), profile.to_tsv())?;
        println!("{lang}: {} n-grams", profile.len());
    }
    Ok(())
}
