//! Bundled sample corpora and the profiles built from their training part.

use crate::langid::{LangIdError, LanguageIdentifier, LanguageProfile};

/// Number of trailing corpus lines reserved for evaluation.
pub const HELD_OUT_LINES: usize = 200;

pub const LANGUAGES: [&str; 4] = ["eu", "es", "en", "fr"];

fn corpus(lang: &str) -> Option<&'static str> {
    Some(match lang {
        "eu" => include_str!("../../resources/langid/eu.txt"),
        "es" => include_str!("../../resources/langid/es.txt"),
        "en" => include_str!("../../resources/langid/en.txt"),
        "fr" => include_str!("../../resources/langid/fr.txt"),
        _ => return None,
    })
}

fn profile_text(lang: &str) -> Option<&'static str> {
    Some(match lang {
        "eu" => include_str!("../../resources/langid/profiles/eu.tsv"),
        "es" => include_str!("../../resources/langid/profiles/es.tsv"),
        "en" => include_str!("../../resources/langid/profiles/en.tsv"),
        "fr" => include_str!("../../resources/langid/profiles/fr.tsv"),
        _ => return None,
    })
}

#[derive(Debug, Clone)]
pub struct CorpusSplit {
    /// Training text, one sentence per line.
    pub train: String,
    pub held_out: Vec<&'static str>,
}

/// Splits a bundled corpus into its training part and the last
/// [`HELD_OUT_LINES`] sentences.
pub fn corpus_split(lang: &str) -> Result<CorpusSplit, LangIdError> {
    let text = corpus(lang).ok_or_else(|| LangIdError::UnknownLanguage(lang.to_string()))?;
    let lines: Vec<&'static str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let cut = lines.len().saturating_sub(HELD_OUT_LINES);
    let mut train = lines[..cut].join("\n");
    train.push('\n');
    Ok(CorpusSplit {
        train,
        held_out: lines[cut..].to_vec(),
    })
}

/// The shipped profile for `lang`.
pub fn profile(lang: &str) -> Result<LanguageProfile, LangIdError> {
    let text = profile_text(lang).ok_or_else(|| LangIdError::UnknownLanguage(lang.to_string()))?;
    LanguageProfile::from_tsv(lang, text)
}

/// An identifier over all four shipped profiles with default thresholds.
pub fn identifier() -> Result<LanguageIdentifier, LangIdError> {
    let profiles = LANGUAGES.iter().map(|l| profile(l)).collect::<Result<Vec<_>, _>>()?;
    Ok(LanguageIdentifier::new(profiles))
}
