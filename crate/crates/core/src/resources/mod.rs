//! Resources bundled with the crate: language-identification corpora and
//! profiles, normalization word lists and per-language lexicons.
//!
//! Every resource can also be loaded from a directory with the same
//! layout as the bundled `resources/` tree, which lets deployments swap in
//! larger lexicons without rebuilding.

pub mod langid;

use std::borrow::Cow;
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use crate::langid::{LangIdError, LanguageIdentifier, LanguageProfile};
use crate::nlp::{self, Analyzer, LexiconAnalyzer, MorphLexicon, NlpError};
use crate::normalize::{EmoticonRules, LanguageResources, NormalizationResources, NormalizeError};
use crate::polarity::{PolarityError, PolarityResources};

pub use self::langid::LANGUAGES;

#[derive(Debug, thiserror::Error)]
pub enum ResourceError {
    #[error("resource {0} not found")]
    NotFound(String),
    #[error("reading {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("in {path}")]
    Normalize {
        path: String,
        #[source]
        source: NormalizeError,
    },
    #[error("in {path}")]
    Nlp {
        path: String,
        #[source]
        source: NlpError,
    },
    #[error("in {path}")]
    Polarity {
        path: String,
        #[source]
        source: PolarityError,
    },
    #[error(transparent)]
    LangId(#[from] LangIdError),
}

macro_rules! bundle {
    ($($path:literal),* $(,)?) => {
        &[$(($path, include_str!(concat!("../../resources/", $path)))),*]
    };
}

/// Every bundled file, keyed by its path relative to `resources/`.
pub static BUNDLED: &[(&str, &str)] = bundle![
    "langid/profiles/en.tsv",
    "langid/profiles/es.tsv",
    "langid/profiles/eu.tsv",
    "langid/profiles/fr.tsv",
    "normalize/emoticons.tsv",
    "normalize/en/interjections.txt",
    "normalize/en/oov.tsv",
    "normalize/en/stopwords.txt",
    "normalize/en/wordforms.txt",
    "normalize/es/interjections.txt",
    "normalize/es/oov.tsv",
    "normalize/es/stopwords.txt",
    "normalize/es/wordforms.txt",
    "normalize/eu/interjections.txt",
    "normalize/eu/oov.tsv",
    "normalize/eu/stopwords.txt",
    "normalize/eu/wordforms.txt",
    "normalize/fr/interjections.txt",
    "normalize/fr/oov.tsv",
    "normalize/fr/stopwords.txt",
    "normalize/fr/wordforms.txt",
    "nlp/en.tsv",
    "nlp/es.tsv",
    "nlp/eu.tsv",
    "nlp/fr.tsv",
    "polarity/en/lexicon.tsv",
    "polarity/en/locutions.tsv",
    "polarity/en/negation.txt",
    "polarity/es/lexicon.tsv",
    "polarity/es/locutions.tsv",
    "polarity/es/negation.txt",
    "polarity/eu/lexicon.tsv",
    "polarity/eu/locutions.tsv",
    "polarity/eu/negation.txt",
    "polarity/fr/lexicon.tsv",
    "polarity/fr/locutions.tsv",
    "polarity/fr/negation.txt",
];

/// Entry counts of the bundled files, `path<TAB>entries`.
pub const MANIFEST: &str = include_str!("../../resources/manifest.tsv");

/// Where resource files come from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ResourceSource {
    #[default]
    Bundled,
    Dir(PathBuf),
}

impl ResourceSource {
    pub fn read(&self, rel: &str) -> Result<Cow<'static, str>, ResourceError> {
        match self {
            ResourceSource::Bundled => BUNDLED
                .iter()
                .find(|(p, _)| *p == rel)
                .map(|(_, text)| Cow::Borrowed(*text))
                .ok_or_else(|| ResourceError::NotFound(rel.to_string())),
            ResourceSource::Dir(dir) => {
                let path = dir.join(rel);
                std::fs::read_to_string(&path)
                    .map(Cow::Owned)
                    .map_err(|source| ResourceError::Io { path, source })
            }
        }
    }
}

/// Everything the per-message pipeline needs besides the taxonomy.
pub struct Resources {
    pub normalization: NormalizationResources,
    pub analyzer: Arc<dyn Analyzer>,
    pub polarity: HashMap<String, PolarityResources>,
    pub identifier: LanguageIdentifier,
}

impl std::fmt::Debug for Resources {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Resources")
            .field("polarity_languages", &self.polarity.keys().collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

pub fn load_language_normalization(src: &ResourceSource, lang: &str) -> Result<LanguageResources, ResourceError> {
    let read = |name: &str| src.read(&format!("normalize/{lang}/{name}"));
    LanguageResources::parse(
        lang,
        &read("wordforms.txt")?,
        &read("oov.tsv")?,
        &read("interjections.txt")?,
        &read("stopwords.txt")?,
    )
    .map_err(|source| ResourceError::Normalize {
        path: format!("normalize/{lang}"),
        source,
    })
}

pub fn load_normalization(src: &ResourceSource, langs: &[&str]) -> Result<NormalizationResources, ResourceError> {
    let path = "normalize/emoticons.tsv";
    let rules = EmoticonRules::parse(&src.read(path)?).map_err(|source| ResourceError::Normalize {
        path: path.into(),
        source,
    })?;
    let mut res = NormalizationResources::new(rules);
    for lang in langs {
        let lr = load_language_normalization(src, lang)?;
        res.insert_language(lang, lr).map_err(|source| ResourceError::Normalize {
            path: format!("normalize/{lang}"),
            source,
        })?;
    }
    Ok(res)
}

pub fn load_morph_lexicon(src: &ResourceSource, lang: &str) -> Result<MorphLexicon, ResourceError> {
    let path = format!("nlp/{lang}.tsv");
    MorphLexicon::parse(&src.read(&path)?).map_err(|source| ResourceError::Nlp { path, source })
}

pub fn load_polarity(
    src: &ResourceSource,
    lang: &str,
    normalization: &NormalizationResources,
) -> Result<PolarityResources, ResourceError> {
    let read = |name: &str| src.read(&format!("polarity/{lang}/{name}"));
    PolarityResources::parse(
        lang,
        &read("lexicon.tsv")?,
        &read("negation.txt")?,
        &read("locutions.tsv")?,
        normalization.language(lang).stopwords.clone(),
    )
    .map_err(|source| ResourceError::Polarity {
        path: format!("polarity/{lang}"),
        source,
    })
}

pub fn load_identifier(src: &ResourceSource, langs: &[&str]) -> Result<LanguageIdentifier, ResourceError> {
    let profiles = langs
        .iter()
        .map(|lang| {
            let text = src.read(&format!("langid/profiles/{lang}.tsv"))?;
            Ok(LanguageProfile::from_tsv(lang, &text)?)
        })
        .collect::<Result<Vec<_>, ResourceError>>()?;
    Ok(LanguageIdentifier::new(profiles))
}

impl Resources {
    /// Loads all resources for `langs` with the given analyzer backend.
    pub fn load(src: &ResourceSource, langs: &[&str], backend: &str) -> Result<Self, ResourceError> {
        let normalization = load_normalization(src, langs)?;
        let mut lexicons = LexiconAnalyzer::new();
        let mut polarity = HashMap::new();
        for lang in langs {
            lexicons.insert(lang, load_morph_lexicon(src, lang)?);
            polarity.insert(lang.to_string(), load_polarity(src, lang, &normalization)?);
        }
        let analyzer = nlp::analyzer_for_backend(backend, lexicons).map_err(|source| ResourceError::Nlp {
            path: "nlp".into(),
            source,
        })?;
        Ok(Resources {
            normalization,
            analyzer: Arc::from(analyzer),
            polarity,
            identifier: load_identifier(src, langs)?,
        })
    }

    /// The bundled resources for all four languages, loaded once.
    pub fn bundled() -> Arc<Resources> {
        static CELL: OnceLock<Arc<Resources>> = OnceLock::new();
        CELL.get_or_init(|| {
            Arc::new(
                Resources::load(&ResourceSource::Bundled, &LANGUAGES, nlp::LEXICON_BACKEND)
                    .expect("bundled resources are valid"),
            )
        })
        .clone()
    }

    pub fn from_dir(dir: &Path) -> Result<Self, ResourceError> {
        Resources::load(&ResourceSource::Dir(dir.to_path_buf()), &LANGUAGES, nlp::LEXICON_BACKEND)
    }

    pub fn polarity(&self, lang: &str) -> Option<&PolarityResources> {
        self.polarity.get(lang)
    }
}

/// Entry counts of the loaded form of each bundled file, for comparison
/// with [`MANIFEST`].
pub fn entry_counts(src: &ResourceSource) -> Result<Vec<(String, usize)>, ResourceError> {
    let mut out = Vec::new();
    for lang in LANGUAGES {
        let p = load_identifier(src, &[lang])?;
        out.push((
            format!("langid/profiles/{lang}.tsv"),
            p.profile(lang).map_or(0, LanguageProfile::len),
        ));
    }
    let norm = load_normalization(src, &LANGUAGES)?;
    out.push(("normalize/emoticons.tsv".into(), norm.emoticons().len()));
    for lang in LANGUAGES {
        let l = norm.language(lang);
        out.push((format!("normalize/{lang}/interjections.txt"), l.interjections.len()));
        out.push((format!("normalize/{lang}/oov.tsv"), l.oov.len()));
        out.push((format!("normalize/{lang}/stopwords.txt"), l.stopwords.len()));
        out.push((format!("normalize/{lang}/wordforms.txt"), l.wordforms.len()));
    }
    for lang in LANGUAGES {
        out.push((format!("nlp/{lang}.tsv"), load_morph_lexicon(src, lang)?.rows()));
    }
    for lang in LANGUAGES {
        let p = load_polarity(src, lang, &norm)?;
        out.push((format!("polarity/{lang}/lexicon.tsv"), p.lexicon.len()));
        out.push((format!("polarity/{lang}/locutions.tsv"), p.locutions.len()));
        out.push((format!("polarity/{lang}/negation.txt"), p.negation_cues.len()));
    }
    out.sort();
    Ok(out)
}

/// Parses [`MANIFEST`]-formatted text.
pub fn parse_manifest(text: &str) -> Vec<(String, usize)> {
    let mut out: Vec<(String, usize)> = crate::records::records(text)
        .filter_map(|r| match r.fields[..] {
            [path, n] => n.trim().parse().ok().map(|n| (path.to_string(), n)),
            _ => None,
        })
        .collect();
    out.sort();
    out
}
