//! Tokenization, lemmatization and part-of-speech tagging.
//!
//! The bundled backend is a full-form lexicon per language: each surface
//! form maps to its most frequent `(lemma, tag)` reading. Words missing
//! from the lexicon keep their lowercased surface as lemma and get [`PosTag::X`].

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::normalize::{INTERJECTION_TOKEN, PIPELINE_TOKEN_PATTERN};
use crate::records::records;

/// Name of the bundled lexicon backend in configuration files.
pub const LEXICON_BACKEND: &str = "lexicon";

#[derive(Debug, thiserror::Error)]
pub enum NlpError {
    #[error("no morphological resources for language {0:?}")]
    UnsupportedLanguage(String),
    #[error("unknown analyzer backend {0:?}")]
    UnknownBackend(String),
    #[error("lexicon line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Universal part-of-speech tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosTag {
    Noun,
    Verb,
    Adj,
    Adv,
    Pron,
    Det,
    Adp,
    Conj,
    Num,
    Punct,
    Intj,
    Sym,
    X,
}

impl PosTag {
    pub const ALL: [PosTag; 13] = [
        PosTag::Noun,
        PosTag::Verb,
        PosTag::Adj,
        PosTag::Adv,
        PosTag::Pron,
        PosTag::Det,
        PosTag::Adp,
        PosTag::Conj,
        PosTag::Num,
        PosTag::Punct,
        PosTag::Intj,
        PosTag::Sym,
        PosTag::X,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Noun => "NOUN",
            PosTag::Verb => "VERB",
            PosTag::Adj => "ADJ",
            PosTag::Adv => "ADV",
            PosTag::Pron => "PRON",
            PosTag::Det => "DET",
            PosTag::Adp => "ADP",
            PosTag::Conj => "CONJ",
            PosTag::Num => "NUM",
            PosTag::Punct => "PUNCT",
            PosTag::Intj => "INTJ",
            PosTag::Sym => "SYM",
            PosTag::X => "X",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|t| t.as_str() == s)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyzedToken {
    pub surface: String,
    pub lemma: String,
    pub pos: PosTag,
    /// Character offsets into the analyzed text, end exclusive.
    pub span: (usize, usize),
}

/// Full-form lexicon: lowercased surface to its preferred reading.
#[derive(Debug, Clone, Default)]
pub struct MorphLexicon {
    entries: HashMap<String, (String, PosTag)>,
    rows: usize,
}

impl MorphLexicon {
    /// Parses `surface<TAB>lemma<TAB>tag[<TAB>freq]` lines. An ambiguous
    /// surface keeps the reading with the highest frequency; equal
    /// frequencies keep the first one listed.
    pub fn parse(text: &str) -> Result<Self, NlpError> {
        let mut best: HashMap<String, (String, PosTag, u64)> = HashMap::new();
        let mut rows = 0;
        for rec in records(text) {
            let (surface, lemma, tag, freq) = match rec.fields[..] {
                [s, l, t] => (s, l, t, 1),
                [s, l, t, f] => {
                    let f = f.trim().parse::<u64>().map_err(|_| NlpError::Parse {
                        line: rec.line,
                        message: format!("bad frequency {f:?}"),
                    })?;
                    (s, l, t, f)
                }
                _ => {
                    return Err(NlpError::Parse {
                        line: rec.line,
                        message: "expected surface<TAB>lemma<TAB>tag[<TAB>freq]".into(),
                    })
                }
            };
            let pos = PosTag::parse(tag.trim()).ok_or_else(|| NlpError::Parse {
                line: rec.line,
                message: format!("unknown tag {tag:?}"),
            })?;
            rows += 1;
            let key = surface.trim().to_lowercase();
            match best.get(&key) {
                Some(&(_, _, f)) if f >= freq => {}
                _ => {
                    best.insert(key, (lemma.trim().to_string(), pos, freq));
                }
            }
        }
        Ok(MorphLexicon {
            entries: best.into_iter().map(|(k, (l, p, _))| (k, (l, p))).collect(),
            rows,
        })
    }

    /// Number of lexicon rows, counting every reading of ambiguous forms.
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, surface: &str) -> Option<(&str, PosTag)> {
        self.entries
            .get(&surface.to_lowercase().replace('’', "'"))
            .map(|(l, p)| (l.as_str(), *p))
    }
}

/// A morphological analyzer for a set of languages.
pub trait Analyzer: Send + Sync {
    fn supports(&self, lang: &str) -> bool;

    /// Tokens of `text` in order. Surfaces are exact substrings, so the
    /// text between consecutive spans is everything that was skipped.
    fn analyze(&self, text: &str, lang: &str) -> Result<Vec<AnalyzedToken>, NlpError>;
}

fn pipeline_token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(PIPELINE_TOKEN_PATTERN).expect("static regex"))
}

const APOSTROPHES: [char; 2] = ['\'', '’'];

/// Lexicon-backed analyzer.
#[derive(Debug, Clone, Default)]
pub struct LexiconAnalyzer {
    lexicons: HashMap<String, MorphLexicon>,
}

impl LexiconAnalyzer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, lang: &str, lexicon: MorphLexicon) {
        self.lexicons.insert(lang.to_string(), lexicon);
    }

    pub fn lexicon(&self, lang: &str) -> Option<&MorphLexicon> {
        self.lexicons.get(lang)
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.lexicons.keys().map(String::as_str)
    }

    fn word_tokens(lex: &MorphLexicon, word: &str, char_start: usize, out: &mut Vec<AnalyzedToken>) {
        if lex.lookup(word).is_none() {
            // Elided clitics such as "n'" or "l'" are split off when the
            // lexicon knows them but not the whole form.
            if let Some(pos) = word.find(APOSTROPHES) {
                let apos_len = word[pos..].chars().next().map_or(1, char::len_utf8);
                let (head, tail) = word.split_at(pos + apos_len);
                if !tail.is_empty() && lex.lookup(head).is_some() {
                    let head_chars = head.chars().count();
                    out.push(Self::tag_word(lex, head, char_start));
                    Self::word_tokens(lex, tail, char_start + head_chars, out);
                    return;
                }
            }
        }
        out.push(Self::tag_word(lex, word, char_start));
    }

    fn tag_word(lex: &MorphLexicon, word: &str, char_start: usize) -> AnalyzedToken {
        let span = (char_start, char_start + word.chars().count());
        let (lemma, pos) = match lex.lookup(word) {
            Some((l, p)) => (l.to_string(), p),
            None => (word.to_lowercase(), fallback_tag(word)),
        };
        AnalyzedToken {
            surface: word.to_string(),
            lemma,
            pos,
            span,
        }
    }
}

fn fallback_tag(word: &str) -> PosTag {
    if word.chars().all(|c| c.is_numeric() || c == '.' || c == ',') && word.chars().any(char::is_numeric) {
        PosTag::Num
    } else if word.chars().any(char::is_alphanumeric) {
        PosTag::X
    } else if word.chars().all(is_punctuation) {
        PosTag::Punct
    } else {
        PosTag::Sym
    }
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() && !matches!(c, '#' | '$' | '%' | '&' | '*' | '+' | '<' | '=' | '>' | '@' | '^' | '|' | '~' | '`')
        || matches!(c, '¡' | '¿' | '«' | '»' | '“' | '”' | '‘' | '’' | '…' | '–' | '\u{2014}')
}

impl Analyzer for LexiconAnalyzer {
    fn supports(&self, lang: &str) -> bool {
        self.lexicons.contains_key(lang)
    }

    fn analyze(&self, text: &str, lang: &str) -> Result<Vec<AnalyzedToken>, NlpError> {
        let lex = self
            .lexicons
            .get(lang)
            .ok_or_else(|| NlpError::UnsupportedLanguage(lang.to_string()))?;
        let mut out = Vec::new();
        let mut byte_pos = 0;
        let mut char_pos = 0;
        let segment = |seg: &str, char_start: usize, out: &mut Vec<AnalyzedToken>| {
            let mut chars = char_start;
            for piece in seg.split_word_bounds() {
                let n = piece.chars().count();
                if !piece.chars().all(char::is_whitespace) {
                    Self::word_tokens(lex, piece, chars, out);
                }
                chars += n;
            }
        };
        for m in pipeline_token_re().find_iter(text) {
            let before = &text[byte_pos..m.start()];
            segment(before, char_pos, &mut out);
            char_pos += before.chars().count();
            let surface = m.as_str();
            let n = surface.chars().count();
            let pos = if surface == INTERJECTION_TOKEN {
                PosTag::Intj
            } else {
                PosTag::Sym
            };
            out.push(AnalyzedToken {
                surface: surface.to_string(),
                lemma: surface.to_string(),
                pos,
                span: (char_pos, char_pos + n),
            });
            char_pos += n;
            byte_pos = m.end();
        }
        segment(&text[byte_pos..], char_pos, &mut out);
        Ok(out)
    }
}

/// Builds the analyzer selected by the `nlp.backend` configuration key.
pub fn analyzer_for_backend(name: &str, lexicons: LexiconAnalyzer) -> Result<Box<dyn Analyzer>, NlpError> {
    match name {
        LEXICON_BACKEND => Ok(Box::new(lexicons)),
        other => Err(NlpError::UnknownBackend(other.to_string())),
    }
}

/// Rebuilds the analyzed text from token surfaces and the gaps between spans.
pub fn reconstruct(text: &str, tokens: &[AnalyzedToken]) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut pos = 0;
    for t in tokens {
        out.extend(&chars[pos..t.span.0]);
        out.push_str(&t.surface);
        pos = t.span.1;
    }
    out.extend(&chars[pos..]);
    out
}
