//! Language identification with rank-ordered character n-gram profiles.
//!
//! Each language is represented by its most frequent character n-grams
//! (n = 1..=4, words padded with `_`) ranked by frequency. A text is scored
//! against a profile by the out-of-place distance between the text's own
//! n-gram ranking and the profile ranking; n-grams absent from the profile
//! cost the maximum penalty.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use crate::records::records;
use crate::SourceKind;

pub const DEFAULT_TOP_K: usize = 3000;
pub const MIN_CORPUS_CHARS: usize = 10_000;
pub const MAX_NGRAM: usize = 4;
const PAD: char = '_';

#[derive(Debug, thiserror::Error)]
pub enum LangIdError {
    #[error("corpus for {lang} has {chars} characters, at least {min} required")]
    InsufficientCorpus { lang: String, chars: usize, min: usize },
    #[error("profile {lang} line {line}: {message}")]
    BadProfile { lang: String, line: usize, message: String },
    #[error("no profile loaded for {0}")]
    UnknownLanguage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanguageProfile {
    lang: String,
    ranks: HashMap<String, u32>,
}

impl LanguageProfile {
    pub fn lang(&self) -> &str {
        &self.lang
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn rank(&self, ngram: &str) -> Option<u32> {
        self.ranks.get(ngram).copied()
    }

    /// N-grams in rank order.
    pub fn ranked(&self) -> Vec<(&str, u32)> {
        let mut v: Vec<(&str, u32)> = self.ranks.iter().map(|(g, &r)| (g.as_str(), r)).collect();
        v.sort_by_key(|&(_, r)| r);
        v
    }

    /// Serializes as `ngram<TAB>rank` lines in rank order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (g, r) in self.ranked() {
            out.push_str(g);
            out.push('\t');
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }

    /// Parses a profile file and checks that ranks form a permutation of 1..=K.
    pub fn from_tsv(lang: &str, text: &str) -> Result<Self, LangIdError> {
        let bad = |line: usize, message: String| LangIdError::BadProfile {
            lang: lang.to_string(),
            line,
            message,
        };
        let mut ranks = HashMap::new();
        for rec in records(text) {
            if rec.fields.len() != 2 {
                return Err(bad(rec.line, "expected ngram<TAB>rank".into()));
            }
            let rank: u32 = rec.fields[1]
                .trim()
                .parse()
                .map_err(|_| bad(rec.line, format!("invalid rank {:?}", rec.fields[1])))?;
            if ranks.insert(rec.fields[0].to_string(), rank).is_some() {
                return Err(bad(rec.line, format!("duplicate n-gram {:?}", rec.fields[0])));
            }
        }
        let mut seen = vec![false; ranks.len()];
        for &r in ranks.values() {
            let idx = (r as usize).wrapping_sub(1);
            if idx >= seen.len() || seen[idx] {
                return Err(bad(0, "ranks are not a permutation of 1..K".into()));
            }
            seen[idx] = true;
        }
        Ok(LanguageProfile {
            lang: lang.to_string(),
            ranks,
        })
    }

    pub fn load(lang: &str, path: &Path) -> Result<Self, LangIdError> {
        Self::from_tsv(lang, &std::fs::read_to_string(path)?)
    }
}

/// Counts padded character n-grams of every alphabetic word in `text`.
pub fn ngram_counts(text: &str) -> HashMap<String, u64> {
    let mut counts = HashMap::new();
    for word in text
        .split(|c: char| !c.is_alphabetic())
        .filter(|w| !w.is_empty())
    {
        let padded: Vec<char> = std::iter::once(PAD)
            .chain(word.chars().flat_map(char::to_lowercase))
            .chain(std::iter::once(PAD))
            .collect();
        for n in 1..=MAX_NGRAM {
            for window in padded.windows(n) {
                if window.iter().all(|&c| c == PAD) {
                    continue;
                }
                let gram: String = window.iter().collect();
                *counts.entry(gram).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Sorts n-grams by descending count, ties by the n-gram itself.
fn rank_counts(counts: HashMap<String, u64>, top_k: usize) -> Vec<(String, u32)> {
    let mut v: Vec<(String, u64)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.truncate(top_k);
    v.into_iter()
        .enumerate()
        .map(|(i, (g, _))| (g, i as u32 + 1))
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct ProfileBuilder {
    pub top_k: usize,
    pub min_chars: usize,
}

impl Default for ProfileBuilder {
    fn default() -> Self {
        ProfileBuilder {
            top_k: DEFAULT_TOP_K,
            min_chars: MIN_CORPUS_CHARS,
        }
    }
}

impl ProfileBuilder {
    pub fn build(&self, corpus: &str, lang: &str) -> Result<LanguageProfile, LangIdError> {
        let chars = corpus.chars().count();
        if chars < self.min_chars {
            return Err(LangIdError::InsufficientCorpus {
                lang: lang.to_string(),
                chars,
                min: self.min_chars,
            });
        }
        let ranks = rank_counts(ngram_counts(corpus), self.top_k).into_iter().collect();
        Ok(LanguageProfile {
            lang: lang.to_string(),
            ranks,
        })
    }
}

/// Builds a profile with the default top-K and minimum corpus size.
pub fn build_profile(corpus: &str, lang: &str) -> Result<LanguageProfile, LangIdError> {
    ProfileBuilder::default().build(corpus, lang)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub lang: String,
    /// Similarity of the winning profile, in `[0, 1]`.
    pub confidence: f64,
}

fn social_noise() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b(?:https?://|www\.)\S+|@\w+|\bRT\b").expect("static regex")
    })
}

/// Removes user mentions, URLs, retweet markers and hashtag marks.
pub fn strip_social(text: &str) -> String {
    social_noise().replace_all(text, " ").replace('#', " ")
}

#[derive(Debug, Clone)]
pub struct LanguageIdentifier {
    profiles: BTreeMap<String, LanguageProfile>,
    /// Minimum number of non-whitespace characters left after stripping.
    pub min_length: usize,
    /// Minimum confidence gap between the best and second-best candidate.
    pub min_margin: f64,
}

impl LanguageIdentifier {
    pub fn new(profiles: impl IntoIterator<Item = LanguageProfile>) -> Self {
        LanguageIdentifier {
            profiles: profiles.into_iter().map(|p| (p.lang.clone(), p)).collect(),
            min_length: 10,
            min_margin: 0.05,
        }
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.profiles.keys().map(String::as_str)
    }

    pub fn profile(&self, lang: &str) -> Option<&LanguageProfile> {
        self.profiles.get(lang)
    }

    /// Similarity between a ranked text profile and a language profile.
    fn similarity(text_ranks: &[(String, u32)], profile: &LanguageProfile, k: u32) -> f64 {
        if text_ranks.is_empty() {
            return 0.0;
        }
        let distance: u64 = text_ranks
            .iter()
            .map(|(g, r)| match profile.rank(g) {
                Some(pr) => u64::from(pr.abs_diff(*r).min(k)),
                None => u64::from(k),
            })
            .sum();
        1.0 - distance as f64 / (text_ranks.len() as f64 * f64::from(k))
    }

    /// Scores `text` against every candidate; highest similarity first.
    pub fn scores(&self, text: &str, candidates: &[&str]) -> Vec<(String, f64)> {
        let text_ranks = rank_counts(ngram_counts(text), usize::MAX);
        let k = self
            .profiles
            .values()
            .map(|p| p.len() as u32)
            .max()
            .unwrap_or(1)
            .max(1);
        let mut out: Vec<(String, f64)> = candidates
            .iter()
            .filter_map(|c| self.profiles.get(*c))
            .map(|p| (p.lang.clone(), Self::similarity(&text_ranks, p, k)))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }

    /// Identifies the language of `text` among `candidates`, or `None` when
    /// the text is too short or the decision margin too small.
    pub fn identify(&self, text: &str, candidates: &[&str], kind: SourceKind) -> Option<Detection> {
        let cleaned;
        let text = match kind {
            SourceKind::Social => {
                cleaned = strip_social(text);
                cleaned.as_str()
            }
            SourceKind::Feed => text,
        };
        let effective = text.chars().filter(|c| !c.is_whitespace()).count();
        if effective < self.min_length {
            return None;
        }
        let scores = self.scores(text, candidates);
        let (best, conf) = scores.first()?;
        let runner_up = scores.get(1).map(|s| s.1).unwrap_or(0.0);
        if conf - runner_up < self.min_margin {
            return None;
        }
        Some(Detection {
            lang: best.clone(),
            confidence: *conf,
        })
    }

    /// Identifies among every loaded profile.
    pub fn identify_any(&self, text: &str, kind: SourceKind) -> Option<Detection> {
        let all: Vec<&str> = self.languages().collect();
        self.identify(text, &all, kind)
    }
}
