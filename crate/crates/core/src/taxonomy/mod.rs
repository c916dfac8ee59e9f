//! Keyword taxonomy: compiling user keyword hierarchies into a matcher and
//! deciding which texts become mentions.
//!
//! Keywords are regular expressions attached to a category path. A keyword
//! can be restricted to one language, can be case sensitive, and can require
//! that an *anchor* term occurs somewhere in the same message. Pure anchors
//! (anchor terms that are not keywords themselves) carry the reserved
//! category [`ANCHOR_CATEGORY`] and never produce matches of their own.

mod file;
mod sentences;

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, RwLock};

use regex::{Regex, RegexBuilder, RegexSet, RegexSetBuilder};
use serde::{Deserialize, Serialize};

pub use file::{format_taxonomy, keyword_id, parse_taxonomy};
pub use sentences::SentenceSplitter;

/// Reserved category path for anchor terms that are not keywords.
pub const ANCHOR_CATEGORY: &str = "_anchor";
/// Language wildcard.
pub const ANY_LANG: &str = "*";

#[derive(Debug, thiserror::Error)]
pub enum TaxonomyError {
    #[error("taxonomy has no keywords")]
    Empty,
    #[error("keyword {id}: invalid pattern: {source}")]
    InvalidPattern {
        id: String,
        #[source]
        source: Box<regex::Error>,
    },
    #[error("duplicate keyword id {0}")]
    DuplicateId(String),
    #[error("keyword {0}: empty category path")]
    EmptyCategory(String),
    #[error("taxonomy line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordSpec {
    pub id: String,
    pub pattern: String,
    /// Category names from root to leaf.
    pub category_path: Vec<String>,
    /// Language code, or [`ANY_LANG`].
    pub language: String,
    pub case_sensitive: bool,
    pub is_anchor: bool,
    pub needs_anchor: bool,
}

impl KeywordSpec {
    /// Convenience constructor for a case-insensitive, any-language keyword.
    pub fn new(id: impl Into<String>, pattern: impl Into<String>, category_path: &[&str]) -> Self {
        KeywordSpec {
            id: id.into(),
            pattern: pattern.into(),
            category_path: category_path.iter().map(|s| s.to_string()).collect(),
            language: ANY_LANG.to_string(),
            case_sensitive: false,
            is_anchor: false,
            needs_anchor: false,
        }
    }

    pub fn lang(mut self, lang: &str) -> Self {
        self.language = lang.to_string();
        self
    }

    pub fn case_sensitive(mut self) -> Self {
        self.case_sensitive = true;
        self
    }

    pub fn anchor(mut self) -> Self {
        self.is_anchor = true;
        self
    }

    pub fn needs_anchor(mut self) -> Self {
        self.needs_anchor = true;
        self
    }

    /// Anchor term that is not a keyword.
    pub fn is_pure_anchor(&self) -> bool {
        self.is_anchor && self.category_path.len() == 1 && self.category_path[0] == ANCHOR_CATEGORY
    }

    pub fn category_string(&self) -> String {
        self.category_path.join("/")
    }

    fn applies_to(&self, lang: &str) -> bool {
        self.language == ANY_LANG || self.language == lang
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatchResult {
    pub keyword_id: String,
    pub category_path: Vec<String>,
    /// Character (not byte) offsets into the matched unit, end exclusive.
    pub span: (usize, usize),
    pub matched_surface: String,
}

impl MatchResult {
    /// Leaf category, the entity a match refers to.
    pub fn entity(&self) -> &str {
        self.category_path.last().map(String::as_str).unwrap_or("")
    }
}

/// A sentence of an article that survived matching.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArticleUnit {
    pub text: String,
    /// Character offsets of the sentence within the article.
    pub span: (usize, usize),
    pub matches: Vec<MatchResult>,
}

struct CompiledKeyword {
    spec: KeywordSpec,
    regex: Regex,
}

/// Immutable compiled form of a taxonomy.
pub struct CompiledMatcher {
    version: u64,
    keywords: Vec<CompiledKeyword>,
    /// Prefilter over every keyword pattern, same indices as `keywords`.
    set: RegexSet,
    anchors: Vec<usize>,
    /// Keyword indices (not pure anchors) per language; wildcard under `*`.
    by_lang: HashMap<String, Vec<usize>>,
}

impl std::fmt::Debug for CompiledMatcher {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompiledMatcher")
            .field("version", &self.version)
            .field("keywords", &self.keywords.len())
            .field("anchors", &self.anchors.len())
            .finish()
    }
}

fn build_regex(spec: &KeywordSpec) -> Result<Regex, TaxonomyError> {
    RegexBuilder::new(&spec.pattern)
        .case_insensitive(!spec.case_sensitive)
        .build()
        .map_err(|e| TaxonomyError::InvalidPattern {
            id: spec.id.clone(),
            source: Box::new(e),
        })
}

/// Compiles a taxonomy into a matcher with version 1.
pub fn compile_taxonomy(specs: &[KeywordSpec]) -> Result<CompiledMatcher, TaxonomyError> {
    CompiledMatcher::compile(specs, 1)
}

impl CompiledMatcher {
    pub fn compile(specs: &[KeywordSpec], version: u64) -> Result<Self, TaxonomyError> {
        if specs.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        let mut seen = HashSet::new();
        let mut keywords = Vec::with_capacity(specs.len());
        for spec in specs {
            if !seen.insert(spec.id.as_str()) {
                return Err(TaxonomyError::DuplicateId(spec.id.clone()));
            }
            if spec.category_path.is_empty() || spec.category_path.iter().any(|c| c.is_empty()) {
                return Err(TaxonomyError::EmptyCategory(spec.id.clone()));
            }
            let regex = build_regex(spec)?;
            keywords.push(CompiledKeyword {
                spec: spec.clone(),
                regex,
            });
        }
        let set = RegexSetBuilder::new(keywords.iter().map(|k| {
            if k.spec.case_sensitive {
                k.spec.pattern.clone()
            } else {
                format!("(?i:{})", k.spec.pattern)
            }
        }))
        .size_limit(64 << 20)
        .build()
        .map_err(|e| TaxonomyError::InvalidPattern {
            id: "<set>".into(),
            source: Box::new(e),
        })?;

        let mut anchors = Vec::new();
        let mut by_lang: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, k) in keywords.iter().enumerate() {
            if k.spec.is_anchor {
                anchors.push(i);
            }
            if !k.spec.is_pure_anchor() {
                by_lang.entry(k.spec.language.clone()).or_default().push(i);
            }
        }
        Ok(CompiledMatcher {
            version,
            keywords,
            set,
            anchors,
            by_lang,
        })
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Number of keywords that can produce matches (pure anchors excluded).
    pub fn keyword_count(&self) -> usize {
        self.by_lang.values().map(Vec::len).sum()
    }

    pub fn anchor_count(&self) -> usize {
        self.anchors.len()
    }

    pub fn specs(&self) -> impl Iterator<Item = &KeywordSpec> {
        self.keywords.iter().map(|k| &k.spec)
    }

    fn has_anchor(&self, lang: &str, hits: &regex::SetMatches) -> bool {
        self.anchors.iter().any(|&i| {
            let kw = &self.keywords[i];
            kw.spec.applies_to(lang) && hits.matched(i)
        })
    }

    /// Matches one message unit. Anchors are looked up in the same text.
    pub fn match_unit(&self, text: &str, lang: &str) -> Vec<MatchResult> {
        let hits = self.set.matches(text);
        if !hits.matched_any() {
            return Vec::new();
        }
        let anchored = self.has_anchor(lang, &hits);
        self.collect_matches(text, lang, &hits, anchored)
    }

    fn candidate_indices<'a>(&'a self, lang: &'a str) -> impl Iterator<Item = usize> + 'a {
        let own = if lang == ANY_LANG {
            None
        } else {
            self.by_lang.get(lang)
        };
        self.by_lang
            .get(ANY_LANG)
            .into_iter()
            .chain(own)
            .flat_map(|v| v.iter().copied())
    }

    fn collect_matches(
        &self,
        unit: &str,
        lang: &str,
        hits: &regex::SetMatches,
        anchored: bool,
    ) -> Vec<MatchResult> {
        let mut out = Vec::new();
        let mut indices: Vec<usize> = self
            .candidate_indices(lang)
            .filter(|&i| hits.matched(i))
            .collect();
        indices.sort_unstable();
        for i in indices {
            let kw = &self.keywords[i];
            if kw.spec.needs_anchor && !anchored {
                continue;
            }
            for m in kw.regex.find_iter(unit) {
                if m.start() == m.end() {
                    continue;
                }
                let start = unit[..m.start()].chars().count();
                let len = m.as_str().chars().count();
                out.push(MatchResult {
                    keyword_id: kw.spec.id.clone(),
                    category_path: kw.spec.category_path.clone(),
                    span: (start, start + len),
                    matched_surface: m.as_str().to_string(),
                });
            }
        }
        out.sort_by(|a, b| a.span.cmp(&b.span).then_with(|| a.keyword_id.cmp(&b.keyword_id)));
        out.dedup_by(|a, b| a.keyword_id == b.keyword_id && a.span == b.span);
        out
    }

    /// Splits a press article into sentence units and keeps the sentences
    /// with at least one surviving match. Anchor terms are checked against
    /// the whole article.
    pub fn segment_article(
        &self,
        splitter: &SentenceSplitter,
        article: &str,
        lang: &str,
    ) -> Vec<ArticleUnit> {
        let hits = self.set.matches(article);
        if !hits.matched_any() {
            return Vec::new();
        }
        let anchored = self.has_anchor(lang, &hits);
        if self.collect_matches(article, lang, &hits, anchored).is_empty() {
            return Vec::new();
        }
        let chars: Vec<(usize, char)> = article.char_indices().collect();
        let byte_at = |ci: usize| chars.get(ci).map(|&(b, _)| b).unwrap_or(article.len());
        splitter
            .split(article, lang)
            .into_iter()
            .filter_map(|(s, e)| {
                let text = &article[byte_at(s)..byte_at(e)];
                let sent_hits = self.set.matches(text);
                let matches = self.collect_matches(text, lang, &sent_hits, anchored);
                (!matches.is_empty()).then(|| ArticleUnit {
                    text: text.to_string(),
                    span: (s, e),
                    matches,
                })
            })
            .collect()
    }
}

/// Shared slot holding the current matcher. Updates compile a new matcher
/// off to the side and swap it in; readers holding the old `Arc` finish on
/// the old version.
#[derive(Debug)]
pub struct MatcherHandle {
    current: RwLock<Arc<CompiledMatcher>>,
}

impl MatcherHandle {
    pub fn new(matcher: CompiledMatcher) -> Self {
        MatcherHandle {
            current: RwLock::new(Arc::new(matcher)),
        }
    }

    pub fn current(&self) -> Arc<CompiledMatcher> {
        self.current.read().expect("matcher lock poisoned").clone()
    }

    /// Compiles `specs` and installs them with a strictly larger version.
    pub fn replace(&self, specs: &[KeywordSpec]) -> Result<u64, TaxonomyError> {
        self.replace_at_least(specs, 0)
    }

    /// Like [`replace`](Self::replace), but the new version is also at least
    /// `min_version` (used to keep versions increasing across restarts).
    pub fn replace_at_least(&self, specs: &[KeywordSpec], min_version: u64) -> Result<u64, TaxonomyError> {
        let mut slot = self.current.write().expect("matcher lock poisoned");
        let version = (slot.version + 1).max(min_version);
        let next = CompiledMatcher::compile(specs, version)?;
        *slot = Arc::new(next);
        Ok(version)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn podemos() -> KeywordSpec {
        KeywordSpec::new("k1", r"\bPodemos\b", &["politics", "Podemos"]).case_sensitive()
    }

    #[test]
    fn compiles_single_keyword() {
        let m = compile_taxonomy(&[podemos()]).unwrap();
        assert_eq!(m.keyword_count(), 1);
        assert_eq!(m.anchor_count(), 0);
        assert_eq!(m.version(), 1);
    }

    #[test]
    fn rejects_bad_pattern_and_duplicates() {
        let bad = KeywordSpec::new("bad", "(", &["x"]);
        assert!(matches!(
            compile_taxonomy(&[bad]),
            Err(TaxonomyError::InvalidPattern { id, .. }) if id == "bad"
        ));
        let dup = vec![podemos(), KeywordSpec::new("k1", "x", &["y"])];
        assert!(matches!(compile_taxonomy(&dup), Err(TaxonomyError::DuplicateId(id)) if id == "k1"));
        assert!(matches!(compile_taxonomy(&[]), Err(TaxonomyError::Empty)));
        let nocat = KeywordSpec::new("c", "x", &[]);
        assert!(matches!(compile_taxonomy(&[nocat]), Err(TaxonomyError::EmptyCategory(_))));
    }

    #[test]
    fn case_sensitivity_separates_party_from_verb() {
        let m = compile_taxonomy(&[podemos()]).unwrap();
        let hits = m.match_unit("Podemos ganará", "es");
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].span, (0, 7));
        assert_eq!(hits[0].matched_surface, "Podemos");
        assert!(m.match_unit("podemos ganar", "es").is_empty());
    }

    #[test]
    fn language_specific_keyword() {
        let m = compile_taxonomy(&[KeywordSpec::new("mendia", r"\bmendia\b", &["politics", "Mendia"]).lang("es")])
            .unwrap();
        assert_eq!(m.match_unit("Mendia dice que el PSE apoyará", "es").len(), 1);
        assert!(m.match_unit("mendia oso ederra da gaur", "eu").is_empty());
    }

    #[test]
    fn anchor_requirement() {
        let m = compile_taxonomy(&[
            KeywordSpec::new("k1", r"\bPodemos\b", &["politics", "Podemos"])
                .case_sensitive()
                .needs_anchor(),
            KeywordSpec::new("a1", r"\belecciones\b", &[ANCHOR_CATEGORY]).anchor(),
        ])
        .unwrap();
        assert!(m.match_unit("gran mitin de Podemos", "es").is_empty());
        let kept = m.match_unit("gran mitin de Podemos en las elecciones", "es");
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].keyword_id, "k1");
        // a pure anchor alone never makes a mention
        assert!(m.match_unit("las elecciones", "es").is_empty());
    }

    #[test]
    fn anchor_that_is_also_a_keyword_matches() {
        let m = compile_taxonomy(&[
            KeywordSpec::new("k1", r"\bPNV\b", &["politics", "PNV"]).needs_anchor(),
            KeywordSpec::new("a1", r"\bhauteskundeak\b", &["campaign"]).anchor(),
        ])
        .unwrap();
        let hits = m.match_unit("PNV eta hauteskundeak", "eu");
        assert_eq!(hits.len(), 2);
    }

    #[test]
    fn spans_are_character_offsets() {
        let m = compile_taxonomy(&[KeywordSpec::new("k", "Bildu", &["p"])]).unwrap();
        let text = "¡Ánimo EH Bildu!";
        let hits = m.match_unit(text, "es");
        assert_eq!(hits.len(), 1);
        let (s, e) = hits[0].span;
        let surface: String = text.chars().skip(s).take(e - s).collect();
        assert_eq!(surface, hits[0].matched_surface);
    }

    #[test]
    fn overlapping_keywords_all_reported() {
        let m = compile_taxonomy(&[
            KeywordSpec::new("a", "EH Bildu", &["p", "EHBildu"]),
            KeywordSpec::new("b", "Bildu", &["p", "EHBildu"]),
        ])
        .unwrap();
        let hits = m.match_unit("EH Bildu", "eu");
        assert_eq!(hits.len(), 2);
    }

    #[test]
    fn undetermined_language_only_sees_wildcards() {
        let m = compile_taxonomy(&[
            KeywordSpec::new("w", "Urkullu", &["p"]),
            KeywordSpec::new("e", "Urkullu", &["q"]).lang("es"),
        ])
        .unwrap();
        let hits = m.match_unit("Urkullu", crate::UNDETERMINED_LANG);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].keyword_id, "w");
    }

    #[test]
    fn article_segmentation() {
        let m = compile_taxonomy(&[KeywordSpec::new("k", r"\bUrkullu\b", &["p", "Urkullu"])]).unwrap();
        let splitter = SentenceSplitter::default();
        assert!(m
            .segment_article(&splitter, "El tiempo será bueno. Mañana lloverá.", "es")
            .is_empty());

        let article = "El día empezó pronto. Urkullu visitó Bilbao ayer. La reunión terminó tarde.";
        let units = m.segment_article(&splitter, article, "es");
        assert_eq!(units.len(), 1);
        assert_eq!(units[0].text, "Urkullu visitó Bilbao ayer.");

        let single = "Urkullu habló con la prensa.";
        let units = m.segment_article(&splitter, single, "es");
        assert_eq!(units.len(), 1);
        assert_eq!(units[0].text, single);
        assert_eq!(units[0].span, (0, single.chars().count()));
    }

    #[test]
    fn article_anchor_is_checked_on_whole_article() {
        let m = compile_taxonomy(&[
            KeywordSpec::new("k", r"\bPNV\b", &["p", "PNV"]).needs_anchor(),
            KeywordSpec::new("a", r"\belecciones\b", &[ANCHOR_CATEGORY]).anchor(),
        ])
        .unwrap();
        let splitter = SentenceSplitter::default();
        let article = "Se acercan las elecciones. El PNV presentó su programa.";
        let units = m.segment_article(&splitter, article, "es");
        assert_eq!(units.len(), 1);
        assert_eq!(units[0].text, "El PNV presentó su programa.");
    }

    #[test]
    fn handle_swaps_and_increments_version() {
        let h = MatcherHandle::new(compile_taxonomy(&[podemos()]).unwrap());
        let old = h.current();
        let v = h.replace(&[KeywordSpec::new("x", "Bildu", &["p"])]).unwrap();
        assert_eq!(v, 2);
        assert_eq!(old.version(), 1);
        assert_eq!(h.current().version(), 2);
        assert!(h.replace(&[KeywordSpec::new("x", "(", &["p"])]).is_err());
        assert_eq!(h.current().version(), 2);
        assert_eq!(h.replace_at_least(&[podemos()], 10).unwrap(), 10);
    }
}
