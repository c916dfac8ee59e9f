//! Microtext normalization of social-media messages.
//!
//! Social text goes through URL standardization, emoticon mapping and a
//! per-token pass (hashtag segmentation, repetition collapse, OOV
//! replacement, interjection marking). Feed text only gets URL
//! standardization. Output text is a fixed point: normalizing it again
//! yields the same string.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::OnceLock;

use regex::{Regex, RegexSet};
use serde::{Deserialize, Serialize};

use crate::records::records;
use crate::SourceKind;

pub const URL_TOKEN: &str = "_URL_";
pub const INTERJECTION_TOKEN: &str = "_INTJ_";

/// Matches the placeholder tokens the pipeline inserts into text.
pub const PIPELINE_TOKEN_PATTERN: &str = r"_(?:URL|INTJ|EMO_[a-z]+)_";

const MAX_REPETITION_RUNS: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum NormalizeError {
    #[error("{file} line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("emoticon rule on line {line} does not compile")]
    InvalidRule {
        line: usize,
        #[source]
        source: Box<regex::Error>,
    },
    #[error("{lang}: standard form {value:?} of {key:?} is not a known word form")]
    UnknownStandardForm {
        lang: String,
        key: String,
        value: String,
    },
    #[error("{lang}: standard form {value:?} of {key:?} contains another OOV entry")]
    ChainedOov {
        lang: String,
        key: String,
        value: String,
    },
}

/// The seven emoticon sentiment categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmoticonCategory {
    Smiley,
    Crying,
    Shock,
    Mute,
    Angry,
    Kiss,
    Sadness,
}

impl EmoticonCategory {
    pub const ALL: [EmoticonCategory; 7] = [
        EmoticonCategory::Smiley,
        EmoticonCategory::Crying,
        EmoticonCategory::Shock,
        EmoticonCategory::Mute,
        EmoticonCategory::Angry,
        EmoticonCategory::Kiss,
        EmoticonCategory::Sadness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EmoticonCategory::Smiley => "smiley",
            EmoticonCategory::Crying => "crying",
            EmoticonCategory::Shock => "shock",
            EmoticonCategory::Mute => "mute",
            EmoticonCategory::Angry => "angry",
            EmoticonCategory::Kiss => "kiss",
            EmoticonCategory::Sadness => "sadness",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.as_str() == s)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Placeholder token written into normalized text, e.g. `_EMO_smiley_`.
    pub fn token(self) -> String {
        format!("_EMO_{}_", self.as_str())
    }
}

impl fmt::Display for EmoticonCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-category emoticon counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmoticonCounts([u32; 7]);

impl EmoticonCounts {
    pub fn get(&self, c: EmoticonCategory) -> u32 {
        self.0[c.index()]
    }

    pub fn add(&mut self, c: EmoticonCategory) {
        self.0[c.index()] += 1;
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (EmoticonCategory, u32)> + '_ {
        EmoticonCategory::ALL.iter().map(|&c| (c, self.0[c.index()]))
    }
}

#[derive(Debug, Clone)]
struct EmoticonRule {
    pattern: String,
    category: EmoticonCategory,
    anchored: Regex,
}

/// One emoticon occurrence, byte offsets into the scanned text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmoticonMatch {
    pub start: usize,
    pub end: usize,
    pub category: EmoticonCategory,
    pub rule: usize,
}

/// Ordered emoticon rules.
///
/// At each position every rule is tried; the longest match wins and ties go
/// to the earlier rule. A match whose first (or last) character is
/// alphanumeric is ignored when the neighbouring character is alphanumeric
/// too, so `xD` is not found inside `fixDuty`.
#[derive(Debug, Clone)]
pub struct EmoticonRules {
    rules: Vec<EmoticonRule>,
    prefilter: RegexSet,
}

fn pipeline_token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(PIPELINE_TOKEN_PATTERN).expect("static regex"))
}

/// True when `s` is exactly one pipeline placeholder token.
pub fn is_pipeline_token(s: &str) -> bool {
    pipeline_token_re()
        .find(s)
        .is_some_and(|m| m.start() == 0 && m.end() == s.len())
}

impl EmoticonRules {
    /// Parses `regex<TAB>category` lines.
    pub fn parse(text: &str) -> Result<Self, NormalizeError> {
        let mut rules = Vec::new();
        for rec in records(text) {
            let [pattern, category] = rec.fields[..] else {
                return Err(NormalizeError::Parse {
                    file: "emoticons".into(),
                    line: rec.line,
                    message: "expected regex<TAB>category".into(),
                });
            };
            let category = EmoticonCategory::parse(category.trim()).ok_or_else(|| NormalizeError::Parse {
                file: "emoticons".into(),
                line: rec.line,
                message: format!("unknown category {category:?}"),
            })?;
            let anchored = Regex::new(&format!("^(?:{pattern})")).map_err(|e| NormalizeError::InvalidRule {
                line: rec.line,
                source: Box::new(e),
            })?;
            rules.push(EmoticonRule {
                pattern: pattern.to_string(),
                category,
                anchored,
            });
        }
        let prefilter = RegexSet::new(rules.iter().map(|r| r.pattern.as_str())).map_err(|e| {
            NormalizeError::InvalidRule {
                line: 0,
                source: Box::new(e),
            }
        })?;
        Ok(EmoticonRules { rules, prefilter })
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// `(pattern, category)` pairs in rule order.
    pub fn rules(&self) -> impl Iterator<Item = (&str, EmoticonCategory)> {
        self.rules.iter().map(|r| (r.pattern.as_str(), r.category))
    }

    /// Finds non-overlapping emoticons left to right, skipping pipeline tokens.
    pub fn find_all(&self, text: &str) -> Vec<EmoticonMatch> {
        let active: Vec<usize> = self.prefilter.matches(text).into_iter().collect();
        if active.is_empty() {
            return Vec::new();
        }
        let protected: Vec<(usize, usize)> =
            pipeline_token_re().find_iter(text).map(|m| (m.start(), m.end())).collect();
        let mut out = Vec::new();
        let mut pos = 0;
        let mut p_idx = 0;
        while pos < text.len() {
            while p_idx < protected.len() && protected[p_idx].1 <= pos {
                p_idx += 1;
            }
            if let Some(&(ps, pe)) = protected.get(p_idx) {
                if ps <= pos {
                    pos = pe;
                    continue;
                }
            }
            let limit = protected.get(p_idx).map_or(text.len(), |p| p.0);
            let rest = &text[pos..limit];
            let mut candidates: Vec<(usize, usize)> = active
                .iter()
                .filter_map(|&r| {
                    self.rules[r]
                        .anchored
                        .find(rest)
                        .filter(|m| m.end() > 0)
                        .map(|m| (m.end(), r))
                })
                .collect();
            candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            let hit = candidates
                .into_iter()
                .find(|&(len, _)| at_word_edges(text, pos, pos + len));
            match hit {
                Some((len, r)) => {
                    out.push(EmoticonMatch {
                        start: pos,
                        end: pos + len,
                        category: self.rules[r].category,
                        rule: r,
                    });
                    pos += len;
                }
                None => pos += rest.chars().next().map_or(1, char::len_utf8),
            }
        }
        out
    }
}

/// Rejects a span that starts or ends in the middle of an alphanumeric run.
pub(crate) fn at_word_edges(text: &str, start: usize, end: usize) -> bool {
    let span = &text[start..end];
    let (Some(first), Some(last)) = (span.chars().next(), span.chars().next_back()) else {
        return false;
    };
    let prev = text[..start].chars().next_back();
    let next = text[end..].chars().next();
    let glued_left = first.is_alphanumeric() && prev.is_some_and(char::is_alphanumeric);
    let glued_right = last.is_alphanumeric() && next.is_some_and(char::is_alphanumeric);
    !(glued_left || glued_right)
}

/// Word lists for one language.
#[derive(Debug, Clone, Default)]
pub struct LanguageResources {
    pub wordforms: HashSet<String>,
    pub oov: HashMap<String, String>,
    pub interjections: HashSet<String>,
    pub stopwords: HashSet<String>,
}

fn parse_list(text: &str) -> HashSet<String> {
    records(text)
        .into_iter()
        .map(|r| r.fields.join("\t").trim().to_lowercase())
        .filter(|s| !s.is_empty())
        .collect()
}

impl LanguageResources {
    pub fn parse(
        lang: &str,
        wordforms: &str,
        oov: &str,
        interjections: &str,
        stopwords: &str,
    ) -> Result<Self, NormalizeError> {
        let mut oov_map = HashMap::new();
        for rec in records(oov) {
            let [key, value] = rec.fields[..] else {
                return Err(NormalizeError::Parse {
                    file: format!("{lang}/oov"),
                    line: rec.line,
                    message: "expected oov<TAB>standard".into(),
                });
            };
            oov_map.insert(key.trim().to_lowercase(), value.trim().to_string());
        }
        let res = LanguageResources {
            wordforms: parse_list(wordforms),
            oov: oov_map,
            interjections: parse_list(interjections),
            stopwords: parse_list(stopwords),
        };
        res.validate(lang)?;
        Ok(res)
    }

    /// Checks that OOV values are known forms (or multi-word) and never
    /// lead to another OOV entry.
    pub fn validate(&self, lang: &str) -> Result<(), NormalizeError> {
        let mut keys: Vec<&String> = self.oov.keys().collect();
        keys.sort();
        for key in keys {
            let value = &self.oov[key];
            let parts: Vec<&str> = value.split_whitespace().collect();
            if parts.len() == 1 && !self.wordforms.contains(&value.to_lowercase()) {
                return Err(NormalizeError::UnknownStandardForm {
                    lang: lang.to_string(),
                    key: key.clone(),
                    value: value.clone(),
                });
            }
            if parts.iter().any(|p| self.oov.contains_key(&p.to_lowercase())) {
                return Err(NormalizeError::ChainedOov {
                    lang: lang.to_string(),
                    key: key.clone(),
                    value: value.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn is_wordform(&self, w: &str) -> bool {
        self.wordforms.contains(&w.to_lowercase())
    }
}

/// Normalized text plus the annotations gathered along the way.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizedText {
    pub text: String,
    pub emoticons: EmoticonCounts,
    pub interjection_count: u32,
    pub url_count: u32,
    pub repetition_fixes: u32,
    pub oov_fixes: u32,
}

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"(?i)\b(?:https?://|www\.)[^\s<>"]+"#).expect("static regex"))
}

fn token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(&format!(
            r"{PIPELINE_TOKEN_PATTERN}|#[\p{{L}}\p{{M}}\p{{N}}_]+|[\p{{L}}\p{{M}}\p{{N}}]+(?:['’][\p{{L}}\p{{M}}\p{{N}}]+)*"
        ))
        .expect("static regex")
    })
}

const URL_TRAILING: &[char] = &['.', ',', ';', ':', '!', '?', ')', ']', '}', '\'', '"', '»', '”'];

/// Replaces every URL with `_URL_`; returns the new text and the URL count.
pub fn standardize_urls(text: &str) -> (String, u32) {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    let mut count = 0;
    for m in url_re().find_iter(text) {
        let url = m.as_str().trim_end_matches(URL_TRAILING);
        if url.is_empty() {
            continue;
        }
        out.push_str(&text[last..m.start()]);
        out.push_str(URL_TOKEN);
        last = m.start() + url.len();
        count += 1;
    }
    out.push_str(&text[last..]);
    (out, count)
}

/// Replaces emoticons by their category token, padding with a space where
/// the token would otherwise touch a neighbouring character.
pub fn map_emoticons(text: &str, rules: &EmoticonRules) -> (String, EmoticonCounts) {
    let mut counts = EmoticonCounts::default();
    let matches = rules.find_all(text);
    if matches.is_empty() {
        return (text.to_string(), counts);
    }
    let mut out = String::with_capacity(text.len() + matches.len() * 12);
    let mut last = 0;
    for m in matches {
        out.push_str(&text[last..m.start]);
        if out.chars().next_back().is_some_and(|c| !c.is_whitespace()) {
            out.push(' ');
        }
        out.push_str(&m.category.token());
        if text[m.end..].chars().next().is_some_and(|c| !c.is_whitespace()) {
            out.push(' ');
        }
        counts.add(m.category);
        last = m.end;
    }
    out.push_str(&text[last..]);
    (out, counts)
}

/// Runs of three or more identical letters, as `(char index, length)`.
fn letter_runs(chars: &[char]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let mut j = i + 1;
        while j < chars.len() && chars[j] == chars[i] {
            j += 1;
        }
        if j - i >= 3 && chars[i].is_alphabetic() {
            runs.push((i, j - i));
        }
        i = j;
    }
    runs
}

fn rebuild(chars: &[char], runs: &[(usize, usize)], keep: &[usize]) -> String {
    let mut out = String::with_capacity(chars.len());
    let mut i = 0;
    for (&(start, len), &k) in runs.iter().zip(keep) {
        out.extend(&chars[i..start]);
        out.extend(std::iter::repeat(chars[start]).take(k));
        i = start + len;
    }
    out.extend(&chars[i..]);
    out
}

/// Segments `text` into lexicon words, preferring the longest prefix first.
fn lexicon_segmentation(chars: &[char], lexicon: &HashSet<String>) -> Option<Vec<String>> {
    fn go(
        chars: &[char],
        i: usize,
        lexicon: &HashSet<String>,
        dead: &mut [bool],
        out: &mut Vec<String>,
    ) -> bool {
        if i == chars.len() {
            return true;
        }
        if dead[i] {
            return false;
        }
        for end in (i + 1..=chars.len()).rev() {
            let piece: String = chars[i..end].iter().collect();
            if lexicon.contains(&piece) {
                out.push(piece);
                if go(chars, end, lexicon, dead, out) {
                    return true;
                }
                out.pop();
            }
        }
        dead[i] = true;
        false
    }
    let mut dead = vec![false; chars.len()];
    let mut out = Vec::new();
    go(chars, 0, lexicon, &mut dead, &mut out).then_some(out)
}

/// Splits a hashtag body on case changes, letter/digit changes and
/// underscores.
fn camel_pieces(body: &str) -> Vec<String> {
    let chars: Vec<char> = body.chars().collect();
    let mut pieces = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if !c.is_alphanumeric() {
            if !cur.is_empty() {
                pieces.push(std::mem::take(&mut cur));
            }
            continue;
        }
        if let Some(&prev) = i.checked_sub(1).and_then(|p| chars.get(p)) {
            let next = chars.get(i + 1).copied();
            let boundary = (prev.is_lowercase() && c.is_uppercase())
                || (prev.is_uppercase() && c.is_uppercase() && next.is_some_and(char::is_lowercase))
                || (prev.is_alphabetic() && c.is_numeric())
                || (prev.is_numeric() && c.is_alphabetic());
            if boundary && !cur.is_empty() {
                pieces.push(std::mem::take(&mut cur));
            }
        }
        cur.push(c);
    }
    if !cur.is_empty() {
        pieces.push(cur);
    }
    pieces
}

/// Normalization resources for all languages plus the shared emoticon rules.
#[derive(Debug, Clone)]
pub struct NormalizationResources {
    languages: HashMap<String, LanguageResources>,
    emoticons: EmoticonRules,
    empty: LanguageResources,
}

impl NormalizationResources {
    pub fn new(emoticons: EmoticonRules) -> Self {
        NormalizationResources {
            languages: HashMap::new(),
            emoticons,
            empty: LanguageResources::default(),
        }
    }

    pub fn insert_language(&mut self, lang: &str, res: LanguageResources) -> Result<(), NormalizeError> {
        res.validate(lang)?;
        self.languages.insert(lang.to_string(), res);
        Ok(())
    }

    /// Resources for `lang`; unknown languages get empty lists.
    pub fn language(&self, lang: &str) -> &LanguageResources {
        self.languages.get(lang).unwrap_or(&self.empty)
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.languages.keys().map(String::as_str)
    }

    pub fn emoticons(&self) -> &EmoticonRules {
        &self.emoticons
    }

    /// Collapses runs of three or more identical letters. Candidate
    /// reductions (each run to two, then to one letter) are tried in order
    /// and the first one found in the word-form list wins; otherwise every
    /// run is reduced to two letters.
    pub fn collapse_repetitions(&self, token: &str, lang: &str) -> String {
        let chars: Vec<char> = token.chars().collect();
        let runs = letter_runs(&chars);
        if runs.is_empty() {
            return token.to_string();
        }
        let twos = vec![2; runs.len()];
        if runs.len() <= MAX_REPETITION_RUNS {
            let lex = self.language(lang);
            for mask in 0u32..(1 << runs.len()) {
                let keep: Vec<usize> = (0..runs.len())
                    .map(|r| if mask >> (runs.len() - 1 - r) & 1 == 1 { 1 } else { 2 })
                    .collect();
                let candidate = rebuild(&chars, &runs, &keep);
                if lex.is_wordform(&candidate) {
                    return candidate;
                }
            }
        }
        rebuild(&chars, &runs, &twos)
    }

    /// Splits a hashtag into words: on case boundaries when present,
    /// otherwise by lexicon segmentation; unsplittable tags come back as a
    /// single word without the `#`.
    pub fn segment_hashtag(&self, tag: &str, lang: &str) -> Vec<String> {
        let body = tag.trim_start_matches('#');
        let pieces = camel_pieces(body);
        if pieces.len() >= 2 {
            return pieces.into_iter().map(|p| p.to_lowercase()).collect();
        }
        let lower: Vec<char> = body.to_lowercase().chars().collect();
        if lower.iter().all(|c| c.is_alphabetic()) {
            if let Some(words) = lexicon_segmentation(&lower, &self.language(lang).wordforms) {
                if words.len() >= 2 {
                    return words;
                }
            }
        }
        if body.is_empty() {
            Vec::new()
        } else {
            vec![body.to_string()]
        }
    }

    /// Standard form for an OOV token, if listed.
    pub fn replace_oov(&self, token: &str, lang: &str) -> Option<&str> {
        self.language(lang).oov.get(&token.to_lowercase()).map(String::as_str)
    }

    pub fn is_interjection(&self, token: &str, lang: &str) -> bool {
        self.language(lang).interjections.contains(&token.to_lowercase())
    }

    fn normalize_word(&self, word: &str, lang: &str, out: &mut NormalizedText) -> String {
        let collapsed = self.collapse_repetitions(word, lang);
        if collapsed != word {
            out.repetition_fixes += 1;
        }
        let replaced = match self.replace_oov(&collapsed, lang) {
            Some(std) => {
                out.oov_fixes += 1;
                std.to_string()
            }
            None => collapsed,
        };
        let words: Vec<String> = replaced
            .split_whitespace()
            .map(|w| {
                if self.is_interjection(w, lang) {
                    out.interjection_count += 1;
                    INTERJECTION_TOKEN.to_string()
                } else {
                    w.to_string()
                }
            })
            .collect();
        words.join(" ")
    }

    /// Full normalization of one message.
    pub fn normalize_message(&self, text: &str, lang: &str, kind: SourceKind) -> NormalizedText {
        let (text, url_count) = standardize_urls(text);
        let mut out = NormalizedText {
            url_count,
            ..Default::default()
        };
        if kind == SourceKind::Feed {
            out.text = text;
            return out;
        }
        let (text, emoticons) = map_emoticons(&text, &self.emoticons);
        out.emoticons = emoticons;
        let mut result = String::with_capacity(text.len());
        let mut last = 0;
        for m in token_re().find_iter(&text) {
            result.push_str(&text[last..m.start()]);
            let tok = m.as_str();
            if is_pipeline_token(tok) {
                result.push_str(tok);
            } else if tok.starts_with('#') {
                let words: Vec<String> = self
                    .segment_hashtag(tok, lang)
                    .iter()
                    .map(|w| self.normalize_word(w, lang, &mut out))
                    .collect();
                // Split words are kept apart from glued neighbours so that a
                // second pass cannot read them as part of an emoticon or word.
                let joined = words.join(" ");
                if !joined.is_empty() && result.chars().next_back().is_some_and(|c| !c.is_whitespace()) {
                    result.push(' ');
                }
                result.push_str(&joined);
                if !joined.is_empty() && text[m.end()..].chars().next().is_some_and(|c| !c.is_whitespace()) {
                    result.push(' ');
                }
            } else {
                let w = self.normalize_word(tok, lang, &mut out);
                result.push_str(&w);
            }
            last = m.end();
        }
        result.push_str(&text[last..]);
        out.text = result;
        out
    }
}

/// Free-function form of [`NormalizationResources::normalize_message`].
pub fn normalize_message(
    text: &str,
    lang: &str,
    kind: SourceKind,
    resources: &NormalizationResources,
) -> NormalizedText {
    resources.normalize_message(text, lang, kind)
}
