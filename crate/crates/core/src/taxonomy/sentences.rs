//! Rule-based sentence splitting for press articles.

use std::collections::{HashMap, HashSet};

const TERMINALS: &[char] = &['.', '!', '?', '…'];
const CLOSERS: &[char] = &['"', '\'', '»', '”', '’', ')', ']'];
const OPENERS: &[char] = &['"', '\'', '«', '“', '‘', '(', '[', '¿', '¡', '-', '\u{2014}'];

const DEFAULT_ABBREVIATIONS: &[(&str, &[&str])] = &[
    ("es", &["sr", "sra", "srta", "dr", "dra", "d", "dña", "etc", "pág", "núm", "art", "ej", "aprox", "av", "avda", "ud", "uds", "vs"]),
    ("eu", &["and", "jn", "jna", "etab", "e.a", "or", "zk", "k", "ed"]),
    ("en", &["mr", "mrs", "ms", "dr", "prof", "st", "jr", "sr", "vs", "etc", "e.g", "i.e", "inc", "ltd", "no", "fig"]),
    ("fr", &["m", "mm", "mme", "mlle", "dr", "etc", "cf", "p", "art", "av", "bd", "st", "ste"]),
];

/// Splits on terminal punctuation followed by whitespace and an uppercase
/// letter or digit, except after known abbreviations or single-letter
/// initials.
#[derive(Debug, Clone)]
pub struct SentenceSplitter {
    abbreviations: HashMap<String, HashSet<String>>,
}

impl Default for SentenceSplitter {
    fn default() -> Self {
        let mut abbreviations = HashMap::new();
        for (lang, list) in DEFAULT_ABBREVIATIONS {
            abbreviations.insert(
                lang.to_string(),
                list.iter().map(|s| s.to_string()).collect::<HashSet<_>>(),
            );
        }
        SentenceSplitter { abbreviations }
    }
}

impl SentenceSplitter {
    pub fn empty() -> Self {
        SentenceSplitter {
            abbreviations: HashMap::new(),
        }
    }

    pub fn add_abbreviations<I, S>(&mut self, lang: &str, abbrevs: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let set = self.abbreviations.entry(lang.to_string()).or_default();
        set.extend(abbrevs.into_iter().map(|a| a.as_ref().trim_end_matches('.').to_lowercase()));
    }

    fn is_abbreviation(&self, lang: &str, word: &str) -> bool {
        let w = word.trim_end_matches('.').to_lowercase();
        if w.chars().count() == 1 && w.chars().all(char::is_alphabetic) {
            return true;
        }
        self.abbreviations.get(lang).is_some_and(|s| s.contains(&w))
    }

    /// Returns sentence boundaries as character offsets `(start, end)`,
    /// trimmed of surrounding whitespace, in document order.
    pub fn split(&self, text: &str, lang: &str) -> Vec<(usize, usize)> {
        let chars: Vec<char> = text.chars().collect();
        let n = chars.len();
        let mut out = Vec::new();
        let mut start = 0;
        let mut i = 0;
        while i < n {
            if !TERMINALS.contains(&chars[i]) {
                i += 1;
                continue;
            }
            let punct_start = i;
            let mut j = i;
            while j < n && TERMINALS.contains(&chars[j]) {
                j += 1;
            }
            let single_period = j - punct_start == 1 && chars[punct_start] == '.';
            while j < n && CLOSERS.contains(&chars[j]) {
                j += 1;
            }
            let mut k = j;
            while k < n && chars[k].is_whitespace() {
                k += 1;
            }
            if k == j || k >= n {
                i = j.max(i + 1);
                continue;
            }
            let mut first = k;
            while first < n && OPENERS.contains(&chars[first]) {
                first += 1;
            }
            let starts_sentence = first < n && (chars[first].is_uppercase() || chars[first].is_ascii_digit());
            if starts_sentence && single_period {
                let mut w = punct_start;
                while w > 0 && !chars[w - 1].is_whitespace() {
                    w -= 1;
                }
                let word: String = chars[w..punct_start]
                    .iter()
                    .skip_while(|c| !c.is_alphanumeric())
                    .collect();
                if !word.is_empty() && self.is_abbreviation(lang, &word) {
                    i = j;
                    continue;
                }
            }
            if starts_sentence {
                push_trimmed(&chars, start, j, &mut out);
                start = k;
            }
            i = j;
        }
        push_trimmed(&chars, start, n, &mut out);
        out
    }
}

fn push_trimmed(chars: &[char], mut s: usize, mut e: usize, out: &mut Vec<(usize, usize)>) {
    while s < e && chars[s].is_whitespace() {
        s += 1;
    }
    while e > s && chars[e - 1].is_whitespace() {
        e -= 1;
    }
    if s < e {
        out.push((s, e));
    }
}
