//! Independent reference implementations shared by integration tests and
//! the acceptance harness.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};

use chrono::{DateTime, Duration, TimeZone, Utc};
use monitor_core::store::{AggregateRow, AuthorRecord, MatchRef, MentionRecord, Store, Tier};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use monitor_core::taxonomy::{compile_taxonomy, KeywordSpec, MatchResult, ANCHOR_CATEGORY, ANY_LANG};
use monitor_core::{Polarity, SourceKind};
use regex::Regex;

// Taxonomy

/// Reference matcher: one plain regex per keyword, scanned one by one.
pub fn naive_match(specs: &[KeywordSpec], text: &str, lang: &str) -> Vec<MatchResult> {
    let compile = |s: &KeywordSpec| {
        let prefix = if s.case_sensitive { "" } else { "(?i)" };
        Regex::new(&format!("{prefix}(?:{})", s.pattern)).unwrap()
    };
    let applies = |s: &KeywordSpec| s.language == ANY_LANG || s.language == lang;
    let anchored = specs.iter().any(|s| s.is_anchor && applies(s) && compile(s).is_match(text));
    let mut out = Vec::new();
    for s in specs {
        let pure_anchor = s.is_anchor && s.category_path == [ANCHOR_CATEGORY];
        if pure_anchor || !applies(s) || (s.needs_anchor && !anchored) {
            continue;
        }
        for m in compile(s).find_iter(text) {
            if m.as_str().is_empty() {
                continue;
            }
            let start = text[..m.start()].chars().count();
            out.push(MatchResult {
                keyword_id: s.id.clone(),
                category_path: s.category_path.clone(),
                span: (start, start + m.as_str().chars().count()),
                matched_surface: m.as_str().to_string(),
            });
        }
    }
    out.sort_by(|a, b| a.span.cmp(&b.span).then(a.keyword_id.cmp(&b.keyword_id)));
    out.dedup_by(|a, b| a.keyword_id == b.keyword_id && a.span == b.span);
    out
}

pub fn grid_anchors() -> Vec<KeywordSpec> {
    vec![
        KeywordSpec::new("anchor-es", "elecciones", &[ANCHOR_CATEGORY]).lang("es").anchor(),
        KeywordSpec::new("anchor-eu", "hauteskunde", &[ANCHOR_CATEGORY]).lang("eu").anchor(),
        KeywordSpec::new("anchor-any", r"\bvote\b", &[ANCHOR_CATEGORY]).anchor(),
    ]
}

/// Every combination of pattern, language, case flag and anchor flags.
pub fn grid_keywords() -> Vec<KeywordSpec> {
    let patterns = [r"\bPodemos\b", "mendia", r"\bEH Bildu\b", "Bilbao", r"Athletic\w*", "elecciones"];
    let mut out = Vec::new();
    for (pi, p) in patterns.iter().enumerate() {
        for lang in [ANY_LANG, "es", "eu"] {
            for case in [false, true] {
                for (needs, also_anchor) in [(false, false), (true, false), (false, true)] {
                    let mut k = KeywordSpec::new(
                        format!("k{pi}-{lang}-{case}-{needs}-{also_anchor}"),
                        *p,
                        &["root", &format!("leaf{pi}")],
                    )
                    .lang(lang);
                    k.case_sensitive = case;
                    k.needs_anchor = needs;
                    k.is_anchor = also_anchor;
                    out.push(k);
                }
            }
        }
    }
    out
}

pub fn grid_texts() -> Vec<(String, &'static str)> {
    let texts = [
        "Podemos ganará",
        "podemos ganar",
        "PODEMOS!!",
        "gran mitin de Podemos",
        "gran mitin de Podemos en las elecciones",
        "Mendia ederra da",
        "mendia ederra da",
        "subimos al monte con Mendia",
        "EH Bildu eta hauteskundeak",
        "eh bildu",
        "EH  Bildu",
        "Bilbao-Athletic: Athleticzale guztiak",
        "bilbao bilbao BILBAO",
        "vote Podemos vote",
        "voter Podemos",
        "Las elecciones en Bilbao",
        "no keyword at all",
        "",
        "Podemosss y podemos y Podemos",
        "ñandú en Bilbao 😀 Podemos",
        "ATHLETIC athletic Athletic",
        "hauteskunde kanpaina mendian",
    ];
    texts
        .iter()
        .flat_map(|t| ["es", "eu", "en"].into_iter().map(move |l| (t.to_string(), l)))
        .collect()
}

/// Matches every grid keyword (compiled alone with the anchor set) and the
/// whole grid taxonomy against every grid text. Returns the number of
/// combinations checked and a description of each disagreement.
pub fn check_taxonomy_grid() -> (usize, Vec<String>) {
    let anchors = grid_anchors();
    let keywords = grid_keywords();
    let texts = grid_texts();
    let mut checked = 0;
    let mut failures = Vec::new();
    for k in &keywords {
        let mut specs = anchors.clone();
        specs.push(k.clone());
        let matcher = compile_taxonomy(&specs).unwrap();
        for (text, lang) in &texts {
            checked += 1;
            if matcher.match_unit(text, lang) != naive_match(&specs, text, lang) {
                failures.push(format!("{} on {text:?}/{lang}", k.id));
            }
        }
    }
    let mut all = anchors;
    all.extend(keywords);
    let matcher = compile_taxonomy(&all).unwrap();
    for (text, lang) in &texts {
        checked += 1;
        if matcher.match_unit(text, lang) != naive_match(&all, text, lang) {
            failures.push(format!("full taxonomy on {text:?}/{lang}"));
        }
    }
    (checked, failures)
}

// Census

/// Counts, for every user outside the census, the census users it shares
/// an edge with in either direction, by scanning the raw edge list.
pub fn brute_force_rank(census: &HashSet<String>, edges: &[(String, String)]) -> Vec<(String, u32)> {
    let mut adjacent: BTreeMap<&str, HashSet<&str>> = BTreeMap::new();
    for (a, b) in edges {
        if a == b {
            continue;
        }
        for (x, y) in [(a, b), (b, a)] {
            if !census.contains(x) && census.contains(y) {
                adjacent.entry(x).or_default().insert(y);
            }
        }
    }
    let mut out: Vec<(String, u32)> = adjacent.into_iter().map(|(u, s)| (u.to_string(), s.len() as u32)).collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

// Entity polarity

/// Sign of (#positive - #negative); `None` for no references.
pub fn sign_count(refs: &[Polarity]) -> Option<Polarity> {
    if refs.is_empty() {
        return None;
    }
    let score: i64 = refs
        .iter()
        .map(|p| match p {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
            Polarity::Neutral => 0,
        })
        .sum();
    Some(match score.signum() {
        1 => Polarity::Positive,
        -1 => Polarity::Negative,
        _ => Polarity::Neutral,
    })
}

/// All sequences over the three labels of length 0 to `max_len`.
pub fn all_sequences(max_len: usize) -> Vec<Vec<Polarity>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        frontier = frontier
            .iter()
            .flat_map(|s: &Vec<Polarity>| {
                Polarity::ALL.into_iter().map(move |p| {
                    let mut n = s.clone();
                    n.push(p);
                    n
                })
            })
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

// Store

pub const STORE_CATEGORIES: &[&str] = &[
    "politics",
    "politics/PNV",
    "politics/EHBildu",
    "politics/parties/Podemos",
    "culture/music",
    "culture/music/bertsolaritza",
    "sport/Athletic",
    "sport",
];

/// A small random store state: mentions, authors and later corrections
/// (index into the mention list, new label).
pub struct RandomStore {
    pub mentions: Vec<MentionRecord>,
    pub authors: Vec<AuthorRecord>,
    pub corrections: Vec<(usize, Polarity)>,
}

pub fn random_store(seed: u64, max_mentions: usize) -> RandomStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(0..=max_mentions);
    let n_authors = rng.gen_range(1..20);
    let follower_choices = [None, Some(0), Some(999), Some(1000), Some(5000), Some(10_000), Some(10_001), Some(50_000)];
    let mut authors = Vec::new();
    for i in 0..n_authors {
        if rng.gen_bool(0.8) {
            authors.push(AuthorRecord {
                author_id: format!("a{i}"),
                handle: Some(format!("@a{i}")),
                followers: follower_choices[rng.gen_range(0..follower_choices.len())],
                in_census: rng.gen_bool(0.3),
            });
        }
    }
    let base = Utc.with_ymd_and_hms(2024, 3, 1, 0, 0, 0).unwrap();
    let mentions: Vec<MentionRecord> = (0..n)
        .map(|i| {
            let n_matches = rng.gen_range(1..4);
            let matches = (0..n_matches)
                .map(|_| MatchRef {
                    keyword_id: format!("k{}", rng.gen_range(0..3)),
                    category_path: STORE_CATEGORIES[rng.gen_range(0..STORE_CATEGORIES.len())].to_string(),
                })
                .collect();
            let repost = rng.gen_bool(0.2) && i > 0;
            MentionRecord {
                mention_id: None,
                source_id: format!("src{}", rng.gen_range(0..2)),
                native_id: format!("n{i}"),
                source_kind: if rng.gen_bool(0.7) { SourceKind::Social } else { SourceKind::Feed },
                unit_span: (0, 10),
                unit_text: format!("unit {i}"),
                full_text_ref: None,
                lang: ["eu", "es", "en", "fr"][rng.gen_range(0..4)].to_string(),
                timestamp: base + Duration::seconds(rng.gen_range(0..10 * 86_400)),
                author_id: format!("a{}", rng.gen_range(0..n_authors)),
                matches,
                predicted_label: Polarity::ALL[rng.gen_range(0..3)],
                corrected_label: rng.gen_bool(0.1).then(|| Polarity::ALL[rng.gen_range(0..3)]),
                is_repost: repost,
                repost_of: repost.then(|| format!("n{}", rng.gen_range(0..i))),
                in_census: rng.gen_bool(0.3),
            }
        })
        .collect();
    let corrections = if n == 0 {
        Vec::new()
    } else {
        (0..rng.gen_range(0..=n / 5)).map(|_| (rng.gen_range(0..n), Polarity::ALL[rng.gen_range(0..3)])).collect()
    };
    RandomStore {
        mentions,
        authors,
        corrections,
    }
}

impl RandomStore {
    /// Loads the state into `store`, applies the corrections and returns
    /// the records as they now stand (ids and corrections filled in).
    pub fn load_into(&self, store: &Store) -> Vec<MentionRecord> {
        for a in &self.authors {
            store.upsert_author(a).unwrap();
        }
        let mut stored = Vec::new();
        for m in &self.mentions {
            let id = store.insert_mention(m).unwrap();
            stored.push(MentionRecord { mention_id: Some(id), ..m.clone() });
        }
        for &(i, label) in &self.corrections {
            let id = stored[i].mention_id.unwrap();
            store.correct_label(id, label, "tester", Utc::now()).unwrap();
            stored[i].corrected_label = Some(label);
        }
        stored
    }
}

fn oracle_tier(followers: Option<u64>) -> Tier {
    match followers.unwrap_or(0) {
        0..=999 => Tier::Under1k,
        1000..=10_000 => Tier::From1kTo10k,
        _ => Tier::Over10k,
    }
}

/// Aggregates recounted directly from the records: one count per distinct
/// (mention, category path) pair.
pub fn brute_force_view(mentions: &[MentionRecord], authors: &[AuthorRecord]) -> Vec<AggregateRow> {
    let followers: BTreeMap<&str, Option<u64>> = authors.iter().map(|a| (a.author_id.as_str(), a.followers)).collect();
    let mut counts: BTreeMap<(chrono::NaiveDate, String, String, Polarity, SourceKind, Tier), u64> = BTreeMap::new();
    for m in mentions {
        let cats: BTreeSet<&str> = m.matches.iter().map(|r| r.category_path.as_str()).collect();
        let label = m.corrected_label.unwrap_or(m.predicted_label);
        let tier = oracle_tier(followers.get(m.author_id.as_str()).copied().flatten());
        for c in cats {
            *counts
                .entry((m.timestamp.date_naive(), c.to_string(), m.lang.clone(), label, m.source_kind, tier))
                .or_default() += 1;
        }
    }
    counts
        .into_iter()
        .map(|((day, category_path, lang, polarity, source_kind, tier), count)| AggregateRow {
            day,
            category_path,
            lang,
            polarity,
            source_kind,
            tier,
            count,
        })
        .collect()
}

/// Runs the view-equivalence check over `stores` random stores and
/// returns the seeds whose view disagreed with the recount.
pub fn check_view_equivalence(stores: u64, max_mentions: usize) -> Vec<u64> {
    (0..stores)
        .filter(|&seed| {
            let state = random_store(seed, max_mentions);
            let store = Store::open_in_memory().unwrap();
            let stored = state.load_into(&store);
            let view = store.refresh_view(Utc::now()).unwrap();
            view.rows != brute_force_view(&stored, &state.authors)
        })
        .collect()
}

pub fn at(s: &str) -> DateTime<Utc> {
    DateTime::parse_from_rfc3339(s).unwrap().with_timezone(&Utc)
}
