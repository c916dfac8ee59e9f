mod support;

use monitor_core::taxonomy::{compile_taxonomy, KeywordSpec, SentenceSplitter};
use std::sync::OnceLock;

use monitor_core::taxonomy::CompiledMatcher;
use proptest::prelude::*;
use support::{check_taxonomy_grid, grid_anchors, grid_keywords, grid_texts, naive_match};

#[test]
fn grid_matches_reference_matcher() {
    let (checked, failures) = check_taxonomy_grid();
    assert!(checked >= 1000, "only {checked} combinations");
    assert!(failures.is_empty(), "{} disagreements, first: {:?}", failures.len(), &failures[..failures.len().min(5)]);
}

#[test]
fn grid_is_not_vacuous() {
    let mut all = grid_anchors();
    all.extend(grid_keywords());
    let hits: usize = grid_texts().iter().map(|(t, l)| naive_match(&all, t, l).len()).sum();
    assert!(hits > 100);
    let mut gated = grid_anchors();
    gated.extend(grid_keywords().into_iter().filter(|k| k.needs_anchor));
    let m = compile_taxonomy(&gated).unwrap();
    assert!(m.match_unit("gran mitin de Podemos", "es").is_empty());
    assert!(!m.match_unit("gran mitin de Podemos en las elecciones", "es").is_empty());
}

#[test]
fn language_partition_holds_on_grid() {
    let m = compile_taxonomy(&grid_keywords()).unwrap();
    for (text, lang) in grid_texts() {
        for r in m.match_unit(&text, lang) {
            let spec = grid_keywords().into_iter().find(|k| k.id == r.keyword_id).unwrap();
            assert!(spec.language == "*" || spec.language == lang);
        }
    }
}

fn full_grid() -> &'static (Vec<KeywordSpec>, CompiledMatcher) {
    static GRID: OnceLock<(Vec<KeywordSpec>, CompiledMatcher)> = OnceLock::new();
    GRID.get_or_init(|| {
        let mut all = grid_anchors();
        all.extend(grid_keywords());
        let m = compile_taxonomy(&all).unwrap();
        (all, m)
    })
}

fn text_strategy() -> impl Strategy<Value = String> {
    let words = prop::sample::select(vec![
        "Podemos", "podemos", "Bilbao", "mendia", "Mendia", "EH", "Bildu", "elecciones", "vote", "hauteskunde", "eta",
        "la", "gran", "Athletic", "ñandú", ".", "!", "Hoy", "Ayer",
    ]);
    prop::collection::vec(words, 0..14).prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn random_texts_match_reference(text in text_strategy(), lang in prop::sample::select(vec!["es", "eu", "en"])) {
        let (all, m) = full_grid();
        prop_assert_eq!(m.match_unit(&text, lang), naive_match(all, &text, lang));
    }

    #[test]
    fn adding_an_anchor_never_removes_matches(text in text_strategy()) {
        let (_, m) = full_grid();
        let before = m.match_unit(&text, "es");
        let after = m.match_unit(&format!("{text} elecciones"), "es");
        for r in &before {
            prop_assert!(after.contains(r), "{:?} lost", r);
        }
    }

    #[test]
    fn matching_is_deterministic(text in text_strategy()) {
        let (_, m) = full_grid();
        prop_assert_eq!(m.match_unit(&text, "eu"), m.match_unit(&text, "eu"));
    }

    #[test]
    fn article_units_are_ordered_disjoint_substrings(
        sentences in prop::collection::vec(text_strategy(), 1..6)
    ) {
        let article = sentences.iter().map(|s| format!("Hoy {s}.")).collect::<Vec<_>>().join(" ");
        let m = compile_taxonomy(&[KeywordSpec::new("p", r"\bPodemos\b", &["pol", "Podemos"]).case_sensitive()]).unwrap();
        let units = m.segment_article(&SentenceSplitter::default(), &article, "es");
        let chars: Vec<char> = article.chars().collect();
        let mut last_end = 0;
        for u in &units {
            prop_assert!(u.span.0 >= last_end);
            prop_assert_eq!(chars[u.span.0..u.span.1].iter().collect::<String>(), u.text.clone());
            last_end = u.span.1;
        }
        prop_assert_eq!(units.is_empty(), !article.contains("Podemos"));
    }
}
