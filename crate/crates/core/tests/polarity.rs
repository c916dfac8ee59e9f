mod support;

use std::collections::HashSet;
use std::time::Instant;

use monitor_core::polarity::{
    self, analyze_text, cross_validate, stratified_folds, train, EvalReport, LabeledExample, PolarityError, PolarityModel,
    TrainConfig,
};
use monitor_core::resources::Resources;
use monitor_core::synthetic::{planted_polarity, shuffled_labels, PLANTED_MARKERS};
use monitor_core::taxonomy::MatchResult;
use monitor_core::{Polarity, SourceKind};
use proptest::prelude::*;

fn ex(text: &str, label: Polarity) -> LabeledExample {
    LabeledExample {
        text: text.into(),
        lang: "en".into(),
        label,
        target_entity: None,
    }
}

#[test]
fn planted_training_set_is_fit_exactly() {
    let res = Resources::bundled();
    let data = planted_polarity(20, 3);
    let model = train(&data, &TrainConfig::default(), &res).unwrap();
    for e in &data {
        assert_eq!(model.predict(&e.text, &res).unwrap().label, e.label, "{}", e.text);
    }
    let p = model.predict("qelvor bridge", &res).unwrap();
    assert_eq!(p.label, Polarity::Positive);
}

#[test]
fn empty_input_falls_back_to_largest_bias() {
    let res = Resources::bundled();
    let model = train(&planted_polarity(30, 5), &TrainConfig::default(), &res).unwrap();
    let p = model.predict("", &res).unwrap();
    let biases: Vec<f64> = model.classes.iter().map(|c| c.bias).collect();
    assert_eq!(p.scores.to_vec(), biases);
    assert_eq!(p.label, polarity::argmax_label(&p.scores));
}

#[test]
fn degenerate_training_sets_are_refused() {
    let res = Resources::bundled();
    let one = vec![ex("good", Polarity::Positive), ex("great", Polarity::Positive)];
    assert!(matches!(train(&one, &TrainConfig::default(), &res), Err(PolarityError::SingleClassData)));
    assert!(matches!(train(&[], &TrainConfig::default(), &res), Err(PolarityError::EmptyData)));
    let mut mixed = planted_polarity(6, 1);
    mixed[2].lang = "es".into();
    assert!(matches!(train(&mixed, &TrainConfig::default(), &res), Err(PolarityError::MixedLanguages { .. })));
}

#[test]
fn training_is_bit_exact_under_a_seed() {
    let res = Resources::bundled();
    let data = planted_polarity(60, 9);
    let a = train(&data, &TrainConfig::default(), &res).unwrap();
    let b = train(&data, &TrainConfig::default(), &res).unwrap();
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn model_json_roundtrip() {
    let res = Resources::bundled();
    let model = train(&planted_polarity(30, 2), &TrainConfig::default(), &res).unwrap();
    let back = PolarityModel::from_json(&model.to_json()).unwrap();
    assert_eq!(back, model);
    let mut broken = model.clone();
    broken.classes.pop();
    assert!(PolarityModel::from_json(&serde_json::to_string(&broken).unwrap()).is_err());
}

#[test]
fn cross_validation_on_planted_data() {
    let res = Resources::bundled();
    let data = planted_polarity(300, 11);
    let start = Instant::now();
    let report = cross_validate(&data, 10, &TrainConfig::default(), &res).unwrap();
    assert!(start.elapsed().as_secs_f64() < 10.0);
    println!("{}", report.table());
    assert!(report.accuracy >= 0.95, "{report:?}");
    let supports: u64 = Polarity::ALL.iter().map(|&c| report.support(c)).sum();
    assert_eq!(supports, 300);
}

#[test]
fn shuffled_labels_are_near_chance() {
    let res = Resources::bundled();
    let data = shuffled_labels(&planted_polarity(300, 11), 99);
    let report = cross_validate(&data, 10, &TrainConfig::default(), &res).unwrap();
    assert!((report.accuracy - 1.0 / 3.0).abs() <= 0.10, "{}", report.accuracy);
}

#[test]
fn separable_set_scores_perfectly() {
    let res = Resources::bundled();
    let report = cross_validate(&planted_polarity(300, 4), 10, &TrainConfig::default(), &res).unwrap();
    assert_eq!(report.accuracy, 1.0);
    assert_eq!(report.f1, [1.0; 3]);
}

#[test]
fn too_many_folds() {
    let res = Resources::bundled();
    let data = planted_polarity(6, 1);
    assert!(matches!(
        cross_validate(&data, 7, &TrainConfig::default(), &res),
        Err(PolarityError::InvalidFolds { k: 7, n: 6 })
    ));
}

#[test]
fn fold_vocabularies_come_from_training_splits() {
    let res = Resources::bundled();
    let mut data = planted_polarity(60, 8);
    // Tokens that occur twice, but only inside one example each.
    data[0].text.push_str(" zebulonq zebulonq");
    data[1].text.push_str(" ytterbix ytterbix");
    let labels: Vec<Polarity> = data.iter().map(|e| e.label).collect();
    for held in stratified_folds(&labels, 5, 0x5eed).unwrap() {
        let held: HashSet<usize> = held.into_iter().collect();
        let train_set: Vec<LabeledExample> =
            (0..data.len()).filter(|i| !held.contains(i)).map(|i| data[i].clone()).collect();
        let model = train(&train_set, &TrainConfig::default(), &res).unwrap();
        let mut doc_freq = std::collections::HashMap::<String, usize>::new();
        for e in &train_set {
            let a = analyze_text(&e.text, "en", SourceKind::Social, &res).unwrap();
            let forms: HashSet<String> = a.tokens.iter().map(|t| t.surface.to_lowercase()).collect();
            for f in forms {
                *doc_freq.entry(f).or_default() += 1;
            }
        }
        for w in model.space.vocabulary() {
            assert!(doc_freq.get(w).copied().unwrap_or(0) >= 2, "{w} leaked into the vocabulary");
        }
        assert!(!model.space.vocabulary().any(|w| w == "zebulonq" || w == "ytterbix"));
        for class in PLANTED_MARKERS.iter().flatten() {
            let held_only = held.iter().all(|&i| data[i].text.contains(class))
                && !train_set.iter().any(|e| e.text.contains(class));
            if held_only {
                assert!(!model.space.vocabulary().any(|w| w == *class));
            }
        }
    }
}

#[test]
fn negation_on_bundled_resources() {
    let res = Resources::bundled();
    let pres = res.polarity("en").unwrap();
    let model = train(&planted_polarity(30, 2), &TrainConfig::default(), &res).unwrap();
    let a = analyze_text("this is not good", "en", SourceKind::Social, &res).unwrap();
    let x = polarity::extract_features(&a.tokens, &a.norm, pres, &model.space);
    let neg = model.space.index_of("negative_count").unwrap();
    let pos = model.space.index_of("positive_count").unwrap();
    assert!(x.iter().any(|&(i, v)| i == neg && v > 0.0));
    assert!(!x.iter().any(|&(i, _)| i == pos));
}

#[test]
fn entity_assignment() {
    let m = |leaf: &str| MatchResult {
        keyword_id: leaf.into(),
        category_path: vec!["parties".into(), leaf.into()],
        span: (0, 1),
        matched_surface: leaf.into(),
    };
    let out = polarity::assign_entity_polarity(Polarity::Negative, &[m("PNV"), m("EHBildu"), m("PNV")]);
    assert_eq!(out, [("PNV".to_string(), Polarity::Negative), ("EHBildu".to_string(), Polarity::Negative)]);
    assert!(polarity::assign_entity_polarity(Polarity::Positive, &[]).is_empty());
}

/// Every outcome of repeatedly cancelling one N against one P (the pair
/// becomes NEU) and dropping NEU entries, over all choices of pair.
fn all_reductions(items: &[Polarity]) -> HashSet<Polarity> {
    use Polarity::*;
    let rest: Vec<Polarity> = items.iter().copied().filter(|&p| p != Neutral).collect();
    let mut out = HashSet::new();
    let mut cancelled = false;
    for i in 0..rest.len() {
        for j in 0..rest.len() {
            if rest[i] == Negative && rest[j] == Positive {
                cancelled = true;
                let mut next: Vec<Polarity> =
                    rest.iter().enumerate().filter(|&(k, _)| k != i && k != j).map(|(_, &p)| p).collect();
                next.push(Neutral);
                out.extend(all_reductions(&next));
            }
        }
    }
    if !cancelled {
        out.insert(rest.first().copied().unwrap_or(Neutral));
    }
    out
}

#[test]
fn mixed_multiset_reduces_to_negative_in_every_order() {
    use Polarity::*;
    let items = [Negative, Negative, Positive, Neutral];
    assert_eq!(all_reductions(&items), HashSet::from([Negative]));
    assert_eq!(polarity::combine_entity_polarity(&items), Some(Negative));
}

proptest! {
    #[test]
    fn uppercase_ratio_is_scale_free(text in "[A-Za-z ]{1,40}", reps in 1usize..5) {
        let res = Resources::bundled();
        let one = analyze_text(&text, "en", SourceKind::Feed, &res).unwrap();
        let many = analyze_text(&vec![text.as_str(); reps].join(" "), "en", SourceKind::Feed, &res).unwrap();
        let mode = polarity::UppercaseDenominator::Letters;
        let a = polarity::uppercase_ratio(&one.tokens, mode);
        let b = polarity::uppercase_ratio(&many.tokens, mode);
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }
}

#[test]
fn entity_combination_equals_sign_count_up_to_six() {
    let seqs = support::all_sequences(6);
    assert_eq!(seqs.len(), (0..=6).map(|k| 3usize.pow(k)).sum::<usize>());
    for s in &seqs {
        assert_eq!(polarity::combine_entity_polarity(s), support::sign_count(s), "{s:?}");
    }
}

#[test]
fn sign_count_agrees_with_every_cancellation_order() {
    for s in support::all_sequences(5).iter().filter(|s| !s.is_empty()) {
        assert_eq!(all_reductions(s), HashSet::from([support::sign_count(s).unwrap()]), "{s:?}");
    }
}

#[test]
fn evaluate_counts_every_example_once() {
    let res = Resources::bundled();
    let data = planted_polarity(120, 6);
    let model = train(&data[..90], &TrainConfig::default(), &res).unwrap();
    let report = polarity::evaluate(&model, &data[90..], &res).unwrap();
    let expected = EvalReport::from_pairs(
        data[90..].iter().map(|e| (e.label, model.predict(&e.text, &res).unwrap().label)),
        0,
    );
    assert_eq!(report, expected);
    assert_eq!(report.confusion.iter().flatten().sum::<u64>(), 30);
    let mut other = data[90..].to_vec();
    other.iter_mut().for_each(|e| e.lang = "es".into());
    assert!(matches!(polarity::evaluate(&model, &other, &res), Err(PolarityError::MixedLanguages { .. })));
}
