//! Three-class polarity classification of mentions.
//!
//! Messages are normalized and analyzed, then mapped into a sparse feature
//! space made of word-form unigrams, part-of-speech unigrams, polarity
//! lexicon hits (with a negation-aware variant), multi-word locutions and
//! a handful of bounded scalar features. Three one-vs-rest linear SVMs are
//! trained with [`crate::linear`]; prediction takes the argmax margin.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linear::{self, BinaryModel, LinearError, SolverConfig, SparseVec};
use crate::nlp::{AnalyzedToken, NlpError, PosTag};
use crate::normalize::{is_pipeline_token, EmoticonCategory, NormalizedText};
use crate::records::records;
use crate::resources::Resources;
use crate::taxonomy::MatchResult;
use crate::{Polarity, SourceKind};

/// Version written into saved models; loading rejects other versions.
pub const MODEL_FORMAT_VERSION: u32 = 1;

const COUNT_CAP: f64 = 10.0;
const LENGTH_CAP: f64 = 100.0;

#[derive(Debug, thiserror::Error)]
pub enum PolarityError {
    #[error("no training examples")]
    EmptyData,
    #[error("training data contains a single class")]
    SingleClassData,
    #[error("examples mix languages {expected:?} and {found:?}")]
    MixedLanguages { expected: String, found: String },
    #[error("cannot make {k} folds from {n} examples")]
    InvalidFolds { k: usize, n: usize },
    #[error("no polarity resources for language {0:?}")]
    UnsupportedLanguage(String),
    #[error("{file} line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("lemma {0:?} listed as both positive and negative")]
    ConflictingLemma(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Nlp(#[from] NlpError),
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Lexicon class of a polarity lemma.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LexClass {
    Pos,
    Neg,
}

impl LexClass {
    fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "pos" => Some(LexClass::Pos),
            "neg" => Some(LexClass::Neg),
            _ => None,
        }
    }

    fn flipped(self) -> Self {
        match self {
            LexClass::Pos => LexClass::Neg,
            LexClass::Neg => LexClass::Pos,
        }
    }
}

fn parse_classed(text: &str, file: &str) -> Result<Vec<(String, LexClass)>, PolarityError> {
    records(text)
        .map(|rec| {
            let [entry, class] = rec.fields[..] else {
                return Err(PolarityError::Parse {
                    file: file.to_string(),
                    line: rec.line,
                    message: "expected entry<TAB>pos|neg".into(),
                });
            };
            let class = LexClass::parse(class).ok_or_else(|| PolarityError::Parse {
                file: file.to_string(),
                line: rec.line,
                message: format!("unknown class {class:?}"),
            })?;
            Ok((entry.trim().to_lowercase(), class))
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolarityLexicon {
    pub lang: String,
    entries: HashMap<String, LexClass>,
}

impl PolarityLexicon {
    /// Parses `lemma<TAB>pos|neg` lines.
    pub fn parse(lang: &str, text: &str) -> Result<Self, PolarityError> {
        let mut entries = HashMap::new();
        for (lemma, class) in parse_classed(text, &format!("{lang}/lexicon"))? {
            if let Some(prev) = entries.insert(lemma.clone(), class) {
                if prev != class {
                    return Err(PolarityError::ConflictingLemma(lemma));
                }
            }
        }
        Ok(PolarityLexicon {
            lang: lang.to_string(),
            entries,
        })
    }

    pub fn from_entries<I: IntoIterator<Item = (String, LexClass)>>(lang: &str, entries: I) -> Self {
        PolarityLexicon {
            lang: lang.to_string(),
            entries: entries.into_iter().collect(),
        }
    }

    pub fn get(&self, lemma: &str) -> Option<LexClass> {
        self.entries.get(lemma).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, class: LexClass) -> usize {
        self.entries.values().filter(|&&c| c == class).count()
    }
}

/// A multi-word expression with a fixed polarity, matched over lemmas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Locution {
    pub lemmas: Vec<String>,
    pub class: LexClass,
}

impl Locution {
    fn name(&self) -> String {
        self.lemmas.join("_")
    }
}

/// Per-language polarity resources.
#[derive(Debug, Clone, Default)]
pub struct PolarityResources {
    pub lexicon: PolarityLexicon,
    pub negation_cues: HashSet<String>,
    /// Longest first.
    pub locutions: Vec<Locution>,
    pub stopwords: HashSet<String>,
}

impl PolarityResources {
    pub fn parse(
        lang: &str,
        lexicon: &str,
        negation: &str,
        locutions: &str,
        stopwords: HashSet<String>,
    ) -> Result<Self, PolarityError> {
        let negation_cues = records(negation)
            .map(|r| r.fields.join("\t").trim().to_lowercase())
            .filter(|s| !s.is_empty())
            .collect();
        let mut locs: Vec<Locution> = parse_classed(locutions, &format!("{lang}/locutions"))?
            .into_iter()
            .map(|(phrase, class)| Locution {
                lemmas: phrase.split_whitespace().map(str::to_string).collect(),
                class,
            })
            .filter(|l| !l.lemmas.is_empty())
            .collect();
        locs.sort_by(|a, b| b.lemmas.len().cmp(&a.lemmas.len()));
        Ok(PolarityResources {
            lexicon: PolarityLexicon::parse(lang, lexicon)?,
            negation_cues,
            locutions: locs,
            stopwords,
        })
    }

    fn is_cue(&self, t: &AnalyzedToken) -> bool {
        self.negation_cues.contains(&t.surface.to_lowercase()) || self.negation_cues.contains(&t.lemma)
    }

    fn lexicon_hit(&self, t: &AnalyzedToken) -> Option<(String, LexClass)> {
        if let Some(c) = self.lexicon.get(&t.lemma) {
            return Some((t.lemma.clone(), c));
        }
        let lower = t.surface.to_lowercase();
        self.lexicon.get(&lower).map(|c| (lower, c))
    }

    fn is_stopword(&self, t: &AnalyzedToken) -> bool {
        self.stopwords.contains(&t.lemma) || self.stopwords.contains(&t.surface.to_lowercase())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UppercaseDenominator {
    /// Capital letters over all letters.
    #[default]
    Letters,
    /// Capital letters over all non-whitespace characters.
    Characters,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LexiconFeatureMode {
    #[default]
    Counts,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub negation_window: usize,
    pub min_frequency: u32,
    pub min_document_frequency: u32,
    pub uppercase: UppercaseDenominator,
    pub lexicon_features: LexiconFeatureMode,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            negation_window: 3,
            min_frequency: 2,
            min_document_frequency: 2,
            uppercase: UppercaseDenominator::Letters,
            lexicon_features: LexiconFeatureMode::Counts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub features: FeatureConfig,
    pub solver: SolverConfig,
}

/// Fixed scalar slots, in feature-index order.
pub const SCALAR_FEATURES: [&str; 14] = [
    "positive_count",
    "negative_count",
    "sentence_length",
    "uppercase_ratio",
    "exclamations",
    "questions",
    "interjection_count",
    "emo:smiley",
    "emo:crying",
    "emo:shock",
    "emo:mute",
    "emo:angry",
    "emo:kiss",
    "emo:sadness",
];

fn emoticon_slot(c: EmoticonCategory) -> usize {
    7 + c.index()
}

/// Feature dictionary frozen at training time.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "FeatureSpaceRepr", into = "FeatureSpaceRepr")]
pub struct FeatureSpace {
    pub config: FeatureConfig,
    names: Vec<String>,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct FeatureSpaceRepr {
    config: FeatureConfig,
    names: Vec<String>,
}

impl From<FeatureSpaceRepr> for FeatureSpace {
    fn from(r: FeatureSpaceRepr) -> Self {
        FeatureSpace::from_names(r.config, r.names)
    }
}

impl From<FeatureSpace> for FeatureSpaceRepr {
    fn from(s: FeatureSpace) -> Self {
        FeatureSpaceRepr {
            config: s.config,
            names: s.names,
        }
    }
}

impl PartialEq for FeatureSpace {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.names == other.names
    }
}

fn word_feature(t: &AnalyzedToken) -> String {
    format!("w:{}", t.surface.to_lowercase())
}

fn pos_feature(p: PosTag) -> String {
    format!("pos:{p}")
}

/// Lexicon and locution features of one analyzed text.
#[derive(Debug, Clone, Default, PartialEq)]
struct LexicalHits {
    features: Vec<String>,
    positive: u32,
    negative: u32,
}

fn lexical_hits(tokens: &[AnalyzedToken], res: &PolarityResources, window: usize) -> LexicalHits {
    let mut hits = LexicalHits::default();
    let bump = |class: LexClass, hits: &mut LexicalHits| match class {
        LexClass::Pos => hits.positive += 1,
        LexClass::Neg => hits.negative += 1,
    };
    let mut remaining = 0usize;
    for (i, t) in tokens.iter().enumerate() {
        if t.pos == PosTag::Punct {
            remaining = 0;
            continue;
        }
        if res.is_cue(t) {
            remaining = window;
            continue;
        }
        let negated = remaining > 0;
        for loc in &res.locutions {
            let n = loc.lemmas.len();
            if i + n <= tokens.len()
                && tokens[i..i + n]
                    .iter()
                    .zip(&loc.lemmas)
                    .all(|(t, l)| &t.lemma == l || t.surface.to_lowercase() == *l)
            {
                let class = if negated { loc.class.flipped() } else { loc.class };
                let suffix = if negated { "_NEG" } else { "" };
                hits.features.push(format!("loc:{}{suffix}", loc.name()));
                bump(class, &mut hits);
                break;
            }
        }
        if let Some((lemma, class)) = res.lexicon_hit(t) {
            if negated {
                hits.features.push(format!("lex:{lemma}_NEG"));
                bump(class.flipped(), &mut hits);
            } else {
                hits.features.push(format!("lex:{lemma}"));
                bump(class, &mut hits);
            }
        }
        remaining = remaining.saturating_sub(1);
    }
    hits
}

/// Share of capital letters among the counted characters of non-placeholder tokens.
pub fn uppercase_ratio(tokens: &[AnalyzedToken], mode: UppercaseDenominator) -> f64 {
    let mut upper = 0usize;
    let mut total = 0usize;
    for t in tokens.iter().filter(|t| !is_pipeline_token(&t.surface)) {
        for c in t.surface.chars() {
            if c.is_uppercase() {
                upper += 1;
            }
            match mode {
                UppercaseDenominator::Letters if c.is_alphabetic() => total += 1,
                UppercaseDenominator::Characters if !c.is_whitespace() => total += 1,
                _ => {}
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        (upper as f64 / total as f64).min(1.0)
    }
}

fn capped(n: u32) -> f64 {
    (n as f64).min(COUNT_CAP) / COUNT_CAP
}

impl FeatureSpace {
    fn from_names(config: FeatureConfig, names: Vec<String>) -> Self {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i as u32)).collect();
        FeatureSpace { config, names, index }
    }

    /// Builds the feature dictionary from training analyses only.
    pub fn build(docs: &[Analysis], res: &PolarityResources, config: FeatureConfig) -> Self {
        let mut freq: BTreeMap<String, (u32, u32)> = BTreeMap::new();
        let mut lexical: BTreeSet<String> = BTreeSet::new();
        for doc in docs {
            let mut seen = HashSet::new();
            for t in doc.tokens.iter().filter(|t| t.pos != PosTag::Punct && !res.is_stopword(t)) {
                let f = word_feature(t);
                let e = freq.entry(f.clone()).or_default();
                e.0 += 1;
                if seen.insert(f) {
                    e.1 += 1;
                }
            }
            lexical.extend(lexical_hits(&doc.tokens, res, config.negation_window).features);
        }
        let mut names: Vec<String> = SCALAR_FEATURES.iter().map(|s| s.to_string()).collect();
        names.extend(PosTag::ALL.iter().map(|&p| pos_feature(p)));
        names.extend(
            freq.into_iter()
                .filter(|(_, (f, df))| *f >= config.min_frequency && *df >= config.min_document_frequency)
                .map(|(name, _)| name),
        );
        names.extend(lexical);
        FeatureSpace::from_names(config, names)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    /// Word-form vocabulary (without the `w:` prefix).
    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.names.iter().filter_map(|n| n.strip_prefix("w:"))
    }
}

/// Sparse features of one analyzed text. Unknown words and lexical
/// features absent from the space are dropped.
pub fn extract_features(
    tokens: &[AnalyzedToken],
    norm: &NormalizedText,
    res: &PolarityResources,
    space: &FeatureSpace,
) -> SparseVec {
    let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
    let put = |idx: u32, v: f64, acc: &mut BTreeMap<u32, f64>| {
        if v != 0.0 {
            *acc.entry(idx).or_insert(0.0) += v;
        }
    };
    let cfg = &space.config;
    let hits = lexical_hits(tokens, res, cfg.negation_window);
    let text = &norm.text;
    let scalars = [
        capped(hits.positive),
        capped(hits.negative),
        (tokens.len() as f64).min(LENGTH_CAP) / LENGTH_CAP,
        uppercase_ratio(tokens, cfg.uppercase),
        capped(text.matches('!').count() as u32),
        capped(text.matches('?').count() as u32),
        capped(norm.interjection_count),
    ];
    for (i, v) in scalars.into_iter().enumerate() {
        put(i as u32, v, &mut acc);
    }
    for (c, n) in norm.emoticons.iter() {
        put(emoticon_slot(c) as u32, capped(n), &mut acc);
    }
    for t in tokens {
        if let Some(i) = space.index_of(&pos_feature(t.pos)) {
            put(i, 1.0, &mut acc);
        }
        if t.pos != PosTag::Punct && !res.is_stopword(t) {
            if let Some(i) = space.index_of(&word_feature(t)) {
                put(i, 1.0, &mut acc);
            }
        }
    }
    for f in &hits.features {
        if let Some(i) = space.index_of(f) {
            match cfg.lexicon_features {
                LexiconFeatureMode::Counts => put(i, 1.0, &mut acc),
                LexiconFeatureMode::Binary => {
                    acc.insert(i, 1.0);
                }
            }
        }
    }
    acc.into_iter().collect()
}

/// Untrained fallback: the sign of positive minus negative lexicon hits,
/// with negation handled as in feature extraction.
pub fn lexicon_polarity(doc: &Analysis, res: &PolarityResources, negation_window: usize) -> Polarity {
    let hits = lexical_hits(&doc.tokens, res, negation_window);
    match hits.positive.cmp(&hits.negative) {
        std::cmp::Ordering::Greater => Polarity::Positive,
        std::cmp::Ordering::Less => Polarity::Negative,
        std::cmp::Ordering::Equal => Polarity::Neutral,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub text: String,
    pub lang: String,
    pub label: Polarity,
    #[serde(default, alias = "entity", skip_serializing_if = "Option::is_none")]
    pub target_entity: Option<String>,
}

/// Reads a JSON-lines dataset of `{text, lang, label, entity?}` objects.
pub fn read_dataset(text: &str) -> Result<Vec<LabeledExample>, PolarityError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PolarityError::Parse {
                file: "dataset".into(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_dataset(examples: &[LabeledExample]) -> String {
    examples
        .iter()
        .map(|e| serde_json::to_string(e).expect("plain struct") + "\n")
        .collect()
}

/// A normalized and analyzed text.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub norm: NormalizedText,
    pub tokens: Vec<AnalyzedToken>,
}

/// Normalizes and analyzes a text for classification.
pub fn analyze_text(text: &str, lang: &str, kind: SourceKind, res: &Resources) -> Result<Analysis, PolarityError> {
    let norm = res.normalization.normalize_message(text, lang, kind);
    let tokens = res.analyzer.analyze(&norm.text, lang)?;
    Ok(Analysis { norm, tokens })
}

fn common_language(examples: &[LabeledExample]) -> Result<&str, PolarityError> {
    let first = examples.first().ok_or(PolarityError::EmptyData)?;
    if let Some(other) = examples.iter().find(|e| e.lang != first.lang) {
        return Err(PolarityError::MixedLanguages {
            expected: first.lang.clone(),
            found: other.lang.clone(),
        });
    }
    Ok(&first.lang)
}

/// Trained one-vs-rest classifier with its frozen feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarityModel {
    pub format_version: u32,
    pub lang: String,
    pub config: TrainConfig,
    pub space: FeatureSpace,
    /// One classifier per class, in [`Polarity::ALL`] order.
    pub classes: Vec<BinaryModel>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Polarity,
    /// Raw margins in [`Polarity::ALL`] order.
    pub scores: [f64; 3],
}

/// Argmax with ties resolved towards the earlier class.
pub fn argmax_label(scores: &[f64; 3]) -> Polarity {
    let mut best = 0;
    for i in 1..3 {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    Polarity::ALL[best]
}

fn train_prepared(
    lang: &str,
    docs: &[&Analysis],
    labels: &[Polarity],
    res: &PolarityResources,
    config: &TrainConfig,
) -> Result<PolarityModel, PolarityError> {
    if docs.is_empty() {
        return Err(PolarityError::EmptyData);
    }
    let distinct: HashSet<Polarity> = labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(PolarityError::SingleClassData);
    }
    let owned: Vec<Analysis> = docs.iter().map(|d| (*d).clone()).collect();
    let space = FeatureSpace::build(&owned, res, config.features);
    let xs: Vec<SparseVec> = owned
        .iter()
        .map(|d| extract_features(&d.tokens, &d.norm, res, &space))
        .collect();
    let classes = Polarity::ALL
        .par_iter()
        .map(|&class| {
            let ys: Vec<f64> = labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
            let solver = SolverConfig {
                seed: config.solver.seed.wrapping_add(class.index() as u64),
                ..config.solver
            };
            linear::train_binary(&xs, &ys, space.len(), &solver).map(|(m, _)| m)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PolarityModel {
        format_version: MODEL_FORMAT_VERSION,
        lang: lang.to_string(),
        config: *config,
        space,
        classes,
    })
}

fn polarity_resources<'a>(res: &'a Resources, lang: &str) -> Result<&'a PolarityResources, PolarityError> {
    res.polarity(lang)
        .ok_or_else(|| PolarityError::UnsupportedLanguage(lang.to_string()))
}

fn prepare(examples: &[LabeledExample], res: &Resources) -> Result<Vec<Analysis>, PolarityError> {
    examples
        .par_iter()
        .map(|e| analyze_text(&e.text, &e.lang, SourceKind::Social, res))
        .collect()
}

/// Trains a model on examples of a single language.
pub fn train(examples: &[LabeledExample], config: &TrainConfig, res: &Resources) -> Result<PolarityModel, PolarityError> {
    let lang = common_language(examples)?;
    let pres = polarity_resources(res, lang)?;
    let docs = prepare(examples, res)?;
    let refs: Vec<&Analysis> = docs.iter().collect();
    let labels: Vec<Polarity> = examples.iter().map(|e| e.label).collect();
    train_prepared(lang, &refs, &labels, pres, config)
}

impl PolarityModel {
    pub fn validate(&self) -> Result<(), PolarityError> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(PolarityError::InvalidModel(format!(
                "format version {} (expected {MODEL_FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.classes.len() != 3 {
            return Err(PolarityError::InvalidModel(format!("{} class vectors", self.classes.len())));
        }
        if let Some(c) = self.classes.iter().find(|c| c.weights.len() != self.space.len()) {
            return Err(PolarityError::InvalidModel(format!(
                "weight vector of length {} for {} features",
                c.weights.len(),
                self.space.len()
            )));
        }
        Ok(())
    }

    pub fn scores(&self, x: &[(u32, f64)]) -> [f64; 3] {
        [self.classes[0].score(x), self.classes[1].score(x), self.classes[2].score(x)]
    }

    pub fn predict_analysis(&self, doc: &Analysis, res: &PolarityResources) -> Prediction {
        let x = extract_features(&doc.tokens, &doc.norm, res, &self.space);
        let scores = self.scores(&x);
        Prediction {
            label: argmax_label(&scores),
            scores,
        }
    }

    /// Classifies a social-media text.
    pub fn predict(&self, text: &str, res: &Resources) -> Result<Prediction, PolarityError> {
        self.predict_kind(text, SourceKind::Social, res)
    }

    pub fn predict_kind(&self, text: &str, kind: SourceKind, res: &Resources) -> Result<Prediction, PolarityError> {
        let pres = polarity_resources(res, &self.lang)?;
        let doc = analyze_text(text, &self.lang, kind, res)?;
        Ok(self.predict_analysis(&doc, pres))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, PolarityError> {
        let m: PolarityModel = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), PolarityError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PolarityError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Held-out evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// F1 per class in [`Polarity::ALL`] order.
    pub f1: [f64; 3],
    pub folds: usize,
    /// Rows are true classes, columns predicted classes.
    pub confusion: [[u64; 3]; 3],
}

impl EvalReport {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Polarity, Polarity)>, folds: usize) -> Self {
        let mut confusion = [[0u64; 3]; 3];
        for (truth, pred) in pairs {
            confusion[truth.index()][pred.index()] += 1;
        }
        let total: u64 = confusion.iter().flatten().sum();
        let correct: u64 = (0..3).map(|i| confusion[i][i]).sum();
        let mut f1 = [0.0; 3];
        for (c, f) in f1.iter_mut().enumerate() {
            let tp = confusion[c][c] as f64;
            let predicted: u64 = (0..3).map(|r| confusion[r][c]).sum();
            let support: u64 = confusion[c].iter().sum();
            let denom = predicted as f64 + support as f64;
            *f = if denom == 0.0 { 0.0 } else { 2.0 * tp / denom };
        }
        EvalReport {
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            f1,
            folds,
            confusion,
        }
    }

    pub fn support(&self, class: Polarity) -> u64 {
        self.confusion[class.index()].iter().sum()
    }

    pub fn f1_of(&self, class: Polarity) -> f64 {
        self.f1[class.index()]
    }

    /// `acc fpos fneg fneu` header and values, as percentages.
    pub fn table(&self) -> String {
        format!(
            "acc\tfpos\tfneg\tfneu\n{:.2}\t{:.2}\t{:.2}\t{:.2}\n",
            self.accuracy * 100.0,
            self.f1_of(Polarity::Positive) * 100.0,
            self.f1_of(Polarity::Negative) * 100.0,
            self.f1_of(Polarity::Neutral) * 100.0
        )
    }
}

/// Assigns examples to `k` stratified folds. Each class is shuffled with
/// the seed and dealt round-robin, continuing where the previous class
/// stopped, so fold sizes differ by at most one.
pub fn stratified_folds(labels: &[Polarity], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, PolarityError> {
    if k < 2 || k > labels.len() {
        return Err(PolarityError::InvalidFolds { k, n: labels.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in Polarity::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Stratified k-fold cross-validation; the feature space is rebuilt from
/// each training split.
pub fn cross_validate(
    examples: &[LabeledExample],
    k: usize,
    config: &TrainConfig,
    res: &Resources,
) -> Result<EvalReport, PolarityError> {
    let lang = common_language(examples)?;
    let pres = polarity_resources(res, lang)?;
    let labels: Vec<Polarity> = examples.iter().map(|e| e.label).collect();
    let folds = stratified_folds(&labels, k, config.solver.seed)?;
    let docs = prepare(examples, res)?;
    let per_fold = folds
        .par_iter()
        .map(|held| {
            let held_set: HashSet<usize> = held.iter().copied().collect();
            let train_idx: Vec<usize> = (0..docs.len()).filter(|i| !held_set.contains(i)).collect();
            let train_docs: Vec<&Analysis> = train_idx.iter().map(|&i| &docs[i]).collect();
            let train_labels: Vec<Polarity> = train_idx.iter().map(|&i| labels[i]).collect();
            let model = train_prepared(lang, &train_docs, &train_labels, pres, config)?;
            Ok(held
                .iter()
                .map(|&i| (labels[i], model.predict_analysis(&docs[i], pres).label))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, PolarityError>>()?;
    Ok(EvalReport::from_pairs(per_fold.into_iter().flatten(), k))
}

/// Scores a trained model on a labeled set of its own language.
pub fn evaluate(model: &PolarityModel, examples: &[LabeledExample], res: &Resources) -> Result<EvalReport, PolarityError> {
    if examples.is_empty() {
        return Err(PolarityError::EmptyData);
    }
    let lang = common_language(examples)?;
    if lang != model.lang {
        return Err(PolarityError::MixedLanguages {
            expected: model.lang.clone(),
            found: lang.to_string(),
        });
    }
    let pres = polarity_resources(res, lang)?;
    let docs = prepare(examples, res)?;
    let pairs = examples.iter().zip(&docs).map(|(e, d)| (e.label, model.predict_analysis(d, pres).label));
    Ok(EvalReport::from_pairs(pairs, 0))
}

/// Copies the message label onto every distinct matched entity (leaf
/// category), in order of first appearance.
pub fn assign_entity_polarity(label: Polarity, matches: &[MatchResult]) -> Vec<(String, Polarity)> {
    let mut seen = HashSet::new();
    matches
        .iter()
        .map(MatchResult::entity)
        .filter(|e| seen.insert(e.to_string()))
        .map(|e| (e.to_string(), label))
        .collect()
}

/// Combines several references to one entity into a single label:
/// `N+P = NEU`, `N+NEU = N`, `P+NEU = P`. Each N cancels one P and NEU is
/// neutral, so the result is the sign of the P/N balance. Returns `None`
/// for an empty input.
pub fn combine_entity_polarity(refs: &[Polarity]) -> Option<Polarity> {
    if refs.is_empty() {
        return None;
    }
    let pos = refs.iter().filter(|&&p| p == Polarity::Positive).count();
    let neg = refs.iter().filter(|&&p| p == Polarity::Negative).count();
    Some(match pos.cmp(&neg) {
        std::cmp::Ordering::Greater => Polarity::Positive,
        std::cmp::Ordering::Less => Polarity::Negative,
        std::cmp::Ordering::Equal => Polarity::Neutral,
    })
}
