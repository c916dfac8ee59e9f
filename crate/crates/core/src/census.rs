//! Regional census of social-media users.
//!
//! The census starts from authors of geotagged messages inside a bounding
//! box, grows through the follower graph with manual labels, and is
//! finally extended by a linear classifier over follower/friend features.
//! Free-text profile locations are resolved by weighted geocoder votes.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linear::{self, BinaryModel, LinearError, SolverConfig, SparseVec};
use crate::records::records;

/// Followers and friends retained per user when building the graph.
pub const NEIGHBOUR_LIMIT: usize = 5000;

#[derive(Debug, thiserror::Error)]
pub enum CensusError {
    #[error("no labeled examples")]
    EmptyData,
    #[error("labeled examples contain a single class")]
    SingleClassData,
    #[error("manual labels are required for census building")]
    MissingManualLabels,
    #[error("cannot make {k} folds from {n} examples")]
    InvalidFolds { k: usize, n: usize },
    #[error("{file} line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("invalid bounding box {0:?}")]
    InvalidBBox(String),
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialUser {
    pub user_id: String,
    #[serde(default)]
    pub followers_total: u64,
    #[serde(default)]
    pub friends_total: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location_text: Option<String>,
}

/// A message of the sample stream: its author and optional geotag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMessage {
    #[serde(flatten)]
    pub author: SocialUser,
    /// `(lat, lon)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geo: Option<(f64, f64)>,
}

/// Reads a JSON-lines stream sample.
pub fn read_stream(text: &str) -> Result<Vec<StreamMessage>, CensusError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CensusError::Parse {
                file: "stream".into(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub west: f64,
    pub south: f64,
    pub east: f64,
    pub north: f64,
}

impl BBox {
    /// Parses `w,s,e,n`.
    pub fn parse(s: &str) -> Result<Self, CensusError> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| CensusError::InvalidBBox(s.to_string()))?;
        let [west, south, east, north] = parts[..] else {
            return Err(CensusError::InvalidBBox(s.to_string()));
        };
        if south > north || west > east {
            return Err(CensusError::InvalidBBox(s.to_string()));
        }
        Ok(BBox {
            west,
            south,
            east,
            north,
        })
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.south..=self.north).contains(&lat) && (self.west..=self.east).contains(&lon)
    }
}

/// Step (i): distinct authors of messages geotagged inside `bbox`, in
/// order of first appearance.
pub fn collect_seed_users(stream: &[StreamMessage], bbox: &BBox) -> Vec<SocialUser> {
    let mut seen = HashSet::new();
    stream
        .iter()
        .filter(|m| m.geo.is_some_and(|(lat, lon)| bbox.contains(lat, lon)))
        .filter(|m| seen.insert(m.author.user_id.clone()))
        .map(|m| m.author.clone())
        .collect()
}

/// Follow graph with per-user neighbour lists truncated to the first
/// [`NEIGHBOUR_LIMIT`] entries in input order.
#[derive(Debug, Clone, Default)]
pub struct FollowGraph {
    followers: HashMap<String, Vec<String>>,
    friends: HashMap<String, Vec<String>>,
}

impl FollowGraph {
    /// Builds from `(from, to)` pairs meaning "from follows to". Self-edges
    /// and duplicates are dropped.
    pub fn from_edges<'a, I>(edges: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut g = FollowGraph::default();
        let mut seen = HashSet::new();
        for (from, to) in edges {
            if from == to || !seen.insert((from, to)) {
                continue;
            }
            let fr = g.friends.entry(from.to_string()).or_default();
            if fr.len() < NEIGHBOUR_LIMIT {
                fr.push(to.to_string());
            }
            let fo = g.followers.entry(to.to_string()).or_default();
            if fo.len() < NEIGHBOUR_LIMIT {
                fo.push(from.to_string());
            }
        }
        g
    }

    /// Parses a `from<TAB>to` edge list.
    pub fn parse(text: &str) -> Result<Self, CensusError> {
        let mut edges = Vec::new();
        for rec in records(text) {
            let [from, to] = rec.fields[..] else {
                return Err(CensusError::Parse {
                    file: "graph".into(),
                    line: rec.line,
                    message: "expected from<TAB>to".into(),
                });
            };
            edges.push((from.trim(), to.trim()));
        }
        Ok(FollowGraph::from_edges(edges))
    }

    pub fn followers(&self, user: &str) -> &[String] {
        self.followers.get(user).map_or(&[], Vec::as_slice)
    }

    pub fn friends(&self, user: &str) -> &[String] {
        self.friends.get(user).map_or(&[], Vec::as_slice)
    }

    pub fn users(&self) -> impl Iterator<Item = &str> {
        let mut all: Vec<&str> = self.followers.keys().chain(self.friends.keys()).map(String::as_str).collect();
        all.sort_unstable();
        all.dedup();
        all.into_iter()
    }
}

/// Step (iii): users outside the census adjacent to it, with the number of
/// distinct census users they follow or are followed by. Sorted by
/// descending count, then user id.
pub fn rank_candidates(census: &HashSet<String>, graph: &FollowGraph) -> Vec<(String, u32)> {
    let mut adjacent: HashMap<&str, HashSet<&str>> = HashMap::new();
    for member in census {
        for n in graph.followers(member).iter().chain(graph.friends(member)) {
            if !census.contains(n) {
                adjacent.entry(n.as_str()).or_default().insert(member.as_str());
            }
        }
    }
    let mut ranked: Vec<(String, u32)> = adjacent
        .into_iter()
        .map(|(u, members)| (u.to_string(), members.len() as u32))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensusFeatures {
    pub followers_total: u64,
    pub friends_total: u64,
    pub in_census_followers: u64,
    pub in_census_friends: u64,
    pub rel_followers: f64,
    pub rel_friends: f64,
}

fn log_scale(n: u64, top: f64) -> f64 {
    ((n as f64).ln_1p() / top.ln_1p()).min(1.0)
}

impl CensusFeatures {
    /// Features of `user` against `census`, never counting the user itself.
    /// Totals come from the profile and fall back to graph degrees.
    pub fn compute(user: &str, profile: Option<&SocialUser>, census: &HashSet<String>, graph: &FollowGraph) -> Self {
        let in_census = |list: &[String]| list.iter().filter(|u| u.as_str() != user && census.contains(*u)).count() as u64;
        let followers = graph.followers(user);
        let friends = graph.friends(user);
        let followers_total = profile.map_or(0, |p| p.followers_total).max(followers.len() as u64);
        let friends_total = profile.map_or(0, |p| p.friends_total).max(friends.len() as u64);
        let in_census_followers = in_census(followers);
        let in_census_friends = in_census(friends);
        CensusFeatures {
            followers_total,
            friends_total,
            in_census_followers,
            in_census_friends,
            rel_followers: in_census_followers as f64 / followers_total.max(1) as f64,
            rel_friends: in_census_friends as f64 / friends_total.max(1) as f64,
        }
    }

    /// Classifier input: log-scaled totals and in-census counts plus the
    /// two ratios, all in `[0, 1]`.
    pub fn to_vector(&self) -> SparseVec {
        let top = NEIGHBOUR_LIMIT as f64;
        [
            log_scale(self.followers_total, 1e7),
            log_scale(self.friends_total, 1e7),
            log_scale(self.in_census_followers, top),
            log_scale(self.in_census_friends, top),
            self.rel_followers,
            self.rel_friends,
        ]
        .into_iter()
        .enumerate()
        .filter(|(_, v)| *v != 0.0)
        .map(|(i, v)| (i as u32, v))
        .collect()
    }
}

pub const CENSUS_FEATURE_DIM: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryEvalReport {
    pub accuracy: f64,
    pub folds: usize,
    /// `[[tn, fp], [fn, tp]]`.
    pub confusion: [[u64; 2]; 2],
}

impl BinaryEvalReport {
    pub fn recall(&self) -> f64 {
        let [_, [fneg, tp]] = self.confusion;
        if tp + fneg == 0 {
            0.0
        } else {
            tp as f64 / (tp + fneg) as f64
        }
    }
}

fn binary_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, CensusError> {
    if k < 2 || k > labels.len() {
        return Err(CensusError::InvalidFolds { k, n: labels.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in [false, true] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            folds[next % k].push(i);
            next += 1;
        }
    }
    Ok(folds)
}

fn check_classes(labels: &[bool]) -> Result<(), CensusError> {
    if labels.is_empty() {
        return Err(CensusError::EmptyData);
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(CensusError::SingleClassData);
    }
    Ok(())
}

fn fit(xs: &[SparseVec], labels: &[bool], solver: &SolverConfig) -> Result<BinaryModel, CensusError> {
    let ys: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    Ok(linear::train_binary(xs, &ys, CENSUS_FEATURE_DIM, solver)?.0)
}

/// Step (iv): trains the in-region classifier and reports `folds`-fold
/// stratified cross-validation.
pub fn train_census_classifier(
    labeled: &[(CensusFeatures, bool)],
    solver: &SolverConfig,
    folds: usize,
) -> Result<(BinaryModel, BinaryEvalReport), CensusError> {
    let labels: Vec<bool> = labeled.iter().map(|(_, l)| *l).collect();
    check_classes(&labels)?;
    let xs: Vec<SparseVec> = labeled.iter().map(|(f, _)| f.to_vector()).collect();
    let mut confusion = [[0u64; 2]; 2];
    for held in binary_folds(&labels, folds, solver.seed)? {
        let held_set: HashSet<usize> = held.iter().copied().collect();
        let train: Vec<usize> = (0..xs.len()).filter(|i| !held_set.contains(i)).collect();
        let tx: Vec<SparseVec> = train.iter().map(|&i| xs[i].clone()).collect();
        let ty: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
        check_classes(&ty)?;
        let m = fit(&tx, &ty, solver)?;
        for &i in &held {
            let pred = m.score(&xs[i]) > 0.0;
            confusion[labels[i] as usize][pred as usize] += 1;
        }
    }
    let total: u64 = confusion.iter().flatten().sum();
    let report = BinaryEvalReport {
        accuracy: (confusion[0][0] + confusion[1][1]) as f64 / total as f64,
        folds,
        confusion,
    };
    tracing::info!(accuracy = report.accuracy, folds, "census classifier cross-validation");
    Ok((fit(&xs, &labels, solver)?, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    SeedGeo,
    Manual,
    Classified,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::SeedGeo => "seed_geo",
            Provenance::Manual => "manual",
            Provenance::Classified => "classified",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Provenance::SeedGeo, Provenance::Manual, Provenance::Classified]
            .into_iter()
            .find(|p| p.as_str() == s)
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusEntry {
    pub user_id: String,
    pub provenance: Provenance,
    /// Classifier margin; zero for seed and manual entries.
    pub score: f64,
}

/// Manual in-region judgements, `user_id<TAB>1|0`.
pub fn parse_manual_labels(text: &str) -> Result<HashMap<String, bool>, CensusError> {
    let mut out = HashMap::new();
    for rec in records(text) {
        let [user, label] = rec.fields[..] else {
            return Err(CensusError::Parse {
                file: "manual labels".into(),
                line: rec.line,
                message: "expected user_id<TAB>label".into(),
            });
        };
        let label = match label.trim() {
            "1" | "true" | "in" | "yes" => true,
            "0" | "false" | "out" | "no" => false,
            other => {
                return Err(CensusError::Parse {
                    file: "manual labels".into(),
                    line: rec.line,
                    message: format!("bad label {other:?}"),
                })
            }
        };
        out.insert(user.trim().to_string(), label);
    }
    Ok(out)
}

pub fn format_census(entries: &[CensusEntry]) -> String {
    let mut out = String::from("# user_id\tprovenance\tscore\n");
    for e in entries {
        out.push_str(&format!("{}\t{}\t{}\n", e.user_id, e.provenance, e.score));
    }
    out
}

pub fn parse_census(text: &str) -> Result<Vec<CensusEntry>, CensusError> {
    records(text)
        .map(|rec| {
            let bad = |message: &str| CensusError::Parse {
                file: "census".into(),
                line: rec.line,
                message: message.to_string(),
            };
            let [user, prov, score] = rec.fields[..] else {
                return Err(bad("expected user_id<TAB>provenance<TAB>score"));
            };
            Ok(CensusEntry {
                user_id: user.to_string(),
                provenance: Provenance::parse(prov).ok_or_else(|| bad("unknown provenance"))?,
                score: score.parse().map_err(|_| bad("bad score"))?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CensusParams {
    pub n_manual: usize,
    pub n_auto: usize,
    pub folds: usize,
    pub solver: SolverConfig,
}

impl Default for CensusParams {
    fn default() -> Self {
        CensusParams {
            n_manual: 10_000,
            n_auto: 20_000,
            folds: 4,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CensusOutcome {
    /// Sorted by user id.
    pub entries: Vec<CensusEntry>,
    /// Users judged manually in steps (ii) and (iii).
    pub labeled: Vec<String>,
    /// Every user whose membership was decided: labeled seeds, labeled
    /// candidates and automatically classified candidates.
    pub examined: Vec<String>,
    /// Absent when the labeled data had a single class and steps (iv)
    /// and (v) were skipped.
    pub classifier: Option<(BinaryModel, BinaryEvalReport)>,
}

impl CensusOutcome {
    pub fn contains(&self, user: &str) -> bool {
        self.entries.binary_search_by(|e| e.user_id.as_str().cmp(user)).is_ok()
    }
}

/// Runs the five census steps. `manual` holds the human judgements: users
/// without one are skipped in steps (ii) and (iii), and in step (v) a
/// judgement overrides the classifier.
pub fn build_census(
    stream: &[StreamMessage],
    graph: &FollowGraph,
    bbox: &BBox,
    manual: Option<&HashMap<String, bool>>,
    params: &CensusParams,
) -> Result<CensusOutcome, CensusError> {
    let manual = manual.ok_or(CensusError::MissingManualLabels)?;
    let mut profiles: HashMap<&str, &SocialUser> = HashMap::new();
    for m in stream {
        profiles.entry(m.author.user_id.as_str()).or_insert(&m.author);
    }
    let mut entries: BTreeMap<String, CensusEntry> = BTreeMap::new();
    let mut labeled: Vec<(String, bool)> = Vec::new();
    let mut examined: Vec<String> = Vec::new();
    let add = |entries: &mut BTreeMap<String, CensusEntry>, user: &str, provenance, score| {
        entries.entry(user.to_string()).or_insert(CensusEntry {
            user_id: user.to_string(),
            provenance,
            score,
        });
    };

    // (i) + (ii)
    for seed in collect_seed_users(stream, bbox) {
        if let Some(&label) = manual.get(&seed.user_id) {
            labeled.push((seed.user_id.clone(), label));
            examined.push(seed.user_id.clone());
            if label {
                add(&mut entries, &seed.user_id, Provenance::SeedGeo, 0.0);
            }
        }
    }
    tracing::info!(seeds = entries.len(), "census seeds labeled");

    // (iii)
    let census: HashSet<String> = entries.keys().cloned().collect();
    for (user, _) in rank_candidates(&census, graph).into_iter().take(params.n_manual) {
        if let Some(&label) = manual.get(&user) {
            labeled.push((user.clone(), label));
            examined.push(user.clone());
            if label {
                add(&mut entries, &user, Provenance::Manual, 0.0);
            }
        }
    }
    tracing::info!(members = entries.len(), "census after manual expansion");

    // (iv)
    let census: HashSet<String> = entries.keys().cloned().collect();
    let features = |user: &str| CensusFeatures::compute(user, profiles.get(user).copied(), &census, graph);
    let training: Vec<(CensusFeatures, bool)> = labeled.iter().map(|(u, l)| (features(u), *l)).collect();
    let classifier = match train_census_classifier(&training, &params.solver, params.folds) {
        Ok(c) => Some(c),
        Err(CensusError::SingleClassData | CensusError::EmptyData | CensusError::InvalidFolds { .. }) => {
            tracing::warn!(labeled = training.len(), "too few or single-class census labels; skipping classification");
            None
        }
        Err(e) => return Err(e),
    };

    // (v)
    if let Some((model, _)) = &classifier {
        let decided: HashSet<&str> = labeled.iter().map(|(u, _)| u.as_str()).collect();
        let ranked: Vec<String> = rank_candidates(&census, graph)
            .into_iter()
            .map(|(u, _)| u)
            .filter(|u| !decided.contains(u.as_str()))
            .take(params.n_auto)
            .collect();
        let mut accepted = Vec::new();
        for user in ranked {
            examined.push(user.clone());
            match manual.get(&user) {
                Some(true) => accepted.push((user, Provenance::Manual, 0.0)),
                Some(false) => {}
                None => {
                    let score = model.score(&features(&user).to_vector());
                    if score > 0.0 {
                        accepted.push((user, Provenance::Classified, score));
                    }
                }
            }
        }
        for (user, provenance, score) in accepted {
            add(&mut entries, &user, provenance, score);
        }
    }
    tracing::info!(members = entries.len(), "census complete");
    Ok(CensusOutcome {
        entries: entries.into_values().collect(),
        labeled: labeled.into_iter().map(|(u, _)| u).collect(),
        examined,
        classifier,
    })
}

/// Rebuilds the census and merges it into `previous`. Earlier entries are
/// kept unless a manual label now places the user out of the region; a
/// manual judgement upgrades a classified entry to `manual`.
pub fn update_census(
    previous: &[CensusEntry],
    stream: &[StreamMessage],
    graph: &FollowGraph,
    bbox: &BBox,
    manual: Option<&HashMap<String, bool>>,
    params: &CensusParams,
) -> Result<CensusOutcome, CensusError> {
    let mut outcome = build_census(stream, graph, bbox, manual, params)?;
    let labels = manual.ok_or(CensusError::MissingManualLabels)?;
    let mut merged: BTreeMap<String, CensusEntry> =
        outcome.entries.drain(..).map(|e| (e.user_id.clone(), e)).collect();
    for old in previous {
        if labels.get(&old.user_id) == Some(&false) {
            continue;
        }
        let keep = match merged.get(&old.user_id) {
            None => true,
            Some(new) => old.provenance < new.provenance,
        };
        if keep {
            let mut entry = old.clone();
            if entry.provenance == Provenance::Classified && labels.get(&entry.user_id) == Some(&true) {
                entry.provenance = Provenance::Manual;
                entry.score = 0.0;
            }
            merged.insert(entry.user_id.clone(), entry);
        }
    }
    outcome.entries = merged.into_values().collect();
    Ok(outcome)
}

// Geocoding

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoAnswer {
    pub lat: f64,
    pub lon: f64,
    pub region: String,
    pub country: String,
    /// Provider confidence in `[0, 1]`.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderOutcome {
    Answer(GeoAnswer),
    /// The provider knows no such place.
    Miss,
    /// No response; the provider's weight is redistributed.
    Timeout,
}

/// A geocoding service.
pub trait GeoProvider: Send + Sync {
    fn name(&self) -> &str;
    fn lookup(&self, query: &str) -> ProviderOutcome;
}

/// Deterministic provider answering from a fixed table.
#[derive(Debug, Clone, Default)]
pub struct FixtureProvider {
    name: String,
    answers: HashMap<String, GeoAnswer>,
    timeouts: HashSet<String>,
}

impl FixtureProvider {
    pub fn new(name: &str) -> Self {
        FixtureProvider {
            name: name.to_string(),
            ..Default::default()
        }
    }

    pub fn answer(mut self, query: &str, region: &str, country: &str, confidence: f64) -> Self {
        self.answers.insert(
            query.to_lowercase(),
            GeoAnswer {
                lat: 0.0,
                lon: 0.0,
                region: region.to_string(),
                country: country.to_string(),
                confidence,
            },
        );
        self
    }

    pub fn timeout_on(mut self, query: &str) -> Self {
        self.timeouts.insert(query.to_lowercase());
        self
    }
}

impl GeoProvider for FixtureProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn lookup(&self, query: &str) -> ProviderOutcome {
        let q = query.trim().to_lowercase();
        if self.timeouts.contains(&q) {
            return ProviderOutcome::Timeout;
        }
        self.answers
            .get(&q)
            .cloned()
            .map_or(ProviderOutcome::Miss, ProviderOutcome::Answer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "region")]
pub enum GeoDecision {
    Region(String),
    Fictitious,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoResolution {
    pub query: String,
    pub results: Vec<(String, ProviderOutcome)>,
    /// Normalized weights of the providers that responded.
    pub weights: Vec<(String, f64)>,
    pub decision: GeoDecision,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeoConfig {
    /// Weighted share a region needs to be accepted (strictly above).
    pub threshold: f64,
    /// Confidence at which conflicting country answers mark a place as fictitious.
    pub conflict_confidence: f64,
}

impl Default for GeoConfig {
    fn default() -> Self {
        GeoConfig {
            threshold: 0.5,
            conflict_confidence: 0.8,
        }
    }
}

/// Resolves a free-text location by weighted provider votes. Providers that
/// time out are dropped and the remaining weights renormalized; a miss
/// keeps its weight but votes for nothing.
pub fn resolve_location(
    location_text: &str,
    providers: &[(&dyn GeoProvider, f64)],
    config: &GeoConfig,
) -> GeoResolution {
    let results: Vec<(String, ProviderOutcome, f64)> = providers
        .iter()
        .map(|(p, w)| (p.name().to_string(), p.lookup(location_text), w.max(0.0)))
        .collect();
    let live: Vec<&(String, ProviderOutcome, f64)> =
        results.iter().filter(|(_, o, _)| *o != ProviderOutcome::Timeout).collect();
    let total: f64 = live.iter().map(|(_, _, w)| w).sum();
    let weights: Vec<(String, f64)> = if total > 0.0 {
        live.iter().map(|(n, _, w)| (n.clone(), w / total)).collect()
    } else {
        Vec::new()
    };
    let answers: Vec<(&GeoAnswer, f64)> = live
        .iter()
        .zip(&weights)
        .filter_map(|((_, o, _), (_, w))| match o {
            ProviderOutcome::Answer(a) => Some((a, *w)),
            _ => None,
        })
        .collect();
    let confident: HashSet<&str> = answers
        .iter()
        .filter(|(a, _)| a.confidence >= config.conflict_confidence)
        .map(|(a, _)| a.country.as_str())
        .collect();
    let decision = if confident.len() >= 2 {
        GeoDecision::Fictitious
    } else {
        let mut votes: BTreeMap<&str, f64> = BTreeMap::new();
        for (a, w) in &answers {
            *votes.entry(a.region.as_str()).or_default() += w;
        }
        votes
            .into_iter()
            .filter(|(_, w)| *w > config.threshold)
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map_or(GeoDecision::Unresolved, |(r, _)| GeoDecision::Region(r.to_string()))
    };
    GeoResolution {
        query: location_text.to_string(),
        results: results.into_iter().map(|(n, o, _)| (n, o)).collect(),
        weights,
        decision,
    }
}

/// Persistent cache of resolutions keyed by the normalized query.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GeoCache {
    entries: BTreeMap<String, GeoResolution>,
}

impl GeoCache {
    pub fn resolve(
        &mut self,
        location_text: &str,
        providers: &[(&dyn GeoProvider, f64)],
        config: &GeoConfig,
    ) -> GeoResolution {
        let key = location_text.trim().to_lowercase();
        self.entries
            .entry(key)
            .or_insert_with(|| resolve_location(location_text, providers, config))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self, CensusError> {
        if !path.exists() {
            return Ok(GeoCache::default());
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CensusError> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn user(id: &str) -> SocialUser {
        SocialUser {
            user_id: id.into(),
            followers_total: 0,
            friends_total: 0,
            location_text: None,
        }
    }

    fn msg(id: &str, geo: Option<(f64, f64)>) -> StreamMessage {
        StreamMessage { author: user(id), geo }
    }

    const BOX: BBox = BBox {
        west: -3.5,
        south: 42.4,
        east: -1.7,
        north: 43.5,
    };

    #[test]
    fn seeds_need_geo_inside_the_box() {
        let stream = [
            msg("in", Some((43.26, -2.93))),
            msg("out", Some((40.4, -3.7))),
            msg("none", None),
            msg("in", Some((43.3, -2.0))),
        ];
        let seeds = collect_seed_users(&stream, &BOX);
        assert_eq!(seeds.iter().map(|u| u.user_id.as_str()).collect::<Vec<_>>(), ["in"]);
    }

    #[test]
    fn bbox_parsing() {
        assert_eq!(BBox::parse("-3.5,42.4,-1.7,43.5").unwrap(), BOX);
        assert!(BBox::parse("1,2,3").is_err());
        assert!(BBox::parse("0,5,1,4").is_err());
    }

    #[test]
    fn ranking_counts_distinct_census_neighbours() {
        let g = FollowGraph::from_edges([("x", "a"), ("x", "b"), ("c", "x"), ("a", "x"), ("y", "a"), ("a", "b"), ("z", "q")]);
        let census: HashSet<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let ranked = rank_candidates(&census, &g);
        assert_eq!(ranked, [("x".to_string(), 3), ("y".to_string(), 1)]);
    }

    #[test]
    fn neighbour_lists_are_truncated() {
        let names: Vec<String> = (0..NEIGHBOUR_LIMIT + 10).map(|i| format!("u{i}")).collect();
        let g = FollowGraph::from_edges(names.iter().map(|n| (n.as_str(), "hub")));
        assert_eq!(g.followers("hub").len(), NEIGHBOUR_LIMIT);
        assert_eq!(g.followers("hub")[0], "u0");
    }

    #[test]
    fn features_exclude_self() {
        let g = FollowGraph::from_edges([("a", "u"), ("b", "u"), ("u", "a")]);
        let census: HashSet<String> = ["a", "u"].iter().map(|s| s.to_string()).collect();
        let f = CensusFeatures::compute("u", None, &census, &g);
        assert_eq!((f.in_census_followers, f.in_census_friends), (1, 1));
        assert_eq!((f.followers_total, f.friends_total), (2, 1));
        assert_eq!((f.rel_followers, f.rel_friends), (0.5, 1.0));
    }

    #[test]
    fn single_class_is_refused() {
        let f = CensusFeatures::compute("u", None, &HashSet::new(), &FollowGraph::default());
        assert!(matches!(
            train_census_classifier(&[(f, true), (f, true)], &SolverConfig::default(), 2),
            Err(CensusError::SingleClassData)
        ));
    }

    #[test]
    fn missing_labels_and_empty_graph() {
        let stream = [msg("s1", Some((43.0, -2.5))), msg("s2", Some((43.0, -2.5)))];
        let g = FollowGraph::default();
        assert!(matches!(
            build_census(&stream, &g, &BOX, None, &CensusParams::default()),
            Err(CensusError::MissingManualLabels)
        ));
        let labels: HashMap<String, bool> = [("s1".to_string(), true), ("s2".to_string(), false)].into();
        let out = build_census(&stream, &g, &BOX, Some(&labels), &CensusParams::default()).unwrap();
        assert_eq!(out.entries.len(), 1);
        assert_eq!(out.entries[0].provenance, Provenance::SeedGeo);
    }

    #[test]
    fn census_file_roundtrip() {
        let entries = vec![
            CensusEntry {
                user_id: "a".into(),
                provenance: Provenance::Manual,
                score: 0.0,
            },
            CensusEntry {
                user_id: "b".into(),
                provenance: Provenance::Classified,
                score: 0.25,
            },
        ];
        assert_eq!(parse_census(&format_census(&entries)).unwrap(), entries);
    }

    #[test]
    fn geocoding_votes() {
        let a = FixtureProvider::new("a")
            .answer("Bilbao", "Basque Country", "ES", 0.9)
            .answer("Middle earth", "Shire", "NZ", 0.9)
            .timeout_on("Gasteiz");
        let b = FixtureProvider::new("b")
            .answer("Bilbao", "Basque Country", "ES", 0.95)
            .answer("Middle earth", "Mordor", "US", 0.85)
            .answer("Gasteiz", "Basque Country", "ES", 0.9);
        let providers: [(&dyn GeoProvider, f64); 2] = [(&a, 1.0), (&b, 1.0)];
        let cfg = GeoConfig::default();
        let r = resolve_location("Bilbao", &providers, &cfg);
        assert_eq!(r.decision, GeoDecision::Region("Basque Country".into()));
        let total: f64 = r.weights.iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(resolve_location("Middle earth", &providers, &cfg).decision, GeoDecision::Fictitious);
        let g = resolve_location("Gasteiz", &providers, &cfg);
        assert_eq!(g.decision, GeoDecision::Region("Basque Country".into()));
        assert_eq!(g.weights, [("b".to_string(), 1.0)]);
        assert_eq!(resolve_location("Atlantis", &providers, &cfg).decision, GeoDecision::Unresolved);
    }

    #[test]
    fn cache_returns_identical_results() {
        let a = FixtureProvider::new("a").answer("Bilbao", "Basque Country", "ES", 0.9);
        let providers: [(&dyn GeoProvider, f64); 1] = [(&a, 1.0)];
        let mut cache = GeoCache::default();
        let first = cache.resolve("Bilbao", &providers, &GeoConfig::default());
        let empty: [(&dyn GeoProvider, f64); 0] = [];
        let second = cache.resolve(" bilbao", &empty, &GeoConfig::default());
        assert_eq!(first.decision, second.decision);
        assert_eq!(cache.len(), 1);
    }
}
