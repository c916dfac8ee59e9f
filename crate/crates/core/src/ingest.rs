//! Source polling, replay and deduplication.
//!
//! Each enabled source gets its own poller thread producing into one
//! bounded queue; a full queue blocks the poller (backpressure) instead of
//! dropping messages.

use std::collections::HashSet;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use crossbeam_channel::Sender;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::records::records;
use crate::store::{ExportedMention, Store};
use crate::SourceKind;

/// Future timestamps beyond this many seconds are clamped to the fetch time.
pub const CLOCK_SKEW_SECS: i64 = 300;
pub const MIN_FEED_POLL_SECS: u64 = 30;
pub const DEFAULT_QUEUE_CAPACITY: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("fetching {endpoint}: {message}")]
    Fetch { endpoint: String, message: String },
    #[error("parsing feed from {endpoint}: {message}")]
    Parse { endpoint: String, message: String },
    #[error("invalid source {source_id}: {message}")]
    InvalidSource { source_id: String, message: String },
    #[error("sources line {line}: {message}")]
    SourcesFile { line: usize, message: String },
    #[error("unknown replay speed {0:?}")]
    ReplaySpeed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceType {
    Feed,
    StreamReplay,
    StreamLive,
}

impl SourceType {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceType::Feed => "feed",
            SourceType::StreamReplay => "stream_replay",
            SourceType::StreamLive => "stream_live",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [SourceType::Feed, SourceType::StreamReplay, SourceType::StreamLive]
            .into_iter()
            .find(|t| t.as_str() == s)
    }

    /// Feeds carry press articles; streams carry social messages.
    pub fn source_kind(self) -> SourceKind {
        match self {
            SourceType::Feed => SourceKind::Feed,
            SourceType::StreamReplay | SourceType::StreamLive => SourceKind::Social,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub source_id: String,
    pub kind: SourceType,
    /// URL or file path.
    pub endpoint: String,
    /// Seconds between polls; feeds only.
    #[serde(default)]
    pub poll_interval: u64,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
}

fn enabled_default() -> bool {
    true
}

impl SourceConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |message: String| IngestError::InvalidSource {
            source_id: self.source_id.clone(),
            message,
        };
        if self.source_id.trim().is_empty() {
            return Err(bad("empty source id".into()));
        }
        if self.endpoint.trim().is_empty() {
            return Err(bad("empty endpoint".into()));
        }
        if self.kind == SourceType::Feed && self.poll_interval < MIN_FEED_POLL_SECS {
            return Err(bad(format!("feed poll interval {}s is below {MIN_FEED_POLL_SECS}s", self.poll_interval)));
        }
        Ok(())
    }
}

/// Parses `source_id<TAB>kind<TAB>endpoint<TAB>poll_interval[<TAB>enabled]`.
pub fn parse_sources(text: &str) -> Result<Vec<SourceConfig>, IngestError> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for rec in records(text) {
        let err = |message: String| IngestError::SourcesFile { line: rec.line, message };
        if !(3..=5).contains(&rec.fields.len()) {
            return Err(err(format!("expected 3 to 5 fields, found {}", rec.fields.len())));
        }
        let kind = SourceType::parse(rec.fields[1].trim()).ok_or_else(|| err(format!("unknown kind {:?}", rec.fields[1])))?;
        let poll_interval = match rec.fields.get(3).map(|s| s.trim()).filter(|s| !s.is_empty()) {
            Some(p) => p.parse().map_err(|_| err(format!("bad poll interval {p:?}")))?,
            None => 0,
        };
        let enabled = match rec.fields.get(4).map(|s| s.trim()) {
            None | Some("") | Some("1") | Some("true") | Some("yes") => true,
            Some("0") | Some("false") | Some("no") => false,
            Some(other) => return Err(err(format!("bad enabled flag {other:?}"))),
        };
        let src = SourceConfig {
            source_id: rec.fields[0].trim().to_string(),
            kind,
            endpoint: rec.fields[2].trim().to_string(),
            poll_interval,
            enabled,
        };
        src.validate().map_err(|e| err(e.to_string()))?;
        if !ids.insert(src.source_id.clone()) {
            return Err(err(format!("duplicate source id {}", src.source_id)));
        }
        out.push(src);
    }
    Ok(out)
}

pub fn format_sources(sources: &[SourceConfig]) -> String {
    let mut out = String::from("# source_id\tkind\tendpoint\tpoll_interval\tenabled\n");
    for s in sources {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            s.source_id,
            s.kind.as_str(),
            s.endpoint,
            s.poll_interval,
            s.enabled
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawMessage {
    pub source_id: String,
    /// Unique within the source.
    pub native_id: String,
    pub source_kind: SourceKind,
    pub text: String,
    pub author_id: String,
    pub author_handle: Option<String>,
    pub author_followers: Option<u64>,
    pub timestamp: DateTime<Utc>,
    /// `(lat, lon)`.
    pub geo: Option<(f64, f64)>,
    pub is_repost: bool,
    pub repost_of: Option<String>,
}

pub fn clamp_timestamp(ts: DateTime<Utc>, now: DateTime<Utc>) -> DateTime<Utc> {
    if ts > now + chrono::Duration::seconds(CLOCK_SKEW_SECS) {
        now
    } else {
        ts
    }
}

/// Retrieves raw endpoint content.
pub trait Fetcher: Send + Sync {
    fn fetch(&self, endpoint: &str) -> Result<Vec<u8>, IngestError>;
}

/// HTTP(S) via a blocking client; anything else is read as a file path.
#[derive(Debug, Clone)]
pub struct DefaultFetcher {
    agent: ureq::Agent,
}

impl DefaultFetcher {
    pub fn new(timeout: Duration) -> Self {
        DefaultFetcher {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl Default for DefaultFetcher {
    fn default() -> Self {
        DefaultFetcher::new(Duration::from_secs(30))
    }
}

impl Fetcher for DefaultFetcher {
    fn fetch(&self, endpoint: &str) -> Result<Vec<u8>, IngestError> {
        let fail = |message: String| IngestError::Fetch {
            endpoint: endpoint.to_string(),
            message,
        };
        if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
            let resp = self.agent.get(endpoint).call().map_err(|e| fail(e.to_string()))?;
            let mut body = Vec::new();
            std::io::Read::read_to_end(&mut resp.into_reader(), &mut body).map_err(|e| fail(e.to_string()))?;
            Ok(body)
        } else {
            let path = endpoint.strip_prefix("file://").unwrap_or(endpoint);
            std::fs::read(path).map_err(|e| fail(e.to_string()))
        }
    }
}

/// Persistent or in-memory record of admitted `(source_id, native_id)` pairs.
pub trait SeenSet: Send + Sync {
    fn is_seen(&self, source_id: &str, native_id: &str) -> bool;
    /// Records the pair; returns whether it was new.
    fn mark(&self, source_id: &str, native_id: &str) -> bool;
}

#[derive(Debug, Default)]
pub struct MemorySeen(Mutex<HashSet<(String, String)>>);

impl SeenSet for MemorySeen {
    fn is_seen(&self, source_id: &str, native_id: &str) -> bool {
        self.0
            .lock()
            .expect("seen set poisoned")
            .contains(&(source_id.to_string(), native_id.to_string()))
    }

    fn mark(&self, source_id: &str, native_id: &str) -> bool {
        self.0
            .lock()
            .expect("seen set poisoned")
            .insert((source_id.to_string(), native_id.to_string()))
    }
}

impl SeenSet for Store {
    fn is_seen(&self, source_id: &str, native_id: &str) -> bool {
        Store::is_seen(self, source_id, native_id).unwrap_or_else(|e| {
            tracing::error!(error = %e, "dedup lookup failed");
            false
        })
    }

    fn mark(&self, source_id: &str, native_id: &str) -> bool {
        self.mark_seen(source_id, native_id).unwrap_or_else(|e| {
            tracing::error!(error = %e, "dedup insert failed");
            false
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Accept,
    Drop,
}

/// Exact-id deduplication. Reposts are separate messages with their own
/// ids and pass through, flagged by their source.
pub fn dedupe(msg: &RawMessage, seen: &dyn SeenSet) -> Admission {
    if seen.mark(&msg.source_id, &msg.native_id) {
        Admission::Accept
    } else {
        Admission::Drop
    }
}

fn html_tags() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)<!--.*?-->|<[^>]*>").expect("static regex"))
}

/// Strips markup and decodes the common entities.
pub fn plain_text(html: &str) -> String {
    let stripped = html_tags().replace_all(html, " ");
    let decoded = stripped
        .replace("&nbsp;", " ")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&apos;", "'")
        .replace("&amp;", "&");
    decoded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses an RSS or Atom document. Each entry becomes one message whose
/// text is the title followed by the body; undated entries take `now`.
pub fn parse_feed(bytes: &[u8], source: &SourceConfig, now: DateTime<Utc>) -> Result<Vec<RawMessage>, IngestError> {
    let feed = feed_rs::parser::parse(bytes).map_err(|e| IngestError::Parse {
        endpoint: source.endpoint.clone(),
        message: e.to_string(),
    })?;
    let mut ids = HashSet::new();
    let mut out = Vec::new();
    for entry in feed.entries {
        if !ids.insert(entry.id.clone()) {
            continue;
        }
        let title = entry.title.map(|t| plain_text(&t.content)).unwrap_or_default();
        let body = entry
            .content
            .and_then(|c| c.body)
            .or_else(|| entry.summary.map(|s| s.content))
            .map(|b| plain_text(&b))
            .unwrap_or_default();
        let text = match (title.is_empty(), body.is_empty()) {
            (false, false) => format!("{title}. {body}"),
            (false, true) => title,
            _ => body,
        };
        if text.is_empty() {
            continue;
        }
        let author = entry.authors.first().map(|p| p.name.clone());
        out.push(RawMessage {
            source_id: source.source_id.clone(),
            native_id: entry.id,
            source_kind: SourceKind::Feed,
            text,
            author_id: author.clone().unwrap_or_else(|| source.source_id.clone()),
            author_handle: author,
            author_followers: None,
            timestamp: clamp_timestamp(entry.published.or(entry.updated).unwrap_or(now), now),
            geo: None,
            is_repost: false,
            repost_of: None,
        });
    }
    Ok(out)
}

/// Fetches and parses a feed, skipping entries already admitted.
pub fn poll_feed(
    source: &SourceConfig,
    fetcher: &dyn Fetcher,
    seen: &dyn SeenSet,
    now: DateTime<Utc>,
) -> Result<Vec<RawMessage>, IngestError> {
    if source.kind != SourceType::Feed {
        return Err(IngestError::InvalidSource {
            source_id: source.source_id.clone(),
            message: "not a feed".into(),
        });
    }
    let bytes = fetcher.fetch(&source.endpoint)?;
    let mut msgs = parse_feed(&bytes, source, now)?;
    msgs.retain(|m| !seen.is_seen(&m.source_id, &m.native_id));
    Ok(msgs)
}

/// Converts one export line into a message of `source_id`.
pub fn message_from_export(e: ExportedMention, source_id: &str, now: DateTime<Utc>) -> RawMessage {
    RawMessage {
        source_id: source_id.to_string(),
        native_id: e.native_id,
        source_kind: e.source_kind.unwrap_or(SourceKind::Social),
        text: e.text,
        author_id: e.author_id,
        author_handle: e.author_handle,
        author_followers: e.author_followers,
        timestamp: clamp_timestamp(e.timestamp, now),
        geo: e.geo,
        is_repost: e.is_repost,
        repost_of: e.repost_of,
    }
}

/// Reads a JSON-lines export file as a message stream. Malformed lines are
/// skipped and counted.
pub struct ReplayReader<R> {
    lines: std::io::Lines<R>,
    source_id: String,
    malformed: u64,
}

impl ReplayReader<BufReader<std::fs::File>> {
    pub fn open(path: &Path, source_id: &str) -> Result<Self, IngestError> {
        Ok(ReplayReader::new(BufReader::new(std::fs::File::open(path)?), source_id))
    }
}

impl<R: BufRead> ReplayReader<R> {
    pub fn new(reader: R, source_id: &str) -> Self {
        ReplayReader {
            lines: reader.lines(),
            source_id: source_id.to_string(),
            malformed: 0,
        }
    }

    pub fn malformed(&self) -> u64 {
        self.malformed
    }
}

impl<R: BufRead> Iterator for ReplayReader<R> {
    type Item = RawMessage;

    fn next(&mut self) -> Option<RawMessage> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => {
                    tracing::warn!(error = %e, "replay read failed");
                    self.malformed += 1;
                    return None;
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<ExportedMention>(&line) {
                Ok(e) => return Some(message_from_export(e, &self.source_id, Utc::now())),
                Err(e) => {
                    tracing::debug!(error = %e, "malformed replay line");
                    self.malformed += 1;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReplaySpeed {
    MaxRate,
    /// Gaps between consecutive timestamps are reproduced.
    Realtime,
    /// Messages per second.
    Rate(f64),
}

impl std::str::FromStr for ReplaySpeed {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, IngestError> {
        match s {
            "max" | "rate" => Ok(ReplaySpeed::MaxRate),
            "realtime" => Ok(ReplaySpeed::Realtime),
            other => match other.parse::<f64>() {
                Ok(r) if r > 0.0 && r.is_finite() => Ok(ReplaySpeed::Rate(r)),
                _ => Err(IngestError::ReplaySpeed(other.to_string())),
            },
        }
    }
}

/// Sleeps in short slices so a stop request is honoured promptly.
/// Returns false if stopped.
fn sleep_unless_stopped(d: Duration, stop: &AtomicBool) -> bool {
    let deadline = Instant::now() + d;
    while Instant::now() < deadline {
        if stop.load(Ordering::Relaxed) {
            return false;
        }
        thread::sleep((deadline - Instant::now()).min(Duration::from_millis(100)));
    }
    !stop.load(Ordering::Relaxed)
}

/// A message with its admission sequence number.
#[derive(Debug, Clone)]
pub struct Envelope {
    pub seq: u64,
    pub msg: RawMessage,
}

/// Live social stream adapter. No implementation ships; replay files
/// stand in for the live source.
pub trait LiveStream: Send {
    /// Blocks until messages are available; an empty batch ends the stream.
    fn next_batch(&mut self) -> Result<Vec<RawMessage>, IngestError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PollerStats {
    pub emitted: u64,
    pub malformed: u64,
    pub errors: u64,
}

/// Shared poller plumbing.
#[derive(Clone)]
pub struct PollerContext {
    pub queue: Sender<Envelope>,
    pub seq: Arc<AtomicU64>,
    pub stop: Arc<AtomicBool>,
    pub seen: Arc<dyn SeenSet>,
    pub fetcher: Arc<dyn Fetcher>,
    pub speed: ReplaySpeed,
}

impl PollerContext {
    /// Blocks while the queue is full. Returns false once the consumers are gone.
    fn send(&self, msg: RawMessage) -> bool {
        let seq = self.seq.fetch_add(1, Ordering::SeqCst);
        self.queue.send(Envelope { seq, msg }).is_ok()
    }
}

fn run_feed(source: &SourceConfig, ctx: &PollerContext) -> PollerStats {
    let mut stats = PollerStats::default();
    loop {
        match poll_feed(source, ctx.fetcher.as_ref(), ctx.seen.as_ref(), Utc::now()) {
            Ok(msgs) => {
                tracing::info!(source = %source.source_id, new = msgs.len(), "feed polled");
                for m in msgs {
                    if !ctx.send(m) {
                        return stats;
                    }
                    stats.emitted += 1;
                }
            }
            Err(e) => {
                stats.errors += 1;
                tracing::warn!(source = %source.source_id, error = %e, "feed poll failed");
            }
        }
        if !sleep_unless_stopped(Duration::from_secs(source.poll_interval), &ctx.stop) {
            return stats;
        }
    }
}

fn run_replay(source: &SourceConfig, ctx: &PollerContext) -> PollerStats {
    let mut stats = PollerStats::default();
    let mut reader = match ReplayReader::open(Path::new(&source.endpoint), &source.source_id) {
        Ok(r) => r,
        Err(e) => {
            tracing::error!(source = %source.source_id, error = %e, "cannot open replay file");
            stats.errors += 1;
            return stats;
        }
    };
    let started = Instant::now();
    let mut previous: Option<DateTime<Utc>> = None;
    for msg in reader.by_ref() {
        if ctx.stop.load(Ordering::Relaxed) {
            break;
        }
        let wait = match ctx.speed {
            ReplaySpeed::MaxRate => Duration::ZERO,
            ReplaySpeed::Realtime => previous
                .and_then(|p| (msg.timestamp - p).to_std().ok())
                .unwrap_or(Duration::ZERO),
            ReplaySpeed::Rate(r) => {
                let due = started + Duration::from_secs_f64(stats.emitted as f64 / r);
                due.saturating_duration_since(Instant::now())
            }
        };
        if !wait.is_zero() && !sleep_unless_stopped(wait, &ctx.stop) {
            break;
        }
        previous = Some(msg.timestamp);
        if !ctx.send(msg) {
            break;
        }
        stats.emitted += 1;
    }
    stats.malformed = reader.malformed();
    tracing::info!(source = %source.source_id, emitted = stats.emitted, malformed = stats.malformed, "replay finished");
    stats
}

fn run_live(source: &SourceConfig, mut stream: Box<dyn LiveStream>, ctx: &PollerContext) -> PollerStats {
    let mut stats = PollerStats::default();
    while !ctx.stop.load(Ordering::Relaxed) {
        match stream.next_batch() {
            Ok(batch) if batch.is_empty() => break,
            Ok(batch) => {
                for m in batch {
                    if !ctx.send(m) {
                        return stats;
                    }
                    stats.emitted += 1;
                }
            }
            Err(e) => {
                stats.errors += 1;
                tracing::warn!(source = %source.source_id, error = %e, "live stream error");
            }
        }
    }
    stats
}

/// Starts one poller thread per enabled source. `live` supplies adapters
/// for `stream_live` sources by source id.
pub fn spawn_pollers(
    sources: &[SourceConfig],
    ctx: &PollerContext,
    mut live: impl FnMut(&SourceConfig) -> Option<Box<dyn LiveStream>>,
) -> Vec<(String, JoinHandle<PollerStats>)> {
    let mut handles = Vec::new();
    for source in sources.iter().filter(|s| s.enabled) {
        let (source, ctx) = (source.clone(), ctx.clone());
        let id = source.source_id.clone();
        let handle = match source.kind {
            SourceType::Feed => thread::spawn(move || run_feed(&source, &ctx)),
            SourceType::StreamReplay => thread::spawn(move || run_replay(&source, &ctx)),
            SourceType::StreamLive => match live(&source) {
                Some(stream) => thread::spawn(move || run_live(&source, stream, &ctx)),
                None => {
                    tracing::error!(source = %source.source_id, "no live stream adapter configured; source skipped");
                    continue;
                }
            },
        };
        handles.push((id, handle));
    }
    handles
}
