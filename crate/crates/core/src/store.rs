//! Persistent mention store and the periodically rebuilt aggregate view.
//!
//! Base tables live in SQLite (WAL journal, full sync, so a committed
//! insert survives a crash). Aggregates are materialized by
//! [`Store::refresh_view`] into an immutable snapshot that readers pin for
//! the duration of a query.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use rusqlite::{params, Connection, OptionalExtension, Row};
use serde::{Deserialize, Serialize};

use crate::polarity::LabeledExample;
use crate::{Polarity, SourceKind};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("mention {source_id}/{native_id} {span:?} already stored")]
    DuplicateMention {
        source_id: String,
        native_id: String,
        span: (u32, u32),
    },
    #[error("mention has no keyword matches")]
    EmptyMatches,
    #[error("mention {0} not found")]
    NotFound(i64),
    #[error("corrupt row: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Sqlite(#[from] rusqlite::Error),
}

pub type Result<T> = std::result::Result<T, StoreError>;

/// Author influence bucket by follower count. Unknown counts fall in the
/// lowest bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tier {
    #[serde(rename = "lt1k")]
    Under1k,
    #[serde(rename = "1k-10k")]
    From1kTo10k,
    #[serde(rename = "gt10k")]
    Over10k,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Under1k, Tier::From1kTo10k, Tier::Over10k];

    pub fn from_followers(followers: Option<u64>) -> Self {
        match followers {
            Some(n) if n > 10_000 => Tier::Over10k,
            Some(n) if n >= 1_000 => Tier::From1kTo10k,
            _ => Tier::Under1k,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Under1k => "lt1k",
            Tier::From1kTo10k => "1k-10k",
            Tier::Over10k => "gt10k",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Tier::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MatchRef {
    pub keyword_id: String,
    /// Slash-separated, root first.
    pub category_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionRecord {
    /// Assigned by the store.
    pub mention_id: Option<i64>,
    pub source_id: String,
    pub native_id: String,
    pub source_kind: SourceKind,
    /// Character span of the unit inside the original message or article.
    pub unit_span: (u32, u32),
    pub unit_text: String,
    pub full_text_ref: Option<String>,
    pub lang: String,
    pub timestamp: DateTime<Utc>,
    pub author_id: String,
    pub matches: Vec<MatchRef>,
    pub predicted_label: Polarity,
    pub corrected_label: Option<Polarity>,
    pub is_repost: bool,
    /// Native id of the reposted message, same source.
    pub repost_of: Option<String>,
    pub in_census: bool,
}

impl MentionRecord {
    /// The label aggregates count: the correction when there is one.
    pub fn effective_label(&self) -> Polarity {
        self.corrected_label.unwrap_or(self.predicted_label)
    }

    pub fn day(&self) -> NaiveDate {
        self.timestamp.date_naive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorRecord {
    pub author_id: String,
    pub handle: Option<String>,
    pub followers: Option<u64>,
    pub in_census: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AggregateRow {
    pub day: NaiveDate,
    pub category_path: String,
    pub lang: String,
    pub polarity: Polarity,
    pub source_kind: SourceKind,
    pub tier: Tier,
    pub count: u64,
}

/// An immutable snapshot of the aggregate view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateView {
    pub version: u64,
    pub refreshed_at: Option<DateTime<Utc>>,
    /// Sorted by every key column.
    pub rows: Vec<AggregateRow>,
}

/// Query filters shared by aggregate and mention queries. Every field is
/// optional; `from`/`to` are inclusive UTC days.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Filters {
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    pub lang: Option<String>,
    /// Category path prefix, matched on whole path segments.
    pub category: Option<String>,
    pub source_kind: Option<SourceKind>,
    pub polarity: Option<Polarity>,
    pub tier: Option<Tier>,
}

/// Whether `path` equals `prefix` or descends from it.
pub fn category_under(path: &str, prefix: &str) -> bool {
    let prefix = prefix.trim_end_matches('/');
    prefix.is_empty() || path == prefix || path.strip_prefix(prefix).is_some_and(|rest| rest.starts_with('/'))
}

impl Filters {
    pub fn period(from: Option<NaiveDate>, to: Option<NaiveDate>) -> Self {
        Filters {
            from,
            to,
            ..Filters::default()
        }
    }

    fn day_ok(&self, day: NaiveDate) -> bool {
        self.from.is_none_or(|f| day >= f) && self.to.is_none_or(|t| day <= t)
    }

    pub fn accepts_row(&self, r: &AggregateRow) -> bool {
        self.day_ok(r.day)
            && self.lang.as_ref().is_none_or(|l| *l == r.lang)
            && self.category.as_ref().is_none_or(|c| category_under(&r.category_path, c))
            && self.source_kind.is_none_or(|k| k == r.source_kind)
            && self.polarity.is_none_or(|p| p == r.polarity)
            && self.tier.is_none_or(|t| t == r.tier)
    }

    /// `tier` is the author's bucket, which lives outside the record.
    pub fn accepts_mention(&self, m: &MentionRecord, tier: Tier) -> bool {
        self.day_ok(m.day())
            && self.lang.as_ref().is_none_or(|l| *l == m.lang)
            && self
                .category
                .as_ref()
                .is_none_or(|c| m.matches.iter().any(|r| category_under(&r.category_path, c)))
            && self.source_kind.is_none_or(|k| k == m.source_kind)
            && self.polarity.is_none_or(|p| p == m.effective_label())
            && self.tier.is_none_or(|t| t == tier)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorCount {
    pub author_id: String,
    pub handle: Option<String>,
    pub mentions: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadEntry {
    pub mention: MentionRecord,
    pub reposts: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub mention_id: i64,
    pub previous: Option<Polarity>,
    pub label: Polarity,
    pub operator_id: String,
    pub at: DateTime<Utc>,
}

/// One line of the JSON-lines export, which doubles as the replay format.
/// The optional trailing fields are accepted on import but never written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedMention {
    #[serde(default)]
    pub mention_id: Option<i64>,
    pub source_id: String,
    pub native_id: String,
    pub text: String,
    #[serde(default)]
    pub lang: String,
    pub timestamp: DateTime<Utc>,
    pub author_id: String,
    #[serde(default)]
    pub matches: Vec<MatchRef>,
    #[serde(default = "neutral")]
    pub polarity: Polarity,
    #[serde(default)]
    pub corrected: Option<Polarity>,
    #[serde(default)]
    pub is_repost: bool,
    #[serde(default, skip_serializing)]
    pub repost_of: Option<String>,
    #[serde(default, skip_serializing)]
    pub source_kind: Option<SourceKind>,
    #[serde(default, skip_serializing)]
    pub author_handle: Option<String>,
    #[serde(default, skip_serializing)]
    pub author_followers: Option<u64>,
    #[serde(default, skip_serializing)]
    pub geo: Option<(f64, f64)>,
}

fn neutral() -> Polarity {
    Polarity::Neutral
}

/// One processed message ready for admission.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedMessage {
    pub source_id: String,
    pub native_id: String,
    pub author: Option<AuthorRecord>,
    /// Empty when nothing matched; the message is still marked seen.
    pub mentions: Vec<MentionRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AdmitReport {
    /// New messages, with or without mentions.
    pub messages: u64,
    pub duplicates: u64,
    pub rejected: u64,
    pub mention_ids: Vec<i64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportReport {
    pub imported: u64,
    pub duplicates: u64,
    pub malformed: u64,
}

/// Source registration as persisted by the store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRow {
    pub source_id: String,
    pub kind: String,
    pub endpoint: String,
    pub poll_interval: u64,
    pub enabled: bool,
}

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS mentions (
    mention_id      INTEGER PRIMARY KEY AUTOINCREMENT,
    source_id       TEXT NOT NULL,
    native_id       TEXT NOT NULL,
    source_kind     TEXT NOT NULL,
    unit_start      INTEGER NOT NULL,
    unit_end        INTEGER NOT NULL,
    unit_text       TEXT NOT NULL,
    full_text_ref   TEXT,
    lang            TEXT NOT NULL,
    ts              TEXT NOT NULL,
    day             TEXT NOT NULL,
    author_id       TEXT NOT NULL,
    predicted_label TEXT NOT NULL,
    corrected_label TEXT,
    is_repost       INTEGER NOT NULL,
    repost_of       TEXT,
    in_census       INTEGER NOT NULL,
    UNIQUE (source_id, native_id, unit_start, unit_end)
);
CREATE INDEX IF NOT EXISTS mentions_ts ON mentions (ts);
CREATE INDEX IF NOT EXISTS mentions_author ON mentions (author_id);
CREATE INDEX IF NOT EXISTS mentions_repost ON mentions (source_id, repost_of);
CREATE TABLE IF NOT EXISTS mention_matches (
    mention_id    INTEGER NOT NULL REFERENCES mentions (mention_id),
    keyword_id    TEXT NOT NULL,
    category_path TEXT NOT NULL,
    PRIMARY KEY (mention_id, keyword_id, category_path)
);
CREATE TABLE IF NOT EXISTS authors (
    author_id TEXT PRIMARY KEY,
    handle    TEXT,
    followers INTEGER,
    in_census INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS corrections (
    seq         INTEGER PRIMARY KEY AUTOINCREMENT,
    mention_id  INTEGER NOT NULL,
    previous    TEXT,
    label       TEXT NOT NULL,
    operator_id TEXT NOT NULL,
    at          TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS seen_messages (
    source_id TEXT NOT NULL,
    native_id TEXT NOT NULL,
    PRIMARY KEY (source_id, native_id)
);
CREATE TABLE IF NOT EXISTS sources (
    source_id     TEXT PRIMARY KEY,
    kind          TEXT NOT NULL,
    endpoint      TEXT NOT NULL,
    poll_interval INTEGER NOT NULL,
    enabled       INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS meta (
    key   TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
";

fn ts_text(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Nanos, true)
}

fn corrupt(what: &str, value: &str) -> rusqlite::Error {
    rusqlite::Error::FromSqlConversionFailure(
        0,
        rusqlite::types::Type::Text,
        format!("bad {what} {value:?}").into(),
    )
}

fn parse_polarity(s: &str) -> rusqlite::Result<Polarity> {
    Polarity::parse(s).ok_or_else(|| corrupt("polarity", s))
}

fn parse_ts(s: &str) -> rusqlite::Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|_| corrupt("timestamp", s))
}

const MENTION_COLUMNS: &str = "m.mention_id, m.source_id, m.native_id, m.source_kind, m.unit_start, m.unit_end, \
     m.unit_text, m.full_text_ref, m.lang, m.ts, m.author_id, m.predicted_label, m.corrected_label, \
     m.is_repost, m.repost_of, m.in_census, a.followers";

/// A mention row without its matches, plus the author's follower count.
fn mention_from_row(row: &Row<'_>) -> rusqlite::Result<(MentionRecord, Option<u64>)> {
    let kind: String = row.get(3)?;
    let corrected: Option<String> = row.get(12)?;
    let m = MentionRecord {
        mention_id: Some(row.get(0)?),
        source_id: row.get(1)?,
        native_id: row.get(2)?,
        source_kind: SourceKind::parse(&kind).ok_or_else(|| corrupt("source kind", &kind))?,
        unit_span: (row.get(4)?, row.get(5)?),
        unit_text: row.get(6)?,
        full_text_ref: row.get(7)?,
        lang: row.get(8)?,
        timestamp: parse_ts(&row.get::<_, String>(9)?)?,
        author_id: row.get(10)?,
        matches: Vec::new(),
        predicted_label: parse_polarity(&row.get::<_, String>(11)?)?,
        corrected_label: corrected.as_deref().map(parse_polarity).transpose()?,
        is_repost: row.get(13)?,
        repost_of: row.get(14)?,
        in_census: row.get(15)?,
    };
    let followers: Option<i64> = row.get(16)?;
    Ok((m, followers.map(|f| f.max(0) as u64)))
}

/// Mention and audit storage plus the current aggregate view.
pub struct Store {
    writer: Mutex<Connection>,
    /// Second connection for reads when the database is a file.
    reader: Option<Mutex<Connection>>,
    view: RwLock<Arc<AggregateView>>,
}

impl fmt::Debug for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Store").field("view_version", &self.view().version).finish()
    }
}

impl Store {
    pub fn open(path: &Path) -> Result<Self> {
        let writer = Connection::open(path)?;
        writer.pragma_update(None, "journal_mode", "WAL")?;
        writer.pragma_update(None, "synchronous", "FULL")?;
        writer.busy_timeout(std::time::Duration::from_secs(10))?;
        writer.execute_batch(SCHEMA)?;
        let reader = Connection::open(path)?;
        reader.busy_timeout(std::time::Duration::from_secs(10))?;
        Self::finish(writer, Some(reader))
    }

    pub fn open_in_memory() -> Result<Self> {
        let writer = Connection::open_in_memory()?;
        writer.execute_batch(SCHEMA)?;
        Self::finish(writer, None)
    }

    fn finish(writer: Connection, reader: Option<Connection>) -> Result<Self> {
        let store = Store {
            writer: Mutex::new(writer),
            reader: reader.map(Mutex::new),
            view: RwLock::new(Arc::new(AggregateView {
                version: 0,
                refreshed_at: None,
                rows: Vec::new(),
            })),
        };
        Ok(store)
    }

    fn write(&self) -> MutexGuard<'_, Connection> {
        self.writer.lock().expect("store writer poisoned")
    }

    fn read(&self) -> MutexGuard<'_, Connection> {
        match &self.reader {
            Some(r) => r.lock().expect("store reader poisoned"),
            None => self.write(),
        }
    }

    fn insert_in(tx: &Connection, m: &MentionRecord) -> Result<i64> {
        if m.matches.is_empty() {
            return Err(StoreError::EmptyMatches);
        }
        let inserted = tx.execute(
            "INSERT OR IGNORE INTO mentions (source_id, native_id, source_kind, unit_start, unit_end, unit_text,
                full_text_ref, lang, ts, day, author_id, predicted_label, corrected_label, is_repost, repost_of, in_census)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13, ?14, ?15, ?16)",
            params![
                m.source_id,
                m.native_id,
                m.source_kind.as_str(),
                m.unit_span.0,
                m.unit_span.1,
                m.unit_text,
                m.full_text_ref,
                m.lang,
                ts_text(&m.timestamp),
                m.day().to_string(),
                m.author_id,
                m.predicted_label.as_str(),
                m.corrected_label.map(Polarity::as_str),
                m.is_repost,
                m.repost_of,
                m.in_census,
            ],
        )?;
        if inserted == 0 {
            return Err(StoreError::DuplicateMention {
                source_id: m.source_id.clone(),
                native_id: m.native_id.clone(),
                span: m.unit_span,
            });
        }
        let id = tx.last_insert_rowid();
        let mut stmt =
            tx.prepare_cached("INSERT OR IGNORE INTO mention_matches (mention_id, keyword_id, category_path) VALUES (?1, ?2, ?3)")?;
        for r in &m.matches {
            stmt.execute(params![id, r.keyword_id, r.category_path])?;
        }
        Ok(id)
    }

    /// Durable once this returns.
    pub fn insert_mention(&self, m: &MentionRecord) -> Result<i64> {
        let mut conn = self.write();
        let tx = conn.transaction()?;
        let id = Self::insert_in(&tx, m)?;
        tx.commit()?;
        Ok(id)
    }

    /// Inserts a batch in one transaction. Each element reports its own
    /// outcome; rejected records do not affect the others.
    pub fn insert_mentions(&self, batch: &[MentionRecord]) -> Result<Vec<Result<i64>>> {
        let mut conn = self.write();
        let tx = conn.transaction()?;
        let mut out = Vec::with_capacity(batch.len());
        for m in batch {
            tx.execute_batch("SAVEPOINT one")?;
            let r = Self::insert_in(&tx, m);
            tx.execute_batch(if r.is_ok() { "RELEASE one" } else { "ROLLBACK TO one; RELEASE one" })?;
            out.push(r);
        }
        tx.commit()?;
        Ok(out)
    }

    pub fn upsert_author(&self, a: &AuthorRecord) -> Result<()> {
        self.write().execute(
            "INSERT INTO authors (author_id, handle, followers, in_census) VALUES (?1, ?2, ?3, ?4)
             ON CONFLICT (author_id) DO UPDATE SET
                handle = COALESCE(excluded.handle, handle),
                followers = COALESCE(excluded.followers, followers),
                in_census = excluded.in_census",
            params![a.author_id, a.handle, a.followers.map(|f| f as i64), a.in_census],
        )?;
        Ok(())
    }

    /// Admits processed messages in one transaction: each message is
    /// marked seen, and unless it was seen before, its author and mentions
    /// are written. Author census flags are only ever raised here.
    pub fn admit_batch(&self, batch: &[ProcessedMessage]) -> Result<AdmitReport> {
        let mut conn = self.write();
        let tx = conn.transaction()?;
        let mut report = AdmitReport::default();
        {
            let mut seen = tx.prepare_cached("INSERT OR IGNORE INTO seen_messages (source_id, native_id) VALUES (?1, ?2)")?;
            let mut author = tx.prepare_cached(
                "INSERT INTO authors (author_id, handle, followers, in_census) VALUES (?1, ?2, ?3, ?4)
                 ON CONFLICT (author_id) DO UPDATE SET
                    handle = COALESCE(excluded.handle, handle),
                    followers = COALESCE(excluded.followers, followers),
                    in_census = MAX(in_census, excluded.in_census)",
            )?;
            for item in batch {
                if seen.execute([&item.source_id, &item.native_id])? == 0 {
                    report.duplicates += 1;
                    continue;
                }
                report.messages += 1;
                if item.mentions.is_empty() {
                    continue;
                }
                if let Some(a) = &item.author {
                    author.execute(params![a.author_id, a.handle, a.followers.map(|f| f as i64), a.in_census])?;
                }
                for m in &item.mentions {
                    tx.execute_batch("SAVEPOINT one")?;
                    match Self::insert_in(&tx, m) {
                        Ok(id) => {
                            tx.execute_batch("RELEASE one")?;
                            report.mention_ids.push(id);
                        }
                        Err(e @ (StoreError::DuplicateMention { .. } | StoreError::EmptyMatches)) => {
                            tx.execute_batch("ROLLBACK TO one; RELEASE one")?;
                            tracing::warn!(error = %e, "mention rejected");
                            report.rejected += 1;
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        tx.commit()?;
        Ok(report)
    }

    pub fn author(&self, author_id: &str) -> Result<Option<AuthorRecord>> {
        Ok(self
            .read()
            .query_row(
                "SELECT author_id, handle, followers, in_census FROM authors WHERE author_id = ?1",
                [author_id],
                |r| {
                    Ok(AuthorRecord {
                        author_id: r.get(0)?,
                        handle: r.get(1)?,
                        followers: r.get::<_, Option<i64>>(2)?.map(|f| f.max(0) as u64),
                        in_census: r.get(3)?,
                    })
                },
            )
            .optional()?)
    }

    /// Marks every listed author as a census member.
    pub fn set_census<'a, I: IntoIterator<Item = &'a str>>(&self, members: I) -> Result<usize> {
        let mut conn = self.write();
        let tx = conn.transaction()?;
        let mut n = 0;
        {
            let mut stmt = tx.prepare(
                "INSERT INTO authors (author_id, in_census) VALUES (?1, 1)
                 ON CONFLICT (author_id) DO UPDATE SET in_census = 1",
            )?;
            for m in members {
                n += stmt.execute([m])?;
            }
        }
        tx.commit()?;
        Ok(n)
    }

    /// Records `(source_id, native_id)` in the persistent dedup set.
    /// Returns whether it was new.
    pub fn mark_seen(&self, source_id: &str, native_id: &str) -> Result<bool> {
        Ok(self.write().execute(
            "INSERT OR IGNORE INTO seen_messages (source_id, native_id) VALUES (?1, ?2)",
            [source_id, native_id],
        )? == 1)
    }

    pub fn is_seen(&self, source_id: &str, native_id: &str) -> Result<bool> {
        Ok(self
            .read()
            .query_row(
                "SELECT 1 FROM seen_messages WHERE source_id = ?1 AND native_id = ?2",
                [source_id, native_id],
                |_| Ok(()),
            )
            .optional()?
            .is_some())
    }

    pub fn upsert_source(&self, s: &SourceRow) -> Result<()> {
        self.write().execute(
            "INSERT INTO sources (source_id, kind, endpoint, poll_interval, enabled) VALUES (?1, ?2, ?3, ?4, ?5)
             ON CONFLICT (source_id) DO UPDATE SET kind = excluded.kind, endpoint = excluded.endpoint,
                poll_interval = excluded.poll_interval, enabled = excluded.enabled",
            params![s.source_id, s.kind, s.endpoint, s.poll_interval as i64, s.enabled],
        )?;
        Ok(())
    }

    pub fn sources(&self) -> Result<Vec<SourceRow>> {
        let conn = self.read();
        let mut stmt =
            conn.prepare("SELECT source_id, kind, endpoint, poll_interval, enabled FROM sources ORDER BY source_id")?;
        let rows = stmt.query_map([], |r| {
            Ok(SourceRow {
                source_id: r.get(0)?,
                kind: r.get(1)?,
                endpoint: r.get(2)?,
                poll_interval: r.get::<_, i64>(3)?.max(0) as u64,
                enabled: r.get(4)?,
            })
        })?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }

    pub fn set_meta(&self, key: &str, value: &str) -> Result<()> {
        self.write().execute(
            "INSERT INTO meta (key, value) VALUES (?1, ?2) ON CONFLICT (key) DO UPDATE SET value = excluded.value",
            [key, value],
        )?;
        Ok(())
    }

    pub fn meta(&self, key: &str) -> Result<Option<String>> {
        Ok(self
            .read()
            .query_row("SELECT value FROM meta WHERE key = ?1", [key], |r| r.get(0))
            .optional()?)
    }

    /// Sets the corrected label and appends to the audit log. Re-applying
    /// the current correction changes nothing and logs nothing. Returns
    /// whether anything changed.
    pub fn correct_label(&self, mention_id: i64, label: Polarity, operator_id: &str, at: DateTime<Utc>) -> Result<bool> {
        let mut conn = self.write();
        let tx = conn.transaction()?;
        let current: Option<Option<String>> = tx
            .query_row("SELECT corrected_label FROM mentions WHERE mention_id = ?1", [mention_id], |r| r.get(0))
            .optional()?;
        let Some(current) = current else {
            return Err(StoreError::NotFound(mention_id));
        };
        if current.as_deref() == Some(label.as_str()) {
            return Ok(false);
        }
        tx.execute(
            "UPDATE mentions SET corrected_label = ?1 WHERE mention_id = ?2",
            params![label.as_str(), mention_id],
        )?;
        tx.execute(
            "INSERT INTO corrections (mention_id, previous, label, operator_id, at) VALUES (?1, ?2, ?3, ?4, ?5)",
            params![mention_id, current, label.as_str(), operator_id, ts_text(&at)],
        )?;
        tx.commit()?;
        Ok(true)
    }

    /// The audit log in application order.
    pub fn corrections(&self) -> Result<Vec<Correction>> {
        let conn = self.read();
        let mut stmt =
            conn.prepare("SELECT mention_id, previous, label, operator_id, at FROM corrections ORDER BY seq")?;
        let rows = stmt.query_map([], |r| {
            Ok(Correction {
                mention_id: r.get(0)?,
                previous: r.get::<_, Option<String>>(1)?.as_deref().map(parse_polarity).transpose()?,
                label: parse_polarity(&r.get::<_, String>(2)?)?,
                operator_id: r.get(3)?,
                at: parse_ts(&r.get::<_, String>(4)?)?,
            })
        })?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }

    /// Corrected mentions as training examples, optionally for one language.
    pub fn correction_examples(&self, lang: Option<&str>) -> Result<Vec<LabeledExample>> {
        let conn = self.read();
        let mut stmt = conn.prepare(
            "SELECT unit_text, lang, corrected_label FROM mentions
             WHERE corrected_label IS NOT NULL AND (?1 IS NULL OR lang = ?1) ORDER BY mention_id",
        )?;
        let rows = stmt.query_map([lang], |r| {
            Ok(LabeledExample {
                text: r.get(0)?,
                lang: r.get(1)?,
                label: parse_polarity(&r.get::<_, String>(2)?)?,
                target_entity: None,
            })
        })?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }

    pub fn mention_count(&self) -> Result<u64> {
        Ok(self.read().query_row("SELECT COUNT(*) FROM mentions", [], |r| r.get::<_, i64>(0))? as u64)
    }

    fn attach_matches(conn: &Connection, mentions: &mut [(MentionRecord, Option<u64>)]) -> Result<()> {
        let mut stmt = conn.prepare_cached(
            "SELECT keyword_id, category_path FROM mention_matches WHERE mention_id = ?1 ORDER BY keyword_id, category_path",
        )?;
        for (m, _) in mentions.iter_mut() {
            let id = m.mention_id.expect("stored mention");
            m.matches = stmt
                .query_map([id], |r| {
                    Ok(MatchRef {
                        keyword_id: r.get(0)?,
                        category_path: r.get(1)?,
                    })
                })?
                .collect::<rusqlite::Result<_>>()?;
        }
        Ok(())
    }

    pub fn mention(&self, mention_id: i64) -> Result<MentionRecord> {
        let conn = self.read();
        let row = conn
            .query_row(
                &format!(
                    "SELECT {MENTION_COLUMNS} FROM mentions m LEFT JOIN authors a ON a.author_id = m.author_id
                     WHERE m.mention_id = ?1"
                ),
                [mention_id],
                mention_from_row,
            )
            .optional()?
            .ok_or(StoreError::NotFound(mention_id))?;
        let mut one = [row];
        Self::attach_matches(&conn, &mut one)?;
        let [(m, _)] = one;
        Ok(m)
    }

    /// Every mention with its author tier, in id order.
    pub fn all_mentions(&self) -> Result<Vec<(MentionRecord, Tier)>> {
        self.scan("", &[])
    }

    fn scan(&self, clause: &str, args: &[&dyn rusqlite::ToSql]) -> Result<Vec<(MentionRecord, Tier)>> {
        let conn = self.read();
        let mut stmt = conn.prepare(&format!(
            "SELECT {MENTION_COLUMNS} FROM mentions m LEFT JOIN authors a ON a.author_id = m.author_id {clause}"
        ))?;
        let mut rows: Vec<(MentionRecord, Option<u64>)> =
            stmt.query_map(args, mention_from_row)?.collect::<rusqlite::Result<_>>()?;
        if clause.is_empty() {
            rows.sort_by_key(|(m, _)| m.mention_id);
        }
        Self::attach_matches(&conn, &mut rows)?;
        Ok(rows.into_iter().map(|(m, f)| (m, Tier::from_followers(f))).collect())
    }

    /// Newest mentions first (timestamp, then id), after skipping `offset`.
    pub fn recent_mentions(&self, n: usize, offset: usize, filters: &Filters) -> Result<Vec<MentionRecord>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let from = filters.from.map(|d| d.to_string());
        let to = filters.to.map(|d| d.to_string());
        let candidates = self.scan(
            "WHERE (?1 IS NULL OR m.day >= ?1) AND (?2 IS NULL OR m.day <= ?2) AND (?3 IS NULL OR m.lang = ?3)
             ORDER BY m.ts DESC, m.mention_id DESC",
            &[&from, &to, &filters.lang],
        )?;
        Ok(candidates
            .into_iter()
            .filter(|(m, t)| filters.accepts_mention(m, *t))
            .skip(offset)
            .take(n)
            .map(|(m, _)| m)
            .collect())
    }

    /// Authors with the most mentions in the period; ties by author id.
    pub fn top_authors(&self, filters: &Filters, n: usize) -> Result<Vec<AuthorCount>> {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for (m, t) in self.all_mentions()? {
            if filters.accepts_mention(&m, t) {
                *counts.entry(m.author_id).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked
            .into_iter()
            .take(n)
            .map(|(author_id, mentions)| {
                let handle = self.author(&author_id)?.and_then(|a| a.handle);
                Ok(AuthorCount {
                    author_id,
                    handle,
                    mentions,
                })
            })
            .collect()
    }

    /// Original mentions ranked by how many stored reposts point at them;
    /// ties by mention id. Only mentions with at least one repost appear.
    pub fn top_spread(&self, filters: &Filters, n: usize) -> Result<Vec<SpreadEntry>> {
        let all = self.all_mentions()?;
        let mut reposts: BTreeMap<(&str, &str), u64> = BTreeMap::new();
        for (m, _) in &all {
            if let (true, Some(of)) = (m.is_repost, m.repost_of.as_deref()) {
                *reposts.entry((m.source_id.as_str(), of)).or_default() += 1;
            }
        }
        let mut ranked: Vec<SpreadEntry> = all
            .iter()
            .filter(|(m, t)| !m.is_repost && filters.accepts_mention(m, *t))
            .filter_map(|(m, _)| {
                let r = *reposts.get(&(m.source_id.as_str(), m.native_id.as_str()))?;
                Some(SpreadEntry {
                    mention: m.clone(),
                    reposts: r,
                })
            })
            .collect();
        ranked.sort_by(|a, b| b.reposts.cmp(&a.reposts).then_with(|| a.mention.mention_id.cmp(&b.mention.mention_id)));
        ranked.truncate(n);
        Ok(ranked)
    }

    /// Rebuilds the aggregate view from the base tables and swaps it in.
    /// Readers holding the previous snapshot keep it.
    pub fn refresh_view(&self, now: DateTime<Utc>) -> Result<Arc<AggregateView>> {
        let rows = {
            let mut conn = self.write();
            let tx = conn.transaction()?;
            let rows = {
                let mut stmt = tx.prepare(
                    "SELECT m.day, mm.category_path, m.lang, COALESCE(m.corrected_label, m.predicted_label),
                            m.source_kind, a.followers, COUNT(*)
                     FROM mentions m
                     JOIN (SELECT DISTINCT mention_id, category_path FROM mention_matches) mm
                          ON mm.mention_id = m.mention_id
                     LEFT JOIN authors a ON a.author_id = m.author_id
                     GROUP BY 1, 2, 3, 4, 5, 6",
                )?;
                let raw = stmt.query_map([], |r| {
                    let day: String = r.get(0)?;
                    let kind: String = r.get(4)?;
                    Ok(AggregateRow {
                        day: day.parse().map_err(|_| corrupt("day", &day))?,
                        category_path: r.get(1)?,
                        lang: r.get(2)?,
                        polarity: parse_polarity(&r.get::<_, String>(3)?)?,
                        source_kind: SourceKind::parse(&kind).ok_or_else(|| corrupt("source kind", &kind))?,
                        tier: Tier::from_followers(r.get::<_, Option<i64>>(5)?.map(|f| f.max(0) as u64)),
                        count: r.get::<_, i64>(6)? as u64,
                    })
                })?;
                // Distinct follower counts can share a tier; merge them.
                let mut merged: BTreeMap<AggregateRow, u64> = BTreeMap::new();
                for row in raw {
                    let row = row?;
                    let count = row.count;
                    *merged.entry(AggregateRow { count: 0, ..row }).or_default() += count;
                }
                merged.into_iter().map(|(r, count)| AggregateRow { count, ..r }).collect::<Vec<_>>()
            };
            tx.commit()?;
            rows
        };
        let mut slot = self.view.write().expect("view lock poisoned");
        let next = Arc::new(AggregateView {
            version: slot.version + 1,
            refreshed_at: Some(now),
            rows,
        });
        *slot = next.clone();
        tracing::debug!(version = next.version, rows = next.rows.len(), "aggregate view refreshed");
        Ok(next)
    }

    /// The current snapshot.
    pub fn view(&self) -> Arc<AggregateView> {
        self.view.read().expect("view lock poisoned").clone()
    }

    /// Rows of the current view accepted by `filters`.
    pub fn query_aggregates(&self, filters: &Filters) -> Vec<AggregateRow> {
        self.view().rows.iter().filter(|r| filters.accepts_row(r)).cloned().collect()
    }

    /// JSON-lines export of the mentions in the period, in id order.
    pub fn export_jsonl(&self, filters: &Filters) -> Result<String> {
        let mut out = String::new();
        for (m, t) in self.all_mentions()? {
            if !filters.accepts_mention(&m, t) {
                continue;
            }
            let line = ExportedMention {
                mention_id: m.mention_id,
                source_id: m.source_id,
                native_id: m.native_id,
                text: m.unit_text,
                lang: m.lang,
                timestamp: m.timestamp,
                author_id: m.author_id,
                matches: m.matches,
                polarity: m.predicted_label,
                corrected: m.corrected_label,
                is_repost: m.is_repost,
                repost_of: None,
                source_kind: None,
                author_handle: None,
                author_followers: None,
                geo: None,
            };
            out.push_str(&serde_json::to_string(&line).expect("serializable"));
            out.push('\n');
        }
        Ok(out)
    }

    /// Imports an export file. Mentions keep their labels; their source
    /// kind comes from the registered source, or the line, else social.
    pub fn import_jsonl(&self, text: &str) -> Result<ImportReport> {
        let kinds: BTreeMap<String, SourceKind> = self
            .sources()?
            .into_iter()
            .map(|s| (s.source_id, if s.kind == "feed" { SourceKind::Feed } else { SourceKind::Social }))
            .collect();
        let mut report = ImportReport::default();
        let mut batch = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let Ok(e) = serde_json::from_str::<ExportedMention>(line) else {
                report.malformed += 1;
                continue;
            };
            let kind = kinds.get(&e.source_id).copied().or(e.source_kind).unwrap_or(SourceKind::Social);
            batch.push(MentionRecord {
                mention_id: None,
                unit_span: (0, e.text.chars().count() as u32),
                source_id: e.source_id,
                native_id: e.native_id,
                source_kind: kind,
                unit_text: e.text,
                full_text_ref: None,
                lang: e.lang,
                timestamp: e.timestamp,
                author_id: e.author_id,
                matches: e.matches,
                predicted_label: e.polarity,
                corrected_label: e.corrected,
                is_repost: e.is_repost,
                repost_of: e.repost_of,
                in_census: false,
            });
        }
        for r in self.insert_mentions(&batch)? {
            match r {
                Ok(_) => report.imported += 1,
                Err(StoreError::DuplicateMention { .. }) => report.duplicates += 1,
                Err(StoreError::EmptyMatches) => report.malformed += 1,
                Err(e) => return Err(e),
            }
        }
        Ok(report)
    }
}
