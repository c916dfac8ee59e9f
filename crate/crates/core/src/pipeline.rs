//! Message processing and the concurrent ingestion pipeline.
//!
//! Pollers feed a bounded queue; workers identify the language, match the
//! taxonomy and classify polarity; one writer admits results in batches.
//! The writer commits in queue order, so replaying one source always
//! assigns the same mention ids.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use chrono::Utc;
use crossbeam_channel::{bounded, RecvTimeoutError};
use serde::Serialize;

use crate::config::{ConfigError, PipelineConfig};
use crate::context::MonitorContext;
use crate::ingest::{spawn_pollers, Fetcher, LiveStream, PollerContext, PollerStats, RawMessage, ReplaySpeed, SourceConfig};
use crate::polarity::{analyze_text, lexicon_polarity, FeatureConfig, PolarityModel};
use crate::store::{AuthorRecord, MatchRef, MentionRecord, ProcessedMessage, Store, StoreError};
use crate::taxonomy::MatchResult;
use crate::{Polarity, SourceKind, UNDETERMINED_LANG};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineSettings {
    pub workers: usize,
    pub queue_capacity: usize,
    pub batch_size: usize,
    pub refresh_period: Duration,
    pub speed: ReplaySpeed,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings::try_from(&PipelineConfig::default()).expect("default pipeline config is valid")
    }
}

impl TryFrom<&PipelineConfig> for PipelineSettings {
    type Error = ConfigError;

    fn try_from(c: &PipelineConfig) -> Result<Self, ConfigError> {
        Ok(PipelineSettings {
            workers: c.workers.max(1),
            queue_capacity: c.queue_capacity.max(1),
            batch_size: c.batch_size.max(1),
            refresh_period: c.refresh_interval(),
            speed: c.speed()?,
        })
    }
}

fn match_refs(matches: &[MatchResult]) -> Vec<MatchRef> {
    let mut refs: Vec<MatchRef> = matches
        .iter()
        .map(|m| MatchRef {
            keyword_id: m.keyword_id.clone(),
            category_path: m.category_path.join("/"),
        })
        .collect();
    refs.sort_by(|a, b| (&a.category_path, &a.keyword_id).cmp(&(&b.category_path, &b.keyword_id)));
    refs.dedup();
    refs
}

/// Labels one unit: the trained model when present, else the lexicon sign,
/// and neutral for languages without resources.
pub fn classify_unit(ctx: &MonitorContext, model: Option<&PolarityModel>, text: &str, lang: &str, kind: SourceKind) -> Polarity {
    let Some(pres) = ctx.resources.polarity(lang) else {
        return Polarity::Neutral;
    };
    let doc = match analyze_text(text, lang, kind, &ctx.resources) {
        Ok(d) => d,
        Err(e) => {
            tracing::warn!(error = %e, lang, "analysis failed; labeled neutral");
            return Polarity::Neutral;
        }
    };
    match model {
        Some(m) => m.predict_analysis(&doc, pres).label,
        None => lexicon_polarity(&doc, pres, FeatureConfig::default().negation_window),
    }
}

/// Runs one message through language identification, taxonomy matching
/// and polarity classification. Social messages form a single unit;
/// articles are split into sentences and each matching sentence is a unit.
pub fn process_message(ctx: &MonitorContext, msg: &RawMessage) -> ProcessedMessage {
    let matcher = ctx.matcher.current();
    let lang = ctx
        .resources
        .identifier
        .identify_any(&msg.text, msg.source_kind)
        .map(|d| d.lang)
        .unwrap_or_else(|| UNDETERMINED_LANG.to_string());
    let units: Vec<(String, (u32, u32), Vec<MatchResult>)> = match msg.source_kind {
        SourceKind::Social => {
            let matches = matcher.match_unit(&msg.text, &lang);
            if matches.is_empty() {
                Vec::new()
            } else {
                vec![(msg.text.clone(), (0, msg.text.chars().count() as u32), matches)]
            }
        }
        SourceKind::Feed => matcher
            .segment_article(&ctx.splitter, &msg.text, &lang)
            .into_iter()
            .map(|u| (u.text, (u.span.0 as u32, u.span.1 as u32), u.matches))
            .collect(),
    };
    let in_census = !units.is_empty() && ctx.census().contains(&msg.author_id);
    let model = if units.is_empty() { None } else { ctx.model(&lang) };
    let mentions = units
        .into_iter()
        .map(|(text, span, matches)| MentionRecord {
            mention_id: None,
            source_id: msg.source_id.clone(),
            native_id: msg.native_id.clone(),
            source_kind: msg.source_kind,
            unit_span: span,
            predicted_label: classify_unit(ctx, model.as_deref(), &text, &lang, msg.source_kind),
            unit_text: text,
            full_text_ref: (msg.source_kind == SourceKind::Feed).then(|| msg.native_id.clone()),
            lang: lang.clone(),
            timestamp: msg.timestamp,
            author_id: msg.author_id.clone(),
            matches: match_refs(&matches),
            corrected_label: None,
            is_repost: msg.is_repost,
            repost_of: msg.repost_of.clone(),
            in_census,
        })
        .collect();
    ProcessedMessage {
        source_id: msg.source_id.clone(),
        native_id: msg.native_id.clone(),
        author: Some(AuthorRecord {
            author_id: msg.author_id.clone(),
            handle: msg.author_handle.clone(),
            followers: msg.author_followers,
            in_census,
        }),
        mentions,
    }
}

/// Rebuilds the aggregate view every `period` until stopped.
pub fn spawn_view_refresher(store: Arc<Store>, period: Duration, stop: Arc<AtomicBool>) -> JoinHandle<()> {
    thread::spawn(move || {
        let mut last = Instant::now();
        while !stop.load(Ordering::Relaxed) {
            thread::sleep(Duration::from_millis(100).min(period));
            if last.elapsed() >= period {
                last = Instant::now();
                match store.refresh_view(Utc::now()) {
                    Ok(v) => tracing::debug!(version = v.version, rows = v.rows.len(), "view refreshed"),
                    Err(e) => tracing::error!(error = %e, "view refresh failed"),
                }
            }
        }
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PipelineReport {
    /// Messages taken off the queue.
    pub received: u64,
    /// New messages admitted (with or without mentions).
    pub admitted: u64,
    pub duplicates: u64,
    pub mentions: u64,
    pub rejected: u64,
    pub sources: BTreeMap<String, PollerStats>,
    pub elapsed_secs: f64,
    pub view_version: u64,
}

impl PipelineReport {
    pub fn mentions_per_sec(&self) -> f64 {
        if self.elapsed_secs > 0.0 {
            self.mentions as f64 / self.elapsed_secs
        } else {
            0.0
        }
    }
}

/// Admits results strictly in sequence order.
struct OrderedWriter<'a> {
    store: &'a Store,
    pending: BTreeMap<u64, ProcessedMessage>,
    next: u64,
    batch: Vec<ProcessedMessage>,
    batch_size: usize,
    report: PipelineReport,
}

impl OrderedWriter<'_> {
    fn accept(&mut self, seq: u64, item: ProcessedMessage) -> Result<(), StoreError> {
        self.report.received += 1;
        self.pending.insert(seq, item);
        while let Some(item) = self.pending.remove(&self.next) {
            self.next += 1;
            self.batch.push(item);
            if self.batch.len() >= self.batch_size {
                self.flush()?;
            }
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<(), StoreError> {
        if self.batch.is_empty() {
            return Ok(());
        }
        let r = self.store.admit_batch(&self.batch)?;
        self.batch.clear();
        self.report.admitted += r.messages;
        self.report.duplicates += r.duplicates;
        self.report.rejected += r.rejected;
        self.report.mentions += r.mention_ids.len() as u64;
        Ok(())
    }

    /// Admits whatever is left, gaps included.
    fn finish(&mut self) -> Result<(), StoreError> {
        let rest = std::mem::take(&mut self.pending);
        self.batch.extend(rest.into_values());
        self.flush()
    }
}

/// Runs pollers, workers and the writer until every poller finishes or
/// `stop` is raised; the queue is drained either way. `live` supplies
/// adapters for live stream sources.
pub fn run_pipeline(
    ctx: Arc<MonitorContext>,
    sources: &[SourceConfig],
    settings: &PipelineSettings,
    fetcher: Arc<dyn Fetcher>,
    live: impl FnMut(&SourceConfig) -> Option<Box<dyn LiveStream>>,
    stop: Arc<AtomicBool>,
) -> Result<PipelineReport, PipelineError> {
    let started = Instant::now();
    let (queue_tx, queue_rx) = bounded(settings.queue_capacity);
    let (done_tx, done_rx) = bounded::<(u64, ProcessedMessage)>(settings.queue_capacity);

    let pollers = spawn_pollers(
        sources,
        &PollerContext {
            queue: queue_tx,
            seq: Arc::new(AtomicU64::new(0)),
            stop: stop.clone(),
            seen: ctx.store.clone(),
            fetcher,
            speed: settings.speed,
        },
        live,
    );

    let workers: Vec<JoinHandle<()>> = (0..settings.workers)
        .map(|_| {
            let (rx, tx, ctx) = (queue_rx.clone(), done_tx.clone(), ctx.clone());
            thread::spawn(move || {
                for env in rx.iter() {
                    if tx.send((env.seq, process_message(&ctx, &env.msg))).is_err() {
                        break;
                    }
                }
            })
        })
        .collect();
    drop(queue_rx);
    drop(done_tx);

    let refresher_stop = Arc::new(AtomicBool::new(false));
    let refresher = spawn_view_refresher(ctx.store.clone(), settings.refresh_period, refresher_stop.clone());

    let mut writer = OrderedWriter {
        store: &ctx.store,
        pending: BTreeMap::new(),
        next: 0,
        batch: Vec::with_capacity(settings.batch_size),
        batch_size: settings.batch_size,
        report: PipelineReport::default(),
    };
    let written = (|| -> Result<(), StoreError> {
        loop {
            match done_rx.recv_timeout(Duration::from_millis(200)) {
                Ok((seq, item)) => writer.accept(seq, item)?,
                Err(RecvTimeoutError::Timeout) => writer.flush()?,
                Err(RecvTimeoutError::Disconnected) => return writer.finish(),
            }
        }
    })();
    if written.is_err() {
        stop.store(true, Ordering::Relaxed);
    }
    drop(done_rx);
    for w in workers {
        let _ = w.join();
    }
    let mut report = std::mem::take(&mut writer.report);
    for (id, handle) in pollers {
        if let Ok(stats) = handle.join() {
            report.sources.insert(id, stats);
        }
    }
    refresher_stop.store(true, Ordering::Relaxed);
    let _ = refresher.join();
    written?;
    report.view_version = ctx.store.refresh_view(Utc::now())?.version;
    report.elapsed_secs = started.elapsed().as_secs_f64();
    tracing::info!(
        received = report.received,
        mentions = report.mentions,
        duplicates = report.duplicates,
        rate = report.mentions_per_sec(),
        "pipeline finished"
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resources::Resources;

    fn ctx() -> MonitorContext {
        let taxo = "politics/Podemos\t\\bPodemos\\b\t*\tcase\npolitics/PNV\t\\bPNV\\b\t*\t\n";
        MonitorContext::new(Resources::bundled(), Arc::new(Store::open_in_memory().unwrap()), taxo).unwrap()
    }

    fn msg(kind: SourceKind, text: &str) -> RawMessage {
        RawMessage {
            source_id: "s".into(),
            native_id: "n1".into(),
            source_kind: kind,
            text: text.into(),
            author_id: "a".into(),
            author_handle: None,
            author_followers: Some(20),
            timestamp: Utc::now(),
            geo: None,
            is_repost: false,
            repost_of: None,
        }
    }

    #[test]
    fn social_message_is_one_unit() {
        let ctx = ctx();
        let p = process_message(&ctx, &msg(SourceKind::Social, "Gaur Podemos eta PNV alderdiek bilera izan dute Bilbon"));
        assert_eq!(p.mentions.len(), 1);
        let m = &p.mentions[0];
        assert_eq!(m.lang, "eu");
        assert_eq!(m.matches.len(), 2);
        assert_eq!(m.unit_span.1 as usize, m.unit_text.chars().count());
        assert!(m.full_text_ref.is_none());
    }

    #[test]
    fn article_keeps_matching_sentences() {
        let ctx = ctx();
        let text = "El tiempo será soleado mañana en toda la costa. Podemos presentó ayer su candidatura en Madrid. Nada más que añadir por hoy.";
        let p = process_message(&ctx, &msg(SourceKind::Feed, text));
        assert_eq!(p.mentions.len(), 1);
        assert!(p.mentions[0].unit_text.starts_with("Podemos"));
        assert_eq!(p.mentions[0].full_text_ref.as_deref(), Some("n1"));
    }

    #[test]
    fn unmatched_message_has_no_mentions() {
        let p = process_message(&ctx(), &msg(SourceKind::Social, "nothing to see here at all today"));
        assert!(p.mentions.is_empty());
    }
}
