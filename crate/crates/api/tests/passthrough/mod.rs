//! API pass-through oracle: every GET payload must equal the matching
//! direct store query, and PATCH must leave the store exactly as the
//! direct correction does. Shared with the acceptance harness.
#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::{Duration, NaiveDate, Utc};
use http_body_util::BodyExt;
use monitor_api::{router, AggregatesPayload, ApiState, Health, MentionsPage};
use monitor_core::context::MonitorContext;
use monitor_core::resources::Resources;
use monitor_core::store::{Filters, Store, Tier};
use monitor_core::{Polarity, SourceKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tower::ServiceExt;

use crate::support::{random_store, STORE_CATEGORIES};

pub const TOKEN: &str = "test-token";
pub const TAXONOMY: &str = "politics/PNV\t\\bPNV\\b\t*\tcase\n";

pub async fn call(app: &Router, method: &str, uri: &str, token: Option<&str>, body: Option<String>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b)),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub async fn get_json(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (status, bytes) = call(app, "GET", uri, None, None).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

pub fn app_over(store: Arc<Store>) -> (Arc<MonitorContext>, Router) {
    let ctx = Arc::new(MonitorContext::new(Resources::bundled(), store, TAXONOMY).unwrap());
    let app = router(ApiState::new(ctx.clone(), Some(TOKEN.into())));
    (ctx, app)
}

fn day(offset: i64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 3, 1).unwrap() + Duration::days(offset)
}

/// Random filters over the value ranges of the random stores, with the
/// matching query string.
pub fn random_filters(rng: &mut ChaCha8Rng) -> (Filters, Vec<String>) {
    let mut f = Filters::default();
    let mut q = Vec::new();
    if rng.gen_bool(0.4) {
        let from = day(rng.gen_range(-1..10));
        f.from = Some(from);
        q.push(format!("from={from}"));
    }
    if rng.gen_bool(0.4) {
        let to = day(rng.gen_range(0..11));
        f.to = Some(to);
        q.push(format!("to={to}"));
    }
    if rng.gen_bool(0.4) {
        let lang = ["eu", "es", "en", "fr", "de"][rng.gen_range(0..5)];
        f.lang = Some(lang.into());
        q.push(format!("lang={lang}"));
    }
    if rng.gen_bool(0.4) {
        let cat = if rng.gen_bool(0.8) {
            STORE_CATEGORIES[rng.gen_range(0..STORE_CATEGORIES.len())]
        } else {
            "polit"
        };
        f.category = Some(cat.into());
        q.push(format!("category={}", cat.replace('/', "%2F")));
    }
    if rng.gen_bool(0.3) {
        let k = [SourceKind::Social, SourceKind::Feed][rng.gen_range(0..2)];
        f.source_kind = Some(k);
        q.push(format!("source_kind={}", k.as_str()));
    }
    if rng.gen_bool(0.3) {
        let p = Polarity::ALL[rng.gen_range(0..3)];
        f.polarity = Some(p);
        q.push(format!("polarity={}", p.as_str()));
    }
    if rng.gen_bool(0.3) {
        let t = Tier::ALL[rng.gen_range(0..3)];
        f.tier = Some(t);
        q.push(format!("tier={}", t.as_str()));
    }
    (f, q)
}

fn with(base: &[String], extra: &[String]) -> String {
    base.iter().chain(extra).cloned().collect::<Vec<_>>().join("&")
}

#[derive(Debug, Default)]
pub struct PassThroughReport {
    pub requests: usize,
    pub non_empty: usize,
    pub failures: Vec<String>,
}

/// Runs the oracle over `states` random stores with `queries` random
/// filter sets each.
pub async fn check_pass_through(states: u64, queries: usize) -> PassThroughReport {
    let mut report = PassThroughReport::default();
    for seed in 0..states {
        let state = random_store(seed, 200);
        let store = Arc::new(Store::open_in_memory().unwrap());
        let stored = state.load_into(&store);
        store.refresh_view(Utc::now()).unwrap();
        let (ctx, app) = app_over(store.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa11);
        macro_rules! fail {
            ($what:expr) => {
                report.failures.push(format!("state {seed}: {}", $what))
            };
        }

        let (status, health) = get_json(&app, "/health").await;
        let expected = Health {
            status: "ok".into(),
            view_version: store.view().version,
            taxonomy_version: ctx.matcher.current().version(),
        };
        report.requests += 1;
        if status != StatusCode::OK || health != serde_json::to_value(&expected).unwrap() {
            fail!("health");
        }
        let (_, taxonomy) = get_json(&app, "/taxonomy").await;
        report.requests += 1;
        if taxonomy != serde_json::to_value(ctx.taxonomy()).unwrap() {
            fail!("taxonomy");
        }

        for _ in 0..queries {
            let (f, q) = random_filters(&mut rng);
            let page = rng.gen_range(0..3usize);
            let page_size = rng.gen_range(1..40usize);
            let n = rng.gen_range(0..15usize);

            let uri = format!("/mentions?{}", with(&q, &[format!("page={page}"), format!("page_size={page_size}")]));
            let expected = MentionsPage {
                page,
                page_size,
                mentions: store.recent_mentions(page_size, page * page_size, &f).unwrap(),
            };
            let (status, got) = get_json(&app, &uri).await;
            report.requests += 1;
            report.non_empty += usize::from(!expected.mentions.is_empty());
            if status != StatusCode::OK || got != serde_json::to_value(&expected).unwrap() {
                fail!(uri);
            }

            let uri = format!("/aggregates?{}", with(&q, &[]));
            let view = store.view();
            let expected = AggregatesPayload {
                version: view.version,
                refreshed_at: view.refreshed_at,
                rows: store.query_aggregates(&f),
            };
            let (status, got) = get_json(&app, &uri).await;
            report.requests += 1;
            report.non_empty += usize::from(!expected.rows.is_empty());
            if status != StatusCode::OK || got != serde_json::to_value(&expected).unwrap() {
                fail!(uri);
            }

            let uri = format!("/authors/top?{}", with(&q, &[format!("n={n}")]));
            let expected = store.top_authors(&f, n).unwrap();
            let (status, got) = get_json(&app, &uri).await;
            report.requests += 1;
            report.non_empty += usize::from(!expected.is_empty());
            if status != StatusCode::OK || got != serde_json::to_value(&expected).unwrap() {
                fail!(uri);
            }

            let uri = format!("/mentions/spread?{}", with(&q, &[format!("n={n}")]));
            let expected = store.top_spread(&f, n).unwrap();
            let (status, got) = get_json(&app, &uri).await;
            report.requests += 1;
            report.non_empty += usize::from(!expected.is_empty());
            if status != StatusCode::OK || got != serde_json::to_value(&expected).unwrap() {
                fail!(uri);
            }

            let period = format!(
                "period={}..{}",
                f.from.map(|d| d.to_string()).unwrap_or_default(),
                f.to.map(|d| d.to_string()).unwrap_or_default()
            );
            let rest: Vec<String> = q.iter().filter(|p| !p.starts_with("from=") && !p.starts_with("to=")).cloned().collect();
            let uri = format!("/export?{}", with(&rest, &[period]));
            let expected = store.export_jsonl(&f).unwrap();
            let (status, got) = call(&app, "GET", &uri, None, None).await;
            report.requests += 1;
            report.non_empty += usize::from(!expected.is_empty());
            if status != StatusCode::OK || got != expected.as_bytes() {
                fail!(uri);
            }
        }

        // A correction through the API leaves the store exactly as the
        // direct operation leaves a twin store.
        if let Some(target) = stored.get(rng.gen_range(0..stored.len().max(1))) {
            let twin = Store::open_in_memory().unwrap();
            state.load_into(&twin);
            let label = Polarity::ALL[rng.gen_range(0..3)];
            let id = target.mention_id.unwrap();
            let body = serde_json::json!({ "label": label, "operator": "op" }).to_string();
            let (status, _) = call(&app, "PATCH", &format!("/mentions/{id}/polarity"), Some(TOKEN), Some(body)).await;
            twin.correct_label(id, label, "op", Utc::now()).unwrap();
            report.requests += 1;
            let strip = |c: Vec<monitor_core::store::Correction>| {
                c.into_iter().map(|c| (c.mention_id, c.previous, c.label, c.operator_id)).collect::<Vec<_>>()
            };
            if status != StatusCode::OK
                || store.all_mentions().unwrap() != twin.all_mentions().unwrap()
                || strip(store.corrections().unwrap()) != strip(twin.corrections().unwrap())
            {
                fail!(format!("PATCH /mentions/{id}/polarity"));
            }
        }
    }
    report
}
