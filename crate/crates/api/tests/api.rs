#[path = "../../core/tests/support/mod.rs"]
mod support;
mod passthrough;

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::http::StatusCode;
use chrono::Utc;
use monitor_api::TaxonomyUpdated;
use monitor_core::config::PolarityConfig;
use monitor_core::context::MonitorContext;
use monitor_core::polarity::write_dataset;
use monitor_core::resources::Resources;
use monitor_core::store::{Filters, SourceRow, Store};
use monitor_core::synthetic::planted_polarity;
use monitor_core::taxonomy::parse_taxonomy;
use passthrough::{app_over, call, check_pass_through, get_json, TOKEN};
use support::random_store;

fn loaded(seed: u64) -> (Arc<Store>, Arc<MonitorContext>, axum::Router) {
    let store = Arc::new(Store::open_in_memory().unwrap());
    random_store(seed, 60).load_into(&store);
    store.refresh_view(Utc::now()).unwrap();
    let (ctx, app) = app_over(store.clone());
    (store, ctx, app)
}

#[tokio::test]
async fn health_is_open() {
    let (_, _, app) = loaded(1);
    let (status, body) = get_json(&app, "/health").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
}

#[tokio::test]
async fn mutations_need_the_token() {
    let (store, _, app) = loaded(3);
    let id = store.all_mentions().unwrap()[0].0.mention_id.unwrap();
    let body = || Some(r#"{"label":"negative"}"#.to_string());
    let uri = format!("/mentions/{id}/polarity");
    let audit = store.corrections().unwrap().len();
    assert_eq!(call(&app, "PATCH", &uri, None, body()).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(call(&app, "PATCH", &uri, Some("wrong"), body()).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(call(&app, "PUT", "/taxonomy", None, Some("x\ty\t*\t\n".into())).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(call(&app, "POST", "/admin/retrain", None, Some(r#"{"lang":"en"}"#.into())).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(call(&app, "GET", "/mentions", Some("wrong"), None).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(store.corrections().unwrap().len(), audit);

    let (status, bytes) = call(&app, "PATCH", &uri, Some(TOKEN), body()).await;
    assert_eq!(status, StatusCode::OK);
    let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["changed"], store.corrections().unwrap().len() == audit + 1);
    assert_eq!(store.mention(id).unwrap().corrected_label, Some(monitor_core::Polarity::Negative));
    let (status, _) = call(&app, "PATCH", "/mentions/999999/polarity", Some(TOKEN), body()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn unauthenticated_server_refuses_every_mutation() {
    let store = Arc::new(Store::open_in_memory().unwrap());
    let ctx = Arc::new(MonitorContext::new(Resources::bundled(), store, passthrough::TAXONOMY).unwrap());
    let app = monitor_api::router(monitor_api::ApiState::new(ctx, None));
    let (status, _) = call(&app, "PUT", "/taxonomy", Some("anything"), Some("a\tb\t*\t\n".into())).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn taxonomy_put_swaps_the_matcher() {
    let (_, ctx, app) = loaded(4);
    let before = ctx.taxonomy().version;
    let text = "politics/EHBildu\t\\bBildu\\b\t*\tcase\nculture/music\tbertso\\w*\teu\t\n";
    let (status, bytes) = call(&app, "PUT", "/taxonomy", Some(TOKEN), Some(text.into())).await;
    assert_eq!(status, StatusCode::OK);
    let updated: TaxonomyUpdated = serde_json::from_slice(&bytes).unwrap();
    assert!(updated.version > before);
    let (_, got) = get_json(&app, "/taxonomy").await;
    assert_eq!(got["version"], updated.version);
    assert_eq!(got["text"], text);
    let keywords: Vec<monitor_core::taxonomy::KeywordSpec> = serde_json::from_value(got["keywords"].clone()).unwrap();
    assert_eq!(keywords, parse_taxonomy(text).unwrap());
    assert_eq!(ctx.matcher.current().match_unit("Bildu gaur", "eu").len(), 1);

    let (status, _) = call(&app, "PUT", "/taxonomy", Some(TOKEN), Some("broken\t(\t*\t\n".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(ctx.taxonomy().version, updated.version);
}

#[tokio::test]
async fn sources_are_validated_and_stored() {
    let (store, _, app) = loaded(5);
    let good = r#"{"source_id":"berria","kind":"feed","endpoint":"https://example.org/rss","poll_interval":300}"#;
    let (status, _) = call(&app, "POST", "/sources", Some(TOKEN), Some(good.into())).await;
    assert_eq!(status, StatusCode::CREATED);
    let too_fast = r#"{"source_id":"x","kind":"feed","endpoint":"https://example.org/rss","poll_interval":5}"#;
    assert_eq!(call(&app, "POST", "/sources", Some(TOKEN), Some(too_fast.into())).await.0, StatusCode::BAD_REQUEST);
    let (_, listed) = get_json(&app, "/sources").await;
    let rows: Vec<SourceRow> = serde_json::from_value(listed).unwrap();
    assert_eq!(rows, store.sources().unwrap());
    assert_eq!(rows.len(), 1);
    assert!(rows[0].enabled);
}

#[tokio::test]
async fn retrain_uses_dataset_and_corrections() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let data = dir.join("en.jsonl");
    std::fs::write(&data, write_dataset(&planted_polarity(90, 3))).unwrap();
    let store = Arc::new(Store::open_in_memory().unwrap());
    let ctx = MonitorContext::new(Resources::bundled(), store, passthrough::TAXONOMY)
        .unwrap()
        .with_polarity_config(PolarityConfig {
            training: BTreeMap::from([("en".to_string(), data)]),
            models: BTreeMap::from([("en".to_string(), dir.join("models/en.json"))]),
            ..PolarityConfig::default()
        });
    let ctx = Arc::new(ctx);
    let app = monitor_api::router(monitor_api::ApiState::new(ctx.clone(), Some(TOKEN.into())));
    let (status, bytes) = call(&app, "POST", "/admin/retrain", Some(TOKEN), Some(r#"{"lang":"en"}"#.into())).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&bytes));
    let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["base_examples"], 90);
    assert!(ctx.model("en").is_some());
    assert!(dir.join("models/en.json").exists());
    let (status, _) = call(&app, "POST", "/admin/retrain", Some(TOKEN), Some(r#"{"lang":"eu"}"#.into())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn export_period_and_bad_queries() {
    let (store, _, app) = loaded(6);
    let (status, bytes) = call(&app, "GET", "/export?period=2024-03-02..2024-03-04", None, None).await;
    assert_eq!(status, StatusCode::OK);
    let f = Filters::period(
        Some(chrono::NaiveDate::from_ymd_opt(2024, 3, 2).unwrap()),
        Some(chrono::NaiveDate::from_ymd_opt(2024, 3, 4).unwrap()),
    );
    assert_eq!(String::from_utf8(bytes).unwrap(), store.export_jsonl(&f).unwrap());
    assert_eq!(get_json(&app, "/export?period=yesterday").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get_json(&app, "/aggregates?tier=huge").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get_json(&app, "/aggregates?colour=red").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn get_endpoints_pass_store_queries_through() {
    let report = check_pass_through(50, 4).await;
    assert!(report.failures.is_empty(), "{:#?}", report.failures);
    assert!(report.requests >= 50 * 20);
    assert!(report.non_empty * 3 > report.requests, "{} of {} non-empty", report.non_empty, report.requests);
}

#[tokio::test]
async fn serve_reports_bind_and_token_errors() {
    let (_, ctx, _) = loaded(7);
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let mut config = monitor_core::config::ApiConfig {
        bind: taken.local_addr().unwrap(),
        token: Some("t".into()),
        refresh_period: 900,
    };
    let r = monitor_api::serve_until(ctx.clone(), &config, async {}).await;
    assert!(matches!(r, Err(monitor_api::ApiError::Bind { .. })), "{r:?}");
    if std::env::var(monitor_core::config::TOKEN_ENV).is_err() {
        config.token = None;
        let r = monitor_api::serve_until(ctx, &config, async {}).await;
        assert!(matches!(r, Err(monitor_api::ApiError::NoToken)));
    }
}
