use std::path::Path;
use std::process::{Command, Output};

use monitor_core::census::{build_census, format_census, CensusParams, FollowGraph};
use monitor_core::polarity::{evaluate, write_dataset, PolarityModel};
use monitor_core::resources::Resources;
use monitor_core::store::Store;
use monitor_core::synthetic::{planted_census, planted_polarity, replay_corpus, replay_taxonomy};

fn monitor(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_monitor"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    let test = dir.path().join("test.jsonl");
    let model = dir.path().join("models/en.json");
    let data = planted_polarity(200, 5);
    std::fs::write(&train, write_dataset(&data[..150])).unwrap();
    std::fs::write(&test, write_dataset(&data[150..])).unwrap();

    let out = monitor(&["train", "--data", s(&train), "--lang", "en", "--C", "0.1", "--folds", "5", "--seed", "3", "--out", s(&model)]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("acc\tfpos\tfneg\tfneu\n"), "{stdout}");
    let saved = PolarityModel::load(&model).unwrap();
    assert_eq!(saved.config.solver.seed, 3);

    let out = monitor(&["eval", "--model", s(&model), "--data", s(&test)]);
    let expected = evaluate(&saved, &data[150..], &Resources::bundled()).unwrap().table();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), expected);
}

#[test]
fn train_rejects_foreign_examples() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    std::fs::write(&data, write_dataset(&planted_polarity(30, 1))).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_monitor"))
        .args(["train", "--data", s(&data), "--lang", "eu", "--out", s(&dir.path().join("m.json"))])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn run_replays_configured_sources() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("replay.jsonl"), replay_corpus(500, 3)).unwrap();
    std::fs::write(dir.path().join("taxonomy.tsv"), replay_taxonomy()).unwrap();
    let sources = format!("replay\tstream_replay\t{}\t0\n", s(&dir.path().join("replay.jsonl")));
    std::fs::write(dir.path().join("sources.tsv"), sources).unwrap();
    let config = dir.path().join("monitor.toml");
    std::fs::write(
        &config,
        "taxonomy = \"taxonomy.tsv\"\nsources = \"sources.tsv\"\n[storage]\npath = \"data/monitor.db\"\n[pipeline]\nworkers = 2\n",
    )
    .unwrap();

    let out = monitor(&["run", "--config", s(&config), "--workers", "3", "--replay-speed", "max"]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["mentions"], 500);
    let store = Store::open(&dir.path().join("data/monitor.db")).unwrap();
    assert_eq!(store.mention_count().unwrap(), 500);
    assert_eq!(store.sources().unwrap().len(), 1);

    let again = monitor(&["run", "--config", s(&config)]);
    let report: serde_json::Value = serde_json::from_slice(&again.stdout).unwrap();
    assert_eq!((report["mentions"].as_u64(), report["duplicates"].as_u64()), (Some(0), Some(500)));
}

#[test]
fn census_build_writes_the_library_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let p = planted_census(500, 0.85, 2);
    let stream: String = p.stream.iter().map(|m| serde_json::to_string(m).unwrap() + "\n").collect();
    let edges: String = p.edges.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect();
    let manual: String = p.labels.iter().map(|(u, l)| format!("{u}\t{}\n", u8::from(*l))).collect();
    for (name, text) in [("stream.jsonl", &stream), ("graph.tsv", &edges), ("manual.tsv", &manual)] {
        std::fs::write(dir.path().join(name), text).unwrap();
    }
    let out = dir.path().join("census.tsv");
    let b = p.bbox;
    let bbox = format!("{},{},{},{}", b.west, b.south, b.east, b.north);
    monitor(&[
        "census",
        "build",
        "--stream",
        s(&dir.path().join("stream.jsonl")),
        "--graph",
        s(&dir.path().join("graph.tsv")),
        "--bbox",
        &bbox,
        "--manual",
        s(&dir.path().join("manual.tsv")),
        "--out",
        s(&out),
        "--n-manual",
        "100",
        "--n-auto",
        "500",
    ]);
    let params = CensusParams {
        n_manual: 100,
        n_auto: 500,
        ..CensusParams::default()
    };
    let g = FollowGraph::from_edges(p.edges.iter().map(|(a, b)| (a.as_str(), b.as_str())));
    let expected = build_census(&p.stream, &g, &p.bbox, Some(&p.labels), &params).unwrap();
    assert_eq!(std::fs::read_to_string(&out).unwrap(), format_census(&expected.entries));

    let path = |name: &str| s(&dir.path().join(name)).to_string();
    let (stream, graph, manual, previous, updated) =
        (path("stream.jsonl"), path("graph.tsv"), path("manual.tsv"), path("census.tsv"), path("census2.tsv"));
    monitor(&[
        "census", "build", "--stream", &stream, "--graph", &graph, "--bbox", &bbox, "--manual", &manual, "--out", &updated,
        "--previous", &previous,
    ]);
    let updated = Path::new(&updated);
    assert!(updated.exists());
}
