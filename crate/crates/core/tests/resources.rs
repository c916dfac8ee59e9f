use monitor_core::resources::{entry_counts, parse_manifest, ResourceSource, Resources, BUNDLED, MANIFEST};

#[test]
fn loaded_counts_match_manifest() {
    let counts = entry_counts(&ResourceSource::Bundled).unwrap();
    assert_eq!(counts, parse_manifest(MANIFEST));
}

#[test]
fn every_bundled_file_is_listed() {
    let listed: Vec<String> = parse_manifest(MANIFEST).into_iter().map(|(p, _)| p).collect();
    for (path, _) in BUNDLED {
        assert!(listed.iter().any(|p| p == path), "{path}");
    }
    assert_eq!(listed.len(), BUNDLED.len());
}

#[test]
fn directory_source_matches_bundled() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("resources");
    let from_dir = entry_counts(&ResourceSource::Dir(dir.clone())).unwrap();
    assert_eq!(from_dir, entry_counts(&ResourceSource::Bundled).unwrap());
    Resources::from_dir(&dir).unwrap();
}

#[test]
fn missing_directory_is_an_error() {
    assert!(Resources::from_dir(std::path::Path::new("/nonexistent/resources")).is_err());
}
