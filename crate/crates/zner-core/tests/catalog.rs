//! The shipped definition & guidelines catalog must stay loadable and intact.

use std::path::Path;

use zner_core::corpus::load_dg_file;
use zner_core::model::DgOrigin;

fn catalog_path() -> &'static Path {
    Path::new(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/fixtures/guidelines_catalog.jsonl"
    ))
}

#[test]
fn catalog_loads_with_17_entries() {
    let entries = load_dg_file(catalog_path()).unwrap();
    assert_eq!(entries.len(), 17);
    for entry in &entries {
        assert!(!entry.definition.trim().is_empty(), "{}", entry.tag);
        assert!(!entry.guidelines.trim().is_empty(), "{}", entry.tag);
    }
}

#[test]
fn catalog_buster_entries_are_handwritten() {
    let entries = load_dg_file(catalog_path()).unwrap();
    let consulting = entries
        .iter()
        .find(|e| e.tag == "buster/generic consulting company")
        .expect("consulting entry present");
    assert_eq!(consulting.origin, DgOrigin::Handwritten);
    assert!(consulting
        .definition
        .starts_with("'generic consulting company' refers to a business entity"));
    for entry in entries.iter().filter(|e| !e.tag.starts_with("buster/")) {
        assert_eq!(entry.origin, DgOrigin::Generated, "{}", entry.tag);
    }
}

#[test]
fn catalog_round_trips_through_save_and_load() {
    let entries = load_dg_file(catalog_path()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("catalog.jsonl");
    zner_core::corpus::save_dg_file(&entries, &copy, &["round trip".to_string()]).unwrap();
    assert_eq!(load_dg_file(&copy).unwrap(), entries);
}
