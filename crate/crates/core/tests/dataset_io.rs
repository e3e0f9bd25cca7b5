use std::fs;

use proptest::prelude::*;

use ewald_core::dataset::{
    read_dataset, read_json, simulate, write_dataset, DatasetError, DatasetManifest, RunConfig, Truth, MANIFEST_FILE,
    TRUTH_FILE,
};
use ewald_core::optics::GridSpec;
use ewald_core::recovery::{recover, Mode};

fn small(mode: Mode) -> RunConfig {
    RunConfig {
        n_uniform: 6,
        n_family: 10,
        order: 3,
        mode,
        grid: Some(GridSpec { n: 128, xi_max: 0.4 }),
        ..RunConfig::default()
    }
}

#[test]
fn family_only_manifest_counts_eight() {
    let dir = tempfile::tempdir().unwrap();
    let d = simulate(&RunConfig {
        n_uniform: 0,
        n_family: 8,
        ..small(Mode::Oracle)
    })
    .unwrap();
    let manifest = write_dataset(dir.path(), &d).unwrap();
    assert_eq!(manifest.record_count, 8);
    let on_disk: DatasetManifest = read_json(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(on_disk, manifest);
    assert!(manifest.has_coefficients && !manifest.has_grids);
}

#[test]
fn round_trip_is_bit_exact_with_grids() {
    let dir = tempfile::tempdir().unwrap();
    let d = simulate(&small(Mode::Image)).unwrap();
    write_dataset(dir.path(), &d).unwrap();
    let (manifest, records) = read_dataset(dir.path()).unwrap();
    assert!(manifest.has_grids);
    assert_eq!(records, d.records);
    let truth: Truth = read_json(&dir.path().join(TRUTH_FILE)).unwrap();
    assert_eq!(truth, d.truth);
}

#[test]
fn reader_never_needs_the_truth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(Mode::Oracle);
    let d = simulate(&cfg).unwrap();
    write_dataset(dir.path(), &d).unwrap();
    fs::remove_file(dir.path().join(TRUTH_FILE)).unwrap();
    let (manifest, records) = read_dataset(dir.path()).unwrap();
    let from_disk = recover(&records, &manifest.optics, 3, Mode::Oracle, &cfg.tolerances).unwrap();
    let in_memory = recover(&d.records, &d.optics, 3, Mode::Oracle, &cfg.tolerances).unwrap();
    assert_eq!(from_disk, in_memory);
}

#[test]
fn tampered_payload_fails_its_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let d = simulate(&small(Mode::Image)).unwrap();
    write_dataset(dir.path(), &d).unwrap();
    let path = dir.path().join("record_000003.f64");
    let mut bytes = fs::read(&path).unwrap();
    bytes[17] ^= 1;
    fs::write(&path, bytes).unwrap();
    assert!(matches!(read_dataset(dir.path()), Err(DatasetError::Checksum(_))));
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = small(Mode::Image);
    write_dataset(a.path(), &simulate(&cfg).unwrap()).unwrap();
    write_dataset(b.path(), &simulate(&cfg).unwrap()).unwrap();
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 2 * 16 + 2);
    for name in names {
        assert_eq!(fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap());
    }
    let other = simulate(&RunConfig { seed: 2, ..cfg.clone() }).unwrap();
    assert_ne!(other.records, simulate(&cfg).unwrap().records);
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    let cfg = small(Mode::Image);
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    assert_eq!(RunConfig::load(&path).unwrap(), cfg);
    fs::write(&path, r#"{"order": 13}"#).unwrap();
    assert!(matches!(RunConfig::load(&path), Err(DatasetError::Config(_))));
    fs::write(&path, r#"{"unknown_field": 1}"#).unwrap();
    assert!(RunConfig::load(&path).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn any_small_dataset_round_trips(seed in 0u64..1000, n_uniform in 0usize..6, n_family in 1usize..6) {
        let dir = tempfile::tempdir().unwrap();
        let d = simulate(&RunConfig { seed, n_uniform, n_family, ..small(Mode::Oracle) }).unwrap();
        write_dataset(dir.path(), &d).unwrap();
        let (_, records) = read_dataset(dir.path()).unwrap();
        prop_assert_eq!(records, d.records);
    }
}
