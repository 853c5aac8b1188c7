use std::path::{Path, PathBuf};

use mobikg::io::{derive_pkg, load_dataset, DatasetPaths, DeriveSettings, Schema};
use mobikg::net::{label_region, GeoCase, HotspotClass};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/dataset")
}

/// Data rows: non-empty lines minus the version line and the header.
fn rows(name: &str) -> usize {
    let text = std::fs::read_to_string(fixture().join(name)).unwrap();
    text.lines().filter(|l| !l.trim().is_empty()).count() - 2
}

#[test]
fn fixture_loads_with_known_counts() {
    let ds = load_dataset(&DatasetPaths::in_dir(&fixture()), &Schema::default()).unwrap();
    assert_eq!(ds.regions.len(), 16);
    assert_eq!(ds.places.len(), 15);
    assert_eq!(ds.users.len(), 6);
    assert_eq!(ds.cases.len(), 19);
    assert_eq!(ds.cases.iter().map(|c| c.count).sum::<u32>(), 32);
    assert_eq!(ds.routes.len(), 3);
    assert_eq!(ds.users.iter().map(|u| u.trajectory.len()).sum::<usize>(), 576);

    assert_eq!(ds.places.len(), rows("places.csv"));
    assert_eq!(ds.users.len(), rows("users.csv"));
    assert_eq!(ds.cases.len(), rows("cases.csv"));
    assert_eq!(ds.routes.len(), rows("routes.csv"));
    assert_eq!(576, rows("trajectories.csv"));
}

#[test]
fn fixture_structures_derive() {
    let ds = load_dataset(&DatasetPaths::in_dir(&fixture()), &Schema::default()).unwrap();
    let (pkg, counts) = derive_pkg(&ds, &DeriveSettings::default()).unwrap();
    assert_eq!((counts.flows, counts.groups, counts.hotspots, counts.connectivity), (1, 1, 1, 3));
    assert_eq!(pkg.len(), counts.visits + 6);

    let geo: Vec<GeoCase> = ds.cases.iter().map(|c| GeoCase { location: c.location.unwrap(), count: c.count }).collect();
    let r = ds.region("r001c001").unwrap();
    assert_eq!(label_region(&geo, &r.centroid()), HotspotClass::C1);
}
