use std::collections::BTreeSet;
use std::path::Path;

use proptest::prelude::*;
use proptest::strategy::ValueTree;

use super::*;
use crate::geo::{BBox, LatLon};
use crate::mining::PatternKind;
use crate::net::label::{label_region, GeoCase, HotspotClass};
use crate::net::ctx;
use crate::pkg::{derive_flows, derive_groups, derive_visits_many, Entity, Interval, Relation, TemporalFact};

fn scenario() -> Scenario {
    synthesize_scenario(&ScenarioConfig::default()).unwrap()
}

fn written(cfg: &ScenarioConfig) -> (tempfile::TempDir, Dataset, GroundTruth) {
    let dir = tempfile::tempdir().unwrap();
    synthesize_scenario(cfg).unwrap().write_dir(dir.path()).unwrap();
    let (ds, truth) = read_scenario_dir(dir.path()).unwrap();
    (dir, ds, truth)
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn same_seed_gives_identical_files() {
    let cfg = ScenarioConfig { seed: 7, ..Default::default() };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    synthesize_scenario(&cfg).unwrap().write_dir(a.path()).unwrap();
    synthesize_scenario(&cfg).unwrap().write_dir(b.path()).unwrap();
    let (fa, fb) = (read_all(a.path()), read_all(b.path()));
    assert_eq!(fa.len(), 8);
    assert_eq!(fa, fb);

    let c = tempfile::tempdir().unwrap();
    synthesize_scenario(&ScenarioConfig { seed: 8, ..Default::default() }).unwrap().write_dir(c.path()).unwrap();
    let fc = read_all(c.path());
    let traj = |f: &[(String, Vec<u8>)]| f.iter().find(|(n, _)| n == "trajectories.csv").unwrap().1.clone();
    assert_ne!(traj(&fa), traj(&fc));
}

#[test]
fn written_files_carry_version_lines() {
    let dir = tempfile::tempdir().unwrap();
    scenario().write_dir(dir.path()).unwrap();
    for name in ["places.csv", "users.csv", "trajectories.csv", "cases.csv", "routes.csv"] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let kind = name.trim_end_matches(".csv");
        assert_eq!(text.lines().next().unwrap(), format!("# mobikg-{kind} v1"));
    }
    let regions: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("regions.geojson")).unwrap()).unwrap();
    assert_eq!(regions["format"], "mobikg-regions v1");
}

#[test]
fn reload_reproduces_the_dataset() {
    let s = scenario();
    let (_d, ds, truth) = written(&ScenarioConfig::default());
    assert_eq!(ds, s.dataset);
    assert_eq!(truth, s.truth);
}

#[test]
fn planted_hotspots_carry_their_class() {
    let (_d, ds, truth) = written(&ScenarioConfig::default());
    let geo: Vec<GeoCase> = ds.cases.iter().map(|c| GeoCase { location: c.location.unwrap(), count: c.count }).collect();
    assert_eq!(truth.hotspots.len(), 2);
    for h in &truth.hotspots {
        let r = ds.region(&h.region_id).unwrap();
        assert_eq!(label_region(&geo, &r.centroid()), h.class, "{}", h.region_id);
    }
    let hot: BTreeSet<&str> = ds
        .regions
        .iter()
        .filter(|r| label_region(&geo, &r.centroid()).is_hotspot())
        .map(|r| r.id.as_str())
        .collect();
    assert_eq!(hot, truth.hotspots.iter().map(|h| h.region_id.as_str()).collect());
}

#[test]
fn single_c1_plant_labels_c1() {
    let cfg = ScenarioConfig {
        seed: 3,
        hotspots: vec![HotspotPlant { row: 2, col: 3, class: HotspotClass::C1, cases: 21, day: 1 }],
        ..Default::default()
    };
    let s = synthesize_scenario(&cfg).unwrap();
    let geo: Vec<GeoCase> =
        s.dataset.cases.iter().map(|c| GeoCase { location: c.location.unwrap(), count: c.count }).collect();
    let r = s.dataset.region("r002c003").unwrap();
    assert_eq!(label_region(&geo, &r.centroid()), HotspotClass::C1);
}

#[test]
fn planted_flow_is_recovered_exactly() {
    let (_d, ds, truth) = written(&ScenarioConfig::default());
    let d = &truth.derive;
    let visits = derive_visits_many(&ds.users, &ds.places, d.stay_radius_m, d.stay_min_s).unwrap();
    let flows = derive_flows(&visits, d.flow).unwrap();
    assert_eq!(d.flow.nu, 3);
    assert_eq!(flows.len(), 1, "{flows:?}");
    let (f, p) = (&flows[0], &truth.flows[0]);
    assert_eq!(p.users.len(), 5);
    assert_eq!(f.subject, Entity::id(&p.src));
    assert_eq!(f.object, Entity::id(&p.dst));
    assert_eq!(f.interval, Interval::closed(p.slot_start, p.slot_start + 3599));
    assert_eq!(f.feature, 5.0);
}

#[test]
fn planted_group_is_recovered_exactly() {
    let (_d, ds, truth) = written(&ScenarioConfig::default());
    let d = &truth.derive;
    let visits = derive_visits_many(&ds.users, &ds.places, d.stay_radius_m, d.stay_min_s).unwrap();
    let groups = derive_groups(&visits, d.group_tol_s).unwrap();
    assert_eq!(groups.len(), 1, "{groups:?}");
    let members = &truth.groups[0].members;
    assert_eq!(groups[0].subject, Entity::id(&members[0]));
    assert_eq!(groups[0].object, Entity::set(members[1..].iter().map(String::as_str)));
    assert_eq!(groups[0].feature, 4.0 / 5.0);
}

#[test]
fn planted_patterns_are_mined_above_threshold() {
    let (_d, ds, truth) = written(&ScenarioConfig::default());
    let d = &truth.derive;
    let (pkg, counts) = derive_pkg(&ds, d).unwrap();
    assert_eq!((counts.flows, counts.groups, counts.hotspots), (1, 1, 2));
    for (kind, want) in [(PatternKind::Cascading, &truth.cascading), (PatternKind::CoOccurrence, &truth.cooccurrence)] {
        let mined = mine_patterns(&pkg, &ds, d, kind).unwrap();
        assert!(!want.is_empty());
        for tags in want {
            let hit = mined.iter().find(|p| &p.members == tags).unwrap_or_else(|| panic!("{kind:?} {tags:?} missing"));
            assert!(hit.pi >= d.miner.pi1.min(d.miner.pi2), "{tags:?} pi {}", hit.pi);
        }
    }
}

fn plant_err(cfg: ScenarioConfig) -> String {
    match synthesize_scenario(&cfg) {
        Err(IoError::Plant(m)) => m,
        other => panic!("expected a plant error, got {other:?}"),
    }
}

#[test]
fn inconsistent_plants_are_rejected() {
    let hot = |class, cases, row, col| HotspotPlant { row, col, class, cases, day: 0 };
    let with_hot = |h: Vec<HotspotPlant>| ScenarioConfig { hotspots: h, ..Default::default() };
    assert!(plant_err(with_hot(vec![hot(HotspotClass::C1, 20, 1, 1)])).contains("more than 20"));
    assert!(plant_err(with_hot(vec![hot(HotspotClass::C2, 50, 2, 2)])).contains("more than 50"));
    assert!(plant_err(with_hot(vec![hot(HotspotClass::C3, 50, 2, 2)])).contains("only C1 and C2"));
    assert!(plant_err(with_hot(vec![hot(HotspotClass::C2, 60, 0, 2)])).contains("border"));
    assert!(plant_err(with_hot(vec![hot(HotspotClass::C1, 30, 1, 1), hot(HotspotClass::C1, 30, 3, 2)])).contains("apart"));
    assert!(plant_err(with_hot(vec![hot(HotspotClass::C1, 30, 9, 1)])).contains("outside"));
    let flows = ScenarioConfig { flows: vec![FlowPlant { users: 2, day: 0, hour: 9 }], ..Default::default() };
    assert!(plant_err(flows).contains("below nu"));
    let groups = ScenarioConfig { groups: vec![GroupPlant { users: 5, day: 0, hour: 9 }], ..Default::default() };
    assert!(plant_err(groups).contains("flow"));
    let crowded = ScenarioConfig { n_users: 6, ..Default::default() };
    assert!(plant_err(crowded).contains("users"));
}

#[test]
fn bad_config_is_rejected() {
    for cfg in [
        ScenarioConfig { tick_s: 700, ..Default::default() },
        ScenarioConfig { start: 1_583_020_801, ..Default::default() },
        ScenarioConfig { cell_m: 500.0, ..Default::default() },
        ScenarioConfig { days: 0, ..Default::default() },
        ScenarioConfig { leave_home_p: 1.5, ..Default::default() },
    ] {
        assert!(matches!(synthesize_scenario(&cfg), Err(IoError::Config(_))), "{cfg:?}");
    }
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const TWO_REGIONS: &str = r#"{"type":"FeatureCollection","features":[
 {"type":"Feature","id":"a","geometry":{"type":"Polygon","coordinates":[[[88.0,22.0],[88.01,22.0],[88.01,22.01],[88.0,22.01],[88.0,22.0]]]},
  "properties":{"population_density":100.5,"literacy_rate":0.8,"medical_facilities":2,"aggregate_flow":null}},
 {"type":"Feature","geometry":{"type":"Polygon","coordinates":[[[88.01,22.0],[88.02,22.0],[88.02,22.01],[88.01,22.01],[88.01,22.0]]]},
  "properties":{"id":"b"}}
]}"#;

fn paths(dir: &Path) -> DatasetPaths {
    DatasetPaths { regions: write(dir, "regions.geojson", TWO_REGIONS), ..Default::default() }
}

#[test]
fn regions_parse_from_geojson() {
    let dir = tempfile::tempdir().unwrap();
    let ds = load_dataset(&paths(dir.path()), &Schema::default()).unwrap();
    assert_eq!(ds.regions.len(), 2);
    let a = &ds.regions[0];
    assert_eq!(a.id, "a");
    assert_eq!(a.bbox, BBox::new(22.0, 88.0, 22.01, 88.01).unwrap());
    assert_eq!((a.population_density, a.literacy_rate, a.medical_facilities, a.aggregate_flow), (Some(100.5), Some(0.8), Some(2), None));
    assert_eq!(ds.regions[1].id, "b");
    assert!(ds.regions[0].bbox.shares_border(&ds.regions[1].bbox));
}

#[test]
fn empty_trajectory_file_gives_no_users() {
    let dir = tempfile::tempdir().unwrap();
    for text in ["", "# mobikg-trajectories v1\nuser_id,timestamp,lat,lon\n"] {
        let p = DatasetPaths { trajectories: Some(write(dir.path(), "t.csv", text)), ..paths(dir.path()) };
        let ds = load_dataset(&p, &Schema::default()).unwrap();
        assert!(ds.users.is_empty());
    }
}

#[test]
fn non_numeric_lat_cites_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = "# mobikg-trajectories v1\nuser_id,timestamp,lat,lon\nu1,10,22.0,88.0\nu1,20,north,88.0\n";
    let p = DatasetPaths { trajectories: Some(write(dir.path(), "t.csv", text)), ..paths(dir.path()) };
    match load_dataset(&p, &Schema::default()) {
        Err(IoError::Parse { file, line, msg }) => {
            assert_eq!(line, 4);
            assert!(file.ends_with("t.csv"));
            assert!(msg.contains("lat"), "{msg}");
        }
        other => panic!("{other:?}"),
    }
    // Without a version line the row moves up one line.
    let p = DatasetPaths { trajectories: Some(write(dir.path(), "t.csv", &text[25..])), ..paths(dir.path()) };
    assert!(matches!(load_dataset(&p, &Schema::default()), Err(IoError::Parse { line: 3, .. })));
}

#[test]
fn dangling_regions_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let text = "region_id,timestamp,count\na,1,2\nzz,1,1\nqq,2,1\nzz,3,1\n";
    let p = DatasetPaths { cases: Some(write(dir.path(), "c.csv", text)), ..paths(dir.path()) };
    match load_dataset(&p, &Schema::default()) {
        Err(IoError::Dangling { kind, ids, .. }) => {
            assert_eq!(kind, "region");
            assert_eq!(ids, vec!["qq".to_string(), "zz".to_string()]);
        }
        other => panic!("{other:?}"),
    }
    let routes = "src_id,dst_id,route_count\na,b,3\na,x,1\n";
    let p = DatasetPaths { routes: Some(write(dir.path(), "r.csv", routes)), ..paths(dir.path()) };
    assert!(matches!(load_dataset(&p, &Schema::default()), Err(IoError::Dangling { ids, .. }) if ids == ["x"]));
}

#[test]
fn unknown_trajectory_user_is_dangling() {
    let dir = tempfile::tempdir().unwrap();
    let users = write(dir.path(), "u.csv", "user_id,age\nu1,30\n");
    let traj = write(dir.path(), "t.csv", "user_id,timestamp,lat,lon\nu1,1,22,88\nu9,1,22,88\n");
    let p = DatasetPaths { users: Some(users), trajectories: Some(traj), ..paths(dir.path()) };
    assert!(matches!(load_dataset(&p, &Schema::default()), Err(IoError::Dangling { kind: "user", ids, .. }) if ids == ["u9"]));
}

#[test]
fn version_mismatch_and_missing_columns_fail() {
    let dir = tempfile::tempdir().unwrap();
    let p = DatasetPaths { cases: Some(write(dir.path(), "c.csv", "# mobikg-cases v2\nregion_id,timestamp,count\n")), ..paths(dir.path()) };
    assert!(matches!(load_dataset(&p, &Schema::default()), Err(IoError::Version { .. })));
    let p = DatasetPaths { cases: Some(write(dir.path(), "c.csv", "region_id,timestamp\na,1\n")), ..paths(dir.path()) };
    assert!(matches!(load_dataset(&p, &Schema::default()), Err(IoError::Parse { msg, .. }) if msg.contains("count")));
}

#[test]
fn duplicate_timestamp_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let traj = write(dir.path(), "t.csv", "user_id,timestamp,lat,lon\nu1,5,22,88\nu1,5,22.1,88\n");
    let p = DatasetPaths { trajectories: Some(traj), ..paths(dir.path()) };
    assert!(matches!(load_dataset(&p, &Schema::default()), Err(IoError::Parse { line: 3, .. })));
}

#[test]
fn custom_schema_columns() {
    let dir = tempfile::tempdir().unwrap();
    let traj = write(dir.path(), "t.csv", "who,when,y,x\nu2,9,22.005,88.005\nu2,3,22.006,88.005\n");
    let schema = Schema { user_col: "who".into(), time_col: "when".into(), lat_col: "y".into(), lon_col: "x".into(), ..Default::default() };
    let p = DatasetPaths { trajectories: Some(traj), ..paths(dir.path()) };
    let ds = load_dataset(&p, &schema).unwrap();
    assert_eq!(ds.users.len(), 1);
    let ts: Vec<i64> = ds.users[0].trajectory.iter().map(|p| p.t).collect();
    assert_eq!(ts, vec![3, 9]);
}

#[test]
fn catalog_round_trip_and_uri_checks() {
    let dir = tempfile::tempdir().unwrap();
    scenario().write_dir(dir.path()).unwrap();
    let entries = read_catalog(&dir.path().join("catalog.json")).unwrap();
    assert_eq!(entries.len(), SCENARIO_FILES.len());
    assert!(entries.iter().all(|e| e.schema.starts_with("mobikg-")));

    for uri in ["../etc/passwd", "/etc/passwd", ""] {
        assert!(resolve_uri(dir.path(), uri).is_err(), "{uri}");
    }
    let mut bad = entries.clone();
    bad[0].uri = "missing.csv".into();
    let p = dir.path().join("bad.json");
    write_catalog(&bad, &p).unwrap();
    assert!(read_catalog(&p).is_err());
}

fn arb_fact() -> impl Strategy<Value = TemporalFact> {
    let id = "[a-z][a-z0-9_]{0,6}";
    (id, id, 0usize..3, -1_000_000i64..1_000_000, prop::option::of(0i64..100_000), 0.0f64..1.0).prop_map(
        |(s, o, shape, t1, len, f)| {
            let object = match shape {
                0 => Entity::id(o),
                1 => Entity::set([o.clone(), format!("{o}x")]),
                _ => Entity::Area(BBox::new(22.0, 88.0, 22.0 + (t1.abs() as f64) * 1e-7 + 1e-3, 88.5).unwrap()),
            };
            let interval = match len {
                Some(l) => Interval::closed(t1, t1 + l),
                None => Interval::open(t1),
            };
            TemporalFact::new(Entity::id(s), Relation::ALL[(t1.unsigned_abs() % 8) as usize], object, interval, f).unwrap()
        },
    )
}

#[test]
fn pkg_file_round_trip_of_many_facts() {
    let mut rng = proptest::test_runner::TestRunner::deterministic();
    let facts: Vec<TemporalFact> =
        (0..10_000).map(|_| arb_fact().new_tree(&mut rng).unwrap().current()).collect();
    let mut pkg = crate::pkg::Pkg::new();
    pkg.commit(facts).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.pkg"), dir.path().join("b.pkg"));
    save_pkg(&pkg, &a).unwrap();
    let back = load_pkg(&a).unwrap();
    save_pkg(&back, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let set = |p: &crate::pkg::Pkg| p.facts().into_iter().cloned().map(|f| format!("{f:?}")).collect::<Vec<_>>();
    assert_eq!(set(&pkg), set(&back));
    assert!(back.facts().iter().any(|f| f.interval.is_open()));

    save_pkg(&crate::pkg::Pkg::new(), &a).unwrap();
    assert!(load_pkg(&a).unwrap().is_empty());
}

#[test]
fn bench_counts_are_stable() {
    let a = bench_pkg(1000, 1, 1).unwrap();
    let b = bench_pkg(1000, 1, 2).unwrap();
    assert_eq!(a.facts, 800 * 3);
    assert_eq!((a.facts, a.hits, a.queries), (b.facts, b.hits, b.queries));
    assert_eq!(a.queries, BENCH_QUERIES);
    assert!(a.hits > 0);
    assert!(bench_pkg(3, 1, 1).is_err());
}

#[test]
fn region_samples_reflect_the_plants() {
    let (_d, ds, truth) = written(&ScenarioConfig::default());
    let (pkg, _) = derive_pkg(&ds, &truth.derive).unwrap();
    let times = daily_times(&ds);
    assert_eq!(times.len(), 7);
    let samples = build_region_samples(&ds, &pkg, &[], &[], &times, &SampleConfig::default());
    assert_eq!(samples.len(), 7 * ds.regions.len());
    let last = &samples[6 * ds.regions.len()..];
    for h in &truth.hotspots {
        let s = last.iter().find(|s| s.region_id == h.region_id).unwrap();
        assert_eq!(s.label, h.class);
        assert_eq!(s.context[ctx::HOTSPOT_FACT], 1.0);
        assert_eq!(s.context[ctx::DENSITY], 1.0);
    }
    for s in last.iter().filter(|s| !truth.hotspots.iter().any(|h| h.region_id == s.region_id)) {
        assert!(!s.label.is_hotspot());
        assert_eq!(s.context[ctx::HOTSPOT_FACT], 0.0);
    }
    for s in &samples {
        assert!(!s.steps.is_empty() && s.steps.len() <= 5);
        assert!(s.context.iter().all(|v| v.is_finite()));
        assert!(s.initial_phase);
    }
    let flow_dst = ds.places.iter().find(|p| p.id == truth.flows[0].dst).unwrap().region_id.clone().unwrap();
    let flow_src = ds.places.iter().find(|p| p.id == truth.flows[0].src).unwrap().region_id.clone().unwrap();
    if flow_src != flow_dst {
        let s = last.iter().find(|s| s.region_id == flow_dst).unwrap();
        assert!(s.context[ctx::CONNECTIVITY] > 0.0 || !s.steps.is_empty());
    }
}

#[test]
fn weekday_and_daily_times() {
    let mut ds = Dataset::default();
    assert!(daily_times(&ds).is_empty());
    ds.cases.push(crate::pkg::CaseEvent { region_id: "a".into(), timestamp: 86_400 + 5, count: 1, location: Some(LatLon::new(0.0, 0.0)) });
    ds.cases.push(crate::pkg::CaseEvent { region_id: "a".into(), timestamp: 3 * 86_400, count: 1, location: None });
    assert_eq!(daily_times(&ds), vec![2 * 86_400 - 1, 3 * 86_400 - 1, 4 * 86_400 - 1]);
}
