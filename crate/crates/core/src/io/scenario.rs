//! Seeded city generator.
//!
//! Users live at private homes and alternate between home and shared POIs in
//! a two-state walk (never POI to POI). Planted structures use dedicated
//! places and are written first; the walk fills the remaining time. Case
//! reports are sparse background noise plus dense clusters at the planted
//! hotspots.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{file_err, write_catalog, CatalogEntry, Dataset, IoError};
use crate::geo::{BBox, Grid, LatLon, Place, PoiType, Region, Route};
use crate::mining::{ContextThresholds, MinerConfig, NeighborRelation, TAG_DENSITY};
use crate::net::label::{label_region, GeoCase, HotspotClass};
use crate::pkg::{CaseEvent, Entity, FlowConfig, Relation, Timestamp, TrajectoryPoint, User};

pub const TRUTH_FORMAT: &str = "mobikg-truth v1";
/// Inner cases of a planted C2 cluster; the rest sit on a 700-800 m ring.
const C2_INNER: u32 = 15;
const C1_RADIUS_M: f64 = 150.0;
const MIN_PLACE_GAP_M: f64 = 150.0;
const JITTER_M: f64 = 10.0;

/// Thresholds used to turn a dataset into facts and patterns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeriveSettings {
    pub stay_radius_m: f64,
    pub stay_min_s: Timestamp,
    pub group_tol_s: Timestamp,
    pub flow: FlowConfig,
    pub context: ContextThresholds,
    pub neighbor: NeighborRelation,
    pub miner: MinerConfig,
}

impl Default for DeriveSettings {
    fn default() -> Self {
        Self {
            stay_radius_m: 50.0,
            stay_min_s: 600,
            group_tol_s: 300,
            flow: FlowConfig::default(),
            context: ContextThresholds { density: 15_000.0, movement: 900.0 },
            neighbor: NeighborRelation::default(),
            miner: MinerConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HotspotPlant {
    pub row: usize,
    pub col: usize,
    pub class: HotspotClass,
    pub cases: u32,
    /// Reports start on this day and spread over the next three.
    pub day: u32,
}

/// `users` people go from one dedicated place to another, all leaving in
/// the same hour.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowPlant {
    pub users: usize,
    pub day: u32,
    pub hour: u32,
}

/// `users` people visit three dedicated places together.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupPlant {
    pub users: usize,
    pub day: u32,
    pub hour: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// South-west corner of the grid.
    pub origin: LatLon,
    pub rows: usize,
    pub cols: usize,
    pub cell_m: f64,
    /// Scenario start; must fall on an hour boundary.
    pub start: Timestamp,
    pub days: u32,
    pub n_users: usize,
    pub n_pois: usize,
    pub tick_s: Timestamp,
    /// Per-tick chance of leaving home between 08:00 and 21:00.
    pub leave_home_p: f64,
    /// Per-tick chance of heading home once the minimum dwell is met.
    pub return_home_p: f64,
    pub max_background_cases: u32,
    pub n_routes: usize,
    pub hotspots: Vec<HotspotPlant>,
    pub flows: Vec<FlowPlant>,
    pub groups: Vec<GroupPlant>,
    pub derive: DeriveSettings,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            origin: LatLon::new(22.5, 88.3),
            rows: 6,
            cols: 6,
            cell_m: 1200.0,
            start: 1_583_020_800,
            days: 7,
            n_users: 30,
            n_pois: 24,
            tick_s: 300,
            leave_home_p: 0.04,
            return_home_p: 0.25,
            max_background_cases: 2,
            n_routes: 12,
            hotspots: vec![
                HotspotPlant { row: 1, col: 1, class: HotspotClass::C1, cases: 30, day: 0 },
                HotspotPlant { row: 4, col: 4, class: HotspotClass::C2, cases: 60, day: 1 },
            ],
            flows: vec![FlowPlant { users: 5, day: 2, hour: 10 }],
            groups: vec![GroupPlant { users: 4, day: 3, hour: 14 }],
            derive: DeriveSettings::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedHotspot {
    pub region_id: String,
    pub class: HotspotClass,
    pub cases: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedFlow {
    pub src: String,
    pub dst: String,
    pub users: Vec<String>,
    pub slot_start: Timestamp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedGroup {
    pub members: Vec<String>,
    pub places: Vec<String>,
}

/// What the generator planted, and the tag lists of the patterns a miner
/// run with `derive` must report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub format: String,
    pub seed: u64,
    pub hotspots: Vec<PlantedHotspot>,
    pub flows: Vec<PlantedFlow>,
    pub groups: Vec<PlantedGroup>,
    pub cascading: Vec<Vec<String>>,
    pub cooccurrence: Vec<Vec<String>>,
    pub derive: DeriveSettings,
}

impl GroundTruth {
    pub fn read(path: &Path) -> Result<GroundTruth, IoError> {
        let text = std::fs::read_to_string(path).map_err(file_err(path))?;
        let t: GroundTruth = serde_json::from_str(&text).map_err(|e| IoError::Parse {
            file: path.to_path_buf(),
            line: e.line() as u64,
            msg: e.to_string(),
        })?;
        if t.format != TRUTH_FORMAT {
            return Err(IoError::Version { file: path.to_path_buf(), expected: TRUTH_FORMAT.into(), found: t.format });
        }
        Ok(t)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub bbox: BBox,
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

pub const SCENARIO_FILES: [&str; 6] =
    ["regions.geojson", "places.csv", "users.csv", "trajectories.csv", "cases.csv", "routes.csv"];

impl Scenario {
    pub fn end(&self) -> Timestamp {
        self.config.start + self.config.days as i64 * 86_400
    }

    /// Writes the dataset files, `truth.json` and `catalog.json` into `dir`
    /// and returns the paths written.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<PathBuf>, IoError> {
        std::fs::create_dir_all(dir).map_err(file_err(dir))?;
        let ds = &self.dataset;
        let mut written = Vec::new();
        for name in SCENARIO_FILES {
            let path = dir.join(name);
            let f = std::fs::File::create(&path).map_err(file_err(&path))?;
            let mut w = std::io::BufWriter::new(f);
            match name {
                "regions.geojson" => super::write_regions_geojson(&ds.regions, &mut w)?,
                "places.csv" => super::write_places_csv(&ds.places, &mut w)?,
                "users.csv" => super::write_users_csv(&ds.users, &mut w)?,
                "trajectories.csv" => super::write_trajectories_csv(&ds.users, &mut w)?,
                "cases.csv" => super::write_cases_csv(&ds.cases, &mut w)?,
                _ => super::write_routes_csv(&ds.routes, &mut w)?,
            }
            std::io::Write::flush(&mut w)?;
            written.push(path);
        }
        let truth = dir.join("truth.json");
        let mut text = serde_json::to_string_pretty(&self.truth)?;
        text.push('\n');
        std::fs::write(&truth, text).map_err(file_err(&truth))?;
        written.push(truth);

        let entries: Vec<CatalogEntry> = SCENARIO_FILES
            .iter()
            .map(|name| {
                let kind = name.split('.').next().unwrap_or(name);
                CatalogEntry {
                    dataset_id: format!("scenario-{}-{kind}", self.config.seed),
                    provider: "mobikg synth".into(),
                    schema: format!("mobikg-{kind} v1"),
                    coverage: self.bbox,
                    time_span: [self.config.start, self.end() - 1],
                    uri: name.to_string(),
                }
            })
            .collect();
        let catalog = dir.join("catalog.json");
        write_catalog(&entries, &catalog)?;
        written.push(catalog);
        Ok(written)
    }
}

impl ScenarioConfig {
    fn min_run(&self) -> usize {
        (self.derive.stay_min_s as usize).div_ceil(self.tick_s as usize) + 1
    }

    pub fn validate(&self) -> Result<(), IoError> {
        let cfg = |m: String| Err(IoError::Config(m));
        if self.rows < 2 || self.cols < 2 {
            return cfg(format!("grid must be at least 2x2, got {}x{}", self.rows, self.cols));
        }
        if !(1000.0..=5000.0).contains(&self.cell_m) {
            return cfg(format!("cell_m must lie in [1000, 5000], got {}", self.cell_m));
        }
        if self.tick_s <= 0 || 3600 % self.tick_s != 0 {
            return cfg(format!("tick_s must divide 3600, got {}", self.tick_s));
        }
        if self.start.rem_euclid(3600) != 0 {
            return cfg("start must fall on an hour boundary".into());
        }
        if self.days == 0 || self.n_users == 0 || self.n_pois == 0 {
            return cfg("days, n_users and n_pois must be positive".into());
        }
        for (name, p) in [("leave_home_p", self.leave_home_p), ("return_home_p", self.return_home_p)] {
            if !(0.0..=1.0).contains(&p) {
                return cfg(format!("{name} must be a probability, got {p}"));
            }
        }
        if self.derive.stay_min_s <= 0 || self.derive.stay_min_s > 1800 {
            return cfg("derive.stay_min_s must lie in (0, 1800]".into());
        }
        if !(self.derive.stay_radius_m > 0.0 && self.derive.stay_radius_m < MIN_PLACE_GAP_M / 2.0 - JITTER_M) {
            return cfg(format!("derive.stay_radius_m must lie in (0, {})", MIN_PLACE_GAP_M / 2.0 - JITTER_M));
        }
        if self.derive.flow.slot_s != 3600 {
            return cfg("planted flows assume hourly flow slots".into());
        }
        self.derive.miner.validate().map_err(|e| IoError::Config(e.to_string()))?;
        self.derive.neighbor.validate().map_err(|e| IoError::Config(e.to_string()))?;
        self.validate_plants()
    }

    fn validate_plants(&self) -> Result<(), IoError> {
        let bad = |m: String| Err(IoError::Plant(m));
        for (i, h) in self.hotspots.iter().enumerate() {
            if h.row >= self.rows || h.col >= self.cols {
                return bad(format!("hotspot {i} at ({}, {}) is outside the grid", h.row, h.col));
            }
            if h.day >= self.days {
                return bad(format!("hotspot {i} starts after the scenario ends"));
            }
            match h.class {
                HotspotClass::C1 if h.cases <= 20 => {
                    return bad(format!("hotspot {i}: C1 needs more than 20 cases, got {}", h.cases))
                }
                HotspotClass::C2 if h.cases <= 50 => {
                    return bad(format!("hotspot {i}: C2 needs more than 50 cases, got {}", h.cases))
                }
                HotspotClass::C2 if h.row == 0 || h.col == 0 || h.row + 1 == self.rows || h.col + 1 == self.cols => {
                    return bad(format!("hotspot {i}: a C2 cluster cannot sit on the grid border"))
                }
                HotspotClass::C1 | HotspotClass::C2 => {}
                other => return bad(format!("hotspot {i}: only C1 and C2 can be planted, got {other}")),
            }
            for (j, g) in self.hotspots.iter().enumerate().skip(i + 1) {
                if h.row.abs_diff(g.row).max(h.col.abs_diff(g.col)) < 3 {
                    return bad(format!("hotspots {i} and {j} are fewer than 3 cells apart"));
                }
            }
        }
        let nu = self.derive.flow.nu;
        for (i, f) in self.flows.iter().enumerate() {
            if f.users < nu {
                return bad(format!("flow {i} has {} users, below nu = {nu}", f.users));
            }
            if f.day >= self.days || !(1..=21).contains(&f.hour) {
                return bad(format!("flow {i} must start on a scenario day between 01:00 and 21:00"));
            }
        }
        for (i, g) in self.groups.iter().enumerate() {
            if g.users < 2 {
                return bad(format!("group {i} needs at least 2 users"));
            }
            if g.users > 2 * (nu - 1) {
                return bad(format!("group {i} of {} users would also form a flow at nu = {nu}", g.users));
            }
            if g.day >= self.days || !(1..=20).contains(&g.hour) {
                return bad(format!("group {i} must start on a scenario day between 01:00 and 20:00"));
            }
        }
        let planted: usize = self.flows.iter().map(|f| f.users).sum::<usize>() + self.groups.iter().map(|g| g.users).sum::<usize>();
        if planted > self.n_users {
            return bad(format!("plants need {planted} users, only {} exist", self.n_users));
        }
        Ok(())
    }
}

struct Gen {
    rng: ChaCha8Rng,
    grid: Grid,
    places: Vec<Place>,
}

impl Gen {
    fn uniform_point(&mut self, margin_m: f64) -> LatLon {
        let b = *self.grid.bbox();
        let sw = LatLon::new(b.min_lat, b.min_lon).offset_m(margin_m, margin_m);
        let ne = LatLon::new(b.max_lat, b.max_lon).offset_m(-margin_m, -margin_m);
        LatLon::new(self.rng.gen_range(sw.lat..ne.lat), self.rng.gen_range(sw.lon..ne.lon))
    }

    fn free(&self, p: &LatLon) -> bool {
        self.places.iter().all(|q| q.location.haversine_m(p) >= MIN_PLACE_GAP_M)
    }

    fn region_of(&self, p: &LatLon) -> Result<String, IoError> {
        let i = self.grid.locate(p).ok_or_else(|| IoError::Config(format!("point {p:?} fell outside the grid")))?;
        Ok(self.grid.regions()[i].id.clone())
    }

    /// Adds a place at a random free spot, optionally within `near.1` metres
    /// of `near.0`.
    fn add_place(&mut self, id: String, poi: PoiType, near: Option<(LatLon, f64)>) -> Result<usize, IoError> {
        for _ in 0..10_000 {
            let p = match near {
                None => self.uniform_point(100.0),
                Some((c, r)) => {
                    let d = self.rng.gen_range(r / 3.0..r);
                    let a = self.rng.gen_range(0.0..2.0 * PI);
                    c.offset_m(d * a.sin(), d * a.cos())
                }
            };
            let inside = self.grid.bbox().contains(&p);
            if inside && self.free(&p) {
                let mut place = Place::new(id, poi, p);
                place.area_m2 = (self.rng.gen_range(200.0..5000.0f64)).round();
                place.region_id = Some(self.region_of(&p)?);
                self.places.push(place);
                return Ok(self.places.len() - 1);
            }
        }
        Err(IoError::Config("could not place every location; enlarge the grid or reduce counts".into()))
    }
}

/// Generates a scenario; the same config always yields the same scenario.
pub fn synthesize_scenario(cfg: &ScenarioConfig) -> Result<Scenario, IoError> {
    cfg.validate()?;
    let bbox = BBox::from_origin_m(cfg.origin, cfg.rows as f64 * cfg.cell_m, cfg.cols as f64 * cfg.cell_m)?;
    let grid = Grid::new(bbox, cfg.cell_m)?;
    if grid.rows() != cfg.rows || grid.cols() != cfg.cols {
        return Err(IoError::Config(format!("grid came out {}x{}", grid.rows(), grid.cols())));
    }
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(cfg.seed), grid, places: Vec::new() };

    // Places: homes, shared POIs, then the dedicated planted places.
    let homes: Vec<usize> = (0..cfg.n_users)
        .map(|u| g.add_place(format!("home{u:03}"), PoiType::Residence, None))
        .collect::<Result<_, _>>()?;
    const POI_TYPES: [PoiType; 5] = [PoiType::Commercial, PoiType::Park, PoiType::Hospital, PoiType::Other, PoiType::RailJunction];
    let pois: Vec<usize> = (0..cfg.n_pois)
        .map(|k| {
            let t = POI_TYPES[k % POI_TYPES.len()];
            g.add_place(format!("poi{k:03}"), t, None)
        })
        .collect::<Result<_, _>>()?;
    let mut flow_places = Vec::new();
    for k in 0..cfg.flows.len() {
        let a = g.add_place(format!("flow{k}a"), PoiType::RailJunction, None)?;
        let near = Some((g.places[a].location, 1500.0));
        let b = g.add_place(format!("flow{k}b"), PoiType::Commercial, near)?;
        flow_places.push((a, b));
    }
    let mut group_places = Vec::new();
    for k in 0..cfg.groups.len() {
        let p1 = g.add_place(format!("group{k}p1"), PoiType::Park, None)?;
        let p2 = g.add_place(format!("group{k}p2"), PoiType::Commercial, Some((g.places[p1].location, 1200.0)))?;
        let p3 = g.add_place(format!("group{k}p3"), PoiType::Other, Some((g.places[p2].location, 1200.0)))?;
        group_places.push([p1, p2, p3]);
    }

    // Per-user schedule of place indices, one slot per tick.
    let tick = cfg.tick_s;
    let n_ticks = (cfg.days as i64 * 86_400 / tick) as usize;
    let tick_of = |t: Timestamp| ((t - cfg.start) / tick) as usize;
    let mut sched: Vec<Vec<Option<usize>>> = vec![vec![None; n_ticks]; cfg.n_users];
    let mut planted_blocks: Vec<Vec<(usize, usize)>> = vec![Vec::new(); cfg.n_users];
    let mut put = |sched: &mut Vec<Vec<Option<usize>>>, u: usize, place: usize, from: Timestamp, to: Timestamp| {
        let (a, b) = (tick_of(from), tick_of(to).min(n_ticks));
        for s in &mut sched[u][a..b] {
            *s = Some(place);
        }
        planted_blocks[u].push((a, b));
    };
    let user_id = |u: usize| format!("u{u:03}");
    let mut next_user = 0;
    let mut truth_flows = Vec::new();
    for (k, f) in cfg.flows.iter().enumerate() {
        let t0 = cfg.start + f.day as i64 * 86_400 + f.hour as i64 * 3600;
        let (a, b) = flow_places[k];
        let members: Vec<usize> = (next_user..next_user + f.users).collect();
        next_user += f.users;
        for &u in &members {
            put(&mut sched, u, a, t0, t0 + 1800);
            put(&mut sched, u, b, t0 + 1800, t0 + 5400);
        }
        truth_flows.push(PlantedFlow {
            src: g.places[a].id.clone(),
            dst: g.places[b].id.clone(),
            users: members.iter().map(|&u| user_id(u)).collect(),
            slot_start: t0,
        });
    }
    let mut truth_groups = Vec::new();
    for (k, gp) in cfg.groups.iter().enumerate() {
        let t0 = cfg.start + gp.day as i64 * 86_400 + gp.hour as i64 * 3600;
        let members: Vec<usize> = (next_user..next_user + gp.users).collect();
        next_user += gp.users;
        for (j, &u) in members.iter().enumerate() {
            // Half the members leave each place one tick later, in the next
            // hour slot, so no slot sees nu departures.
            let s = (j % 2) as i64 * tick;
            let [p1, p2, p3] = group_places[k];
            put(&mut sched, u, p1, t0, t0 + 3600 + s);
            put(&mut sched, u, p2, t0 + 3600 + s, t0 + 7200 + s);
            put(&mut sched, u, p3, t0 + 7200 + s, t0 + 9000 + s + tick);
        }
        truth_groups.push(PlantedGroup {
            members: members.iter().map(|&u| user_id(u)).collect(),
            places: group_places[k].iter().map(|&p| g.places[p].id.clone()).collect(),
        });
    }

    // Home buffers around planted blocks, then the random walk.
    let min_run = cfg.min_run();
    let buffer = min_run + 1;
    for u in 0..cfg.n_users {
        for &(a, b) in &planted_blocks[u] {
            for i in a.saturating_sub(buffer)..a {
                sched[u][i].get_or_insert(homes[u]);
            }
            for i in b..(b + buffer).min(n_ticks) {
                sched[u][i].get_or_insert(homes[u]);
            }
        }
        let mut i = 0;
        let mut cooldown = 0usize;
        while i < n_ticks {
            if sched[u][i].is_some() {
                cooldown = buffer;
                i += 1;
                continue;
            }
            sched[u][i] = Some(homes[u]);
            let hour = ((cfg.start + i as i64 * tick).rem_euclid(86_400)) / 3600;
            let room = (i + 1..n_ticks).take_while(|&k| sched[u][k].is_none()).count();
            let leave = cooldown == 0 && (8..21).contains(&hour) && g.rng.gen_bool(cfg.leave_home_p);
            if leave && room >= min_run + buffer {
                let mut len = min_run;
                while len + buffer < room && !g.rng.gen_bool(cfg.return_home_p) {
                    len += 1;
                }
                let poi = pois[g.rng.gen_range(0..pois.len())];
                for s in &mut sched[u][i + 1..i + 1 + len] {
                    *s = Some(poi);
                }
                i += 1 + len;
                cooldown = buffer;
                continue;
            }
            cooldown = cooldown.saturating_sub(1);
            i += 1;
        }
    }

    // Users and trajectories.
    let mut users = Vec::with_capacity(cfg.n_users);
    for u in 0..cfg.n_users {
        let mut traj = Vec::with_capacity(n_ticks);
        for (i, p) in sched[u].iter().enumerate() {
            let place = &g.places[p.expect("every tick scheduled")];
            let (n, e) = (g.rng.gen_range(-JITTER_M..JITTER_M), g.rng.gen_range(-JITTER_M..JITTER_M));
            traj.push(TrajectoryPoint { t: cfg.start + i as i64 * tick, location: place.location.offset_m(n, e) });
        }
        let mut user = User::new(user_id(u), traj);
        user.age = Some(g.rng.gen_range(18..=85));
        user.gender = Some(if g.rng.gen_bool(0.5) { "f" } else { "m" }.to_string());
        user.residence_region = g.places[homes[u]].region_id.clone();
        user.health_profile = Some("adult_default".into());
        users.push(user);
    }

    // Regions with attributes; planted hotspots get the high density that
    // triggers the density context event.
    let hot_ids: BTreeSet<String> = cfg.hotspots.iter().map(|h| Grid::cell_id(h.row, h.col)).collect();
    let mut regions: Vec<Region> = g.grid.regions().to_vec();
    for r in &mut regions {
        let density = if hot_ids.contains(&r.id) {
            cfg.derive.context.density + 10_000.0
        } else {
            (g.rng.gen_range(2000.0..cfg.derive.context.density * 0.8) as f64).round()
        };
        r.population_density = Some(density);
        r.literacy_rate = Some((g.rng.gen_range(0.6..0.95f64) * 1000.0).round() / 1000.0);
        r.medical_facilities = Some(g.rng.gen_range(0..=8));
        r.aggregate_flow = Some(g.rng.gen_range(100.0..1000.0f64).round());
    }

    // Cases.
    let end = cfg.start + cfg.days as i64 * 86_400;
    let mut cases = Vec::new();
    for ri in 0..regions.len() {
        let n = g.rng.gen_range(0..=cfg.max_background_cases);
        for _ in 0..n {
            let b = regions[ri].bbox;
            let p = LatLon::new(g.rng.gen_range(b.min_lat..b.max_lat), g.rng.gen_range(b.min_lon..b.max_lon));
            let t = g.rng.gen_range(cfg.start..end);
            cases.push(CaseEvent { region_id: g.region_of(&p)?, timestamp: t, count: 1, location: Some(p) });
        }
    }
    let mut truth_hot = Vec::new();
    for h in &cfg.hotspots {
        let center = g.grid.regions()[h.row * cfg.cols + h.col].centroid();
        let t_lo = cfg.start + h.day as i64 * 86_400;
        let t_hi = (t_lo + 3 * 86_400).min(end);
        let inner = if h.class == HotspotClass::C1 { h.cases } else { C2_INNER };
        let mut left = inner;
        while left > 0 {
            let c = g.rng.gen_range(1..=3).min(left);
            left -= c;
            let (d, a) = (g.rng.gen_range(0.0..C1_RADIUS_M), g.rng.gen_range(0.0..2.0 * PI));
            let p = center.offset_m(d * a.sin(), d * a.cos());
            let t = g.rng.gen_range(t_lo..t_hi);
            cases.push(CaseEvent { region_id: g.region_of(&p)?, timestamp: t, count: c, location: Some(p) });
        }
        for _ in inner..h.cases {
            let (d, a) = (g.rng.gen_range(700.0..800.0), g.rng.gen_range(0.0..2.0 * PI));
            let p = center.offset_m(d * a.sin(), d * a.cos());
            let t = g.rng.gen_range(t_lo..t_hi);
            cases.push(CaseEvent { region_id: g.region_of(&p)?, timestamp: t, count: 1, location: Some(p) });
        }
        truth_hot.push(PlantedHotspot { region_id: Grid::cell_id(h.row, h.col), class: h.class, cases: h.cases });
    }
    cases.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.region_id.cmp(&b.region_id)));

    // Every planted cell must carry its class and no other cell may be a hotspot.
    let geo: Vec<GeoCase> = cases
        .iter()
        .map(|c| GeoCase { location: c.location.expect("generated cases are geocoded"), count: c.count })
        .collect();
    for r in &regions {
        let got = label_region(&geo, &r.centroid());
        match truth_hot.iter().find(|h| h.region_id == r.id) {
            Some(h) if h.class != got => {
                return Err(IoError::Plant(format!("{} was planted as {} but labels as {got}", r.id, h.class)))
            }
            None if got.is_hotspot() => {
                return Err(IoError::Plant(format!("{} labels as {got} without a plant", r.id)))
            }
            _ => {}
        }
    }

    // Routes between regions that do not share a border.
    let mut pairs = BTreeSet::new();
    let mut tries = 0;
    while pairs.len() < cfg.n_routes.max(1) && tries < 100 * cfg.n_routes.max(1) {
        tries += 1;
        let (a, b) = (g.rng.gen_range(0..regions.len()), g.rng.gen_range(0..regions.len()));
        if a != b && !regions[a].bbox.shares_border(&regions[b].bbox) {
            pairs.insert((a.min(b), a.max(b)));
        }
    }
    let routes: Vec<Route> = pairs
        .into_iter()
        .map(|(a, b)| Route { src: regions[a].id.clone(), dst: regions[b].id.clone(), count: g.rng.gen_range(1..=20) })
        .collect();

    let cascading = truth_flows
        .iter()
        .map(|f| vec![format!("{}@{}", Relation::Visit, f.src), format!("{}@{}", Relation::Visit, f.dst)])
        .collect();
    let cooccurrence = truth_hot
        .iter()
        .map(|h| {
            let mut v = vec![TAG_DENSITY.to_string(), format!("{}@{}", Relation::Hotspot, Entity::set([h.region_id.as_str()]))];
            v.sort();
            v
        })
        .collect();
    let truth = GroundTruth {
        format: TRUTH_FORMAT.into(),
        seed: cfg.seed,
        hotspots: truth_hot,
        flows: truth_flows,
        groups: truth_groups,
        cascading,
        cooccurrence,
        derive: cfg.derive.clone(),
    };
    let dataset = Dataset { regions, places: g.places, users, cases, routes };
    Ok(Scenario { config: cfg.clone(), bbox, dataset, truth })
}

/// Reads a scenario directory written by [`Scenario::write_dir`].
pub fn read_scenario_dir(dir: &Path) -> Result<(Dataset, GroundTruth), IoError> {
    let ds = super::load_dataset(&super::DatasetPaths::in_dir(dir), &super::Schema::default())?;
    let truth = GroundTruth::read(&dir.join("truth.json"))?;
    Ok((ds, truth))
}
