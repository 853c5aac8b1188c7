use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{file_err, version_line, IoError};
use crate::geo::{BBox, LatLon, Place, PoiType, Region, Route};
use crate::pkg::{CaseEvent, TrajectoryPoint, User};

/// Input files of a dataset. Only regions are required.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub regions: PathBuf,
    pub places: Option<PathBuf>,
    pub users: Option<PathBuf>,
    pub trajectories: Option<PathBuf>,
    pub cases: Option<PathBuf>,
    pub routes: Option<PathBuf>,
}

impl DatasetPaths {
    /// The standard file names inside one directory; absent files are skipped.
    pub fn in_dir(dir: &Path) -> Self {
        let opt = |name: &str| {
            let p = dir.join(name);
            p.exists().then_some(p)
        };
        Self {
            regions: dir.join("regions.geojson"),
            places: opt("places.csv"),
            users: opt("users.csv"),
            trajectories: opt("trajectories.csv"),
            cases: opt("cases.csv"),
            routes: opt("routes.csv"),
        }
    }
}

/// Column names of the trajectory and case files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub user_col: String,
    pub time_col: String,
    pub lat_col: String,
    pub lon_col: String,
    pub region_col: String,
    pub count_col: String,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            user_col: "user_id".into(),
            time_col: "timestamp".into(),
            lat_col: "lat".into(),
            lon_col: "lon".into(),
            region_col: "region_id".into(),
            count_col: "count".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub regions: Vec<Region>,
    pub places: Vec<Place>,
    pub users: Vec<User>,
    pub cases: Vec<CaseEvent>,
    pub routes: Vec<Route>,
}

impl Dataset {
    pub fn region(&self, id: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.id == id)
    }

    /// Region containing `p`, by bounding box, lowest id first.
    pub fn region_at(&self, p: &LatLon) -> Option<&Region> {
        self.regions.iter().find(|r| r.bbox.contains(p))
    }
}

struct Table {
    file: PathBuf,
    cols: HashMap<String, usize>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path, kind: &str, required: &[&str]) -> Result<Table, IoError> {
        let text = std::fs::read_to_string(path).map_err(file_err(path))?;
        let file = path.to_path_buf();
        if let Some(first) = text.lines().next() {
            let expected = version_line(kind);
            if first.starts_with("# mobikg-") && first.trim_end() != expected {
                return Err(IoError::Version { file, expected, found: first.to_string() });
            }
        }
        let mut rd = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rd.headers().map_err(|e| csv_err(&file, e))?.clone();
        if headers.is_empty() {
            return Ok(Table { file, cols: HashMap::new(), rows: Vec::new() });
        }
        let cols: HashMap<String, usize> = headers.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect();
        if let Some(missing) = required.iter().find(|c| !cols.contains_key(**c)) {
            let line = rd.position().line().saturating_sub(1).max(1);
            return Err(IoError::Parse { file, line, msg: format!("missing column {missing:?}") });
        }
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| csv_err(&file, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Table { file, cols, rows })
    }

    fn err(&self, line: u64, msg: impl Into<String>) -> IoError {
        IoError::Parse { file: self.file.clone(), line, msg: msg.into() }
    }

    fn get<'r>(&self, rec: &'r csv::StringRecord, col: &str) -> Option<&'r str> {
        self.cols.get(col).and_then(|&i| rec.get(i)).filter(|s| !s.is_empty())
    }

    fn req<'r>(&self, line: u64, rec: &'r csv::StringRecord, col: &str) -> Result<&'r str, IoError> {
        self.get(rec, col).ok_or_else(|| self.err(line, format!("empty {col}")))
    }

    fn parse<T: std::str::FromStr>(&self, line: u64, rec: &csv::StringRecord, col: &str) -> Result<T, IoError> {
        let s = self.req(line, rec, col)?;
        s.parse().map_err(|_| self.err(line, format!("{col}: cannot parse {s:?}")))
    }

    fn parse_opt<T: std::str::FromStr>(&self, line: u64, rec: &csv::StringRecord, col: &str) -> Result<Option<T>, IoError> {
        match self.get(rec, col) {
            None => Ok(None),
            Some(s) => s.parse().map(Some).map_err(|_| self.err(line, format!("{col}: cannot parse {s:?}"))),
        }
    }

    fn finite(&self, line: u64, rec: &csv::StringRecord, col: &str) -> Result<f64, IoError> {
        let v: f64 = self.parse(line, rec, col)?;
        if !v.is_finite() {
            return Err(self.err(line, format!("{col} is not finite")));
        }
        Ok(v)
    }
}

fn csv_err(file: &Path, e: csv::Error) -> IoError {
    let line = e.position().map_or(0, |p| p.line());
    IoError::Parse { file: file.to_path_buf(), line, msg: e.to_string() }
}

fn dangling(file: &Path, kind: &'static str, ids: BTreeSet<String>) -> Result<(), IoError> {
    if ids.is_empty() {
        return Ok(());
    }
    Err(IoError::Dangling { file: file.to_path_buf(), kind, ids: ids.into_iter().collect() })
}

fn read_regions(path: &Path) -> Result<Vec<Region>, IoError> {
    let text = std::fs::read_to_string(path).map_err(file_err(path))?;
    let file = path.to_path_buf();
    let doc: Value = serde_json::from_str(&text).map_err(|e| IoError::Parse {
        file: file.clone(),
        line: e.line() as u64,
        msg: e.to_string(),
    })?;
    let at = |msg: String| IoError::Parse { file: file.clone(), line: 0, msg };
    let expected = "mobikg-regions v1";
    if let Some(f) = doc.get("format") {
        if f.as_str() != Some(expected) {
            return Err(IoError::Version { file: file.clone(), expected: expected.into(), found: f.to_string() });
        }
    }
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(at("not a FeatureCollection".into()));
    }
    let features = doc.get("features").and_then(Value::as_array).ok_or_else(|| at("missing features".into()))?;
    let mut out = Vec::with_capacity(features.len());
    let mut seen = BTreeSet::new();
    for (k, f) in features.iter().enumerate() {
        let bad = |m: &str| at(format!("feature {k}: {m}"));
        let props = f.get("properties").filter(|p| p.is_object());
        let id = f
            .get("id")
            .or_else(|| props.and_then(|p| p.get("id")))
            .and_then(Value::as_str)
            .ok_or_else(|| bad("missing string id"))?;
        if !seen.insert(id.to_string()) {
            return Err(bad(&format!("duplicate region id {id:?}")));
        }
        let geom = f.get("geometry").ok_or_else(|| bad("missing geometry"))?;
        if geom.get("type").and_then(Value::as_str) != Some("Polygon") {
            return Err(bad("geometry must be a Polygon"));
        }
        let ring = geom
            .get("coordinates")
            .and_then(Value::as_array)
            .and_then(|r| r.first())
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing outer ring"))?;
        let mut pts = Vec::with_capacity(ring.len());
        for p in ring {
            let xy = p.as_array().filter(|a| a.len() >= 2).ok_or_else(|| bad("position needs [lon, lat]"))?;
            let lon = xy[0].as_f64().ok_or_else(|| bad("non-numeric lon"))?;
            let lat = xy[1].as_f64().ok_or_else(|| bad("non-numeric lat"))?;
            pts.push((lat, lon));
        }
        if pts.len() < 3 {
            return Err(bad("ring has fewer than 3 positions"));
        }
        let fold = |f: fn(f64, f64) -> f64, init: f64, sel: fn(&(f64, f64)) -> f64| pts.iter().map(sel).fold(init, f);
        let bbox = BBox::new(
            fold(f64::min, f64::INFINITY, |p| p.0),
            fold(f64::min, f64::INFINITY, |p| p.1),
            fold(f64::max, f64::NEG_INFINITY, |p| p.0),
            fold(f64::max, f64::NEG_INFINITY, |p| p.1),
        )
        .map_err(|e| bad(&e.to_string()))?;
        let mut r = Region::new(id, bbox);
        let num = |key: &str| -> Result<Option<f64>, IoError> {
            match props.and_then(|p| p.get(key)) {
                None | Some(Value::Null) => Ok(None),
                Some(v) => v.as_f64().map(Some).ok_or_else(|| bad(&format!("{key} is not a number"))),
            }
        };
        r.population_density = num("population_density")?;
        r.literacy_rate = num("literacy_rate")?;
        r.medical_facilities = match num("medical_facilities")? {
            None => None,
            Some(v) if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => Some(v as u32),
            Some(_) => return Err(bad("medical_facilities must be a non-negative integer")),
        };
        r.aggregate_flow = num("aggregate_flow")?;
        r.validate().map_err(|e| bad(&e.to_string()))?;
        out.push(r);
    }
    Ok(out)
}

fn read_places(path: &Path, regions: &BTreeSet<&str>) -> Result<Vec<Place>, IoError> {
    let t = Table::read(path, "places", &["place_id", "poi_type", "lat", "lon"])?;
    let mut out = Vec::with_capacity(t.rows.len());
    let mut seen = BTreeSet::new();
    let mut missing = BTreeSet::new();
    for (line, rec) in &t.rows {
        let line = *line;
        let id = t.req(line, rec, "place_id")?;
        if !seen.insert(id.to_string()) {
            return Err(t.err(line, format!("duplicate place id {id:?}")));
        }
        let poi: PoiType = t.parse(line, rec, "poi_type")?;
        let location = LatLon::new(t.finite(line, rec, "lat")?, t.finite(line, rec, "lon")?);
        let mut p = Place::new(id, poi, location);
        p.area_m2 = t.parse_opt(line, rec, "area_m2")?.unwrap_or(0.0);
        p.opening_hours = match (t.parse_opt::<u32>(line, rec, "open_s")?, t.parse_opt::<u32>(line, rec, "close_s")?) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => return Err(t.err(line, "open_s and close_s must be given together")),
        };
        p.region_id = t.get(rec, "region_id").map(str::to_string);
        if let Some(r) = &p.region_id {
            if !regions.contains(r.as_str()) {
                missing.insert(r.clone());
            }
        }
        out.push(p);
    }
    dangling(path, "region", missing)?;
    Ok(out)
}

fn read_users(path: &Path, regions: &BTreeSet<&str>) -> Result<Vec<User>, IoError> {
    let t = Table::read(path, "users", &["user_id"])?;
    let mut out = Vec::with_capacity(t.rows.len());
    let mut seen = BTreeSet::new();
    let mut missing = BTreeSet::new();
    for (line, rec) in &t.rows {
        let line = *line;
        let id = t.req(line, rec, "user_id")?;
        if !seen.insert(id.to_string()) {
            return Err(t.err(line, format!("duplicate user id {id:?}")));
        }
        let mut u = User::new(id, Vec::new());
        u.age = t.parse_opt(line, rec, "age")?;
        u.gender = t.get(rec, "gender").map(str::to_string);
        u.residence_region = t.get(rec, "residence_region").map(str::to_string);
        u.health_profile = t.get(rec, "health_profile").map(str::to_string);
        u.validate().map_err(|e| t.err(line, e.to_string()))?;
        if let Some(r) = &u.residence_region {
            if !regions.contains(r.as_str()) {
                missing.insert(r.clone());
            }
        }
        out.push(u);
    }
    dangling(path, "region", missing)?;
    Ok(out)
}

fn read_trajectories(path: &Path, schema: &Schema) -> Result<BTreeMap<String, Vec<TrajectoryPoint>>, IoError> {
    let t = Table::read(path, "trajectories", &[&schema.user_col, &schema.time_col, &schema.lat_col, &schema.lon_col])?;
    let mut by_user: BTreeMap<String, Vec<(u64, TrajectoryPoint)>> = BTreeMap::new();
    for (line, rec) in &t.rows {
        let line = *line;
        let user = t.req(line, rec, &schema.user_col)?;
        let pt = TrajectoryPoint {
            t: t.parse(line, rec, &schema.time_col)?,
            location: LatLon::new(t.finite(line, rec, &schema.lat_col)?, t.finite(line, rec, &schema.lon_col)?),
        };
        by_user.entry(user.to_string()).or_default().push((line, pt));
    }
    let mut out = BTreeMap::new();
    for (user, mut pts) in by_user {
        pts.sort_by_key(|(line, p)| (p.t, *line));
        if let Some(w) = pts.windows(2).find(|w| w[0].1.t == w[1].1.t) {
            return Err(t.err(w[1].0, format!("duplicate timestamp {} for user {user}", w[1].1.t)));
        }
        out.insert(user, pts.into_iter().map(|(_, p)| p).collect());
    }
    Ok(out)
}

fn read_cases(path: &Path, schema: &Schema, regions: &BTreeSet<&str>) -> Result<Vec<CaseEvent>, IoError> {
    let t = Table::read(path, "cases", &[&schema.region_col, &schema.time_col, &schema.count_col])?;
    let mut out = Vec::with_capacity(t.rows.len());
    let mut missing = BTreeSet::new();
    for (line, rec) in &t.rows {
        let line = *line;
        let region_id = t.req(line, rec, &schema.region_col)?.to_string();
        let location = match (t.parse_opt::<f64>(line, rec, &schema.lat_col)?, t.parse_opt::<f64>(line, rec, &schema.lon_col)?) {
            (Some(a), Some(b)) if a.is_finite() && b.is_finite() => Some(LatLon::new(a, b)),
            (None, None) => None,
            _ => return Err(t.err(line, "case location needs finite lat and lon together")),
        };
        if !regions.contains(region_id.as_str()) {
            missing.insert(region_id.clone());
        }
        out.push(CaseEvent {
            region_id,
            timestamp: t.parse(line, rec, &schema.time_col)?,
            count: t.parse(line, rec, &schema.count_col)?,
            location,
        });
    }
    dangling(path, "region", missing)?;
    Ok(out)
}

fn read_routes(path: &Path, regions: &BTreeSet<&str>) -> Result<Vec<Route>, IoError> {
    let t = Table::read(path, "routes", &["src_id", "dst_id", "route_count"])?;
    let mut out = Vec::with_capacity(t.rows.len());
    let mut missing = BTreeSet::new();
    for (line, rec) in &t.rows {
        let line = *line;
        let src = t.req(line, rec, "src_id")?.to_string();
        let dst = t.req(line, rec, "dst_id")?.to_string();
        for id in [&src, &dst] {
            if !regions.contains(id.as_str()) {
                missing.insert(id.clone());
            }
        }
        out.push(Route { src, dst, count: t.parse(line, rec, "route_count")? });
    }
    dangling(path, "region", missing)?;
    Ok(out)
}

/// Reads and cross-checks a dataset. Users come from the user file when one
/// is given (every trajectory must then name a known user), otherwise one
/// user per distinct trajectory id.
pub fn load_dataset(paths: &DatasetPaths, schema: &Schema) -> Result<Dataset, IoError> {
    let regions = read_regions(&paths.regions)?;
    let ids: BTreeSet<&str> = regions.iter().map(|r| r.id.as_str()).collect();
    let places = paths.places.as_deref().map(|p| read_places(p, &ids)).transpose()?.unwrap_or_default();
    let mut users = paths.users.as_deref().map(|p| read_users(p, &ids)).transpose()?.unwrap_or_default();
    if let Some(tp) = &paths.trajectories {
        let mut traj = read_trajectories(tp, schema)?;
        if paths.users.is_some() {
            let known: BTreeSet<&str> = users.iter().map(|u| u.id.as_str()).collect();
            let missing: BTreeSet<String> = traj.keys().filter(|u| !known.contains(u.as_str())).cloned().collect();
            dangling(tp, "user", missing)?;
            for u in &mut users {
                u.trajectory = traj.remove(&u.id).unwrap_or_default();
            }
        } else {
            for (id, pts) in traj {
                let u = User::new(id, pts);
                u.validate().map_err(|e| IoError::Parse { file: tp.clone(), line: 0, msg: e.to_string() })?;
                users.push(u);
            }
        }
    }
    let cases = paths.cases.as_deref().map(|p| read_cases(p, schema, &ids)).transpose()?.unwrap_or_default();
    let routes = paths.routes.as_deref().map(|p| read_routes(p, &ids)).transpose()?.unwrap_or_default();
    log::info!(
        "loaded {} regions, {} places, {} users, {} case events, {} routes",
        regions.len(),
        places.len(),
        users.len(),
        cases.len(),
        routes.len()
    );
    Ok(Dataset { regions, places, users, cases, routes })
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn csv_writer<W: Write>(mut w: W, kind: &str, header: &[&str]) -> Result<csv::Writer<W>, IoError> {
    writeln!(w, "{}", version_line(kind))?;
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header)?;
    Ok(wr)
}

pub fn write_regions_geojson<W: Write>(regions: &[Region], mut w: W) -> Result<(), IoError> {
    let features: Vec<Value> = regions
        .iter()
        .map(|r| {
            let b = &r.bbox;
            let ring = json!([
                [b.min_lon, b.min_lat],
                [b.max_lon, b.min_lat],
                [b.max_lon, b.max_lat],
                [b.min_lon, b.max_lat],
                [b.min_lon, b.min_lat]
            ]);
            json!({
                "type": "Feature",
                "id": r.id,
                "geometry": {"type": "Polygon", "coordinates": [ring]},
                "properties": {
                    "population_density": r.population_density,
                    "literacy_rate": r.literacy_rate,
                    "medical_facilities": r.medical_facilities,
                    "aggregate_flow": r.aggregate_flow,
                },
            })
        })
        .collect();
    let doc = json!({"type": "FeatureCollection", "format": "mobikg-regions v1", "features": features});
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)?;
    Ok(())
}

pub fn write_places_csv<W: Write>(places: &[Place], w: W) -> Result<(), IoError> {
    let mut wr = csv_writer(w, "places", &["place_id", "poi_type", "lat", "lon", "area_m2", "open_s", "close_s", "region_id"])?;
    for p in places {
        let (open, close) = p.opening_hours.map_or((None, None), |(a, b)| (Some(a), Some(b)));
        wr.write_record([
            p.id.clone(),
            p.poi_type.as_str().to_string(),
            p.location.lat.to_string(),
            p.location.lon.to_string(),
            p.area_m2.to_string(),
            opt(&open),
            opt(&close),
            opt(&p.region_id),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_users_csv<W: Write>(users: &[User], w: W) -> Result<(), IoError> {
    let mut wr = csv_writer(w, "users", &["user_id", "age", "gender", "residence_region", "health_profile"])?;
    for u in users {
        wr.write_record([u.id.clone(), opt(&u.age), opt(&u.gender), opt(&u.residence_region), opt(&u.health_profile)])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_trajectories_csv<W: Write>(users: &[User], w: W) -> Result<(), IoError> {
    let mut wr = csv_writer(w, "trajectories", &["user_id", "timestamp", "lat", "lon"])?;
    for u in users {
        for p in &u.trajectory {
            wr.write_record([u.id.clone(), p.t.to_string(), p.location.lat.to_string(), p.location.lon.to_string()])?;
        }
    }
    wr.flush()?;
    Ok(())
}

pub fn write_cases_csv<W: Write>(cases: &[CaseEvent], w: W) -> Result<(), IoError> {
    let mut wr = csv_writer(w, "cases", &["region_id", "timestamp", "count", "lat", "lon"])?;
    for c in cases {
        wr.write_record([
            c.region_id.clone(),
            c.timestamp.to_string(),
            c.count.to_string(),
            opt(&c.location.map(|p| p.lat)),
            opt(&c.location.map(|p| p.lon)),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_routes_csv<W: Write>(routes: &[Route], w: W) -> Result<(), IoError> {
    let mut wr = csv_writer(w, "routes", &["src_id", "dst_id", "route_count"])?;
    for r in routes {
        wr.write_record([r.src.clone(), r.dst.clone(), r.count.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}
