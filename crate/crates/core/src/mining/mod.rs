//! Cascading and co-occurrence pattern mining over PKG events.
//!
//! Every fact with a resolvable location becomes an [`Event`] tagged by its
//! relation (and optionally its place). Callers may add region-context events
//! such as "density above a threshold". Both miners grow patterns level by
//! level and keep a pattern only if its participation index reaches the
//! configured threshold; [`mine_bruteforce`] enumerates the same definitions
//! exhaustively on small inputs.

mod brute;
mod cascade;
mod cooccur;

pub use brute::{mine_bruteforce, mine_bruteforce_events, BRUTEFORCE_MAX_EVENTS, BRUTEFORCE_MAX_FACTS};
pub use cascade::{mine_cascading, mine_cascading_events};
pub use cooccur::{mine_cooccurrence, mine_cooccurrence_events};

use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{LatLon, Region};
use crate::pkg::{Entity, Pkg, TemporalFact, Timestamp};

#[derive(Debug, Error)]
pub enum MinerError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("pattern has no event types")]
    EmptyPattern,
    #[error("event type {0:?} has no instances")]
    AbsentType(String),
    #[error("brute force is capped at {cap} events, got {got}")]
    TooLarge { cap: usize, got: usize },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Spatial buffer and temporal span within which two events are neighbours.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborRelation {
    pub spatial_buffer_m: f64,
    pub temporal_span_s: Timestamp,
}

impl Default for NeighborRelation {
    fn default() -> Self {
        Self { spatial_buffer_m: 2000.0, temporal_span_s: 7 * 86_400 }
    }
}

impl NeighborRelation {
    pub fn validate(&self) -> Result<(), MinerError> {
        if !(self.spatial_buffer_m.is_finite() && self.spatial_buffer_m > 0.0) || self.temporal_span_s <= 0 {
            return Err(MinerError::Config("spatial buffer and temporal span must be positive".into()));
        }
        Ok(())
    }

    fn close(&self, a: &Event, b: &Event) -> bool {
        a.location.haversine_m(&b.location) <= self.spatial_buffer_m
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagGranularity {
    /// `relation@entity`, with the entity that located the event.
    #[default]
    RelationPlace,
    Relation,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinerConfig {
    pub pi1: f64,
    pub pi2: f64,
    pub max_size: usize,
    pub granularity: TagGranularity,
}

impl Default for MinerConfig {
    fn default() -> Self {
        Self { pi1: 0.3, pi2: 0.3, max_size: 3, granularity: TagGranularity::RelationPlace }
    }
}

impl MinerConfig {
    pub fn validate(&self) -> Result<(), MinerError> {
        let ok = |t: f64| t > 0.0 && t <= 1.0;
        if !ok(self.pi1) || !ok(self.pi2) {
            return Err(MinerError::Config(format!("thresholds must be in (0, 1], got {} and {}", self.pi1, self.pi2)));
        }
        if self.max_size < 2 {
            return Err(MinerError::Config(format!("max_size must be at least 2, got {}", self.max_size)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    Cascading,
    CoOccurrence,
}

/// A located, timestamped occurrence of an event type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Fact id in hex, or a caller-chosen id for context events.
    pub source: String,
    pub tag: String,
    pub t: Timestamp,
    pub location: LatLon,
}

/// A mined pattern: member tags (in order for cascading patterns), the
/// sources of every participating event, and its participation index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternInstance {
    pub kind: PatternKind,
    pub members: Vec<String>,
    pub support: Vec<String>,
    pub pi: f64,
}

/// Resolves entities to coordinates: plain ids by lookup, areas by their
/// centroid, sets by the mean of their members.
#[derive(Clone, Debug, Default)]
pub struct Locator {
    points: HashMap<String, LatLon>,
}

impl Locator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, p: LatLon) {
        self.points.insert(id.into(), p);
    }

    pub fn with_regions(mut self, regions: &[Region]) -> Self {
        for r in regions {
            self.insert(r.id.clone(), r.centroid());
        }
        self
    }

    pub fn with_places(mut self, places: &[crate::geo::Place]) -> Self {
        for p in places {
            self.insert(p.id.clone(), p.location);
        }
        self
    }

    pub fn locate(&self, e: &Entity) -> Option<LatLon> {
        match e {
            Entity::Id(s) => self.points.get(s).copied(),
            Entity::Area(b) => Some(b.centroid()),
            Entity::Set(v) => {
                let pts: Option<Vec<LatLon>> = v.iter().map(|s| self.points.get(s).copied()).collect();
                let pts = pts?;
                let n = pts.len() as f64;
                Some(LatLon::new(pts.iter().map(|p| p.lat).sum::<f64>() / n, pts.iter().map(|p| p.lon).sum::<f64>() / n))
            }
        }
    }
}

/// The event of one fact: located at its object if possible, else its
/// subject. Facts that cannot be located yield `None`.
pub fn event_of(fact: &TemporalFact, locator: &Locator, granularity: TagGranularity) -> Option<Event> {
    let (entity, location) = [&fact.object, &fact.subject].into_iter().find_map(|e| locator.locate(e).map(|p| (e, p)))?;
    let tag = match granularity {
        TagGranularity::RelationPlace => format!("{}@{}", fact.relation, entity.key()),
        TagGranularity::Relation => fact.relation.to_string(),
    };
    Some(Event { source: fact.id.to_string(), tag, t: fact.interval.start, location })
}

pub fn events_from_pkg(pkg: &Pkg, locator: &Locator, granularity: TagGranularity) -> Vec<Event> {
    pkg.facts().into_iter().filter_map(|f| event_of(f, locator, granularity)).collect()
}

/// Thresholds turning region attributes into context events.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextThresholds {
    pub density: f64,
    pub movement: f64,
}

pub const TAG_DENSITY: &str = "density_high";
pub const TAG_MOVEMENT: &str = "movement_high";

/// One event per region whose population density (aggregate flow) exceeds
/// the threshold, located at the region centroid and stamped `t`.
pub fn region_context_events(regions: &[Region], th: ContextThresholds, t: Timestamp) -> Vec<Event> {
    let mut out = Vec::new();
    for r in regions {
        if r.population_density.is_some_and(|d| d > th.density) {
            out.push(Event { source: format!("ctx:{}:density", r.id), tag: TAG_DENSITY.into(), t, location: r.centroid() });
        }
        if r.aggregate_flow.is_some_and(|f| f > th.movement) {
            out.push(Event { source: format!("ctx:{}:movement", r.id), tag: TAG_MOVEMENT.into(), t, location: r.centroid() });
        }
    }
    out
}

/// Events in canonical order `(t, source)`, with the distinct tags in
/// lexicographic order and each event's tag index.
pub(crate) struct Indexed<'a> {
    pub events: Vec<&'a Event>,
    pub tags: Vec<&'a str>,
    pub tag_of: Vec<usize>,
    pub by_tag: Vec<Vec<usize>>,
}

impl<'a> Indexed<'a> {
    pub fn new(events: &'a [Event]) -> Self {
        let mut ev: Vec<&Event> = events.iter().collect();
        ev.sort_by(|a, b| a.t.cmp(&b.t).then_with(|| a.source.cmp(&b.source)));
        let tags: Vec<&str> = ev.iter().map(|e| e.tag.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
        let tag_index: HashMap<&str, usize> = tags.iter().enumerate().map(|(i, t)| (*t, i)).collect();
        let tag_of: Vec<usize> = ev.iter().map(|e| tag_index[e.tag.as_str()]).collect();
        let mut by_tag = vec![Vec::new(); tags.len()];
        for (i, t) in tag_of.iter().enumerate() {
            by_tag[*t].push(i);
        }
        Self { events: ev, tags, tag_of, by_tag }
    }

    pub fn pattern(&self, kind: PatternKind, members: &[usize], participants: &[Vec<usize>], pi: f64) -> PatternInstance {
        let support: BTreeSet<&str> =
            participants.iter().flatten().map(|&e| self.events[e].source.as_str()).collect();
        PatternInstance {
            kind,
            members: members.iter().map(|&t| self.tags[t].to_string()).collect(),
            support: support.into_iter().map(str::to_string).collect(),
            pi,
        }
    }
}

/// Participation index of a pattern given its instances, each instance a
/// list of event indices into `events` with one event per member tag.
///
/// `PI = min over member tags of (distinct events of that tag appearing in
/// some instance) / (all events of that tag)`.
pub fn participation_index(tags: &[String], instances: &[Vec<usize>], events: &[Event]) -> Result<f64, MinerError> {
    if tags.is_empty() {
        return Err(MinerError::EmptyPattern);
    }
    let mut pi = f64::INFINITY;
    for tag in tags {
        let total = events.iter().filter(|e| &e.tag == tag).count();
        if total == 0 {
            return Err(MinerError::AbsentType(tag.clone()));
        }
        let used: BTreeSet<usize> =
            instances.iter().flatten().copied().filter(|&i| events.get(i).is_some_and(|e| &e.tag == tag)).collect();
        pi = pi.min(used.len() as f64 / total as f64);
    }
    Ok(pi)
}

pub(crate) fn ratio_min(participants: &[Vec<usize>], totals: impl Iterator<Item = usize>) -> f64 {
    participants.iter().zip(totals).map(|(p, t)| p.len() as f64 / t as f64).fold(f64::INFINITY, f64::min)
}

/// Sorts by (size, PI descending, member tags).
pub fn sort_patterns(p: &mut [PatternInstance]) {
    p.sort_by(|a, b| {
        a.members
            .len()
            .cmp(&b.members.len())
            .then_with(|| b.pi.total_cmp(&a.pi))
            .then_with(|| a.members.cmp(&b.members))
    });
}

/// One JSON object per line.
pub fn write_patterns_jsonl<W: Write>(patterns: &[PatternInstance], mut w: W) -> Result<(), MinerError> {
    for p in patterns {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads [`write_patterns_jsonl`] output; blank lines are skipped.
pub fn read_patterns_jsonl<R: std::io::BufRead>(r: R) -> Result<Vec<PatternInstance>, MinerError> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
