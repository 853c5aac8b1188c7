//! Temporal knowledge graph of interval-stamped mobility facts.
//!
//! A fact is `<subject, relation, object, [t1, t2], feature>`. Facts are
//! keyed by everything except the feature, so re-asserting a fact updates
//! its feature in place. Fact ids are content hashes of that key, which makes
//! derivations independent of insertion order.

mod derive;
mod persist;
mod store;
mod trace;

pub use derive::{
    derive_flows, derive_groups, derive_hotspot_facts, derive_visits, derive_visits_many, CaseEvent, FlowConfig,
    DEFAULT_SLOT_S,
};
pub use persist::{PKG_HEADER, PKG_VERSION};
pub use store::{Pkg, PkgQuery};
pub use trace::contact_trace;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geo::{BBox, LatLon};

pub type Timestamp = i64;

#[derive(Debug, Error)]
pub enum PkgError {
    #[error("invalid fact: {0}")]
    InvalidFact(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("query binds no field")]
    EmptyQuery,
    #[error("unknown user {0}")]
    UnknownUser(String),
    #[error("unknown region {0}")]
    UnknownRegion(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported pkg format header {0:?}")]
    Version(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Closed time interval in epoch seconds; `end == None` means open-ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub start: Timestamp,
    pub end: Option<Timestamp>,
}

impl Interval {
    pub fn closed(start: Timestamp, end: Timestamp) -> Self {
        Self { start, end: Some(end) }
    }

    pub fn open(start: Timestamp) -> Self {
        Self { start, end: None }
    }

    pub fn is_valid(&self) -> bool {
        self.end.map_or(true, |e| self.start <= e)
    }

    pub fn is_open(&self) -> bool {
        self.end.is_none()
    }

    fn end_or_max(&self) -> Timestamp {
        self.end.unwrap_or(Timestamp::MAX)
    }

    /// Closed-interval overlap; shared endpoints count.
    pub fn overlaps(&self, other: &Interval) -> bool {
        self.start <= other.end_or_max() && other.start <= self.end_or_max()
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        t >= self.start && t <= self.end_or_max()
    }

    /// Widens both ends by `tol` seconds; open ends stay open.
    pub fn expanded(&self, tol: Timestamp) -> Interval {
        Interval {
            start: self.start.saturating_sub(tol),
            end: self.end.map(|e| e.saturating_add(tol)),
        }
    }

    /// Length in seconds, `None` for open intervals.
    pub fn duration(&self) -> Option<Timestamp> {
        self.end.map(|e| e - self.start)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "visit")]
    Visit,
    #[serde(rename = "group")]
    Group,
    #[serde(rename = "flow")]
    Flow,
    #[serde(rename = "hotspot")]
    Hotspot,
    #[serde(rename = "connectivity")]
    Connectivity,
    #[serde(rename = "connectedBy")]
    ConnectedBy,
    #[serde(rename = "boundingBox")]
    BoundingBox,
    #[serde(rename = "infected")]
    Infected,
}

impl Relation {
    pub const ALL: [Relation; 8] = [
        Relation::Visit,
        Relation::Group,
        Relation::Flow,
        Relation::Hotspot,
        Relation::Connectivity,
        Relation::ConnectedBy,
        Relation::BoundingBox,
        Relation::Infected,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Relation::Visit => "visit",
            Relation::Group => "group",
            Relation::Flow => "flow",
            Relation::Hotspot => "hotspot",
            Relation::Connectivity => "connectivity",
            Relation::ConnectedBy => "connectedBy",
            Relation::BoundingBox => "boundingBox",
            Relation::Infected => "infected",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Relation {
    type Err = PkgError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Relation::ALL
            .iter()
            .copied()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| PkgError::InvalidFact(format!("unknown relation {s:?}")))
    }
}

/// Subject or object of a fact.
///
/// Text form: plain ids as-is, sets as `{a|b|c}`, rectangles as
/// `bbox[min_lat;min_lon;max_lat;max_lon]`. Ids may not contain any of the
/// delimiter characters so the text form is unambiguous.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Entity {
    Id(String),
    Set(Vec<String>),
    Area(BBox),
}

// Area coordinates are validated finite on construction.
impl Eq for Entity {}

impl std::hash::Hash for Entity {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.key().hash(state)
    }
}

const RESERVED: &[char] = &[',', '{', '}', '|', '[', ']', ';', '"'];

fn valid_id(s: &str) -> bool {
    !s.is_empty() && s != "-" && !s.starts_with("bbox") && !s.chars().any(|c| c.is_whitespace() || RESERVED.contains(&c))
}

impl Entity {
    pub fn id(s: impl Into<String>) -> Self {
        Entity::Id(s.into())
    }

    /// Set entity with members sorted and deduplicated.
    pub fn set<I, S>(members: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v: Vec<String> = members.into_iter().map(Into::into).collect();
        v.sort();
        v.dedup();
        Entity::Set(v)
    }

    pub fn as_id(&self) -> Option<&str> {
        match self {
            Entity::Id(s) => Some(s),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), PkgError> {
        let bad = |m: String| Err(PkgError::InvalidFact(m));
        match self {
            Entity::Id(s) if !valid_id(s) => bad(format!("invalid entity id {s:?}")),
            Entity::Set(v) => {
                if v.is_empty() {
                    return bad("empty entity set".into());
                }
                if let Some(s) = v.iter().find(|s| !valid_id(s)) {
                    return bad(format!("invalid set member {s:?}"));
                }
                if v.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("entity set must be sorted and unique".into());
                }
                Ok(())
            }
            Entity::Area(b) => b.validate().map_err(|e| PkgError::InvalidFact(e.to_string())),
            _ => Ok(()),
        }
    }

    /// Canonical text form, used for persistence and indexing.
    pub fn key(&self) -> String {
        match self {
            Entity::Id(s) => s.clone(),
            Entity::Set(v) => format!("{{{}}}", v.join("|")),
            Entity::Area(b) => format!("bbox[{};{};{};{}]", b.min_lat, b.min_lon, b.max_lat, b.max_lon),
        }
    }

    pub fn parse(s: &str) -> Result<Entity, PkgError> {
        let bad = || PkgError::InvalidFact(format!("malformed entity {s:?}"));
        let e = if let Some(inner) = s.strip_prefix('{').and_then(|r| r.strip_suffix('}')) {
            Entity::Set(inner.split('|').map(str::to_string).collect())
        } else if let Some(inner) = s.strip_prefix("bbox[").and_then(|r| r.strip_suffix(']')) {
            let v: Vec<f64> = inner
                .split(';')
                .map(|x| x.parse::<f64>().map_err(|_| bad()))
                .collect::<Result<_, _>>()?;
            if v.len() != 4 {
                return Err(bad());
            }
            Entity::Area(BBox { min_lat: v[0], min_lon: v[1], max_lat: v[2], max_lon: v[3] })
        } else {
            Entity::Id(s.to_string())
        };
        e.validate()?;
        Ok(e)
    }

    /// Representative point, when the entity carries its own geometry.
    pub fn area_centroid(&self) -> Option<LatLon> {
        match self {
            Entity::Area(b) => Some(b.centroid()),
            _ => None,
        }
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// Content hash of a fact's upsert key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FactId(pub u64);

impl FactId {
    pub fn of(subject: &Entity, relation: Relation, object: &Entity, interval: &Interval) -> FactId {
        let end = interval.end.map_or_else(|| "-".to_string(), |e| e.to_string());
        let key = format!("{}\x1f{}\x1f{}\x1f{}\x1f{}", subject.key(), relation, object.key(), interval.start, end);
        let digest = Sha256::digest(key.as_bytes());
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        FactId(u64::from_be_bytes(bytes))
    }
}

impl fmt::Display for FactId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// One edge of the knowledge graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalFact {
    pub id: FactId,
    pub subject: Entity,
    pub relation: Relation,
    pub object: Entity,
    pub interval: Interval,
    pub feature: f64,
}

impl TemporalFact {
    /// Builds a validated fact with its content-derived id.
    pub fn new(
        subject: Entity,
        relation: Relation,
        object: Entity,
        interval: Interval,
        feature: f64,
    ) -> Result<Self, PkgError> {
        let fact = Self {
            id: FactId::of(&subject, relation, &object, &interval),
            subject,
            relation,
            object,
            interval,
            feature,
        };
        fact.validate()?;
        Ok(fact)
    }

    pub fn validate(&self) -> Result<(), PkgError> {
        self.subject.validate()?;
        self.object.validate()?;
        if !self.interval.is_valid() {
            return Err(PkgError::InvalidFact(format!(
                "interval start {} after end {:?}",
                self.interval.start, self.interval.end
            )));
        }
        if !self.feature.is_finite() {
            return Err(PkgError::InvalidFact("feature must be finite".into()));
        }
        match self.relation {
            Relation::Group if !(0.0..1.0).contains(&self.feature) => {
                Err(PkgError::InvalidFact(format!("group feature {} outside [0,1)", self.feature)))
            }
            Relation::Hotspot if self.feature < 0.0 => {
                Err(PkgError::InvalidFact(format!("hotspot count {} is negative", self.feature)))
            }
            _ => Ok(()),
        }
    }

    pub fn key_matches(&self, other: &TemporalFact) -> bool {
        self.subject == other.subject
            && self.relation == other.relation
            && self.object == other.object
            && self.interval == other.interval
    }
}

/// A user with profile attributes and a time-ordered GPS trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: String,
    pub age: Option<u32>,
    pub gender: Option<String>,
    pub residence_region: Option<String>,
    pub health_profile: Option<String>,
    pub trajectory: Vec<TrajectoryPoint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: Timestamp,
    pub location: LatLon,
}

impl User {
    pub fn new(id: impl Into<String>, trajectory: Vec<TrajectoryPoint>) -> Self {
        Self {
            id: id.into(),
            age: None,
            gender: None,
            residence_region: None,
            health_profile: None,
            trajectory,
        }
    }

    pub fn validate(&self) -> Result<(), PkgError> {
        if !valid_id(&self.id) {
            return Err(PkgError::InvalidInput(format!("invalid user id {:?}", self.id)));
        }
        if self.trajectory.windows(2).any(|w| w[0].t >= w[1].t) {
            return Err(PkgError::InvalidInput(format!("trajectory of {} is not strictly increasing", self.id)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_semantics() {
        let q = Interval::closed(5, 10);
        assert!(q.overlaps(&Interval::closed(8, 12)));
        assert!(!q.overlaps(&Interval::closed(11, 12)));
        assert!(q.overlaps(&Interval::closed(10, 12)), "shared endpoint");
        let open = Interval::open(0);
        assert!(open.overlaps(&Interval::closed(100, 200)));
        assert!(!Interval::open(300).overlaps(&Interval::closed(100, 200)));
    }

    #[test]
    fn entity_text_round_trip() {
        for e in [
            Entity::id("u1"),
            Entity::set(["b", "a", "c"]),
            Entity::Area(BBox::new(22.5, 88.25, 22.625, 88.5).unwrap()),
        ] {
            assert_eq!(Entity::parse(&e.key()).unwrap(), e);
        }
        assert_eq!(Entity::set(["b", "a"]).key(), "{a|b}");
    }

    #[test]
    fn reserved_characters_rejected() {
        assert!(Entity::id("a,b").validate().is_err());
        assert!(Entity::id("-").validate().is_err());
        assert!(Entity::id("").validate().is_err());
        assert!(Entity::id("has space").validate().is_err());
    }

    #[test]
    fn fact_invariants() {
        let ok = TemporalFact::new(Entity::id("u"), Relation::Visit, Entity::id("p"), Interval::closed(1, 2), 0.5);
        assert!(ok.is_ok());
        let backwards = TemporalFact::new(Entity::id("u"), Relation::Visit, Entity::id("p"), Interval::closed(3, 2), 0.5);
        assert!(backwards.is_err());
        let group = TemporalFact::new(Entity::id("u"), Relation::Group, Entity::set(["v"]), Interval::closed(1, 2), 1.0);
        assert!(group.is_err());
        let hot = TemporalFact::new(Entity::id("u"), Relation::Hotspot, Entity::id("r"), Interval::open(1), -1.0);
        assert!(hot.is_err());
        let nan = TemporalFact::new(Entity::id("u"), Relation::Visit, Entity::id("p"), Interval::open(1), f64::NAN);
        assert!(nan.is_err());
    }

    #[test]
    fn fact_id_depends_on_key_only() {
        let a = TemporalFact::new(Entity::id("u"), Relation::Visit, Entity::id("p"), Interval::closed(1, 2), 0.1).unwrap();
        let b = TemporalFact::new(Entity::id("u"), Relation::Visit, Entity::id("p"), Interval::closed(1, 2), 0.9).unwrap();
        let c = TemporalFact::new(Entity::id("u"), Relation::Visit, Entity::id("p"), Interval::open(1), 0.1).unwrap();
        assert_eq!(a.id, b.id);
        assert_ne!(a.id, c.id);
    }

    #[test]
    fn trajectory_must_increase() {
        let p = |t| TrajectoryPoint { t, location: LatLon::new(0.0, 0.0) };
        assert!(User::new("u", vec![p(1), p(2)]).validate().is_ok());
        assert!(User::new("u", vec![p(2), p(2)]).validate().is_err());
    }
}
