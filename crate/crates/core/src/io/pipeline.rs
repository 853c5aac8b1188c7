//! Dataset → PKG → patterns, with the thresholds in [`DeriveSettings`].

use serde::{Deserialize, Serialize};

use super::{Dataset, DeriveSettings, IoError};
use crate::mining::{
    events_from_pkg, mine_cascading_events, mine_cooccurrence_events, region_context_events, Event, Locator,
    PatternInstance, PatternKind,
};
use crate::pkg::{
    derive_flows, derive_groups, derive_hotspot_facts, derive_visits_many, Entity, Interval, Pkg, Relation,
    TemporalFact, Timestamp,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeriveCounts {
    pub visits: usize,
    pub groups: usize,
    pub flows: usize,
    pub hotspots: usize,
    pub connectivity: usize,
}

/// Earliest trajectory sample or case report.
pub fn dataset_start(ds: &Dataset) -> Option<Timestamp> {
    let traj = ds.users.iter().filter_map(|u| u.trajectory.first().map(|p| p.t));
    let cases = ds.cases.iter().map(|c| c.timestamp);
    traj.chain(cases).min()
}

/// Visit, group, flow and hotspot facts, plus one open-ended connectivity
/// fact per route (region to region, feature = route count).
pub fn derive_pkg(ds: &Dataset, s: &DeriveSettings) -> Result<(Pkg, DeriveCounts), IoError> {
    let visits = derive_visits_many(&ds.users, &ds.places, s.stay_radius_m, s.stay_min_s)?;
    let groups = derive_groups(&visits, s.group_tol_s)?;
    let flows = derive_flows(&visits, s.flow)?;
    let hotspots = derive_hotspot_facts(&ds.cases, &ds.regions)?;
    let start = dataset_start(ds).unwrap_or(0);
    let connectivity = ds
        .routes
        .iter()
        .filter(|r| r.count > 0)
        .map(|r| {
            TemporalFact::new(
                Entity::id(&r.src),
                Relation::Connectivity,
                Entity::id(&r.dst),
                Interval::open(start),
                r.count as f64,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let counts = DeriveCounts {
        visits: visits.len(),
        groups: groups.len(),
        flows: flows.len(),
        hotspots: hotspots.len(),
        connectivity: connectivity.len(),
    };
    let mut pkg = Pkg::new();
    for batch in [visits, groups, flows, hotspots, connectivity] {
        pkg.commit(batch)?;
    }
    Ok((pkg, counts))
}

pub fn locator(ds: &Dataset) -> Locator {
    Locator::new().with_regions(&ds.regions).with_places(&ds.places)
}

/// Region context events stamped at the dataset start.
pub fn context_events(ds: &Dataset, s: &DeriveSettings) -> Vec<Event> {
    region_context_events(&ds.regions, s.context, dataset_start(ds).unwrap_or(0))
}

/// Mines one pattern kind. Co-occurrence mining also sees the region
/// context events.
pub fn mine_patterns(
    pkg: &Pkg,
    ds: &Dataset,
    s: &DeriveSettings,
    kind: PatternKind,
) -> Result<Vec<PatternInstance>, IoError> {
    let mut events = events_from_pkg(pkg, &locator(ds), s.miner.granularity);
    let out = match kind {
        PatternKind::Cascading => mine_cascading_events(&events, &s.neighbor, &s.miner)?,
        PatternKind::CoOccurrence => {
            events.extend(context_events(ds, s));
            mine_cooccurrence_events(&events, &s.neighbor, &s.miner)?
        }
    };
    Ok(out)
}
