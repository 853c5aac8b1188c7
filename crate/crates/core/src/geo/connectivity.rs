use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::pkg::{Entity, Interval, Relation, TemporalFact};

/// Route availability and traffic of one place over a window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityIndex {
    pub place_id: String,
    pub window: Interval,
    pub routes: f64,
    pub inflow: f64,
    pub outflow: f64,
    pub ci: f64,
}

#[derive(Default)]
struct Tally {
    routes: f64,
    inflow: f64,
    outflow: f64,
}

impl Tally {
    fn product(&self) -> f64 {
        self.routes * (self.inflow + self.outflow)
    }
}

/// Connectivity index of every place mentioned by connectivity or flow facts
/// overlapping `window`, sorted by place id.
///
/// `ci = routes * (inflow + outflow)`, normalised by the largest such product
/// in the window. Routes are the summed features of outgoing connectivity
/// facts; inflow/outflow are the summed features of flow facts ending/starting
/// at the place.
pub fn connectivity_indices(facts: &[TemporalFact], window: &Interval) -> Vec<ConnectivityIndex> {
    let mut tallies: BTreeMap<&str, Tally> = BTreeMap::new();
    for f in facts.iter().filter(|f| f.interval.overlaps(window)) {
        let (Entity::Id(s), Entity::Id(o)) = (&f.subject, &f.object) else {
            continue;
        };
        match f.relation {
            Relation::Connectivity => {
                tallies.entry(s).or_default().routes += f.feature;
                tallies.entry(o).or_default();
            }
            Relation::Flow => {
                tallies.entry(s).or_default().outflow += f.feature;
                tallies.entry(o).or_default().inflow += f.feature;
            }
            _ => {}
        }
    }
    let max = tallies.values().map(Tally::product).fold(0.0, f64::max);
    tallies
        .into_iter()
        .map(|(id, t)| ConnectivityIndex {
            place_id: id.to_string(),
            window: *window,
            ci: if max > 0.0 { t.product() / max } else { 0.0 },
            routes: t.routes,
            inflow: t.inflow,
            outflow: t.outflow,
        })
        .collect()
}

/// Connectivity index of a single place; places without facts get zeros.
pub fn connectivity_index(place: &str, facts: &[TemporalFact], window: &Interval) -> ConnectivityIndex {
    connectivity_indices(facts, window)
        .into_iter()
        .find(|c| c.place_id == place)
        .unwrap_or_else(|| ConnectivityIndex {
            place_id: place.to_string(),
            window: *window,
            routes: 0.0,
            inflow: 0.0,
            outflow: 0.0,
            ci: 0.0,
        })
}
