use std::collections::{BTreeMap, HashMap};

use super::{Entity, Pkg, PkgError, PkgQuery, Relation, TemporalFact, Timestamp};
use crate::geo::{LatLon, Place};

fn visits_of<'a>(pkg: &'a Pkg, user: &str) -> Result<Vec<&'a TemporalFact>, PkgError> {
    pkg.query_facts(&PkgQuery::new().subject(Entity::id(user)).relation(Relation::Visit))
}

/// Users who visited a place where `infected` was, while they were there.
///
/// Two visits are co-located when they name the same place, or places whose
/// locations are at most `spatial_tol_m` apart. They are co-present when the
/// other visit overlaps the infected visit widened by `time_tol_s` on both
/// sides. The result is sorted by earliest overlap time, then user id.
pub fn contact_trace(
    pkg: &Pkg,
    infected: &str,
    places: &[Place],
    spatial_tol_m: f64,
    time_tol_s: Timestamp,
) -> Result<Vec<String>, PkgError> {
    if !(spatial_tol_m >= 0.0) || time_tol_s < 0 {
        return Err(PkgError::InvalidInput("tolerances must be non-negative".into()));
    }
    let mine = visits_of(pkg, infected)?;
    if mine.is_empty() {
        return Err(PkgError::UnknownUser(infected.to_string()));
    }
    let location: HashMap<&str, LatLon> = places.iter().map(|p| (p.id.as_str(), p.location)).collect();
    let near = |a: &str, b: &str| {
        a == b
            || match (location.get(a), location.get(b)) {
                (Some(x), Some(y)) => spatial_tol_m > 0.0 && x.haversine_m(y) <= spatial_tol_m,
                _ => false,
            }
    };

    let mut earliest: BTreeMap<&str, Timestamp> = BTreeMap::new();
    for v in &mine {
        let Some(place) = v.object.as_id() else { continue };
        let widened = v.interval.expanded(time_tol_s);
        let others = pkg.query_facts(&PkgQuery::new().relation(Relation::Visit).window(widened))?;
        for o in others {
            let (Some(user), Some(op)) = (o.subject.as_id(), o.object.as_id()) else { continue };
            if user == infected || !near(place, op) {
                continue;
            }
            let at = widened.start.max(o.interval.start);
            let e = earliest.entry(user).or_insert(at);
            *e = (*e).min(at);
        }
    }
    let mut out: Vec<(Timestamp, &str)> = earliest.into_iter().map(|(u, t)| (t, u)).collect();
    out.sort_unstable();
    Ok(out.into_iter().map(|(_, u)| u.to_string()).collect())
}
