use std::collections::BTreeMap;

use super::{
    events_from_pkg, participation_index, sort_patterns, Event, Locator, MinerConfig, MinerError, NeighborRelation,
    PatternInstance, PatternKind,
};
use crate::pkg::Pkg;

pub const BRUTEFORCE_MAX_FACTS: usize = 12;
pub const BRUTEFORCE_MAX_EVENTS: usize = 16;

fn within(nr: &NeighborRelation, a: &Event, b: &Event) -> bool {
    (b.t - a.t).abs() <= nr.temporal_span_s && a.location.haversine_m(&b.location) <= nr.spatial_buffer_m
}

/// Exhaustive reference miner.
///
/// Cascading: every chain of events in `(t, source)` order with distinct tags
/// and consecutive members within the neighbour relation. Co-occurrence:
/// every event subset with distinct tags whose members are pairwise within
/// the neighbour relation. Chains and subsets are grouped by their tag
/// sequence (set), and a group is reported when its participation index
/// reaches the threshold.
pub fn mine_bruteforce_events(
    events: &[Event],
    nr: &NeighborRelation,
    cfg: &MinerConfig,
    kind: PatternKind,
) -> Result<Vec<PatternInstance>, MinerError> {
    nr.validate()?;
    cfg.validate()?;
    if events.len() > BRUTEFORCE_MAX_EVENTS {
        return Err(MinerError::TooLarge { cap: BRUTEFORCE_MAX_EVENTS, got: events.len() });
    }
    let mut ev = events.to_vec();
    ev.sort_by(|a, b| (a.t, &a.source).cmp(&(b.t, &b.source)));
    let n = ev.len();

    let mut groups: BTreeMap<Vec<String>, Vec<Vec<usize>>> = BTreeMap::new();
    // Every subset as a bitmask; members are taken in index order.
    for mask in 1u32..(1u32 << n) {
        let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        if members.len() < 2 || members.len() > cfg.max_size {
            continue;
        }
        let mut tags: Vec<&str> = members.iter().map(|&i| ev[i].tag.as_str()).collect();
        let mut distinct = tags.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() != tags.len() {
            continue;
        }
        let ok = match kind {
            PatternKind::Cascading => members.windows(2).all(|w| {
                let (a, b) = (&ev[w[0]], &ev[w[1]]);
                b.t >= a.t && within(nr, a, b)
            }),
            PatternKind::CoOccurrence => {
                members.iter().enumerate().all(|(x, &a)| members[x + 1..].iter().all(|&b| within(nr, &ev[a], &ev[b])))
            }
        };
        if !ok {
            continue;
        }
        if kind == PatternKind::CoOccurrence {
            tags.sort_unstable();
        }
        groups.entry(tags.iter().map(|s| s.to_string()).collect()).or_default().push(members);
    }

    let threshold = match kind {
        PatternKind::Cascading => cfg.pi1,
        PatternKind::CoOccurrence => cfg.pi2,
    };
    let mut out = Vec::new();
    for (tags, instances) in groups {
        let pi = participation_index(&tags, &instances, &ev)?;
        if pi >= threshold {
            let mut support: Vec<String> = instances.iter().flatten().map(|&i| ev[i].source.clone()).collect();
            support.sort();
            support.dedup();
            out.push(PatternInstance { kind, members: tags, support, pi });
        }
    }
    sort_patterns(&mut out);
    Ok(out)
}

/// [`mine_bruteforce_events`] over the events of a PKG of at most
/// [`BRUTEFORCE_MAX_FACTS`] facts.
pub fn mine_bruteforce(
    pkg: &Pkg,
    locator: &Locator,
    nr: &NeighborRelation,
    cfg: &MinerConfig,
    kind: PatternKind,
) -> Result<Vec<PatternInstance>, MinerError> {
    if pkg.len() > BRUTEFORCE_MAX_FACTS {
        return Err(MinerError::TooLarge { cap: BRUTEFORCE_MAX_FACTS, got: pkg.len() });
    }
    mine_bruteforce_events(&events_from_pkg(pkg, locator, cfg.granularity), nr, cfg, kind)
}
