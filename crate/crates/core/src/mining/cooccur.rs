use std::collections::{BTreeSet, HashSet};

use super::{events_from_pkg, ratio_min, sort_patterns, Event, Indexed, Locator, MinerConfig, MinerError,
    NeighborRelation, PatternInstance, PatternKind};
use crate::pkg::Pkg;

/// Neighbour lists from a sweep over time-sorted events: only events inside
/// the trailing temporal window are tested spatially.
fn neighbours(ix: &Indexed<'_>, nr: &NeighborRelation) -> Vec<HashSet<usize>> {
    let n = ix.events.len();
    let mut nb = vec![HashSet::new(); n];
    let mut window_start = 0;
    for b in 0..n {
        while ix.events[b].t - ix.events[window_start].t > nr.temporal_span_s {
            window_start += 1;
        }
        for a in window_start..b {
            if ix.tag_of[a] != ix.tag_of[b] && nr.close(ix.events[a], ix.events[b]) {
                nb[a].insert(b);
                nb[b].insert(a);
            }
        }
    }
    nb
}

/// Can `chosen` be extended to one pairwise-neighbouring event per tag in
/// `rest`?
fn completes(ix: &Indexed<'_>, nb: &[HashSet<usize>], chosen: &mut Vec<usize>, rest: &[usize]) -> bool {
    let Some((&tag, tail)) = rest.split_first() else {
        return true;
    };
    let anchor = chosen[0];
    let cands: Vec<usize> = nb[anchor]
        .iter()
        .copied()
        .filter(|&e| ix.tag_of[e] == tag && chosen[1..].iter().all(|c| nb[*c].contains(&e)))
        .collect();
    for e in cands {
        chosen.push(e);
        let ok = completes(ix, nb, chosen, tail);
        chosen.pop();
        if ok {
            return true;
        }
    }
    false
}

fn participants(ix: &Indexed<'_>, nb: &[HashSet<usize>], tags: &[usize]) -> Vec<Vec<usize>> {
    tags.iter()
        .map(|&t| {
            let others: Vec<usize> = tags.iter().copied().filter(|&o| o != t).collect();
            ix.by_tag[t].iter().copied().filter(|&e| completes(ix, nb, &mut vec![e], &others)).collect()
        })
        .collect()
}

/// Apriori co-occurrence mining over prepared events.
///
/// An instance is a set of events with distinct tags, pairwise within the
/// spatial buffer and the temporal span. Size-2 candidates are the tag pairs
/// of neighbouring events; larger candidates join surviving sets that differ
/// in their last tag and have every subset surviving. Each level keeps
/// candidates with `PI >= pi2`.
pub fn mine_cooccurrence_events(
    events: &[Event],
    nr: &NeighborRelation,
    cfg: &MinerConfig,
) -> Result<Vec<PatternInstance>, MinerError> {
    nr.validate()?;
    cfg.validate()?;
    let ix = Indexed::new(events);
    let nb = neighbours(&ix, nr);

    let mut level: BTreeSet<Vec<usize>> = BTreeSet::new();
    for (a, bs) in nb.iter().enumerate() {
        for &b in bs {
            let (x, y) = (ix.tag_of[a], ix.tag_of[b]);
            level.insert(vec![x.min(y), x.max(y)]);
        }
    }
    let mut out = Vec::new();
    let mut size = 2;
    while !level.is_empty() {
        let mut kept: Vec<Vec<usize>> = Vec::new();
        for tags in &level {
            let parts = participants(&ix, &nb, tags);
            let pi = ratio_min(&parts, tags.iter().map(|&t| ix.by_tag[t].len()));
            if pi >= cfg.pi2 {
                out.push(ix.pattern(PatternKind::CoOccurrence, tags, &parts, pi));
                kept.push(tags.clone());
            }
        }
        if size == cfg.max_size {
            break;
        }
        let survivors: HashSet<&Vec<usize>> = kept.iter().collect();
        level = BTreeSet::new();
        for (i, p) in kept.iter().enumerate() {
            for q in &kept[i + 1..] {
                if p[..size - 1] != q[..size - 1] {
                    continue;
                }
                let mut c = p.clone();
                c.push(q[size - 1]);
                c.sort_unstable();
                let all_subsets_kept = (0..c.len()).all(|drop| {
                    let sub: Vec<usize> = c.iter().enumerate().filter(|(k, _)| *k != drop).map(|(_, t)| *t).collect();
                    survivors.contains(&sub)
                });
                if all_subsets_kept {
                    level.insert(c);
                }
            }
        }
        size += 1;
    }
    sort_patterns(&mut out);
    Ok(out)
}

/// Co-occurrence mining over PKG events plus caller-supplied context events.
pub fn mine_cooccurrence(
    pkg: &Pkg,
    contexts: &[Event],
    locator: &Locator,
    nr: &NeighborRelation,
    cfg: &MinerConfig,
) -> Result<Vec<PatternInstance>, MinerError> {
    let mut events = events_from_pkg(pkg, locator, cfg.granularity);
    events.extend_from_slice(contexts);
    mine_cooccurrence_events(&events, nr, cfg)
}
