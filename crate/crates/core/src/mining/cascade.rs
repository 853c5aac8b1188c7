use std::collections::{BTreeSet, HashMap};

use super::{events_from_pkg, ratio_min, sort_patterns, Event, Indexed, Locator, MinerConfig, MinerError,
    NeighborRelation, PatternInstance, PatternKind};
use crate::pkg::Pkg;

/// Events `a -> b` where `b` follows `a` in `(t, source)` order, within the
/// temporal span and spatial buffer, with a different tag.
fn links(ix: &Indexed<'_>, nr: &NeighborRelation) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let n = ix.events.len();
    let mut succ = vec![Vec::new(); n];
    let mut pred = vec![Vec::new(); n];
    for a in 0..n {
        for b in (a + 1)..n {
            if ix.events[b].t - ix.events[a].t > nr.temporal_span_s {
                break;
            }
            if ix.tag_of[a] != ix.tag_of[b] && nr.close(ix.events[a], ix.events[b]) {
                succ[a].push(b);
                pred[b].push(a);
            }
        }
    }
    (succ, pred)
}

/// Events at each position that lie on at least one complete chain.
fn participants(ix: &Indexed<'_>, succ: &[Vec<usize>], pred: &[Vec<usize>], seq: &[usize]) -> Vec<Vec<usize>> {
    let n = ix.events.len();
    let k = seq.len();
    let mut fwd: Vec<Vec<bool>> = vec![vec![false; n]; k];
    for &e in &ix.by_tag[seq[0]] {
        fwd[0][e] = true;
    }
    for pos in 1..k {
        for &e in &ix.by_tag[seq[pos]] {
            fwd[pos][e] = pred[e].iter().any(|&a| fwd[pos - 1][a]);
        }
    }
    let mut out = vec![Vec::new(); k];
    let mut live = vec![false; n];
    for &e in &ix.by_tag[seq[k - 1]] {
        if fwd[k - 1][e] {
            live[e] = true;
            out[k - 1].push(e);
        }
    }
    for pos in (0..k - 1).rev() {
        let mut next_live = vec![false; n];
        for &e in &ix.by_tag[seq[pos]] {
            if fwd[pos][e] && succ[e].iter().any(|&b| live[b] && ix.tag_of[b] == seq[pos + 1]) {
                next_live[e] = true;
                out[pos].push(e);
            }
        }
        live = next_live;
    }
    out
}

/// Level-wise cascading mining over prepared events.
///
/// Size-2 candidates come from linked event pairs. A size-`k+1` candidate
/// joins two surviving size-`k` patterns whose tail and head overlap in
/// `k - 1` tags; each level keeps candidates with `PI >= pi1`.
pub fn mine_cascading_events(
    events: &[Event],
    nr: &NeighborRelation,
    cfg: &MinerConfig,
) -> Result<Vec<PatternInstance>, MinerError> {
    nr.validate()?;
    cfg.validate()?;
    let ix = Indexed::new(events);
    let (succ, pred) = links(&ix, nr);

    let mut level: BTreeSet<Vec<usize>> = BTreeSet::new();
    for (a, bs) in succ.iter().enumerate() {
        for &b in bs {
            level.insert(vec![ix.tag_of[a], ix.tag_of[b]]);
        }
    }
    let mut out = Vec::new();
    let mut size = 2;
    while !level.is_empty() {
        let mut kept: Vec<Vec<usize>> = Vec::new();
        for seq in &level {
            let parts = participants(&ix, &succ, &pred, seq);
            let pi = ratio_min(&parts, seq.iter().map(|&t| ix.by_tag[t].len()));
            if pi >= cfg.pi1 {
                out.push(ix.pattern(PatternKind::Cascading, seq, &parts, pi));
                kept.push(seq.clone());
            }
        }
        if size == cfg.max_size {
            break;
        }
        let mut by_head: HashMap<&[usize], Vec<usize>> = HashMap::new();
        for (i, s) in kept.iter().enumerate() {
            by_head.entry(&s[..s.len() - 1]).or_default().push(i);
        }
        level = BTreeSet::new();
        for p in &kept {
            for &qi in by_head.get(&p[1..]).map(Vec::as_slice).unwrap_or(&[]) {
                let last = *kept[qi].last().expect("non-empty pattern");
                if !p.contains(&last) {
                    let mut c = p.clone();
                    c.push(last);
                    level.insert(c);
                }
            }
        }
        size += 1;
    }
    sort_patterns(&mut out);
    Ok(out)
}

pub fn mine_cascading(
    pkg: &Pkg,
    locator: &Locator,
    nr: &NeighborRelation,
    cfg: &MinerConfig,
) -> Result<Vec<PatternInstance>, MinerError> {
    mine_cascading_events(&events_from_pkg(pkg, locator, cfg.granularity), nr, cfg)
}
