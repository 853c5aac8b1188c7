//! Derivation of visit, group, flow and hotspot facts from raw observations.
//!
//! Every function here is pure: it reads its inputs and returns new facts for
//! the caller to [`Pkg::commit`](super::Pkg::commit).

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{Entity, Interval, PkgError, Relation, TemporalFact, Timestamp, User};
use crate::geo::{LatLon, Place, Region};
use crate::net::label::{label_region, GeoCase};

/// Default flow time slot: one hour, aligned to the epoch.
pub const DEFAULT_SLOT_S: i64 = 3600;

/// Confirmed cases reported for a region. `location` is the geocoded
/// position when known; otherwise the region centroid stands in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseEvent {
    pub region_id: String,
    pub timestamp: Timestamp,
    pub count: u32,
    pub location: Option<LatLon>,
}

struct Stay<'a> {
    user: &'a str,
    place: &'a str,
    start: Timestamp,
    end: Timestamp,
}

fn nearest_place<'a>(p: &LatLon, places: &'a [Place], radius_m: f64) -> Option<&'a Place> {
    let mut best: Option<(f64, &Place)> = None;
    for pl in places {
        let d = p.haversine_m(&pl.location);
        if d > radius_m {
            continue;
        }
        let better = match best {
            None => true,
            Some((bd, bp)) => d < bd || (d == bd && pl.id < bp.id),
        };
        if better {
            best = Some((d, pl));
        }
    }
    best.map(|(_, p)| p)
}

fn stays<'a>(user: &'a User, places: &'a [Place], radius_m: f64, min_s: Timestamp) -> Vec<Stay<'a>> {
    let mut out = Vec::new();
    let mut run: Option<(&'a str, Timestamp, Timestamp)> = None;
    let close = |run: Option<(&'a str, Timestamp, Timestamp)>, out: &mut Vec<Stay<'a>>| {
        if let Some((place, s, e)) = run {
            if e - s >= min_s {
                out.push(Stay { user: &user.id, place, start: s, end: e });
            }
        }
    };
    for pt in &user.trajectory {
        let here = nearest_place(&pt.location, places, radius_m).map(|p| p.id.as_str());
        match (run, here) {
            (Some((place, s, _)), Some(h)) if place == h => run = Some((place, s, pt.t)),
            (_, Some(h)) => {
                close(run, &mut out);
                run = Some((h, pt.t, pt.t));
            }
            (_, None) => {
                close(run, &mut out);
                run = None;
            }
        }
    }
    close(run, &mut out);
    out
}

fn check_stay_params(radius_m: f64, min_s: Timestamp) -> Result<(), PkgError> {
    if !(radius_m.is_finite() && radius_m > 0.0) || min_s <= 0 {
        return Err(PkgError::InvalidInput(format!(
            "stay radius ({radius_m}) and minimum dwell ({min_s}) must be positive"
        )));
    }
    Ok(())
}

fn visits_from_stays(stays: Vec<Stay<'_>>) -> Result<Vec<TemporalFact>, PkgError> {
    let mut longest: HashMap<&str, Timestamp> = HashMap::new();
    for s in &stays {
        let e = longest.entry(s.place).or_insert(0);
        *e = (*e).max(s.end - s.start);
    }
    let mut out = stays
        .iter()
        .map(|s| {
            let max = longest[s.place];
            let f = if max > 0 { ((s.end - s.start) as f64 / max as f64).clamp(0.0, 1.0) } else { 1.0 };
            TemporalFact::new(Entity::id(s.user), Relation::Visit, Entity::id(s.place), Interval::closed(s.start, s.end), f)
        })
        .collect::<Result<Vec<_>, _>>()?;
    out.sort_by_key(|f| (f.interval.start, f.id));
    Ok(out)
}

/// Visit facts for one user's maximal stays.
///
/// A stay is a maximal run of consecutive samples whose nearest place within
/// `stay_radius_m` is the same, lasting at least `stay_min_s`. The feature is
/// the stay duration divided by the longest stay at that place among the
/// derived visits.
pub fn derive_visits(
    user: &User,
    places: &[Place],
    stay_radius_m: f64,
    stay_min_s: Timestamp,
) -> Result<Vec<TemporalFact>, PkgError> {
    derive_visits_many(std::slice::from_ref(user), places, stay_radius_m, stay_min_s)
}

/// [`derive_visits`] over many users, normalising features per place across
/// all of them.
pub fn derive_visits_many(
    users: &[User],
    places: &[Place],
    stay_radius_m: f64,
    stay_min_s: Timestamp,
) -> Result<Vec<TemporalFact>, PkgError> {
    check_stay_params(stay_radius_m, stay_min_s)?;
    let mut all = Vec::new();
    for u in users {
        u.validate()?;
        all.extend(stays(u, places, stay_radius_m, stay_min_s));
    }
    visits_from_stays(all)
}

/// Per-user visit sequences `(place, interval)` ordered by start time.
fn visit_sequences(visits: &[TemporalFact]) -> BTreeMap<&str, Vec<(&str, Interval)>> {
    let mut by_user: BTreeMap<&str, Vec<&TemporalFact>> = BTreeMap::new();
    for f in visits.iter().filter(|f| f.relation == Relation::Visit) {
        if let (Entity::Id(u), Entity::Id(_)) = (&f.subject, &f.object) {
            by_user.entry(u.as_str()).or_default().push(f);
        }
    }
    by_user
        .into_iter()
        .map(|(u, mut fs)| {
            fs.sort_by_key(|f| (f.interval.start, f.id));
            let seq = fs
                .into_iter()
                .map(|f| {
                    let iv = Interval::closed(f.interval.start, f.interval.end.unwrap_or(f.interval.start));
                    (f.object.as_id().unwrap_or_default(), iv)
                })
                .collect();
            (u, seq)
        })
        .collect()
}

fn overlaps_within(a: &Interval, b: &Interval, tol: Timestamp) -> bool {
    a.expanded(tol).overlaps(b)
}

const GROUP_MIN_PLACES: usize = 3;

/// Group facts for sets of at least two users who visit the same sequence of
/// three or more consecutive places with pairwise overlapping stays.
///
/// Each user's consecutive three-visit windows are nodes; nodes of different
/// users with identical place triples and pairwise overlapping visits
/// (widened by `time_tol_s`) are linked, and every maximal clique is a
/// candidate group. A candidate is extended forward while all members keep
/// sharing the next place, and skipped when it merely continues a group that
/// started one visit earlier. The fact's subject is the smallest member id
/// and its object the remaining members; the feature is `n / (n + 1)`.
pub fn derive_groups(visits: &[TemporalFact], time_tol_s: Timestamp) -> Result<Vec<TemporalFact>, PkgError> {
    let seqs = visit_sequences(visits);
    let users: Vec<&str> = seqs.keys().copied().collect();
    let seq_of = |u: usize| &seqs[users[u]];

    // (user index, window start) grouped by place triple.
    let mut buckets: BTreeMap<[&str; GROUP_MIN_PLACES], Vec<(usize, usize)>> = BTreeMap::new();
    for (ui, u) in users.iter().enumerate() {
        let seq = &seqs[u];
        for start in 0..seq.len().saturating_sub(GROUP_MIN_PLACES - 1) {
            let key = [seq[start].0, seq[start + 1].0, seq[start + 2].0];
            buckets.entry(key).or_default().push((ui, start));
        }
    }

    // Do the per-user visits at the given offsets all share a place and
    // overlap pairwise?
    let aligned = |members: &[(usize, usize)], offset: isize| -> bool {
        let mut at = Vec::with_capacity(members.len());
        for &(u, s) in members {
            let i = s as isize + offset;
            if i < 0 || i as usize >= seq_of(u).len() {
                return false;
            }
            at.push(seq_of(u)[i as usize]);
        }
        at.iter().all(|(p, _)| *p == at[0].0)
            && (0..at.len()).all(|a| (a + 1..at.len()).all(|b| overlaps_within(&at[a].1, &at[b].1, time_tol_s)))
    };

    let mut out = Vec::new();
    for nodes in buckets.values() {
        let n = nodes.len();
        let mut adj = vec![vec![false; n]; n];
        for a in 0..n {
            for b in (a + 1)..n {
                let (ua, sa) = nodes[a];
                let (ub, sb) = nodes[b];
                if ua == ub {
                    continue;
                }
                let linked = (0..GROUP_MIN_PLACES)
                    .all(|k| overlaps_within(&seq_of(ua)[sa + k].1, &seq_of(ub)[sb + k].1, time_tol_s));
                adj[a][b] = linked;
                adj[b][a] = linked;
            }
        }
        for clique in maximal_cliques(&adj) {
            if clique.len() < 2 {
                continue;
            }
            let members: Vec<(usize, usize)> = clique.iter().map(|&i| nodes[i]).collect();
            if aligned(&members, -1) {
                continue;
            }
            let mut len = GROUP_MIN_PLACES;
            while aligned(&members, len as isize) {
                len += 1;
            }
            let start = members.iter().map(|&(u, s)| seq_of(u)[s].1.start).min().unwrap_or_default();
            let end = members
                .iter()
                .map(|&(u, s)| seq_of(u)[s + len - 1].1.end.unwrap_or_default())
                .max()
                .unwrap_or_default();
            let mut ids: Vec<&str> = members.iter().map(|&(u, _)| users[u]).collect();
            ids.sort_unstable();
            let size = ids.len() as f64;
            out.push(TemporalFact::new(
                Entity::id(ids[0]),
                Relation::Group,
                Entity::set(ids[1..].iter().copied()),
                Interval::closed(start, end),
                size / (size + 1.0),
            )?);
        }
    }
    out.sort_by_key(|f| (f.interval.start, f.id));
    out.dedup_by_key(|f| f.id);
    Ok(out)
}

/// Bron-Kerbosch with pivoting; cliques come back sorted.
fn maximal_cliques(adj: &[Vec<bool>]) -> Vec<Vec<usize>> {
    fn expand(adj: &[Vec<bool>], r: &mut Vec<usize>, p: Vec<usize>, x: Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if p.is_empty() && x.is_empty() {
            let mut c = r.clone();
            c.sort_unstable();
            out.push(c);
            return;
        }
        let pivot = p
            .iter()
            .chain(&x)
            .copied()
            .max_by_key(|&u| p.iter().filter(|&&v| adj[u][v]).count())
            .expect("p or x non-empty");
        let mut p = p;
        let mut x = x;
        let candidates: Vec<usize> = p.iter().copied().filter(|&v| !adj[pivot][v]).collect();
        for v in candidates {
            r.push(v);
            let np = p.iter().copied().filter(|&w| adj[v][w]).collect();
            let nx = x.iter().copied().filter(|&w| adj[v][w]).collect();
            expand(adj, r, np, nx, out);
            r.pop();
            p.retain(|&w| w != v);
            x.push(v);
        }
    }
    let mut out = Vec::new();
    expand(adj, &mut Vec::new(), (0..adj.len()).collect(), Vec::new(), &mut out);
    out.sort();
    out
}

/// Flow detection parameters: `nu` is the minimum number of distinct users,
/// `slot_s` the width of the epoch-aligned time slots.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub nu: usize,
    pub slot_s: Timestamp,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { nu: 3, slot_s: DEFAULT_SLOT_S }
    }
}

/// Flow facts `p_a -> p_b` for every slot in which at least `nu` distinct
/// users leave a visit at `p_a` and make their next visit at `p_b`. A
/// transition belongs to the slot containing the end of the `p_a` visit.
/// The feature is the user count.
pub fn derive_flows(visits: &[TemporalFact], cfg: FlowConfig) -> Result<Vec<TemporalFact>, PkgError> {
    if cfg.nu < 1 || cfg.slot_s <= 0 {
        return Err(PkgError::InvalidInput(format!("nu ({}) and slot ({}) must be positive", cfg.nu, cfg.slot_s)));
    }
    let mut counts: BTreeMap<(&str, &str, i64), BTreeSet<&str>> = BTreeMap::new();
    for (user, seq) in visit_sequences(visits) {
        for pair in seq.windows(2) {
            let ((a, ia), (b, _)) = (pair[0], pair[1]);
            if a == b {
                continue;
            }
            let depart = ia.end.unwrap_or(ia.start);
            counts.entry((a, b, depart.div_euclid(cfg.slot_s))).or_default().insert(user);
        }
    }
    let mut out = Vec::new();
    for ((a, b, slot), users) in counts {
        if users.len() >= cfg.nu {
            let start = slot * cfg.slot_s;
            out.push(TemporalFact::new(
                Entity::id(a),
                Relation::Flow,
                Entity::id(b),
                Interval::closed(start, start + cfg.slot_s - 1),
                users.len() as f64,
            )?);
        }
    }
    out.sort_by_key(|f| (f.interval.start, f.id));
    Ok(out)
}

/// Hotspot facts for connected (shared-border) sets of regions labelled as
/// hotspot classes.
///
/// Subject is the bounding box of the set, object the set of region ids,
/// feature the number of cases reported in those regions, and the interval
/// opens at the first such case.
pub fn derive_hotspot_facts(cases: &[CaseEvent], regions: &[Region]) -> Result<Vec<TemporalFact>, PkgError> {
    let index: HashMap<&str, usize> = regions.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    let mut geo = Vec::with_capacity(cases.len());
    for c in cases {
        let ri = *index.get(c.region_id.as_str()).ok_or_else(|| PkgError::UnknownRegion(c.region_id.clone()))?;
        geo.push(GeoCase { location: c.location.unwrap_or_else(|| regions[ri].centroid()), count: c.count });
    }
    let hot: Vec<usize> = (0..regions.len())
        .filter(|&i| label_region(&geo, &regions[i].centroid()).is_hotspot())
        .collect();

    // Union-find over shared borders among hotspot regions.
    let mut parent: Vec<usize> = (0..hot.len()).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut j = i;
        while p[j] != r {
            let next = p[j];
            p[j] = r;
            j = next;
        }
        r
    }
    for a in 0..hot.len() {
        for b in (a + 1)..hot.len() {
            if regions[hot[a]].bbox.shares_border(&regions[hot[b]].bbox) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for k in 0..hot.len() {
        let root = find(&mut parent, k);
        components.entry(root).or_default().push(hot[k]);
    }

    let mut out = Vec::new();
    for members in components.values() {
        let ids: BTreeSet<&str> = members.iter().map(|&i| regions[i].id.as_str()).collect();
        let bbox = members.iter().skip(1).fold(regions[members[0]].bbox, |b, &i| b.union(&regions[i].bbox));
        let mine: Vec<&CaseEvent> = cases.iter().filter(|c| ids.contains(c.region_id.as_str())).collect();
        let count: u64 = mine.iter().map(|c| c.count as u64).sum();
        let first = mine.iter().map(|c| c.timestamp).min().unwrap_or_default();
        out.push(TemporalFact::new(
            Entity::Area(bbox),
            Relation::Hotspot,
            Entity::set(ids.iter().copied()),
            Interval::open(first),
            count as f64,
        )?);
    }
    out.sort_by_key(|f| (f.interval.start, f.id));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{build_grid, BBox, PoiType};
    use crate::pkg::TrajectoryPoint;
    use proptest::prelude::*;

    fn place(id: &str, loc: LatLon) -> Place {
        Place::new(id, PoiType::Commercial, loc)
    }

    fn visit(u: &str, p: &str, s: i64, e: i64) -> TemporalFact {
        TemporalFact::new(Entity::id(u), Relation::Visit, Entity::id(p), Interval::closed(s, e), 1.0).unwrap()
    }

    // Independent stay scan: examine every (i, j) span and keep the maximal
    // ones where every sample is nearest to the same place.
    fn brute_stays(user: &User, places: &[Place], radius: f64, min_s: i64) -> Vec<(String, i64, i64)> {
        let tr = &user.trajectory;
        let owner: Vec<Option<String>> =
            tr.iter().map(|p| nearest_place(&p.location, places, radius).map(|p| p.id.clone())).collect();
        let mut out = Vec::new();
        for i in 0..tr.len() {
            for j in i..tr.len() {
                let Some(p) = &owner[i] else { continue };
                if !(i..=j).all(|k| owner[k].as_ref() == Some(p)) {
                    continue;
                }
                let left_max = i == 0 || owner[i - 1].as_ref() != Some(p);
                let right_max = j + 1 == tr.len() || owner[j + 1].as_ref() != Some(p);
                if left_max && right_max && tr[j].t - tr[i].t >= min_s {
                    out.push((p.clone(), tr[i].t, tr[j].t));
                }
            }
        }
        out
    }

    #[test]
    fn empty_trajectory_has_no_visits() {
        let u = User::new("u", vec![]);
        assert!(derive_visits(&u, &[place("P", LatLon::new(0.0, 0.0))], 100.0, 600).unwrap().is_empty());
    }

    #[test]
    fn fifteen_minute_stay_is_one_visit() {
        let p = LatLon::new(22.5, 88.3);
        let tr = (0..15)
            .map(|i| TrajectoryPoint { t: 1_000 + 60 * i, location: p.offset_m((i % 5) as f64 * 10.0, 0.0) })
            .collect();
        let u = User::new("u", tr);
        let places = [place("P", p), place("Q", p.offset_m(5000.0, 0.0))];
        let got = derive_visits(&u, &places, 100.0, 600).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].object, Entity::id("P"));
        assert_eq!(got[0].interval, Interval::closed(1_000, 1_000 + 14 * 60));
        assert_eq!(got[0].feature, 1.0);
        assert_eq!(brute_stays(&u, &places, 100.0, 600), vec![("P".to_string(), 1_000, 1_840)]);
    }

    #[test]
    fn alternating_places_yield_nothing() {
        let a = LatLon::new(22.5, 88.3);
        let b = a.offset_m(5000.0, 0.0);
        let tr = (0..20).map(|i| TrajectoryPoint { t: 60 * i, location: if i % 2 == 0 { a } else { b } }).collect();
        let u = User::new("u", tr);
        let places = [place("A", a), place("B", b)];
        assert!(derive_visits(&u, &places, 100.0, 600).unwrap().is_empty());
        assert!(brute_stays(&u, &places, 100.0, 600).is_empty());
    }

    #[test]
    fn visit_feature_is_relative_duration() {
        let p = LatLon::new(0.0, 0.0);
        let far = p.offset_m(3000.0, 0.0);
        let mut tr: Vec<TrajectoryPoint> = (0..11).map(|i| TrajectoryPoint { t: i * 60, location: p }).collect();
        tr.push(TrajectoryPoint { t: 2000, location: far });
        tr.extend((0..21).map(|i| TrajectoryPoint { t: 3000 + i * 60, location: p }));
        let got = derive_visits(&User::new("u", tr), &[place("P", p)], 50.0, 300).unwrap();
        assert_eq!(got.len(), 2);
        assert!((got[0].feature - 0.5).abs() < 1e-12);
        assert_eq!(got[1].feature, 1.0);
    }

    #[test]
    fn invalid_stay_params() {
        let u = User::new("u", vec![]);
        assert!(derive_visits(&u, &[], 0.0, 600).is_err());
        assert!(derive_visits(&u, &[], 10.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn stay_scan_matches_brute_force(steps in prop::collection::vec((0usize..3, 1i64..400), 0..40)) {
            let base = LatLon::new(22.5, 88.3);
            let spots = [base, base.offset_m(0.0, 2000.0), base.offset_m(4000.0, 0.0)];
            let places = [place("A", spots[0]), place("B", spots[1])];
            let mut t = 0;
            let tr: Vec<TrajectoryPoint> = steps.iter().map(|(k, dt)| { t += dt; TrajectoryPoint { t, location: spots[*k] } }).collect();
            let u = User::new("u", tr);
            let got: Vec<(String, i64, i64)> = derive_visits(&u, &places, 100.0, 300).unwrap().into_iter()
                .map(|f| (f.object.key(), f.interval.start, f.interval.end.unwrap())).collect();
            let mut want = brute_stays(&u, &places, 100.0, 300);
            want.sort_by_key(|w| w.1);
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn three_users_three_places_one_group() {
        let mut v = Vec::new();
        for u in ["a", "b", "c"] {
            v.push(visit(u, "P1", 0, 100));
            v.push(visit(u, "P2", 200, 300));
            v.push(visit(u, "P3", 400, 500));
        }
        let g = derive_groups(&v, 0).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].subject, Entity::id("a"));
        assert_eq!(g[0].object, Entity::set(["b", "c"]));
        assert_eq!(g[0].interval, Interval::closed(0, 500));
        assert!((g[0].feature - 0.75).abs() < 1e-15);
    }

    #[test]
    fn two_shared_places_are_not_a_group() {
        let mut v = Vec::new();
        for u in ["a", "b"] {
            v.push(visit(u, "P1", 0, 100));
            v.push(visit(u, "P2", 200, 300));
        }
        v.push(visit("a", "P3", 400, 500));
        v.push(visit("b", "P4", 400, 500));
        assert!(derive_groups(&v, 0).unwrap().is_empty());
    }

    #[test]
    fn single_user_is_not_a_group() {
        let v = vec![visit("a", "P1", 0, 1), visit("a", "P2", 2, 3), visit("a", "P3", 4, 5)];
        assert!(derive_groups(&v, 0).unwrap().is_empty());
    }

    #[test]
    fn longer_shared_sequence_is_one_group() {
        let mut v = Vec::new();
        for u in ["a", "b"] {
            for (k, p) in ["P1", "P2", "P3", "P4", "P5"].iter().enumerate() {
                v.push(visit(u, p, k as i64 * 100, k as i64 * 100 + 50));
            }
        }
        let g = derive_groups(&v, 0).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].interval, Interval::closed(0, 450));
    }

    #[test]
    fn tolerance_bridges_small_gaps() {
        let mut v = Vec::new();
        for (u, shift) in [("a", 0), ("b", 160)] {
            for (k, p) in ["P1", "P2", "P3"].iter().enumerate() {
                v.push(visit(u, p, k as i64 * 1000 + shift, k as i64 * 1000 + shift + 100));
            }
        }
        assert!(derive_groups(&v, 0).unwrap().is_empty());
        assert_eq!(derive_groups(&v, 60).unwrap().len(), 1);
    }

    // Brute-force group oracle: every user subset (size >= 2), every choice of
    // aligned start offsets, every length >= 3; keep maximal results.
    fn brute_groups(visits: &[TemporalFact], tol: i64) -> BTreeSet<(Vec<String>, i64, i64)> {
        let seqs = visit_sequences(visits);
        let users: Vec<&str> = seqs.keys().copied().collect();
        let n = users.len();
        let mut found: Vec<(Vec<usize>, Vec<usize>, usize)> = Vec::new();
        for mask in 1u32..(1 << n) {
            let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            if members.len() < 2 {
                continue;
            }
            let mut starts = vec![0usize; members.len()];
            loop {
                let max_len = members.iter().zip(&starts).map(|(&u, &s)| seqs[users[u]].len() - s).min().unwrap();
                for len in GROUP_MIN_PLACES..=max_len {
                    let ok = (0..len).all(|k| {
                        let at: Vec<(&str, Interval)> =
                            members.iter().zip(&starts).map(|(&u, &s)| seqs[users[u]][s + k]).collect();
                        at.iter().all(|x| x.0 == at[0].0)
                            && (0..at.len()).all(|a| (a + 1..at.len()).all(|b| overlaps_within(&at[a].1, &at[b].1, tol)))
                    });
                    if ok {
                        found.push((members.clone(), starts.clone(), len));
                    }
                }
                // odometer over starts
                let mut i = 0;
                loop {
                    if i == members.len() {
                        break;
                    }
                    starts[i] += 1;
                    if starts[i] < seqs[users[members[i]]].len() {
                        break;
                    }
                    starts[i] = 0;
                    i += 1;
                }
                if i == members.len() {
                    break;
                }
            }
        }
        // A result is dominated if another covers a superset of its
        // (user, visit-index) cells.
        let cells = |g: &(Vec<usize>, Vec<usize>, usize)| -> BTreeSet<(usize, usize)> {
            g.0.iter().zip(&g.1).flat_map(|(&u, &s)| (s..s + g.2).map(move |k| (u, k))).collect()
        };
        let mut out = BTreeSet::new();
        for g in &found {
            let mine = cells(g);
            let dominated = found.iter().any(|h| {
                let theirs = cells(h);
                theirs.len() > mine.len() && mine.is_subset(&theirs)
            });
            if !dominated {
                let ids: Vec<String> = g.0.iter().map(|&u| users[u].to_string()).collect();
                let start = g.0.iter().zip(&g.1).map(|(&u, &s)| seqs[users[u]][s].1.start).min().unwrap();
                let end = g.0.iter().zip(&g.1).map(|(&u, &s)| seqs[users[u]][s + g.2 - 1].1.end.unwrap()).max().unwrap();
                out.insert((ids, start, end));
            }
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn groups_match_brute_force(
            plan in prop::collection::vec(prop::collection::vec((0usize..3, 0i64..2), 3..6), 2..4)
        ) {
            // Users follow place plans over fixed hourly slots with small jitter,
            // so overlaps are decided by the slot.
            let names = ["a", "b", "c", "d"];
            let mut v = Vec::new();
            for (ui, steps) in plan.iter().enumerate() {
                for (k, (p, jitter)) in steps.iter().enumerate() {
                    let s = k as i64 * 1000 + jitter * 700;
                    v.push(visit(names[ui], ["P", "Q", "R"][*p], s, s + 200));
                }
            }
            let got: BTreeSet<(Vec<String>, i64, i64)> = derive_groups(&v, 0).unwrap().into_iter().map(|f| {
                let mut ids = vec![f.subject.key()];
                if let Entity::Set(rest) = &f.object { ids.extend(rest.iter().cloned()); }
                (ids, f.interval.start, f.interval.end.unwrap())
            }).collect();
            prop_assert_eq!(got, brute_groups(&v, 0));
        }
    }

    fn flow_visits(users: usize, from: &str, to: &str, t0: i64) -> Vec<TemporalFact> {
        (0..users)
            .flat_map(|u| {
                let id = format!("u{u}");
                vec![visit(&id, from, t0, t0 + 600), visit(&id, to, t0 + 1200, t0 + 1800)]
            })
            .collect()
    }

    #[test]
    fn three_users_meet_threshold() {
        let v = flow_visits(3, "A", "B", 7200);
        let f = derive_flows(&v, FlowConfig { nu: 3, slot_s: 3600 }).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!((f[0].subject.key(), f[0].object.key(), f[0].feature), ("A".into(), "B".into(), 3.0));
        assert_eq!(f[0].interval, Interval::closed(7200, 10799));
    }

    #[test]
    fn two_users_below_threshold() {
        let v = flow_visits(2, "A", "B", 7200);
        assert!(derive_flows(&v, FlowConfig { nu: 3, slot_s: 3600 }).unwrap().is_empty());
    }

    #[test]
    fn threshold_one() {
        let v = flow_visits(1, "A", "B", 0);
        assert_eq!(derive_flows(&v, FlowConfig { nu: 1, slot_s: 3600 }).unwrap().len(), 1);
        assert!(derive_flows(&v, FlowConfig { nu: 0, slot_s: 3600 }).is_err());
    }

    proptest! {
        #[test]
        fn flows_match_pair_counting(moves in prop::collection::vec((0usize..5, 0usize..3, 0usize..3, 0i64..4), 0..30), nu in 1usize..4) {
            let places = ["A", "B", "C"];
            let mut v = Vec::new();
            for (i, (u, a, b, slot)) in moves.iter().enumerate() {
                // one transition per user per synthetic day keeps sequences separate
                let t0 = i as i64 * 86_400 + slot * 3600;
                let id = format!("u{u}");
                v.push(visit(&id, places[*a], t0, t0 + 60));
                v.push(visit(&id, places[*b], t0 + 30_000, t0 + 30_060));
            }
            // brute force: count users per (a, b, slot) over each user's consecutive visits
            let mut per_user: BTreeMap<String, Vec<&TemporalFact>> = BTreeMap::new();
            for f in &v { per_user.entry(f.subject.key()).or_default().push(f); }
            let mut counts: BTreeMap<(String, String, i64), BTreeSet<String>> = BTreeMap::new();
            for (u, mut fs) in per_user {
                fs.sort_by_key(|f| (f.interval.start, f.id));
                for w in fs.windows(2) {
                    if w[0].object != w[1].object {
                        let slot = w[0].interval.end.unwrap().div_euclid(3600);
                        counts.entry((w[0].object.key(), w[1].object.key(), slot)).or_default().insert(u.clone());
                    }
                }
            }
            let want: BTreeSet<(String, String, i64, usize)> = counts.into_iter()
                .filter(|(_, us)| us.len() >= nu)
                .map(|((a, b, s), us)| (a, b, s * 3600, us.len())).collect();
            let got: BTreeSet<(String, String, i64, usize)> = derive_flows(&v, FlowConfig { nu, slot_s: 3600 }).unwrap().into_iter()
                .map(|f| (f.subject.key(), f.object.key(), f.interval.start, f.feature as usize)).collect();
            prop_assert_eq!(got, want);
        }
    }

    fn hotspot_grid() -> Vec<Region> {
        let bbox = BBox::from_origin_m(LatLon::new(22.5, 88.3), 6000.0, 6000.0).unwrap();
        build_grid(bbox, 1200.0).unwrap()
    }

    fn cases_at(region: &Region, n: u32, t: i64) -> Vec<CaseEvent> {
        (0..n).map(|i| CaseEvent { region_id: region.id.clone(), timestamp: t + i as i64, count: 1, location: None }).collect()
    }

    #[test]
    fn no_cases_no_hotspots() {
        assert!(derive_hotspot_facts(&[], &hotspot_grid()).unwrap().is_empty());
    }

    #[test]
    fn one_cluster_one_fact() {
        let grid = hotspot_grid();
        let cases = cases_at(&grid[12], 25, 500);
        let facts = derive_hotspot_facts(&cases, &grid).unwrap();
        assert_eq!(facts.len(), 1);
        assert_eq!(facts[0].feature, 25.0);
        assert_eq!(facts[0].subject, Entity::Area(grid[12].bbox));
        assert_eq!(facts[0].interval, Interval::open(500));
    }

    #[test]
    fn two_disjoint_clusters() {
        let grid = hotspot_grid();
        let mut cases = cases_at(&grid[0], 22, 0);
        cases.extend(cases_at(&grid[24], 30, 100));
        let facts = derive_hotspot_facts(&cases, &grid).unwrap();
        assert_eq!(facts.len(), 2);
        assert_ne!(facts[0].subject, facts[1].subject);
        let mut counts: Vec<f64> = facts.iter().map(|f| f.feature).collect();
        counts.sort_by(f64::total_cmp);
        assert_eq!(counts, vec![22.0, 30.0]);
    }

    #[test]
    fn adjacent_hot_regions_merge() {
        let grid = hotspot_grid();
        let mut cases = cases_at(&grid[0], 22, 0);
        cases.extend(cases_at(&grid[1], 23, 0));
        let facts = derive_hotspot_facts(&cases, &grid).unwrap();
        assert_eq!(facts.len(), 1);
        assert_eq!(facts[0].object, Entity::set([grid[0].id.clone(), grid[1].id.clone()]));
        assert_eq!(facts[0].subject, Entity::Area(grid[0].bbox.union(&grid[1].bbox)));
    }

    #[test]
    fn unknown_case_region() {
        let cases = vec![CaseEvent { region_id: "nowhere".into(), timestamp: 0, count: 1, location: None }];
        assert!(matches!(derive_hotspot_facts(&cases, &hotspot_grid()), Err(PkgError::UnknownRegion(_))));
    }
}
