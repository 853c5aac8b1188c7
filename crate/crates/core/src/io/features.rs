//! Per-region classifier samples built from a dataset, its PKG, SC results
//! and mined patterns.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::pipeline::dataset_start;
use super::Dataset;
use crate::geo::connectivity_indices;
use crate::mining::{PatternInstance, PatternKind};
use crate::net::label::{label_region, GeoCase};
use crate::net::{ctx, HotspotClass, RegionSample, SampleStep, CONTEXT_DIM};
use crate::pkg::{Entity, Interval, Pkg, Relation, TemporalFact, Timestamp};
use crate::spatial::{sc_features_at, ScResult};

const DAY: Timestamp = 86_400;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleConfig {
    pub seq_len: usize,
    pub elderly_age: u32,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { seq_len: 5, elderly_age: 60 }
    }
}

/// Monday = 0.
fn weekday(t: Timestamp) -> u32 {
    ((t.div_euclid(DAY) + 3).rem_euclid(7)) as u32
}

/// Regions an entity key refers to: a place's region, a region id, the
/// members of a set, or every region whose centroid lies in a box.
fn key_regions(key: &str, ds: &Dataset, place_region: &HashMap<&str, &str>) -> Vec<String> {
    let Ok(e) = Entity::parse(key) else {
        return Vec::new();
    };
    let one = |id: &str| -> Option<String> {
        place_region.get(id).map(|r| r.to_string()).or_else(|| ds.region(id).map(|r| r.id.clone()))
    };
    match e {
        Entity::Id(id) => one(&id).into_iter().collect(),
        Entity::Set(v) => v.iter().filter_map(|id| one(id)).collect(),
        Entity::Area(b) => ds.regions.iter().filter(|r| b.contains(&r.centroid())).map(|r| r.id.clone()).collect(),
    }
}

fn pattern_regions(patterns: &[PatternInstance], kind: PatternKind, ds: &Dataset, pr: &HashMap<&str, &str>) -> BTreeSet<String> {
    patterns
        .iter()
        .filter(|p| p.kind == kind)
        .flat_map(|p| p.members.iter())
        .filter_map(|tag| tag.split_once('@').map(|(_, key)| key))
        .flat_map(|key| key_regions(key, ds, pr))
        .collect()
}

fn norm(v: f64, max: f64) -> f64 {
    if max > 0.0 {
        v / max
    } else {
        0.0
    }
}

/// One sample per region and time, labelled from the cases reported up to
/// that time.
///
/// Steps are the latest `seq_len` visits to places in the region. Each step
/// is located at the region the visitor came from, carrying that region's
/// connectivity index over the preceding week. Regions nobody visited get a
/// single step at themselves. Samples in the first week count as the
/// initial phase.
pub fn build_region_samples(
    ds: &Dataset,
    pkg: &Pkg,
    sc: &[ScResult],
    patterns: &[PatternInstance],
    times: &[Timestamp],
    cfg: &SampleConfig,
) -> Vec<RegionSample> {
    let place_region: HashMap<&str, &str> =
        ds.places.iter().filter_map(|p| p.region_id.as_deref().map(|r| (p.id.as_str(), r))).collect();
    let origin = dataset_start(ds).unwrap_or(0);

    // Visits per user in time order, and per region as (user, index) pairs.
    let visit_facts = pkg.facts_with_relation(Relation::Visit);
    let mut by_user: BTreeMap<&str, Vec<&TemporalFact>> = BTreeMap::new();
    for f in &visit_facts {
        if let Entity::Id(u) = &f.subject {
            by_user.entry(u.as_str()).or_default().push(f);
        }
    }
    let mut by_region: BTreeMap<&str, Vec<(Timestamp, &str, usize)>> = BTreeMap::new();
    for (u, vs) in &by_user {
        for (i, v) in vs.iter().enumerate() {
            if let Some(r) = v.object.as_id().and_then(|p| place_region.get(p)) {
                by_region.entry(r).or_default().push((v.interval.start, u, i));
            }
        }
    }
    for v in by_region.values_mut() {
        v.sort();
    }

    // Region-level connectivity: routes plus flows mapped to regions.
    let mut region_facts: Vec<TemporalFact> = pkg.facts_with_relation(Relation::Connectivity).into_iter().cloned().collect();
    for f in pkg.facts_with_relation(Relation::Flow) {
        let map = |e: &Entity| e.as_id().and_then(|p| place_region.get(p)).map(|r| Entity::id(*r));
        if let (Some(s), Some(o)) = (map(&f.subject), map(&f.object)) {
            if s != o {
                region_facts.push(TemporalFact { subject: s, object: o, ..f.clone() });
            }
        }
    }
    let hot_facts = pkg.facts_with_relation(Relation::Hotspot);
    let ca_regions = pattern_regions(patterns, PatternKind::Cascading, ds, &place_region);
    let co_regions = pattern_regions(patterns, PatternKind::CoOccurrence, ds, &place_region);

    let max_of = |f: &dyn Fn(&crate::geo::Region) -> f64| ds.regions.iter().map(f).fold(0.0, f64::max);
    let max_density = max_of(&|r| r.population_density.unwrap_or(0.0));
    let max_medical = max_of(&|r| r.medical_facilities.unwrap_or(0) as f64);
    let mut poi_count: HashMap<&str, f64> = HashMap::new();
    for r in place_region.values() {
        *poi_count.entry(r).or_default() += 1.0;
    }
    let max_poi = poi_count.values().copied().fold(0.0, f64::max);
    let mut residents: HashMap<&str, (f64, f64)> = HashMap::new();
    for u in &ds.users {
        if let Some(r) = &u.residence_region {
            let e = residents.entry(r.as_str()).or_default();
            e.0 += 1.0;
            if u.age.is_some_and(|a| a >= cfg.elderly_age) {
                e.1 += 1.0;
            }
        }
    }
    let in_hotspot = |region: &str, lo: Timestamp, hi: Timestamp| {
        hot_facts.iter().any(|f| {
            f.interval.start >= lo
                && f.interval.start <= hi
                && matches!(&f.object, Entity::Set(v) if v.iter().any(|m| m == region))
        })
    };

    let mut out = Vec::with_capacity(times.len() * ds.regions.len());
    for &t in times {
        let ci: HashMap<String, f64> = connectivity_indices(&region_facts, &Interval::closed(t - 7 * DAY, t))
            .into_iter()
            .map(|c| (c.place_id, c.ci))
            .collect();
        let ci_of = |r: &str| ci.get(r).copied().unwrap_or(0.0);
        let geo: Vec<GeoCase> = ds
            .cases
            .iter()
            .filter(|c| c.timestamp <= t)
            .filter_map(|c| {
                let loc = c.location.or_else(|| ds.region(&c.region_id).map(|r| r.centroid()))?;
                Some(GeoCase { location: loc, count: c.count })
            })
            .collect();
        let sc_now = sc_features_at(sc, t);
        for region in &ds.regions {
            let rid = region.id.as_str();
            let visits: Vec<&(Timestamp, &str, usize)> = by_region
                .get(rid)
                .map(|v| v.iter().filter(|x| x.0 <= t).collect())
                .unwrap_or_default();
            let recent = &visits[visits.len().saturating_sub(cfg.seq_len)..];
            let mut steps: Vec<SampleStep> = recent
                .iter()
                .map(|&&(start, u, i)| {
                    let seq = &by_user[u];
                    let from = i
                        .checked_sub(1)
                        .and_then(|j| seq[j].object.as_id())
                        .and_then(|p| place_region.get(p).copied())
                        .unwrap_or(rid);
                    SampleStep {
                        location: from.to_string(),
                        day: weekday(start),
                        timestamp: start,
                        duration_s: seq[i].interval.duration().unwrap_or(0),
                        air_ci: ci_of(from),
                    }
                })
                .collect();
            if steps.is_empty() {
                steps.push(SampleStep { location: rid.to_string(), day: weekday(t), timestamp: t, duration_s: 0, air_ci: ci_of(rid) });
            }

            let count_between = |lo: Timestamp, hi: Timestamp| visits.iter().filter(|x| x.0 > lo && x.0 <= hi).count() as f64;
            let (now, before) = (count_between(t - DAY, t), count_between(t - 2 * DAY, t - DAY));
            let (n_res, n_old) = residents.get(rid).copied().unwrap_or_default();

            let mut c = vec![0.0; CONTEXT_DIM];
            c[ctx::SC..ctx::SC + 6].copy_from_slice(&sc_now);
            c[ctx::DENSITY] = norm(region.population_density.unwrap_or(0.0), max_density);
            c[ctx::LITERACY] = region.literacy_rate.unwrap_or(0.0);
            c[ctx::MEDICAL] = norm(region.medical_facilities.unwrap_or(0) as f64, max_medical);
            c[ctx::POI] = norm(poi_count.get(rid).copied().unwrap_or(0.0), max_poi);
            c[ctx::PATTERN_CA] = f64::from(ca_regions.contains(rid));
            c[ctx::PATTERN_CO] = f64::from(co_regions.contains(rid));
            c[ctx::HOTSPOT_FACT] = f64::from(in_hotspot(rid, Timestamp::MIN, t));
            c[ctx::CONNECTIVITY] = ci_of(rid);
            c[ctx::MOBILITY_DELTA] = (now - before) / now.max(before).max(1.0);
            c[ctx::NEIGHBOR_HOTSPOT_14D] = f64::from(
                ds.regions
                    .iter()
                    .filter(|o| o.id != region.id && o.bbox.shares_border(&region.bbox))
                    .any(|o| in_hotspot(&o.id, t - 14 * DAY, t)),
            );
            c[ctx::ELDERLY_SHARE] = norm(n_old, n_res);

            out.push(RegionSample {
                region_id: rid.to_string(),
                steps,
                context: c,
                initial_phase: t < origin + 7 * DAY,
                label: label_region(&geo, &region.centroid()),
            });
        }
    }
    out
}

/// End of each whole day after the dataset start, up to the last case or
/// trajectory sample.
pub fn daily_times(ds: &Dataset) -> Vec<Timestamp> {
    let Some(start) = dataset_start(ds) else {
        return Vec::new();
    };
    let traj = ds.users.iter().filter_map(|u| u.trajectory.last().map(|p| p.t));
    let end = traj.chain(ds.cases.iter().map(|c| c.timestamp)).max().unwrap_or(start);
    let first = start.div_euclid(DAY) * DAY + DAY - 1;
    (0..).map(|k| first + k * DAY).take_while(|&t| t <= end.div_euclid(DAY) * DAY + DAY - 1).collect()
}

pub fn class_counts(samples: &[RegionSample]) -> BTreeMap<HotspotClass, usize> {
    let mut m = BTreeMap::new();
    for s in samples {
        *m.entry(s.label).or_default() += 1;
    }
    m
}
