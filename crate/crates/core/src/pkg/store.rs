use std::collections::{BTreeSet, HashMap};

use super::{Entity, FactId, Interval, PkgError, Relation, TemporalFact, Timestamp};

/// Conjunctive fact filter. Window matching is interval overlap.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PkgQuery {
    pub subject: Option<Entity>,
    pub relation: Option<Relation>,
    pub object: Option<Entity>,
    pub window: Option<Interval>,
}

impl PkgQuery {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn subject(mut self, e: Entity) -> Self {
        self.subject = Some(e);
        self
    }

    pub fn relation(mut self, r: Relation) -> Self {
        self.relation = Some(r);
        self
    }

    pub fn object(mut self, e: Entity) -> Self {
        self.object = Some(e);
        self
    }

    pub fn window(mut self, w: Interval) -> Self {
        self.window = Some(w);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.subject.is_none() && self.relation.is_none() && self.object.is_none() && self.window.is_none()
    }

    pub fn matches(&self, f: &TemporalFact) -> bool {
        self.subject.as_ref().map_or(true, |s| *s == f.subject)
            && self.relation.map_or(true, |r| r == f.relation)
            && self.object.as_ref().map_or(true, |o| *o == f.object)
            && self.window.as_ref().map_or(true, |w| w.overlaps(&f.interval))
    }
}

/// In-memory fact store with subject, object, relation and start-time
/// indexes.
///
/// Window queries scan the start index from `window.start - longest closed
/// fact` to `window.end`, plus the open-ended facts, so they never touch facts
/// that cannot overlap. The store is plain data: share it behind a
/// `RwLock` for many-reader/single-writer use.
#[derive(Clone, Debug, Default)]
pub struct Pkg {
    facts: HashMap<FactId, TemporalFact>,
    by_subject: HashMap<String, BTreeSet<FactId>>,
    by_object: HashMap<String, BTreeSet<FactId>>,
    by_relation: HashMap<Relation, BTreeSet<FactId>>,
    by_start: BTreeSet<(Timestamp, FactId)>,
    open_ended: BTreeSet<FactId>,
    max_closed_len: Timestamp,
}

impl Pkg {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn get(&self, id: FactId) -> Option<&TemporalFact> {
        self.facts.get(&id)
    }

    /// Inserts or updates a fact. A fact with the same subject, relation,
    /// object and interval has its feature overwritten.
    pub fn assert_fact(&mut self, fact: TemporalFact) -> Result<FactId, PkgError> {
        fact.validate()?;
        let id = FactId::of(&fact.subject, fact.relation, &fact.object, &fact.interval);
        if let Some(existing) = self.facts.get_mut(&id) {
            if !existing.key_matches(&fact) {
                return Err(PkgError::InvalidFact(format!("fact id collision on {id}")));
            }
            existing.feature = fact.feature;
            return Ok(id);
        }
        let fact = TemporalFact { id, ..fact };
        self.by_subject.entry(fact.subject.key()).or_default().insert(id);
        self.by_object.entry(fact.object.key()).or_default().insert(id);
        self.by_relation.entry(fact.relation).or_default().insert(id);
        self.by_start.insert((fact.interval.start, id));
        match fact.interval.duration() {
            Some(len) => self.max_closed_len = self.max_closed_len.max(len),
            None => {
                self.open_ended.insert(id);
            }
        }
        self.facts.insert(id, fact);
        Ok(id)
    }

    /// Asserts a batch of derived facts.
    pub fn commit<I: IntoIterator<Item = TemporalFact>>(&mut self, facts: I) -> Result<usize, PkgError> {
        let mut n = 0;
        for f in facts {
            self.assert_fact(f)?;
            n += 1;
        }
        Ok(n)
    }

    /// Facts matching every bound field of `q`, ordered by `(t1, id)`.
    pub fn query_facts(&self, q: &PkgQuery) -> Result<Vec<&TemporalFact>, PkgError> {
        if q.is_empty() {
            return Err(PkgError::EmptyQuery);
        }
        let mut indexed: Vec<&BTreeSet<FactId>> = Vec::new();
        let empty = BTreeSet::new();
        if let Some(s) = &q.subject {
            indexed.push(self.by_subject.get(&s.key()).unwrap_or(&empty));
        }
        if let Some(o) = &q.object {
            indexed.push(self.by_object.get(&o.key()).unwrap_or(&empty));
        }
        if let Some(r) = &q.relation {
            indexed.push(self.by_relation.get(r).unwrap_or(&empty));
        }
        let mut out: Vec<&TemporalFact> = match indexed.iter().min_by_key(|s| s.len()) {
            Some(smallest) => smallest.iter().map(|id| &self.facts[id]).filter(|f| q.matches(f)).collect(),
            None => {
                let w = q.window.expect("non-empty query without index binds a window");
                self.window_candidates(&w).filter(|f| q.matches(f)).collect()
            }
        };
        out.sort_by_key(|f| (f.interval.start, f.id));
        Ok(out)
    }

    fn window_candidates<'a>(&'a self, w: &Interval) -> impl Iterator<Item = &'a TemporalFact> + 'a {
        let lo = w.start.saturating_sub(self.max_closed_len);
        let hi = w.end.unwrap_or(Timestamp::MAX);
        let closed = self
            .by_start
            .range((lo, FactId(0))..=(hi, FactId(u64::MAX)))
            .map(|(_, id)| &self.facts[id])
            .filter(|f| !f.interval.is_open());
        let open = self.open_ended.iter().map(|id| &self.facts[id]);
        closed.chain(open)
    }

    /// All facts ordered by `(t1, id)`.
    pub fn facts(&self) -> Vec<&TemporalFact> {
        self.by_start.iter().map(|(_, id)| &self.facts[id]).collect()
    }

    pub fn facts_with_relation(&self, r: Relation) -> Vec<&TemporalFact> {
        let mut v: Vec<&TemporalFact> = self
            .by_relation
            .get(&r)
            .map(|ids| ids.iter().map(|id| &self.facts[id]).collect())
            .unwrap_or_default();
        v.sort_by_key(|f| (f.interval.start, f.id));
        v
    }

    /// Every plain entity id mentioned as a subject or object.
    pub fn entity_ids(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for f in self.facts.values() {
            for e in [&f.subject, &f.object] {
                match e {
                    Entity::Id(s) => {
                        out.insert(s.clone());
                    }
                    Entity::Set(v) => out.extend(v.iter().cloned()),
                    Entity::Area(_) => {}
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn visit(u: &str, p: &str, s: i64, e: Option<i64>, f: f64) -> TemporalFact {
        let iv = Interval { start: s, end: e };
        TemporalFact::new(Entity::id(u), Relation::Visit, Entity::id(p), iv, f).unwrap()
    }

    #[test]
    fn upsert_overwrites_feature() {
        let mut pkg = Pkg::new();
        let a = pkg.assert_fact(visit("u", "p", 0, Some(10), 0.3)).unwrap();
        let b = pkg.assert_fact(visit("u", "p", 0, Some(10), 0.5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(pkg.len(), 1);
        assert_eq!(pkg.get(a).unwrap().feature, 0.5);
    }

    #[test]
    fn rejects_backwards_interval() {
        let mut pkg = Pkg::new();
        let mut f = visit("u", "p", 0, Some(10), 0.3);
        f.interval = Interval::closed(10, 0);
        assert!(pkg.assert_fact(f).is_err());
        assert!(pkg.is_empty());
    }

    #[test]
    fn counts_distinct_facts() {
        let mut pkg = Pkg::new();
        for i in 0..25 {
            pkg.assert_fact(visit("u", "p", i, Some(i + 1), 0.1)).unwrap();
        }
        assert_eq!(pkg.len(), 25);
    }

    #[test]
    fn window_queries() {
        let mut pkg = Pkg::new();
        pkg.assert_fact(visit("a", "p", 8, Some(12), 0.1)).unwrap();
        pkg.assert_fact(visit("b", "p", 11, Some(12), 0.1)).unwrap();
        pkg.assert_fact(visit("c", "p", 1000, None, 0.1)).unwrap();
        let q = PkgQuery::new().window(Interval::closed(5, 10));
        let got: Vec<_> = pkg.query_facts(&q).unwrap().iter().map(|f| f.subject.key()).collect();
        assert_eq!(got, vec!["a"]);
        let q = PkgQuery::new().window(Interval::closed(1100, 1200));
        let got: Vec<_> = pkg.query_facts(&q).unwrap().iter().map(|f| f.subject.key()).collect();
        assert_eq!(got, vec!["c"]);
    }

    #[test]
    fn empty_query_rejected() {
        assert!(matches!(Pkg::new().query_facts(&PkgQuery::new()), Err(PkgError::EmptyQuery)));
    }

    #[test]
    fn results_ordered_by_start_then_id() {
        let mut pkg = Pkg::new();
        pkg.assert_fact(visit("x", "p", 5, Some(6), 0.1)).unwrap();
        pkg.assert_fact(visit("y", "p", 1, Some(6), 0.1)).unwrap();
        pkg.assert_fact(visit("z", "p", 5, Some(9), 0.1)).unwrap();
        let got = pkg.query_facts(&PkgQuery::new().object(Entity::id("p"))).unwrap();
        let keys: Vec<_> = got.iter().map(|f| (f.interval.start, f.id)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(got[0].subject, Entity::id("y"));
    }

    fn arb_fact() -> impl Strategy<Value = TemporalFact> {
        (0usize..6, 0usize..8, 0usize..6, 0i64..500, prop::option::of(0i64..80))
            .prop_map(|(s, r, o, start, len)| {
                let rel = [Relation::Visit, Relation::Flow, Relation::Connectivity, Relation::Infected]
                    [r % 4];
                TemporalFact::new(
                    Entity::id(format!("s{s}")),
                    rel,
                    Entity::id(format!("o{o}")),
                    Interval { start, end: len.map(|l| start + l) },
                    1.0,
                )
                .unwrap()
            })
    }

    fn arb_query() -> impl Strategy<Value = PkgQuery> {
        (
            prop::option::of(0usize..6),
            prop::option::of(0usize..4),
            prop::option::of(0usize..6),
            prop::option::of((0i64..600, prop::option::of(0i64..100))),
        )
            .prop_map(|(s, r, o, w)| PkgQuery {
                subject: s.map(|s| Entity::id(format!("s{s}"))),
                relation: r.map(|r| [Relation::Visit, Relation::Flow, Relation::Connectivity, Relation::Infected][r]),
                object: o.map(|o| Entity::id(format!("o{o}"))),
                window: w.map(|(a, l)| Interval { start: a, end: l.map(|l| a + l) }),
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn query_equals_linear_scan(facts in prop::collection::vec(arb_fact(), 0..60),
                                    queries in prop::collection::vec(arb_query(), 16)) {
            let mut pkg = Pkg::new();
            for f in &facts {
                pkg.assert_fact(f.clone()).unwrap();
            }
            for q in queries.iter().filter(|q| !q.is_empty()) {
                let got: BTreeSet<FactId> = pkg.query_facts(q).unwrap().iter().map(|f| f.id).collect();
                let want: BTreeSet<FactId> = pkg.facts().into_iter().filter(|f| q.matches(f)).map(|f| f.id).collect();
                prop_assert_eq!(got, want);
            }
        }
    }
}
