//! Query lifecycle: atomic, directional and merged queries, recurrences,
//! colors and per-query statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::engine::{eval_attributes, eval_prism, eval_recurrence, AttributeConstraint};
use crate::error::{Error, Result};
use crate::geo::Polygon;
use crate::mask::ResultMask;
use crate::prism::{EventKind, Prism};
use crate::recurrence::RecurrencePattern;
use crate::snapshot::DatasetSnapshot;
use crate::stats::{compute_stats, TripStats};
use crate::time::TimeInterval;

/// Categorical palette for query colors.
pub const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueryId(pub u64);

impl fmt::Display for QueryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum QueryVariant {
    Atomic { prism: Prism, kind: EventKind },
    /// Pickup tested against `origin`, dropoff against `destination`, each
    /// with its own interval.
    Directional { origin: Prism, destination: Prism },
    /// Union of flat members (never themselves merged).
    Merged { members: Vec<QuerySpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub id: QueryId,
    #[serde(flatten)]
    pub variant: QueryVariant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recurrence: Option<RecurrencePattern>,
    /// Index into [`PALETTE`].
    pub color: u8,
    #[serde(default = "default_visible")]
    pub visible: bool,
}

fn default_visible() -> bool {
    true
}

impl QuerySpec {
    /// The event a recurrence on this query is matched against.
    /// Directional queries use the pickup.
    pub fn recurrence_kind(&self) -> Option<EventKind> {
        match &self.variant {
            QueryVariant::Atomic { kind, .. } => Some(*kind),
            QueryVariant::Directional { .. } => Some(EventKind::Origin),
            QueryVariant::Merged { .. } => None,
        }
    }

    fn is_merged(&self) -> bool {
        matches!(self.variant, QueryVariant::Merged { .. })
    }
}

/// Mask of a spec before global attribute constraints.
pub fn eval_spec(snapshot: &DatasetSnapshot, spec: &QuerySpec) -> ResultMask {
    let mut mask = match &spec.variant {
        QueryVariant::Atomic { prism, kind } => eval_prism(snapshot, prism, *kind),
        QueryVariant::Directional { origin, destination } => {
            let mut m = eval_prism(snapshot, origin, EventKind::Origin);
            m.and_assign(&eval_prism(snapshot, destination, EventKind::Destination))
                .expect("same snapshot");
            m
        }
        QueryVariant::Merged { members } => {
            let mut m = ResultMask::empty(snapshot.len());
            for member in members {
                let mut mm = eval_spec(snapshot, member);
                if let (Some(p), Some(kind)) = (&spec.recurrence, member.recurrence_kind()) {
                    mm.and_assign(&eval_recurrence(snapshot, p, kind)).expect("same snapshot");
                }
                m.or_assign(&mm).expect("same snapshot");
            }
            return m;
        }
    };
    if let (Some(p), Some(kind)) = (&spec.recurrence, spec.recurrence_kind()) {
        mask.and_assign(&eval_recurrence(snapshot, p, kind)).expect("same snapshot");
    }
    mask
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResult {
    pub id: QueryId,
    #[serde(skip)]
    pub mask: ResultMask,
    pub stats: TripStats,
}

/// Where a prism sits inside its query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "role", content = "member")]
pub enum PrismRole {
    Prism,
    Origin,
    Destination,
    Member(QueryId),
    MemberOrigin(QueryId),
    MemberDestination(QueryId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrismSlices {
    #[serde(flatten)]
    pub role: PrismRole,
    pub interval: TimeInterval,
    pub slices: Vec<TimeInterval>,
}

/// Concrete sub-intervals of each prism selected by the query's recurrence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicedPrismSet {
    pub id: QueryId,
    pub prisms: Vec<PrismSlices>,
}

fn intersect_slices(a: &[TimeInterval], b: &[TimeInterval]) -> Vec<TimeInterval> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        if let Some(x) = a[i].intersect(&b[j]) {
            out.push(x);
        }
        if a[i].end() < b[j].end() {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

fn slices_for(interval: TimeInterval, patterns: &[&RecurrencePattern]) -> Vec<TimeInterval> {
    let mut out = if interval.is_empty() { Vec::new() } else { vec![interval] };
    for p in patterns {
        out = intersect_slices(&out, &p.slices(interval));
    }
    out
}

fn collect_slices(spec: &QuerySpec, outer: Option<&RecurrencePattern>, out: &mut Vec<PrismSlices>, member: bool) {
    let mut patterns: Vec<&RecurrencePattern> = outer.into_iter().collect();
    patterns.extend(spec.recurrence.as_ref());
    let mut push = |role, prism: &Prism| {
        out.push(PrismSlices { role, interval: prism.interval, slices: slices_for(prism.interval, &patterns) });
    };
    match &spec.variant {
        QueryVariant::Atomic { prism, .. } => {
            push(if member { PrismRole::Member(spec.id) } else { PrismRole::Prism }, prism)
        }
        QueryVariant::Directional { origin, destination } => {
            let (o, d) = if member {
                (PrismRole::MemberOrigin(spec.id), PrismRole::MemberDestination(spec.id))
            } else {
                (PrismRole::Origin, PrismRole::Destination)
            };
            push(o, origin);
            // the recurrence applies to pickups only
            out.push(PrismSlices {
                role: d,
                interval: destination.interval,
                slices: slices_for(destination.interval, &[]),
            });
        }
        QueryVariant::Merged { members } => {
            for m in members {
                collect_slices(m, spec.recurrence.as_ref(), out, true);
            }
        }
    }
}

pub fn sliced_prisms(spec: &QuerySpec) -> SlicedPrismSet {
    let mut prisms = Vec::new();
    collect_slices(spec, None, &mut prisms, false);
    SlicedPrismSet { id: spec.id, prisms }
}

/// Target of a recurrence: one query or every query. JSON: an id or `"all"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryTarget {
    One(QueryId),
    All,
}

impl Serialize for QueryTarget {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            QueryTarget::One(id) => s.serialize_u64(id.0),
            QueryTarget::All => s.serialize_str("all"),
        }
    }
}

impl<'de> Deserialize<'de> for QueryTarget {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Id(u64),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Id(id) => Ok(QueryTarget::One(QueryId(id))),
            Raw::Name(s) if s.eq_ignore_ascii_case("all") => Ok(QueryTarget::All),
            Raw::Name(s) => s
                .parse::<u64>()
                .map(|id| QueryTarget::One(QueryId(id)))
                .map_err(|_| serde::de::Error::custom(format!("expected a query id or \"all\", got {s:?}"))),
        }
    }
}

/// Which end of a directional query to edit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionalEnd {
    Origin,
    Destination,
}

#[derive(Debug, Clone)]
struct Entry {
    spec: QuerySpec,
    result: QueryResult,
}

/// Registry of live queries over one snapshot. Mutations are serialized by
/// `&mut self`; each re-evaluates only the queries it touches.
#[derive(Debug, Clone)]
pub struct QueryManager {
    snapshot: Arc<DatasetSnapshot>,
    constraints: Vec<AttributeConstraint>,
    global: ResultMask,
    queries: BTreeMap<QueryId, Entry>,
    /// Atomic pairs consumed by directional links, for `revert_directional`.
    linked: BTreeMap<QueryId, (QuerySpec, QuerySpec)>,
    next_id: u64,
}

impl QueryManager {
    pub fn new(snapshot: Arc<DatasetSnapshot>) -> Self {
        let global = ResultMask::full(snapshot.len());
        QueryManager {
            snapshot,
            constraints: Vec::new(),
            global,
            queries: BTreeMap::new(),
            linked: BTreeMap::new(),
            next_id: 1,
        }
    }

    pub fn snapshot(&self) -> &Arc<DatasetSnapshot> {
        &self.snapshot
    }

    pub fn constraints(&self) -> &[AttributeConstraint] {
        &self.constraints
    }

    /// Mask of trips passing the global attribute constraints.
    pub fn global_mask(&self) -> &ResultMask {
        &self.global
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = QueryId> + '_ {
        self.queries.keys().copied()
    }

    pub fn specs(&self) -> impl Iterator<Item = &QuerySpec> {
        self.queries.values().map(|e| &e.spec)
    }

    pub fn results(&self) -> impl Iterator<Item = &QueryResult> {
        self.queries.values().map(|e| &e.result)
    }

    pub fn spec(&self, id: QueryId) -> Result<&QuerySpec> {
        self.entry(id).map(|e| &e.spec)
    }

    pub fn result(&self, id: QueryId) -> Result<&QueryResult> {
        self.entry(id).map(|e| &e.result)
    }

    pub fn slices(&self, id: QueryId) -> Result<SlicedPrismSet> {
        Ok(sliced_prisms(self.spec(id)?))
    }

    fn entry(&self, id: QueryId) -> Result<&Entry> {
        self.queries.get(&id).ok_or_else(|| Error::not_found(format!("query {id}")))
    }

    fn evaluate(&self, spec: &QuerySpec) -> QueryResult {
        let mut mask = eval_spec(&self.snapshot, spec);
        mask.and_assign(&self.global).expect("same snapshot");
        let stats = compute_stats(&self.snapshot, &mask).expect("mask sized to snapshot");
        QueryResult { id: spec.id, mask, stats }
    }

    fn commit(&mut self, spec: QuerySpec) -> &QueryResult {
        let result = self.evaluate(&spec);
        let id = spec.id;
        self.queries.insert(id, Entry { spec, result });
        &self.queries[&id].result
    }

    fn fresh_id(&mut self) -> QueryId {
        let id = QueryId(self.next_id);
        self.next_id += 1;
        id
    }

    /// Lowest unused palette index, cycling once every color is taken.
    fn next_color(&self) -> u8 {
        let used: Vec<u8> = self.queries.values().map(|e| e.spec.color).collect();
        (0..PALETTE.len() as u8)
            .find(|c| !used.contains(c))
            .unwrap_or((self.queries.len() % PALETTE.len()) as u8)
    }

    fn color_or_next(&self, preferred: u8) -> u8 {
        if self.queries.values().any(|e| e.spec.color == preferred) {
            self.next_color()
        } else {
            preferred
        }
    }

    /// Footprint covering every trip position.
    pub fn full_footprint(&self) -> Polygon {
        self.snapshot.bbox().expanded(1.0).to_polygon().expect("padded box has 4 distinct corners")
    }

    /// Creates an atomic query. A missing footprint covers the whole
    /// dataset extent; a missing interval spans the whole dataset.
    pub fn create_atomic(
        &mut self,
        footprint: Option<Polygon>,
        interval: Option<TimeInterval>,
        kind: Option<EventKind>,
    ) -> Result<QuerySpec> {
        if footprint.is_none() && interval.is_none() {
            return Err(Error::domain("a query needs a footprint, an interval or both"));
        }
        let prism = Prism::new(
            footprint.unwrap_or_else(|| self.full_footprint()),
            interval.unwrap_or_else(|| self.snapshot.interval()),
        );
        let spec = QuerySpec {
            id: self.fresh_id(),
            variant: QueryVariant::Atomic { prism, kind: kind.unwrap_or_default() },
            recurrence: None,
            color: self.next_color(),
            visible: true,
        };
        self.commit(spec.clone());
        Ok(spec)
    }

    /// Registers a fully specified query under a fresh id and color.
    pub fn insert(&mut self, variant: QueryVariant, recurrence: Option<RecurrencePattern>) -> Result<QuerySpec> {
        if let QueryVariant::Merged { members } = &variant {
            if members.iter().any(QuerySpec::is_merged) {
                return Err(Error::Composition("merged queries cannot be nested".into()));
            }
        }
        let spec = QuerySpec { id: self.fresh_id(), variant, recurrence, color: self.next_color(), visible: true };
        self.commit(spec.clone());
        Ok(spec)
    }

    fn update(&mut self, id: QueryId, f: impl FnOnce(&mut QuerySpec) -> Result<()>) -> Result<&QueryResult> {
        let mut spec = self.spec(id)?.clone();
        f(&mut spec)?;
        Ok(self.commit(spec))
    }

    pub fn set_kind(&mut self, id: QueryId, kind: EventKind) -> Result<&QueryResult> {
        self.update(id, |spec| match &mut spec.variant {
            QueryVariant::Atomic { kind: k, .. } => {
                *k = kind;
                Ok(())
            }
            _ => Err(Error::Composition(format!("query {id} is not atomic; its kind is fixed"))),
        })
    }

    pub fn move_prism(&mut self, id: QueryId, prism: Prism) -> Result<&QueryResult> {
        self.update(id, |spec| match &mut spec.variant {
            QueryVariant::Atomic { prism: p, .. } => {
                *p = prism;
                Ok(())
            }
            _ => Err(Error::Composition(format!("query {id} is not atomic; move one of its ends"))),
        })
    }

    pub fn move_directional_end(&mut self, id: QueryId, end: DirectionalEnd, prism: Prism) -> Result<&QueryResult> {
        self.update(id, |spec| match &mut spec.variant {
            QueryVariant::Directional { origin, destination } => {
                match end {
                    DirectionalEnd::Origin => *origin = prism,
                    DirectionalEnd::Destination => *destination = prism,
                }
                Ok(())
            }
            _ => Err(Error::Composition(format!("query {id} is not directional"))),
        })
    }

    pub fn set_visible(&mut self, id: QueryId, visible: bool) -> Result<&QueryResult> {
        let entry = self.queries.get_mut(&id).ok_or_else(|| Error::not_found(format!("query {id}")))?;
        entry.spec.visible = visible;
        Ok(&entry.result)
    }

    pub fn delete(&mut self, id: QueryId) -> Result<QuerySpec> {
        self.linked.remove(&id);
        self.queries.remove(&id).map(|e| e.spec).ok_or_else(|| Error::not_found(format!("query {id}")))
    }

    /// Copy of a query under a new id and color.
    pub fn duplicate(&mut self, id: QueryId) -> Result<QuerySpec> {
        let mut spec = self.spec(id)?.clone();
        spec.id = self.fresh_id();
        spec.color = self.next_color();
        self.commit(spec.clone());
        Ok(spec)
    }

    /// Consumes two atomic queries into one directional query carrying the
    /// origin query's id-independent color.
    pub fn link_directional(&mut self, origin_id: QueryId, destination_id: QueryId) -> Result<QuerySpec> {
        if origin_id == destination_id {
            return Err(Error::Composition("cannot link a query to itself".into()));
        }
        let o = self.spec(origin_id)?.clone();
        let d = self.spec(destination_id)?.clone();
        let (QueryVariant::Atomic { prism: op, .. }, QueryVariant::Atomic { prism: dp, .. }) = (&o.variant, &d.variant)
        else {
            return Err(Error::Composition("only atomic queries can be linked".into()));
        };
        let spec = QuerySpec {
            id: self.fresh_id(),
            variant: QueryVariant::Directional { origin: op.clone(), destination: dp.clone() },
            recurrence: o.recurrence.clone().or_else(|| d.recurrence.clone()),
            color: o.color,
            visible: o.visible || d.visible,
        };
        self.queries.remove(&origin_id);
        self.queries.remove(&destination_id);
        self.linked.insert(spec.id, (o, d));
        self.commit(spec.clone());
        Ok(spec)
    }

    /// Splits a directional query back into the atomics it was linked
    /// from. Directional queries created directly split into two fresh
    /// atomics (origin kind and destination kind).
    pub fn revert_directional(&mut self, id: QueryId) -> Result<(QuerySpec, QuerySpec)> {
        let spec = self.spec(id)?.clone();
        let QueryVariant::Directional { origin, destination } = &spec.variant else {
            return Err(Error::Composition(format!("query {id} is not directional")));
        };
        self.queries.remove(&id);
        let (o, mut d) = match self.linked.remove(&id) {
            Some(pair) => pair,
            None => {
                let mk = |mgr: &mut Self, prism: &Prism, kind| QuerySpec {
                    id: mgr.fresh_id(),
                    variant: QueryVariant::Atomic { prism: prism.clone(), kind },
                    recurrence: spec.recurrence.clone(),
                    color: 0,
                    visible: spec.visible,
                };
                let o = mk(self, origin, EventKind::Origin);
                let d = mk(self, destination, EventKind::Destination);
                (o, d)
            }
        };
        let mut o = o;
        o.color = spec.color;
        self.commit(o.clone());
        d.color = self.color_or_next(d.color);
        self.commit(d.clone());
        Ok((o, d))
    }

    /// Union of two queries. Merged operands are flattened; merging a
    /// query with itself leaves it unchanged.
    pub fn merge(&mut self, a: QueryId, b: QueryId) -> Result<QuerySpec> {
        if a == b {
            log::warn!("merge of query {a} with itself ignored");
            return self.spec(a).cloned();
        }
        let sa = self.spec(a)?.clone();
        let sb = self.spec(b)?.clone();
        let color = sa.color;
        let recurrence = match (&sa.variant, &sb.variant) {
            (QueryVariant::Merged { .. }, _) => sa.recurrence.clone(),
            (_, QueryVariant::Merged { .. }) => sb.recurrence.clone(),
            _ => None,
        };
        let mut members = Vec::new();
        for s in [sa, sb] {
            match s.variant {
                QueryVariant::Merged { members: inner } => members.extend(inner),
                _ => members.push(s),
            }
        }
        self.queries.remove(&a);
        self.queries.remove(&b);
        let spec = QuerySpec {
            id: self.fresh_id(),
            variant: QueryVariant::Merged { members },
            recurrence,
            color,
            visible: true,
        };
        self.commit(spec.clone());
        Ok(spec)
    }

    /// Restores the members of a merged query.
    pub fn demerge(&mut self, id: QueryId) -> Result<Vec<QuerySpec>> {
        let spec = self.spec(id)?.clone();
        let QueryVariant::Merged { members } = spec.variant else {
            return Err(Error::Composition(format!("query {id} is not merged")));
        };
        self.queries.remove(&id);
        let mut restored = Vec::with_capacity(members.len());
        for (i, mut m) in members.into_iter().enumerate() {
            m.color = if i == 0 { spec.color } else { self.color_or_next(m.color) };
            if self.queries.contains_key(&m.id) {
                m.id = self.fresh_id();
            }
            self.commit(m.clone());
            restored.push(m);
        }
        Ok(restored)
    }

    /// Sets (or with `None` clears) the recurrence of one or all queries.
    pub fn apply_recurrence(
        &mut self,
        target: QueryTarget,
        pattern: Option<RecurrencePattern>,
    ) -> Result<Vec<(QueryResult, SlicedPrismSet)>> {
        let ids: Vec<QueryId> = match target {
            QueryTarget::One(id) => {
                self.entry(id)?;
                vec![id]
            }
            QueryTarget::All => self.ids().collect(),
        };
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            let result = self
                .update(id, |spec| {
                    spec.recurrence = pattern.clone();
                    Ok(())
                })?
                .clone();
            out.push((result, self.slices(id)?));
        }
        Ok(out)
    }

    /// Replaces the global attribute constraints and re-evaluates every query.
    pub fn set_constraints(&mut self, constraints: Vec<AttributeConstraint>) {
        self.global = eval_attributes(&self.snapshot, &constraints);
        self.constraints = constraints;
        let specs: Vec<QuerySpec> = self.specs().cloned().collect();
        for spec in specs {
            self.commit(spec);
        }
    }

    /// Masks and colors of visible queries, in id order.
    pub fn visible_masks(&self) -> Vec<(&ResultMask, u8)> {
        self.queries
            .values()
            .filter(|e| e.spec.visible)
            .map(|e| (&e.result.mask, e.spec.color))
            .collect()
    }
}
