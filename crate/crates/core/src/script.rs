//! Query sessions driven by JSON commands. The same command objects back
//! the HTTP API and batch scripts, so an interactive session can be
//! replayed headlessly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::aggregate::{
    choropleth, choropleth_stack, granularity_for, histogram, time_series, Measure, TimeGranularity,
};
use crate::engine::AttributeConstraint;
use crate::error::{Error, Result};
use crate::geo::{project, GeoPoint, Polygon};
use crate::ingest::{load_neighborhoods, NeighborhoodSet};
use crate::manager::{
    sliced_prisms, DirectionalEnd, QueryId, QueryManager, QuerySpec, QueryTarget, QueryVariant, SlicedPrismSet,
};
use crate::mask::ResultMask;
use crate::prism::{EventKind, Prism};
use crate::recurrence::PatternSpec;
use crate::snapshot::{Attribute, DatasetSnapshot};
use crate::stats::{compute_stats, TripStats};
use crate::time::TimeInterval;

/// A query named by id or by a label given at creation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryRef {
    Id(QueryId),
    Label(String),
}

impl Serialize for QueryRef {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            QueryRef::Id(id) => s.serialize_u64(id.0),
            QueryRef::Label(l) => s.serialize_str(l),
        }
    }
}

impl<'de> Deserialize<'de> for QueryRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Id(u64),
            Label(String),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Id(id) => QueryRef::Id(QueryId(id)),
            Raw::Label(l) => QueryRef::Label(l),
        })
    }
}

impl From<QueryId> for QueryRef {
    fn from(id: QueryId) -> Self {
        QueryRef::Id(id)
    }
}

/// One query, or `"all"` for every trip passing the global constraints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetRef {
    All,
    One(QueryRef),
}

impl Serialize for TargetRef {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TargetRef::All => s.serialize_str("all"),
            TargetRef::One(r) => r.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for TargetRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(match QueryRef::deserialize(d)? {
            QueryRef::Label(l) if l == "all" => TargetRef::All,
            r => TargetRef::One(r),
        })
    }
}

impl std::str::FromStr for TargetRef {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" => TargetRef::All,
            _ => match s.parse::<u64>() {
                Ok(id) => TargetRef::One(QueryRef::Id(QueryId(id))),
                Err(_) => TargetRef::One(QueryRef::Label(s.to_string())),
            },
        })
    }
}

/// Partial prism. `polygon` is in Mercator meters; `polygon_lonlat` is
/// projected on use. Missing parts default to the dataset extent or
/// interval (on create) or keep their current value (on update).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrismFragment {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<Polygon>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon_lonlat: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<TimeInterval>,
}

impl PrismFragment {
    pub fn footprint(&self) -> Result<Option<Polygon>> {
        match (&self.polygon, &self.polygon_lonlat) {
            (Some(_), Some(_)) => Err(Error::domain("give polygon or polygon_lonlat, not both")),
            (Some(p), None) => Ok(Some(p.clone())),
            (None, Some(ring)) => {
                let pts = ring
                    .iter()
                    .map(|&[lon, lat]| project(GeoPoint::new(lon, lat)?))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Some(Polygon::new(pts)?))
            }
            (None, None) => Ok(None),
        }
    }

    fn apply_to(&self, prism: &Prism) -> Result<Prism> {
        Ok(Prism::new(
            self.footprint()?.unwrap_or_else(|| prism.footprint.clone()),
            self.interval.unwrap_or(prism.interval),
        ))
    }
}

fn default_bins() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "aggregate", rename_all = "snake_case")]
pub enum AggregateRequest {
    Timeseries {
        name: String,
        query: TargetRef,
        #[serde(default)]
        span: Option<TimeInterval>,
        #[serde(default)]
        granularity: Option<TimeGranularity>,
        #[serde(default = "default_measure")]
        measure: Measure,
        #[serde(default)]
        kind: EventKind,
    },
    Histogram {
        name: String,
        query: TargetRef,
        attribute: Attribute,
        #[serde(default = "default_bins")]
        bins: usize,
    },
    Choropleth {
        name: String,
        query: TargetRef,
        #[serde(default)]
        kind: EventKind,
    },
    Stack {
        name: String,
        query: TargetRef,
        region: String,
        #[serde(default)]
        span: Option<TimeInterval>,
        #[serde(default)]
        kind: EventKind,
    },
}

fn default_measure() -> Measure {
    Measure::Count
}

impl AggregateRequest {
    pub fn name(&self) -> &str {
        match self {
            AggregateRequest::Timeseries { name, .. }
            | AggregateRequest::Histogram { name, .. }
            | AggregateRequest::Choropleth { name, .. }
            | AggregateRequest::Stack { name, .. } => name,
        }
    }

    fn query(&self) -> &TargetRef {
        match self {
            AggregateRequest::Timeseries { query, .. }
            | AggregateRequest::Histogram { query, .. }
            | AggregateRequest::Choropleth { query, .. }
            | AggregateRequest::Stack { query, .. } => query,
        }
    }
}

/// Evaluated aggregate, tagged like its request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "aggregate", rename_all = "snake_case")]
pub enum AggregateOutput {
    Timeseries(crate::aggregate::AggregateSeries),
    Histogram(crate::aggregate::Histogram),
    Choropleth(crate::aggregate::ChoroplethTable),
    Stack(crate::aggregate::RegionStack),
}

impl AggregateOutput {
    pub fn to_csv(&self) -> Result<String> {
        match self {
            AggregateOutput::Timeseries(s) => s.to_csv(),
            AggregateOutput::Histogram(h) => h.to_csv(),
            AggregateOutput::Choropleth(c) => c.to_csv(),
            AggregateOutput::Stack(s) => s.series.to_csv(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    Create {
        #[serde(default)]
        label: Option<String>,
        #[serde(default)]
        prism: PrismFragment,
        #[serde(default)]
        kind: Option<EventKind>,
        #[serde(default)]
        recurrence: Option<PatternSpec>,
    },
    Update {
        query: QueryRef,
        #[serde(default)]
        kind: Option<EventKind>,
        #[serde(default)]
        prism: Option<PrismFragment>,
        /// Which end of a directional query `prism` edits.
        #[serde(default)]
        end: Option<DirectionalEnd>,
        #[serde(default)]
        visible: Option<bool>,
    },
    Delete {
        query: QueryRef,
    },
    Duplicate {
        query: QueryRef,
        #[serde(default)]
        label: Option<String>,
    },
    Link {
        origin: QueryRef,
        destination: QueryRef,
        #[serde(default)]
        label: Option<String>,
    },
    Revert {
        query: QueryRef,
    },
    Merge {
        queries: Vec<QueryRef>,
        #[serde(default)]
        label: Option<String>,
    },
    Demerge {
        query: QueryRef,
    },
    Recur {
        target: TargetRef,
        /// `null` clears the recurrence.
        #[serde(default)]
        pattern: Option<PatternSpec>,
    },
    Constrain {
        constraints: Vec<AttributeConstraint>,
    },
    Export {
        name: String,
        #[serde(default)]
        aggregates: Vec<AggregateRequest>,
    },
}

impl Command {
    pub fn is_mutation(&self) -> bool {
        !matches!(self, Command::Export { .. })
    }
}

/// A live query as reported to clients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryReport {
    #[serde(flatten)]
    pub spec: QuerySpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub stats: TripStats,
    pub slices: SlicedPrismSet,
}

/// Effect of one command.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Outcome {
    pub revision: u64,
    /// Queries created or changed, in command order.
    pub queries: Vec<QueryReport>,
    /// Ids no longer live.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub retired: Vec<QueryId>,
    /// Export files by relative path.
    #[serde(skip)]
    pub files: BTreeMap<String, Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ExportedQuery {
    id: QueryId,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    variant: &'static str,
    color: u8,
    visible: bool,
    stats: TripStats,
}

fn variant_name(v: &QueryVariant) -> &'static str {
    match v {
        QueryVariant::Atomic { .. } => "atomic",
        QueryVariant::Directional { .. } => "directional",
        QueryVariant::Merged { .. } => "merged",
    }
}

/// Query manager plus labels, neighborhoods and a revision counter that
/// increments on every committed mutation.
#[derive(Debug, Clone)]
pub struct Session {
    manager: QueryManager,
    labels: BTreeMap<String, QueryId>,
    neighborhoods: Arc<NeighborhoodSet>,
    revision: u64,
}

impl Session {
    pub fn new(snapshot: Arc<DatasetSnapshot>) -> Self {
        Session {
            manager: QueryManager::new(snapshot),
            labels: BTreeMap::new(),
            neighborhoods: Arc::new(NeighborhoodSet::default()),
            revision: 0,
        }
    }

    pub fn with_neighborhoods(mut self, neighborhoods: Arc<NeighborhoodSet>) -> Self {
        self.neighborhoods = neighborhoods;
        self
    }

    /// Starts the revision counter at `revision`, for a session replacing
    /// another one.
    pub fn with_revision(mut self, revision: u64) -> Self {
        self.revision = revision;
        self
    }

    pub fn manager(&self) -> &QueryManager {
        &self.manager
    }

    pub fn snapshot(&self) -> &Arc<DatasetSnapshot> {
        self.manager.snapshot()
    }

    pub fn neighborhoods(&self) -> &Arc<NeighborhoodSet> {
        &self.neighborhoods
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn resolve(&self, r: &QueryRef) -> Result<QueryId> {
        match r {
            QueryRef::Id(id) => Ok(*id),
            QueryRef::Label(l) => self.labels.get(l).copied().ok_or_else(|| Error::not_found(format!("label {l:?}"))),
        }
    }

    pub fn label_of(&self, id: QueryId) -> Option<&str> {
        self.labels.iter().find(|(_, v)| **v == id).map(|(k, _)| k.as_str())
    }

    /// Mask for an aggregate target; `All` is the global constraint mask.
    pub fn target_mask(&self, target: &TargetRef) -> Result<&ResultMask> {
        match target {
            TargetRef::All => Ok(self.manager.global_mask()),
            TargetRef::One(r) => Ok(&self.manager.result(self.resolve(r)?)?.mask),
        }
    }

    pub fn report(&self, id: QueryId) -> Result<QueryReport> {
        let spec = self.manager.spec(id)?.clone();
        Ok(QueryReport {
            label: self.label_of(id).map(str::to_string),
            stats: self.manager.result(id)?.stats.clone(),
            slices: sliced_prisms(&spec),
            spec,
        })
    }

    pub fn reports(&self) -> Vec<QueryReport> {
        self.manager.ids().map(|id| self.report(id).expect("live id")).collect()
    }

    fn set_label(&mut self, label: Option<String>, id: QueryId) -> Result<()> {
        if let Some(l) = label {
            if l == "all" || l.parse::<u64>().is_ok() {
                return Err(Error::domain(format!("label {l:?} is reserved")));
            }
            self.labels.insert(l, id);
        }
        Ok(())
    }

    /// Applies one command. Failed commands leave the session unchanged.
    pub fn apply(&mut self, cmd: &Command) -> Result<Outcome> {
        let mut staged = self.clone();
        let mut out = staged.apply_inner(cmd)?;
        if cmd.is_mutation() {
            staged.revision += 1;
        }
        out.revision = staged.revision;
        *self = staged;
        Ok(out)
    }

    fn apply_inner(&mut self, cmd: &Command) -> Result<Outcome> {
        let mut out = Outcome::default();
        let tz = self.snapshot().timezone();
        let mut touched = Vec::new();
        match cmd {
            Command::Create { label, prism, kind, recurrence } => {
                let footprint = prism.footprint()?;
                let spec = if footprint.is_none() && prism.interval.is_none() {
                    // an empty fragment selects the whole dataset
                    self.manager.create_atomic(Some(self.manager.full_footprint()), None, *kind)?
                } else {
                    self.manager.create_atomic(footprint, prism.interval, *kind)?
                };
                if let Some(p) = recurrence {
                    self.manager.apply_recurrence(QueryTarget::One(spec.id), Some(p.resolve(tz)?))?;
                }
                self.set_label(label.clone(), spec.id)?;
                touched.push(spec.id);
            }
            Command::Update { query, kind, prism, end, visible } => {
                let id = self.resolve(query)?;
                if let Some(k) = kind {
                    self.manager.set_kind(id, *k)?;
                }
                if let Some(frag) = prism {
                    match (&self.manager.spec(id)?.variant, end) {
                        (QueryVariant::Atomic { prism: current, .. }, None) => {
                            let next = frag.apply_to(current)?;
                            self.manager.move_prism(id, next)?;
                        }
                        (QueryVariant::Directional { origin, destination }, Some(e)) => {
                            let current = if *e == DirectionalEnd::Origin { origin } else { destination };
                            let next = frag.apply_to(current)?;
                            self.manager.move_directional_end(id, *e, next)?;
                        }
                        (QueryVariant::Directional { .. }, None) => {
                            return Err(Error::Composition(format!(
                                "query {id} is directional; say which end to move"
                            )))
                        }
                        _ => return Err(Error::Composition(format!("query {id} has no single prism to move"))),
                    }
                }
                if let Some(v) = visible {
                    self.manager.set_visible(id, *v)?;
                }
                touched.push(id);
            }
            Command::Delete { query } => {
                let id = self.resolve(query)?;
                self.manager.delete(id)?;
                out.retired.push(id);
            }
            Command::Duplicate { query, label } => {
                let spec = self.manager.duplicate(self.resolve(query)?)?;
                self.set_label(label.clone(), spec.id)?;
                touched.push(spec.id);
            }
            Command::Link { origin, destination, label } => {
                let (o, d) = (self.resolve(origin)?, self.resolve(destination)?);
                let spec = self.manager.link_directional(o, d)?;
                self.set_label(label.clone(), spec.id)?;
                out.retired.extend([o, d]);
                touched.push(spec.id);
            }
            Command::Revert { query } => {
                let id = self.resolve(query)?;
                let (o, d) = self.manager.revert_directional(id)?;
                out.retired.push(id);
                touched.extend([o.id, d.id]);
            }
            Command::Merge { queries, label } => {
                let ids = queries.iter().map(|q| self.resolve(q)).collect::<Result<Vec<_>>>()?;
                let Some((&first, rest)) = ids.split_first() else {
                    return Err(Error::domain("merge needs at least one query"));
                };
                let mut acc = first;
                for &b in rest {
                    acc = self.manager.merge(acc, b)?.id;
                }
                for &id in &ids {
                    if !out.retired.contains(&id) {
                        out.retired.push(id);
                    }
                }
                out.retired.retain(|&r| r != acc);
                self.set_label(label.clone(), acc)?;
                touched.push(acc);
            }
            Command::Demerge { query } => {
                let id = self.resolve(query)?;
                let members = self.manager.demerge(id)?;
                out.retired.push(id);
                touched.extend(members.iter().map(|m| m.id));
            }
            Command::Recur { target, pattern } => {
                let pattern = pattern.as_ref().map(|p| p.resolve(tz)).transpose()?;
                let target = match target {
                    TargetRef::All => QueryTarget::All,
                    TargetRef::One(r) => QueryTarget::One(self.resolve(r)?),
                };
                for (result, _) in self.manager.apply_recurrence(target, pattern)? {
                    touched.push(result.id);
                }
            }
            Command::Constrain { constraints } => {
                self.manager.set_constraints(constraints.clone());
                touched.extend(self.manager.ids());
            }
            Command::Export { name, aggregates } => {
                out.files = self.export(name, aggregates)?;
            }
        }
        out.queries = touched.into_iter().map(|id| self.report(id)).collect::<Result<_>>()?;
        Ok(out)
    }

    pub fn aggregate(&self, req: &AggregateRequest) -> Result<AggregateOutput> {
        let snapshot = self.snapshot();
        let mask = self.target_mask(req.query())?;
        Ok(match req {
            AggregateRequest::Timeseries { span, granularity, measure, kind, .. } => {
                let span = span.unwrap_or_else(|| snapshot.interval());
                let g = granularity.unwrap_or_else(|| granularity_for(span));
                AggregateOutput::Timeseries(time_series(snapshot, mask, span, g, *measure, *kind)?)
            }
            AggregateRequest::Histogram { attribute, bins, .. } => {
                AggregateOutput::Histogram(histogram(snapshot, mask, *attribute, *bins)?)
            }
            AggregateRequest::Choropleth { kind, .. } => {
                AggregateOutput::Choropleth(choropleth(snapshot, mask, &self.neighborhoods, *kind)?)
            }
            AggregateRequest::Stack { region, span, kind, .. } => {
                let span = span.unwrap_or_else(|| snapshot.interval());
                AggregateOutput::Stack(choropleth_stack(snapshot, mask, &self.neighborhoods, region, span, *kind)?)
            }
        })
    }

    /// Per-query stats, population counts and aggregates under `name/`.
    pub fn export(&self, name: &str, aggregates: &[AggregateRequest]) -> Result<BTreeMap<String, Vec<u8>>> {
        check_file_name(name)?;
        let mut files = BTreeMap::new();
        let queries: Vec<ExportedQuery> = self
            .manager
            .specs()
            .map(|s| ExportedQuery {
                id: s.id,
                label: self.label_of(s.id).map(str::to_string),
                variant: variant_name(&s.variant),
                color: s.color,
                visible: s.visible,
                stats: self.manager.result(s.id).expect("live id").stats.clone(),
            })
            .collect();
        let all = compute_stats(self.snapshot(), self.manager.global_mask())?;
        let mut counts = BTreeMap::new();
        counts.insert("all".to_string(), all.count);
        for q in &queries {
            counts.insert(q.label.clone().unwrap_or_else(|| q.id.to_string()), q.stats.count);
        }
        files.insert(format!("{name}/stats.json"), pretty(&serde_json::json!({ "all": all, "queries": queries }))?);
        files.insert(format!("{name}/counts.json"), pretty(&counts)?);
        for req in aggregates {
            check_file_name(req.name())?;
            let agg = self.aggregate(req)?;
            files.insert(format!("{name}/{}.csv", req.name()), agg.to_csv()?.into_bytes());
            files.insert(format!("{name}/{}.json", req.name()), pretty(&agg)?);
        }
        Ok(files)
    }
}

fn check_file_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name != "."
        && name != ".."
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::domain(format!("{name:?} is not a plain file name")))
    }
}

fn pretty<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(v).map_err(|e| Error::Parse(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodSource {
    pub path: PathBuf,
    #[serde(default = "default_name_key")]
    pub name_key: String,
}

fn default_name_key() -> String {
    "name".to_string()
}

/// Ordered commands, optionally with a neighborhood file for choropleths.
/// JSON: `{"neighborhoods": {...}, "commands": [...]}` or a bare array.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct QueryScript {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neighborhoods: Option<NeighborhoodSource>,
    pub commands: Vec<Command>,
}

impl<'de> Deserialize<'de> for QueryScript {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Full {
            #[serde(default)]
            neighborhoods: Option<NeighborhoodSource>,
            #[serde(default)]
            commands: Vec<Command>,
        }
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Bare(Vec<serde_json::Value>),
            Full(serde_json::Value),
        }
        match Raw::deserialize(d)? {
            Raw::Bare(items) => {
                let commands = items
                    .into_iter()
                    .enumerate()
                    .map(|(i, v)| {
                        serde_json::from_value(v).map_err(|e| serde::de::Error::custom(format!("command {i}: {e}")))
                    })
                    .collect::<std::result::Result<_, _>>()?;
                Ok(QueryScript { neighborhoods: None, commands })
            }
            Raw::Full(v) => {
                let f: Full = serde_json::from_value(v).map_err(serde::de::Error::custom)?;
                Ok(QueryScript { neighborhoods: f.neighborhoods, commands: f.commands })
            }
        }
    }
}

impl QueryScript {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(format!("script: {e}")))
    }

    /// Reads a script; a relative neighborhood path is resolved against
    /// the script's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut script = Self::from_json(&std::fs::read_to_string(path)?)?;
        if let (Some(n), Some(dir)) = (script.neighborhoods.as_mut(), path.parent()) {
            if n.path.is_relative() {
                n.path = dir.join(&n.path);
            }
        }
        Ok(script)
    }
}

/// Files written by a replay, keyed by relative path.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScriptOutput {
    pub files: BTreeMap<String, Vec<u8>>,
    pub warnings: Vec<String>,
}

/// Replays `script` from a fresh session. Commands run in order; the
/// first failure aborts with its command index.
pub fn run_script(snapshot: Arc<DatasetSnapshot>, script: &QueryScript) -> Result<ScriptOutput> {
    let mut output = ScriptOutput::default();
    let mut session = Session::new(snapshot);
    if let Some(src) = &script.neighborhoods {
        let (set, warnings) = load_neighborhoods(&src.path, &src.name_key)?;
        output.warnings.extend(warnings);
        session = session.with_neighborhoods(Arc::new(set));
    }
    for (i, cmd) in script.commands.iter().enumerate() {
        let outcome = session.apply(cmd).map_err(|e| prefix_error(i, e))?;
        output.files.extend(outcome.files);
    }
    Ok(output)
}

fn prefix_error(i: usize, e: Error) -> Error {
    match e {
        Error::Domain(m) => Error::Domain(format!("command {i}: {m}")),
        Error::Config(m) => Error::Config(format!("command {i}: {m}")),
        Error::Schema(m) => Error::Schema(format!("command {i}: {m}")),
        Error::NotFound(m) => Error::NotFound(format!("command {i}: {m}")),
        Error::Composition(m) => Error::Composition(format!("command {i}: {m}")),
        Error::Parse(m) => Error::Parse(format!("command {i}: {m}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synthetic_snapshot, SynthConfig};

    fn snap() -> Arc<DatasetSnapshot> {
        Arc::new(synthetic_snapshot(&SynthConfig { n: 800, seed: 4, ..SynthConfig::default() }))
    }

    fn lower_half(s: &DatasetSnapshot) -> serde_json::Value {
        let b = s.bbox();
        let mid = (b.min_y + b.max_y) / 2.0;
        serde_json::json!([[b.min_x - 1.0, b.min_y - 1.0], [b.max_x + 1.0, b.min_y - 1.0], [b.max_x + 1.0, mid], [b.min_x - 1.0, mid]])
    }

    #[test]
    fn empty_script_writes_nothing() {
        let out = run_script(snap(), &QueryScript::from_json("[]").unwrap()).unwrap();
        assert!(out.files.is_empty());
        let out = run_script(snap(), &QueryScript::from_json(r#"{"commands": []}"#).unwrap()).unwrap();
        assert!(out.files.is_empty());
    }

    #[test]
    fn labels_link_and_export() {
        let s = snap();
        let script = serde_json::json!([
            {"op": "create", "label": "south", "prism": {"polygon": lower_half(&s)}, "kind": "origin"},
            {"op": "create", "label": "any"},
            {"op": "link", "origin": "south", "destination": "any", "label": "trip"},
            {"op": "recur", "target": "all", "pattern": {"weekdays": ["sat", "sun"]}},
            {"op": "export", "name": "out", "aggregates": [
                {"aggregate": "timeseries", "name": "ts", "query": "trip"},
                {"aggregate": "histogram", "name": "fares", "query": "all", "attribute": "fare", "bins": 8}
            ]}
        ]);
        let script: QueryScript = serde_json::from_value(script).unwrap();
        let out = run_script(s.clone(), &script).unwrap();
        let names: Vec<_> = out.files.keys().cloned().collect();
        assert_eq!(
            names,
            ["out/counts.json", "out/fares.csv", "out/fares.json", "out/stats.json", "out/ts.csv", "out/ts.json"]
        );
        let counts: BTreeMap<String, usize> = serde_json::from_slice(&out.files["out/counts.json"]).unwrap();
        assert_eq!(counts["all"], 800);
        assert_eq!(counts.len(), 2);
        assert!(counts["trip"] > 0 && counts["trip"] < 400);
        // replay determinism
        assert_eq!(run_script(s, &script).unwrap(), out);
    }

    #[test]
    fn failed_command_leaves_session_unchanged() {
        let mut session = Session::new(snap());
        let created = session.apply(&Command::Create {
            label: Some("a".into()),
            prism: PrismFragment::default(),
            kind: None,
            recurrence: None,
        });
        assert_eq!(created.unwrap().revision, 1);
        let err = session.apply(&Command::Link {
            origin: QueryRef::Label("a".into()),
            destination: QueryRef::Label("missing".into()),
            label: None,
        });
        assert!(matches!(err, Err(Error::NotFound(_))));
        assert_eq!(session.revision(), 1);
        assert_eq!(session.manager().len(), 1);
        let export = session.apply(&Command::Export { name: "x".into(), aggregates: vec![] }).unwrap();
        assert_eq!(export.revision, 1);
        assert!(session.apply(&Command::Export { name: "../x".into(), aggregates: vec![] }).is_err());
    }

    #[test]
    fn merge_many_and_demerge() {
        let mut session = Session::new(snap());
        for l in ["a", "b", "c"] {
            session
                .apply(&Command::Create { label: Some(l.into()), prism: PrismFragment::default(), kind: None, recurrence: None })
                .unwrap();
        }
        let out = session
            .apply(&Command::Merge {
                queries: ["a", "b", "c"].map(|l| QueryRef::Label(l.into())).to_vec(),
                label: Some("m".into()),
            })
            .unwrap();
        assert_eq!(out.retired, vec![QueryId(1), QueryId(2), QueryId(3)]);
        assert_eq!(session.manager().len(), 1);
        let out = session.apply(&Command::Demerge { query: QueryRef::Label("m".into()) }).unwrap();
        assert_eq!(out.queries.len(), 3);
        assert_eq!(session.resolve(&QueryRef::Label("b".into())).unwrap(), QueryId(2));
    }

    #[test]
    fn unknown_fields_and_ops_are_rejected() {
        assert!(QueryScript::from_json(r#"[{"op": "explode"}]"#).is_err());
        assert!(QueryScript::from_json(r#"[{"op": "delete", "query": 1, "extra": 2}]"#).is_err());
        assert!(QueryScript::from_json(r#"{"comands": []}"#).is_err());
    }

    #[test]
    fn lonlat_polygons_are_projected() {
        let frag: PrismFragment =
            serde_json::from_str(r#"{"polygon_lonlat": [[-74.0, 40.7], [-73.9, 40.7], [-73.9, 40.8]]}"#).unwrap();
        let p = frag.footprint().unwrap().unwrap();
        let first = project(GeoPoint::new(-74.0, 40.7).unwrap()).unwrap();
        assert_eq!(p.vertices()[0], first);
    }
}
