//! Evaluation of prisms, recurrences, attribute constraints and brushes
//! into per-trip masks, and per-point status classification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::Endpoint;
use crate::mask::ResultMask;
use crate::prism::{EventKind, Prism};
use crate::recurrence::RecurrencePattern;
use crate::snapshot::{Attribute, DatasetSnapshot};
use crate::time::LocalClock;

fn endpoint_mask(snapshot: &DatasetSnapshot, prism: &Prism, endpoint: Endpoint) -> ResultMask {
    let mut mask = ResultMask::empty(snapshot.len());
    let pos = snapshot.positions(endpoint);
    let times = snapshot.times(endpoint);
    for id in snapshot.grid().candidates(endpoint, &prism.footprint.bbox()) {
        let i = id as usize;
        if prism.contains_raw(pos[i], times[i]) {
            mask.set(i, true);
        }
    }
    mask
}

fn endpoint_mask_scan(snapshot: &DatasetSnapshot, prism: &Prism, endpoint: Endpoint) -> ResultMask {
    let pos = snapshot.positions(endpoint);
    let times = snapshot.times(endpoint);
    ResultMask::from_fn(snapshot.len(), |i| prism.contains_raw(pos[i], times[i]))
}

fn by_kind(kind: EventKind, f: impl Fn(Endpoint) -> ResultMask) -> ResultMask {
    match kind {
        EventKind::Origin => f(Endpoint::Pickup),
        EventKind::Destination => f(Endpoint::Dropoff),
        EventKind::Either => {
            let mut m = f(Endpoint::Pickup);
            m.or_assign(&f(Endpoint::Dropoff)).expect("same snapshot");
            m
        }
    }
}

/// Trips whose `kind` event lies inside the prism, using the grid index
/// for candidates and the exact test for membership.
pub fn eval_prism(snapshot: &DatasetSnapshot, prism: &Prism, kind: EventKind) -> ResultMask {
    by_kind(kind, |ep| endpoint_mask(snapshot, prism, ep))
}

/// Same as [`eval_prism`] without the index.
pub fn eval_prism_scan(snapshot: &DatasetSnapshot, prism: &Prism, kind: EventKind) -> ResultMask {
    by_kind(kind, |ep| endpoint_mask_scan(snapshot, prism, ep))
}

/// Trips whose `kind` event time matches the pattern (`Either`: pickup or
/// dropoff matches).
pub fn eval_recurrence(snapshot: &DatasetSnapshot, pattern: &RecurrencePattern, kind: EventKind) -> ResultMask {
    if pattern.is_unrestricted() {
        return ResultMask::full(snapshot.len());
    }
    let own_clock;
    let clock = if pattern.timezone() == snapshot.timezone() {
        snapshot.clock()
    } else {
        own_clock = LocalClock::new(pattern.timezone(), snapshot.interval());
        &own_clock
    };
    by_kind(kind, |ep| {
        let times = snapshot.times(ep);
        ResultMask::from_fn(snapshot.len(), |i| pattern.matches_local(clock.local_seconds(times[i])))
    })
}

/// Inclusive `[min, max]` bound on one attribute. Either side may be open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConstraint")]
pub struct AttributeConstraint {
    pub attribute: Attribute,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Deserialize)]
struct RawConstraint {
    attribute: Attribute,
    #[serde(default)]
    min: Option<f64>,
    #[serde(default)]
    max: Option<f64>,
}

impl TryFrom<RawConstraint> for AttributeConstraint {
    type Error = Error;
    fn try_from(r: RawConstraint) -> Result<Self> {
        AttributeConstraint::new(r.attribute, r.min, r.max)
    }
}

impl AttributeConstraint {
    pub fn new(attribute: Attribute, min: Option<f64>, max: Option<f64>) -> Result<Self> {
        if min.is_some_and(f64::is_nan) || max.is_some_and(f64::is_nan) {
            return Err(Error::domain("constraint bound is NaN"));
        }
        if let (Some(lo), Some(hi)) = (min, max) {
            if lo > hi {
                return Err(Error::domain(format!("{attribute}: min {lo} > max {hi}")));
            }
        }
        Ok(AttributeConstraint { attribute, min, max })
    }

    #[inline]
    pub fn admits(&self, v: f64) -> bool {
        self.min.is_none_or(|lo| v >= lo) && self.max.is_none_or(|hi| v <= hi)
    }
}

/// Conjunction of all constraints; an empty list selects everything.
pub fn eval_attributes(snapshot: &DatasetSnapshot, constraints: &[AttributeConstraint]) -> ResultMask {
    let mut mask = ResultMask::full(snapshot.len());
    for c in constraints {
        let col = snapshot.attribute(c.attribute);
        let m = ResultMask::from_fn(snapshot.len(), |i| c.admits(col[i]));
        mask.and_assign(&m).expect("same snapshot");
    }
    mask
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineOp {
    /// Intersection of all masks.
    And,
    /// Union of all masks.
    Or,
    /// Complement of exactly one mask.
    Not,
    /// First mask minus the union of the rest.
    AndNot,
}

pub fn combine(op: CombineOp, masks: &[&ResultMask]) -> Result<ResultMask> {
    let (first, rest) = masks
        .split_first()
        .ok_or_else(|| Error::domain("combine needs at least one mask"))?;
    let mut out = (*first).clone();
    match op {
        CombineOp::And => rest.iter().try_for_each(|m| out.and_assign(m))?,
        CombineOp::Or => rest.iter().try_for_each(|m| out.or_assign(m))?,
        CombineOp::AndNot => rest.iter().try_for_each(|m| out.and_not_assign(m))?,
        CombineOp::Not => {
            if !rest.is_empty() {
                return Err(Error::domain("NOT takes exactly one mask"));
            }
            out = out.not();
        }
    }
    Ok(out)
}

/// Ephemeral pointer-driven selection. With both volumes the brush selects
/// trips from the origin volume to the destination volume; with one it
/// selects by `role`, defaulting to the slot the volume occupies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBrush")]
pub struct BrushSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_volume: Option<Prism>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub destination_volume: Option<Prism>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<EventKind>,
}

#[derive(Deserialize)]
struct RawBrush {
    #[serde(default)]
    origin_volume: Option<Prism>,
    #[serde(default)]
    destination_volume: Option<Prism>,
    #[serde(default)]
    role: Option<EventKind>,
}

impl TryFrom<RawBrush> for BrushSpec {
    type Error = Error;
    fn try_from(r: RawBrush) -> Result<Self> {
        BrushSpec::new(r.origin_volume, r.destination_volume, r.role)
    }
}

impl BrushSpec {
    pub fn new(origin_volume: Option<Prism>, destination_volume: Option<Prism>, role: Option<EventKind>) -> Result<Self> {
        if origin_volume.is_none() && destination_volume.is_none() {
            return Err(Error::domain("brush needs at least one volume"));
        }
        Ok(BrushSpec { origin_volume, destination_volume, role })
    }

    pub fn origin(p: Prism) -> Self {
        BrushSpec { origin_volume: Some(p), destination_volume: None, role: None }
    }

    pub fn destination(p: Prism) -> Self {
        BrushSpec { origin_volume: None, destination_volume: Some(p), role: None }
    }

    pub fn od(origin: Prism, destination: Prism) -> Self {
        BrushSpec { origin_volume: Some(origin), destination_volume: Some(destination), role: None }
    }
}

pub fn eval_brush(snapshot: &DatasetSnapshot, brush: &BrushSpec) -> ResultMask {
    match (&brush.origin_volume, &brush.destination_volume) {
        (Some(o), Some(d)) => {
            let mut m = eval_prism(snapshot, o, EventKind::Origin);
            m.and_assign(&eval_prism(snapshot, d, EventKind::Destination)).expect("same snapshot");
            m
        }
        (Some(o), None) => eval_prism(snapshot, o, brush.role.unwrap_or(EventKind::Origin)),
        (None, Some(d)) => eval_prism(snapshot, d, brush.role.unwrap_or(EventKind::Destination)),
        (None, None) => unreachable!("BrushSpec always holds a volume"),
    }
}

/// Render status of one point. Higher values take precedence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum PointStatus {
    FilteredOut = 0,
    Visible = 1,
    Highlighted = 2,
    Brushed = 3,
}

impl PointStatus {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(PointStatus::FilteredOut),
            1 => Some(PointStatus::Visible),
            2 => Some(PointStatus::Highlighted),
            3 => Some(PointStatus::Brushed),
            _ => None,
        }
    }
}

/// Status of `2n` points: pickups `0..n`, then dropoffs `n..2n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatusVector {
    points: Vec<PointStatus>,
}

impl StatusVector {
    pub fn trip_count(&self) -> usize {
        self.points.len() / 2
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> PointStatus {
        self.points[i]
    }

    pub fn trip(&self, i: usize) -> PointStatus {
        self.points[i]
    }

    pub fn as_slice(&self) -> &[PointStatus] {
        &self.points
    }

    pub fn count(&self, status: PointStatus) -> usize {
        self.points[..self.trip_count()].iter().filter(|&&s| s == status).count()
    }
}

pub fn classify(
    global: &ResultMask,
    query_masks: &[&ResultMask],
    brush: Option<&ResultMask>,
) -> Result<StatusVector> {
    let n = global.len();
    let mut highlighted = ResultMask::empty(n);
    for m in query_masks {
        highlighted.or_assign(m)?;
    }
    let brushed = match brush {
        Some(b) => b.clone(),
        None => ResultMask::empty(n),
    };
    if brushed.len() != n {
        return Err(Error::domain("brush mask length mismatch"));
    }
    let mut trips = vec![PointStatus::FilteredOut; n];
    for (w, ((&g, &h), &b)) in global.words().iter().zip(highlighted.words()).zip(brushed.words()).enumerate() {
        if g == 0 {
            continue;
        }
        let base = w * 64;
        for bit in 0..64.min(n - base) {
            let sel = 1u64 << bit;
            if g & sel == 0 {
                continue;
            }
            trips[base + bit] = if b & sel != 0 {
                PointStatus::Brushed
            } else if h & sel != 0 {
                PointStatus::Highlighted
            } else {
                PointStatus::Visible
            };
        }
    }
    let mut points = Vec::with_capacity(2 * n);
    points.extend_from_slice(&trips);
    points.extend_from_slice(&trips);
    Ok(StatusVector { points })
}
