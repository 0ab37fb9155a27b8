//! Naive per-trip reference evaluator and random session generator, shared
//! by the equivalence tests and the acceptance suite.

#![allow(dead_code)]

use chrono::{Datelike, TimeZone, Timelike};
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::json;

use odcube_core::engine::{AttributeConstraint, BrushSpec};
use odcube_core::geo::PlanePoint;
use odcube_core::index::Endpoint;
use odcube_core::manager::{QuerySpec, QueryVariant};
use odcube_core::script::Command;
use odcube_core::{Attribute, DatasetSnapshot, EventKind, Prism, RecurrencePattern, ResultMask};

#[derive(Debug, Clone, Copy)]
pub struct Trip {
    pub pickup: PlanePoint,
    pub dropoff: PlanePoint,
    pub pickup_t: i64,
    pub dropoff_t: i64,
    pub attrs: [f64; 4],
}

pub fn trips(s: &DatasetSnapshot) -> Vec<Trip> {
    let cols: Vec<&[f64]> = Attribute::ALL.iter().map(|&a| s.attribute(a)).collect();
    (0..s.len())
        .map(|i| Trip {
            pickup: s.positions(Endpoint::Pickup)[i],
            dropoff: s.positions(Endpoint::Dropoff)[i],
            pickup_t: s.times(Endpoint::Pickup)[i],
            dropoff_t: s.times(Endpoint::Dropoff)[i],
            attrs: [cols[0][i], cols[1][i], cols[2][i], cols[3][i]],
        })
        .collect()
}

/// Even-odd rule: count edges crossed by a ray towards +x.
pub fn inside(p: PlanePoint, ring: &[PlanePoint]) -> bool {
    let mut crossings = 0;
    for k in 0..ring.len() {
        let a = ring[k];
        let b = ring[(k + 1) % ring.len()];
        let straddles = (a.y <= p.y && p.y < b.y) || (b.y <= p.y && p.y < a.y);
        if straddles {
            let x_at = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_at {
                crossings += 1;
            }
        }
    }
    crossings % 2 == 1
}

pub fn in_prism(p: PlanePoint, t: i64, prism: &Prism) -> bool {
    let iv = prism.interval;
    iv.start().seconds() <= t && t < iv.end().seconds() && inside(p, prism.footprint.vertices())
}

pub fn recurs(t: i64, pattern: &RecurrencePattern) -> bool {
    let local = pattern.timezone().timestamp_opt(t, 0).unwrap().naive_local();
    let day = local.weekday().to_string().to_lowercase();
    let names = pattern.weekdays().names();
    let day_ok = names.is_empty() || names.iter().any(|n| day.starts_with(n));
    let minute = (local.hour() * 60 + local.minute()) as u16;
    let hour_ok = pattern.hour_range().is_none_or(|h| h.start_minute() <= minute && minute < h.end_minute());
    day_ok && hour_ok
}

fn kind_prism(trip: &Trip, prism: &Prism, kind: EventKind) -> bool {
    let o = in_prism(trip.pickup, trip.pickup_t, prism);
    let d = in_prism(trip.dropoff, trip.dropoff_t, prism);
    match kind {
        EventKind::Origin => o,
        EventKind::Destination => d,
        EventKind::Either => o || d,
    }
}

fn kind_recurs(trip: &Trip, pattern: &RecurrencePattern, kind: EventKind) -> bool {
    match kind {
        EventKind::Origin => recurs(trip.pickup_t, pattern),
        EventKind::Destination => recurs(trip.dropoff_t, pattern),
        EventKind::Either => recurs(trip.pickup_t, pattern) || recurs(trip.dropoff_t, pattern),
    }
}

/// Selection of one spec before global constraints. `outer` is the
/// recurrence of an enclosing merged query.
pub fn selects(trip: &Trip, spec: &QuerySpec, outer: Option<&RecurrencePattern>) -> bool {
    let patterns: Vec<&RecurrencePattern> = spec.recurrence.iter().chain(outer).collect();
    match &spec.variant {
        QueryVariant::Atomic { prism, kind } => {
            kind_prism(trip, prism, *kind) && patterns.iter().all(|p| kind_recurs(trip, p, *kind))
        }
        QueryVariant::Directional { origin, destination } => {
            in_prism(trip.pickup, trip.pickup_t, origin)
                && in_prism(trip.dropoff, trip.dropoff_t, destination)
                && patterns.iter().all(|p| recurs(trip.pickup_t, p))
        }
        QueryVariant::Merged { members } => {
            members.iter().any(|m| selects(trip, m, spec.recurrence.as_ref()))
        }
    }
}

pub fn admits(trip: &Trip, constraints: &[AttributeConstraint]) -> bool {
    constraints.iter().all(|c| {
        let k = Attribute::ALL.iter().position(|&a| a == c.attribute).unwrap();
        let v = trip.attrs[k];
        c.min.is_none_or(|m| v >= m) && c.max.is_none_or(|m| v <= m)
    })
}

pub fn brushed(trip: &Trip, brush: &BrushSpec) -> bool {
    match (&brush.origin_volume, &brush.destination_volume) {
        (Some(o), Some(d)) => in_prism(trip.pickup, trip.pickup_t, o) && in_prism(trip.dropoff, trip.dropoff_t, d),
        (Some(o), None) => kind_prism(trip, o, brush.role.unwrap_or(EventKind::Origin)),
        (None, Some(d)) => kind_prism(trip, d, brush.role.unwrap_or(EventKind::Destination)),
        (None, None) => false,
    }
}

/// 0 filtered out, 1 visible, 2 highlighted, 3 brushed.
pub fn status(global: bool, any_query: bool, brush: bool) -> u8 {
    if !global {
        0
    } else if brush {
        3
    } else if any_query {
        2
    } else {
        1
    }
}

pub fn bits(mask: &ResultMask) -> Vec<bool> {
    (0..mask.len()).map(|i| mask.get(i)).collect()
}

pub fn first_mismatch(engine: &ResultMask, oracle: &[bool]) -> Option<usize> {
    if engine.len() != oracle.len() {
        return Some(usize::MAX);
    }
    (0..oracle.len()).find(|&i| engine.get(i) != oracle[i])
}

/// Random star-shaped ring inside the dataset extent; sometimes shuffled
/// into a self-intersecting one.
pub fn random_ring<R: Rng>(rng: &mut R, s: &DatasetSnapshot) -> Vec<[f64; 2]> {
    let b = s.bbox();
    let (w, h) = (b.width(), b.height());
    let cx = rng.gen_range(b.min_x..b.max_x);
    let cy = rng.gen_range(b.min_y..b.max_y);
    let k = rng.gen_range(3..9);
    let mut angles: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    if rng.gen_bool(0.85) {
        angles.sort_by(f64::total_cmp);
    }
    let scale = rng.gen_range(0.05..0.7);
    angles
        .into_iter()
        .map(|a| {
            let r = rng.gen_range(0.3..1.0) * scale;
            [cx + r * w * a.cos(), cy + r * h * a.sin()]
        })
        .collect()
}

pub fn random_interval<R: Rng>(rng: &mut R, s: &DatasetSnapshot) -> [i64; 2] {
    let iv = s.interval();
    let (lo, hi) = (iv.start().seconds(), iv.end().seconds());
    match rng.gen_range(0..10) {
        0 => [lo, hi],
        1 => {
            let t = rng.gen_range(lo..hi);
            [t, t]
        }
        _ => {
            let a = rng.gen_range(lo..hi);
            let b = rng.gen_range(lo..hi);
            [a.min(b), a.max(b) + 1]
        }
    }
}

pub fn random_kind<R: Rng>(rng: &mut R) -> &'static str {
    ["origin", "destination", "either"][rng.gen_range(0..3)]
}

pub fn random_pattern<R: Rng>(rng: &mut R) -> serde_json::Value {
    let days: Vec<&str> = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"]
        .into_iter()
        .filter(|_| rng.gen_bool(0.4))
        .collect();
    let mut p = json!({ "weekdays": days });
    if rng.gen_bool(0.7) {
        let a = rng.gen_range(0..48u16) * 30;
        let b = rng.gen_range(a / 30 + 1..=48) * 30;
        p["hour_range"] = json!([a, b]);
    }
    p
}

pub fn random_constraints<R: Rng>(rng: &mut R) -> serde_json::Value {
    let ranges = [("duration_s", 120.0, 3600.0), ("distance", 0.2, 20.0), ("fare", 3.0, 52.5), ("passengers", 1.0, 6.0)];
    let chosen: Vec<_> = ranges.iter().filter(|_| rng.gen_bool(0.4)).collect();
    let picked: Vec<serde_json::Value> = chosen
        .into_iter()
        .map(|&(name, lo, hi)| {
            let a = rng.gen_range(lo..hi);
            let b = rng.gen_range(a..=hi);
            let mut c = json!({ "attribute": name });
            if rng.gen_bool(0.8) {
                c["min"] = json!(a);
            }
            if rng.gen_bool(0.8) {
                c["max"] = json!(b);
            }
            c
        })
        .collect();
    json!(picked)
}

fn create<R: Rng>(rng: &mut R, s: &DatasetSnapshot, label: &str) -> serde_json::Value {
    let mut prism = json!({});
    match rng.gen_range(0..4) {
        0 => prism["polygon"] = json!(random_ring(rng, s)),
        1 => prism["interval"] = json!(random_interval(rng, s)),
        _ => {
            prism["polygon"] = json!(random_ring(rng, s));
            prism["interval"] = json!(random_interval(rng, s));
        }
    }
    let mut c = json!({ "op": "create", "label": label, "prism": prism, "kind": random_kind(rng) });
    if rng.gen_bool(0.25) {
        c["recurrence"] = random_pattern(rng);
    }
    c
}

/// A random command sequence: a few atomic queries, then links, merges,
/// recurrences, edits and constraints. Commands may fail (for example
/// linking a directional query); callers skip failures.
pub fn random_session<R: Rng>(rng: &mut R, s: &DatasetSnapshot) -> Vec<Command> {
    let mut labels: Vec<String> = Vec::new();
    let mut cmds = Vec::new();
    for i in 0..rng.gen_range(2..5) {
        let l = format!("q{i}");
        cmds.push(create(rng, s, &l));
        labels.push(l);
    }
    for step in 0..rng.gen_range(1..5) {
        let a = labels.choose(rng).unwrap().clone();
        let b = labels.choose(rng).unwrap().clone();
        let c = match rng.gen_range(0..7) {
            0 => {
                let l = format!("d{step}");
                labels.push(l.clone());
                json!({ "op": "link", "origin": a, "destination": b, "label": l })
            }
            1 => {
                let l = format!("m{step}");
                labels.push(l.clone());
                json!({ "op": "merge", "queries": [a, b], "label": l })
            }
            2 => {
                let target = if rng.gen_bool(0.3) { json!("all") } else { json!(a) };
                let pattern = if rng.gen_bool(0.15) { json!(null) } else { random_pattern(rng) };
                json!({ "op": "recur", "target": target, "pattern": pattern })
            }
            3 => json!({ "op": "constrain", "constraints": random_constraints(rng) }),
            4 => json!({ "op": "update", "query": a, "kind": random_kind(rng) }),
            5 => json!({ "op": "update", "query": a, "prism": { "polygon": random_ring(rng, s) } }),
            _ => json!({ "op": "demerge", "query": a }),
        };
        cmds.push(c);
    }
    cmds.into_iter().map(|c| serde_json::from_value(c).expect("generated command parses")).collect()
}

pub fn random_prism<R: Rng>(rng: &mut R, s: &DatasetSnapshot) -> Prism {
    serde_json::from_value(json!({ "polygon": random_ring(rng, s), "interval": random_interval(rng, s) })).unwrap()
}

pub fn random_brush<R: Rng>(rng: &mut R, s: &DatasetSnapshot) -> BrushSpec {
    let role = [None, Some(EventKind::Origin), Some(EventKind::Destination), Some(EventKind::Either)][rng.gen_range(0..4)];
    match rng.gen_range(0..3) {
        0 => BrushSpec::new(Some(random_prism(rng, s)), None, role).unwrap(),
        1 => BrushSpec::new(None, Some(random_prism(rng, s)), role).unwrap(),
        _ => BrushSpec::od(random_prism(rng, s), random_prism(rng, s)),
    }
}
