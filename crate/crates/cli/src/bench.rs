//! Latency harness over the same evaluation paths the service uses.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use odcube_core::aggregate::{granularity_for, time_series, Measure};
use odcube_core::engine::eval_prism;
use odcube_core::manager::{eval_spec, QueryId, QuerySpec, QueryVariant};
use odcube_core::recurrence::PatternSpec;
use odcube_core::stats::compute_stats;
use odcube_core::{DatasetSnapshot, Error, EventKind, PlanePoint, Polygon, Prism, ResultMask, Result, TimeInterval, TimeStamp};

pub const REPORT_SCHEMA: &str = "odcube-bench/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpClass {
    PrismEval,
    Directional,
    Recurrence,
    Stats,
    Timeseries,
    /// Evaluation, stats and one time series, as after a query edit.
    Pipeline,
}

impl OpClass {
    pub const ALL: [OpClass; 6] =
        [OpClass::PrismEval, OpClass::Directional, OpClass::Recurrence, OpClass::Stats, OpClass::Timeseries, OpClass::Pipeline];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workload {
    #[serde(default)]
    pub seed: u64,
    /// Distinct random prisms cycled through by the iterations.
    #[serde(default = "default_cases")]
    pub cases: usize,
    /// Prism footprint radius relative to the dataset extent.
    #[serde(default = "default_radius")]
    pub radius_fraction: f64,
    #[serde(default = "default_interval")]
    pub interval_fraction: f64,
    #[serde(default = "default_pattern")]
    pub recurrence: PatternSpec,
    #[serde(default = "default_classes")]
    pub classes: Vec<OpClass>,
}

fn default_cases() -> usize {
    16
}
fn default_radius() -> f64 {
    0.25
}
fn default_interval() -> f64 {
    0.6
}
fn default_pattern() -> PatternSpec {
    PatternSpec {
        weekdays: ["mon", "tue", "wed", "thu", "fri"].map(String::from).to_vec(),
        hour_range: Some([17 * 60, 20 * 60]),
        timezone: None,
    }
}
fn default_classes() -> Vec<OpClass> {
    OpClass::ALL.to_vec()
}

impl Default for Workload {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults parse")
    }
}

impl Workload {
    pub fn from_json(s: &str) -> Result<Self> {
        let w: Workload = serde_json::from_str(s).map_err(|e| Error::schema(format!("workload: {e}")))?;
        if w.cases == 0 {
            return Err(Error::domain("workload needs at least one case"));
        }
        if !(w.radius_fraction > 0.0 && w.radius_fraction <= 1.0) || !(w.interval_fraction > 0.0 && w.interval_fraction <= 1.0) {
            return Err(Error::domain("radius_fraction and interval_fraction must lie in (0, 1]"));
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: OpClass,
    pub samples: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub mean_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema: String,
    pub trips: usize,
    pub repeat: usize,
    pub warmup: usize,
    pub workload: Workload,
    pub results: Vec<ClassReport>,
}

/// Nearest-rank percentile of sorted samples.
pub fn percentile(sorted: &[Duration], p: f64) -> Duration {
    assert!(!sorted.is_empty(), "percentile of no samples");
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn summarize(class: OpClass, mut samples: Vec<Duration>) -> ClassReport {
    samples.sort();
    let total: Duration = samples.iter().sum();
    ClassReport {
        class,
        samples: samples.len(),
        p50_ms: ms(percentile(&samples, 50.0)),
        p95_ms: ms(percentile(&samples, 95.0)),
        mean_ms: ms(total) / samples.len() as f64,
        max_ms: ms(*samples.last().expect("non-empty")),
    }
}

/// Octagon around a random center, interval a random window.
fn random_prism(s: &DatasetSnapshot, w: &Workload, rng: &mut impl Rng) -> Result<Prism> {
    let b = s.bbox();
    let r = w.radius_fraction * b.width().max(b.height()) / 2.0;
    let (cx, cy) = (rng.gen_range(b.min_x..=b.max_x), rng.gen_range(b.min_y..=b.max_y));
    let ring = (0..8)
        .map(|k| {
            let a = k as f64 * std::f64::consts::TAU / 8.0;
            PlanePoint::new(cx + r * a.cos(), cy + r * a.sin())
        })
        .collect();
    let iv = s.interval();
    let len = ((iv.len_seconds() as f64 * w.interval_fraction) as i64).max(1);
    let t0 = iv.start().seconds() + rng.gen_range(0..=(iv.len_seconds() - len).max(0));
    Ok(Prism::new(Polygon::new(ring)?, TimeInterval::new(TimeStamp::new(t0)?, TimeStamp::new(t0 + len)?)?))
}

fn spec(variant: QueryVariant, recurrence: Option<odcube_core::RecurrencePattern>) -> QuerySpec {
    QuerySpec { id: QueryId(0), variant, recurrence, color: 0, visible: true }
}

/// Runs `warmup + repeat` iterations per class; only the last `repeat`
/// are reported.
pub fn run(s: &DatasetSnapshot, w: &Workload, repeat: usize, warmup: usize) -> Result<BenchReport> {
    if repeat == 0 {
        return Err(Error::domain("repeat must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(w.seed);
    let prisms = (0..w.cases + 1).map(|_| random_prism(s, w, &mut rng)).collect::<Result<Vec<_>>>()?;
    let pattern = w.recurrence.resolve(s.timezone())?;
    let masks: Vec<ResultMask> = prisms.iter().map(|p| eval_prism(s, p, EventKind::Origin)).collect();
    let span = s.interval();
    let granularity = granularity_for(span);

    let mut results = Vec::new();
    for &class in &w.classes {
        let mut samples = Vec::with_capacity(repeat);
        for i in 0..warmup + repeat {
            let c = i % w.cases;
            let t0 = Instant::now();
            // black_box keeps results from being optimized away
            match class {
                OpClass::PrismEval => {
                    std::hint::black_box(eval_prism(s, &prisms[c], EventKind::Origin));
                }
                OpClass::Directional => {
                    let v = QueryVariant::Directional { origin: prisms[c].clone(), destination: prisms[c + 1].clone() };
                    std::hint::black_box(eval_spec(s, &spec(v, None)));
                }
                OpClass::Recurrence => {
                    let v = QueryVariant::Atomic { prism: prisms[c].clone(), kind: EventKind::Origin };
                    std::hint::black_box(eval_spec(s, &spec(v, Some(pattern.clone()))));
                }
                OpClass::Stats => {
                    std::hint::black_box(compute_stats(s, &masks[c])?);
                }
                OpClass::Timeseries => {
                    std::hint::black_box(time_series(s, &masks[c], span, granularity, Measure::Count, EventKind::Origin)?);
                }
                OpClass::Pipeline => {
                    let m = eval_prism(s, &prisms[c], EventKind::Origin);
                    std::hint::black_box(compute_stats(s, &m)?);
                    std::hint::black_box(time_series(s, &m, span, granularity, Measure::Count, EventKind::Origin)?);
                }
            }
            if i >= warmup {
                samples.push(t0.elapsed());
            }
        }
        results.push(summarize(class, samples));
    }
    Ok(BenchReport { schema: REPORT_SCHEMA.to_string(), trips: s.len(), repeat, warmup, workload: w.clone(), results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use odcube_core::synth::{synthetic_snapshot, SynthConfig};

    #[test]
    fn nearest_rank() {
        let v: Vec<Duration> = (1..=20).map(Duration::from_millis).collect();
        assert_eq!(percentile(&v, 50.0), Duration::from_millis(10));
        assert_eq!(percentile(&v, 95.0), Duration::from_millis(19));
        assert_eq!(percentile(&v, 100.0), Duration::from_millis(20));
        assert_eq!(percentile(&v[..1], 95.0), Duration::from_millis(1));
    }

    #[test]
    fn workload_defaults_and_rejections() {
        let w = Workload::default();
        assert_eq!(w.classes, OpClass::ALL.to_vec());
        assert_eq!(w.cases, 16);
        assert!(Workload::from_json(r#"{"cases": 0}"#).is_err());
        assert!(Workload::from_json(r#"{"radius_fraction": 2}"#).is_err());
        assert!(matches!(Workload::from_json(r#"{"bogus": 1}"#), Err(Error::Schema(_))));
        let w = Workload::from_json(r#"{"classes": ["stats"], "seed": 4}"#).unwrap();
        assert_eq!(w.classes, vec![OpClass::Stats]);
    }

    #[test]
    fn report_counts_only_steady_state() {
        let s = synthetic_snapshot(&SynthConfig { n: 500, ..SynthConfig::default() });
        let r = run(&s, &Workload::default(), 7, 3).unwrap();
        assert_eq!(r.results.len(), OpClass::ALL.len());
        for c in &r.results {
            assert_eq!(c.samples, 7);
            assert!(c.p50_ms <= c.p95_ms && c.p95_ms <= c.max_ms);
        }
        assert!(run(&s, &Workload::default(), 0, 0).is_err());
    }
}
