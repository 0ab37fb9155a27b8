//! Coordinated-view data products: zoom-adaptive time series, attribute
//! histograms, choropleth counts and per-region time stacks.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::NeighborhoodSet;
use crate::mask::ResultMask;
use crate::prism::EventKind;
use crate::snapshot::{Attribute, DatasetSnapshot};
use crate::time::{LocalClock, TimeInterval, SECONDS_PER_DAY};

/// Bucket widths, finest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeGranularity {
    Minute,
    Min15,
    Hour,
    Hour6,
    Day,
    Week,
    Month,
}

/// Acceptable bucket counts for a series.
pub const BUCKET_BAND: (u64, u64) = (50, 600);

impl TimeGranularity {
    pub const ALL: [TimeGranularity; 7] = [
        TimeGranularity::Minute,
        TimeGranularity::Min15,
        TimeGranularity::Hour,
        TimeGranularity::Hour6,
        TimeGranularity::Day,
        TimeGranularity::Week,
        TimeGranularity::Month,
    ];

    /// Nominal length in seconds; months count as 1/12 of a Gregorian year.
    pub fn nominal_seconds(self) -> i64 {
        match self {
            TimeGranularity::Minute => 60,
            TimeGranularity::Min15 => 900,
            TimeGranularity::Hour => 3600,
            TimeGranularity::Hour6 => 6 * 3600,
            TimeGranularity::Day => SECONDS_PER_DAY,
            TimeGranularity::Week => 7 * SECONDS_PER_DAY,
            TimeGranularity::Month => 2_629_746,
        }
    }

    /// Number of nominal buckets covering `seconds`.
    pub fn bucket_count(self, seconds: i64) -> u64 {
        (seconds.max(0) as u64).div_ceil(self.nominal_seconds() as u64)
    }

    /// Start of the local civil bucket containing `local` (local seconds).
    fn floor_local(self, local: i64) -> i64 {
        match self {
            TimeGranularity::Week => {
                let day = local.div_euclid(SECONDS_PER_DAY);
                (day - (day + 3).rem_euclid(7)) * SECONDS_PER_DAY
            }
            TimeGranularity::Month => {
                let date = date_of(local.div_euclid(SECONDS_PER_DAY));
                days_of(NaiveDate::from_ymd_opt(date.year(), date.month(), 1).expect("first of month"))
                    * SECONDS_PER_DAY
            }
            g => {
                let w = g.nominal_seconds();
                local.div_euclid(w) * w
            }
        }
    }

    /// The bucket start following the aligned local value `key`.
    fn next_local(self, key: i64) -> i64 {
        match self {
            TimeGranularity::Month => {
                let d = date_of(key.div_euclid(SECONDS_PER_DAY));
                let (y, m) = if d.month() == 12 { (d.year() + 1, 1) } else { (d.year(), d.month() + 1) };
                days_of(NaiveDate::from_ymd_opt(y, m, 1).expect("first of month")) * SECONDS_PER_DAY
            }
            g => key + g.nominal_seconds(),
        }
    }
}

impl fmt::Display for TimeGranularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string"))
    }
}

impl FromStr for TimeGranularity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::domain(format!("unknown granularity {s:?}")))
    }
}

fn epoch_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("epoch")
}

fn date_of(days: i64) -> NaiveDate {
    epoch_date() + chrono::Duration::days(days)
}

fn days_of(d: NaiveDate) -> i64 {
    (d - epoch_date()).num_days()
}

/// Finest granularity whose bucket count over `span` lies within
/// [`BUCKET_BAND`]; if none does, the one whose count is nearest the band.
pub fn granularity_for(span: TimeInterval) -> TimeGranularity {
    let len = span.len_seconds();
    let (lo, hi) = BUCKET_BAND;
    if let Some(g) = TimeGranularity::ALL.into_iter().find(|g| (lo..=hi).contains(&g.bucket_count(len))) {
        return g;
    }
    TimeGranularity::ALL
        .into_iter()
        .min_by_key(|g| {
            let c = g.bucket_count(len);
            if c < lo { lo - c } else { c.saturating_sub(hi) }
        })
        .expect("non-empty")
}

/// Contiguous bucket boundaries aligned to local civil time. Returns
/// `m + 1` instants for `m` buckets; bucket `i` is `[b[i], b[i+1])`.
/// A bucket is a maximal run of instants sharing the same floored local
/// time, so a repeated local hour (DST fall-back) forms one longer bucket
/// at Hour granularity.
pub fn bucket_boundaries(tz: Tz, granularity: TimeGranularity, span: TimeInterval) -> Vec<i64> {
    let (start, end) = (span.start().seconds(), span.end().seconds());
    if start >= end {
        return Vec::new();
    }
    let margin = granularity.nominal_seconds() * 2 + 3 * SECONDS_PER_DAY;
    let window = TimeInterval::from_seconds((start - margin).max(0), end + margin)
        .unwrap_or_else(|_| TimeInterval::from_seconds(start, end).expect("valid span"));
    let clock = LocalClock::new(tz, window);
    let key = |t: i64| granularity.floor_local(clock.local_seconds(t));

    let mut candidates = Vec::new();
    for seg in clock.segments() {
        let off = seg.offset as i64;
        candidates.push(seg.start);
        let mut k = granularity.next_local(granularity.floor_local(seg.start + off));
        while k - off < seg.end {
            candidates.push(k - off);
            k = granularity.next_local(k);
        }
    }
    candidates.sort_unstable();
    candidates.dedup();
    let runs: Vec<i64> = candidates.into_iter().filter(|&c| key(c) != key(c - 1)).collect();

    let first = runs.partition_point(|&b| b <= start);
    let mut out = Vec::new();
    out.push(if first == 0 { start } else { runs[first - 1] });
    let mut i = first;
    while i < runs.len() && runs[i] < end {
        out.push(runs[i]);
        i += 1;
    }
    out.push(runs.get(i).copied().unwrap_or(end));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Count,
    Mean(Attribute),
}

impl FromStr for Measure {
    type Err = Error;
    /// `count` or `mean:<attribute>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "count" => Ok(Measure::Count),
            Some(("mean", attr)) => Ok(Measure::Mean(attr.parse()?)),
            _ => Err(Error::domain(format!("unknown measure {s:?}; use count or mean:<attribute>"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub bucket_start: i64,
    /// `None` for a mean over an empty bucket.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSeries {
    pub granularity: TimeGranularity,
    pub measure: Measure,
    pub kind: EventKind,
    /// Span actually aggregated, after clipping to the dataset interval.
    pub span: Option<TimeInterval>,
    pub buckets: Vec<SeriesPoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl AggregateSeries {
    pub fn values(&self) -> Vec<f64> {
        self.buckets.iter().map(|b| b.value.unwrap_or(0.0)).collect()
    }

    pub fn total(&self) -> f64 {
        self.buckets.iter().filter_map(|b| b.value).sum()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record(["bucket_start", "value"]).map_err(err)?;
        for b in &self.buckets {
            let v = b.value.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([b.bucket_start.to_string(), v]).map_err(err)?;
        }
        finish_csv(w)
    }
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

fn check_mask(snapshot: &DatasetSnapshot, mask: &ResultMask) -> Result<()> {
    if mask.len() != snapshot.len() {
        return Err(Error::domain(format!("mask length {} != dataset size {}", mask.len(), snapshot.len())));
    }
    Ok(())
}

/// Buckets the selected trips by the event time `kind` designates
/// (`Either` uses the pickup, so each trip counts once).
pub fn time_series(
    snapshot: &DatasetSnapshot,
    mask: &ResultMask,
    span: TimeInterval,
    granularity: TimeGranularity,
    measure: Measure,
    kind: EventKind,
) -> Result<AggregateSeries> {
    check_mask(snapshot, mask)?;
    let mut warnings = Vec::new();
    let clipped = span.intersect(&snapshot.interval());
    if clipped != Some(span) {
        let msg = format!("span {}..{} clipped to the dataset interval", span.start(), span.end());
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let Some(span) = clipped else {
        return Ok(AggregateSeries { granularity, measure, kind, span: None, buckets: Vec::new(), warnings });
    };
    let bounds = bucket_boundaries(snapshot.timezone(), granularity, span);
    let m = bounds.len() - 1;
    let mut counts = vec![0u64; m];
    let mut sums = vec![0.0f64; m];
    let times = snapshot.canonical_times(kind);
    let values = match measure {
        Measure::Mean(a) => Some(snapshot.attribute(a)),
        Measure::Count => None,
    };
    for i in mask.iter_ones() {
        let t = times[i];
        if !span.contains_seconds(t) {
            continue;
        }
        let b = bounds.partition_point(|&x| x <= t) - 1;
        counts[b] += 1;
        if let Some(v) = values {
            sums[b] += v[i];
        }
    }
    let buckets = (0..m)
        .map(|b| SeriesPoint {
            bucket_start: bounds[b],
            value: match measure {
                Measure::Count => Some(counts[b] as f64),
                Measure::Mean(_) => (counts[b] > 0).then(|| sums[b] / counts[b] as f64),
            },
        })
        .collect();
    Ok(AggregateSeries { granularity, measure, kind, span: Some(span), buckets, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub attribute: Attribute,
    pub bins: Vec<HistogramBin>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record(["lo", "hi", "count"]).map_err(err)?;
        for b in &self.bins {
            w.write_record([b.lo.to_string(), b.hi.to_string(), b.count.to_string()]).map_err(err)?;
        }
        finish_csv(w)
    }
}

/// Equal-width bins over `[min, max]` of the selected values; the last
/// bin is closed on the right.
pub fn histogram(snapshot: &DatasetSnapshot, mask: &ResultMask, attribute: Attribute, bin_count: usize) -> Result<Histogram> {
    check_mask(snapshot, mask)?;
    if bin_count == 0 {
        return Err(Error::domain("histogram needs at least one bin"));
    }
    let col = snapshot.attribute(attribute);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in mask.iter_ones() {
        lo = lo.min(col[i]);
        hi = hi.max(col[i]);
    }
    if lo > hi {
        return Ok(Histogram { attribute, bins: Vec::new() });
    }
    let width = (hi - lo) / bin_count as f64;
    let mut counts = vec![0u64; bin_count];
    for i in mask.iter_ones() {
        let b = if width > 0.0 { ((col[i] - lo) / width) as usize } else { 0 };
        counts[b.min(bin_count - 1)] += 1;
    }
    let bins = counts
        .into_iter()
        .enumerate()
        .map(|(b, count)| HistogramBin {
            lo: lo + width * b as f64,
            hi: if b + 1 == bin_count { hi } else { lo + width * (b + 1) as f64 },
            count,
        })
        .collect();
    Ok(Histogram { attribute, bins })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionCount {
    pub name: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoroplethTable {
    pub kind: EventKind,
    pub regions: Vec<RegionCount>,
    pub unassigned: u64,
}

impl ChoroplethTable {
    pub fn count(&self, name: &str) -> Option<u64> {
        self.regions.iter().find(|r| r.name == name).map(|r| r.count)
    }

    pub fn total(&self) -> u64 {
        self.regions.iter().map(|r| r.count).sum::<u64>() + self.unassigned
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record(["region", "count"]).map_err(err)?;
        for r in &self.regions {
            w.write_record([r.name.clone(), r.count.to_string()]).map_err(err)?;
        }
        w.write_record(["(unassigned)".to_string(), self.unassigned.to_string()]).map_err(err)?;
        finish_csv(w)
    }
}

/// Counts each selected trip once, in the first region (in set order)
/// containing the event `kind` designates (`Either` uses the pickup).
pub fn choropleth(
    snapshot: &DatasetSnapshot,
    mask: &ResultMask,
    neighborhoods: &NeighborhoodSet,
    kind: EventKind,
) -> Result<ChoroplethTable> {
    check_mask(snapshot, mask)?;
    let pos = snapshot.canonical_positions(kind);
    let mut counts = vec![0u64; neighborhoods.len()];
    let mut unassigned = 0u64;
    for i in mask.iter_ones() {
        match neighborhoods.assign(pos[i]) {
            Some(r) => counts[r] += 1,
            None => unassigned += 1,
        }
    }
    let regions = neighborhoods
        .regions()
        .iter()
        .zip(counts)
        .map(|(r, count)| RegionCount { name: r.name.clone(), count })
        .collect();
    Ok(ChoroplethTable { kind, regions, unassigned })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionStack {
    pub region: String,
    pub series: AggregateSeries,
}

/// Time series of the trips [`choropleth`] assigns to `region`, at the
/// granularity [`granularity_for`] picks for `span`.
pub fn choropleth_stack(
    snapshot: &DatasetSnapshot,
    mask: &ResultMask,
    neighborhoods: &NeighborhoodSet,
    region: &str,
    span: TimeInterval,
    kind: EventKind,
) -> Result<RegionStack> {
    check_mask(snapshot, mask)?;
    let r = neighborhoods
        .position(region)
        .ok_or_else(|| Error::not_found(format!("neighborhood {region:?}")))?;
    let pos = snapshot.canonical_positions(kind);
    let mut in_region = ResultMask::empty(snapshot.len());
    for i in mask.iter_ones() {
        if neighborhoods.assign(pos[i]) == Some(r) {
            in_region.set(i, true);
        }
    }
    let series = time_series(snapshot, &in_region, span, granularity_for(span), Measure::Count, kind)?;
    Ok(RegionStack { region: region.to_string(), series })
}
