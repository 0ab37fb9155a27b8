//! Timestamps, half-open intervals and civil-time helpers.

use std::fmt;

use chrono::{DateTime, NaiveDateTime, Offset, TimeZone};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2100-01-01T00:00:00Z.
pub const MAX_EPOCH_SECONDS: i64 = 4_102_444_800;

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Whole seconds since the Unix epoch, UTC.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(try_from = "i64", into = "i64")]
pub struct TimeStamp(i64);

impl TimeStamp {
    pub fn new(epoch_seconds: i64) -> Result<Self> {
        if !(0..MAX_EPOCH_SECONDS).contains(&epoch_seconds) {
            return Err(Error::domain(format!(
                "timestamp {epoch_seconds} outside [1970-01-01, 2100-01-01)"
            )));
        }
        Ok(TimeStamp(epoch_seconds))
    }

    pub fn seconds(self) -> i64 {
        self.0
    }

    /// Parses a civil time string in `tz` and converts it to UTC.
    /// Ambiguous local times resolve to the earlier instant.
    pub fn parse_local(s: &str, format: &str, tz: Tz) -> Result<Self> {
        let naive = NaiveDateTime::parse_from_str(s.trim(), format)
            .map_err(|e| Error::Parse(format!("cannot parse time {s:?}: {e}")))?;
        let local = tz
            .from_local_datetime(&naive)
            .earliest()
            .ok_or_else(|| Error::Parse(format!("time {s:?} does not exist in {tz}")))?;
        TimeStamp::new(local.timestamp())
    }

    /// Builds a timestamp from local civil components; test and fixture helper.
    pub fn from_local(tz: Tz, y: i32, mo: u32, d: u32, h: u32, mi: u32, s: u32) -> Result<Self> {
        let local = tz
            .with_ymd_and_hms(y, mo, d, h, mi, s)
            .earliest()
            .ok_or_else(|| Error::domain("local time does not exist"))?;
        TimeStamp::new(local.timestamp())
    }
}

impl TryFrom<i64> for TimeStamp {
    type Error = Error;
    fn try_from(v: i64) -> Result<Self> {
        TimeStamp::new(v)
    }
}

impl From<TimeStamp> for i64 {
    fn from(t: TimeStamp) -> i64 {
        t.0
    }
}

impl fmt::Display for TimeStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match DateTime::from_timestamp(self.0, 0) {
            Some(dt) => write!(f, "{}", dt.format("%Y-%m-%dT%H:%M:%SZ")),
            None => write!(f, "{}", self.0),
        }
    }
}

/// Half-open interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[TimeStamp; 2]", into = "[TimeStamp; 2]")]
pub struct TimeInterval {
    start: TimeStamp,
    end: TimeStamp,
}

impl TimeInterval {
    pub fn new(start: TimeStamp, end: TimeStamp) -> Result<Self> {
        if start > end {
            return Err(Error::domain(format!("interval start {start} after end {end}")));
        }
        Ok(TimeInterval { start, end })
    }

    pub fn from_seconds(start: i64, end: i64) -> Result<Self> {
        TimeInterval::new(TimeStamp::new(start)?, TimeStamp::new(end)?)
    }

    pub fn start(&self) -> TimeStamp {
        self.start
    }

    pub fn end(&self) -> TimeStamp {
        self.end
    }

    pub fn len_seconds(&self) -> i64 {
        self.end.0 - self.start.0
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    #[inline]
    pub fn contains(&self, t: TimeStamp) -> bool {
        self.contains_seconds(t.0)
    }

    #[inline]
    pub fn contains_seconds(&self, t: i64) -> bool {
        t >= self.start.0 && t < self.end.0
    }

    pub fn intersect(&self, other: &TimeInterval) -> Option<TimeInterval> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (start < end).then_some(TimeInterval { start, end })
    }

    pub fn covers(&self, other: &TimeInterval) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

impl TryFrom<[TimeStamp; 2]> for TimeInterval {
    type Error = Error;
    fn try_from(v: [TimeStamp; 2]) -> Result<Self> {
        TimeInterval::new(v[0], v[1])
    }
}

impl From<TimeInterval> for [TimeStamp; 2] {
    fn from(i: TimeInterval) -> Self {
        [i.start, i.end]
    }
}

pub fn parse_timezone(name: &str) -> Result<Tz> {
    name.parse::<Tz>()
        .map_err(|_| Error::config(format!("unknown timezone identifier {name:?}")))
}

/// UTC offset of `tz` at instant `t`, in seconds east of UTC.
pub fn utc_offset(tz: Tz, t: i64) -> i32 {
    let utc = DateTime::from_timestamp(t, 0)
        .expect("timestamp within chrono range")
        .naive_utc();
    tz.offset_from_utc_datetime(&utc).fix().local_minus_utc()
}

/// A maximal run of instants sharing one UTC offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OffsetSegment {
    pub start: i64,
    pub end: i64,
    pub offset: i32,
}

// Offset transitions are assumed to be more than this far apart.
const TRANSITION_PROBE_STEP: i64 = 6 * 3600;

/// Splits `[from, to)` into constant-offset segments of `tz`.
pub fn offset_segments(tz: Tz, from: i64, to: i64) -> Vec<OffsetSegment> {
    let mut out = Vec::new();
    if from >= to {
        return out;
    }
    let mut seg_start = from;
    let mut seg_offset = utc_offset(tz, from);
    let mut probe = from;
    while probe < to - 1 {
        let next = (probe + TRANSITION_PROBE_STEP).min(to - 1);
        let next_offset = utc_offset(tz, next);
        if next_offset != seg_offset {
            // offset(lo) == seg_offset, offset(hi) != seg_offset
            let (mut lo, mut hi) = (probe, next);
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if utc_offset(tz, mid) == seg_offset {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(OffsetSegment { start: seg_start, end: hi, offset: seg_offset });
            seg_start = hi;
            seg_offset = utc_offset(tz, hi);
        }
        probe = next;
    }
    out.push(OffsetSegment { start: seg_start, end: to, offset: seg_offset });
    out
}

/// Converts UTC instants to local civil seconds using a precomputed
/// segment table, falling back to a direct lookup outside it.
#[derive(Debug, Clone)]
pub struct LocalClock {
    tz: Tz,
    segments: Vec<OffsetSegment>,
}

impl LocalClock {
    pub fn new(tz: Tz, range: TimeInterval) -> Self {
        LocalClock {
            tz,
            segments: offset_segments(tz, range.start().seconds(), range.end().seconds()),
        }
    }

    pub fn timezone(&self) -> Tz {
        self.tz
    }

    pub fn segments(&self) -> &[OffsetSegment] {
        &self.segments
    }

    #[inline]
    pub fn offset(&self, t: i64) -> i32 {
        let idx = self.segments.partition_point(|s| s.end <= t);
        match self.segments.get(idx) {
            Some(s) if s.start <= t => s.offset,
            _ => utc_offset(self.tz, t),
        }
    }

    /// Seconds since the epoch of the local civil clock.
    #[inline]
    pub fn local_seconds(&self, t: i64) -> i64 {
        t + self.offset(t) as i64
    }
}

/// Day index of a local-seconds value, Monday = 0.
#[inline]
pub fn weekday_index(local_seconds: i64) -> u8 {
    // 1970-01-01 was a Thursday.
    (local_seconds.div_euclid(SECONDS_PER_DAY) + 3).rem_euclid(7) as u8
}

#[inline]
pub fn minute_of_day(local_seconds: i64) -> u16 {
    (local_seconds.rem_euclid(SECONDS_PER_DAY) / 60) as u16
}
