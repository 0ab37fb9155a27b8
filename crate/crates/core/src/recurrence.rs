//! Civil-time recurrence patterns ("every Monday", "daily 18:00-24:00")
//! and their decomposition of an interval into concrete slices.

use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::{
    minute_of_day, offset_segments, parse_timezone, utc_offset, weekday_index, TimeInterval,
    TimeStamp, SECONDS_PER_DAY,
};

pub const MINUTES_PER_DAY: u16 = 1440;

const WEEKDAY_NAMES: [&str; 7] = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"];

/// Set of weekdays as a bitmask, bit 0 = Monday. Empty means every day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct WeekdaySet(u8);

impl WeekdaySet {
    pub const ALL: WeekdaySet = WeekdaySet(0);

    /// `days` are indices with Monday = 0.
    pub fn from_indices(days: impl IntoIterator<Item = u8>) -> Result<Self> {
        let mut bits = 0u8;
        for d in days {
            if d > 6 {
                return Err(Error::domain(format!("weekday index {d} out of range")));
            }
            bits |= 1 << d;
        }
        Ok(WeekdaySet(bits))
    }

    pub fn parse_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| {
                let lower = n.as_ref().to_ascii_lowercase();
                WEEKDAY_NAMES
                    .iter()
                    .position(|w| lower.starts_with(w))
                    .map(|p| p as u8)
                    .ok_or_else(|| Error::domain(format!("unknown weekday {:?}", n.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        WeekdaySet::from_indices(idx)
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    #[inline]
    pub fn admits(&self, weekday: u8) -> bool {
        self.0 == 0 || self.0 & (1 << weekday) != 0
    }

    pub fn names(&self) -> Vec<&'static str> {
        (0..7).filter(|d| self.0 & (1 << d) != 0).map(|d| WEEKDAY_NAMES[d]).collect()
    }
}

/// Minute-of-day window `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u16; 2]", into = "[u16; 2]")]
pub struct HourRange {
    start: u16,
    end: u16,
}

impl HourRange {
    pub fn new(start_minute: u16, end_minute: u16) -> Result<Self> {
        if start_minute >= end_minute || end_minute > MINUTES_PER_DAY {
            return Err(Error::domain(format!(
                "hour range [{start_minute}, {end_minute}) must satisfy 0 <= start < end <= 1440"
            )));
        }
        Ok(HourRange { start: start_minute, end: end_minute })
    }

    pub fn hours(start_hour: u16, end_hour: u16) -> Result<Self> {
        HourRange::new(start_hour * 60, end_hour * 60)
    }

    pub fn start_minute(&self) -> u16 {
        self.start
    }

    pub fn end_minute(&self) -> u16 {
        self.end
    }

    #[inline]
    pub fn contains(&self, minute: u16) -> bool {
        minute >= self.start && minute < self.end
    }
}

impl TryFrom<[u16; 2]> for HourRange {
    type Error = Error;
    fn try_from(v: [u16; 2]) -> Result<Self> {
        HourRange::new(v[0], v[1])
    }
}

impl From<HourRange> for [u16; 2] {
    fn from(h: HourRange) -> Self {
        [h.start, h.end]
    }
}

/// A periodic civil-time selection evaluated in a fixed IANA zone.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "PatternSpec", into = "PatternSpec")]
pub struct RecurrencePattern {
    weekdays: WeekdaySet,
    hour_range: Option<HourRange>,
    timezone: Tz,
}

impl RecurrencePattern {
    pub fn new(weekdays: WeekdaySet, hour_range: Option<HourRange>, timezone: Tz) -> Self {
        RecurrencePattern { weekdays, hour_range, timezone }
    }

    /// Matches everything.
    pub fn unrestricted(timezone: Tz) -> Self {
        RecurrencePattern::new(WeekdaySet::ALL, None, timezone)
    }

    pub fn weekdays(&self) -> WeekdaySet {
        self.weekdays
    }

    pub fn hour_range(&self) -> Option<HourRange> {
        self.hour_range
    }

    pub fn timezone(&self) -> Tz {
        self.timezone
    }

    pub fn is_unrestricted(&self) -> bool {
        self.weekdays.is_empty() && self.hour_range.is_none()
    }

    /// Evaluates the pattern on a local civil-clock value.
    #[inline]
    pub fn matches_local(&self, local_seconds: i64) -> bool {
        self.weekdays.admits(weekday_index(local_seconds))
            && self
                .hour_range
                .is_none_or(|h| h.contains(minute_of_day(local_seconds)))
    }

    pub fn matches(&self, t: TimeStamp) -> bool {
        let s = t.seconds();
        self.matches_local(s + utc_offset(self.timezone, s) as i64)
    }

    /// Disjoint ascending sub-intervals of `interval` whose instants match.
    pub fn slices(&self, interval: TimeInterval) -> Vec<TimeInterval> {
        if interval.is_empty() {
            return Vec::new();
        }
        if self.is_unrestricted() {
            return vec![interval];
        }
        let (from, to) = (interval.start().seconds(), interval.end().seconds());
        let mut marks_of_day = vec![0i64];
        if let Some(h) = self.hour_range {
            marks_of_day.push(h.start as i64 * 60);
            if h.end < MINUTES_PER_DAY {
                marks_of_day.push(h.end as i64 * 60);
            }
        }
        // Within one offset segment membership only changes at local
        // midnight or at the window edges.
        let mut bounds = vec![from, to];
        for seg in offset_segments(self.timezone, from, to) {
            bounds.push(seg.start);
            let off = seg.offset as i64;
            let first_day = (seg.start + off).div_euclid(SECONDS_PER_DAY);
            let last_day = (seg.end - 1 + off).div_euclid(SECONDS_PER_DAY);
            for day in first_day..=last_day {
                for m in &marks_of_day {
                    let t = day * SECONDS_PER_DAY + m - off;
                    if t > seg.start && t < seg.end {
                        bounds.push(t);
                    }
                }
            }
        }
        bounds.sort_unstable();
        bounds.dedup();

        let mut out: Vec<(i64, i64)> = Vec::new();
        for w in bounds.windows(2) {
            let (a, b) = (w[0], w[1]);
            if !self.matches_local(a + utc_offset(self.timezone, a) as i64) {
                continue;
            }
            match out.last_mut() {
                Some(last) if last.1 == a => last.1 = b,
                _ => out.push((a, b)),
            }
        }
        out.into_iter()
            .map(|(a, b)| TimeInterval::from_seconds(a, b).expect("slice within interval"))
            .collect()
    }
}

/// Recurrence test on an instant.
pub fn recurrence_matches(pattern: &RecurrencePattern, t: TimeStamp) -> bool {
    pattern.matches(t)
}

/// JSON form of a pattern. The timezone may be omitted, in which case the
/// dataset zone is used via [`PatternSpec::resolve`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PatternSpec {
    #[serde(default)]
    pub weekdays: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hour_range: Option<[u16; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timezone: Option<String>,
}

impl PatternSpec {
    pub fn resolve(&self, default_tz: Tz) -> Result<RecurrencePattern> {
        let tz = match &self.timezone {
            Some(name) => parse_timezone(name)?,
            None => default_tz,
        };
        let hours = self.hour_range.map(HourRange::try_from).transpose()?;
        Ok(RecurrencePattern::new(WeekdaySet::parse_names(&self.weekdays)?, hours, tz))
    }
}

impl TryFrom<PatternSpec> for RecurrencePattern {
    type Error = Error;
    fn try_from(spec: PatternSpec) -> Result<Self> {
        if spec.timezone.is_none() {
            return Err(Error::config("recurrence pattern needs a timezone"));
        }
        spec.resolve(chrono_tz::UTC)
    }
}

impl From<RecurrencePattern> for PatternSpec {
    fn from(p: RecurrencePattern) -> Self {
        PatternSpec {
            weekdays: p.weekdays.names().into_iter().map(String::from).collect(),
            hour_range: p.hour_range.map(Into::into),
            timezone: Some(p.timezone.name().to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Datelike, TimeZone, Timelike};
    use chrono_tz::America::New_York as NY;

    fn ny(y: i32, mo: u32, d: u32, h: u32, mi: u32) -> TimeStamp {
        TimeStamp::from_local(NY, y, mo, d, h, mi, 0).unwrap()
    }

    #[test]
    fn monday_of_the_storm_week() {
        let p = RecurrencePattern::new(WeekdaySet::parse_names(&["Mon"]).unwrap(), None, NY);
        assert!(recurrence_matches(&p, ny(2012, 10, 29, 12, 0)));
        assert!(!recurrence_matches(&p, ny(2012, 10, 30, 12, 0)));
        // 2012-10-29 02:00Z is still Sunday evening in New York
        assert!(!p.matches(TimeStamp::new(1_351_476_000).unwrap()));
    }

    #[test]
    fn hour_range_is_half_open() {
        let p = RecurrencePattern::new(WeekdaySet::ALL, Some(HourRange::hours(10, 11).unwrap()), NY);
        assert!(p.matches(ny(2013, 5, 2, 10, 59)));
        assert!(!p.matches(ny(2013, 5, 2, 11, 0)));
        assert!(p.matches(ny(2013, 5, 2, 10, 0)));
        assert!(!p.matches(ny(2013, 5, 2, 9, 59)));
    }

    #[test]
    fn empty_pattern_matches_everything() {
        let p = RecurrencePattern::unrestricted(NY);
        for s in (0..2_000_000_000i64).step_by(7_777_777) {
            assert!(p.matches(TimeStamp::new(s).unwrap()));
        }
    }

    #[test]
    fn bad_hour_ranges() {
        assert!(HourRange::new(600, 600).is_err());
        assert!(HourRange::new(700, 600).is_err());
        assert!(HourRange::new(0, 1441).is_err());
        assert!(HourRange::new(0, 1440).is_ok());
    }

    #[test]
    fn dst_shifts_the_utc_window() {
        let p = RecurrencePattern::new(WeekdaySet::ALL, Some(HourRange::hours(10, 11).unwrap()), NY);
        // 10:30 local is 14:30Z in summer and 15:30Z in winter
        let summer = chrono::Utc.with_ymd_and_hms(2012, 11, 2, 14, 30, 0).unwrap().timestamp();
        let winter = chrono::Utc.with_ymd_and_hms(2012, 11, 6, 15, 30, 0).unwrap().timestamp();
        assert!(p.matches(TimeStamp::new(summer).unwrap()));
        assert!(p.matches(TimeStamp::new(winter).unwrap()));
        assert!(!p.matches(TimeStamp::new(summer + 4 * 86_400).unwrap()));
        assert!(!p.matches(TimeStamp::new(winter - 4 * 86_400).unwrap()));
    }

    #[test]
    fn unknown_timezone_in_spec() {
        let spec = PatternSpec { timezone: Some("Nowhere/Land".into()), ..Default::default() };
        assert!(matches!(spec.resolve(NY), Err(Error::Config(_))));
    }

    #[test]
    fn mondays_over_two_weeks_are_day_slices() {
        let p = RecurrencePattern::new(WeekdaySet::parse_names(&["mon"]).unwrap(), None, NY);
        let iv = TimeInterval::new(ny(2012, 10, 24, 0, 0), ny(2012, 11, 7, 0, 0)).unwrap();
        let slices = p.slices(iv);
        assert_eq!(slices.len(), 2);
        for s in &slices {
            let start = NY.timestamp_opt(s.start().seconds(), 0).unwrap();
            let end = NY.timestamp_opt(s.end().seconds(), 0).unwrap();
            assert_eq!(start.weekday(), chrono::Weekday::Mon);
            assert_eq!((start.hour(), start.minute()), (0, 0));
            assert_eq!(end.weekday(), chrono::Weekday::Tue);
            assert_eq!((end.hour(), end.minute()), (0, 0));
        }
    }

    #[test]
    fn evenings_over_one_week() {
        let p = RecurrencePattern::new(WeekdaySet::ALL, Some(HourRange::hours(18, 24).unwrap()), NY);
        let iv = TimeInterval::new(ny(2013, 5, 6, 0, 0), ny(2013, 5, 13, 0, 0)).unwrap();
        let slices = p.slices(iv);
        assert_eq!(slices.len(), 7);
        assert!(slices.iter().all(|s| s.len_seconds() == 6 * 3600));
    }

    #[test]
    fn slices_over_fall_back_keep_both_one_am_hours() {
        let p = RecurrencePattern::new(WeekdaySet::ALL, Some(HourRange::hours(1, 2).unwrap()), NY);
        let iv = TimeInterval::new(ny(2012, 11, 3, 12, 0), ny(2012, 11, 5, 12, 0)).unwrap();
        let slices = p.slices(iv);
        // Nov 4 01:00-02:00 happens twice, contiguously; Nov 5 once.
        assert_eq!(slices.len(), 2);
        assert_eq!(slices[0].len_seconds(), 2 * 3600);
        assert_eq!(slices[1].len_seconds(), 3600);
    }

    fn slice_membership(slices: &[TimeInterval], t: i64) -> bool {
        slices.iter().any(|s| s.contains_seconds(t))
    }

    proptest::proptest! {
        #[test]
        fn slices_partition_matching_instants(
            start in 1_300_000_000i64..1_400_000_000,
            len in 1i64..(40 * 86_400),
            days in proptest::collection::vec(0u8..7, 0..4),
            window in proptest::option::of((0u16..1439, 1u16..=1440)),
            probes in proptest::collection::vec(0.0f64..1.0, 64),
            zone in proptest::sample::select(vec!["America/New_York", "Europe/London", "Australia/Lord_Howe", "UTC", "Asia/Kolkata"]),
        ) {
            let tz: Tz = zone.parse().unwrap();
            let hours = window.and_then(|(a, b)| HourRange::new(a.min(b), a.max(b)).ok());
            let p = RecurrencePattern::new(WeekdaySet::from_indices(days).unwrap(), hours, tz);
            let iv = TimeInterval::from_seconds(start, start + len).unwrap();
            let slices = p.slices(iv);
            for w in slices.windows(2) {
                proptest::prop_assert!(w[0].end() < w[1].start());
            }
            for s in &slices {
                proptest::prop_assert!(iv.covers(s) && !s.is_empty());
            }
            for f in probes {
                let t = start + (f * len as f64) as i64;
                let dt = tz.timestamp_opt(t, 0).unwrap();
                let expected = p.weekdays().admits(dt.weekday().num_days_from_monday() as u8)
                    && hours.is_none_or(|h| h.contains((dt.hour() * 60 + dt.minute()) as u16));
                proptest::prop_assert_eq!(slice_membership(&slices, t), expected);
                proptest::prop_assert_eq!(p.matches(TimeStamp::new(t).unwrap()), expected);
            }
        }
    }
}
