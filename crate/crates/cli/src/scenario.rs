//! Planted datasets with known answers, paired with the query scripts that
//! recover them.
//!
//! Background trips are rejection-sampled away from every planted region,
//! so a script's exported counts equal the construction constants exactly.

use std::collections::BTreeMap;

use chrono_tz::Tz;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use odcube_core::synth::{synthetic_records, SynthConfig};
use odcube_core::{GeoPoint, Result, TimeStamp, TripRecord};

const NY: Tz = chrono_tz::America::New_York;

/// Lon/lat rectangle used both for planting and in the script.
#[derive(Debug, Clone, Copy)]
pub struct Rect {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl Rect {
    const fn new(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Self {
        Rect { min_lon, min_lat, max_lon, max_lat }
    }

    pub fn ring(&self) -> Value {
        json!([
            [self.min_lon, self.min_lat],
            [self.max_lon, self.min_lat],
            [self.max_lon, self.max_lat],
            [self.min_lon, self.max_lat]
        ])
    }

    /// Strictly inside, keeping a margin from the edges.
    fn sample(&self, rng: &mut impl Rng) -> GeoPoint {
        let mx = (self.max_lon - self.min_lon) * 0.05;
        let my = (self.max_lat - self.min_lat) * 0.05;
        GeoPoint {
            lon: rng.gen_range(self.min_lon + mx..self.max_lon - mx),
            lat: rng.gen_range(self.min_lat + my..self.max_lat - my),
        }
    }

    /// Within the rectangle grown by `pad` degrees.
    fn near(&self, p: GeoPoint, pad: f64) -> bool {
        p.lon >= self.min_lon - pad && p.lon <= self.max_lon + pad && p.lat >= self.min_lat - pad && p.lat <= self.max_lat + pad
    }
}

pub const LOWER_MANHATTAN: Rect = Rect::new(-74.020, 40.700, -73.995, 40.725);
pub const JFK: Rect = Rect::new(-73.825, 40.635, -73.765, 40.660);
pub const LAGUARDIA: Rect = Rect::new(-73.890, 40.765, -73.860, 40.780);
pub const MIDTOWN: Rect = Rect::new(-73.995, 40.745, -73.970, 40.765);
pub const EAST_VILLAGE: Rect = Rect::new(-73.992, 40.722, -73.975, 40.732);
/// Where unplanted traffic lives.
const CITY: Rect = Rect::new(-74.05, 40.58, -73.75, 40.88);

pub const SANDY_DAILY: [u64; 13] = [1180, 1210, 1190, 1230, 1320, 1050, 900, 980, 70, 260, 540, 820, 1010];
pub const AIRPORT_JFK_TRIPS: u64 = 300;
pub const AIRPORT_LGA_TRIPS: u64 = 180;
pub const AIRPORT_JFK_FARE: f64 = 52.0;
pub const AIRPORT_LGA_FARE: f64 = 30.0;
const AIRPORT_REVERSE: usize = 120;
const AIRPORT_MIDTOWN: u64 = 400;
pub const EVENING_DAYS: u64 = 28;
pub const EVENING_PER_DAY: u64 = 25;
const DAYTIME_PER_DAY: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ScenarioKind {
    /// Uniform trips, no planted structure.
    Uniform,
    /// Daily activity with a one-day collapse.
    Sandy,
    /// Fixed-fare flows from Lower Manhattan to the airports.
    Airports,
    /// Daily evening dropoffs in one neighborhood.
    Evening,
}

pub struct Scenario {
    pub records: Vec<TripRecord>,
    pub timezone: Tz,
    /// `None` for the uniform dataset.
    pub script: Option<Value>,
    /// Counts the script must reproduce, keyed by export file then entry.
    pub planted: Value,
}

pub fn build(kind: ScenarioKind, n: usize, seed: u64) -> Result<Scenario> {
    match kind {
        ScenarioKind::Uniform => Ok(Scenario {
            records: synthetic_records(&SynthConfig { n, seed, ..SynthConfig::default() }),
            timezone: NY,
            script: None,
            planted: json!({}),
        }),
        ScenarioKind::Sandy => sandy(seed),
        ScenarioKind::Airports => airports(n, seed),
        ScenarioKind::Evening => evening(n, seed),
    }
}

fn day_start(y: i32, m: u32, d: u32) -> Result<TimeStamp> {
    TimeStamp::from_local(NY, y, m, d, 0, 0, 0)
}

fn trip(rng: &mut impl Rng, pickup_t: i64, duration: i64, pickup: GeoPoint, dropoff: GeoPoint, fare: Option<f64>) -> Result<TripRecord> {
    let distance = (rng.gen_range(0.5..15.0f64) * 100.0).round() / 100.0;
    Ok(TripRecord {
        pickup_time: TimeStamp::new(pickup_t)?,
        dropoff_time: TimeStamp::new(pickup_t + duration)?,
        pickup,
        dropoff,
        duration_s: duration as f64,
        distance,
        fare: fare.unwrap_or(((2.5 + 2.5 * distance) * 100.0).round() / 100.0),
        passengers: rng.gen_range(1..=4),
    })
}

/// A city point outside every rectangle in `avoid`.
fn background_point(rng: &mut impl Rng, avoid: &[Rect]) -> GeoPoint {
    loop {
        let p = CITY.sample(rng);
        if !avoid.iter().any(|r| r.near(p, 0.002)) {
            return p;
        }
    }
}

fn sandy(seed: u64) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = day_start(2012, 10, 22)?;
    // Stops before the November fall-back so civil times stay unambiguous in CSV.
    let mut bounds = vec![start];
    for d in 0..SANDY_DAILY.len() as u32 {
        let date = chrono::NaiveDate::from_ymd_opt(2012, 10, 23).expect("valid date") + chrono::Days::new(d as u64);
        use chrono::Datelike;
        bounds.push(day_start(date.year(), date.month(), date.day())?);
    }
    let mut records = Vec::new();
    for (d, &count) in SANDY_DAILY.iter().enumerate() {
        let (lo, hi) = (bounds[d].seconds(), bounds[d + 1].seconds());
        for _ in 0..count {
            let t = rng.gen_range(lo..hi);
            let (a, b) = (CITY.sample(&mut rng), CITY.sample(&mut rng));
            let dur = rng.gen_range(180..2700);
            records.push(trip(&mut rng, t, dur, a, b, None)?);
        }
    }
    let span = [start.seconds(), bounds[SANDY_DAILY.len()].seconds()];
    let script = json!({ "commands": [
        { "op": "create", "label": "all_trips", "kind": "origin" },
        { "op": "export", "name": "sandy", "aggregates": [
            { "aggregate": "timeseries", "name": "daily", "query": "all_trips", "span": span, "granularity": "day" },
            { "aggregate": "timeseries", "name": "hourly", "query": "all_trips", "span": span, "granularity": "hour" }
        ]}
    ]});
    let daily: Vec<Value> =
        SANDY_DAILY.iter().enumerate().map(|(d, &c)| json!({ "bucket_start": bounds[d].seconds(), "count": c })).collect();
    let planted = json!({
        "counts": { "all_trips": SANDY_DAILY.iter().sum::<u64>() },
        "daily": daily,
        "trough_day": bounds[8].seconds(),
    });
    Ok(Scenario { records, timezone: NY, script: Some(script), planted })
}

fn airports(n: usize, seed: u64) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = day_start(2013, 5, 6)?.seconds();
    let span = 7 * 86_400;
    let avoid = [LOWER_MANHATTAN, JFK, LAGUARDIA];
    let mut records = Vec::new();
    let mut plant = |rng: &mut ChaCha8Rng, from: Rect, to: Rect, k: usize, fare: Option<f64>| -> Result<()> {
        for _ in 0..k {
            let t = start + rng.gen_range(0..span - 7200);
            let (a, b) = (from.sample(rng), to.sample(rng));
            let dur = rng.gen_range(1200..4800);
            records.push(trip(rng, t, dur, a, b, fare)?);
        }
        Ok(())
    };
    plant(&mut rng, LOWER_MANHATTAN, JFK, AIRPORT_JFK_TRIPS as usize, Some(AIRPORT_JFK_FARE))?;
    plant(&mut rng, LOWER_MANHATTAN, LAGUARDIA, AIRPORT_LGA_TRIPS as usize, Some(AIRPORT_LGA_FARE))?;
    plant(&mut rng, JFK, LOWER_MANHATTAN, AIRPORT_REVERSE, Some(AIRPORT_JFK_FARE))?;
    plant(&mut rng, LOWER_MANHATTAN, MIDTOWN, AIRPORT_MIDTOWN as usize, None)?;
    for _ in 0..n {
        let t = start + rng.gen_range(0..span - 7200);
        let (a, b) = (background_point(&mut rng, &avoid), background_point(&mut rng, &avoid));
        let dur = rng.gen_range(180..3600);
        records.push(trip(&mut rng, t, dur, a, b, None)?);
    }
    let create = |label: &str, r: Rect, kind: &str| json!({ "op": "create", "label": label, "kind": kind, "prism": { "polygon_lonlat": r.ring() } });
    let script = json!({ "commands": [
        create("lm_a", LOWER_MANHATTAN, "origin"),
        create("jfk", JFK, "destination"),
        { "op": "link", "origin": "lm_a", "destination": "jfk", "label": "lm_jfk" },
        create("lm_b", LOWER_MANHATTAN, "origin"),
        create("lga", LAGUARDIA, "destination"),
        { "op": "link", "origin": "lm_b", "destination": "lga", "label": "lm_lga" },
        create("lm_any", LOWER_MANHATTAN, "origin"),
        { "op": "export", "name": "flows", "aggregates": [
            { "aggregate": "histogram", "name": "jfk_fares", "query": "lm_jfk", "attribute": "fare", "bins": 10 },
            { "aggregate": "histogram", "name": "lga_fares", "query": "lm_lga", "attribute": "fare", "bins": 10 }
        ]},
        { "op": "merge", "queries": ["lm_jfk", "lm_lga"], "label": "lm_airports" },
        { "op": "export", "name": "merged", "aggregates": [] }
    ]});
    let planted = json!({
        "flows": { "lm_jfk": AIRPORT_JFK_TRIPS, "lm_lga": AIRPORT_LGA_TRIPS,
                   "lm_any": AIRPORT_JFK_TRIPS + AIRPORT_LGA_TRIPS + AIRPORT_MIDTOWN },
        "fares": { "lm_jfk": AIRPORT_JFK_FARE, "lm_lga": AIRPORT_LGA_FARE },
        "merged": { "lm_airports": AIRPORT_JFK_TRIPS + AIRPORT_LGA_TRIPS, "lm_any": AIRPORT_JFK_TRIPS + AIRPORT_LGA_TRIPS + AIRPORT_MIDTOWN },
    });
    Ok(Scenario { records, timezone: NY, script: Some(script), planted })
}

fn evening(n: usize, seed: u64) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Monday; no DST change in the window
    let first = day_start(2013, 5, 6)?.seconds();
    let avoid = [EAST_VILLAGE];
    let mut records = Vec::new();
    let mut weekday_evenings = 0u64;
    for d in 0..EVENING_DAYS as i64 {
        let day = first + d * 86_400;
        for _ in 0..EVENING_PER_DAY {
            // dropoff in [19:00, 23:00)
            let drop_t = day + rng.gen_range(19 * 3600..23 * 3600);
            let dur = rng.gen_range(300..2400);
            let (a, b) = (background_point(&mut rng, &avoid), EAST_VILLAGE.sample(&mut rng));
            records.push(trip(&mut rng, drop_t - dur, dur, a, b, None)?);
        }
        if d % 7 < 5 {
            weekday_evenings += EVENING_PER_DAY;
        }
        for _ in 0..DAYTIME_PER_DAY {
            // dropoff in [07:00, 18:00)
            let drop_t = day + rng.gen_range(7 * 3600..18 * 3600);
            let dur = rng.gen_range(300..2400);
            let (a, b) = (background_point(&mut rng, &avoid), EAST_VILLAGE.sample(&mut rng));
            records.push(trip(&mut rng, drop_t - dur, dur, a, b, None)?);
        }
    }
    let span = EVENING_DAYS as i64 * 86_400;
    for _ in 0..n {
        let t = first + rng.gen_range(0..span - 3600);
        let (a, b) = (CITY.sample(&mut rng), background_point(&mut rng, &avoid));
        let dur = rng.gen_range(180..3000);
        records.push(trip(&mut rng, t, dur, a, b, None)?);
    }
    let ev = json!({ "polygon_lonlat": EAST_VILLAGE.ring() });
    let evening = json!({ "hour_range": [18 * 60, 24 * 60] });
    let script = json!({ "commands": [
        { "op": "create", "label": "ev_evening", "kind": "destination", "prism": ev },
        { "op": "recur", "target": "ev_evening", "pattern": evening },
        { "op": "create", "label": "ev_weeknights", "kind": "destination", "prism": ev,
          "recurrence": { "weekdays": ["mon", "tue", "wed", "thu", "fri"], "hour_range": [18 * 60, 24 * 60] } },
        { "op": "create", "label": "ev_all", "kind": "destination", "prism": ev },
        { "op": "export", "name": "evening", "aggregates": [] }
    ]});
    let planted = json!({
        "counts": {
            "ev_evening": EVENING_DAYS * EVENING_PER_DAY,
            "ev_weeknights": weekday_evenings,
            "ev_all": EVENING_DAYS * (EVENING_PER_DAY + DAYTIME_PER_DAY as u64),
        },
    });
    Ok(Scenario { records, timezone: NY, script: Some(script), planted })
}

/// Files `synth` writes, keyed by name.
pub fn render(s: &Scenario) -> Result<BTreeMap<&'static str, Vec<u8>>> {
    let mut files = BTreeMap::new();
    let mut csv = Vec::new();
    odcube_core::ingest::write_trips_csv(&s.records, &mut csv, s.timezone)?;
    files.insert("trips.csv", csv);
    let mut map = odcube_core::ingest::ColumnMap::canonical();
    map.timezone = s.timezone.name().to_string();
    files.insert("column_map.json", to_json(&serde_json::to_value(&map).expect("column map serializes")));
    if let Some(script) = &s.script {
        files.insert("script.json", to_json(script));
        files.insert("planted.json", to_json(&s.planted));
    }
    Ok(files)
}

fn to_json(v: &Value) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("json value serializes");
    b.push(b'\n');
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use odcube_core::ingest::GeoBounds;

    #[test]
    fn planted_points_stay_inside_city_bounds() {
        for kind in [ScenarioKind::Sandy, ScenarioKind::Airports, ScenarioKind::Evening] {
            let s = build(kind, 500, 3).unwrap();
            assert!(s.records.iter().all(|r| GeoBounds::NYC.contains(r.pickup) && GeoBounds::NYC.contains(r.dropoff)));
            assert!(s.records.iter().all(|r| r.dropoff_time > r.pickup_time));
        }
    }

    #[test]
    fn background_avoids_planted_regions() {
        let s = build(ScenarioKind::Airports, 2000, 5).unwrap();
        let jfk_drops = s.records.iter().filter(|r| JFK.near(r.dropoff, 0.0)).count();
        assert_eq!(jfk_drops, AIRPORT_JFK_TRIPS as usize);
        let lm_picks = s.records.iter().filter(|r| LOWER_MANHATTAN.near(r.pickup, 0.0)).count();
        assert_eq!(lm_picks as u64, AIRPORT_JFK_TRIPS + AIRPORT_LGA_TRIPS + AIRPORT_MIDTOWN);
    }

    #[test]
    fn sandy_days_sum() {
        let s = build(ScenarioKind::Sandy, 0, 1).unwrap();
        assert_eq!(s.records.len() as u64, SANDY_DAILY.iter().sum::<u64>());
        assert_eq!(SANDY_DAILY.iter().enumerate().min_by_key(|(_, &c)| c).unwrap().0, 8);
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = render(&build(ScenarioKind::Evening, 300, 9).unwrap()).unwrap();
        let b = render(&build(ScenarioKind::Evening, 300, 9).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
