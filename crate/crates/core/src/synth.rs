//! Synthetic trip generation for tests, benchmarks and demos.

use chrono_tz::Tz;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geo::GeoPoint;
use crate::ingest::GeoBounds;
use crate::snapshot::{DatasetSnapshot, TripRecord};
use crate::time::TimeStamp;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    /// First possible pickup.
    pub start: TimeStamp,
    pub days: u32,
    pub bounds: GeoBounds,
    pub timezone: Tz,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let tz = chrono_tz::America::New_York;
        SynthConfig {
            n: 10_000,
            seed: 0,
            // Monday 2013-05-06 00:00 local
            start: TimeStamp::from_local(tz, 2013, 5, 6, 0, 0, 0).expect("valid date"),
            days: 7,
            bounds: GeoBounds::NYC,
            timezone: tz,
        }
    }
}

/// Uniformly scattered trips: positions uniform in `bounds`, pickups
/// uniform over the window, durations 2-60 minutes.
pub fn synthetic_records(cfg: &SynthConfig) -> Vec<TripRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let span = cfg.days as i64 * 86_400;
    let b = cfg.bounds;
    (0..cfg.n)
        .map(|_| {
            let pickup_t = cfg.start.seconds() + rng.gen_range(0..span);
            let duration = rng.gen_range(120..3600i64);
            let pickup = GeoPoint { lon: rng.gen_range(b.min_lon..b.max_lon), lat: rng.gen_range(b.min_lat..b.max_lat) };
            let dropoff = GeoPoint { lon: rng.gen_range(b.min_lon..b.max_lon), lat: rng.gen_range(b.min_lat..b.max_lat) };
            let distance = (rng.gen_range(0.2..20.0f64) * 100.0).round() / 100.0;
            TripRecord {
                pickup_time: TimeStamp::new(pickup_t).expect("synthetic time in range"),
                dropoff_time: TimeStamp::new(pickup_t + duration).expect("synthetic time in range"),
                pickup,
                dropoff,
                duration_s: duration as f64,
                distance,
                fare: ((2.5 + 2.5 * distance) * 100.0).round() / 100.0,
                passengers: rng.gen_range(1..=6),
            }
        })
        .collect()
}

pub fn synthetic_snapshot(cfg: &SynthConfig) -> DatasetSnapshot {
    DatasetSnapshot::from_records(&synthetic_records(cfg), cfg.timezone, None)
        .expect("synthetic records are valid and non-empty")
}
