//! CSV trip ingest and GeoJSON neighborhood loading.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;
use std::path::Path;

use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geo::{project, GeoPoint, PlanePoint, Polygon};
use crate::snapshot::{DatasetSnapshot, TripRecord};
use crate::time::{parse_timezone, TimeStamp, MAX_EPOCH_SECONDS};

pub const DEFAULT_TIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// Accepts integer epoch seconds instead of a civil time string.
pub const EPOCH_TIME_FORMAT: &str = "epoch";

/// Canonical field names a [`ColumnMap`] maps from.
pub const CANONICAL_FIELDS: [&str; 10] = [
    "pickup_time",
    "dropoff_time",
    "pickup_lon",
    "pickup_lat",
    "dropoff_lon",
    "dropoff_lat",
    "duration_s",
    "distance",
    "fare",
    "passengers",
];

/// Fields that may be left unmapped. A missing duration is derived from
/// the two timestamps.
const OPTIONAL_FIELDS: [&str; 1] = ["duration_s"];

pub const REASON_OUT_OF_BOUNDS: &str = "coordinate out of city bounds";
pub const REASON_BAD_COORDINATE: &str = "invalid coordinate";
pub const REASON_BAD_TIME: &str = "unparseable time";
pub const REASON_TIME_RANGE: &str = "time out of range";
pub const REASON_BAD_NUMBER: &str = "unparseable number";
pub const REASON_NEGATIVE: &str = "negative attribute";
pub const REASON_TIME_ORDER: &str = "dropoff before pickup";
pub const REASON_MALFORMED: &str = "malformed row";

/// Longitude/latitude rectangle used to reject off-city rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBounds {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl GeoBounds {
    /// Generous envelope around the five boroughs and the three airports.
    pub const NYC: GeoBounds = GeoBounds { min_lon: -74.30, min_lat: 40.45, max_lon: -73.65, max_lat: 40.95 };

    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.min_lon..=self.max_lon).contains(&p.lon) && (self.min_lat..=self.max_lat).contains(&p.lat)
    }
}

fn default_format() -> String {
    DEFAULT_TIME_FORMAT.to_string()
}

fn default_tz() -> String {
    "America/New_York".to_string()
}

fn default_delimiter() -> char {
    ','
}

fn default_bounds() -> Option<GeoBounds> {
    Some(GeoBounds::NYC)
}

/// How source CSV columns map onto the canonical trip schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    /// canonical field -> source column
    pub columns: BTreeMap<String, String>,
    #[serde(default = "default_format")]
    pub timestamp_format: String,
    /// Zone the source timestamps are written in.
    #[serde(default = "default_tz")]
    pub timezone: String,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// `null` disables the city-bounds check.
    #[serde(default = "default_bounds")]
    pub city_bounds: Option<GeoBounds>,
}

impl ColumnMap {
    /// Identity mapping onto the canonical names.
    pub fn canonical() -> Self {
        ColumnMap {
            columns: CANONICAL_FIELDS.iter().map(|f| (f.to_string(), f.to_string())).collect(),
            timestamp_format: default_format(),
            timezone: default_tz(),
            delimiter: ',',
            city_bounds: Some(GeoBounds::NYC),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::schema(format!("column map: {e}")))
    }

    pub fn validate(&self) -> Result<Tz> {
        for field in CANONICAL_FIELDS {
            if !OPTIONAL_FIELDS.contains(&field) && !self.columns.contains_key(field) {
                return Err(Error::schema(format!("canonical field {field:?} is not mapped")));
            }
        }
        if let Some(extra) = self.columns.keys().find(|k| !CANONICAL_FIELDS.contains(&k.as_str())) {
            return Err(Error::schema(format!("unknown canonical field {extra:?}")));
        }
        if !self.delimiter.is_ascii() {
            return Err(Error::schema("delimiter must be a single ASCII character"));
        }
        parse_timezone(&self.timezone)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RejectPolicy {
    /// Skip bad rows and record them in the report.
    #[default]
    Drop,
    /// Abort on the first bad row.
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based data row, header excluded.
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: usize,
    pub reasons: Vec<Rejection>,
}

struct FieldIndex {
    pickup_time: usize,
    dropoff_time: usize,
    pickup_lon: usize,
    pickup_lat: usize,
    dropoff_lon: usize,
    dropoff_lat: usize,
    duration_s: Option<usize>,
    distance: usize,
    fare: usize,
    passengers: usize,
}

impl FieldIndex {
    fn resolve(map: &ColumnMap, headers: &csv::StringRecord) -> Result<Self> {
        let find = |field: &str| -> Result<Option<usize>> {
            let Some(source) = map.columns.get(field) else { return Ok(None) };
            headers
                .iter()
                .position(|h| h.trim() == source)
                .map(Some)
                .ok_or_else(|| Error::schema(format!("column {source:?} (for {field}) not found in header")))
        };
        let req = |field: &str| -> Result<usize> {
            find(field)?.ok_or_else(|| Error::schema(format!("canonical field {field:?} is not mapped")))
        };
        Ok(FieldIndex {
            pickup_time: req("pickup_time")?,
            dropoff_time: req("dropoff_time")?,
            pickup_lon: req("pickup_lon")?,
            pickup_lat: req("pickup_lat")?,
            dropoff_lon: req("dropoff_lon")?,
            dropoff_lat: req("dropoff_lat")?,
            duration_s: find("duration_s")?,
            distance: req("distance")?,
            fare: req("fare")?,
            passengers: req("passengers")?,
        })
    }
}

struct RowParser<'a> {
    fields: FieldIndex,
    format: &'a str,
    tz: Tz,
    bounds: Option<GeoBounds>,
}

impl RowParser<'_> {
    fn time(&self, raw: &str) -> Result<TimeStamp, &'static str> {
        let secs = if self.format == EPOCH_TIME_FORMAT {
            raw.trim().parse::<i64>().map_err(|_| REASON_BAD_TIME)?
        } else {
            TimeStamp::parse_local(raw, self.format, self.tz).map_err(|_| REASON_BAD_TIME)?.seconds()
        };
        // the dataset interval ends one second after the last dropoff
        if !(0..MAX_EPOCH_SECONDS - 1).contains(&secs) {
            return Err(REASON_TIME_RANGE);
        }
        Ok(TimeStamp::new(secs).expect("checked range"))
    }

    fn number(raw: &str) -> Result<f64, &'static str> {
        let v = raw.trim().parse::<f64>().map_err(|_| REASON_BAD_NUMBER)?;
        if !v.is_finite() {
            return Err(REASON_BAD_NUMBER);
        }
        if v < 0.0 {
            return Err(REASON_NEGATIVE);
        }
        Ok(v)
    }

    fn point(&self, lon: &str, lat: &str) -> Result<GeoPoint, &'static str> {
        let lon = lon.trim().parse::<f64>().map_err(|_| REASON_BAD_COORDINATE)?;
        let lat = lat.trim().parse::<f64>().map_err(|_| REASON_BAD_COORDINATE)?;
        let p = GeoPoint::new(lon, lat).map_err(|_| REASON_BAD_COORDINATE)?;
        if let Some(b) = self.bounds {
            if !b.contains(p) {
                return Err(REASON_OUT_OF_BOUNDS);
            }
        }
        Ok(p)
    }

    fn parse(&self, rec: &csv::StringRecord) -> Result<TripRecord, &'static str> {
        let f = &self.fields;
        let get = |i: usize| rec.get(i).ok_or(REASON_MALFORMED);
        let pickup_time = self.time(get(f.pickup_time)?)?;
        let dropoff_time = self.time(get(f.dropoff_time)?)?;
        let pickup = self.point(get(f.pickup_lon)?, get(f.pickup_lat)?)?;
        let dropoff = self.point(get(f.dropoff_lon)?, get(f.dropoff_lat)?)?;
        if dropoff_time < pickup_time {
            return Err(REASON_TIME_ORDER);
        }
        let duration_s = match f.duration_s {
            Some(i) => Self::number(get(i)?)?,
            None => (dropoff_time.seconds() - pickup_time.seconds()) as f64,
        };
        let distance = Self::number(get(f.distance)?)?;
        let fare = Self::number(get(f.fare)?)?;
        let passengers = Self::number(get(f.passengers)?)?;
        if passengers.fract() != 0.0 || passengers > u32::MAX as f64 {
            return Err(REASON_BAD_NUMBER);
        }
        Ok(TripRecord {
            pickup_time,
            dropoff_time,
            pickup,
            dropoff,
            duration_s,
            distance,
            fare,
            passengers: passengers as u32,
        })
    }
}

/// Parses trip rows without building a snapshot, so callers keep the
/// report even when nothing was accepted.
pub fn parse_trips<R: Read>(
    reader: R,
    map: &ColumnMap,
    policy: RejectPolicy,
) -> Result<(Vec<TripRecord>, IngestReport)> {
    let tz = map.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(map.delimiter as u8)
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse(format!("csv header: {e}")))?.clone();
    let parser = RowParser {
        fields: FieldIndex::resolve(map, &headers)?,
        format: &map.timestamp_format,
        tz,
        bounds: map.city_bounds,
    };
    let mut records = Vec::new();
    let mut report = IngestReport::default();
    let mut rec = csv::StringRecord::new();
    let mut row = 0usize;
    loop {
        row += 1;
        let outcome = match rdr.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => parser.parse(&rec),
            Err(e) if e.is_io_error() => return Err(Error::Parse(format!("csv row {row}: {e}"))),
            Err(_) => Err(REASON_MALFORMED),
        };
        match outcome {
            Ok(r) => records.push(r),
            Err(reason) if policy == RejectPolicy::Fail => {
                return Err(Error::Parse(format!("row {row}: {reason}")));
            }
            Err(reason) => report.reasons.push(Rejection { row, reason: reason.to_string() }),
        }
    }
    report.accepted = records.len();
    report.rejected = report.reasons.len();
    Ok((records, report))
}

pub fn load_trips_from_reader<R: Read>(
    reader: R,
    map: &ColumnMap,
    policy: RejectPolicy,
) -> Result<(DatasetSnapshot, IngestReport)> {
    let tz = map.validate()?;
    let (records, report) = parse_trips(reader, map, policy)?;
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok((DatasetSnapshot::from_records(&records, tz, None)?, report))
}

/// Loads a trip CSV into a snapshot.
pub fn load_trips(
    path: impl AsRef<Path>,
    map: &ColumnMap,
    policy: RejectPolicy,
) -> Result<(DatasetSnapshot, IngestReport)> {
    let file = std::fs::File::open(path)?;
    load_trips_from_reader(std::io::BufReader::new(file), map, policy)
}

/// Writes records in the canonical column layout, times as civil strings in `tz`.
pub fn write_trips_csv<W: std::io::Write>(records: &[TripRecord], writer: W, tz: Tz) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Parse(format!("csv write: {e}"));
    w.write_record(CANONICAL_FIELDS).map_err(err)?;
    let fmt_t = |t: TimeStamp| {
        chrono::DateTime::from_timestamp(t.seconds(), 0)
            .expect("valid timestamp")
            .with_timezone(&tz)
            .format(DEFAULT_TIME_FORMAT)
            .to_string()
    };
    for r in records {
        w.write_record([
            fmt_t(r.pickup_time),
            fmt_t(r.dropoff_time),
            r.pickup.lon.to_string(),
            r.pickup.lat.to_string(),
            r.dropoff.lon.to_string(),
            r.dropoff.lat.to_string(),
            r.duration_s.to_string(),
            r.distance.to_string(),
            r.fare.to_string(),
            r.passengers.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

/// Uniform random sample of `k` trips without replacement, reproducible
/// for a fixed seed. Trip order is preserved.
pub fn sample(snapshot: &DatasetSnapshot, k: usize, seed: u64) -> Result<DatasetSnapshot> {
    use rand::SeedableRng;
    if k == 0 || k > snapshot.len() {
        return Err(Error::domain(format!("sample size {k} not in 1..={}", snapshot.len())));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut ids = rand::seq::index::sample(&mut rng, snapshot.len(), k).into_vec();
    ids.sort_unstable();
    snapshot.subset(&ids)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub name: String,
    pub polygon: Polygon,
}

/// Named regions, in Mercator coordinates. Names are unique.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NeighborhoodSet {
    regions: Vec<Neighborhood>,
}

impl NeighborhoodSet {
    pub fn new(regions: Vec<Neighborhood>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &regions {
            if !seen.insert(r.name.as_str()) {
                return Err(Error::schema(format!("duplicate neighborhood name {:?}", r.name)));
            }
        }
        Ok(NeighborhoodSet { regions })
    }

    pub fn regions(&self) -> &[Neighborhood] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.regions.iter().position(|r| r.name == name)
    }

    /// First region (in set order) containing `p`.
    pub fn assign(&self, p: PlanePoint) -> Option<usize> {
        self.regions.iter().position(|r| r.polygon.contains(p))
    }
}

fn parse_ring(ring: &Value) -> Result<Polygon> {
    let coords = ring.as_array().ok_or_else(|| Error::Parse("ring is not an array".into()))?;
    let mut pts = Vec::with_capacity(coords.len());
    for c in coords {
        let pair = c.as_array().filter(|a| a.len() >= 2);
        let (lon, lat) = pair
            .and_then(|a| Some((a[0].as_f64()?, a[1].as_f64()?)))
            .ok_or_else(|| Error::Parse("position must be [lon, lat]".into()))?;
        let geo = GeoPoint::new(lon, lat).map_err(|e| Error::Parse(e.to_string()))?;
        pts.push(project(geo)?);
    }
    Polygon::new(pts).map_err(|e| Error::Parse(format!("polygon: {e}")))
}

/// Parses a GeoJSON FeatureCollection. Non-Polygon features are skipped
/// and reported in the returned warnings; interior rings are ignored.
pub fn parse_neighborhoods(json: &str, name_key: &str) -> Result<(NeighborhoodSet, Vec<String>)> {
    let root: Value = serde_json::from_str(json).map_err(|e| Error::Parse(format!("geojson: {e}")))?;
    if root.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::Parse("expected a GeoJSON FeatureCollection".into()));
    }
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Parse("FeatureCollection without features".into()))?;
    let mut regions = Vec::new();
    let mut warnings = Vec::new();
    for (i, f) in features.iter().enumerate() {
        let name = f
            .get("properties")
            .and_then(|p| p.get(name_key))
            .and_then(Value::as_str)
            .ok_or_else(|| Error::schema(format!("feature {i} has no {name_key:?} property")))?
            .to_string();
        let geom = f.get("geometry").ok_or_else(|| Error::Parse(format!("feature {i} has no geometry")))?;
        match geom.get("type").and_then(Value::as_str) {
            Some("Polygon") => {
                let rings = geom
                    .get("coordinates")
                    .and_then(Value::as_array)
                    .filter(|r| !r.is_empty())
                    .ok_or_else(|| Error::Parse(format!("feature {name:?} has no rings")))?;
                if rings.len() > 1 {
                    warnings.push(format!("feature {name:?}: interior rings ignored"));
                }
                regions.push(Neighborhood { name, polygon: parse_ring(&rings[0])? });
            }
            other => {
                let kind = other.unwrap_or("unknown");
                log::warn!("skipping neighborhood {name:?}: unsupported geometry {kind}");
                warnings.push(format!("feature {name:?}: unsupported geometry {kind} skipped"));
            }
        }
    }
    Ok((NeighborhoodSet::new(regions)?, warnings))
}

pub fn load_neighborhoods(path: impl AsRef<Path>, name_key: &str) -> Result<(NeighborhoodSet, Vec<String>)> {
    parse_neighborhoods(&std::fs::read_to_string(path)?, name_key)
}
