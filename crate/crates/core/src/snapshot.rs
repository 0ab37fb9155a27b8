//! Immutable columnar trip store.

use std::fmt;
use std::str::FromStr;

use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{project, BBox, GeoPoint, PlanePoint};
use crate::index::{default_cell_target, Endpoint, GridIndex};
use crate::prism::EventKind;
use crate::time::{parse_timezone, LocalClock, TimeInterval, TimeStamp};

/// One accepted trip in canonical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub pickup_time: TimeStamp,
    pub dropoff_time: TimeStamp,
    pub pickup: GeoPoint,
    pub dropoff: GeoPoint,
    pub duration_s: f64,
    /// Miles.
    pub distance: f64,
    /// USD.
    pub fare: f64,
    pub passengers: u32,
}

/// Numeric trip attributes usable in constraints and aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Attribute {
    #[serde(rename = "duration_s")]
    Duration,
    #[serde(rename = "distance")]
    Distance,
    #[serde(rename = "fare")]
    Fare,
    #[serde(rename = "passengers")]
    Passengers,
}

impl Attribute {
    pub const ALL: [Attribute; 4] =
        [Attribute::Duration, Attribute::Distance, Attribute::Fare, Attribute::Passengers];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Duration => "duration_s",
            Attribute::Distance => "distance",
            Attribute::Fare => "fare",
            Attribute::Passengers => "passengers",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attribute {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.name() == s || (s == "duration" && *a == Attribute::Duration))
            .ok_or_else(|| Error::domain(format!("unknown attribute {s:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSnapshot {
    pickup_pos: Vec<PlanePoint>,
    dropoff_pos: Vec<PlanePoint>,
    pickup_t: Vec<i64>,
    dropoff_t: Vec<i64>,
    duration_s: Vec<f64>,
    distance: Vec<f64>,
    fare: Vec<f64>,
    passengers: Vec<f64>,
    interval: TimeInterval,
    bbox: BBox,
    timezone: Tz,
    grid_target: usize,
    grid: GridIndex,
    clock: LocalClock,
}

impl DatasetSnapshot {
    /// Builds a snapshot; `grid_target` defaults to ~16 trips per cell.
    pub fn from_records(records: &[TripRecord], timezone: Tz, grid_target: Option<usize>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = records.len();
        let mut cols = Columns::with_capacity(n);
        for r in records {
            if r.dropoff_time < r.pickup_time {
                return Err(Error::domain("dropoff before pickup"));
            }
            cols.pickup_pos.push(project(r.pickup)?);
            cols.dropoff_pos.push(project(r.dropoff)?);
            cols.pickup_t.push(r.pickup_time.seconds());
            cols.dropoff_t.push(r.dropoff_time.seconds());
            cols.duration_s.push(r.duration_s);
            cols.distance.push(r.distance);
            cols.fare.push(r.fare);
            cols.passengers.push(r.passengers as f64);
        }
        Self::from_columns(cols, timezone, grid_target.unwrap_or_else(|| default_cell_target(n)))
    }

    fn from_columns(cols: Columns, timezone: Tz, grid_target: usize) -> Result<Self> {
        let n = cols.pickup_t.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let start = *cols.pickup_t.iter().min().expect("non-empty");
        let end = cols.dropoff_t.iter().max().expect("non-empty") + 1;
        let interval = TimeInterval::from_seconds(start, end)?;
        let mut bbox = BBox::EMPTY;
        for p in cols.pickup_pos.iter().chain(&cols.dropoff_pos) {
            bbox.extend(*p);
        }
        let grid = GridIndex::build(&cols.pickup_pos, &cols.dropoff_pos, bbox, grid_target);
        let clock = LocalClock::new(timezone, interval);
        Ok(DatasetSnapshot {
            pickup_pos: cols.pickup_pos,
            dropoff_pos: cols.dropoff_pos,
            pickup_t: cols.pickup_t,
            dropoff_t: cols.dropoff_t,
            duration_s: cols.duration_s,
            distance: cols.distance,
            fare: cols.fare,
            passengers: cols.passengers,
            interval,
            bbox,
            timezone,
            grid_target,
            grid,
            clock,
        })
    }

    /// Rebuilds the grid with a different cell target.
    pub fn with_grid_target(&self, target_cell_count: usize) -> Self {
        let mut out = self.clone();
        out.grid_target = target_cell_count;
        out.grid = build_grid_index(self, target_cell_count);
        out
    }

    /// Trip count.
    pub fn len(&self) -> usize {
        self.pickup_t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pickup_t.is_empty()
    }

    /// `[min pickup, max dropoff + 1s)`.
    pub fn interval(&self) -> TimeInterval {
        self.interval
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn timezone(&self) -> Tz {
        self.timezone
    }

    pub fn grid(&self) -> &GridIndex {
        &self.grid
    }

    /// Local-time converter covering the dataset interval.
    pub fn clock(&self) -> &LocalClock {
        &self.clock
    }

    pub fn positions(&self, endpoint: Endpoint) -> &[PlanePoint] {
        match endpoint {
            Endpoint::Pickup => &self.pickup_pos,
            Endpoint::Dropoff => &self.dropoff_pos,
        }
    }

    pub fn times(&self, endpoint: Endpoint) -> &[i64] {
        match endpoint {
            Endpoint::Pickup => &self.pickup_t,
            Endpoint::Dropoff => &self.dropoff_t,
        }
    }

    /// Event times used when a trip must be placed on the time axis once:
    /// dropoff times for `Destination`, pickup times otherwise.
    pub fn canonical_times(&self, kind: EventKind) -> &[i64] {
        match kind {
            EventKind::Destination => &self.dropoff_t,
            _ => &self.pickup_t,
        }
    }

    pub fn canonical_positions(&self, kind: EventKind) -> &[PlanePoint] {
        match kind {
            EventKind::Destination => &self.dropoff_pos,
            _ => &self.pickup_pos,
        }
    }

    pub fn attribute(&self, attr: Attribute) -> &[f64] {
        match attr {
            Attribute::Duration => &self.duration_s,
            Attribute::Distance => &self.distance,
            Attribute::Fare => &self.fare,
            Attribute::Passengers => &self.passengers,
        }
    }

    /// Snapshot restricted to `ids` (kept in the given order).
    pub fn subset(&self, ids: &[usize]) -> Result<Self> {
        let mut cols = Columns::with_capacity(ids.len());
        for &i in ids {
            if i >= self.len() {
                return Err(Error::domain(format!("trip id {i} out of range")));
            }
            cols.pickup_pos.push(self.pickup_pos[i]);
            cols.dropoff_pos.push(self.dropoff_pos[i]);
            cols.pickup_t.push(self.pickup_t[i]);
            cols.dropoff_t.push(self.dropoff_t[i]);
            cols.duration_s.push(self.duration_s[i]);
            cols.distance.push(self.distance[i]);
            cols.fare.push(self.fare[i]);
            cols.passengers.push(self.passengers[i]);
        }
        let target = default_cell_target(ids.len());
        Self::from_columns(cols, self.timezone, target)
    }

    /// Serializes columns and metadata; the grid is rebuilt on load.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let file = SnapshotFile {
            magic: SNAPSHOT_MAGIC,
            version: SNAPSHOT_VERSION,
            timezone: self.timezone.name().to_string(),
            grid_target: self.grid_target as u64,
            columns: Columns {
                pickup_pos: self.pickup_pos.clone(),
                dropoff_pos: self.dropoff_pos.clone(),
                pickup_t: self.pickup_t.clone(),
                dropoff_t: self.dropoff_t.clone(),
                duration_s: self.duration_s.clone(),
                distance: self.distance.clone(),
                fare: self.fare.clone(),
                passengers: self.passengers.clone(),
            },
        };
        bincode::serialize(&file).map_err(|e| Error::Parse(format!("snapshot encode: {e}")))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let file: SnapshotFile =
            bincode::deserialize(bytes).map_err(|e| Error::Parse(format!("snapshot decode: {e}")))?;
        if file.magic != SNAPSHOT_MAGIC || file.version != SNAPSHOT_VERSION {
            return Err(Error::Parse("not an odcube snapshot (bad magic or version)".into()));
        }
        let c = &file.columns;
        let n = c.pickup_t.len();
        let lens = [
            c.pickup_pos.len(),
            c.dropoff_pos.len(),
            c.dropoff_t.len(),
            c.duration_s.len(),
            c.distance.len(),
            c.fare.len(),
            c.passengers.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::Parse("snapshot columns differ in length".into()));
        }
        let tz = parse_timezone(&file.timezone)?;
        Self::from_columns(file.columns, tz, file.grid_target as usize)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Builds a fresh grid index over a snapshot's positions.
pub fn build_grid_index(snapshot: &DatasetSnapshot, target_cell_count: usize) -> GridIndex {
    GridIndex::build(&snapshot.pickup_pos, &snapshot.dropoff_pos, snapshot.bbox, target_cell_count)
}

const SNAPSHOT_MAGIC: [u8; 8] = *b"ODCUBE\0\0";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SnapshotFile {
    magic: [u8; 8],
    version: u32,
    timezone: String,
    grid_target: u64,
    columns: Columns,
}

#[derive(Default, Serialize, Deserialize)]
struct Columns {
    pickup_pos: Vec<PlanePoint>,
    dropoff_pos: Vec<PlanePoint>,
    pickup_t: Vec<i64>,
    dropoff_t: Vec<i64>,
    duration_s: Vec<f64>,
    distance: Vec<f64>,
    fare: Vec<f64>,
    passengers: Vec<f64>,
}

impl Columns {
    fn with_capacity(n: usize) -> Self {
        Columns {
            pickup_pos: Vec::with_capacity(n),
            dropoff_pos: Vec::with_capacity(n),
            pickup_t: Vec::with_capacity(n),
            dropoff_t: Vec::with_capacity(n),
            duration_s: Vec::with_capacity(n),
            distance: Vec::with_capacity(n),
            fare: Vec::with_capacity(n),
            passengers: Vec::with_capacity(n),
        }
    }
}

/// Metadata reported for a resident dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub n: usize,
    pub interval: TimeInterval,
    pub bbox: BBox,
    pub timezone: String,
}

impl From<&DatasetSnapshot> for SnapshotMeta {
    fn from(s: &DatasetSnapshot) -> Self {
        SnapshotMeta {
            n: s.len(),
            interval: s.interval(),
            bbox: s.bbox(),
            timezone: s.timezone().name().to_string(),
        }
    }
}
