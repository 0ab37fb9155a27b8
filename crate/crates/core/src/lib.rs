//! Spatio-temporal query engine over origin-destination trip data.
//!
//! Trips are held in an immutable columnar [`DatasetSnapshot`]. Queries are
//! extruded polygons ([`Prism`]) evaluated into per-trip bitmasks, composed
//! into directional and merged queries, sliced by civil-time recurrences and
//! summarized into statistics, time series, histograms and choropleths.

pub mod aggregate;
pub mod engine;
pub mod error;
pub mod geo;
pub mod index;
pub mod ingest;
pub mod manager;
pub mod mask;
pub mod prism;
pub mod recurrence;
pub mod script;
pub mod snapshot;
pub mod stats;
pub mod synth;
pub mod time;

pub use error::{Error, Result};
pub use geo::{BBox, GeoPoint, PlanePoint, Polygon};
pub use mask::ResultMask;
pub use prism::{EventKind, Prism};
pub use recurrence::RecurrencePattern;
pub use snapshot::{Attribute, DatasetSnapshot, TripRecord};
pub use time::{TimeInterval, TimeStamp};
