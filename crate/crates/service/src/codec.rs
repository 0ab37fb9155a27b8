//! Binary point frames for rendering clients.
//!
//! Layout, little-endian:
//!
//! ```text
//! header (16 bytes): revision u64 | n u32 | flags u32
//! 2n points (14 bytes each), pickups 0..n then dropoffs n..2n:
//!     x f32 | y f32 | t f32 | status u8 | color u8
//! ```
//!
//! `x` and `y` map the Mercator plane onto `[0, 1]`, `t` maps the dataset
//! interval onto `[0, 1]`. `color` is a palette index, 255 when no visible
//! query selects the trip.

use odcube_core::engine::{PointStatus, StatusVector};
use odcube_core::geo::MERCATOR_HALF_EXTENT;
use odcube_core::index::Endpoint;
use odcube_core::DatasetSnapshot;

use crate::error::ApiError;

pub const HEADER_LEN: usize = 16;
pub const POINT_LEN: usize = 14;
pub const NO_COLOR: u8 = 255;

pub const FLAG_BRUSH: u32 = 1;
pub const FLAG_QUERIES: u32 = 1 << 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub revision: u64,
    /// Trip count; the frame carries `2n` points.
    pub n: u32,
    pub flags: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointRecord {
    pub x: f32,
    pub y: f32,
    pub t: f32,
    pub status: u8,
    pub color: u8,
}

pub fn normalize_x(x: f64) -> f32 {
    ((x + MERCATOR_HALF_EXTENT) / (2.0 * MERCATOR_HALF_EXTENT)) as f32
}

pub fn normalize_y(y: f64) -> f32 {
    ((y + MERCATOR_HALF_EXTENT) / (2.0 * MERCATOR_HALF_EXTENT)) as f32
}

/// Normalized coordinates of all `2n` points, computed once per dataset.
#[derive(Debug, Clone)]
pub struct PointGeometry {
    xyz: Vec<[f32; 3]>,
}

impl PointGeometry {
    pub fn new(snapshot: &DatasetSnapshot) -> Self {
        let iv = snapshot.interval();
        let t0 = iv.start().seconds() as f64;
        let span = (iv.len_seconds().max(1)) as f64;
        let mut xyz = Vec::with_capacity(2 * snapshot.len());
        for e in [Endpoint::Pickup, Endpoint::Dropoff] {
            for (p, &t) in snapshot.positions(e).iter().zip(snapshot.times(e)) {
                xyz.push([normalize_x(p.x), normalize_y(p.y), ((t as f64 - t0) / span) as f32]);
            }
        }
        PointGeometry { xyz }
    }

    pub fn trip_count(&self) -> usize {
        self.xyz.len() / 2
    }
}

/// `colors` holds one entry per trip.
pub fn encode(geometry: &PointGeometry, status: &StatusVector, colors: &[u8], revision: u64, flags: u32) -> Vec<u8> {
    let n = geometry.trip_count();
    assert_eq!(status.len(), 2 * n, "status vector does not match the dataset");
    assert_eq!(colors.len(), n, "color vector does not match the dataset");
    let mut out = Vec::with_capacity(HEADER_LEN + 2 * n * POINT_LEN);
    out.extend_from_slice(&revision.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&flags.to_le_bytes());
    for (i, (xyz, s)) in geometry.xyz.iter().zip(status.as_slice()).enumerate() {
        for v in xyz {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(*s as u8);
        out.push(colors[i % n]);
    }
    out
}

fn f32_at(b: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

pub fn decode(bytes: &[u8]) -> Result<(FrameHeader, Vec<PointRecord>), ApiError> {
    if bytes.len() < HEADER_LEN {
        return Err(ApiError::bad_request("point frame shorter than its header"));
    }
    let header = FrameHeader {
        revision: u64::from_le_bytes(bytes[0..8].try_into().expect("8 bytes")),
        n: u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")),
        flags: u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")),
    };
    let count = 2 * header.n as usize;
    if bytes.len() != HEADER_LEN + count * POINT_LEN {
        return Err(ApiError::bad_request(format!(
            "point frame of {} bytes does not hold {count} points",
            bytes.len()
        )));
    }
    let points = bytes[HEADER_LEN..]
        .chunks_exact(POINT_LEN)
        .map(|c| PointRecord { x: f32_at(c, 0), y: f32_at(c, 4), t: f32_at(c, 8), status: c[12], color: c[13] })
        .collect::<Vec<_>>();
    if let Some(p) = points.iter().find(|p| PointStatus::from_u8(p.status).is_none()) {
        return Err(ApiError::bad_request(format!("unknown point status {}", p.status)));
    }
    Ok((header, points))
}
