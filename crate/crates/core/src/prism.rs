use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{PlanePoint, Polygon};
use crate::time::{TimeInterval, TimeStamp};

/// An extruded polygon: a footprint swept over a time interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prism {
    #[serde(rename = "polygon")]
    pub footprint: Polygon,
    pub interval: TimeInterval,
}

impl Prism {
    pub fn new(footprint: Polygon, interval: TimeInterval) -> Self {
        Prism { footprint, interval }
    }

    #[inline]
    pub fn contains(&self, pos: PlanePoint, t: TimeStamp) -> bool {
        self.contains_raw(pos, t.seconds())
    }

    /// Time test first; it is the cheaper of the two.
    #[inline]
    pub fn contains_raw(&self, pos: PlanePoint, t: i64) -> bool {
        self.interval.contains_seconds(t) && self.footprint.contains(pos)
    }
}

pub fn prism_contains(prism: &Prism, pos: PlanePoint, t: TimeStamp) -> bool {
    prism.contains(pos, t)
}

/// Which trip endpoint a constraint applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    /// Pickups.
    Origin,
    /// Dropoffs.
    Destination,
    /// Pickup or dropoff; the default for new queries.
    #[default]
    Either,
}

impl EventKind {
    /// Display color of volumes constraining this kind.
    pub fn color_name(self) -> &'static str {
        match self {
            EventKind::Origin => "blue",
            EventKind::Destination => "red",
            EventKind::Either => "green",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Origin => "origin",
            EventKind::Destination => "destination",
            EventKind::Either => "either",
        })
    }
}

impl FromStr for EventKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "origin" | "pickup" => Ok(EventKind::Origin),
            "destination" | "dropoff" => Ok(EventKind::Destination),
            "either" | "both" => Ok(EventKind::Either),
            other => Err(Error::domain(format!("unknown event kind {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_prism() -> Prism {
        let poly = Polygon::new(vec![
            PlanePoint::new(0.0, 0.0),
            PlanePoint::new(10.0, 0.0),
            PlanePoint::new(10.0, 10.0),
            PlanePoint::new(0.0, 10.0),
        ])
        .unwrap();
        Prism::new(poly, TimeInterval::from_seconds(1000, 2000).unwrap())
    }

    #[test]
    fn temporal_bounds_are_half_open() {
        let p = square_prism();
        let inside = PlanePoint::new(5.0, 5.0);
        assert!(prism_contains(&p, inside, TimeStamp::new(1000).unwrap()));
        assert!(!prism_contains(&p, inside, TimeStamp::new(2000).unwrap()));
        assert!(!prism_contains(&p, PlanePoint::new(11.0, 5.0), TimeStamp::new(1500).unwrap()));
    }

    #[test]
    fn kind_colors_and_parsing() {
        assert_eq!(EventKind::Origin.color_name(), "blue");
        assert_eq!(EventKind::Destination.color_name(), "red");
        assert_eq!(EventKind::Either.color_name(), "green");
        assert_eq!(EventKind::default(), EventKind::Either);
        assert_eq!("dropoff".parse::<EventKind>().unwrap(), EventKind::Destination);
        assert!("sideways".parse::<EventKind>().is_err());
    }

    #[test]
    fn prism_json_shape() {
        let json = serde_json::to_value(square_prism()).unwrap();
        assert_eq!(json["interval"], serde_json::json!([1000, 2000]));
        assert_eq!(json["polygon"][1], serde_json::json!([10.0, 0.0]));
    }

    proptest::proptest! {
        #[test]
        fn contains_is_conjunction(x in -5.0f64..15.0, y in -5.0f64..15.0, t in 0i64..3000) {
            let p = square_prism();
            let pos = PlanePoint::new(x, y);
            let ts = TimeStamp::new(t).unwrap();
            proptest::prop_assert_eq!(
                p.contains(pos, ts),
                p.footprint.contains(pos) && p.interval.contains(ts)
            );
        }
    }
}
