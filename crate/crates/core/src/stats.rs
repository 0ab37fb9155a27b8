use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::ResultMask;
use crate::snapshot::{Attribute, DatasetSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Summary of a selection. Attribute statistics are absent when nothing is
/// selected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TripStats {
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<BTreeMap<Attribute, AttributeStats>>,
}

impl TripStats {
    pub fn get(&self, attr: Attribute) -> Option<&AttributeStats> {
        self.attributes.as_ref().and_then(|a| a.get(&attr))
    }
}

/// One pass over the selected rows in ascending trip order.
pub fn compute_stats(snapshot: &DatasetSnapshot, mask: &ResultMask) -> Result<TripStats> {
    if mask.len() != snapshot.len() {
        return Err(Error::domain(format!(
            "mask length {} does not match dataset size {}",
            mask.len(),
            snapshot.len()
        )));
    }
    let cols = Attribute::ALL.map(|a| snapshot.attribute(a));
    let mut sum = [0.0f64; 4];
    let mut min = [f64::INFINITY; 4];
    let mut max = [f64::NEG_INFINITY; 4];
    let mut count = 0usize;
    for i in mask.iter_ones() {
        count += 1;
        for k in 0..4 {
            let v = cols[k][i];
            sum[k] += v;
            min[k] = min[k].min(v);
            max[k] = max[k].max(v);
        }
    }
    if count == 0 {
        return Ok(TripStats { count: 0, attributes: None });
    }
    let attributes = Attribute::ALL
        .iter()
        .enumerate()
        .map(|(k, a)| {
            // rounding can push the mean of identical values just past them
            let mean = (sum[k] / count as f64).clamp(min[k], max[k]);
            (*a, AttributeStats { mean, min: min[k], max: max[k] })
        })
        .collect();
    Ok(TripStats { count, attributes: Some(attributes) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;
    use crate::snapshot::TripRecord;
    use crate::time::TimeStamp;

    fn three_fares() -> DatasetSnapshot {
        let recs: Vec<_> = [5.0, 10.0, 15.0]
            .iter()
            .enumerate()
            .map(|(i, &fare)| TripRecord {
                pickup_time: TimeStamp::new(1_000_000 + i as i64).unwrap(),
                dropoff_time: TimeStamp::new(1_000_600 + i as i64).unwrap(),
                pickup: GeoPoint::new(-73.99, 40.73).unwrap(),
                dropoff: GeoPoint::new(-73.98, 40.75).unwrap(),
                duration_s: 600.0,
                distance: 1.0 + i as f64,
                fare,
                passengers: 1,
            })
            .collect();
        DatasetSnapshot::from_records(&recs, chrono_tz::UTC, None).unwrap()
    }

    #[test]
    fn empty_mask_has_no_attribute_stats() {
        let s = three_fares();
        let st = compute_stats(&s, &ResultMask::empty(3)).unwrap();
        assert_eq!(st.count, 0);
        assert!(st.attributes.is_none());
    }

    #[test]
    fn fare_arithmetic() {
        let s = three_fares();
        let st = compute_stats(&s, &ResultMask::full(3)).unwrap();
        assert_eq!(st.count, 3);
        let f = st.get(Attribute::Fare).unwrap();
        assert_eq!((f.mean, f.min, f.max), (10.0, 5.0, 15.0));
        assert_eq!(st.get(Attribute::Duration).unwrap().mean, 600.0);
    }

    #[test]
    fn wrong_length_mask() {
        assert!(compute_stats(&three_fares(), &ResultMask::full(4)).is_err());
    }

    #[test]
    fn json_shape() {
        let st = compute_stats(&three_fares(), &ResultMask::full(3)).unwrap();
        let v = serde_json::to_value(&st).unwrap();
        assert_eq!(v["count"], 3);
        assert_eq!(v["attributes"]["fare"]["max"], 15.0);
    }
}
