//! Planar geometry: WGS84 points, spherical Web Mercator projection and
//! even-odd polygon containment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Earth radius used by spherical Web Mercator (EPSG:3857), in meters.
pub const EARTH_RADIUS: f64 = 6_378_137.0;

/// Half the width of the projected world, `pi * R`.
pub const MERCATOR_HALF_EXTENT: f64 = std::f64::consts::PI * EARTH_RADIUS;

/// Largest latitude representable in Web Mercator (square world).
pub const MAX_MERCATOR_LAT: f64 = 85.051_128_779_806_59;

/// A WGS84 coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self> {
        let p = GeoPoint { lon, lat };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lon.is_finite() || !self.lat.is_finite() {
            return Err(Error::domain("coordinate is not finite"));
        }
        if !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::domain(format!("longitude {} out of range", self.lon)));
        }
        if !(-MAX_MERCATOR_LAT..=MAX_MERCATOR_LAT).contains(&self.lat) {
            return Err(Error::domain(format!(
                "latitude {} outside the Web Mercator range",
                self.lat
            )));
        }
        Ok(())
    }
}

/// A position on the Web Mercator plane, in meters. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct PlanePoint {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for PlanePoint {
    fn from(v: [f64; 2]) -> Self {
        PlanePoint { x: v[0], y: v[1] }
    }
}

impl From<PlanePoint> for [f64; 2] {
    fn from(p: PlanePoint) -> Self {
        [p.x, p.y]
    }
}

impl PlanePoint {
    pub const fn new(x: f64, y: f64) -> Self {
        PlanePoint { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Forward spherical Web Mercator projection.
pub fn project(p: GeoPoint) -> Result<PlanePoint> {
    p.validate()?;
    let x = EARTH_RADIUS * p.lon.to_radians();
    let y = EARTH_RADIUS * p.lat.to_radians().sin().atanh();
    Ok(PlanePoint { x, y })
}

/// Inverse of [`project`].
pub fn unproject(p: PlanePoint) -> GeoPoint {
    let lon = (p.x / EARTH_RADIUS).to_degrees();
    let lat = (p.y / EARTH_RADIUS).sinh().atan().to_degrees();
    GeoPoint { lon, lat }
}

/// Axis-aligned rectangle on the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    /// An inverted box that any `extend` call replaces.
    pub const EMPTY: BBox = BBox {
        min_x: f64::INFINITY,
        min_y: f64::INFINITY,
        max_x: f64::NEG_INFINITY,
        max_y: f64::NEG_INFINITY,
    };

    pub fn is_empty(&self) -> bool {
        self.min_x > self.max_x || self.min_y > self.max_y
    }

    pub fn extend(&mut self, p: PlanePoint) {
        self.min_x = self.min_x.min(p.x);
        self.min_y = self.min_y.min(p.y);
        self.max_x = self.max_x.max(p.x);
        self.max_y = self.max_y.max(p.y);
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            min_x: self.min_x.min(other.min_x),
            min_y: self.min_y.min(other.min_y),
            max_x: self.max_x.max(other.max_x),
            max_y: self.max_y.max(other.max_y),
        }
    }

    pub fn contains(&self, p: PlanePoint) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn expanded(&self, margin: f64) -> BBox {
        BBox {
            min_x: self.min_x - margin,
            min_y: self.min_y - margin,
            max_x: self.max_x + margin,
            max_y: self.max_y + margin,
        }
    }

    /// The box as a counter-clockwise rectangle polygon. Points on the
    /// upper x/y edges fall outside under the crossing rule; pad with
    /// [`BBox::expanded`] when they must be included.
    pub fn to_polygon(&self) -> Result<Polygon> {
        Polygon::new(vec![
            PlanePoint::new(self.min_x, self.min_y),
            PlanePoint::new(self.max_x, self.min_y),
            PlanePoint::new(self.max_x, self.max_y),
            PlanePoint::new(self.min_x, self.max_y),
        ])
    }
}

/// A simple exterior ring, implicitly closed. Containment follows the
/// even-odd rule whatever the winding or self-intersections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PlanePoint>", into = "Vec<PlanePoint>")]
pub struct Polygon {
    vertices: Vec<PlanePoint>,
    #[serde(skip)]
    bbox: BBox,
}

impl Polygon {
    pub fn new(mut vertices: Vec<PlanePoint>) -> Result<Self> {
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("polygon has a non-finite vertex"));
        }
        // An explicitly closed ring repeats its first vertex.
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        let mut distinct: Vec<PlanePoint> = Vec::with_capacity(3);
        for v in &vertices {
            if !distinct.contains(v) {
                distinct.push(*v);
                if distinct.len() == 3 {
                    break;
                }
            }
        }
        if distinct.len() < 3 {
            return Err(Error::domain("polygon needs at least 3 distinct vertices"));
        }
        let mut bbox = BBox::EMPTY;
        for v in &vertices {
            bbox.extend(*v);
        }
        Ok(Polygon { vertices, bbox })
    }

    pub fn vertices(&self) -> &[PlanePoint] {
        &self.vertices
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    /// Even-odd crossing test with a ray towards +x. Each edge counts on the
    /// half-open y-range `[min(yi, yj), max(yi, yj))`, so a point exactly on
    /// an edge gets whatever the crossing count yields.
    pub fn contains(&self, pt: PlanePoint) -> bool {
        if !self.bbox.contains(pt) {
            return false;
        }
        let vs = &self.vertices;
        let mut inside = false;
        let mut j = vs.len() - 1;
        for i in 0..vs.len() {
            let (a, b) = (vs[i], vs[j]);
            if (a.y > pt.y) != (b.y > pt.y) {
                let x_cross = (b.x - a.x) * (pt.y - a.y) / (b.y - a.y) + a.x;
                if pt.x < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    /// Translates every vertex.
    pub fn translated(&self, dx: f64, dy: f64) -> Result<Polygon> {
        Polygon::new(
            self.vertices
                .iter()
                .map(|v| PlanePoint::new(v.x + dx, v.y + dy))
                .collect(),
        )
    }
}

impl TryFrom<Vec<PlanePoint>> for Polygon {
    type Error = Error;

    fn try_from(v: Vec<PlanePoint>) -> Result<Self> {
        Polygon::new(v)
    }
}

impl From<Polygon> for Vec<PlanePoint> {
    fn from(p: Polygon) -> Self {
        p.vertices
    }
}

pub fn point_in_polygon(pt: PlanePoint, poly: &Polygon) -> bool {
    poly.contains(pt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_square() -> Polygon {
        Polygon::new(vec![
            PlanePoint::new(0.0, 0.0),
            PlanePoint::new(1.0, 0.0),
            PlanePoint::new(1.0, 1.0),
            PlanePoint::new(0.0, 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn projection_origin_and_antimeridian() {
        let o = project(GeoPoint::new(0.0, 0.0).unwrap()).unwrap();
        assert_eq!((o.x, o.y), (0.0, 0.0));
        let e = project(GeoPoint::new(180.0, 0.0).unwrap()).unwrap();
        assert!((e.x - 20_037_508.34).abs() <= 0.01, "{}", e.x);
        assert!(e.y.abs() < 1e-9);
    }

    #[test]
    fn projection_round_trip_manhattan() {
        let p = GeoPoint::new(-73.97, 40.78).unwrap();
        let q = unproject(project(p).unwrap());
        assert!((q.lon - p.lon).abs() < 1e-9);
        assert!((q.lat - p.lat).abs() < 1e-9);
    }

    #[test]
    fn out_of_range_latitude_is_rejected() {
        assert!(matches!(GeoPoint::new(0.0, 86.0), Err(Error::Domain(_))));
        assert!(project(GeoPoint { lon: 0.0, lat: -89.0 }).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn square_containment() {
        let sq = unit_square();
        assert!(sq.contains(PlanePoint::new(0.5, 0.5)));
        assert!(!sq.contains(PlanePoint::new(2.0, 2.0)));
    }

    #[test]
    fn polygon_validation() {
        assert!(Polygon::new(vec![PlanePoint::new(0.0, 0.0), PlanePoint::new(1.0, 1.0)]).is_err());
        let dup = vec![PlanePoint::new(0.0, 0.0), PlanePoint::new(0.0, 0.0), PlanePoint::new(1.0, 1.0)];
        assert!(Polygon::new(dup).is_err());
        let nan = vec![PlanePoint::new(0.0, 0.0), PlanePoint::new(f64::NAN, 0.0), PlanePoint::new(1.0, 1.0)];
        assert!(Polygon::new(nan).is_err());
        // explicit closing vertex is dropped
        let closed = Polygon::new(vec![
            PlanePoint::new(0.0, 0.0),
            PlanePoint::new(1.0, 0.0),
            PlanePoint::new(0.0, 1.0),
            PlanePoint::new(0.0, 0.0),
        ])
        .unwrap();
        assert_eq!(closed.vertices().len(), 3);
    }

    #[test]
    fn self_intersecting_bowtie_uses_even_odd() {
        let bowtie = Polygon::new(vec![
            PlanePoint::new(0.0, 0.0),
            PlanePoint::new(2.0, 2.0),
            PlanePoint::new(2.0, 0.0),
            PlanePoint::new(0.0, 2.0),
        ])
        .unwrap();
        assert!(bowtie.contains(PlanePoint::new(0.2, 1.0)));
        assert!(bowtie.contains(PlanePoint::new(1.8, 1.0)));
        assert!(!bowtie.contains(PlanePoint::new(1.0, 0.2)));
        // winding does not matter
        let mut rev = bowtie.vertices().to_vec();
        rev.reverse();
        let rev = Polygon::new(rev).unwrap();
        assert!(rev.contains(PlanePoint::new(0.2, 1.0)));
    }

    #[test]
    fn collinear_polygon_contains_nothing_off_the_line() {
        let line = Polygon::new(vec![
            PlanePoint::new(0.0, 0.0),
            PlanePoint::new(1.0, 1.0),
            PlanePoint::new(2.0, 2.0),
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let p = PlanePoint::new(rng.gen_range(-1.0..3.0), rng.gen_range(-1.0..3.0));
            assert!(!line.contains(p));
        }
    }

    /// Reference crossing test written with cross-product orientation
    /// instead of the interpolated intersection used above.
    fn reference_even_odd(pt: PlanePoint, vs: &[PlanePoint]) -> bool {
        let mut crossings = 0usize;
        for k in 0..vs.len() {
            let a = vs[k];
            let b = vs[(k + 1) % vs.len()];
            let (lo, hi) = if a.y <= b.y { (a, b) } else { (b, a) };
            if pt.y < lo.y || pt.y >= hi.y {
                continue;
            }
            // pt strictly left of the upward edge lo->hi means the +x ray hits it
            let orient = (hi.x - lo.x) * (pt.y - lo.y) - (hi.y - lo.y) * (pt.x - lo.x);
            if orient > 0.0 {
                crossings += 1;
            }
        }
        crossings % 2 == 1
    }

    fn random_polygon(rng: &mut ChaCha8Rng, verts: usize) -> Polygon {
        let v = (0..verts)
            .map(|_| PlanePoint::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)))
            .collect();
        Polygon::new(v).unwrap()
    }

    #[test]
    fn random_12_gon_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let poly = random_polygon(&mut rng, 12);
        for _ in 0..1000 {
            let p = PlanePoint::new(rng.gen_range(-11.0..11.0), rng.gen_range(-11.0..11.0));
            assert_eq!(poly.contains(p), reference_even_odd(p, poly.vertices()), "{p:?}");
        }
    }

    #[test]
    fn hundred_thousand_random_pairs_match_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut poly = random_polygon(&mut rng, 5);
        for i in 0..100_000 {
            if i % 100 == 0 {
                let verts = rng.gen_range(3..16);
                poly = random_polygon(&mut rng, verts);
            }
            let p = PlanePoint::new(rng.gen_range(-11.0..11.0), rng.gen_range(-11.0..11.0));
            assert_eq!(poly.contains(p), reference_even_odd(p, poly.vertices()));
        }
    }

    proptest::proptest! {
        #[test]
        fn projection_round_trips(lon in -180.0f64..=180.0, lat in -85.0f64..=85.0) {
            let g = GeoPoint::new(lon, lat).unwrap();
            let back = unproject(project(g).unwrap());
            proptest::prop_assert!((back.lon - lon).abs() < 1e-9);
            proptest::prop_assert!((back.lat - lat).abs() < 1e-9);
        }
    }
}
