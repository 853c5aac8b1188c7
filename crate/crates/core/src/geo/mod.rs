//! Spatial universe: coordinates, regions, places, grids and adjacency.

mod adjacency;
mod connectivity;
mod grid;

pub use adjacency::{adjacency_matrix, AdjacencyMatrix, AdjacencyMetric, Route};
pub use connectivity::{connectivity_index, connectivity_indices, ConnectivityIndex};
pub use grid::{build_grid, Grid};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean earth radius used by the haversine distance.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;
/// Length of one degree of latitude, also used for the equirectangular grid.
pub const METERS_PER_DEG_LAT: f64 = 111_320.0;

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("region {region} has no {attribute} value")]
    MissingAttribute { region: String, attribute: &'static str },
    #[error("unknown region id {0}")]
    UnknownRegion(String),
    #[error("need at least 2 regions, got {0}")]
    TooFewRegions(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    /// Great-circle distance in metres.
    pub fn haversine_m(&self, other: &LatLon) -> f64 {
        let (phi1, phi2) = (self.lat.to_radians(), other.lat.to_radians());
        let dphi = phi2 - phi1;
        let dlambda = (other.lon - self.lon).to_radians();
        let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
    }

    /// Offset by metric north/east displacements using the local
    /// equirectangular approximation.
    pub fn offset_m(&self, north_m: f64, east_m: f64) -> LatLon {
        LatLon {
            lat: self.lat + north_m / METERS_PER_DEG_LAT,
            lon: self.lon + east_m / meters_per_deg_lon(self.lat),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.lat.is_finite() && self.lon.is_finite()
    }
}

pub(crate) fn meters_per_deg_lon(lat: f64) -> f64 {
    METERS_PER_DEG_LAT * lat.to_radians().cos()
}

/// Axis-aligned lat/lon rectangle in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl BBox {
    pub fn new(min_lat: f64, min_lon: f64, max_lat: f64, max_lon: f64) -> Result<Self, GeoError> {
        let b = Self { min_lat, min_lon, max_lat, max_lon };
        b.validate()?;
        Ok(b)
    }

    /// Rectangle of the given metric extent whose south-west corner is `origin`.
    pub fn from_origin_m(origin: LatLon, height_m: f64, width_m: f64) -> Result<Self, GeoError> {
        let ne = origin.offset_m(height_m, width_m);
        Self::new(origin.lat, origin.lon, ne.lat, ne.lon)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        let finite = [self.min_lat, self.min_lon, self.max_lat, self.max_lon]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.min_lat < self.max_lat) || !(self.min_lon < self.max_lon) {
            return Err(GeoError::InvalidInput(format!("degenerate bbox {self:?}")));
        }
        Ok(())
    }

    pub fn centroid(&self) -> LatLon {
        LatLon::new((self.min_lat + self.max_lat) / 2.0, (self.min_lon + self.max_lon) / 2.0)
    }

    /// Closed containment.
    pub fn contains(&self, p: &LatLon) -> bool {
        p.lat >= self.min_lat && p.lat <= self.max_lat && p.lon >= self.min_lon && p.lon <= self.max_lon
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            min_lat: self.min_lat.min(other.min_lat),
            min_lon: self.min_lon.min(other.min_lon),
            max_lat: self.max_lat.max(other.max_lat),
            max_lon: self.max_lon.max(other.max_lon),
        }
    }

    /// True when the two rectangles touch along an edge of positive length.
    pub fn shares_border(&self, other: &BBox) -> bool {
        const EPS: f64 = 1e-9;
        let lat_overlap = self.max_lat.min(other.max_lat) - self.min_lat.max(other.min_lat);
        let lon_overlap = self.max_lon.min(other.max_lon) - self.min_lon.max(other.min_lon);
        let touch_ns = (self.max_lat - other.min_lat).abs() < EPS || (other.max_lat - self.min_lat).abs() < EPS;
        let touch_ew = (self.max_lon - other.min_lon).abs() < EPS || (other.max_lon - self.min_lon).abs() < EPS;
        (touch_ns && lon_overlap > EPS) || (touch_ew && lat_overlap > EPS)
    }
}

/// A spatial unit with the demographic attributes used for ranking adjacency.
///
/// Ranking attributes are optional because grid-built regions start without
/// them; rank adjacency refuses regions that lack the attribute it sorts by.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: String,
    pub bbox: BBox,
    pub population_density: Option<f64>,
    pub literacy_rate: Option<f64>,
    pub medical_facilities: Option<u32>,
    pub aggregate_flow: Option<f64>,
}

impl Region {
    pub fn new(id: impl Into<String>, bbox: BBox) -> Self {
        Self {
            id: id.into(),
            bbox,
            population_density: None,
            literacy_rate: None,
            medical_facilities: None,
            aggregate_flow: None,
        }
    }

    pub fn centroid(&self) -> LatLon {
        self.bbox.centroid()
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        self.bbox.validate()?;
        let bad = |what: &str| GeoError::InvalidInput(format!("region {}: {what}", self.id));
        if self.id.is_empty() {
            return Err(bad("empty id"));
        }
        if let Some(d) = self.population_density {
            if !(d.is_finite() && d >= 0.0) {
                return Err(bad("population density must be finite and non-negative"));
            }
        }
        if let Some(l) = self.literacy_rate {
            if !(0.0..=1.0).contains(&l) {
                return Err(bad("literacy rate outside [0,1]"));
            }
        }
        if let Some(f) = self.aggregate_flow {
            if !(f.is_finite() && f >= 0.0) {
                return Err(bad("aggregate flow must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoiType {
    Airport,
    RailJunction,
    Hospital,
    Commercial,
    Park,
    Residence,
    Other,
}

impl PoiType {
    pub const ALL: [PoiType; 7] = [
        PoiType::Airport,
        PoiType::RailJunction,
        PoiType::Hospital,
        PoiType::Commercial,
        PoiType::Park,
        PoiType::Residence,
        PoiType::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PoiType::Airport => "airport",
            PoiType::RailJunction => "rail_junction",
            PoiType::Hospital => "hospital",
            PoiType::Commercial => "commercial",
            PoiType::Park => "park",
            PoiType::Residence => "residence",
            PoiType::Other => "other",
        }
    }
}

impl std::str::FromStr for PoiType {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PoiType::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| GeoError::InvalidInput(format!("unknown poi type {s:?}")))
    }
}

/// Point of interest. `opening_hours` is a daily window in seconds since
/// midnight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Place {
    pub id: String,
    pub poi_type: PoiType,
    pub location: LatLon,
    pub area_m2: f64,
    pub opening_hours: Option<(u32, u32)>,
    pub region_id: Option<String>,
}

impl Place {
    pub fn new(id: impl Into<String>, poi_type: PoiType, location: LatLon) -> Self {
        Self {
            id: id.into(),
            poi_type,
            location,
            area_m2: 0.0,
            opening_hours: None,
            region_id: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haversine_one_degree_of_latitude() {
        let a = LatLon::new(0.0, 0.0);
        let b = LatLon::new(1.0, 0.0);
        let d = a.haversine_m(&b);
        assert!((d - 111_195.0).abs() < 5.0, "{d}");
    }

    #[test]
    fn offset_round_trips_through_haversine() {
        let a = LatLon::new(22.57, 88.36);
        let b = a.offset_m(300.0, 400.0);
        assert!((a.haversine_m(&b) - 500.0).abs() < 2.0);
    }

    #[test]
    fn degenerate_bbox_rejected() {
        assert!(BBox::new(1.0, 1.0, 1.0, 2.0).is_err());
        assert!(BBox::new(1.0, 2.0, 3.0, 1.0).is_err());
        assert!(BBox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn border_detection() {
        let a = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let b = BBox::new(0.0, 1.0, 1.0, 2.0).unwrap();
        let corner = BBox::new(1.0, 1.0, 2.0, 2.0).unwrap();
        assert!(a.shares_border(&b));
        assert!(!a.shares_border(&corner));
    }

    #[test]
    fn region_attribute_validation() {
        let mut r = Region::new("a", BBox::new(0.0, 0.0, 1.0, 1.0).unwrap());
        r.literacy_rate = Some(1.2);
        assert!(r.validate().is_err());
        r.literacy_rate = Some(0.7);
        r.population_density = Some(-1.0);
        assert!(r.validate().is_err());
    }
}
