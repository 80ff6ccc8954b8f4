use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Geographic coordinate in degrees. Latitude lies in `[-90, 90]`,
/// longitude in `(-180, 180]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoCoord {
    pub lat: f64,
    pub lon: f64,
}

impl GeoCoord {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let c = GeoCoord { lat, lon };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason| Error::InvalidCoordinate {
            lat: self.lat,
            lon: self.lon,
            reason,
        };
        if !self.lat.is_finite() || !self.lon.is_finite() {
            return Err(bad("non-finite"));
        }
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(bad("latitude outside [-90, 90]"));
        }
        if !(self.lon > -180.0 && self.lon <= 180.0) {
            return Err(bad("longitude outside (-180, 180]"));
        }
        Ok(())
    }

    /// Key on a 1e-5 degree lattice.
    pub fn quantized(&self) -> (i64, i64) {
        ((self.lat * 1e5).round() as i64, (self.lon * 1e5).round() as i64)
    }

    /// Great-circle distance in kilometres (haversine, spherical Earth).
    pub fn distance_km(&self, other: &GeoCoord) -> f64 {
        let (p1, p2) = (self.lat.to_radians(), other.lat.to_radians());
        let dp = p2 - p1;
        let dl = (other.lon - self.lon).to_radians();
        let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
    }
}
