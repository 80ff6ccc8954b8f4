use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::network::Model;
use crate::error::{Error, Result};
use crate::geoenc::GeoCoord;
use crate::scalar::Scalar;
use crate::spatialdata::FeatureProvider;

/// Latitude/longitude box in degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BBox {
    pub fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Result<Self> {
        let b = BBox {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
        };
        let ok = [lat_min, lat_max, lon_min, lon_max].iter().all(|v| v.is_finite())
            && lat_min < lat_max
            && lon_min < lon_max
            && (-90.0..=90.0).contains(&lat_min)
            && (-90.0..=90.0).contains(&lat_max)
            && (-180.0..=180.0).contains(&lon_min)
            && (-180.0..=180.0).contains(&lon_max);
        if !ok {
            return Err(Error::InvalidParameter(format!("empty or invalid bounding box {b:?}")));
        }
        Ok(b)
    }

    /// Cell centres at `resolution` degrees, row-major from the southern
    /// edge, west to east within a row.
    pub fn cells(&self, resolution: f64) -> Result<Vec<GeoCoord>> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::InvalidParameter(format!("grid resolution must be > 0, got {resolution}")));
        }
        let rows = ((self.lat_max - self.lat_min) / resolution - 1e-9).ceil().max(1.0) as usize;
        let cols = ((self.lon_max - self.lon_min) / resolution - 1e-9).ceil().max(1.0) as usize;
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let lat = (self.lat_min + (r as f64 + 0.5) * resolution).min(self.lat_max);
            for c in 0..cols {
                let lon = (self.lon_min + (c as f64 + 0.5) * resolution).min(self.lon_max);
                out.push(GeoCoord::new(lat, lon)?);
            }
        }
        Ok(out)
    }
}

/// `lat_min,lat_max,lon_min,lon_max`
impl FromStr for BBox {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidParameter(format!("bounding box '{s}': {e}")))?;
        match parts[..] {
            [a, b, c, d] => BBox::new(a, b, c, d),
            _ => Err(Error::InvalidParameter(format!(
                "bounding box '{s}' must be lat_min,lat_max,lon_min,lon_max"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridCell {
    pub coord: GeoCoord,
    /// Estimate in target units; `None` when the cell has too few inputs.
    pub estimate: Option<f64>,
}

/// Estimates on every cell of `bbox` for `day`.
pub fn predict_grid<F: Scalar>(
    model: &Model<F>,
    bbox: &BBox,
    resolution: f64,
    day: u32,
    provider: &dyn FeatureProvider,
) -> Result<Vec<GridCell>> {
    bbox.cells(resolution)?
        .into_iter()
        .map(|coord| {
            let estimate = match provider.window_at(&coord, day)? {
                Some(w) if w.step_mask().iter().any(|&b| b) => Some(model.unscale(model.forward(&w, &coord)?)),
                _ => None,
            };
            Ok(GridCell { coord, estimate })
        })
        .collect()
}

/// `lat,lon,estimate`; an empty estimate marks a cell that was not
/// predicted.
pub fn grid_to_csv(cells: &[GridCell]) -> String {
    let mut s = String::from("lat,lon,estimate\n");
    for c in cells {
        let e = c.estimate.map(|v| format!("{v:.6}")).unwrap_or_default();
        let _ = writeln!(s, "{:.6},{:.6},{}", c.coord.lat, c.coord.lon, e);
    }
    s
}

pub fn write_grid_csv(cells: &[GridCell], path: &Path) -> Result<()> {
    fs::write(path, grid_to_csv(cells)).map_err(|e| Error::io(path, e))
}
