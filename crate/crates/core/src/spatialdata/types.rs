use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geoenc::GeoCoord;

/// Calendar year that day index 0 falls in, unless a dataset says otherwise.
pub const DEFAULT_START_YEAR: i32 = 2021;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub coord: GeoCoord,
}

impl Station {
    pub fn new(id: impl Into<String>, lat: f64, lon: f64) -> Result<Self> {
        Ok(Station {
            id: id.into(),
            coord: GeoCoord::new(lat, lon)?,
        })
    }
}

/// One station-day. `None` marks a missing feature or target.
#[derive(Clone, Debug, PartialEq)]
pub struct DailyRecord {
    /// Index into [`Dataset::stations`].
    pub station: usize,
    pub day: u32,
    pub features: Vec<Option<f64>>,
    pub target: Option<f64>,
}

/// A station-day with an observed target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SampleId {
    pub station: usize,
    pub day: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub stations: Vec<Station>,
    /// Sorted by `(station, day)`.
    pub records: Vec<DailyRecord>,
    pub n_features: usize,
    pub start_year: i32,
    index: BTreeMap<(usize, u32), usize>,
}

impl Dataset {
    /// Validates and sorts the records.
    pub fn new(stations: Vec<Station>, mut records: Vec<DailyRecord>, n_features: usize) -> Result<Self> {
        let mut ids = HashSet::new();
        for s in &stations {
            s.coord.validate()?;
            if !ids.insert(s.id.as_str()) {
                return Err(Error::InvalidParameter(format!("duplicate station id '{}'", s.id)));
            }
        }
        records.sort_by_key(|r| (r.station, r.day));
        let mut index = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if r.station >= stations.len() {
                return Err(Error::InvalidParameter(format!(
                    "record refers to station {} but only {} exist",
                    r.station,
                    stations.len()
                )));
            }
            if r.features.len() != n_features {
                return Err(Error::dim("record features", n_features, r.features.len()));
            }
            let finite = r.features.iter().flatten().chain(r.target.iter()).all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonFinite(format!(
                    "record for station '{}' day {}",
                    stations[r.station].id, r.day
                )));
            }
            if index.insert((r.station, r.day), i).is_some() {
                return Err(Error::InvalidParameter(format!(
                    "duplicate record for station '{}' day {}",
                    stations[r.station].id, r.day
                )));
            }
        }
        Ok(Dataset {
            stations,
            records,
            n_features,
            start_year: DEFAULT_START_YEAR,
            index,
        })
    }

    pub fn with_start_year(mut self, year: i32) -> Self {
        self.start_year = year;
        self
    }

    /// One past the largest day index.
    pub fn n_days(&self) -> u32 {
        self.records.iter().map(|r| r.day + 1).max().unwrap_or(0)
    }

    pub fn record(&self, station: usize, day: u32) -> Option<&DailyRecord> {
        self.index.get(&(station, day)).map(|&i| &self.records[i])
    }

    pub fn station_index(&self, id: &str) -> Option<usize> {
        self.stations.iter().position(|s| s.id == id)
    }

    pub fn coords(&self) -> Vec<GeoCoord> {
        self.stations.iter().map(|s| s.coord).collect()
    }

    /// Every station-day with an observed target, in `(station, day)` order.
    pub fn samples(&self) -> Vec<SampleId> {
        self.records
            .iter()
            .filter(|r| r.target.is_some())
            .map(|r| SampleId {
                station: r.station,
                day: r.day,
            })
            .collect()
    }

    pub fn target(&self, id: SampleId) -> Option<f64> {
        self.record(id.station, id.day).and_then(|r| r.target)
    }

    /// Replaces one target value; used by perturbation checks.
    pub fn set_target(&mut self, id: SampleId, value: Option<f64>) -> Result<()> {
        let &i = self
            .index
            .get(&(id.station, id.day))
            .ok_or_else(|| Error::InvalidParameter(format!("no record for {id:?}")))?;
        self.records[i].target = value;
        Ok(())
    }
}
