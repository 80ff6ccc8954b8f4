//! k-nearest-neighbour inverse-distance weighting of station targets.

use serde::{Deserialize, Serialize};

use super::types::{Dataset, SampleId, Station};
use crate::error::{Error, Result};
use crate::geoenc::GeoCoord;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdwConfig {
    pub k: usize,
    pub power: f64,
}

impl Default for IdwConfig {
    fn default() -> Self {
        IdwConfig { k: 9, power: 2.0 }
    }
}

impl IdwConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("idw k must be positive".into()));
        }
        if !(self.power > 0.0) || !self.power.is_finite() {
            return Err(Error::InvalidParameter(format!("idw power must be > 0, got {}", self.power)));
        }
        Ok(())
    }
}

/// `Σ wᵢ yᵢ / Σ wᵢ` with `wᵢ = dᵢ^(−p)` over `(distance, value)` pairs.
/// Neighbours at zero distance are returned directly (their mean).
pub fn idw_estimate(neighbors: &[(f64, f64)], power: f64) -> Option<f64> {
    if neighbors.is_empty() {
        return None;
    }
    let exact: Vec<f64> = neighbors.iter().filter(|(d, _)| *d == 0.0).map(|&(_, v)| v).collect();
    if !exact.is_empty() {
        return Some(exact.iter().sum::<f64>() / exact.len() as f64);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(d, v) in neighbors {
        let w = d.powf(-power);
        num += w * v;
        den += w;
    }
    Some(num / den)
}

/// Other stations ordered by great-circle distance from each station.
#[derive(Clone, Debug)]
pub struct NeighborIndex {
    order: Vec<Vec<(usize, f64)>>,
}

impl NeighborIndex {
    pub fn new(stations: &[Station]) -> Self {
        let order = stations
            .iter()
            .enumerate()
            .map(|(i, s)| sorted_by_distance(&s.coord, stations, Some(i)))
            .collect();
        NeighborIndex { order }
    }

    /// Neighbours of station `i`, nearest first, never including `i`.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.order[i]
    }
}

pub(crate) fn sorted_by_distance(at: &GeoCoord, stations: &[Station], exclude: Option<usize>) -> Vec<(usize, f64)> {
    let mut v: Vec<(usize, f64)> = stations
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != exclude)
        .map(|(j, s)| (j, at.distance_km(&s.coord)))
        .collect();
    v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    v
}

pub(crate) fn idw_over(
    ordered: &[(usize, f64)],
    day: u32,
    value: &dyn Fn(usize, u32) -> Option<f64>,
    cfg: &IdwConfig,
) -> Option<f64> {
    let mut used = Vec::with_capacity(cfg.k);
    for &(j, d) in ordered {
        if let Some(v) = value(j, day) {
            used.push((d, v));
            if used.len() == cfg.k {
                break;
            }
        }
    }
    idw_estimate(&used, cfg.power)
}

/// IDW of the `k` nearest stations other than `target` that have a value on
/// `day`. `None` when no such station exists.
pub fn knn_idw(
    target: usize,
    day: u32,
    stations: &[Station],
    value: &dyn Fn(usize, u32) -> Option<f64>,
    cfg: &IdwConfig,
) -> Option<f64> {
    let ordered = sorted_by_distance(&stations[target].coord, stations, Some(target));
    idw_over(&ordered, day, value, cfg)
}

/// IDW at an arbitrary coordinate (no station is excluded).
pub fn idw_at(
    coord: &GeoCoord,
    day: u32,
    stations: &[Station],
    value: &dyn Fn(usize, u32) -> Option<f64>,
    cfg: &IdwConfig,
) -> Option<f64> {
    let ordered = sorted_by_distance(coord, stations, None);
    idw_over(&ordered, day, value, cfg)
}

/// IDW feature for every station and day, computed from a pool of allowed
/// station-day targets.
#[derive(Clone, Debug, PartialEq)]
pub struct IdwTable {
    values: Vec<Vec<Option<f64>>>,
}

impl IdwTable {
    /// `pool` lists the samples whose targets may be used as neighbour values.
    pub fn build(ds: &Dataset, index: &NeighborIndex, pool: &[SampleId], cfg: &IdwConfig) -> Result<Self> {
        cfg.validate()?;
        let n_days = ds.n_days() as usize;
        let mut grid = vec![vec![None; n_days]; ds.stations.len()];
        for id in pool {
            if let Some(y) = ds.target(*id) {
                grid[id.station][id.day as usize] = Some(y);
            }
        }
        let lookup = |j: usize, d: u32| grid[j][d as usize];
        let values = (0..ds.stations.len())
            .map(|i| {
                (0..n_days as u32)
                    .map(|d| idw_over(index.neighbors(i), d, &lookup, cfg))
                    .collect()
            })
            .collect();
        Ok(IdwTable { values })
    }

    pub fn get(&self, station: usize, day: u32) -> Option<f64> {
        self.values.get(station).and_then(|v| v.get(day as usize)).copied().flatten()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_weights() {
        let v = idw_estimate(&[(1.0, 10.0), (2.0, 40.0)], 1.0).unwrap();
        assert!((v - 20.0).abs() < 1e-12);
        let v = idw_estimate(&[(1.0, 10.0), (2.0, 40.0)], 2.0).unwrap();
        assert!((v - 16.0).abs() < 1e-12);
    }

    #[test]
    fn constant_values_and_zero_distance() {
        let v = idw_estimate(&[(0.3, 7.0), (5.0, 7.0), (90.0, 7.0)], 2.0).unwrap();
        assert!((v - 7.0).abs() < 1e-12);
        assert_eq!(idw_estimate(&[(0.0, 3.0), (1.0, 100.0)], 2.0), Some(3.0));
        assert_eq!(idw_estimate(&[], 2.0), None);
    }

    #[test]
    fn self_is_excluded_and_missing_values_skipped() {
        let st = vec![
            Station::new("a", 40.0, -100.0).unwrap(),
            Station::new("b", 40.0, -101.0).unwrap(),
            Station::new("c", 40.0, -103.0).unwrap(),
        ];
        let vals = [Some(1000.0), None, Some(5.0)];
        let f = |j: usize, _d: u32| vals[j];
        let cfg = IdwConfig::default();
        assert_eq!(knn_idw(0, 0, &st, &f, &cfg), Some(5.0));
        let none = |_: usize, _: u32| None;
        assert_eq!(knn_idw(0, 0, &st, &none, &cfg), None);
    }

    #[test]
    fn respects_k() {
        let st: Vec<Station> = (0..5).map(|i| Station::new(format!("s{i}"), 40.0, -100.0 - i as f64).unwrap()).collect();
        let f = |j: usize, _d: u32| Some(j as f64);
        let cfg = IdwConfig { k: 1, power: 2.0 };
        assert_eq!(knn_idw(0, 0, &st, &f, &cfg), Some(1.0));
    }
}
