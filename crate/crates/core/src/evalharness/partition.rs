use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geoenc::GeoCoord;
use crate::spatialdata::{SampleId, Station};

/// Side of a checkerboard. `A` cells have even `row + col` and form
/// partition 1; `B` cells form partition 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }

    /// 1 for `A`, 2 for `B`.
    pub fn partition_number(self) -> u8 {
        match self {
            Side::A => 1,
            Side::B => 2,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.partition_number())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionKind {
    RandomSample { fraction: f64 },
    SpatialStation { fraction: f64 },
    Checkerboard { delta: f64, anchor: GeoCoord },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub kind: PartitionKind,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn random(fraction: f64, seed: u64) -> Self {
        PartitionSpec {
            kind: PartitionKind::RandomSample { fraction },
            seed,
        }
    }

    pub fn spatial(fraction: f64, seed: u64) -> Self {
        PartitionSpec {
            kind: PartitionKind::SpatialStation { fraction },
            seed,
        }
    }

    /// Checkerboard anchored at (0°, 0°).
    pub fn checkerboard(delta: f64) -> Self {
        PartitionSpec {
            kind: PartitionKind::Checkerboard {
                delta,
                anchor: GeoCoord { lat: 0.0, lon: 0.0 },
            },
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            PartitionKind::RandomSample { fraction } | PartitionKind::SpatialStation { fraction } => {
                check_fraction(fraction)
            }
            PartitionKind::Checkerboard { delta, anchor } => {
                check_delta(delta)?;
                anchor.validate()
            }
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            PartitionKind::RandomSample { .. } => "random".into(),
            PartitionKind::SpatialStation { .. } => "spatial".into(),
            PartitionKind::Checkerboard { delta, .. } => format!("checkerboard-{delta}"),
        }
    }
}

/// Train/test split of a sample set. Checkerboard folds also carry the side
/// of every station.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub train: Vec<SampleId>,
    pub test: Vec<SampleId>,
    pub sides: Option<Vec<Side>>,
}

impl FoldAssignment {
    /// `true` when `train` and `test` are disjoint and together are exactly
    /// `samples`.
    pub fn is_partition_of(&self, samples: &[SampleId]) -> bool {
        let train: BTreeSet<_> = self.train.iter().collect();
        let test: BTreeSet<_> = self.test.iter().collect();
        let all: BTreeSet<_> = samples.iter().collect();
        train.len() == self.train.len()
            && test.len() == self.test.len()
            && train.is_disjoint(&test)
            && train.len() + test.len() == all.len()
            && train.union(&test).copied().collect::<BTreeSet<_>>() == all
    }

    /// SHA-256 of the sorted test ids, used to pin folds in manifests.
    pub fn hash(&self) -> String {
        let mut test = self.test.clone();
        test.sort();
        let mut h = Sha256::new();
        for id in &test {
            h.update(format!("{},{};", id.station, id.day).as_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn test_stations(&self) -> BTreeSet<usize> {
        self.test.iter().map(|id| id.station).collect()
    }

    pub fn train_stations(&self) -> BTreeSet<usize> {
        self.train.iter().map(|id| id.station).collect()
    }
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!("test fraction must be in (0, 1), got {fraction}")));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("checkerboard delta must be > 0, got {delta}")));
    }
    Ok(())
}

fn holdout_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
}

/// Holds out `fraction` of the samples at random. One station can appear on
/// both sides on different days.
pub fn partition_random(samples: &[SampleId], fraction: f64, seed: u64) -> Result<FoldAssignment> {
    check_fraction(fraction)?;
    if samples.len() < 2 {
        return Err(Error::Empty("partition_random needs at least two samples"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort();
    sorted.dedup();
    let mut shuffled = sorted.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = holdout_count(shuffled.len(), fraction);
    let test: BTreeSet<SampleId> = shuffled[..k].iter().copied().collect();
    let (test, train): (Vec<SampleId>, Vec<SampleId>) = sorted.into_iter().partition(|id| test.contains(id));
    Ok(FoldAssignment { train, test, sides: None })
}

/// Holds out every sample of `fraction` of the stations.
pub fn partition_spatial(
    n_stations: usize,
    samples: &[SampleId],
    fraction: f64,
    seed: u64,
) -> Result<FoldAssignment> {
    check_fraction(fraction)?;
    if n_stations < 10 {
        return Err(Error::InvalidParameter(format!(
            "spatial partition needs at least 10 stations, got {n_stations}"
        )));
    }
    let mut ids: Vec<usize> = (0..n_stations).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = holdout_count(n_stations, fraction);
    let held: BTreeSet<usize> = ids[..k].iter().copied().collect();
    let mut sorted = samples.to_vec();
    sorted.sort();
    sorted.dedup();
    if let Some(bad) = sorted.iter().find(|id| id.station >= n_stations) {
        return Err(Error::InvalidParameter(format!("sample {bad:?} refers to an unknown station")));
    }
    let (test, train): (Vec<SampleId>, Vec<SampleId>) = sorted.into_iter().partition(|id| held.contains(&id.station));
    Ok(FoldAssignment { train, test, sides: None })
}

/// `(row, col)` of the checkerboard cell containing `c`.
pub fn checkerboard_cell(c: &GeoCoord, delta: f64, anchor: &GeoCoord) -> (i64, i64) {
    (
        ((c.lat - anchor.lat) / delta).floor() as i64,
        ((c.lon - anchor.lon) / delta).floor() as i64,
    )
}

pub fn checkerboard_side(c: &GeoCoord, delta: f64, anchor: &GeoCoord) -> Side {
    let (r, col) = checkerboard_cell(c, delta, anchor);
    if (r + col).rem_euclid(2) == 0 {
        Side::A
    } else {
        Side::B
    }
}

/// Side of every station.
pub fn partition_checkerboard(stations: &[Station], delta: f64, anchor: &GeoCoord) -> Result<Vec<Side>> {
    check_delta(delta)?;
    Ok(stations.iter().map(|s| checkerboard_side(&s.coord, delta, anchor)).collect())
}

/// Fold that trains on `train_side` and tests on the other side.
pub fn checkerboard_fold(sides: &[Side], samples: &[SampleId], train_side: Side) -> Result<FoldAssignment> {
    let mut sorted = samples.to_vec();
    sorted.sort();
    sorted.dedup();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for id in sorted {
        let side = *sides
            .get(id.station)
            .ok_or_else(|| Error::InvalidParameter(format!("sample {id:?} refers to an unknown station")))?;
        if side == train_side {
            train.push(id);
        } else {
            test.push(id);
        }
    }
    Ok(FoldAssignment {
        train,
        test,
        sides: Some(sides.to_vec()),
    })
}

/// Mean great-circle distance from each test station to its nearest
/// training station.
pub fn mean_nearest_train_distance(stations: &[Station], fold: &FoldAssignment) -> Option<f64> {
    let train = fold.train_stations();
    let test = fold.test_stations();
    if train.is_empty() || test.is_empty() {
        return None;
    }
    let total: f64 = test
        .iter()
        .map(|&t| {
            train
                .iter()
                .map(|&r| stations[t].coord.distance_km(&stations[r].coord))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    Some(total / test.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(stations: usize, days: u32) -> Vec<SampleId> {
        (0..stations)
            .flat_map(|s| (0..days).map(move |d| SampleId { station: s, day: d }))
            .collect()
    }

    #[test]
    fn hand_computed_cells() {
        let o = GeoCoord { lat: 0.0, lon: 0.0 };
        let p = GeoCoord::new(40.0, -105.0).unwrap();
        assert_eq!(checkerboard_cell(&p, 8.0, &o), (5, -14));
        assert_eq!(checkerboard_side(&p, 8.0, &o), Side::B);
        let q = GeoCoord::new(39.9, -75.1).unwrap();
        assert_eq!(checkerboard_cell(&q, 8.0, &o), (4, -10));
        assert_eq!(checkerboard_side(&q, 8.0, &o), Side::A);
    }

    #[test]
    fn counts() {
        let s = samples(100, 10);
        let f = partition_random(&s, 0.1, 3).unwrap();
        assert_eq!(f.test.len(), 100);
        assert!(f.is_partition_of(&s));
        assert_eq!(f, partition_random(&s, 0.1, 3).unwrap());
        let g = partition_spatial(100, &s, 0.1, 3).unwrap();
        assert_eq!(g.test_stations().len(), 10);
        assert!(g.test_stations().is_disjoint(&g.train_stations()));
        assert!(g.is_partition_of(&s));
    }

    #[test]
    fn rejects_bad_arguments() {
        let s = samples(20, 2);
        assert!(partition_random(&s, 0.0, 1).is_err());
        assert!(partition_random(&s, 1.0, 1).is_err());
        assert!(partition_spatial(9, &samples(9, 2), 0.1, 1).is_err());
        assert!(partition_checkerboard(&[], 0.0, &GeoCoord { lat: 0.0, lon: 0.0 }).is_err());
    }

    #[test]
    fn swap_covers_every_station_once() {
        let st: Vec<Station> = (0..30)
            .map(|i| Station::new(format!("s{i}"), 25.0 + (i as f64 * 0.83) % 24.0, -124.0 + i as f64 * 1.9).unwrap())
            .collect();
        let sides = partition_checkerboard(&st, 8.0, &GeoCoord { lat: 0.0, lon: 0.0 }).unwrap();
        let s = samples(30, 3);
        let ab = checkerboard_fold(&sides, &s, Side::A).unwrap();
        let ba = checkerboard_fold(&sides, &s, Side::B).unwrap();
        assert!(ab.is_partition_of(&s) && ba.is_partition_of(&s));
        let t1 = ab.test_stations();
        let t2 = ba.test_stations();
        assert!(t1.is_disjoint(&t2));
        assert_eq!(t1.len() + t2.len(), 30);
        assert_ne!(ab.hash(), ba.hash());
    }
}
