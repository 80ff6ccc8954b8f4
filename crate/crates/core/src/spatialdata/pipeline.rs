//! Fold-local preprocessing: IDW neighbour features, MinMax scaling and
//! window construction, all fitted on the training side only.

use serde::{Deserialize, Serialize};

use super::idw::{idw_over, sorted_by_distance, IdwConfig, IdwTable, NeighborIndex};
use super::scaler::ScalerParams;
use super::synthetic::SyntheticWorld;
use super::temporal::temporal_encodings;
use super::types::{Dataset, SampleId};
use super::windows::{build_windows, SampleWindow, WINDOW_DAYS};
use crate::error::{Error, Result};
use crate::geoenc::GeoCoord;
use crate::nncore::Tensor2;

/// Columns appended after the `m` station features: the IDW neighbour
/// value and five temporal encodings.
pub const EXTRA_COLUMNS: usize = 6;

pub fn input_width(n_features: usize) -> usize {
    n_features + EXTRA_COLUMNS
}

pub fn column_names(n_features: usize) -> Vec<String> {
    let mut v: Vec<String> = (0..n_features).map(|k| format!("f_{k}")).collect();
    v.extend(["idw", "doy_sin", "doy_cos", "month_sin", "month_cos", "year"].map(String::from));
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub window: usize,
    pub idw: IdwConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            window: WINDOW_DAYS,
            idw: IdwConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreparedFold {
    pub feature_scaler: ScalerParams,
    pub target_scaler: ScalerParams,
    pub idw: IdwTable,
    pub train: Vec<SampleWindow>,
    pub test: Vec<SampleWindow>,
}

fn unscaled_row(
    features: &[Option<f64>],
    idw: Option<f64>,
    day: u32,
    start_year: i32,
) -> Vec<Option<f64>> {
    let mut row = features.to_vec();
    row.push(idw);
    row.extend(temporal_encodings(day, start_year).map(Some));
    row
}

/// Unscaled inputs of one station-day; all `None` when the day has no record.
pub fn feature_row(ds: &Dataset, idw: &IdwTable, station: usize, day: u32) -> Vec<Option<f64>> {
    match ds.record(station, day) {
        Some(r) => unscaled_row(&r.features, idw.get(station, day), day, ds.start_year),
        None => vec![None; input_width(ds.n_features)],
    }
}

fn scale_row(scaler: &ScalerParams, row: &[Option<f64>]) -> Vec<Option<f64>> {
    row.iter()
        .enumerate()
        .map(|(j, v)| v.map(|x| scaler.apply_value(j, x)))
        .collect()
}

/// Builds the train and test windows of one fold. Neighbour values, the
/// feature scaler and the target scaler only ever see `train` targets.
pub fn prepare_fold(ds: &Dataset, train: &[SampleId], test: &[SampleId], cfg: &PipelineConfig) -> Result<PreparedFold> {
    if train.is_empty() {
        return Err(Error::Empty("training fold"));
    }
    if test.is_empty() {
        return Err(Error::Empty("test fold"));
    }
    let n_days = ds.n_days();
    let index = NeighborIndex::new(&ds.stations);
    let idw = IdwTable::build(ds, &index, train, &cfg.idw)?;

    let width = input_width(ds.n_features);
    let feature_scaler = ScalerParams::fit(width, train.iter().map(|id| feature_row(ds, &idw, id.station, id.day)))?;
    let train_targets: Vec<f64> = train
        .iter()
        .map(|&id| ds.target(id).ok_or_else(|| Error::InvalidParameter(format!("training sample {id:?} has no target"))))
        .collect::<Result<_>>()?;
    let target_scaler = ScalerParams::fit_values(&train_targets)?;

    let mut train_by_station = vec![Vec::new(); ds.stations.len()];
    for id in train {
        train_by_station[id.station].push(id.day);
    }
    let mut test_by_station = vec![Vec::new(); ds.stations.len()];
    for id in test {
        test_by_station[id.station].push(id.day);
    }
    let mut train_w = Vec::with_capacity(train.len());
    let mut test_w = Vec::with_capacity(test.len());
    for s in 0..ds.stations.len() {
        if train_by_station[s].is_empty() && test_by_station[s].is_empty() {
            continue;
        }
        let rows: Vec<Vec<Option<f64>>> = (0..n_days)
            .map(|d| scale_row(&feature_scaler, &feature_row(ds, &idw, s, d)))
            .collect();
        for (days, out) in [(&train_by_station[s], &mut train_w), (&test_by_station[s], &mut test_w)] {
            if days.is_empty() {
                continue;
            }
            let mut targets = vec![None; n_days as usize];
            for &d in days {
                let y = ds
                    .target(SampleId { station: s, day: d })
                    .ok_or_else(|| Error::InvalidParameter(format!("sample ({s}, {d}) has no target")))?;
                targets[d as usize] = Some(target_scaler.apply_value(0, y));
            }
            out.extend(build_windows(s, &rows, &targets, cfg.window)?);
        }
    }
    Ok(PreparedFold {
        feature_scaler,
        target_scaler,
        idw,
        train: train_w,
        test: test_w,
    })
}

/// Supplies a scaled input window for an arbitrary location, e.g. a grid cell.
pub trait FeatureProvider {
    /// `None` when the inputs at `coord` on `day` are insufficient.
    fn window_at(&self, coord: &GeoCoord, day: u32) -> Result<Option<SampleWindow>>;
}

fn nearest_station(ds: &Dataset, coord: &GeoCoord) -> Result<usize> {
    sorted_by_distance(coord, &ds.stations, None)
        .first()
        .map(|&(i, _)| i)
        .ok_or(Error::Empty("dataset has no stations"))
}

/// Assembles a window from per-day unscaled rows; `None` from `row` marks a
/// day without data.
fn window_from_rows(
    station: usize,
    day: u32,
    window: usize,
    scaler: &ScalerParams,
    row: impl Fn(u32) -> Result<Option<Vec<Option<f64>>>>,
) -> Result<SampleWindow> {
    let width = scaler.columns();
    let mut data = vec![0.0; window * width];
    let mut mask = vec![false; window * width];
    for t in 0..window {
        let back = (window - 1 - t) as u32;
        if back > day {
            continue;
        }
        if let Some(r) = row(day - back)? {
            for (j, v) in scale_row(scaler, &r).into_iter().enumerate() {
                if let Some(v) = v {
                    data[t * width + j] = v;
                    mask[t * width + j] = true;
                }
            }
        }
    }
    Ok(SampleWindow {
        station,
        end_day: day,
        features: Tensor2::from_vec(window, width, data)?,
        mask,
        target: 0.0,
    })
}

fn all_targets(ds: &Dataset) -> Vec<Vec<Option<f64>>> {
    let mut grid = vec![vec![None; ds.n_days() as usize]; ds.stations.len()];
    for r in &ds.records {
        grid[r.station][r.day as usize] = r.target;
    }
    grid
}

/// Grid features taken from the synthetic fields, with IDW from every
/// station target in `dataset`.
pub struct SyntheticProvider<'a> {
    world: &'a SyntheticWorld,
    dataset: &'a Dataset,
    scaler: &'a ScalerParams,
    config: PipelineConfig,
    targets: Vec<Vec<Option<f64>>>,
}

impl<'a> SyntheticProvider<'a> {
    pub fn new(world: &'a SyntheticWorld, dataset: &'a Dataset, scaler: &'a ScalerParams, config: PipelineConfig) -> Self {
        SyntheticProvider {
            world,
            dataset,
            scaler,
            config,
            targets: all_targets(dataset),
        }
    }
}

impl FeatureProvider for SyntheticProvider<'_> {
    fn window_at(&self, coord: &GeoCoord, day: u32) -> Result<Option<SampleWindow>> {
        let ds = self.dataset;
        let ordered = sorted_by_distance(coord, &ds.stations, None);
        let value = |j: usize, d: u32| self.targets[j].get(d as usize).copied().flatten();
        if idw_over(&ordered, day, &value, &self.config.idw).is_none() {
            return Ok(None);
        }
        let station = ordered.first().map_or(0, |&(i, _)| i);
        let w = window_from_rows(station, day, self.config.window, self.scaler, |d| {
            let f: Vec<Option<f64>> = self.world.features_at(coord, d)?.into_iter().map(Some).collect();
            let idw = idw_over(&ordered, d, &value, &self.config.idw);
            Ok(Some(unscaled_row(&f, idw, d, ds.start_year)))
        })?;
        Ok(Some(w))
    }
}

/// Grid features copied from the nearest station, with IDW at the cell
/// itself. Works for any loaded dataset.
pub struct NearestStationProvider<'a> {
    dataset: &'a Dataset,
    scaler: &'a ScalerParams,
    config: PipelineConfig,
    targets: Vec<Vec<Option<f64>>>,
}

impl<'a> NearestStationProvider<'a> {
    pub fn new(dataset: &'a Dataset, scaler: &'a ScalerParams, config: PipelineConfig) -> Self {
        NearestStationProvider {
            dataset,
            scaler,
            config,
            targets: all_targets(dataset),
        }
    }
}

impl FeatureProvider for NearestStationProvider<'_> {
    fn window_at(&self, coord: &GeoCoord, day: u32) -> Result<Option<SampleWindow>> {
        let ds = self.dataset;
        let station = nearest_station(ds, coord)?;
        if ds.record(station, day).is_none() {
            return Ok(None);
        }
        let ordered = sorted_by_distance(coord, &ds.stations, None);
        let value = |j: usize, d: u32| self.targets[j].get(d as usize).copied().flatten();
        if idw_over(&ordered, day, &value, &self.config.idw).is_none() {
            return Ok(None);
        }
        let w = window_from_rows(station, day, self.config.window, self.scaler, |d| {
            Ok(ds.record(station, d).map(|r| {
                let idw = idw_over(&ordered, d, &value, &self.config.idw);
                unscaled_row(&r.features, idw, d, ds.start_year)
            }))
        })?;
        Ok(Some(w))
    }
}
