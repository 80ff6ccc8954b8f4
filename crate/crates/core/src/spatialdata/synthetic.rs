//! Synthetic CONUS-like station network with smooth spatiotemporal feature
//! fields and a location-dependent target offset that no feature carries.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::types::{DailyRecord, Dataset, Station};
use crate::error::{Error, Result};
use crate::geoenc::GeoCoord;
use crate::nncore::Tensor2;

pub const CONUS_LAT: (f64, f64) = (25.0, 49.0);
pub const CONUS_LON: (f64, f64) = (-124.5, -67.5);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_stations: usize,
    pub n_days: u32,
    pub n_features: usize,
    /// Scale of the withheld regional offset added to the target.
    pub region_offset_amp: f64,
    pub noise_sd: f64,
    pub feature_missing_rate: f64,
    pub target_missing_rate: f64,
    /// Width of the context vectors used for contrastive pretraining.
    pub context_dim: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_stations: 150,
            n_days: 120,
            n_features: 8,
            region_offset_amp: 2.0,
            noise_sd: 0.3,
            feature_missing_rate: 0.02,
            target_missing_rate: 0.05,
            context_dim: 32,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if self.n_stations < 20 {
            v.push(format!("n_stations must be >= 20, got {}", self.n_stations));
        }
        if self.n_days < 42 {
            v.push(format!("n_days must be >= 42, got {}", self.n_days));
        }
        if self.n_features < 4 {
            v.push(format!("n_features must be >= 4, got {}", self.n_features));
        }
        if !(self.region_offset_amp >= 0.0) || !self.region_offset_amp.is_finite() {
            v.push(format!("region_offset_amp must be >= 0, got {}", self.region_offset_amp));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            v.push(format!("noise_sd must be >= 0, got {}", self.noise_sd));
        }
        for (name, r) in [
            ("feature_missing_rate", self.feature_missing_rate),
            ("target_missing_rate", self.target_missing_rate),
        ] {
            if !(0.0..1.0).contains(&r) {
                v.push(format!("{name} must be in [0, 1), got {r}"));
            }
        }
        if self.context_dim == 0 {
            v.push("context_dim must be positive".into());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

/// Sum of random plane waves with unit variance.
#[derive(Clone, Debug, PartialEq)]
struct WaveField {
    /// `(kx, ky, phase)` in cycles per degree.
    waves: Vec<(f64, f64, f64)>,
}

impl WaveField {
    fn new<R: Rng>(rng: &mut R, n: usize, wavelength: (f64, f64)) -> Self {
        let waves = (0..n)
            .map(|_| {
                let lambda = rng.random_range(wavelength.0..wavelength.1);
                let theta = rng.random_range(0.0..2.0 * PI);
                (theta.cos() / lambda, theta.sin() / lambda, rng.random_range(0.0..2.0 * PI))
            })
            .collect();
        WaveField { waves }
    }

    fn eval(&self, c: &GeoCoord) -> f64 {
        let x = c.lon * 37f64.to_radians().cos();
        let y = c.lat;
        let a = (2.0 / self.waves.len() as f64).sqrt();
        self.waves
            .iter()
            .map(|&(kx, ky, p)| (2.0 * PI * (kx * x + ky * y) + p).cos())
            .sum::<f64>()
            * a
    }
}

const WEATHER_MODES: usize = 6;
const CONTEXT_FIELDS: usize = 6;

/// The fields behind a generated dataset. Features, targets and context
/// vectors can be evaluated at any coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticWorld {
    pub config: SyntheticConfig,
    clusters: Vec<GeoCoord>,
    statics: Vec<WaveField>,
    weather_basis: Vec<Vec<WaveField>>,
    /// `weather[j][k][t]`, AR(1) mode amplitudes.
    weather: Vec<Vec<Vec<f64>>>,
    season_phase: Vec<f64>,
    context_fields: Vec<WaveField>,
    offset_weights: Vec<f64>,
    /// `context_dim × CONTEXT_FIELDS`
    context_mix: Tensor2<f64>,
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn clamp_to_box(lat: f64, lon: f64) -> GeoCoord {
    GeoCoord {
        lat: lat.clamp(CONUS_LAT.0, CONUS_LAT.1),
        lon: lon.clamp(CONUS_LON.0, CONUS_LON.1),
    }
}

impl SyntheticWorld {
    fn new<R: Rng>(config: &SyntheticConfig, rng: &mut R) -> Self {
        let m = config.n_features;
        let days = config.n_days as usize;
        let clusters = (0..8)
            .map(|_| GeoCoord {
                lat: rng.random_range(CONUS_LAT.0 + 2.0..CONUS_LAT.1 - 2.0),
                lon: rng.random_range(CONUS_LON.0 + 2.0..CONUS_LON.1 - 2.0),
            })
            .collect();
        let statics = (0..m).map(|_| WaveField::new(rng, 8, (12.0, 40.0))).collect();
        let weather_basis = (0..m)
            .map(|_| (0..WEATHER_MODES).map(|_| WaveField::new(rng, 4, (8.0, 30.0))).collect())
            .collect();
        let rho: f64 = 0.85;
        let innov = (1.0 - rho * rho).sqrt();
        let weather = (0..m)
            .map(|_| {
                (0..WEATHER_MODES)
                    .map(|_| {
                        let mut u = Vec::with_capacity(days);
                        let mut x = normal(rng);
                        for _ in 0..days {
                            u.push(x);
                            x = rho * x + innov * normal(rng);
                        }
                        u
                    })
                    .collect()
            })
            .collect();
        let season_phase = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
        let context_fields = (0..CONTEXT_FIELDS).map(|_| WaveField::new(rng, 6, (3.0, 12.0))).collect();
        let mut offset_weights: Vec<f64> = (0..CONTEXT_FIELDS).map(|_| normal(rng)).collect();
        let norm = offset_weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        offset_weights.iter_mut().for_each(|w| *w /= norm);
        let scale = 1.0 / (CONTEXT_FIELDS as f64).sqrt();
        let mix: Vec<f64> = (0..config.context_dim * CONTEXT_FIELDS).map(|_| normal(rng) * scale).collect();
        SyntheticWorld {
            config: config.clone(),
            clusters,
            statics,
            weather_basis,
            weather,
            season_phase,
            context_fields,
            offset_weights,
            context_mix: Tensor2::from_vec(config.context_dim, CONTEXT_FIELDS, mix).expect("finite"),
        }
    }

    /// Draws a location: near one of the urban clusters with probability
    /// `clustered`, uniform over the box otherwise.
    fn sample_coord<R: Rng>(&self, rng: &mut R, clustered: f64) -> GeoCoord {
        if rng.random::<f64>() < clustered {
            let c = self.clusters[rng.random_range(0..self.clusters.len())];
            clamp_to_box(c.lat + 1.2 * normal(rng), c.lon + 1.5 * normal(rng))
        } else {
            GeoCoord {
                lat: rng.random_range(CONUS_LAT.0..CONUS_LAT.1),
                lon: rng.random_range(CONUS_LON.0..CONUS_LON.1),
            }
        }
    }

    /// Unevenly spread coordinates for contrastive pretraining.
    pub fn sample_coords(&self, n: usize, seed: u64) -> Vec<GeoCoord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample_coord(&mut rng, 0.6)).collect()
    }

    /// Unit-variance offset field; the target carries
    /// `region_offset_amp` times this value.
    pub fn offset(&self, c: &GeoCoord) -> f64 {
        self.context_fields
            .iter()
            .zip(&self.offset_weights)
            .map(|(f, w)| w * f.eval(c))
            .sum()
    }

    fn latent_context(&self, c: &GeoCoord) -> Vec<f64> {
        self.context_fields.iter().map(|f| f.eval(c)).collect()
    }

    /// Noisy context vectors (one row per coordinate) that stand in for
    /// image embeddings during pretraining.
    pub fn context_vectors(&self, coords: &[GeoCoord], seed: u64) -> Tensor2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.config.context_dim;
        let mut out = Tensor2::zeros(coords.len(), d);
        for (i, c) in coords.iter().enumerate() {
            let z = self.latent_context(c);
            let row = out.row_mut(i);
            for (k, v) in row.iter_mut().enumerate() {
                let clean: f64 = self.context_mix.row(k).iter().zip(&z).map(|(a, b)| a * b).sum();
                *v = clean + 0.05 * normal(&mut rng);
            }
        }
        out
    }

    /// Noise-free features at `c` on `day`.
    pub fn features_at(&self, c: &GeoCoord, day: u32) -> Result<Vec<f64>> {
        if day >= self.config.n_days {
            return Err(Error::InvalidParameter(format!(
                "day {day} outside generated range 0..{}",
                self.config.n_days
            )));
        }
        let t = day as usize;
        Ok((0..self.config.n_features)
            .map(|j| {
                let w: f64 = self.weather_basis[j]
                    .iter()
                    .zip(&self.weather[j])
                    .map(|(b, u)| u[t] * b.eval(c))
                    .sum::<f64>()
                    / (WEATHER_MODES as f64).sqrt();
                let s = (2.0 * PI * (day as f64 / 365.0 + self.season_phase[j])).sin();
                0.6 * self.statics[j].eval(c) + 0.8 * w + 0.5 * s
            })
            .collect())
    }

    /// Target without noise, from the features of the day and the day before.
    pub fn target_mean(&self, c: &GeoCoord, today: &[f64], yesterday: &[f64]) -> f64 {
        signal(today, yesterday) + self.config.region_offset_amp * self.offset(c)
    }
}

/// Coefficients of [`signal_terms`].
pub const SIGNAL_COEFFICIENTS: [f64; 7] = [2.0, 1.5, 0.8, 1.0, 0.6, 0.5, -0.7];
const SIGNAL_INTERCEPT: f64 = 12.0;

/// Nonlinear terms that make up the feature-driven part of the target.
pub fn signal_terms(today: &[f64], yesterday: &[f64]) -> [f64; 7] {
    let m = today.len();
    let f = |j: usize| today[j % m];
    [
        f(0).tanh(),
        f(1),
        f(2) * f(3),
        (2.0 * f(4)).sin(),
        yesterday[5 % m],
        f(6).powi(2),
        f(7),
    ]
}

fn signal(today: &[f64], yesterday: &[f64]) -> f64 {
    SIGNAL_INTERCEPT
        + signal_terms(today, yesterday)
            .iter()
            .zip(SIGNAL_COEFFICIENTS)
            .map(|(t, c)| t * c)
            .sum::<f64>()
}

/// Generates stations and daily records. Identical configs give identical
/// output.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<(SyntheticWorld, Dataset)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let world = SyntheticWorld::new(config, &mut rng);
    let stations: Vec<Station> = (0..config.n_stations)
        .map(|i| Station {
            id: format!("S{i:04}"),
            coord: world.sample_coord(&mut rng, 0.6),
        })
        .collect();
    let m = config.n_features;
    let mut records = Vec::with_capacity(config.n_stations * config.n_days as usize);
    for (si, st) in stations.iter().enumerate() {
        let mut prev: Option<Vec<f64>> = None;
        for day in 0..config.n_days {
            let mut f = world.features_at(&st.coord, day)?;
            for v in f.iter_mut() {
                *v += 0.2 * normal(&mut rng);
            }
            let y = world.target_mean(&st.coord, &f, prev.as_deref().unwrap_or(&f)) + config.noise_sd * normal(&mut rng);
            let features = f
                .iter()
                .map(|&v| (rng.random::<f64>() >= config.feature_missing_rate).then_some(v))
                .collect();
            let target = (rng.random::<f64>() >= config.target_missing_rate).then_some(y);
            records.push(DailyRecord {
                station: si,
                day,
                features,
                target,
            });
            prev = Some(f);
        }
    }
    debug_assert!(records.iter().all(|r| r.features.len() == m));
    let ds = Dataset::new(stations, records, m)?;
    Ok((world, ds))
}

/// Moran's I of `values` under symmetric `k`-nearest-neighbour binary weights.
pub fn morans_i(values: &[f64], coords: &[GeoCoord], k: usize) -> Result<f64> {
    let n = values.len();
    if n != coords.len() {
        return Err(Error::dim("morans_i", n, coords.len()));
    }
    if n < 3 || k == 0 {
        return Err(Error::InvalidParameter("morans_i needs n >= 3 and k >= 1".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let mut w = vec![vec![false; n]; n];
    for i in 0..n {
        let mut d: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (coords[i].distance_km(&coords[j]), j))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(_, j) in d.iter().take(k) {
            w[i][j] = true;
            w[j][i] = true;
        }
    }
    let (mut num, mut wsum) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if w[i][j] {
                num += dev[i] * dev[j];
                wsum += 1.0;
            }
        }
    }
    let den: f64 = dev.iter().map(|d| d * d).sum();
    if den == 0.0 {
        return Err(Error::UndefinedMetric("morans_i of a constant field"));
    }
    Ok(n as f64 / wsum * num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            n_stations: 30,
            n_days: 42,
            seed,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn deterministic() {
        let (_, a) = generate_synthetic(&small(3)).unwrap();
        let (_, b) = generate_synthetic(&small(3)).unwrap();
        assert_eq!(a, b);
        let (_, c) = generate_synthetic(&small(4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn record_count() {
        let cfg = SyntheticConfig {
            n_stations: 100,
            n_days: 365,
            ..SyntheticConfig::default()
        };
        let (_, ds) = generate_synthetic(&cfg).unwrap();
        assert_eq!(ds.records.len(), 36_500);
        assert_eq!(ds.stations.len(), 100);
        assert!(ds.stations.iter().all(|s| {
            (CONUS_LAT.0..=CONUS_LAT.1).contains(&s.coord.lat) && (CONUS_LON.0..=CONUS_LON.1).contains(&s.coord.lon)
        }));
    }

    #[test]
    fn bounds_are_checked() {
        assert!(generate_synthetic(&SyntheticConfig { n_stations: 19, ..small(0) }).is_err());
        assert!(generate_synthetic(&SyntheticConfig { n_days: 41, ..small(0) }).is_err());
        match (SyntheticConfig { n_stations: 1, n_days: 1, ..small(0) }).validate() {
            Err(Error::Config(v)) => assert_eq!(v.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn offset_field_is_spatially_autocorrelated() {
        let (world, ds) = generate_synthetic(&SyntheticConfig::default()).unwrap();
        let coords = ds.coords();
        let g: Vec<f64> = coords.iter().map(|c| world.offset(c)).collect();
        let i = morans_i(&g, &coords, 6).unwrap();
        assert!(i > 0.2, "{i}");
    }

    #[test]
    fn context_vectors_have_configured_width() {
        let (world, _) = generate_synthetic(&small(1)).unwrap();
        let coords = world.sample_coords(10, 2);
        let ctx = world.context_vectors(&coords, 3);
        assert_eq!(ctx.shape(), (10, 32));
        assert_eq!(ctx, world.context_vectors(&coords, 3));
    }
}
