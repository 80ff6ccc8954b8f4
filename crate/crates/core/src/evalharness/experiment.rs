use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics, Metrics, MetricsSummary};
use super::partition::{
    checkerboard_fold, partition_checkerboard, partition_random, partition_spatial, FoldAssignment, PartitionKind,
    PartitionSpec, Side,
};
use crate::error::{Error, Result};
use crate::geoenc::{GeoCoord, LocationEncoder};
use crate::model::{assemble, train, Fusion, GeolocationMode, ModelConfig};
use crate::spatialdata::{input_width, prepare_fold, Dataset, PipelineConfig, PreparedFold, SampleId};

/// Checkerboards at least this wide only compare the none and encoder
/// variants.
pub const WIDE_CHECKERBOARD_DELTA: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    None,
    Raw,
    Sinusoidal,
    EncoderHadamard,
    EncoderConcat,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::None,
        Variant::Raw,
        Variant::Sinusoidal,
        Variant::EncoderHadamard,
        Variant::EncoderConcat,
    ];

    /// Row label in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Variant::None => "Without Lat/Lon",
            Variant::Raw => "With Lat/Lon",
            Variant::Sinusoidal => "With Sinusoidal (Lat/Lon)",
            Variant::EncoderHadamard => "Location Encoder Embeddings (Hadamard)",
            Variant::EncoderConcat => "Location Encoder Embeddings (Concat)",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Variant::None => "none",
            Variant::Raw => "raw",
            Variant::Sinusoidal => "sin",
            Variant::EncoderHadamard => "encoder",
            Variant::EncoderConcat => "encoder-concat",
        }
    }

    pub fn mode(self) -> GeolocationMode {
        match self {
            Variant::None => GeolocationMode::None,
            Variant::Raw => GeolocationMode::Raw,
            Variant::Sinusoidal => GeolocationMode::Sinusoidal,
            Variant::EncoderHadamard | Variant::EncoderConcat => GeolocationMode::Encoder,
        }
    }

    pub fn uses_encoder(self) -> bool {
        self.mode() == GeolocationMode::Encoder
    }

    /// `base` with the mode, fusion and embedding width of this variant.
    pub fn model_config(self, base: &ModelConfig, embedding_dim: Option<usize>) -> ModelConfig {
        let mut c = base.clone();
        c.mode = self.mode();
        c.fusion = if self == Variant::EncoderConcat {
            Fusion::Concat
        } else {
            Fusion::Hadamard
        };
        c.embedding_dim = if self.uses_encoder() { embedding_dim } else { None };
        c
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Variant::None),
            "raw" | "latlon" => Ok(Variant::Raw),
            "sin" | "sinusoidal" => Ok(Variant::Sinusoidal),
            "encoder" | "encoder-hadamard" | "hadamard" => Ok(Variant::EncoderHadamard),
            "encoder-concat" | "concat" => Ok(Variant::EncoderConcat),
            other => Err(Error::InvalidParameter(format!(
                "unknown variant '{other}' (expected none, raw, sin, encoder or encoder-concat)"
            ))),
        }
    }
}

/// Comma-separated variant list, e.g. `none,raw,sin,encoder`.
pub fn parse_variants(s: &str) -> Result<Vec<Variant>> {
    let mut v: Vec<Variant> = s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
    v.sort();
    v.dedup();
    if v.is_empty() {
        return Err(Error::InvalidParameter("no variants given".into()));
    }
    Ok(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub partition: PartitionSpec,
    /// One run per seed. A seed drives model initialisation, shuffling and
    /// dropout, and for random and spatial splits also the held-out set.
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    /// Template for every variant; mode, fusion, window, feature count and
    /// seed are filled in per run.
    pub model: ModelConfig,
    pub pipeline: PipelineConfig,
    pub jobs: usize,
}

impl ExperimentConfig {
    pub fn new(partition: PartitionSpec, runs: usize, seed: u64, variants: Vec<Variant>, model: ModelConfig) -> Self {
        ExperimentConfig {
            partition,
            seeds: (0..runs as u64).map(|r| seed.wrapping_add(r)).collect(),
            variants,
            model,
            pipeline: PipelineConfig::default(),
            jobs: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub variant: Variant,
    /// Checkerboard side used for training; `None` for random and spatial
    /// splits.
    pub train_side: Option<Side>,
    pub seed: u64,
    pub fold_hash: String,
    pub n_train: usize,
    pub n_test: usize,
    pub final_train_loss: f64,
    pub metrics: Metrics,
}

impl RunRecord {
    /// Partition number of the test side (1 or 2) for checkerboard runs.
    pub fn test_partition(&self) -> Option<u8> {
        self.train_side.map(|s| s.other().partition_number())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: Variant,
    pub runs: usize,
    pub overall: MetricsSummary,
    /// Checkerboard only: results on test partitions 1 and 2.
    pub by_partition: Option<[MetricsSummary; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub partition: PartitionSpec,
    pub variants: Vec<VariantResult>,
    pub records: Vec<RunRecord>,
    /// Checkerboard only: share of stations in partitions 1 and 2.
    pub partition_shares: Option<[f64; 2]>,
    /// Variants left out of this experiment.
    pub skipped: Vec<Variant>,
}

impl ExperimentReport {
    pub fn from_records(
        partition: PartitionSpec,
        records: Vec<RunRecord>,
        partition_shares: Option<[f64; 2]>,
        skipped: Vec<Variant>,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty("experiment report without runs"));
        }
        let mut variants: Vec<Variant> = records.iter().map(|r| r.variant).collect();
        variants.sort();
        variants.dedup();
        let is_cb = matches!(partition.kind, PartitionKind::Checkerboard { .. });
        let results = variants
            .into_iter()
            .map(|v| {
                let mine: Vec<&RunRecord> = records.iter().filter(|r| r.variant == v).collect();
                let all: Vec<Metrics> = mine.iter().map(|r| r.metrics).collect();
                let by_partition = if is_cb {
                    let part = |p: u8| {
                        let m: Vec<Metrics> =
                            mine.iter().filter(|r| r.test_partition() == Some(p)).map(|r| r.metrics).collect();
                        MetricsSummary::of(&m)
                    };
                    Some([part(1)?, part(2)?])
                } else {
                    None
                };
                Ok(VariantResult {
                    variant: v,
                    runs: mine.len(),
                    overall: MetricsSummary::of(&all)?,
                    by_partition,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ExperimentReport {
            partition,
            variants: results,
            records,
            partition_shares,
            skipped,
        })
    }

    pub fn variant(&self, v: Variant) -> Option<&VariantResult> {
        self.variants.iter().find(|r| r.variant == v)
    }

    /// Mean test R² of a variant over every run (both directions for a
    /// checkerboard).
    pub fn mean_r2(&self, v: Variant) -> Option<f64> {
        self.variant(v).map(|r| r.overall.r2.mean)
    }
}

struct FoldJob {
    fold: FoldAssignment,
    train_side: Option<Side>,
    seeds: Vec<u64>,
}

fn folds(ds: &Dataset, cfg: &ExperimentConfig) -> Result<(Vec<FoldJob>, Option<[f64; 2]>)> {
    let samples = ds.samples();
    let spec = &cfg.partition;
    Ok(match spec.kind {
        PartitionKind::RandomSample { fraction } => (
            cfg.seeds
                .iter()
                .map(|&s| {
                    Ok(FoldJob {
                        fold: partition_random(&samples, fraction, spec.seed.wrapping_add(s))?,
                        train_side: None,
                        seeds: vec![s],
                    })
                })
                .collect::<Result<_>>()?,
            None,
        ),
        PartitionKind::SpatialStation { fraction } => (
            cfg.seeds
                .iter()
                .map(|&s| {
                    Ok(FoldJob {
                        fold: partition_spatial(ds.stations.len(), &samples, fraction, spec.seed.wrapping_add(s))?,
                        train_side: None,
                        seeds: vec![s],
                    })
                })
                .collect::<Result<_>>()?,
            None,
        ),
        PartitionKind::Checkerboard { delta, anchor } => {
            let sides = partition_checkerboard(&ds.stations, delta, &anchor)?;
            let n = sides.len().max(1) as f64;
            let a = sides.iter().filter(|&&s| s == Side::A).count() as f64;
            let jobs = [Side::B, Side::A]
                .into_iter()
                .map(|train_side| {
                    Ok(FoldJob {
                        fold: checkerboard_fold(&sides, &samples, train_side)?,
                        train_side: Some(train_side),
                        seeds: cfg.seeds.clone(),
                    })
                })
                .collect::<Result<_>>()?;
            (jobs, Some([a / n, (n - a) / n]))
        }
    })
}

fn fold_name(spec: &PartitionSpec, job: &FoldJob) -> String {
    match job.train_side {
        Some(side) => format!("{} (train partition {}, test partition {})", spec.label(), side, side.other()),
        None => format!("{} (seed {})", spec.label(), job.seeds[0]),
    }
}

/// Trains one model and scores it on the test windows in target units.
#[allow(clippy::too_many_arguments)]
fn run_one(
    ds: &Dataset,
    coords: &[GeoCoord],
    prep: &PreparedFold,
    cfg: &ExperimentConfig,
    encoder: Option<&LocationEncoder<f64>>,
    variant: Variant,
    seed: u64,
) -> Result<(Metrics, f64)> {
    let mut mc = variant.model_config(&cfg.model, encoder.map(|e| e.embedding_dim()));
    mc.features = input_width(ds.n_features);
    mc.window = cfg.pipeline.window;
    mc.train.seed = seed;
    let enc = if variant.uses_encoder() {
        Some(
            encoder
                .ok_or_else(|| Error::InvalidParameter(format!("variant {variant} needs a location encoder")))?
                .clone(),
        )
    } else {
        None
    };
    let mut model = assemble(&mc, enc)?;
    model.set_scalers(prep.feature_scaler.clone(), prep.target_scaler.clone());
    let report = train(&mut model, &prep.train, coords, None)?;
    let pred: Vec<f64> = model
        .predict_at_stations(&prep.test, coords)?
        .into_iter()
        .map(|y| model.unscale(y))
        .collect();
    let obs: Vec<f64> = prep
        .test
        .iter()
        .map(|w| {
            ds.target(SampleId {
                station: w.station,
                day: w.end_day,
            })
            .ok_or_else(|| Error::InvalidParameter(format!("test window ({}, {}) has no target", w.station, w.end_day)))
        })
        .collect::<Result<_>>()?;
    Ok((metrics(&pred, &obs)?, report.last_loss().unwrap_or(f64::NAN)))
}

/// Trains every variant on every fold and seed and scores it on the held-out
/// side. Checkerboards run both directions. Scalers and neighbour values are
/// fitted per fold on the training side only.
pub fn run_experiment(
    ds: &Dataset,
    encoder: Option<&LocationEncoder<f64>>,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    cfg.partition.validate()?;
    if cfg.seeds.is_empty() {
        return Err(Error::InvalidParameter("an experiment needs at least one run".into()));
    }
    if cfg.variants.is_empty() {
        return Err(Error::InvalidParameter("an experiment needs at least one variant".into()));
    }
    let mut variants = cfg.variants.clone();
    variants.sort();
    variants.dedup();
    let mut skipped = Vec::new();
    if let PartitionKind::Checkerboard { delta, .. } = cfg.partition.kind {
        if delta >= WIDE_CHECKERBOARD_DELTA {
            let (keep, drop): (Vec<Variant>, Vec<Variant>) =
                variants.into_iter().partition(|v| matches!(v.mode(), GeolocationMode::None | GeolocationMode::Encoder));
            variants = keep;
            skipped = drop;
            if variants.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "checkerboard delta {delta} only runs the none and encoder variants"
                )));
            }
        }
    }
    if variants.iter().any(|v| v.uses_encoder()) && encoder.is_none() {
        return Err(Error::InvalidParameter("encoder variants need a location encoder".into()));
    }

    let coords = ds.coords();
    let (fold_jobs, shares) = folds(ds, cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let mut records = Vec::new();
    for job in &fold_jobs {
        let name = fold_name(&cfg.partition, job);
        let prep = prepare_fold(ds, &job.fold.train, &job.fold.test, &cfg.pipeline)
            .map_err(|e| Error::InvalidParameter(format!("fold {name}: {e}")))?;
        let hash = job.fold.hash();
        let tasks: Vec<(Variant, u64)> =
            variants.iter().flat_map(|&v| job.seeds.iter().map(move |&s| (v, s))).collect();
        let results: Vec<Result<RunRecord>> = pool.install(|| {
            tasks
                .par_iter()
                .map(|&(variant, seed)| {
                    log::info!("{name}: {variant} seed {seed}");
                    let (m, loss) = run_one(ds, &coords, &prep, cfg, encoder, variant, seed)
                        .map_err(|e| Error::InvalidParameter(format!("fold {name}, {variant}, seed {seed}: {e}")))?;
                    Ok(RunRecord {
                        variant,
                        train_side: job.train_side,
                        seed,
                        fold_hash: hash.clone(),
                        n_train: prep.train.len(),
                        n_test: prep.test.len(),
                        final_train_loss: loss,
                        metrics: m,
                    })
                })
                .collect()
        });
        for r in results {
            records.push(r?);
        }
    }
    records.sort_by(|a, b| {
        (a.variant, a.train_side, a.seed, &a.fold_hash).cmp(&(b.variant, b.train_side, b.seed, &b.fold_hash))
    });
    ExperimentReport::from_records(cfg.partition, records, shares, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.key().parse::<Variant>().unwrap(), v);
        }
        assert_eq!(
            parse_variants("sin,none,encoder,raw").unwrap(),
            vec![Variant::None, Variant::Raw, Variant::Sinusoidal, Variant::EncoderHadamard]
        );
        assert!(parse_variants("none,bogus").is_err());
        assert!(parse_variants("").is_err());
    }

    #[test]
    fn variant_configs() {
        let base = ModelConfig::new(GeolocationMode::None, 14);
        let c = Variant::EncoderConcat.model_config(&base, Some(8));
        assert_eq!((c.mode, c.fusion, c.embedding_dim), (GeolocationMode::Encoder, Fusion::Concat, Some(8)));
        let c = Variant::Raw.model_config(&base, Some(8));
        assert_eq!((c.mode, c.embedding_dim), (GeolocationMode::Raw, None));
    }
}
