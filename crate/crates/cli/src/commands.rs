use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{ArgMatches, CommandFactory};
use geoloc_core::evalharness::{
    checkerboard_fold, export_report, load_report, metrics, partition_checkerboard, partition_random,
    partition_spatial, report_csv, report_text, run_experiment, parse_variants, ExperimentConfig, Manifest,
    PartitionSpec, Side, Variant,
};
use geoloc_core::geoenc::{
    pretrain_contrastive, top1_retrieval, EmbeddingTable, EncoderConfig, GeoCoord, LocationEncoder,
    PositionalEncoding, PretrainConfig,
};
use geoloc_core::model::{assemble, predict_grid, train, write_grid_csv, BBox, GeolocationMode, Model, ModelConfig};
use geoloc_core::nncore::LrSchedule;
use geoloc_core::spatialdata::{
    generate_synthetic, input_width, load_station_csv, prepare_fold, write_station_csv, Dataset, FeatureProvider,
    IdwConfig, NearestStationProvider, PipelineConfig, SampleId, SyntheticConfig, SyntheticProvider,
};

use crate::{
    Cli, Command, EvalPartition, EvaluateArgs, GenDataArgs, GridArgs, ModelArgs, PositionalKind, PretrainArgs,
    ReportArgs, TrainArgs, TrainPartition,
};

pub(crate) fn dispatch(cli: &Cli, matches: &ArgMatches) -> Result<()> {
    fs::create_dir_all(&cli.out_dir).with_context(|| format!("{}", cli.out_dir.display()))?;
    let (name, mut manifest) = match &cli.command {
        Command::GenData(a) => ("gen-data", gen_data(cli, a)?),
        Command::Pretrain(a) => ("pretrain", pretrain(cli, a)?),
        Command::Train(a) => ("train", train_one(cli, a)?),
        Command::Evaluate(a) => ("evaluate", evaluate(cli, a)?),
        Command::Report(a) => ("report", report(cli, a)?),
        Command::Grid(a) => ("grid", grid(cli, a)?),
    };
    manifest.command = name.to_string();
    manifest.config = config_echo(matches);
    let path = cli.out_dir.join(format!("{name}.manifest.json"));
    manifest.write(&path)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Every resolved option of the invocation, defaults included.
fn config_echo(m: &ArgMatches) -> BTreeMap<String, String> {
    fn collect(cmd: &clap::Command, m: &ArgMatches, out: &mut BTreeMap<String, String>) {
        for arg in cmd.get_arguments() {
            let key = arg.get_id().as_str();
            if let Ok(Some(raw)) = m.try_get_raw(key) {
                let vals: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
                out.insert(key.replace('_', "-"), vals.join(","));
            }
        }
    }
    let root = Cli::command();
    let mut out = BTreeMap::new();
    collect(&root, m, &mut out);
    if let Some((name, sm)) = m.subcommand() {
        if let Some(sub) = root.find_subcommand(name) {
            collect(sub, sm, &mut out);
        }
    }
    out
}

fn in_out_dir(cli: &Cli, given: &Option<PathBuf>, default: &str) -> PathBuf {
    given.clone().unwrap_or_else(|| cli.out_dir.join(default))
}

fn load_dataset(path: &Path, manifest: &mut Manifest) -> Result<Dataset> {
    let ds = load_station_csv(path)?;
    manifest.add_input(path)?;
    log::info!(
        "{}: {} stations, {} days, {} records",
        path.display(),
        ds.stations.len(),
        ds.n_days(),
        ds.records.len()
    );
    Ok(ds)
}

fn load_encoder(path: Option<&PathBuf>, manifest: &mut Manifest) -> Result<Option<LocationEncoder<f64>>> {
    path.map(|p| {
        let enc = LocationEncoder::<f64>::load(p)?;
        manifest.add_input(p)?;
        Ok(enc)
    })
    .transpose()
}

fn load_world_config(path: &Path) -> Result<SyntheticConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("malformed synthetic world file {}", path.display()))
}

fn write_text(path: &Path, text: &str, manifest: &mut Manifest) -> Result<()> {
    fs::write(path, text).with_context(|| format!("{}", path.display()))?;
    manifest.add_output(path)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn gen_data(cli: &Cli, a: &GenDataArgs) -> Result<Manifest> {
    let cfg = SyntheticConfig {
        n_stations: a.stations,
        n_days: a.days,
        n_features: a.features,
        region_offset_amp: a.amp,
        noise_sd: a.noise,
        feature_missing_rate: a.feature_missing,
        target_missing_rate: a.target_missing,
        context_dim: a.context_dim,
        seed: cli.seed,
    };
    cfg.validate()?;
    let mut manifest = Manifest::new("gen-data");
    manifest.seeds = vec![cli.seed];
    let (_, ds) = generate_synthetic(&cfg)?;
    let data = cli.out_dir.join("dataset.csv");
    write_station_csv(&ds, &data)?;
    manifest.add_output(&data)?;
    log::info!("wrote {} ({} records)", data.display(), ds.records.len());
    let world = serde_json::to_string_pretty(&cfg)? + "\n";
    write_text(&cli.out_dir.join("synthetic.json"), &world, &mut manifest)?;
    Ok(manifest)
}

fn pretrain(cli: &Cli, a: &PretrainArgs) -> Result<Manifest> {
    let mut manifest = Manifest::new("pretrain");
    let world_path = in_out_dir(cli, &a.world, "synthetic.json");
    let world_cfg = load_world_config(&world_path)?;
    manifest.add_input(&world_path)?;
    let (world, _) = generate_synthetic(&world_cfg)?;
    let seed = cli.seed;
    manifest.seeds = vec![seed];

    let coords = world.sample_coords(a.pairs, seed);
    let context = world.context_vectors(&coords, seed.wrapping_add(1));
    let positional = match a.positional {
        PositionalKind::Fourier => PositionalEncoding::Fourier { bands: a.bands },
        PositionalKind::Spherical => PositionalEncoding::Spherical { degree: a.degree },
    };
    let enc_cfg = EncoderConfig {
        positional,
        hidden: a.encoder_hidden.clone(),
        embedding_dim: world_cfg.context_dim,
    };
    let mut enc = LocationEncoder::<f64>::new(&enc_cfg, seed.wrapping_add(2))?;
    let pcfg = PretrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        temperature: a.temperature,
        seed: seed.wrapping_add(3),
    };
    log::info!("pretraining on {} pairs for {} epochs", coords.len(), a.epochs);
    let rep = pretrain_contrastive(&coords, &context, &mut enc, &pcfg)?;
    let top1 = top1_retrieval(&enc.encode_all(&coords)?, &context);
    log::info!(
        "InfoNCE {:.4} -> {:.4}, top-1 retrieval {:.3}",
        rep.initial_loss,
        rep.final_loss,
        top1
    );

    let weights = cli.out_dir.join("encoder.weights");
    enc.save(&weights)?;
    manifest.add_output(&weights)?;
    log::info!("wrote {}", weights.display());

    let table_coords: Vec<GeoCoord> = match &a.data {
        Some(p) => load_dataset(p, &mut manifest)?.coords(),
        None => coords.clone(),
    };
    let table = EmbeddingTable::from_encoder(&enc, &table_coords)?;
    let table_path = cli.out_dir.join("embeddings.csv");
    table.save(&table_path)?;
    manifest.add_output(&table_path)?;
    log::info!("wrote {} ({} rows)", table_path.display(), table.len());

    let mut trace = String::from("epoch,loss\n");
    for (i, l) in rep.epoch_losses.iter().enumerate() {
        trace.push_str(&format!("{},{:.8}\n", i + 1, l));
    }
    write_text(&cli.out_dir.join("pretrain_loss.csv"), &trace, &mut manifest)?;
    Ok(manifest)
}

fn base_model(m: &ModelArgs, ds: &Dataset) -> ModelConfig {
    let mut c = ModelConfig::new(GeolocationMode::None, input_width(ds.n_features));
    c.window = m.window;
    c.hidden = m.hidden;
    c.layers = m.layers;
    c.dropout = m.dropout;
    c.concat_projection = m.concat_projection;
    c.train.epochs = m.epochs;
    c.train.batch_size = m.batch_size;
    c.train.huber_delta = m.huber_delta;
    c.train.schedule = LrSchedule {
        initial: m.lr,
        decay: m.lr_decay,
        interval: m.decay_steps,
    };
    c
}

fn pipeline(m: &ModelArgs) -> PipelineConfig {
    PipelineConfig {
        window: m.window,
        idw: IdwConfig {
            k: m.idw_k,
            power: m.idw_power,
        },
    }
}

fn train_one(cli: &Cli, a: &TrainArgs) -> Result<Manifest> {
    let mut manifest = Manifest::new("train");
    manifest.seeds = vec![cli.seed];
    let variant: Variant = a.variant.parse()?;
    let ds = load_dataset(&in_out_dir(cli, &a.data, "dataset.csv"), &mut manifest)?;
    let encoder = load_encoder(a.encoder.as_ref(), &mut manifest)?;
    if variant.uses_encoder() && encoder.is_none() {
        bail!("variant {variant} needs --encoder");
    }

    let samples = ds.samples();
    let fold = match a.partition {
        TrainPartition::Random => partition_random(&samples, a.fraction, cli.seed)?,
        TrainPartition::Spatial => partition_spatial(ds.stations.len(), &samples, a.fraction, cli.seed)?,
        TrainPartition::Checkerboard => {
            let sides = partition_checkerboard(&ds.stations, a.delta, &GeoCoord { lat: 0.0, lon: 0.0 })?;
            let side = if a.train_partition == 1 { Side::A } else { Side::B };
            checkerboard_fold(&sides, &samples, side)?
        }
    };
    manifest.folds = vec![fold.hash()];
    let pc = pipeline(&a.model);
    let prep = prepare_fold(&ds, &fold.train, &fold.test, &pc)?;
    log::info!("{} training and {} held-out windows", prep.train.len(), prep.test.len());

    let mut mc = variant.model_config(&base_model(&a.model, &ds), encoder.as_ref().map(|e| e.embedding_dim()));
    mc.train.seed = cli.seed;
    mc.train.patience = a.patience;
    let enc = if variant.uses_encoder() { encoder } else { None };
    let mut model = assemble(&mc, enc)?;
    model.set_scalers(prep.feature_scaler.clone(), prep.target_scaler.clone());
    let coords = ds.coords();
    let rep = train(&mut model, &prep.train, &coords, Some(&prep.test))?;

    let stem = a.name.clone().unwrap_or_else(|| variant.key().to_string());
    let ckpt = cli.out_dir.join(format!("{stem}.ckpt"));
    model.save(&ckpt)?;
    manifest.add_output(&ckpt)?;
    log::info!("wrote {}", ckpt.display());
    write_text(&cli.out_dir.join(format!("{stem}_loss.csv")), &rep.to_csv(), &mut manifest)?;

    let pred: Vec<f64> = model
        .predict_at_stations(&prep.test, &coords)?
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
            .ok_or_else(|| anyhow!("held-out window ({}, {}) has no target", w.station, w.end_day))
        })
        .collect::<Result<_>>()?;
    let m = metrics(&pred, &obs)?;
    log::info!("held-out R² {:.4}, RMSE {:.4}, MBE {:.4}", m.r2, m.rmse, m.mbe);
    let summary = serde_json::json!({
        "variant": variant.key(),
        "fold_hash": fold.hash(),
        "n_train": prep.train.len(),
        "n_test": prep.test.len(),
        "r2": m.r2,
        "rmse": m.rmse,
        "mbe": m.mbe,
    });
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    write_text(&cli.out_dir.join(format!("{stem}_metrics.json")), &text, &mut manifest)?;
    Ok(manifest)
}

fn delta_stem(delta: f64) -> String {
    format!("checkerboard_{delta}").replace('.', "p")
}

fn evaluate(cli: &Cli, a: &EvaluateArgs) -> Result<Manifest> {
    let mut manifest = Manifest::new("evaluate");
    let variants = parse_variants(&a.variants)?;
    let ds = load_dataset(&in_out_dir(cli, &a.data, "dataset.csv"), &mut manifest)?;
    let encoder = load_encoder(a.encoder.as_ref(), &mut manifest)?;
    if variants.iter().any(|v| v.uses_encoder()) && encoder.is_none() {
        bail!("variants {} include an encoder variant; pass --encoder", a.variants);
    }
    if a.runs == 0 {
        bail!("--runs must be at least 1");
    }
    let mut plan: Vec<(String, PartitionSpec)> = Vec::new();
    if matches!(a.partition, EvalPartition::All | EvalPartition::Random) {
        plan.push(("wr_random".into(), PartitionSpec::random(a.fraction, 0)));
    }
    if matches!(a.partition, EvalPartition::All | EvalPartition::Spatial) {
        plan.push(("wr_spatial".into(), PartitionSpec::spatial(a.fraction, 0)));
    }
    if matches!(a.partition, EvalPartition::All | EvalPartition::Checkerboard) {
        if a.delta.is_empty() {
            bail!("--delta needs at least one cell size");
        }
        for &d in &a.delta {
            plan.push((delta_stem(d), PartitionSpec::checkerboard(d)));
        }
    }
    let base = base_model(&a.model, &ds);
    for (stem, spec) in plan {
        let mut cfg = ExperimentConfig::new(spec, a.runs, cli.seed, variants.clone(), base.clone());
        cfg.pipeline = pipeline(&a.model);
        cfg.jobs = cli.jobs;
        manifest.seeds = cfg.seeds.clone();
        log::info!("experiment {stem}: {} variants x {} runs", variants.len(), a.runs);
        let report = run_experiment(&ds, encoder.as_ref(), &cfg).with_context(|| format!("experiment {stem}"))?;
        for r in &report.records {
            if !manifest.folds.contains(&r.fold_hash) {
                manifest.folds.push(r.fold_hash.clone());
            }
        }
        for path in export_report(&report, &cli.out_dir, &stem)? {
            manifest.add_output(&path)?;
            log::info!("wrote {}", path.display());
        }
    }
    Ok(manifest)
}

fn report(cli: &Cli, a: &ReportArgs) -> Result<Manifest> {
    let mut manifest = Manifest::new("report");
    for input in &a.inputs {
        let rep = load_report(input)?;
        manifest.add_input(input)?;
        let stem = input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| anyhow!("{}: no file name", input.display()))?;
        write_text(&cli.out_dir.join(format!("{stem}.txt")), &report_text(&rep), &mut manifest)?;
        write_text(&cli.out_dir.join(format!("{stem}.csv")), &report_csv(&rep), &mut manifest)?;
    }
    Ok(manifest)
}

fn grid(cli: &Cli, a: &GridArgs) -> Result<Manifest> {
    let mut manifest = Manifest::new("grid");
    let bbox: BBox = a.bbox.parse()?;
    let model = Model::<f64>::load(&a.model)?;
    manifest.add_input(&a.model)?;
    let ds = load_dataset(&in_out_dir(cli, &a.data, "dataset.csv"), &mut manifest)?;
    let day = match a.day {
        Some(d) if d >= ds.n_days() => bail!("--day {d} outside the dataset (0..{})", ds.n_days()),
        Some(d) => d,
        None => ds.n_days().saturating_sub(1),
    };
    let scaler = model
        .feature_scaler()
        .ok_or_else(|| anyhow!("{}: checkpoint has no feature scaler", a.model.display()))?;
    let pc = PipelineConfig {
        window: model.config().window,
        idw: IdwConfig {
            k: a.idw_k,
            power: a.idw_power,
        },
    };
    let world = match &a.world {
        Some(p) => {
            let cfg = load_world_config(p)?;
            manifest.add_input(p)?;
            Some(generate_synthetic(&cfg)?.0)
        }
        None => None,
    };
    let provider: Box<dyn FeatureProvider> = match &world {
        Some(w) => Box::new(SyntheticProvider::new(w, &ds, scaler, pc)),
        None => Box::new(NearestStationProvider::new(&ds, scaler, pc)),
    };
    let cells = predict_grid(&model, &bbox, a.res, day, provider.as_ref())?;
    let filled = cells.iter().filter(|c| c.estimate.is_some()).count();
    log::info!("day {day}: {} cells, {filled} with estimates", cells.len());
    let out = cli.out_dir.join(&a.output);
    write_grid_csv(&cells, &out)?;
    manifest.add_output(&out)?;
    log::info!("wrote {}", out.display());
    Ok(manifest)
}
