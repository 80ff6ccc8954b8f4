//! `geoloc`: generate → pretrain → train → evaluate → report → grid.
//!
//! Every artifact-producing subcommand writes `<command>.manifest.json`
//! next to its outputs. Progress goes to standard error.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use config::ConfigFile;

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "GEOLOC_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "geoloc", version, about = "Geolocation-aware PM2.5 regression experiments on station data")]
pub struct Cli {
    /// Seed for every random choice of the command
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for independent training runs
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    /// Configuration file of `key = value` lines; `[global]` and
    /// `[<subcommand>]` sections are read [default: none]
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = "geoloc-out")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic station dataset (dataset.csv, synthetic.json)
    GenData(GenDataArgs),
    /// Pretrain a location encoder contrastively (encoder.weights, embeddings.csv)
    Pretrain(PretrainArgs),
    /// Train one model variant on one fold (<name>.ckpt, <name>_loss.csv)
    Train(TrainArgs),
    /// Run the evaluation grid and write report tables
    Evaluate(EvaluateArgs),
    /// Rebuild report tables from saved report JSON files
    Report(ReportArgs),
    /// Export a prediction surface over a bounding box as CSV
    Grid(GridArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Number of stations
    #[arg(long, default_value_t = 150)]
    pub stations: usize,
    /// Number of days
    #[arg(long, default_value_t = 120)]
    pub days: u32,
    /// Station features per day
    #[arg(long, default_value_t = 8)]
    pub features: usize,
    /// Scale of the regional target offset that no feature carries
    #[arg(long, default_value_t = 2.0)]
    pub amp: f64,
    /// Target noise standard deviation
    #[arg(long, default_value_t = 0.3)]
    pub noise: f64,
    /// Probability that a feature value is missing
    #[arg(long, default_value_t = 0.02)]
    pub feature_missing: f64,
    /// Probability that a target value is missing
    #[arg(long, default_value_t = 0.05)]
    pub target_missing: f64,
    /// Width of the pretraining context vectors (and of encoder embeddings)
    #[arg(long, default_value_t = 32)]
    pub context_dim: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PositionalKind {
    Fourier,
    Spherical,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Synthetic world description written by gen-data [default: <out-dir>/synthetic.json]
    #[arg(long)]
    pub world: Option<PathBuf>,
    /// Dataset whose stations are written to the embedding table [default: the pretraining coordinates]
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Coordinate/context pairs
    #[arg(long, default_value_t = 4000)]
    pub pairs: usize,
    /// Positional expansion
    #[arg(long, value_enum, default_value_t = PositionalKind::Fourier)]
    pub positional: PositionalKind,
    /// Fourier frequency bands
    #[arg(long, default_value_t = 8)]
    pub bands: usize,
    /// Spherical-harmonic degree
    #[arg(long, default_value_t = 10)]
    pub degree: usize,
    /// Encoder hidden widths
    #[arg(long, value_delimiter = ',', default_value = "256,256")]
    pub encoder_hidden: Vec<usize>,
    /// Epochs
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// Minibatch size
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    /// Adam learning rate
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// InfoNCE temperature
    #[arg(long, default_value_t = 0.07)]
    pub temperature: f64,
}

#[derive(Clone, Debug, Args)]
pub struct ModelArgs {
    /// Training epochs
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    /// Minibatch size
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    /// Hidden units per LSTM direction
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    /// Stacked Bi-LSTM layers
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    /// Dropout rate after each Bi-LSTM layer
    #[arg(long, default_value_t = 0.2)]
    pub dropout: f64,
    /// Initial Adam learning rate
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Learning-rate decay factor
    #[arg(long, default_value_t = 0.8)]
    pub lr_decay: f64,
    /// Optimizer steps between decays
    #[arg(long, default_value_t = 30000)]
    pub decay_steps: u64,
    /// Huber threshold in scaled target units
    #[arg(long, default_value_t = 1.0)]
    pub huber_delta: f64,
    /// Days per input window
    #[arg(long, default_value_t = 21)]
    pub window: usize,
    /// Project encoder embeddings before concatenation
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    pub concat_projection: bool,
    /// Neighbours used for the IDW feature
    #[arg(long, default_value_t = 9)]
    pub idw_k: usize,
    /// IDW distance power
    #[arg(long, default_value_t = 2.0)]
    pub idw_power: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TrainPartition {
    Random,
    Spatial,
    Checkerboard,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Station CSV [default: <out-dir>/dataset.csv]
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Encoder weight file, required by encoder variants [default: none]
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    /// Variant: none, raw, sin, encoder or encoder-concat
    #[arg(long, default_value = "none")]
    pub variant: String,
    /// Fold type
    #[arg(long, value_enum, default_value_t = TrainPartition::Spatial)]
    pub partition: TrainPartition,
    /// Held-out share for random and spatial folds
    #[arg(long, default_value_t = 0.1)]
    pub fraction: f64,
    /// Checkerboard cell size in degrees
    #[arg(long, default_value_t = 8.0)]
    pub delta: f64,
    /// Checkerboard partition (1 or 2) used for training
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub train_partition: u8,
    /// Stop after this many epochs without improvement on the held-out fold [default: off]
    #[arg(long)]
    pub patience: Option<usize>,
    /// File name stem of the outputs [default: the variant]
    #[arg(long)]
    pub name: Option<String>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalPartition {
    All,
    Random,
    Spatial,
    Checkerboard,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Station CSV [default: <out-dir>/dataset.csv]
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Encoder weight file, required by encoder variants [default: none]
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    /// Experiments to run
    #[arg(long, value_enum, default_value_t = EvalPartition::All)]
    pub partition: EvalPartition,
    /// Held-out share for random and spatial folds
    #[arg(long, default_value_t = 0.1)]
    pub fraction: f64,
    /// Checkerboard cell sizes in degrees
    #[arg(long, value_delimiter = ',', default_value = "8,16,30")]
    pub delta: Vec<f64>,
    /// Runs per variant
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    /// Comma-separated variants
    #[arg(long, default_value = "none,raw,sin,encoder")]
    pub variants: String,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSON files written by evaluate
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Model checkpoint
    #[arg(long)]
    pub model: PathBuf,
    /// Station CSV supplying neighbour values [default: <out-dir>/dataset.csv]
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Synthetic world for cell features [default: copy the nearest station]
    #[arg(long)]
    pub world: Option<PathBuf>,
    /// lat_min,lat_max,lon_min,lon_max
    #[arg(long, default_value = "24,49,-125,-67", allow_hyphen_values = true)]
    pub bbox: String,
    /// Cell size in degrees
    #[arg(long, default_value_t = 1.0)]
    pub res: f64,
    /// Day index to map [default: last day of the dataset]
    #[arg(long)]
    pub day: Option<u32>,
    /// Neighbours used for the IDW feature
    #[arg(long, default_value_t = 9)]
    pub idw_k: usize,
    /// IDW distance power
    #[arg(long, default_value_t = 2.0)]
    pub idw_power: f64,
    /// Output file name
    #[arg(long, default_value = "grid.csv")]
    pub output: String,
}

/// Long flag names of every option visible to `sub` (globals included).
fn known_flags(sub: Option<&str>) -> Vec<String> {
    let root = Cli::command();
    let mut flags: Vec<String> = root.get_arguments().filter_map(|a| a.get_long().map(String::from)).collect();
    if let Some(s) = sub.and_then(|s| root.find_subcommand(s)) {
        flags.extend(s.get_arguments().filter_map(|a| a.get_long().map(String::from)));
    }
    flags
}

fn explicit_on_command_line(m: &ArgMatches, flag: &str) -> bool {
    let root = Cli::command();
    let mut cmds = vec![(root.clone(), m)];
    if let Some((name, sm)) = m.subcommand() {
        if let Some(c) = root.find_subcommand(name) {
            cmds.push((c.clone(), sm));
        }
    }
    cmds.iter().any(|(cmd, matches)| {
        cmd.get_arguments()
            .filter(|a| a.get_long() == Some(flag))
            .any(|a| matches.value_source(a.get_id().as_str()) == Some(ValueSource::CommandLine))
    })
}

/// Appends `--key=value` for every configuration entry not already given
/// on the command line. Unknown keys are errors.
fn merge_config(args: &[OsString], m: &ArgMatches, cfg: &ConfigFile) -> Result<Vec<OsString>, String> {
    let sub = m.subcommand_name();
    let mut out = args.to_vec();
    for (section, entries) in &cfg.sections {
        let applies = section == "global" || Some(section.as_str()) == sub;
        if !applies {
            if section != "global" && Cli::command().find_subcommand(section).is_none() {
                return Err(format!("unknown configuration section [{section}]"));
            }
            continue;
        }
        let known = known_flags(sub);
        for (key, value, line) in entries {
            if !known.iter().any(|k| k == key) || key == "config" {
                return Err(format!("unknown configuration key '{key}' in [{section}] (line {line})"));
            }
            if !explicit_on_command_line(m, key) {
                out.push(format!("--{key}={value}").into());
            }
        }
    }
    Ok(out)
}

/// Parses and runs one invocation; returns the process exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let mut matches = match Cli::command().try_get_matches_from(&args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Some(path) = matches.get_one::<PathBuf>("config").cloned() {
        let cfg = match ConfigFile::load(&path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e:#}");
                return 1;
            }
        };
        let merged = match merge_config(&args, &matches, &cfg) {
            Ok(a) => a,
            Err(msg) => {
                eprintln!("error: {}: {msg}", path.display());
                return 2;
            }
        };
        matches = match Cli::command().try_get_matches_from(&merged) {
            Ok(m) => m,
            Err(e) => {
                eprintln!("error: in configuration file {}", path.display());
                let _ = e.print();
                return e.exit_code();
            }
        };
    }
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    match commands::dispatch(&cli, &matches) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", error_chain(&e));
            1
        }
    }
}

/// The error and its causes, skipping causes already quoted by their parent.
fn error_chain(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    let mut last = out.clone();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !last.contains(&c) {
            out.push_str(": ");
            out.push_str(&c);
        }
        last = c;
    }
    out
}
