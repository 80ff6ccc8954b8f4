//! Masked Bi-LSTM + attention estimator with an optional geolocation branch.

mod checkpoint;
mod config;
mod grid;
mod network;
mod train;

pub use checkpoint::CHECKPOINT_HEADER;
pub use config::{Fusion, GeolocationMode, ModelConfig, TrainConfig};
pub use grid::{grid_to_csv, predict_grid, write_grid_csv, BBox, GridCell};
pub use network::{assemble, fuse, Model, ModelParams, SampleInput};
pub use train::{prepare_inputs, train, EpochLoss, TrainReport};
