//! Station datasets: synthetic generation, CSV ingestion, neighbour and
//! temporal features, scaling and window construction.

mod csvio;
mod idw;
mod pipeline;
mod scaler;
mod synthetic;
mod temporal;
mod types;
mod windows;

pub use csvio::{load_station_csv, write_station_csv};
pub use idw::{idw_at, idw_estimate, knn_idw, IdwConfig, IdwTable, NeighborIndex};
pub use pipeline::{
    column_names, feature_row, input_width, prepare_fold, FeatureProvider, NearestStationProvider, PipelineConfig,
    PreparedFold, SyntheticProvider, EXTRA_COLUMNS,
};
pub use scaler::ScalerParams;
pub use synthetic::{
    generate_synthetic, morans_i, signal_terms, SyntheticConfig, SyntheticWorld, CONUS_LAT, CONUS_LON,
    SIGNAL_COEFFICIENTS,
};
pub use temporal::temporal_encodings;
pub use types::{DailyRecord, Dataset, SampleId, Station, DEFAULT_START_YEAR};
pub use windows::{build_windows, SampleWindow, WINDOW_DAYS};
