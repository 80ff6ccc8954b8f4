//! Coordinate featurizations, learnable location encoders, contrastive
//! pretraining and embedding persistence.

mod contrastive;
mod coord;
mod encoder;
mod featurize;
mod table;

pub use contrastive::{
    contrastive_loss, infonce_loss, pretrain_contrastive, top1_retrieval, PretrainConfig, PretrainReport,
};
pub use coord::{GeoCoord, EARTH_RADIUS_KM};
pub use encoder::{EncoderCache, EncoderConfig, LocationEncoder, ENCODER_FILE_HEADER};
pub use featurize::{featurize_raw, featurize_sinusoidal, fourier_encode, spherical_encode, PositionalEncoding};
pub use table::EmbeddingTable;

pub(crate) use encoder::{ArrayRecord, EncoderFile};
