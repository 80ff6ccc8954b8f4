use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::LrSchedule;
use crate::spatialdata::WINDOW_DAYS;

/// How location enters the regressor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeolocationMode {
    /// No location input.
    None,
    /// Scaled latitude and longitude appended to every step.
    Raw,
    /// `sin/cos` of latitude and longitude appended to every step.
    Sinusoidal,
    /// Frozen location embedding fused with the sequence embedding.
    Encoder,
}

impl GeolocationMode {
    /// Extra per-step input columns.
    pub fn extra_inputs(self) -> usize {
        match self {
            GeolocationMode::Raw => 2,
            GeolocationMode::Sinusoidal => 4,
            GeolocationMode::None | GeolocationMode::Encoder => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GeolocationMode::None => "none",
            GeolocationMode::Raw => "raw",
            GeolocationMode::Sinusoidal => "sin",
            GeolocationMode::Encoder => "encoder",
        }
    }
}

impl fmt::Display for GeolocationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GeolocationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(GeolocationMode::None),
            "raw" => Ok(GeolocationMode::Raw),
            "sin" | "sinusoidal" => Ok(GeolocationMode::Sinusoidal),
            "encoder" => Ok(GeolocationMode::Encoder),
            other => Err(Error::InvalidParameter(format!(
                "unknown geolocation mode '{other}' (expected none, raw, sin or encoder)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    Hadamard,
    Concat,
}

impl FromStr for Fusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hadamard" => Ok(Fusion::Hadamard),
            "concat" => Ok(Fusion::Concat),
            other => Err(Error::InvalidParameter(format!(
                "unknown fusion '{other}' (expected hadamard or concat)"
            ))),
        }
    }
}

impl fmt::Display for Fusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fusion::Hadamard => "hadamard",
            Fusion::Concat => "concat",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub huber_delta: f64,
    pub seed: u64,
    pub schedule: LrSchedule,
    /// Stop after this many epochs without validation improvement.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 256,
            huber_delta: 1.0,
            seed: 0,
            schedule: LrSchedule::default(),
            patience: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mode: GeolocationMode,
    pub fusion: Fusion,
    pub window: usize,
    /// Per-step feature count before any coordinate columns.
    pub features: usize,
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
    /// Location embedding width; required in encoder mode.
    pub embedding_dim: Option<usize>,
    /// Project the embedding before concatenation instead of using it as is.
    pub concat_projection: bool,
    pub train: TrainConfig,
}

impl ModelConfig {
    pub fn new(mode: GeolocationMode, features: usize) -> Self {
        ModelConfig {
            mode,
            fusion: Fusion::Hadamard,
            window: WINDOW_DAYS,
            features,
            hidden: 64,
            layers: 2,
            dropout: 0.2,
            embedding_dim: None,
            concat_projection: false,
            train: TrainConfig::default(),
        }
    }

    pub fn input_width(&self) -> usize {
        self.features + self.mode.extra_inputs()
    }

    /// Width of the time-series embedding.
    pub fn sequence_dim(&self) -> usize {
        2 * self.hidden
    }

    /// Width of the vector fed to the regression head.
    pub fn fused_dim(&self) -> usize {
        match (self.mode, self.fusion) {
            (GeolocationMode::Encoder, Fusion::Concat) => {
                let d = self.embedding_dim.unwrap_or(0);
                self.sequence_dim() + if self.concat_projection { self.sequence_dim() } else { d }
            }
            _ => self.sequence_dim(),
        }
    }

    /// Every inconsistency, empty when the config is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.window == 0 {
            v.push("window must be at least 1".to_string());
        }
        if self.features == 0 {
            v.push("features must be at least 1".to_string());
        }
        if self.hidden == 0 {
            v.push("hidden must be at least 1".to_string());
        }
        if self.layers == 0 {
            v.push("layers must be at least 1".to_string());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            v.push(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        match (self.mode, self.embedding_dim) {
            (GeolocationMode::Encoder, None) | (GeolocationMode::Encoder, Some(0)) => {
                v.push("encoder mode needs a positive embedding_dim".to_string())
            }
            (GeolocationMode::None | GeolocationMode::Raw | GeolocationMode::Sinusoidal, Some(_)) => {
                v.push(format!("embedding_dim is only used in encoder mode, not {}", self.mode))
            }
            _ => {}
        }
        let t = &self.train;
        if t.epochs == 0 {
            v.push("epochs must be at least 1".to_string());
        }
        if t.batch_size == 0 {
            v.push("batch_size must be at least 1".to_string());
        }
        if !(t.huber_delta > 0.0) {
            v.push(format!("huber_delta must be > 0, got {}", t.huber_delta));
        }
        if !(t.schedule.initial > 0.0) || !(t.schedule.decay > 0.0) || t.schedule.interval == 0 {
            v.push("learning-rate schedule needs initial > 0, decay > 0, interval > 0".to_string());
        }
        if t.patience == Some(0) {
            v.push("patience must be at least 1 when set".to_string());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_widths() {
        assert_eq!(ModelConfig::new(GeolocationMode::None, 14).input_width(), 14);
        assert_eq!(ModelConfig::new(GeolocationMode::Sinusoidal, 14).input_width(), 18);
        assert_eq!(ModelConfig::new(GeolocationMode::Raw, 14).input_width(), 16);
    }

    #[test]
    fn violations_are_listed_together() {
        let mut c = ModelConfig::new(GeolocationMode::Encoder, 0);
        c.dropout = 1.5;
        c.train.epochs = 0;
        let v = c.violations();
        assert_eq!(v.len(), 4, "{v:?}");
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn parse_names() {
        assert_eq!("sinusoidal".parse::<GeolocationMode>().unwrap(), GeolocationMode::Sinusoidal);
        assert_eq!("sin".parse::<GeolocationMode>().unwrap(), GeolocationMode::Sinusoidal);
        assert!("latlon".parse::<GeolocationMode>().is_err());
        assert_eq!("concat".parse::<Fusion>().unwrap(), Fusion::Concat);
    }
}
