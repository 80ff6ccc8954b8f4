use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub r2: f64,
    pub rmse: f64,
    pub mbe: f64,
}

/// R² about the observed mean, RMSE, and mean bias `mean(pred − obs)`.
pub fn metrics(pred: &[f64], obs: &[f64]) -> Result<Metrics> {
    if pred.is_empty() {
        return Err(Error::Empty("metrics input"));
    }
    if pred.len() != obs.len() {
        return Err(Error::dim("metrics", obs.len(), pred.len()));
    }
    if pred.iter().chain(obs).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("metrics input".into()));
    }
    let n = pred.len() as f64;
    let mean_obs = obs.iter().sum::<f64>() / n;
    let ss_tot: f64 = obs.iter().map(|y| (y - mean_obs).powi(2)).sum();
    let ss_res: f64 = pred.iter().zip(obs).map(|(p, y)| (p - y).powi(2)).sum();
    let mbe = pred.iter().zip(obs).map(|(p, y)| p - y).sum::<f64>() / n;
    if ss_tot == 0.0 {
        return Err(Error::UndefinedMetric("R² with constant observations"));
    }
    Ok(Metrics {
        r2: 1.0 - ss_res / ss_tot,
        rmse: (ss_res / n).sqrt(),
        mbe,
    })
}

/// Mean and sample standard deviation (`n − 1`); the deviation of a single
/// value is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Summary> {
        if values.is_empty() {
            return Err(Error::Empty("summary of no runs"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Ok(Summary { mean, sd })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub r2: Summary,
    pub rmse: Summary,
    pub mbe: Summary,
}

impl MetricsSummary {
    pub fn of(runs: &[Metrics]) -> Result<Self> {
        let col = |f: fn(&Metrics) -> f64| runs.iter().map(f).collect::<Vec<_>>();
        Ok(MetricsSummary {
            r2: Summary::of(&col(|m| m.r2))?,
            rmse: Summary::of(&col(|m| m.rmse))?,
            mbe: Summary::of(&col(|m| m.mbe))?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_derived_triple() {
        let m = metrics(&[1.0, 2.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((m.r2 - 0.5).abs() < 1e-12);
        assert!((m.rmse - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((m.mbe - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_offset() {
        let obs = [3.0, 1.0, 4.0, 1.5];
        let m = metrics(&obs, &obs).unwrap();
        assert_eq!((m.r2, m.rmse, m.mbe), (1.0, 0.0, 0.0));
        let shifted: Vec<f64> = obs.iter().map(|v| v + 2.0).collect();
        assert!((metrics(&shifted, &obs).unwrap().mbe - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_observations_are_flagged() {
        assert!(matches!(metrics(&[1.0, 2.0], &[5.0, 5.0]), Err(Error::UndefinedMetric(_))));
        assert!(metrics(&[], &[]).is_err());
        assert!(metrics(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn summary_sd() {
        let s = Summary::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.sd, 1.0);
        assert_eq!(Summary::of(&[4.0, 4.0]).unwrap().sd, 0.0);
        assert_eq!(Summary::of(&[4.0]).unwrap().sd, 0.0);
    }
}
