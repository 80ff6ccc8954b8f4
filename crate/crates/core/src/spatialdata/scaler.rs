use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-column MinMax parameters mapping `[min, max]` onto `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ScalerParams {
    /// Fits on the observed entries of `rows`. A column with no observed
    /// value gets `min = max = 0`.
    pub fn fit<R: AsRef<[Option<f64>]>>(columns: usize, rows: impl IntoIterator<Item = R>) -> Result<Self> {
        let mut min = vec![f64::INFINITY; columns];
        let mut max = vec![f64::NEG_INFINITY; columns];
        let mut n = 0usize;
        for row in rows {
            let row = row.as_ref();
            if row.len() != columns {
                return Err(Error::dim("scaler_fit row", columns, row.len()));
            }
            for (j, v) in row.iter().enumerate() {
                if let Some(v) = *v {
                    if !v.is_finite() {
                        return Err(Error::NonFinite(format!("scaler_fit column {j}")));
                    }
                    min[j] = min[j].min(v);
                    max[j] = max[j].max(v);
                }
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::Empty("scaler_fit"));
        }
        for j in 0..columns {
            if min[j] > max[j] {
                min[j] = 0.0;
                max[j] = 0.0;
            }
        }
        Ok(ScalerParams { min, max })
    }

    /// Single-column fit.
    pub fn fit_values(values: &[f64]) -> Result<Self> {
        Self::fit(1, values.iter().map(|&v| [Some(v)]))
    }

    pub fn columns(&self) -> usize {
        self.min.len()
    }

    pub fn apply_value(&self, j: usize, x: f64) -> f64 {
        let range = self.max[j] - self.min[j];
        if range == 0.0 {
            0.0
        } else {
            2.0 * (x - self.min[j]) / range - 1.0
        }
    }

    pub fn invert_value(&self, j: usize, y: f64) -> f64 {
        (y + 1.0) / 2.0 * (self.max[j] - self.min[j]) + self.min[j]
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.columns() {
            return Err(Error::dim("scaler_apply", self.columns(), x.len()));
        }
        Ok(x.iter().enumerate().map(|(j, &v)| self.apply_value(j, v)).collect())
    }

    pub fn invert(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.columns() {
            return Err(Error::dim("scaler_invert", self.columns(), y.len()));
        }
        Ok(y.iter().enumerate().map(|(j, &v)| self.invert_value(j, v)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn endpoints_and_midpoint() {
        let s = ScalerParams::fit_values(&[0.0, 10.0]).unwrap();
        assert_eq!(s.apply_value(0, 0.0), -1.0);
        assert_eq!(s.apply_value(0, 10.0), 1.0);
        assert_eq!(s.apply_value(0, 5.0), 0.0);
        assert_eq!(s.apply_value(0, 20.0), 3.0);
    }

    #[test]
    fn degenerate_column_maps_to_zero() {
        let s = ScalerParams::fit(2, [[Some(3.0), None], [Some(3.0), None]]).unwrap();
        assert_eq!(s.apply(&[3.0, 8.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(s.invert_value(0, 0.0), 3.0);
    }

    #[test]
    fn round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..1000).map(|_| rng.random_range(-50.0..80.0)).collect();
        let s = ScalerParams::fit_values(&xs).unwrap();
        let worst = xs
            .iter()
            .map(|&x| (s.invert_value(0, s.apply_value(0, x)) - x).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn empty_fit_fails() {
        let rows: Vec<Vec<Option<f64>>> = vec![];
        assert!(ScalerParams::fit(2, rows).is_err());
    }
}
