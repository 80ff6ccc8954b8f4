//! Fixed coordinate featurizations: raw degrees, sin/cos, multi-band Fourier
//! features and real spherical harmonics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::coord::GeoCoord;
use crate::error::{Error, Result};

pub fn featurize_raw(c: &GeoCoord) -> Result<[f64; 2]> {
    c.validate()?;
    Ok([c.lat, c.lon])
}

/// `[sin φ, cos φ, sin λ, cos λ]` with the angles in radians.
pub fn featurize_sinusoidal(c: &GeoCoord) -> Result<[f64; 4]> {
    c.validate()?;
    let (p, l) = (c.lat.to_radians(), c.lon.to_radians());
    Ok([p.sin(), p.cos(), l.sin(), l.cos()])
}

/// Multi-band Fourier features of the coordinate normalized to `[-1, 1]`
/// (`φ/90`, `λ/180`). For `j = 0..k` the latitude block holds
/// `sin(2ʲπφ), cos(2ʲπφ)`, followed by the longitude block in the same
/// order, for `4k` values in total.
pub fn fourier_encode(c: &GeoCoord, bands: usize) -> Result<Vec<f64>> {
    c.validate()?;
    if bands == 0 {
        return Err(Error::InvalidParameter("fourier_encode needs at least one band".into()));
    }
    let mut out = Vec::with_capacity(4 * bands);
    for x in [c.lat / 90.0, c.lon / 180.0] {
        let mut freq = PI;
        for _ in 0..bands {
            out.push((freq * x).sin());
            out.push((freq * x).cos());
            freq *= 2.0;
        }
    }
    Ok(out)
}

/// Orthonormal real spherical harmonics `Y_l^m` for `l = 0..=degree`,
/// `m = -l..=l`, evaluated at colatitude `θ = 90° − φ` and longitude `λ`.
/// Negative orders use `sin(|m|λ)`, positive orders `cos(mλ)`.
pub fn spherical_encode(c: &GeoCoord, degree: usize) -> Result<Vec<f64>> {
    c.validate()?;
    let x = c.lat.to_radians().sin(); // cos θ
    let s = (1.0 - x * x).max(0.0).sqrt(); // sin θ
    let lam = c.lon.to_radians();
    let l_max = degree;
    // plm[l][m] unnormalized associated Legendre, no Condon–Shortley phase
    let mut plm = vec![vec![0.0f64; l_max + 1]; l_max + 1];
    plm[0][0] = 1.0;
    for m in 0..=l_max {
        if m > 0 {
            plm[m][m] = plm[m - 1][m - 1] * (2 * m - 1) as f64 * s;
        }
        if m < l_max {
            plm[m + 1][m] = x * (2 * m + 1) as f64 * plm[m][m];
        }
        for l in (m + 2)..=l_max {
            plm[l][m] = ((2 * l - 1) as f64 * x * plm[l - 1][m] - (l + m - 1) as f64 * plm[l - 2][m])
                / (l - m) as f64;
        }
    }
    let mut out = Vec::with_capacity((l_max + 1) * (l_max + 1));
    for l in 0..=l_max {
        for m in -(l as i64)..=(l as i64) {
            let am = m.unsigned_abs() as usize;
            // (l-|m|)!/(l+|m|)!
            let ratio: f64 = ((l - am + 1)..=(l + am)).map(|k| 1.0 / k as f64).product();
            let norm = ((2 * l + 1) as f64 / (4.0 * PI) * ratio).sqrt();
            let v = match m.cmp(&0) {
                std::cmp::Ordering::Equal => norm * plm[l][0],
                std::cmp::Ordering::Greater => {
                    std::f64::consts::SQRT_2 * norm * plm[l][am] * (am as f64 * lam).cos()
                }
                std::cmp::Ordering::Less => {
                    std::f64::consts::SQRT_2 * norm * plm[l][am] * (am as f64 * lam).sin()
                }
            };
            out.push(v);
        }
    }
    Ok(out)
}

/// Fixed positional expansion applied before a learnable encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PositionalEncoding {
    Raw,
    Sinusoidal,
    Fourier { bands: usize },
    Spherical { degree: usize },
}

impl PositionalEncoding {
    pub fn output_dim(&self) -> usize {
        match *self {
            PositionalEncoding::Raw => 2,
            PositionalEncoding::Sinusoidal => 4,
            PositionalEncoding::Fourier { bands } => 4 * bands,
            PositionalEncoding::Spherical { degree } => (degree + 1) * (degree + 1),
        }
    }

    pub fn encode(&self, c: &GeoCoord) -> Result<Vec<f64>> {
        match *self {
            PositionalEncoding::Raw => Ok(featurize_raw(c)?.to_vec()),
            PositionalEncoding::Sinusoidal => Ok(featurize_sinusoidal(c)?.to_vec()),
            PositionalEncoding::Fourier { bands } => fourier_encode(c, bands),
            PositionalEncoding::Spherical { degree } => spherical_encode(c, degree),
        }
    }
}
