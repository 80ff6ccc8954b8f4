use crate::error::{Error, Result};
use crate::nncore::Tensor2;

/// Default window length in days.
pub const WINDOW_DAYS: usize = 21;

/// `T` consecutive days of scaled inputs ending on `end_day`, with the
/// target of that day. Missing entries hold `0` and a `false` mask bit.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleWindow {
    pub station: usize,
    pub end_day: u32,
    pub features: Tensor2<f64>,
    /// Row-major `T × width`; `true` means observed.
    pub mask: Vec<bool>,
    pub target: f64,
}

impl SampleWindow {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn width(&self) -> usize {
        self.features.cols()
    }

    pub fn observed(&self, t: usize, j: usize) -> bool {
        self.mask[t * self.width() + j]
    }

    /// A step takes part in the recurrence when any of its entries is
    /// observed; padded days never do.
    pub fn step_mask(&self) -> Vec<bool> {
        let w = self.width();
        self.mask.chunks(w.max(1)).map(|r| r.iter().any(|&b| b)).collect()
    }
}

/// Windows for one station. `rows[d]` holds the scaled inputs of day `d`
/// (`None` entries are missing); one window is produced for every day with
/// an observed entry in `targets`. Days before the start are left-padded
/// with fully masked steps.
pub fn build_windows(
    station: usize,
    rows: &[Vec<Option<f64>>],
    targets: &[Option<f64>],
    window: usize,
) -> Result<Vec<SampleWindow>> {
    if window == 0 {
        return Err(Error::InvalidParameter("window length must be at least 1".into()));
    }
    if rows.len() != targets.len() {
        return Err(Error::dim("build_windows days", rows.len(), targets.len()));
    }
    let width = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != width) {
        return Err(Error::dim("build_windows row width", width, bad.len()));
    }
    let mut out = Vec::new();
    for (end, target) in targets.iter().enumerate() {
        let Some(target) = *target else { continue };
        let mut data = vec![0.0; window * width];
        let mut mask = vec![false; window * width];
        for t in 0..window {
            // step t covers day end - (window - 1 - t)
            let back = window - 1 - t;
            if back > end {
                continue;
            }
            for (j, v) in rows[end - back].iter().enumerate() {
                if let Some(v) = v {
                    data[t * width + j] = *v;
                    mask[t * width + j] = true;
                }
            }
        }
        out.push(SampleWindow {
            station,
            end_day: end as u32,
            features: Tensor2::from_vec(window, width, data)?,
            mask,
            target,
        });
    }
    Ok(out)
}
