use serde::{Deserialize, Serialize};

use super::table::TableRow;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MutualInfoPeak {
    pub p: f64,
    /// Smoothed mean at the peak.
    pub value: f64,
    /// 3-point moving average of the curve, one entry per grid point.
    pub smoothed: Vec<f64>,
    /// Set when the smoothed curve varies by less than twice the largest
    /// standard error, so the maximum is not resolved.
    pub low_confidence: bool,
}

/// Location of the maximum of a mean mutual-information curve.
///
/// `curve` is one `(N, r)` slice; rows are sorted by `p` internally.
pub fn mutual_info_peak(curve: &[TableRow]) -> Result<MutualInfoPeak> {
    if curve.len() < 8 {
        return Err(Error::Fit(format!("peak search needs at least 8 p values, got {}", curve.len())));
    }
    let mut rows: Vec<&TableRow> = curve.iter().collect();
    rows.sort_by(|a, b| a.p.total_cmp(&b.p));
    let smoothed: Vec<f64> = (0..rows.len())
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(rows.len() - 1);
            rows[lo..=hi].iter().map(|r| r.mean).sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let (best, &value) = smoothed
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty curve");
    let min = smoothed.iter().cloned().fold(f64::INFINITY, f64::min);
    let noise = rows.iter().map(|r| r.stderr).fold(0.0, f64::max);
    Ok(MutualInfoPeak {
        p: rows[best].p,
        value,
        low_confidence: value - min <= 2.0 * noise,
        smoothed,
    })
}
