use serde::{Deserialize, Serialize};

use super::collapse::{bootstrap_nu, fit_at, CollapseOptions};
use super::table::EnsembleTable;
use crate::error::{Error, Result};

/// Exponent fitted on a size-truncated data set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizePoint {
    /// Largest size included in the fit.
    pub n_max: usize,
    pub nu: f64,
    pub std_err: Option<f64>,
}

/// Straight line `nu(N') = a / N' + b`; `b` is the infinite-size exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationFit {
    pub a: f64,
    pub b: f64,
    pub points: Vec<SizePoint>,
    /// Whether the points were weighted by `1 / std_err^2`.
    pub weighted: bool,
}

/// Weighted least squares of `nu` against `1 / N'`.
///
/// Points are weighted by their standard errors when every point has a
/// positive one, and uniformly otherwise.
pub fn extrapolate_nu(points: &[SizePoint]) -> Result<ExtrapolationFit> {
    if points.len() < 2 {
        return Err(Error::Fit("extrapolation needs at least two sizes".into()));
    }
    let first = points[0].n_max;
    if points.iter().all(|p| p.n_max == first) {
        return Err(Error::Fit("extrapolation design is degenerate: all N' equal".into()));
    }
    let weighted = points.iter().all(|p| p.std_err.is_some_and(|s| s > 0.0));
    let w = |p: &SizePoint| if weighted { p.std_err.unwrap().powi(-2) } else { 1.0 };

    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for p in points {
        let x = 1.0 / p.n_max as f64;
        sw += w(p);
        sx += w(p) * x;
        sy += w(p) * p.nu;
    }
    let (xm, ym) = (sx / sw, sy / sw);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for p in points {
        let dx = 1.0 / p.n_max as f64 - xm;
        sxx += w(p) * dx * dx;
        sxy += w(p) * dx * (p.nu - ym);
    }
    let a = sxy / sxx;
    Ok(ExtrapolationFit {
        a,
        b: ym - a * xm,
        points: points.to_vec(),
        weighted,
    })
}

/// Refits `nu` at fixed `p_c` on the sizes `N <= N'` for every `N'` from
/// `N_max / 2` to `N_max` that leaves at least two sizes.
///
/// With `k_boot > 0` each point also carries a bootstrap standard error.
pub fn nu_vs_size(
    table: &EnsembleTable,
    p_c: f64,
    k_boot: usize,
    seed: u64,
    opts: &CollapseOptions,
) -> Result<Vec<SizePoint>> {
    let sizes = table.sizes();
    let n_max = *sizes.last().ok_or_else(|| Error::Fit("empty table".into()))?;
    sizes
        .iter()
        .enumerate()
        .filter(|&(i, &n)| i >= 1 && 2 * n >= n_max)
        .map(|(_, &cut)| {
            let sub = table.filter_sizes(|n| n <= cut);
            let nu = fit_at(&sub, p_c, opts)?.nu;
            let std_err = if k_boot >= 2 {
                Some(bootstrap_nu(&sub, p_c, k_boot, seed, opts)?)
            } else {
                None
            };
            Ok(SizePoint {
                n_max: cut,
                nu,
                std_err,
            })
        })
        .collect()
}
