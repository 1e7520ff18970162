//! Collapse of gradient variances onto
//! `Var(N, p) = A (C_N + exp(-|p - p_c| N^{1/nu}))`, fitted in log space.

use serde::{Deserialize, Serialize};

use super::collapse::SIGMA_FLOOR;
use super::nelder_mead::NelderMead;
use super::table::{EnsembleTable, ValueKind};
use crate::error::{Error, Result};

/// Variances at or below this are dropped before taking logarithms.
pub const VARIANCE_FLOOR: f64 = 1e-300;

/// How the plateau constant `C` depends on the size.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlateauMode {
    /// One constant `C_N` per size.
    #[default]
    PerSize,
    /// A single constant shared by all sizes.
    Global,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradVarOptions {
    pub plateau: PlateauMode,
    /// Starting exponents; the best of the resulting local fits wins.
    pub nu_starts: Vec<f64>,
    pub optimizer: NelderMead,
}

impl Default for GradVarOptions {
    fn default() -> Self {
        Self {
            plateau: PlateauMode::PerSize,
            nu_starts: vec![0.5, 0.8, 1.33, 2.0, 3.0],
            optimizer: NelderMead {
                max_iter: 5000,
                ..NelderMead::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradVarCollapseFit {
    pub p_c: f64,
    pub nu: f64,
    /// Overall amplitude `A`.
    pub amplitude: f64,
    /// `(N, C_N)`; under [`PlateauMode::Global`] every entry holds the same value.
    pub plateau: Vec<(usize, f64)>,
    pub mode: PlateauMode,
    pub chi2: f64,
    pub converged: bool,
    /// Rows left out because their variance was not positive.
    pub excluded: usize,
}

impl GradVarCollapseFit {
    pub fn predict(&self, n: usize, p: f64) -> f64 {
        let c = self
            .plateau
            .iter()
            .find(|(m, _)| *m == n)
            .map(|e| e.1)
            .unwrap_or(f64::NAN);
        self.amplitude * (c + (-(p - self.p_c).abs() * (n as f64).powf(1.0 / self.nu)).exp())
    }
}

/// Fits `nu`, `A` and the plateau constants at fixed `p_c` by chi-squared
/// minimization on `ln Var`, with `sigma_ln = stderr / Var`.
pub fn fit_gradvar_collapse(
    table: &EnsembleTable,
    p_c: f64,
    opts: &GradVarOptions,
) -> Result<GradVarCollapseFit> {
    if table.kind != ValueKind::GradVariance {
        return Err(Error::Fit(format!("expected a grad_variance table, got {}", table.kind.name())));
    }
    let sizes = table.sizes();
    let mut excluded = 0;
    // (size index, p - p_c, N, ln v, weight)
    let mut pts = Vec::new();
    for row in &table.rows {
        if !(row.mean > VARIANCE_FLOOR) {
            excluded += 1;
            continue;
        }
        let s = (row.stderr / row.mean).max(SIGMA_FLOOR);
        let k = sizes.iter().position(|&n| n == row.n).unwrap();
        pts.push((k, row.p - p_c, row.n as f64, row.mean.ln(), 1.0 / (s * s)));
    }
    if excluded > 0 {
        log::warn!("{excluded} non-positive variances excluded from the fit");
    }
    let used: std::collections::BTreeSet<usize> = pts.iter().map(|p| p.0).collect();
    if used.len() < 2 {
        return Err(Error::Fit("gradient-variance collapse needs at least two sizes".into()));
    }

    let per_size = opts.plateau == PlateauMode::PerSize;
    let n_c = if per_size { sizes.len() } else { 1 };
    // v = [ln nu, ln A, ln C_0 ..]
    let chi2 = |v: &[f64]| -> f64 {
        let nu = v[0].exp();
        if !(0.05..=50.0).contains(&nu) {
            return f64::INFINITY;
        }
        pts.iter()
            .map(|&(k, dp, n, lv, w)| {
                let c = v[2 + if per_size { k } else { 0 }].exp();
                let model = v[1] + (c + (-dp.abs() * n.powf(1.0 / nu)).exp()).ln();
                (lv - model).powi(2) * w
            })
            .sum()
    };

    let peak = pts.iter().map(|p| p.3).fold(f64::NEG_INFINITY, f64::max);
    let c_start: Vec<f64> = (0..n_c)
        .map(|k| {
            pts.iter()
                .filter(|p| !per_size || p.0 == k)
                .map(|p| p.3)
                .fold(f64::INFINITY, f64::min)
                - peak
        })
        .collect();

    let best = opts
        .nu_starts
        .iter()
        .map(|&nu| {
            let mut x0 = vec![nu.ln(), peak];
            x0.extend(c_start.iter().map(|&c| c.min(-0.1)));
            let steps = vec![0.2; x0.len()];
            opts.optimizer.minimize(chi2, &x0, &steps)
        })
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or_else(|| Error::Fit("no starting exponents".into()))?;

    let plateau = sizes
        .iter()
        .enumerate()
        .map(|(k, &n)| (n, best.x[2 + if per_size { k } else { 0 }].exp()))
        .collect();
    Ok(GradVarCollapseFit {
        p_c,
        nu: best.x[0].exp(),
        amplitude: best.x[1].exp(),
        plateau,
        mode: opts.plateau,
        chi2: best.value,
        converged: best.converged,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scaling::TableRow;
    use crate::sim::Family;

    fn synthetic(nu: f64, p_c: f64, plateau: impl Fn(usize) -> f64) -> EnsembleTable {
        let mut rows = Vec::new();
        for n in [6, 8, 10, 12] {
            for k in 0..=16 {
                let p = 0.05 * k as f64;
                let v = plateau(n) + (-(p - p_c).abs() * (n as f64).powf(1.0 / nu)).exp();
                rows.push(TableRow {
                    family: Family::Hea,
                    n,
                    p,
                    r: None,
                    depth: 16,
                    samples: 100,
                    mean: v,
                    std: 0.0,
                    stderr: 0.0,
                    raw: vec![],
                });
            }
        }
        EnsembleTable::new(ValueKind::GradVariance, rows)
    }

    #[test]
    fn recovers_planted_exponent() {
        let t = synthetic(1.3, 0.5, |n| 0.2 * (-0.3 * n as f64).exp());
        let f = fit_gradvar_collapse(&t, 0.5, &GradVarOptions::default()).unwrap();
        assert!((f.nu - 1.3).abs() < 0.05, "{f:?}");
        assert!((f.amplitude - 1.0).abs() < 0.05);
        assert!((f.predict(8, 0.3) - t.rows[17 + 6].mean).abs() < 1e-3);
    }

    #[test]
    fn global_plateau() {
        let t = synthetic(1.0, 0.3, |_| 0.05);
        let opts = GradVarOptions {
            plateau: PlateauMode::Global,
            ..Default::default()
        };
        let f = fit_gradvar_collapse(&t, 0.3, &opts).unwrap();
        assert!((f.nu - 1.0).abs() < 0.05, "{f:?}");
        assert!(f.plateau.iter().all(|&(_, c)| c == f.plateau[0].1));
    }

    #[test]
    fn non_positive_rows_are_excluded() {
        let mut t = synthetic(1.3, 0.5, |_| 0.1);
        t.rows[0].mean = 0.0;
        let f = fit_gradvar_collapse(&t, 0.5, &GradVarOptions::default()).unwrap();
        assert_eq!(f.excluded, 1);
    }

    #[test]
    fn wrong_kind() {
        let mut t = synthetic(1.3, 0.5, |_| 0.1);
        t.kind = ValueKind::Entropy;
        assert!(fit_gradvar_collapse(&t, 0.5, &GradVarOptions::default()).is_err());
    }
}
