//! Finite-size-scaling collapse of `S(N, p)`.
//!
//! With the scaling variable `x = N^{1/nu} (p - p_c)` and
//! `y = S(N, p) - S(N, p_c)`, all sizes should fall on one curve `y = g(x)`.
//! `g` is a degree-5 polynomial; `(nu, g)` are fitted jointly by Nelder-Mead
//! on a chi-squared statistic for each candidate `p_c`, and the candidate with
//! the smallest chi-squared wins.
//!
//! The anchors `S(N, p_c)` are either read off the data by interpolation or
//! fitted as one offset per size with `g(0) = 0` ([`AnchorMode`]). A single
//! noisy cell as anchor shifts every point of its size; interpolating between
//! two cells halves that noise, which biases the scan toward off-grid `p_c`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::nelder_mead::NelderMead;
use super::table::{EnsembleTable, TableRow};
use crate::error::{Error, Result};
use crate::sim::derive_seed;
use crate::stats;

/// Errors smaller than this are clamped before weighting.
pub const SIGMA_FLOOR: f64 = 1e-6;

const NU_MIN: f64 = 0.1;
const NU_MAX: f64 = 20.0;

/// Power of the error in the chi-squared denominator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chi2Convention {
    /// `sum (y - g)^2 / sigma^2`.
    #[default]
    Squared,
    /// `sum (y - g)^2 / sigma`.
    Linear,
}

/// Which spread of a cell serves as `sigma`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorScale {
    /// Standard error of the cell mean.
    #[default]
    StdError,
    /// Sample standard deviation of the realizations.
    StdDev,
}

/// Where `S(N, p_c)` comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorMode {
    /// Free offset per size, fitted together with `g`, and `g(0) = 0`.
    #[default]
    Fitted,
    /// Linear interpolation of each mean curve at `p_c`.
    Interpolated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollapseOptions {
    pub chi2: Chi2Convention,
    pub error: ErrorScale,
    pub anchor: AnchorMode,
    pub degree: usize,
    /// Candidate `p_c` grid: each sampled interval is split this many times.
    pub refine: usize,
    pub nu_start: f64,
    pub optimizer: NelderMead,
}

impl Default for CollapseOptions {
    fn default() -> Self {
        Self {
            chi2: Chi2Convention::Squared,
            error: ErrorScale::StdError,
            anchor: AnchorMode::Fitted,
            degree: 5,
            refine: 4,
            nu_start: 1.33,
            optimizer: NelderMead::default(),
        }
    }
}

/// A point of the rescaled data set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaledPoint {
    pub n: usize,
    pub p: f64,
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseFit {
    pub p_c: f64,
    pub nu: f64,
    /// Coefficients of `g(x) = sum_k c_k x^k`, lowest order first.
    pub poly_coeffs: Vec<f64>,
    /// Range of the rescaled data; [`CollapseFit::eval`] clamps to it.
    pub x_range: (f64, f64),
    /// `(N, S(N, p_c))` used as the origin of `y`.
    pub anchors: Vec<(usize, f64)>,
    pub chi2: f64,
    pub dof: i64,
    pub converged: bool,
    /// Bootstrap standard error of `nu`, once computed.
    pub bootstrap_std_nu: Option<f64>,
    pub k_boot: usize,
    /// `(p_c, nu, chi2)` for every candidate examined.
    pub candidates: Vec<(f64, f64, f64)>,
}

impl CollapseFit {
    /// `g(x)`, with `x` clipped to the fitted range.
    pub fn eval(&self, x: f64) -> f64 {
        poly(&self.poly_coeffs, x.clamp(self.x_range.0, self.x_range.1))
    }

    /// Rescales `table` with this fit's `p_c`, `nu` and anchors.
    pub fn rescale(&self, table: &EnsembleTable) -> Vec<RescaledPoint> {
        table
            .rows
            .iter()
            .map(|row| {
                let s_c = self.anchors.iter().find(|(n, _)| *n == row.n).map_or(f64::NAN, |a| a.1);
                RescaledPoint {
                    n: row.n,
                    p: row.p,
                    x: (row.n as f64).powf(1.0 / self.nu) * (row.p - self.p_c),
                    y: row.mean - s_c,
                    sigma: row.stderr,
                }
            })
            .collect()
    }
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck)
}

/// Linear interpolation of a `p`-sorted curve at `p`.
fn interpolate(curve: &[&TableRow], p: f64) -> Option<f64> {
    let hi = curve.iter().position(|r| r.p >= p)?;
    if curve[hi].p == p {
        return Some(curve[hi].mean);
    }
    if hi == 0 {
        return None;
    }
    let (a, b) = (curve[hi - 1], curve[hi]);
    let t = (p - a.p) / (b.p - a.p);
    Some(a.mean + t * (b.mean - a.mean))
}

/// Anchors `S(N, p_c)` for every size.
fn anchors(table: &EnsembleTable, p_c: f64) -> Result<Vec<(usize, f64)>> {
    table
        .sizes()
        .into_iter()
        .map(|n| {
            let curve = table.curve(n, None);
            interpolate(&curve, p_c)
                .map(|s| (n, s))
                .ok_or_else(|| Error::Fit(format!("p_c = {p_c} outside the sampled range for N = {n}")))
        })
        .collect()
}

fn sigma(row: &TableRow, scale: ErrorScale) -> f64 {
    match scale {
        ErrorScale::StdError => row.stderr,
        ErrorScale::StdDev => row.std,
    }
    .max(SIGMA_FLOOR)
}

/// Maps every row to `(N^{1/nu}(p - p_c), S(N,p) - S(N,p_c))`.
///
/// `S(N, p_c)` is linearly interpolated when `p_c` falls between grid points.
pub fn rescale(table: &EnsembleTable, p_c: f64, nu: f64) -> Result<Vec<RescaledPoint>> {
    rescale_with(table, p_c, nu, ErrorScale::StdError)
}

fn rescale_with(table: &EnsembleTable, p_c: f64, nu: f64, scale: ErrorScale) -> Result<Vec<RescaledPoint>> {
    if !(nu > 0.0) {
        return Err(Error::Fit(format!("nu must be positive, got {nu}")));
    }
    let anchors = anchors(table, p_c)?;
    Ok(table
        .rows
        .iter()
        .map(|row| {
            let s_c = anchors.iter().find(|(n, _)| *n == row.n).map(|a| a.1).unwrap_or(0.0);
            RescaledPoint {
                n: row.n,
                p: row.p,
                x: (row.n as f64).powf(1.0 / nu) * (row.p - p_c),
                y: row.mean - s_c,
                sigma: sigma(row, scale),
            }
        })
        .collect())
}

/// Chi-squared objective for a fixed `p_c`, in the variables
/// `(ln nu, coefficients)`. The model is linear in the coefficients: powers
/// of `x / max|x|` (from `x^1` under [`AnchorMode::Fitted`]) followed by one
/// indicator per size for the fitted anchors. Scaling `x` keeps the normal
/// equations well conditioned for any exponent.
struct Objective {
    rows: Vec<(usize, f64, f64, f64, f64)>, // (size index, n, p - p_c, y, weight)
    sizes: Vec<usize>,
    degree: usize,
    anchor: AnchorMode,
    interpolated: Vec<(usize, f64)>,
}

impl Objective {
    fn new(table: &EnsembleTable, p_c: f64, opts: &CollapseOptions) -> Result<Self> {
        let sizes = table.sizes();
        let interpolated = match opts.anchor {
            AnchorMode::Interpolated => anchors(table, p_c)?,
            AnchorMode::Fitted => {
                anchors(table, p_c)?;
                Vec::new()
            }
        };
        let rows = table
            .rows
            .iter()
            .map(|row| {
                let k = sizes.iter().position(|&n| n == row.n).unwrap();
                let s_c = interpolated.get(k).map_or(0.0, |a| a.1);
                let s = sigma(row, opts.error);
                let w = match opts.chi2 {
                    Chi2Convention::Squared => 1.0 / (s * s),
                    Chi2Convention::Linear => 1.0 / s,
                };
                (k, row.n as f64, row.p - p_c, row.mean - s_c, w)
            })
            .collect();
        Ok(Self {
            rows,
            sizes,
            degree: opts.degree,
            anchor: opts.anchor,
            interpolated,
        })
    }

    fn x(n: f64, dp: f64, nu: f64) -> f64 {
        n.powf(1.0 / nu) * dp
    }

    fn x_range(&self, nu: f64) -> (f64, f64) {
        self.rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, n, dp, _, _)| {
            let x = Self::x(n, dp, nu);
            (lo.min(x), hi.max(x))
        })
    }

    fn x_scale(&self, nu: f64) -> f64 {
        let (lo, hi) = self.x_range(nu);
        lo.abs().max(hi.abs()).max(1e-12)
    }

    fn first_power(&self) -> usize {
        match self.anchor {
            AnchorMode::Fitted => 1,
            AnchorMode::Interpolated => 0,
        }
    }

    fn num_coeffs(&self) -> usize {
        match self.anchor {
            AnchorMode::Fitted => self.degree + self.sizes.len(),
            AnchorMode::Interpolated => self.degree + 1,
        }
    }

    /// Model value of row `i` for coefficients `c`.
    fn model(&self, i: usize, c: &[f64], nu: f64, scale: f64) -> f64 {
        let (k, n, dp, _, _) = self.rows[i];
        let xs = Self::x(n, dp, nu) / scale;
        let powers = self.degree + 1 - self.first_power();
        let g = c[..powers].iter().rev().fold(0.0, |acc, &ck| acc * xs + ck) * xs.powi(self.first_power() as i32);
        g + c.get(powers + k).filter(|_| self.anchor == AnchorMode::Fitted).unwrap_or(&0.0)
    }

    fn chi2(&self, v: &[f64]) -> f64 {
        let nu = v[0].exp();
        if !(NU_MIN..=NU_MAX).contains(&nu) {
            return f64::INFINITY;
        }
        let scale = self.x_scale(nu);
        (0..self.rows.len())
            .map(|i| (self.rows[i].3 - self.model(i, &v[1..], nu, scale)).powi(2) * self.rows[i].4)
            .sum()
    }

    /// Weighted least-squares coefficients at fixed `nu`.
    fn best_coeffs(&self, nu: f64) -> Vec<f64> {
        let m = self.num_coeffs();
        let scale = self.x_scale(nu);
        let powers = self.degree + 1 - self.first_power();
        let a = DMatrix::from_fn(self.rows.len(), m, |i, j| {
            let (k, n, dp, _, w) = self.rows[i];
            let v = if j < powers {
                (Self::x(n, dp, nu) / scale).powi((j + self.first_power()) as i32)
            } else {
                f64::from(u8::from(j - powers == k))
            };
            w.sqrt() * v
        });
        let b = DVector::from_fn(self.rows.len(), |i, _| self.rows[i].4.sqrt() * self.rows[i].3);
        a.svd(true, true)
            .solve(&b, 1e-12)
            .map(|c| c.iter().copied().collect())
            .unwrap_or_else(|_| vec![0.0; m])
    }

    fn profile(&self, nu: f64) -> (f64, Vec<f64>) {
        let mut v = vec![nu.ln()];
        v.extend(self.best_coeffs(nu));
        (self.chi2(&v), v)
    }

    /// Polynomial coefficients in unscaled `x`, lowest order first, and the anchors.
    fn unpack(&self, c: &[f64], nu: f64) -> (Vec<f64>, Vec<(usize, f64)>) {
        let scale = self.x_scale(nu);
        let powers = self.degree + 1 - self.first_power();
        let mut poly = vec![0.0; self.first_power()];
        poly.extend_from_slice(&c[..powers]);
        let poly = poly.iter().enumerate().map(|(k, c)| c / scale.powi(k as i32)).collect();
        let anchors = match self.anchor {
            AnchorMode::Fitted => self.sizes.iter().copied().zip(c[powers..].iter().copied()).collect(),
            AnchorMode::Interpolated => self.interpolated.clone(),
        };
        (poly, anchors)
    }
}

/// Fits `(nu, g)` at a fixed critical rate.
///
/// A profile scan over `nu` (exact least squares for `g` at each `nu`)
/// supplies the start point for the joint Nelder-Mead search.
pub fn fit_at(table: &EnsembleTable, p_c: f64, opts: &CollapseOptions) -> Result<CollapseFit> {
    if table.sizes().len() < 2 {
        return Err(Error::Fit("collapse needs at least two system sizes".into()));
    }
    let obj = Objective::new(table, p_c, opts)?;

    let (lo, hi) = (0.25f64.ln(), 6f64.ln());
    let (_, start) = (0..=40)
        .map(|k| (lo + k as f64 * (hi - lo) / 40.0).exp())
        .chain(std::iter::once(opts.nu_start))
        .map(|nu| obj.profile(nu))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("non-empty scan");

    let steps: Vec<f64> = std::iter::once(0.1)
        .chain(start[1..].iter().map(|c| (0.1 * c.abs()).max(1e-3)))
        .collect();
    let min = opts.optimizer.minimize(|v| obj.chi2(v), &start, &steps);

    let nu = min.x[0].exp();
    let (poly_coeffs, anchors) = obj.unpack(&min.x[1..], nu);
    Ok(CollapseFit {
        p_c,
        nu,
        poly_coeffs,
        x_range: obj.x_range(nu),
        anchors,
        chi2: min.value,
        dof: table.rows.len() as i64 - (obj.num_coeffs() as i64 + 1),
        converged: min.converged,
        bootstrap_std_nu: None,
        k_boot: 0,
        candidates: vec![(p_c, nu, min.value)],
    })
}

/// Candidate critical rates: the sampled `p` grid refined `refine`-fold,
/// excluding the two end points.
pub fn candidate_grid(table: &EnsembleTable, refine: usize) -> Vec<f64> {
    let p = table.p_values();
    let refine = refine.max(1);
    let mut out = Vec::new();
    for w in p.windows(2) {
        for k in 0..refine {
            out.push(w[0] + (w[1] - w[0]) * k as f64 / refine as f64);
        }
    }
    out.into_iter()
        .skip(1)
        .map(|x| (x * 1e10).round() / 1e10)
        .collect()
}

/// Scans `candidates` and returns the fit with minimal chi-squared.
pub fn fit_collapse(
    table: &EnsembleTable,
    candidates: &[f64],
    opts: &CollapseOptions,
) -> Result<CollapseFit> {
    table.validate()?;
    let sizes = table.sizes();
    if sizes.len() < 3 {
        return Err(Error::Fit(format!("collapse needs at least 3 sizes, got {}", sizes.len())));
    }
    let np = table.p_values().len();
    if np < 8 {
        return Err(Error::Fit(format!("collapse needs at least 8 p values, got {np}")));
    }
    if candidates.is_empty() {
        return Err(Error::Fit("no candidate critical points".into()));
    }
    let fits: Vec<CollapseFit> = candidates
        .par_iter()
        .map(|&p_c| fit_at(table, p_c, opts))
        .collect::<Result<_>>()?;
    let summary: Vec<(f64, f64, f64)> = fits.iter().map(|f| (f.p_c, f.nu, f.chi2)).collect();
    let mut best = fits
        .into_iter()
        .min_by(|a, b| a.chi2.total_cmp(&b.chi2))
        .expect("non-empty candidates");
    best.candidates = summary;
    Ok(best)
}

/// Bootstrap standard error of `nu` at fixed `p_c`.
///
/// Each of the `k_boot` replicas resamples the raw realizations of every cell
/// with replacement, recomputes the cell statistics and refits.
pub fn bootstrap_nu(
    table: &EnsembleTable,
    p_c: f64,
    k_boot: usize,
    seed: u64,
    opts: &CollapseOptions,
) -> Result<f64> {
    if !table.has_raw() {
        return Err(Error::Fit("bootstrap needs at least 2 raw samples per cell".into()));
    }
    if k_boot < 2 {
        return Err(Error::Fit("bootstrap needs k_boot >= 2".into()));
    }
    let nus: Vec<f64> = (0..k_boot)
        .into_par_iter()
        .map(|j| {
            let replica = resample_table(table, derive_seed(seed, &[j as u64]));
            fit_at(&replica, p_c, opts).map(|f| f.nu)
        })
        .collect::<Result<_>>()?;
    Ok(stats::sample_std(&nus))
}

pub(crate) fn resample_table(table: &EnsembleTable, seed: u64) -> EnsembleTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = table
        .rows
        .iter()
        .map(|row| {
            let raw = stats::resample(&row.raw, &mut rng);
            TableRow::from_samples(row.family, row.n, row.p, row.r, row.depth, raw)
        })
        .collect();
    EnsembleTable {
        kind: table.kind,
        rows,
        metadata: table.metadata.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scaling::ValueKind;
    use crate::sim::Family;

    fn row(n: usize, p: f64, mean: f64) -> TableRow {
        TableRow {
            family: Family::Hea,
            n,
            p,
            r: None,
            depth: 16,
            samples: 10,
            mean,
            std: 0.1,
            stderr: 0.01,
            raw: vec![],
        }
    }

    #[test]
    fn rescale_definitions() {
        let t = EnsembleTable::new(
            ValueKind::Entropy,
            vec![row(8, 0.2, 1.0), row(8, 0.3, 0.5), row(16, 0.2, 2.0), row(16, 0.3, 0.6)],
        );
        let pts = rescale(&t, 0.3, 1.5).unwrap();
        let at = |n, p: f64| pts.iter().find(|q| q.n == n && q.p == p).unwrap();
        assert_eq!(at(8, 0.3).x, 0.0);
        assert_eq!(at(8, 0.3).y, 0.0);
        let ratio = at(16, 0.2).x / at(8, 0.2).x;
        assert!((ratio - 2f64.powf(1.0 / 1.5)).abs() < 1e-12);
        // off-grid p_c interpolates
        let pts = rescale(&t, 0.25, 1.0).unwrap();
        assert!((pts[0].y - 0.25).abs() < 1e-12);
        assert!(rescale(&t, 0.35, 1.0).is_err());
        assert!(rescale(&t, 0.25, 0.0).is_err());
    }

    #[test]
    fn candidate_grid_refines_interior() {
        let rows = (0..4).map(|k| row(8, 0.1 * k as f64, 0.0)).collect();
        let t = EnsembleTable::new(ValueKind::Entropy, rows);
        let g = candidate_grid(&t, 4);
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 0.025);
        assert_eq!(*g.last().unwrap(), 0.275);
    }

    fn planted(noise: impl Fn(usize, usize) -> f64) -> EnsembleTable {
        let rows = [6usize, 8, 10, 12]
            .iter()
            .flat_map(|&n| (0..=12).map(move |k| (n, k)))
            .map(|(n, k)| {
                let p = 0.05 * k as f64;
                let x = (n as f64).powf(0.75) * (p - 0.3);
                row(n, p, 0.25 * (n as f64).ln() + 0.5 - 0.4 * x.tanh() + noise(n, k))
            })
            .collect();
        EnsembleTable::new(ValueKind::Entropy, rows)
    }

    #[test]
    fn both_anchor_modes_recover_exact_data() {
        let t = planted(|_, _| 0.0);
        for anchor in [AnchorMode::Fitted, AnchorMode::Interpolated] {
            let opts = CollapseOptions {
                anchor,
                ..Default::default()
            };
            let f = fit_collapse(&t, &candidate_grid(&t, 4), &opts).unwrap();
            assert_eq!(f.p_c, 0.3, "{anchor:?}");
            assert!((f.nu - 4.0 / 3.0).abs() < 0.05, "{anchor:?} {}", f.nu);
            assert_eq!(f.poly_coeffs.len(), 6);
            assert_eq!(f.anchors.len(), 4);
            let s6 = 0.25 * 6f64.ln() + 0.5;
            assert!((f.anchors[0].1 - s6).abs() < 1e-3);
        }
    }

    #[test]
    fn fitted_anchors_absorb_a_noisy_critical_cell() {
        // Only the cells at p = p_c are perturbed.
        let t = planted(|n, k| if k == 6 { 0.02 * if n % 4 == 0 { 1.0 } else { -1.0 } } else { 0.0 });
        let f = fit_at(&t, 0.3, &CollapseOptions::default()).unwrap();
        assert_eq!(f.poly_coeffs[0], 0.0);
        assert!((f.nu - 4.0 / 3.0).abs() < 0.05, "{}", f.nu);
        let shifted = fit_at(
            &t,
            0.3,
            &CollapseOptions {
                anchor: AnchorMode::Interpolated,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(shifted.chi2 > 10.0 * f.chi2);
        let pts = f.rescale(&t);
        assert!(pts.iter().filter(|q| q.p != 0.3).all(|q| (q.y - f.eval(q.x)).abs() < 0.05));
    }

    #[test]
    fn preconditions() {
        let rows = (0..10).map(|k| row(8, 0.1 * k as f64, 0.0)).collect();
        let t = EnsembleTable::new(ValueKind::Entropy, rows);
        assert!(fit_collapse(&t, &[0.3], &CollapseOptions::default()).is_err());
        assert!(bootstrap_nu(&t, 0.3, 10, 0, &CollapseOptions::default()).is_err());
    }
}
