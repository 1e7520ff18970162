use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scaling::{
    bootstrap_nu, candidate_grid, extrapolate_nu, fit_collapse, fit_gradvar_collapse,
    mutual_info_peak, nu_vs_size, CollapseFit, CollapseOptions, EnsembleTable,
    ExtrapolationFit, GradVarCollapseFit, GradVarOptions, MutualInfoPeak, SizePoint, TableRow,
    ValueKind,
};

/// Result of collapsing an entropy table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyCollapseReport {
    pub fit: CollapseFit,
    /// `nu` refitted at the fitted `p_c` on growing size windows.
    pub nu_vs_size: Vec<SizePoint>,
    pub extrapolation: Option<ExtrapolationFit>,
    /// `|nu_inf - nu|`, the finite-size drift of the exponent.
    pub extrapolation_gap: Option<f64>,
}

/// Fits `(p_c, nu)`, then attaches the bootstrap error of `nu` and the
/// `1/N` extrapolation when raw samples are available.
pub fn collapse_entropy(
    table: &EnsembleTable,
    opts: &CollapseOptions,
    k_boot: usize,
    seed: u64,
) -> Result<EntropyCollapseReport> {
    if table.kind != ValueKind::Entropy {
        return Err(Error::Table(format!("expected an entropy table, got {}", table.kind.name())));
    }
    let mut fit = fit_collapse(table, &candidate_grid(table, opts.refine), opts)?;
    let k_boot = if table.has_raw() { k_boot } else { 0 };
    if k_boot >= 2 {
        fit.bootstrap_std_nu = Some(bootstrap_nu(table, fit.p_c, k_boot, seed, opts)?);
        fit.k_boot = k_boot;
    } else {
        log::warn!("no raw samples: skipping the bootstrap of nu");
    }
    let points = nu_vs_size(table, fit.p_c, k_boot, seed, opts)?;
    let extrapolation = if points.len() >= 2 {
        Some(extrapolate_nu(&points)?)
    } else {
        None
    };
    Ok(EntropyCollapseReport {
        extrapolation_gap: extrapolation.as_ref().map(|e| (e.b - fit.nu).abs()),
        nu_vs_size: points,
        extrapolation,
        fit,
    })
}

/// Peak of every `(N, r)` curve in a mutual-information table.
pub fn mutual_info_peaks(table: &EnsembleTable) -> Result<Vec<(usize, usize, MutualInfoPeak)>> {
    if table.kind != ValueKind::MutualInfo {
        return Err(Error::Table(format!("expected a mutual_info table, got {}", table.kind.name())));
    }
    let mut keys: Vec<(usize, usize)> = table.rows.iter().filter_map(|r| Some((r.n, r.r?))).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|(n, r)| {
            let curve: Vec<TableRow> = table.curve(n, Some(r)).into_iter().cloned().collect();
            Ok((n, r, mutual_info_peak(&curve)?))
        })
        .collect()
}

/// Output of the `collapse` command, by table kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CollapseReport {
    Entropy(EntropyCollapseReport),
    GradVariance(GradVarCollapseFit),
    MutualInfo { peaks: Vec<(usize, usize, MutualInfoPeak)> },
}

impl CollapseReport {
    pub fn converged(&self) -> bool {
        match self {
            CollapseReport::Entropy(r) => r.fit.converged,
            CollapseReport::GradVariance(f) => f.converged,
            CollapseReport::MutualInfo { .. } => true,
        }
    }
}

/// Settings of the `collapse` command.
#[derive(Clone, Debug, Default)]
pub struct CollapseRequest {
    pub collapse: CollapseOptions,
    pub gradvar: GradVarOptions,
    pub k_boot: usize,
    pub seed: u64,
    /// Required for gradient-variance tables.
    pub p_c: Option<f64>,
}

/// Dispatches on the table kind.
pub fn collapse(table: &EnsembleTable, req: &CollapseRequest) -> Result<CollapseReport> {
    match table.kind {
        ValueKind::Entropy => collapse_entropy(table, &req.collapse, req.k_boot, req.seed).map(CollapseReport::Entropy),
        ValueKind::GradVariance => {
            let p_c = req
                .p_c
                .ok_or_else(|| Error::Config("a gradient-variance collapse needs p_c".into()))?;
            fit_gradvar_collapse(table, p_c, &req.gradvar).map(CollapseReport::GradVariance)
        }
        ValueKind::MutualInfo => Ok(CollapseReport::MutualInfo {
            peaks: mutual_info_peaks(table)?,
        }),
    }
}

/// Reads `table.csv` and, when present next to it, `raw.csv`.
pub fn read_table_with_raw(path: &Path) -> Result<EnsembleTable> {
    let mut table = EnsembleTable::read(path)?;
    let raw = path.with_file_name("raw.csv");
    if raw.exists() {
        let text = std::fs::read_to_string(&raw).map_err(|e| Error::io(&raw, e))?;
        table.attach_raw_csv(&text)?;
    }
    Ok(table)
}

/// Writes `report.json` and, for entropy tables, `rescaled.csv` with the
/// collapsed points and the fitted scaling function.
pub fn write_collapse(out: &Path, table: &EnsembleTable, report: &CollapseReport) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let json = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    let path = out.join("report.json");
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    if let CollapseReport::Entropy(r) = report {
        let mut csv = String::from("N,p,x,y,sigma,g\n");
        for pt in r.fit.rescale(table) {
            let _ = writeln!(csv, "{},{},{},{},{},{}", pt.n, pt.p, pt.x, pt.y, pt.sigma, r.fit.eval(pt.x));
        }
        let path = out.join("rescaled.csv");
        std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
