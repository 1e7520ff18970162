use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Command, ResolvedConfig};
use crate::entropy::{half_chain_entropy, mutual_information};
use crate::error::{Error, Result};
use crate::gradient::{gradient_sample, GradientVarianceSetup};
use crate::scaling::{mutual_info_peak, EnsembleTable, TableRow, ValueKind};
use crate::sim::{derive_seed, run_trajectory_rng, trajectory_rng, uniform_params, Family};
use crate::stats;

/// Seed-stream tags, one per command, so the ensembles are independent.
const TAG_SWEEP: u64 = 0x5357;
const TAG_MUTINFO: u64 = 0x4d49;
const TAG_GRADVAR: u64 = 0x4756;

/// Below this many samples a gradient-variance cell is flagged.
pub const LOW_CONFIDENCE_SAMPLES: usize = 30;

/// Per-layer entropy statistics of one `(N, p)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub family: Family,
    pub n: usize,
    pub p: f64,
    pub layer: usize,
    pub mean: f64,
    pub std: f64,
    pub stderr: f64,
}

/// Located mutual-information maximum of one `(N, r)` curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakRow {
    pub n: usize,
    /// `None` for the curve averaged over every separation, per realization.
    pub r: Option<usize>,
    pub p: f64,
    pub value: f64,
    pub low_confidence: bool,
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub table: EnsembleTable,
    /// Filled by `sweep` with `per_layer = true`.
    pub per_layer: Vec<LayerRow>,
    /// Filled by `mutinfo`.
    pub peaks: Vec<PeakRow>,
}

/// Samples of one `(N, p)` cell, stored bit-exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Cell {
    config_hash: String,
    n: usize,
    p_bits: u64,
    /// One series of per-realization values per output row; mutinfo has one
    /// per separation `r`.
    series: Vec<Vec<u64>>,
    /// `[mean, std, stderr]` per layer.
    per_layer: Vec<[u64; 3]>,
}

fn bits(xs: &[f64]) -> Vec<u64> {
    xs.iter().map(|x| x.to_bits()).collect()
}

fn unbits(xs: &[u64]) -> Vec<f64> {
    xs.iter().map(|&x| f64::from_bits(x)).collect()
}

fn cell_id(n: usize, p: f64) -> String {
    format!("N{n}_p{p}")
}

fn circuit_params(rc: &ResolvedConfig, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let count = rc.config.family.num_params(n, rc.config.depth);
    if rc.config.zero_params {
        vec![0.0; count]
    } else {
        uniform_params(count, rng)
    }
}

fn entropy_sample(rc: &ResolvedConfig, n: usize, p: f64, seed: u64) -> Result<(f64, Vec<f64>)> {
    let c = &rc.config;
    let mut rng = trajectory_rng(seed);
    let params = circuit_params(rc, n, &mut rng);
    let circuit = c.family.build(n, c.depth, &params, rc.circuit_options())?;
    let traj = run_trajectory_rng(&circuit, p, &mut rng, seed, c.per_layer)?;
    let unit = c.entropy_unit;
    let layers = traj
        .per_layer_entropy
        .unwrap_or_default()
        .into_iter()
        .map(|s| unit.convert(s))
        .collect();
    Ok((unit.convert(half_chain_entropy(&traj.final_state)?), layers))
}

fn mutinfo_sample(rc: &ResolvedConfig, n: usize, p: f64, seed: u64) -> Result<Vec<f64>> {
    let c = &rc.config;
    let mut rng = trajectory_rng(seed);
    let params = circuit_params(rc, n, &mut rng);
    let circuit = c.family.build(n, c.depth, &params, rc.circuit_options())?;
    let traj = run_trajectory_rng(&circuit, p, &mut rng, seed, false)?;
    rc.r_values()
        .iter()
        .map(|&r| Ok(c.entropy_unit.convert(mutual_information(&traj.final_state, 0, r)?)))
        .collect()
}

fn gradvar_setup(rc: &ResolvedConfig, n: usize, p: f64) -> GradientVarianceSetup {
    let c = &rc.config;
    GradientVarianceSetup {
        num_samples: rc.samples(),
        base_seed: c.seed,
        observable: rc.observable.clone(),
        param_index: c.param_index,
        options: rc.circuit_options(),
        bootstrap_resamples: c.k_boot,
        estimator: c.gradient_estimator,
        ..GradientVarianceSetup::new(c.family, n, c.depth, p)
    }
}

fn compute_cell(rc: &ResolvedConfig, hash: &str, n: usize, p: f64) -> Result<Cell> {
    let c = &rc.config;
    let tag = match rc.command {
        Command::Sweep => TAG_SWEEP,
        Command::Mutinfo => TAG_MUTINFO,
        Command::Gradvar => TAG_GRADVAR,
    };
    let seed_of = |k: usize| derive_seed(c.seed, &[tag, n as u64, p.to_bits(), k as u64]);
    let samples = 0..rc.samples();
    let mut cell = Cell {
        config_hash: hash.to_string(),
        n,
        p_bits: p.to_bits(),
        series: Vec::new(),
        per_layer: Vec::new(),
    };
    match rc.command {
        Command::Sweep => {
            let out: Vec<(f64, Vec<f64>)> = samples
                .into_par_iter()
                .map(|k| entropy_sample(rc, n, p, seed_of(k)))
                .collect::<Result<_>>()?;
            let finals: Vec<f64> = out.iter().map(|o| o.0).collect();
            cell.series.push(bits(&finals));
            if c.per_layer {
                cell.per_layer = (0..c.depth)
                    .map(|l| {
                        let xs: Vec<f64> = out.iter().map(|o| o.1[l]).collect();
                        [stats::mean(&xs), stats::sample_std(&xs), stats::standard_error(&xs)]
                            .map(f64::to_bits)
                    })
                    .collect();
            }
        }
        Command::Mutinfo => {
            let out: Vec<Vec<f64>> = samples
                .into_par_iter()
                .map(|k| mutinfo_sample(rc, n, p, seed_of(k)))
                .collect::<Result<_>>()?;
            for j in 0..rc.r_values().len() {
                let xs: Vec<f64> = out.iter().map(|o| o[j]).collect();
                cell.series.push(bits(&xs));
            }
        }
        Command::Gradvar => {
            let setup = gradvar_setup(rc, n, p);
            let grads: Vec<f64> = samples
                .into_par_iter()
                .map(|k| gradient_sample(&setup, seed_of(k)))
                .collect::<Result<_>>()?;
            cell.series.push(bits(&grads));
        }
    }
    Ok(cell)
}

/// The `(N, p)` cells of a run in execution order.
pub fn cells(rc: &ResolvedConfig) -> Vec<(usize, f64)> {
    rc.sizes()
        .iter()
        .flat_map(|&n| rc.p_values().iter().map(move |&p| (n, p)))
        .collect()
}

fn assemble(rc: &ResolvedConfig, hash: &str, cells: &[Cell]) -> Result<RunOutput> {
    let c = &rc.config;
    let kind = match rc.command {
        Command::Sweep => ValueKind::Entropy,
        Command::Mutinfo => ValueKind::MutualInfo,
        Command::Gradvar => ValueKind::GradVariance,
    };
    let mut rows = Vec::new();
    let mut per_layer = Vec::new();
    let mut r_averaged = Vec::new();
    for cell in cells {
        let p = f64::from_bits(cell.p_bits);
        match rc.command {
            Command::Sweep => {
                rows.push(TableRow::from_samples(c.family, cell.n, p, None, c.depth, unbits(&cell.series[0])));
                for (layer, s) in cell.per_layer.iter().enumerate() {
                    let [mean, std, stderr] = s.map(f64::from_bits);
                    per_layer.push(LayerRow {
                        family: c.family,
                        n: cell.n,
                        p,
                        layer,
                        mean,
                        std,
                        stderr,
                    });
                }
            }
            Command::Mutinfo => {
                for (&r, s) in rc.r_values().iter().zip(&cell.series) {
                    rows.push(TableRow::from_samples(c.family, cell.n, p, Some(r), c.depth, unbits(s)));
                }
                let k = cell.series.len() as f64;
                let avg = (0..cell.series[0].len())
                    .map(|j| cell.series.iter().map(|s| f64::from_bits(s[j])).sum::<f64>() / k)
                    .collect();
                r_averaged.push(TableRow::from_samples(c.family, cell.n, p, None, c.depth, avg));
            }
            Command::Gradvar => {
                let grads = unbits(&cell.series[0]);
                let seed = derive_seed(c.seed, &[TAG_GRADVAR, cell.n as u64, cell.p_bits, u64::MAX]);
                let stderr = stats::bootstrap_std(&grads, c.k_boot, seed, stats::sample_variance);
                rows.push(TableRow {
                    family: c.family,
                    n: cell.n,
                    p,
                    r: None,
                    depth: c.depth,
                    samples: grads.len(),
                    mean: stats::sample_variance(&grads),
                    std: stderr * (grads.len() as f64).sqrt(),
                    stderr,
                    raw: grads,
                });
            }
        }
    }
    let mut table = EnsembleTable::new(kind, rows);
    let meta = &mut table.metadata;
    meta.insert("command".into(), rc.command.name().into());
    meta.insert("config_hash".into(), hash.into());
    meta.insert("seed".into(), c.seed.to_string());
    meta.insert("family".into(), c.family.name().into());
    meta.insert("tool_version".into(), env!("CARGO_PKG_VERSION").into());
    match rc.command {
        Command::Gradvar => {
            meta.insert("observable".into(), rc.observable.to_string());
            meta.insert("param_index".into(), c.param_index.to_string());
            let estimator = match c.gradient_estimator {
                crate::gradient::GradientEstimator::BornWeighted => "born_weighted",
                crate::gradient::GradientEstimator::Branch => "branch",
            };
            meta.insert("estimator".into(), estimator.into());
            meta.insert("k_boot".into(), c.k_boot.to_string());
            if rc.samples() < LOW_CONFIDENCE_SAMPLES {
                log::warn!(
                    "R = {} < {LOW_CONFIDENCE_SAMPLES}: variances are low confidence",
                    rc.samples()
                );
                meta.insert("low_confidence".into(), "true".into());
            }
        }
        _ => {
            let unit = match c.entropy_unit {
                crate::entropy::EntropyUnit::Nats => "nats",
                crate::entropy::EntropyUnit::Bits => "bits",
            };
            meta.insert("unit".into(), unit.into());
        }
    }

    let mut peaks = Vec::new();
    if rc.command == Command::Mutinfo {
        for &n in rc.sizes() {
            let averaged: Vec<TableRow> = r_averaged.iter().filter(|row| row.n == n).cloned().collect();
            let curves = rc
                .r_values()
                .iter()
                .map(|&r| (Some(r), table.curve(n, Some(r)).into_iter().cloned().collect()))
                .chain(std::iter::once((None, averaged)));
            for (r, curve) in curves {
                match mutual_info_peak(&curve) {
                    Ok(peak) => peaks.push(PeakRow {
                        n,
                        r,
                        p: peak.p,
                        value: peak.value,
                        low_confidence: peak.low_confidence,
                    }),
                    Err(e) => log::warn!("no peak for N = {n}, r = {r:?}: {e}"),
                }
            }
        }
    }
    Ok(RunOutput {
        table,
        per_layer,
        peaks,
    })
}

/// Runs a whole ensemble in memory without touching the filesystem.
pub fn simulate(rc: &ResolvedConfig) -> Result<RunOutput> {
    let hash = rc.hash();
    let computed = cells(rc)
        .into_iter()
        .map(|(n, p)| compute_cell(rc, &hash, n, p))
        .collect::<Result<Vec<_>>>()?;
    assemble(rc, &hash, &computed)
}

/// Where and how a persisted run writes.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Reuse completed cells of an earlier run with the same config hash.
    pub resume: bool,
    /// Stop after computing this many new cells (simulates an interruption).
    pub stop_after: Option<usize>,
}

#[derive(Clone, Debug)]
pub enum RunOutcome {
    Complete(Box<RunOutput>),
    Interrupted { completed: usize, total: usize },
}

/// Deterministic record of a run's provenance and progress.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config_hash: String,
    /// Canonical TOML of the resolved configuration.
    pub config: String,
    pub total_cells: usize,
    /// Completed cell ids, in execution order.
    pub completed: Vec<String>,
    pub complete: bool,
    pub outputs: Vec<String>,
    pub assumptions: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

const ASSUMPTIONS: &[&str] = &[
    "rotation convention U(theta) = exp(-i theta/2 A); parameters uniform on [0, 2 pi)",
    "measurements after every layer, qubits visited in ascending order, each with probability p",
    "half-chain cut is qubits 0..N/2-1; mutual information between qubits 0 and r",
    "gradient variance: mean column is the sample variance, stderr its bootstrap error, std = stderr * sqrt(R)",
    "projective shift rule uses the derived sign: 1/2[(<O>+ - <O>) p+/p - (<O>- - <O>) p-/p]",
    "every realization draws fresh circuit parameters, measurement sites and outcomes",
    "gradient estimator born_weighted: 1/2 (<O>+ p+ - <O>- p-) / p on one Born-sampled branch",
];

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_cell(path: &Path, hash: &str) -> Option<Cell> {
    let text = std::fs::read_to_string(path).ok()?;
    let cell: Cell = serde_json::from_str(&text).ok()?;
    (cell.config_hash == hash).then_some(cell)
}

fn layer_csv(rows: &[LayerRow]) -> String {
    let mut out = String::from("family,N,p,layer,mean,std,stderr\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{},{},{}", r.family, r.n, r.p, r.layer, r.mean, r.std, r.stderr);
    }
    out
}

fn peaks_csv(rows: &[PeakRow]) -> String {
    // `r = mean` is the curve averaged over all separations.
    let mut out = String::from("N,r,p_peak,value,low_confidence\n");
    for r in rows {
        let sep = r.r.map_or("mean".to_string(), |r| r.to_string());
        let _ = writeln!(out, "{},{},{},{},{}", r.n, sep, r.p, r.value, r.low_confidence);
    }
    out
}

/// Runs an ensemble, persisting each finished cell under `out/cells/` so an
/// interrupted run can be resumed.
///
/// Outputs are `table.csv`, plus `raw.csv`, `per_layer.csv` and `peaks.csv`
/// when applicable, `manifest.json` and `timing.json`. Every file except
/// `timing.json` is a deterministic function of the configuration.
pub fn run(rc: &ResolvedConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let started = Instant::now();
    let hash = rc.hash();
    let cell_dir = opts.out.join("cells");
    let manifest_path = opts.out.join(MANIFEST_FILE);
    std::fs::create_dir_all(&cell_dir).map_err(|e| Error::io(&cell_dir, e))?;

    if opts.resume && manifest_path.exists() {
        let found = read_manifest(&manifest_path)?;
        if found.config_hash != hash {
            return Err(Error::ResumeMismatch {
                path: manifest_path,
                expected: hash,
                found: found.config_hash,
            });
        }
    } else {
        for entry in std::fs::read_dir(&cell_dir).map_err(|e| Error::io(&cell_dir, e))? {
            let path = entry.map_err(|e| Error::io(&cell_dir, e))?.path();
            std::fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }

    let plan = cells(rc);
    let mut manifest = Manifest {
        tool: "mipt".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: rc.command,
        config_hash: hash.clone(),
        config: rc.config.to_toml(),
        total_cells: plan.len(),
        completed: Vec::new(),
        complete: false,
        outputs: Vec::new(),
        assumptions: ASSUMPTIONS.iter().map(|s| s.to_string()).collect(),
    };
    let mut done = Vec::with_capacity(plan.len());
    let mut computed = 0;
    for &(n, p) in &plan {
        let id = cell_id(n, p);
        let path = cell_dir.join(format!("{id}.json"));
        let cell = match opts.resume.then(|| load_cell(&path, &hash)).flatten() {
            Some(cell) => {
                log::debug!("reusing cell {id}");
                cell
            }
            None => {
                if opts.stop_after.is_some_and(|k| computed >= k) {
                    write_file(&manifest_path, &to_json(&manifest))?;
                    return Ok(RunOutcome::Interrupted {
                        completed: done.len(),
                        total: plan.len(),
                    });
                }
                log::info!("{} cell {id}", rc.command.name());
                let cell = compute_cell(rc, &hash, n, p)?;
                write_file(&path, &serde_json::to_string(&cell).expect("cell serializes"))?;
                computed += 1;
                cell
            }
        };
        done.push(cell);
        manifest.completed.push(id);
        write_file(&manifest_path, &to_json(&manifest))?;
    }

    let output = assemble(rc, &hash, &done)?;
    let mut outputs = vec![("table.csv", output.table.to_csv())];
    if rc.config.raw {
        outputs.push(("raw.csv", output.table.raw_to_csv()));
    }
    if !output.per_layer.is_empty() {
        outputs.push(("per_layer.csv", layer_csv(&output.per_layer)));
    }
    if rc.command == Command::Mutinfo {
        outputs.push(("peaks.csv", peaks_csv(&output.peaks)));
    }
    for (name, text) in &outputs {
        write_file(&opts.out.join(name), text)?;
    }
    manifest.outputs = outputs.iter().map(|(n, _)| n.to_string()).collect();
    manifest.complete = true;
    write_file(&manifest_path, &to_json(&manifest))?;
    let timing = serde_json::json!({
        "wall_seconds": started.elapsed().as_secs_f64(),
        "cells_computed": computed,
        "threads": rayon::current_num_threads(),
    });
    write_file(&opts.out.join("timing.json"), &to_json(&timing))?;
    Ok(RunOutcome::Complete(Box::new(output)))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}
