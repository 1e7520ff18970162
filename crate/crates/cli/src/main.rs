use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info, warn};

use mipt::experiment::{
    self, collapse, gradcheck, read_table_with_raw, write_collapse, Command as RunCommand,
    CollapseReport, CollapseRequest, ExperimentConfig, GradcheckOptions, RunOptions, RunOutcome,
};
use mipt::gradient::SignConvention;
use mipt::scaling::{CollapseOptions, GradVarOptions, ValueKind};
use mipt::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_FIT: u8 = 3;
const EXIT_ORACLE: u8 = 4;

/// Monitored variational circuit experiments.
#[derive(Parser, Debug)]
#[command(name = "mipt", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Debug)]
struct Global {
    /// Flat TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; overrides the config.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Continue an interrupted run with the same configuration.
    #[arg(long, global = true)]
    resume: bool,
    /// Full-scale sizes and sample counts.
    #[arg(long, global = true)]
    paper_scale: bool,
    /// Persist per-realization values.
    #[arg(long, global = true)]
    raw: bool,
    /// Stop after computing this many cells, as if interrupted.
    #[arg(long, global = true, hide = true)]
    stop_after: Option<usize>,
    /// Increase log verbosity.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Half-chain entropy over sizes and measurement rates.
    Sweep {
        /// Also record the entropy after every layer.
        #[arg(long)]
        per_layer: bool,
    },
    /// Two-site mutual information I(0, r) over measurement rates.
    Mutinfo,
    /// Variance of the projective gradient over sizes and measurement rates.
    Gradvar,
    /// Finite-size-scaling fit of a table written by another subcommand.
    Collapse {
        /// `table.csv`; a `raw.csv` next to it is picked up automatically.
        table: PathBuf,
        /// Expected table kind; inferred from the file when omitted.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Critical rate for a gradient-variance collapse; overrides the config.
        #[arg(long)]
        p_c: Option<f64>,
    },
    /// Randomized oracle checks of the projective gradient rules.
    Gradcheck {
        /// Number of random instances; overrides the config.
        #[arg(long)]
        instances: Option<usize>,
        /// Use the printed sign of the shift rule; the suite must fail.
        #[arg(long, hide = true)]
        corrupt_sign: bool,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Entropy,
    Gradvar,
    Mutinfo,
}

impl Mode {
    fn kind(self) -> ValueKind {
        match self {
            Mode::Entropy => ValueKind::Entropy,
            Mode::Gradvar => ValueKind::GradVariance,
            Mode::Mutinfo => ValueKind::MutualInfo,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Table(_) | Error::ResumeMismatch { .. } => EXIT_CONFIG,
        Error::Fit(_) => EXIT_FIT,
        _ => EXIT_FAILURE,
    }
}

fn load_config(g: &Global) -> Result<ExperimentConfig, Error> {
    let mut config = match &g.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if g.raw {
        config.raw = true;
    }
    Ok(config)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Error> {
    std::fs::create_dir_all(path.parent().unwrap_or(Path::new(".")))
        .and_then(|_| std::fs::write(path, serde_json::to_string_pretty(value).expect("serializable") + "\n"))
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
}

fn run_ensemble(g: &Global, command: RunCommand, per_layer: bool) -> Result<u8, Error> {
    let mut config = load_config(g)?;
    config.per_layer |= per_layer;
    let rc = config.resolve(command, g.paper_scale)?;
    info!(
        "{} {}: N = {:?}, {} p values, R = {}, hash {}",
        command.name(),
        rc.config.family,
        rc.sizes(),
        rc.p_values().len(),
        rc.samples(),
        rc.hash()
    );
    let opts = RunOptions {
        out: g.out.clone(),
        resume: g.resume,
        stop_after: g.stop_after,
    };
    match experiment::run(&rc, &opts)? {
        RunOutcome::Complete(output) => {
            println!("wrote {} rows to {}", output.table.rows.len(), g.out.join("table.csv").display());
            for peak in &output.peaks {
                println!(
                    "N={} r={} peak p={} I={:.4}{}",
                    peak.n,
                    peak.r.map_or("mean".into(), |r| r.to_string()),
                    peak.p,
                    peak.value,
                    if peak.low_confidence { " (low confidence)" } else { "" }
                );
            }
        }
        RunOutcome::Interrupted { completed, total } => {
            println!("stopped after {completed} of {total} cells; rerun with --resume");
        }
    }
    Ok(0)
}

fn run_collapse(g: &Global, table_path: &Path, mode: Option<Mode>, p_c: Option<f64>) -> Result<u8, Error> {
    let config = load_config(g)?;
    let table = read_table_with_raw(table_path)?;
    if let Some(mode) = mode {
        if mode.kind() != table.kind {
            return Err(Error::Table(format!(
                "{} holds {} values, not {}",
                table_path.display(),
                table.kind.name(),
                mode.kind().name()
            )));
        }
    }
    let req = CollapseRequest {
        collapse: CollapseOptions {
            chi2: config.chi2,
            error: config.error_scale,
            anchor: config.anchor,
            ..CollapseOptions::default()
        },
        gradvar: GradVarOptions {
            plateau: config.plateau,
            ..GradVarOptions::default()
        },
        k_boot: config.k_boot,
        seed: config.seed,
        p_c: p_c.or(config.p_c),
    };
    let report = collapse(&table, &req)?;
    write_collapse(&g.out, &table, &report)?;
    match &report {
        CollapseReport::Entropy(r) => {
            println!(
                "p_c = {} nu = {:.4} +- {} chi2 = {:.4} dof = {}",
                r.fit.p_c,
                r.fit.nu,
                r.fit.bootstrap_std_nu.map_or("n/a".into(), |s| format!("{s:.4}")),
                r.fit.chi2,
                r.fit.dof
            );
            if let Some(e) = &r.extrapolation {
                println!("nu(N -> inf) = {:.4}", e.b);
            }
        }
        CollapseReport::GradVariance(f) => {
            println!("p_c = {} nu = {:.4} A = {:.4e} chi2 = {:.4}", f.p_c, f.nu, f.amplitude, f.chi2);
        }
        CollapseReport::MutualInfo { peaks } => {
            for (n, r, peak) in peaks {
                println!("N={n} r={r} peak p={}", peak.p);
            }
        }
    }
    if report.converged() {
        Ok(0)
    } else {
        error!("fit did not converge; report written to {}", g.out.display());
        Ok(EXIT_FIT)
    }
}

fn run_gradcheck(g: &Global, instances: Option<usize>, corrupt_sign: bool) -> Result<u8, Error> {
    let config = load_config(g)?;
    let opts = GradcheckOptions {
        instances: instances.unwrap_or(config.gradcheck_instances),
        seed: config.seed,
        sign: if corrupt_sign {
            SignConvention::Printed
        } else {
            SignConvention::Derived
        },
        ..GradcheckOptions::default()
    };
    let report = gradcheck(&opts)?;
    write_json(&g.out.join("gradcheck.json"), &report)?;
    let max = |f: fn(&experiment::gradcheck::InstanceCheck) -> f64| {
        report.instances.iter().map(f).fold(0.0, f64::max)
    };
    println!(
        "{} instances; max deviation: branch vs fd {:.2e}, ensemble vs fd {:.2e}, dense branch {:.2e}, shift rule {:.2e}",
        report.instances.len(),
        max(|c| c.branch_fd.error()),
        max(|c| c.ensemble_fd.error()),
        max(|c| c.dense_branch.value),
        max(|c| c.shift_rule.map_or(0.0, |d| d.error())),
    );
    if report.passed() {
        println!("PASS");
        Ok(0)
    } else {
        for seed in &report.failures {
            eprintln!("failing instance seed {seed}");
        }
        println!("FAIL: {} instances out of tolerance", report.failures.len());
        Ok(EXIT_ORACLE)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(threads) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            warn!("could not size the thread pool: {e}");
        }
    }
    let g = &cli.global;
    let result = match &cli.command {
        Cmd::Sweep { per_layer } => run_ensemble(g, RunCommand::Sweep, *per_layer),
        Cmd::Mutinfo => run_ensemble(g, RunCommand::Mutinfo, false),
        Cmd::Gradvar => run_ensemble(g, RunCommand::Gradvar, false),
        Cmd::Collapse { table, mode, p_c } => run_collapse(g, table, *mode, *p_c),
        Cmd::Gradcheck {
            instances,
            corrupt_sign,
        } => run_gradcheck(g, *instances, *corrupt_sign),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
