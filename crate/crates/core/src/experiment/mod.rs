//! Reproducible ensemble runs.
//!
//! An [`ExperimentConfig`] is resolved for one [`Command`] into a
//! [`ResolvedConfig`], whose hash identifies the run. [`run`] evaluates the
//! `(N, p)` cells one at a time, persisting each so that `--resume` can pick
//! up after an interruption; [`simulate`] does the same in memory.
//!
//! Every realization draws from a generator seeded by
//! `derive_seed(seed, [command, N, p, sample])`, so outputs are bit-identical
//! for any thread count.

mod config;
pub mod gradcheck;
mod report;
mod runner;

pub use config::{Command, ExperimentConfig, ResolvedConfig};
pub use gradcheck::{gradcheck, GradcheckOptions, GradcheckReport};
pub use report::{
    collapse, collapse_entropy, mutual_info_peaks, read_table_with_raw, write_collapse,
    CollapseReport, CollapseRequest, EntropyCollapseReport,
};
pub use runner::{
    cells, run, simulate, LayerRow, Manifest, PeakRow, RunOptions, RunOutcome, RunOutput,
    LOW_CONFIDENCE_SAMPLES, MANIFEST_FILE,
};
