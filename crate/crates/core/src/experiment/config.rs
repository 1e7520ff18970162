use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::entropy::EntropyUnit;
use crate::error::{Error, Result};
use crate::gradient::GradientEstimator;
use crate::observable::Observable;
use crate::scaling::{AnchorMode, Chi2Convention, ErrorScale, PlateauMode};
use crate::sim::{CircuitOptions, Family};

/// Which ensemble quantity a run produces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Sweep,
    Mutinfo,
    Gradvar,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Sweep => "sweep",
            Command::Mutinfo => "mutinfo",
            Command::Gradvar => "gradvar",
        }
    }

    fn default_sizes(self, paper_scale: bool) -> Vec<usize> {
        match (self, paper_scale) {
            (Command::Sweep, false) => vec![6, 8, 10, 12],
            (Command::Sweep, true) => (6..=18).step_by(2).collect(),
            (Command::Mutinfo, false) => vec![12],
            (Command::Mutinfo, true) => vec![16],
            (Command::Gradvar, false) => vec![6, 8, 10],
            (Command::Gradvar, true) => (8..=18).step_by(2).collect(),
        }
    }

    fn default_samples(self, paper_scale: bool) -> usize {
        match (self, paper_scale) {
            (_, false) => 500,
            (Command::Gradvar, true) => 1000,
            (_, true) => 3000,
        }
    }
}

/// Run configuration, read from a flat TOML file.
///
/// Unset optional keys take command-dependent defaults in
/// [`ExperimentConfig::resolve`]. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: Family,
    /// System sizes; every entry must be even.
    pub sizes: Option<Vec<usize>>,
    pub depth: usize,
    /// Explicit measurement rates. Overrides `p_min`/`p_max`/`p_step`.
    pub p_values: Option<Vec<f64>>,
    pub p_min: f64,
    pub p_max: f64,
    pub p_step: f64,
    /// Realizations per `(N, p)` cell.
    pub samples: Option<usize>,
    /// Base seed in `0..=i64::MAX` (TOML integers are signed).
    pub seed: u64,
    /// Observable for `gradvar`, e.g. `"Z0Z1"` or `"0.5*X0 + Z1"`.
    pub observable: String,
    /// Differentiated parameter slot for `gradvar`.
    pub param_index: usize,
    pub gradient_estimator: GradientEstimator,
    /// Separations for `mutinfo`; defaults to `1..=N/2`.
    pub r_values: Option<Vec<usize>>,
    pub hea_cnot_wrap: bool,
    /// Set every rotation angle to zero instead of sampling (`sweep`, `mutinfo`).
    pub zero_params: bool,
    pub entropy_unit: EntropyUnit,
    /// Also record entropy after every layer (`sweep`).
    pub per_layer: bool,
    /// Persist per-realization values.
    pub raw: bool,
    pub chi2: Chi2Convention,
    pub error_scale: ErrorScale,
    /// Origin of the collapse ordinate: `fitted` per-size offsets or `interpolated` data.
    pub anchor: AnchorMode,
    pub plateau: PlateauMode,
    /// Bootstrap replicas for `collapse` and `gradvar` error bars.
    pub k_boot: usize,
    /// Critical rate for a gradient-variance collapse.
    pub p_c: Option<f64>,
    pub gradcheck_instances: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            family: Family::XxzHva,
            sizes: None,
            depth: 16,
            p_values: None,
            p_min: 0.0,
            p_max: 0.8,
            p_step: 0.05,
            samples: None,
            seed: 0,
            observable: "Z0Z1".into(),
            param_index: 0,
            gradient_estimator: GradientEstimator::BornWeighted,
            r_values: None,
            hea_cnot_wrap: true,
            zero_params: false,
            entropy_unit: EntropyUnit::Nats,
            per_layer: false,
            raw: false,
            chi2: Chi2Convention::Squared,
            error_scale: ErrorScale::StdError,
            anchor: AnchorMode::Fitted,
            plateau: PlateauMode::PerSize,
            k_boot: 100,
            p_c: None,
            gradcheck_instances: 100,
        }
    }
}

/// Rounds away binary noise from grid arithmetic (`0.1 * 3 = 0.30000000000000004`).
fn tidy(x: f64) -> f64 {
    (x * 1e10).round() / 1e10
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// An unreadable file is a configuration error, not an IO failure.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// The measurement-rate grid.
    pub fn p_grid(&self) -> Result<Vec<f64>> {
        let grid = match &self.p_values {
            Some(p) => p.clone(),
            None => {
                if !(self.p_step > 0.0) || self.p_max < self.p_min {
                    return Err(Error::Config(format!(
                        "invalid p range {}..{} step {}",
                        self.p_min, self.p_max, self.p_step
                    )));
                }
                let steps = ((self.p_max - self.p_min) / self.p_step + 1e-9).floor() as usize;
                (0..=steps).map(|k| tidy(self.p_min + k as f64 * self.p_step)).collect()
            }
        };
        if grid.is_empty() {
            return Err(Error::Config("empty p grid".into()));
        }
        if let Some(p) = grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Config(format!("measurement rate {p} outside [0, 1]")));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("p grid must be strictly increasing".into()));
        }
        Ok(grid)
    }

    /// Fills every command-dependent default and checks the result.
    ///
    /// `paper_scale` replaces the desk-scale sizes and sample counts by the
    /// full-scale ones.
    pub fn resolve(&self, command: Command, paper_scale: bool) -> Result<ResolvedConfig> {
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config(format!("seed {} exceeds {}", self.seed, i64::MAX)));
        }
        let mut c = self.clone();
        if paper_scale || c.sizes.is_none() {
            c.sizes = Some(command.default_sizes(paper_scale));
        }
        if paper_scale || c.samples.is_none() {
            c.samples = Some(command.default_samples(paper_scale));
        }
        c.p_values = Some(c.p_grid()?);
        let sizes = c.sizes.clone().unwrap();
        if sizes.is_empty() {
            return Err(Error::Config("no system sizes".into()));
        }
        for &n in &sizes {
            if n < 4 || n % 2 != 0 || n > 24 {
                return Err(Error::Config(format!("system size {n} must be even and in 4..=24")));
            }
        }
        if sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("sizes must be strictly increasing".into()));
        }
        if c.depth == 0 {
            return Err(Error::Config("depth must be positive".into()));
        }
        if c.samples.unwrap() < 2 {
            return Err(Error::Config("samples must be at least 2".into()));
        }
        let observable: Observable = c
            .observable
            .parse()
            .map_err(|e: Error| Error::Config(format!("observable: {e}")))?;
        match command {
            Command::Mutinfo => {
                if c.r_values.is_none() {
                    c.r_values = Some((1..=sizes[0] / 2).collect());
                }
                let r = c.r_values.as_ref().unwrap();
                if r.is_empty() {
                    return Err(Error::Config("no separations r".into()));
                }
                for &n in &sizes {
                    if let Some(bad) = r.iter().find(|&&r| r == 0 || r > n / 2) {
                        return Err(Error::Config(format!("separation r = {bad} outside 1..={}", n / 2)));
                    }
                }
            }
            Command::Gradvar => {
                for &n in &sizes {
                    let count = c.family.num_params(n, c.depth);
                    if c.param_index >= count {
                        return Err(Error::Config(format!(
                            "param_index {} out of range for {count} parameters at N = {n}",
                            c.param_index
                        )));
                    }
                    for (_, s) in observable.terms() {
                        if let Some(&(q, _)) = s.factors().iter().find(|(q, _)| *q >= n) {
                            return Err(Error::Config(format!("observable acts on qubit {q} but N = {n}")));
                        }
                    }
                }
            }
            Command::Sweep => {}
        }
        Ok(ResolvedConfig {
            command,
            config: c,
            observable,
        })
    }
}

/// A configuration with all defaults filled in for one command.
#[derive(Clone, Debug)]
pub struct ResolvedConfig {
    pub command: Command,
    pub config: ExperimentConfig,
    pub observable: Observable,
}

impl ResolvedConfig {
    pub fn sizes(&self) -> &[usize] {
        self.config.sizes.as_deref().unwrap()
    }

    pub fn p_values(&self) -> &[f64] {
        self.config.p_values.as_deref().unwrap()
    }

    pub fn samples(&self) -> usize {
        self.config.samples.unwrap()
    }

    pub fn r_values(&self) -> &[usize] {
        self.config.r_values.as_deref().unwrap_or(&[])
    }

    pub fn circuit_options(&self) -> CircuitOptions {
        CircuitOptions {
            hea_cnot_wrap: self.config.hea_cnot_wrap,
        }
    }

    /// SHA-256 of the command name and the canonical TOML of the resolved
    /// configuration.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.command.name().as_bytes());
        h.update(b"\n");
        h.update(self.config.to_toml().as_bytes());
        hex::encode(h.finalize())
    }
}
