//! Parameter-shift gradients through circuits with intermediate projective
//! measurements.
//!
//! For a fixed outcome string `(i)` the normalized branch state is
//! `rho_M = rho~_M / p_M`. Shifting one Pauli rotation by `+-pi/2` and
//! replaying the same outcomes yields `<O>^{+-}` and `p_M^{+-}`, from which
//!
//! ```text
//! d/dtheta <O>_M = 1/2 [ (<O>^+ - <O>) p^+/p  -  (<O>^- - <O>) p^-/p ]
//! ```
//!
//! The `- <O>` correction comes from differentiating `1/p_M`. Summing the
//! unnormalized traces over all `2^M` outcome strings gives the gradient of the
//! measurement-averaged (mixed) state,
//!
//! ```text
//! d/dtheta Tr(rho O) = sum_i 1/2 ( <O>_i^+ p_i^+  -  <O>_i^- p_i^- ),
//! ```
//!
//! whose Born-weighted Monte-Carlo estimator has per-branch summand
//! `1/2 (<O>^+ p^+/p - <O>^- p^-/p)`.
//!
//! A parameter bound to several gates (the shared HVA angles) is
//! differentiated gate by gate and summed.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observable::Observable;
use crate::sim::{
    check_sites, derive_seed, replay_branch, run_trajectory_rng, uniform_params, CircuitOptions,
    CircuitSpec, Family, GateRef, MeasurementSite, StateVector,
};
use crate::stats;

/// Default cap on `M` for exhaustive branch enumeration.
pub const DEFAULT_ENUMERATION_CAP: usize = 14;

/// Default central finite-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Sign of the `<O>` correction term in the per-branch rule.
///
/// `Derived` (subtract `<O>`) is the correct one. `Printed` adds `<O>`
/// instead; it is kept only as a negative control for the oracle harness.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignConvention {
    #[default]
    Derived,
    Printed,
}

/// Expectation on a (possibly shifted) branch together with its weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftedExpectation {
    /// `<O>` on the normalized branch state; zero if the branch is infeasible.
    pub expectation: f64,
    /// Branch probability of the (shifted) circuit.
    pub probability: f64,
}

impl ShiftedExpectation {
    pub fn is_feasible(&self) -> bool {
        self.probability > 0.0
    }

    /// `Tr(rho~ O) = p <O>`.
    pub fn weighted(&self) -> f64 {
        self.probability * self.expectation
    }
}

/// Replays a branch with the rotation at `at` moved by `shift`.
///
/// A branch that is impossible in the shifted circuit reports probability 0;
/// its contribution to every gradient formula vanishes with that weight.
pub fn shifted_branch_expectation(
    circuit: &CircuitSpec,
    sites: &[MeasurementSite],
    outcomes: &[u8],
    at: Option<GateRef>,
    shift: f64,
    observable: &Observable,
) -> Result<ShiftedExpectation> {
    let shifted;
    let circuit = match at {
        Some(at) if shift != 0.0 => {
            shifted = circuit.with_gate_shift(at, shift)?;
            &shifted
        }
        _ => circuit,
    };
    match replay_branch(circuit, sites, outcomes) {
        Ok((state, probability)) => Ok(ShiftedExpectation {
            expectation: observable.expectation(&state)?,
            probability,
        }),
        Err(Error::ZeroProbabilityBranch { .. }) => Ok(ShiftedExpectation {
            expectation: 0.0,
            probability: 0.0,
        }),
        Err(e) => Err(e),
    }
}

/// The `+-pi/2` pair for one gate occurrence of the differentiated parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftTerm {
    pub layer: usize,
    pub index: usize,
    pub plus: ShiftedExpectation,
    pub minus: ShiftedExpectation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchGradient {
    pub value: f64,
    pub param_index: usize,
    pub outcomes: Vec<u8>,
    /// `p_M` and `<O>` of the unshifted branch.
    pub unshifted: ShiftedExpectation,
    pub terms: Vec<ShiftTerm>,
}

impl BranchGradient {
    /// Born-weighted summand `1/2 (<O>^+ p^+/p - <O>^- p^-/p)` of the ensemble
    /// gradient for this branch. Its average over Born-sampled branches is the
    /// gradient of the measurement-averaged expectation.
    pub fn born_weighted(&self) -> f64 {
        let p = self.unshifted.probability;
        self.terms
            .iter()
            .map(|t| 0.5 * (t.plus.weighted() - t.minus.weighted()) / p)
            .sum()
    }
}

/// Per-sample quantity of [`gradient_variance_experiment`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientEstimator {
    /// [`BranchGradient::born_weighted`] on the sampled branch.
    #[default]
    BornWeighted,
    /// Derivative of the normalized branch expectation, [`BranchGradient::value`].
    Branch,
}

fn occurrences(circuit: &CircuitSpec, l: usize) -> Result<Vec<GateRef>> {
    let occ = circuit.param_occurrences(l);
    if occ.is_empty() {
        return Err(Error::UnknownParameter(l));
    }
    Ok(occ)
}

fn shift_terms(
    circuit: &CircuitSpec,
    sites: &[MeasurementSite],
    outcomes: &[u8],
    l: usize,
    observable: &Observable,
) -> Result<Vec<ShiftTerm>> {
    occurrences(circuit, l)?
        .into_iter()
        .map(|at| {
            let eval = |s| shifted_branch_expectation(circuit, sites, outcomes, Some(at), s, observable);
            Ok(ShiftTerm {
                layer: at.layer,
                index: at.index,
                plus: eval(FRAC_PI_2)?,
                minus: eval(-FRAC_PI_2)?,
            })
        })
        .collect()
}

/// Derivative of the normalized branch expectation `Tr(rho_M O)` with respect
/// to parameter slot `l`.
pub fn branch_gradient(
    circuit: &CircuitSpec,
    sites: &[MeasurementSite],
    outcomes: &[u8],
    l: usize,
    observable: &Observable,
) -> Result<BranchGradient> {
    branch_gradient_with(circuit, sites, outcomes, l, observable, SignConvention::Derived)
}

pub fn branch_gradient_with(
    circuit: &CircuitSpec,
    sites: &[MeasurementSite],
    outcomes: &[u8],
    l: usize,
    observable: &Observable,
    sign: SignConvention,
) -> Result<BranchGradient> {
    check_sites(circuit, sites, outcomes)?;
    let (state, p) = replay_branch(circuit, sites, outcomes)?;
    let expectation = observable.expectation(&state)?;
    let terms = shift_terms(circuit, sites, outcomes, l, observable)?;
    let correction = match sign {
        SignConvention::Derived => expectation,
        SignConvention::Printed => -expectation,
    };
    let value = terms
        .iter()
        .map(|t| {
            0.5 * ((t.plus.expectation - correction) * t.plus.probability
                - (t.minus.expectation - correction) * t.minus.probability)
                / p
        })
        .sum();
    Ok(BranchGradient {
        value,
        param_index: l,
        outcomes: outcomes.to_vec(),
        unshifted: ShiftedExpectation {
            expectation,
            probability: p,
        },
        terms,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnumerationMode {
    /// All `2^M` outcome strings.
    Exact,
    /// Born-sampled outcome strings.
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleGradient {
    pub value: f64,
    /// Standard error of `value`; zero in exact mode.
    pub std_error: f64,
    pub param_index: usize,
    pub mode: EnumerationMode,
    pub measurements: usize,
    /// Branches that actually contributed.
    pub branches: usize,
}

/// Iterates all outcome strings of length `m`; bit `k` of the counter is the
/// outcome at site `k`.
fn outcome_strings(m: usize) -> impl Iterator<Item = Vec<u8>> {
    (0..1u64 << m).map(move |mask| (0..m).map(|k| (mask >> k & 1) as u8).collect())
}

/// Gradient of the measurement-averaged expectation `sum_i p_i <O>_i` by
/// exhaustive enumeration of the `2^M` outcome strings.
pub fn ensemble_gradient_exact(
    circuit: &CircuitSpec,
    sites: &[MeasurementSite],
    l: usize,
    observable: &Observable,
    cap: usize,
) -> Result<EnsembleGradient> {
    let m = sites.len();
    if m > cap {
        return Err(Error::EnumerationCap {
            measurements: m,
            cap,
        });
    }
    check_sites(circuit, sites, &vec![0; m])?;
    let occ = occurrences(circuit, l)?;
    let mut value = 0.0;
    let mut branches = 0;
    for outcomes in outcome_strings(m) {
        match replay_branch(circuit, sites, &outcomes) {
            Err(Error::ZeroProbabilityBranch { .. }) => continue,
            Err(e) => return Err(e),
            Ok(_) => {}
        }
        branches += 1;
        for &at in &occ {
            let eval = |s| shifted_branch_expectation(circuit, sites, &outcomes, Some(at), s, observable);
            value += 0.5 * (eval(FRAC_PI_2)?.weighted() - eval(-FRAC_PI_2)?.weighted());
        }
    }
    Ok(EnsembleGradient {
        value,
        std_error: 0.0,
        param_index: l,
        mode: EnumerationMode::Exact,
        measurements: m,
        branches,
    })
}

/// Draws an outcome string at fixed `sites` by Born sampling.
pub fn sample_branch<R: Rng + ?Sized>(
    circuit: &CircuitSpec,
    sites: &[MeasurementSite],
    rng: &mut R,
) -> Result<(Vec<u8>, f64)> {
    check_sites(circuit, sites, &vec![0; sites.len()])?;
    let compiled = circuit.compile()?;
    let mut state = StateVector::zero(circuit.num_qubits)?;
    compiled.run_prep(&mut state);
    let mut outcomes = Vec::with_capacity(sites.len());
    let mut probability = 1.0;
    let mut next = 0;
    for layer in 0..compiled.depth() {
        compiled.run_layer(layer, &mut state);
        while next < sites.len() && sites[next].layer == layer {
            let m = state.measure(sites[next].qubit, rng)?;
            outcomes.push(m.outcome);
            probability *= m.probability;
            next += 1;
        }
    }
    Ok((outcomes, probability))
}

/// Monte-Carlo version of [`ensemble_gradient_exact`]: averages the per-branch
/// estimator `1/2 (<O>^+ p^+/p - <O>^- p^-/p)` over Born-sampled branches.
pub fn ensemble_gradient_sampled(
    circuit: &CircuitSpec,
    sites: &[MeasurementSite],
    l: usize,
    observable: &Observable,
    num_samples: usize,
    seed: u64,
) -> Result<EnsembleGradient> {
    if num_samples == 0 {
        return Err(Error::Config("sampled gradient needs at least one sample".into()));
    }
    let occ = occurrences(circuit, l)?;
    let estimates: Vec<f64> = (0..num_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[k as u64]));
            let (outcomes, p) = sample_branch(circuit, sites, &mut rng)?;
            occ.iter().try_fold(0.0, |acc, &at| {
                let eval = |s| shifted_branch_expectation(circuit, sites, &outcomes, Some(at), s, observable);
                Ok(acc + 0.5 * (eval(FRAC_PI_2)?.weighted() - eval(-FRAC_PI_2)?.weighted()) / p)
            })
        })
        .collect::<Result<_>>()?;
    Ok(EnsembleGradient {
        value: stats::mean(&estimates),
        std_error: stats::standard_error(&estimates),
        param_index: l,
        mode: EnumerationMode::Sampled,
        measurements: sites.len(),
        branches: num_samples,
    })
}

/// Measurement-averaged expectation `sum_i p_i <O>_i` by enumeration.
pub fn averaged_expectation_exact(
    circuit: &CircuitSpec,
    sites: &[MeasurementSite],
    observable: &Observable,
) -> Result<f64> {
    let mut total = 0.0;
    for outcomes in outcome_strings(sites.len()) {
        let e = shifted_branch_expectation(circuit, sites, &outcomes, None, 0.0, observable)?;
        total += e.weighted();
    }
    Ok(total)
}

/// Central difference `(f(x+h) - f(x-h)) / 2h`.
///
/// # Panics
///
/// If `step` lies outside `[1e-7, 1e-2]`.
pub fn finite_difference_gradient<F: FnMut(f64) -> f64>(mut f: F, x: f64, step: f64) -> f64 {
    assert!(
        (1e-7..=1e-2).contains(&step),
        "finite-difference step {step} outside [1e-7, 1e-2]"
    );
    (f(x + step) - f(x - step)) / (2.0 * step)
}

/// Result of [`gradient_variance_experiment`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientVariance {
    pub variance: f64,
    /// Bootstrap standard error of `variance`.
    pub std_error: f64,
    pub mean: f64,
    pub samples: Vec<f64>,
}

/// Settings for [`gradient_variance_experiment`].
#[derive(Clone, Debug)]
pub struct GradientVarianceSetup {
    pub family: Family,
    pub num_qubits: usize,
    pub depth: usize,
    pub p: f64,
    pub num_samples: usize,
    pub base_seed: u64,
    pub observable: Observable,
    pub param_index: usize,
    pub options: CircuitOptions,
    pub bootstrap_resamples: usize,
    pub estimator: GradientEstimator,
}

impl GradientVarianceSetup {
    pub fn new(family: Family, num_qubits: usize, depth: usize, p: f64) -> Self {
        Self {
            family,
            num_qubits,
            depth,
            p,
            num_samples: 1000,
            base_seed: 0,
            observable: Observable::default(),
            param_index: 0,
            options: CircuitOptions::default(),
            bootstrap_resamples: 100,
            estimator: GradientEstimator::BornWeighted,
        }
    }
}

/// One sample of the landscape experiment: random parameters, random
/// measurement sites and a Born-sampled outcome branch, then the gradient
/// with respect to parameter `param_index` selected by `setup.estimator`,
/// with exact branch probabilities.
pub fn gradient_sample(setup: &GradientVarianceSetup, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_params = setup.family.num_params(setup.num_qubits, setup.depth);
    let params = uniform_params(n_params, &mut rng);
    let circuit = setup
        .family
        .build(setup.num_qubits, setup.depth, &params, setup.options)?;
    let traj = run_trajectory_rng(&circuit, setup.p, &mut rng, seed, false)?;
    let g = branch_gradient(
        &circuit,
        &traj.record.sites,
        &traj.record.outcomes,
        setup.param_index,
        &setup.observable,
    )?;
    Ok(match setup.estimator {
        GradientEstimator::BornWeighted => g.born_weighted(),
        GradientEstimator::Branch => g.value,
    })
}

/// Sample variance of the projective gradient over random circuit
/// realizations, with a bootstrap standard error.
pub fn gradient_variance_experiment(setup: &GradientVarianceSetup) -> Result<GradientVariance> {
    if setup.num_samples < 2 {
        return Err(Error::Config("gradient variance needs at least 2 samples".into()));
    }
    let samples: Vec<f64> = (0..setup.num_samples)
        .into_par_iter()
        .map(|k| gradient_sample(setup, derive_seed(setup.base_seed, &[k as u64])))
        .collect::<Result<_>>()?;
    Ok(summarize_gradients(samples, setup.bootstrap_resamples, setup.base_seed))
}

pub(crate) fn summarize_gradients(samples: Vec<f64>, k_boot: usize, seed: u64) -> GradientVariance {
    GradientVariance {
        variance: stats::sample_variance(&samples),
        std_error: stats::bootstrap_std(&samples, k_boot, !seed, stats::sample_variance),
        mean: stats::mean(&samples),
        samples,
    }
}
