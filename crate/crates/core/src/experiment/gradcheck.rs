//! Randomized oracle checks of the projective gradient rules.

use std::f64::consts::FRAC_PI_2;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gradient::{
    branch_gradient_with, ensemble_gradient_exact, finite_difference_gradient, sample_branch,
    SignConvention, DEFAULT_FD_STEP,
};
use crate::observable::Observable;
use crate::oracle;
use crate::sim::{
    derive_seed, replay_branch, trajectory_rng, uniform_params, CircuitOptions, CircuitSpec,
    Family, MeasurementSite,
};

pub const REL_TOL: f64 = 1e-6;
pub const ABS_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckOptions {
    pub instances: usize,
    pub seed: u64,
    /// Sign used by the per-branch rule under test; `Printed` must fail.
    pub sign: SignConvention,
    pub max_qubits: usize,
    pub max_depth: usize,
    pub max_measurements: usize,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            instances: 100,
            seed: 0,
            sign: SignConvention::Derived,
            max_qubits: 6,
            max_depth: 4,
            max_measurements: 4,
        }
    }
}

/// Deviations found on one random instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceCheck {
    pub seed: u64,
    pub family: Family,
    pub num_qubits: usize,
    pub depth: usize,
    pub measurements: usize,
    pub param_index: usize,
    /// Per-branch rule against finite differences of the branch expectation.
    pub branch_fd: Deviation,
    /// Exact ensemble gradient against finite differences of the dephasing
    /// channel computed densely.
    pub ensemble_fd: Deviation,
    /// Statevector branch against the dense projector product, on `p_M` and `<O>`.
    pub dense_branch: Deviation,
    /// Without measurements: against the textbook shift rule on the dense oracle.
    pub shift_rule: Option<Deviation>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub value: f64,
    pub reference: f64,
    pub ok: bool,
}

impl Deviation {
    fn new(value: f64, reference: f64, rel: f64, abs: f64) -> Self {
        Self {
            value,
            reference,
            ok: (value - reference).abs() <= (rel * reference.abs()).max(abs),
        }
    }

    pub fn error(&self) -> f64 {
        (self.value - self.reference).abs()
    }
}

impl InstanceCheck {
    pub fn passed(&self) -> bool {
        self.branch_fd.ok && self.ensemble_fd.ok && self.dense_branch.ok && self.shift_rule.is_none_or(|d| d.ok)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub options: GradcheckOptions,
    pub instances: Vec<InstanceCheck>,
    /// Seeds of the failing instances.
    pub failures: Vec<u64>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn with_param(circuit: &CircuitSpec, l: usize, x: f64) -> CircuitSpec {
    let mut params = circuit.params.clone();
    params[l] = x;
    circuit.with_params(&params).expect("same parameter count")
}

/// `max(1e-6 |reference|, 1e-8)`; the absolute floor covers gradients that
/// vanish up to finite-difference rounding.
fn fd_dev(value: f64, reference: f64) -> Deviation {
    Deviation::new(value, reference, REL_TOL, ABS_TOL)
}

/// Runs one randomized instance.
pub fn check_instance(seed: u64, opts: &GradcheckOptions) -> Result<InstanceCheck> {
    let mut rng = trajectory_rng(seed);
    let family = if rng.gen::<bool>() { Family::XxzHva } else { Family::Hea };
    let sizes: Vec<usize> = (4..=opts.max_qubits.max(4)).step_by(2).collect();
    let n = sizes[rng.gen_range(0..sizes.len())];
    let depth = rng.gen_range(1..=opts.max_depth.max(1));
    let params = uniform_params(family.num_params(n, depth), &mut rng);
    let circuit = family.build(n, depth, &params, CircuitOptions::default())?;
    let l = rng.gen_range(0..params.len());
    let m = rng.gen_range(0..=opts.max_measurements.min(n * depth));
    let mut sites: Vec<MeasurementSite> = index::sample(&mut rng, n * depth, m)
        .into_iter()
        .map(|k| MeasurementSite {
            layer: k / n,
            qubit: k % n,
        })
        .collect();
    sites.sort();
    let (outcomes, _) = sample_branch(&circuit, &sites, &mut rng)?;
    let o = Observable::zz(0, 1);

    let grad = branch_gradient_with(&circuit, &sites, &outcomes, l, &o, opts.sign)?;
    let branch_expect = |x: f64| {
        let (state, _) = replay_branch(&with_param(&circuit, l, x), &sites, &outcomes).expect("feasible branch");
        o.expectation(&state).expect("observable fits")
    };
    let branch_fd = fd_dev(grad.value, finite_difference_gradient(branch_expect, params[l], DEFAULT_FD_STEP));

    let ens = ensemble_gradient_exact(&circuit, &sites, l, &o, opts.max_measurements.max(1))?;
    let channel = |x: f64| oracle::channel_expectation(&with_param(&circuit, l, x), &sites, &o).expect("dense oracle");
    let ensemble_fd = fd_dev(ens.value, finite_difference_gradient(channel, params[l], DEFAULT_FD_STEP));

    let (p_dense, o_dense) = oracle::branch_expectation(&circuit, &sites, &outcomes, &o)?;
    let (state, p_sv) = replay_branch(&circuit, &sites, &outcomes)?;
    let o_sv = o.expectation(&state)?;
    let dev = (p_sv - p_dense).abs().max((o_sv - o_dense).abs());
    let dense_branch = Deviation::new(dev, 0.0, 0.0, 1e-10);

    let shift_rule = if sites.is_empty() {
        let mut reference = 0.0;
        for at in circuit.param_occurrences(l) {
            let eval = |s| oracle::channel_expectation(&circuit.with_gate_shift(at, s)?, &[], &o);
            reference += 0.5 * (eval(FRAC_PI_2)? - eval(-FRAC_PI_2)?);
        }
        Some(Deviation::new(grad.value, reference, 0.0, 1e-10))
    } else {
        None
    };

    Ok(InstanceCheck {
        seed,
        family,
        num_qubits: n,
        depth,
        measurements: m,
        param_index: l,
        branch_fd,
        ensemble_fd,
        dense_branch,
        shift_rule,
    })
}

/// Checks `opts.instances` random instances, each with seed
/// `derive_seed(opts.seed, [k])`.
pub fn gradcheck(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let instances: Vec<InstanceCheck> = (0..opts.instances)
        .into_par_iter()
        .map(|k| check_instance(derive_seed(opts.seed, &[k as u64]), opts))
        .collect::<Result<_>>()?;
    let failures = instances.iter().filter(|c| !c.passed()).map(|c| c.seed).collect();
    Ok(GradcheckReport {
        options: opts.clone(),
        instances,
        failures,
    })
}
