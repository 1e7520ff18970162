use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::circuit::CircuitSpec;
use super::state::StateVector;
use crate::entropy;
use crate::error::{Error, Result};

/// A measurement performed after unitary layer `layer` on `qubit`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MeasurementSite {
    pub layer: usize,
    pub qubit: usize,
}

/// Measurement sites and realized outcomes of one trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub sites: Vec<MeasurementSite>,
    pub outcomes: Vec<u8>,
    /// Product of the conditional Born probabilities along the trajectory.
    pub branch_probability: f64,
    pub rng_seed: u64,
}

impl MeasurementRecord {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryResult {
    pub final_state: StateVector,
    pub record: MeasurementRecord,
    /// Half-chain entropy after each layer's measurements, when requested.
    pub per_layer_entropy: Option<Vec<f64>>,
}

/// Seeded generator used for every stochastic choice in a trajectory.
pub fn trajectory_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Runs one monitored trajectory.
///
/// After every layer each qubit, in ascending order, is selected with
/// probability `p` and, if selected, measured with a Born-sampled outcome.
pub fn run_trajectory(circuit: &CircuitSpec, p: f64, seed: u64) -> Result<TrajectoryResult> {
    run_trajectory_with(circuit, p, seed, false)
}

pub fn run_trajectory_with(
    circuit: &CircuitSpec,
    p: f64,
    seed: u64,
    track_entropy: bool,
) -> Result<TrajectoryResult> {
    let mut rng = trajectory_rng(seed);
    run_trajectory_rng(circuit, p, &mut rng, seed, track_entropy)
}

/// Same as [`run_trajectory_with`] but drawing from a caller-owned generator.
pub fn run_trajectory_rng<R: Rng + ?Sized>(
    circuit: &CircuitSpec,
    p: f64,
    rng: &mut R,
    seed: u64,
    track_entropy: bool,
) -> Result<TrajectoryResult> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("measurement rate {p} outside [0, 1]")));
    }
    if track_entropy && !circuit.num_qubits.is_multiple_of(2) {
        return Err(Error::InvalidSubsystem("half-chain cut needs even N".into()));
    }
    let compiled = circuit.compile()?;
    let mut state = StateVector::zero(circuit.num_qubits)?;
    compiled.run_prep(&mut state);

    let mut sites = Vec::new();
    let mut outcomes = Vec::new();
    let mut branch_probability = 1.0;
    let mut entropies = track_entropy.then(|| Vec::with_capacity(circuit.depth));

    for layer in 0..compiled.depth() {
        compiled.run_layer(layer, &mut state);
        for qubit in 0..circuit.num_qubits {
            if rng.gen::<f64>() < p {
                let m = state.measure(qubit, rng)?;
                sites.push(MeasurementSite { layer, qubit });
                outcomes.push(m.outcome);
                branch_probability *= m.probability;
            }
        }
        if let Some(e) = entropies.as_mut() {
            e.push(entropy::half_chain_entropy(&state)?);
        }
    }

    Ok(TrajectoryResult {
        final_state: state,
        record: MeasurementRecord {
            sites,
            outcomes,
            branch_probability,
            rng_seed: seed,
        },
        per_layer_entropy: entropies,
    })
}

/// Deterministically re-runs `circuit`, forcing `outcomes` at `sites`.
///
/// Returns the normalized branch state and its probability `p_M`, the product
/// of conditional Born probabilities. A forced outcome with vanishing
/// probability yields [`Error::ZeroProbabilityBranch`].
pub fn replay_branch(
    circuit: &CircuitSpec,
    sites: &[MeasurementSite],
    outcomes: &[u8],
) -> Result<(StateVector, f64)> {
    check_sites(circuit, sites, outcomes)?;
    let compiled = circuit.compile()?;
    let mut state = StateVector::zero(circuit.num_qubits)?;
    compiled.run_prep(&mut state);

    let mut probability = 1.0;
    let mut next = 0;
    for layer in 0..compiled.depth() {
        compiled.run_layer(layer, &mut state);
        while next < sites.len() && sites[next].layer == layer {
            probability *= state.measure_forced(sites[next].qubit, outcomes[next])?;
            next += 1;
        }
    }
    Ok((state, probability))
}

/// Sites must be strictly increasing in `(layer, qubit)` and in range.
pub(crate) fn check_sites(
    circuit: &CircuitSpec,
    sites: &[MeasurementSite],
    outcomes: &[u8],
) -> Result<()> {
    if sites.len() != outcomes.len() {
        return Err(Error::MalformedRecord(format!(
            "{} sites but {} outcomes",
            sites.len(),
            outcomes.len()
        )));
    }
    if let Some(w) = sites.windows(2).find(|w| w[0] >= w[1]) {
        return Err(Error::MalformedRecord(format!(
            "sites not strictly ordered: {:?} before {:?}",
            w[0], w[1]
        )));
    }
    if let Some(s) = sites
        .iter()
        .find(|s| s.layer >= circuit.depth || s.qubit >= circuit.num_qubits)
    {
        return Err(Error::MalformedRecord(format!("site {s:?} outside circuit")));
    }
    if let Some(o) = outcomes.iter().find(|&&o| o > 1) {
        return Err(Error::MalformedRecord(format!("outcome {o} is not a bit")));
    }
    Ok(())
}

/// Draws measurement sites independently with probability `p`, without
/// simulating outcomes.
pub fn sample_sites<R: Rng + ?Sized>(
    num_qubits: usize,
    depth: usize,
    p: f64,
    rng: &mut R,
) -> Vec<MeasurementSite> {
    (0..depth)
        .flat_map(|layer| (0..num_qubits).map(move |qubit| MeasurementSite { layer, qubit }))
        .filter(|_| rng.gen::<f64>() < p)
        .collect()
}
