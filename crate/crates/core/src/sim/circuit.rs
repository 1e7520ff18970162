use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::gate::{matmul4, swap_qubit_order, GateOp, Mat2, Mat4};
use super::state::StateVector;
use crate::error::{Error, Result};

/// The two variational circuit families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "xxz_hva")]
    XxzHva,
    #[serde(rename = "hea")]
    Hea,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::XxzHva => "xxz_hva",
            Family::Hea => "hea",
        }
    }

    pub fn num_params(self, num_qubits: usize, depth: usize) -> usize {
        match self {
            Family::XxzHva => 4 * depth,
            Family::Hea => 2 * num_qubits * depth,
        }
    }

    pub fn build(
        self,
        num_qubits: usize,
        depth: usize,
        params: &[f64],
        options: CircuitOptions,
    ) -> Result<CircuitSpec> {
        match self {
            Family::XxzHva => build_xxz_hva(num_qubits, depth, params),
            Family::Hea => build_hea_with(num_qubits, depth, params, options.hea_cnot_wrap),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xxz_hva" => Ok(Family::XxzHva),
            "hea" => Ok(Family::Hea),
            other => Err(Error::Config(format!("unknown circuit family `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitOptions {
    /// Close the HEA CNOT chain with a `(N-1) -> 0` gate.
    pub hea_cnot_wrap: bool,
}

impl Default for CircuitOptions {
    fn default() -> Self {
        Self {
            hea_cnot_wrap: true,
        }
    }
}

/// Position of a gate inside the layered part of a circuit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GateRef {
    pub layer: usize,
    pub index: usize,
}

/// A circuit instance: a fixed state-preparation block followed by `depth`
/// unitary layers. Measurements, when present, happen after each layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub family: Family,
    pub num_qubits: usize,
    pub depth: usize,
    pub prep: Vec<GateOp>,
    pub layers: Vec<Vec<GateOp>>,
    pub params: Vec<f64>,
}

/// XXZ Hamiltonian variational ansatz with periodic boundaries.
///
/// Bell pairs `(|00> + |11>)/sqrt 2` are prepared on the even bonds
/// `(0,1), (2,3), ...`. Layer `d` then applies ZZ, YY and XX rotations on the
/// odd bonds `(1,2), ..., (N-1,0)` with angles `(theta_d, phi_d, phi_d)` and
/// on the even bonds with `(beta_d, gamma_d, gamma_d)`. The parameter vector
/// is `[theta_0, phi_0, beta_0, gamma_0, theta_1, ...]`.
pub fn build_xxz_hva(num_qubits: usize, depth: usize, params: &[f64]) -> Result<CircuitSpec> {
    if !num_qubits.is_multiple_of(2) || num_qubits < 4 {
        return Err(Error::OddQubitCount {
            family: "xxz_hva",
            num_qubits,
        });
    }
    check_params(Family::XxzHva.num_params(num_qubits, depth), params)?;
    let n = num_qubits;

    let prep = (0..n / 2)
        .flat_map(|k| [GateOp::h(2 * k), GateOp::cnot(2 * k, 2 * k + 1)])
        .collect();

    let layers = (0..depth)
        .map(|d| {
            let slot = 4 * d;
            let odd = (0..n / 2).map(|k| (2 * k + 1, (2 * k + 2) % n));
            let even = (0..n / 2).map(|k| (2 * k, 2 * k + 1));
            let mut gates = Vec::with_capacity(3 * n);
            for ((a, b), zz, yx) in odd
                .map(|bond| (bond, slot, slot + 1))
                .chain(even.map(|bond| (bond, slot + 2, slot + 3)))
            {
                gates.push(GateOp::rzz(a, b, params[zz]).bound_to(zz));
                gates.push(GateOp::ryy(a, b, params[yx]).bound_to(yx));
                gates.push(GateOp::rxx(a, b, params[yx]).bound_to(yx));
            }
            gates
        })
        .collect();

    Ok(CircuitSpec {
        family: Family::XxzHva,
        num_qubits,
        depth,
        prep,
        layers,
        params: params.to_vec(),
    })
}

/// Hardware-efficient ansatz with the CNOT chain closed around the ring.
pub fn build_hea(num_qubits: usize, depth: usize, params: &[f64]) -> Result<CircuitSpec> {
    build_hea_with(num_qubits, depth, params, true)
}

/// Hardware-efficient ansatz.
///
/// `H` on every qubit, then per layer `l`: `RY(theta_{i,l})` on every qubit,
/// CNOTs `i -> i+1` in ascending order (plus `N-1 -> 0` when `cnot_wrap`),
/// and `RX(phi_{i,l})` on every qubit. Layer `l` owns parameter slots
/// `2Nl .. 2Nl+N` for the `theta`s and `2Nl+N .. 2N(l+1)` for the `phi`s.
pub fn build_hea_with(
    num_qubits: usize,
    depth: usize,
    params: &[f64],
    cnot_wrap: bool,
) -> Result<CircuitSpec> {
    if num_qubits < 2 {
        return Err(Error::InvalidState(format!(
            "hea needs at least 2 qubits, got {num_qubits}"
        )));
    }
    check_params(Family::Hea.num_params(num_qubits, depth), params)?;
    let n = num_qubits;

    let prep = (0..n).map(GateOp::h).collect();
    let layers = (0..depth)
        .map(|l| {
            let base = 2 * n * l;
            let mut gates: Vec<GateOp> = (0..n)
                .map(|i| GateOp::ry(i, params[base + i]).bound_to(base + i))
                .collect();
            gates.extend((0..n - 1).map(|i| GateOp::cnot(i, i + 1)));
            if cnot_wrap && n > 2 {
                gates.push(GateOp::cnot(n - 1, 0));
            }
            gates.extend(
                (0..n).map(|i| GateOp::rx(i, params[base + n + i]).bound_to(base + n + i)),
            );
            gates
        })
        .collect();

    Ok(CircuitSpec {
        family: Family::Hea,
        num_qubits,
        depth,
        prep,
        layers,
        params: params.to_vec(),
    })
}

fn check_params(expected: usize, params: &[f64]) -> Result<()> {
    if params.len() != expected {
        return Err(Error::ParameterCount {
            expected,
            got: params.len(),
        });
    }
    if let Some(&bad) = params.iter().find(|a| !a.is_finite()) {
        return Err(Error::NonFiniteAngle(bad));
    }
    Ok(())
}

impl CircuitSpec {
    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn gate_count(&self) -> usize {
        self.prep.len() + self.layers.iter().map(Vec::len).sum::<usize>()
    }

    pub fn gate(&self, at: GateRef) -> Option<&GateOp> {
        self.layers.get(at.layer)?.get(at.index)
    }

    /// Every rotation bound to parameter `slot`, in circuit order.
    pub fn param_occurrences(&self, slot: usize) -> Vec<GateRef> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(layer, gates)| {
                gates.iter().enumerate().filter_map(move |(index, g)| {
                    (g.param_slot == Some(slot) && g.kind.is_rotation())
                        .then_some(GateRef { layer, index })
                })
            })
            .collect()
    }

    /// Rebinds all parameterized gates to new angles.
    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        check_params(self.params.len(), params)?;
        let mut out = self.clone();
        for g in out.layers.iter_mut().flatten() {
            if let Some(slot) = g.param_slot {
                g.angle = params[slot];
            }
        }
        out.params = params.to_vec();
        Ok(out)
    }

    /// Copy with a single gate occurrence rotated by an extra `delta`.
    pub fn with_gate_shift(&self, at: GateRef, delta: f64) -> Result<Self> {
        let mut out = self.clone();
        let gate = out
            .layers
            .get_mut(at.layer)
            .and_then(|l| l.get_mut(at.index))
            .filter(|g| g.kind.is_rotation())
            .ok_or_else(|| Error::Config(format!("no rotation at {at:?}")))?;
        gate.angle += delta;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        for g in self.prep.iter().chain(self.layers.iter().flatten()) {
            g.validate(self.num_qubits)?;
        }
        Ok(())
    }

    pub(crate) fn compile(&self) -> Result<CompiledCircuit> {
        self.validate()?;
        Ok(CompiledCircuit {
            prep: fuse(&self.prep),
            layers: self.layers.iter().map(|l| fuse(l)).collect(),
        })
    }

    /// Initial state after the preparation block.
    pub fn prepared_state(&self) -> Result<StateVector> {
        let compiled = self.compile()?;
        let mut state = StateVector::zero(self.num_qubits)?;
        compiled.run_prep(&mut state);
        Ok(state)
    }
}

/// Fused gate sequence ready for execution.
pub(crate) struct CompiledCircuit {
    prep: Vec<FusedOp>,
    layers: Vec<Vec<FusedOp>>,
}

impl CompiledCircuit {
    pub fn run_prep(&self, state: &mut StateVector) {
        apply_all(&self.prep, state);
    }

    pub fn run_layer(&self, layer: usize, state: &mut StateVector) {
        apply_all(&self.layers[layer], state);
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }
}

enum FusedOp {
    One(usize, Mat2),
    Two(usize, usize, Mat4),
}

fn apply_all(ops: &[FusedOp], state: &mut StateVector) {
    for op in ops {
        match op {
            FusedOp::One(q, m) => state.apply_1q(*q, m),
            FusedOp::Two(a, b, m) => state.apply_2q(*a, *b, m),
        }
    }
}

/// Merges runs of consecutive two-qubit gates acting on the same pair.
fn fuse(gates: &[GateOp]) -> Vec<FusedOp> {
    let mut out: Vec<FusedOp> = Vec::with_capacity(gates.len());
    for g in gates {
        if g.arity() == 1 {
            out.push(FusedOp::One(g.qubits[0], g.matrix_1q()));
            continue;
        }
        let (a, b) = (g.qubits[0], g.qubits[1]);
        let m = g.matrix_2q();
        match out.last_mut() {
            Some(FusedOp::Two(pa, pb, pm)) if (*pa, *pb) == (a, b) => *pm = matmul4(&m, pm),
            Some(FusedOp::Two(pa, pb, pm)) if (*pa, *pb) == (b, a) => {
                *pm = matmul4(&swap_qubit_order(&m), pm)
            }
            _ => out.push(FusedOp::Two(a, b, m)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::GateKind;

    #[test]
    fn hva_layer_structure() {
        let n = 6;
        let depth = 16;
        let params = vec![0.1; 4 * depth];
        let c = build_xxz_hva(n, depth, &params).unwrap();
        assert_eq!(c.num_params(), 64);
        for layer in &c.layers {
            assert_eq!(layer.len(), 18);
            assert!(layer.iter().all(|g| g.arity() == 2));
        }
        // wrap-around bond present on the odd sublattice
        assert!(c.layers[0]
            .iter()
            .any(|g| g.qubits == [5, 0] && g.param_slot == Some(0)));
        // theta_0 controls the ZZ rotation on each of the N/2 odd bonds
        assert_eq!(c.param_occurrences(0).len(), 3);
        // phi_0 controls YY and XX on each odd bond
        assert_eq!(c.param_occurrences(1).len(), 6);
    }

    #[test]
    fn hva_rejects_bad_input() {
        assert!(matches!(
            build_xxz_hva(5, 1, &[0.0; 4]),
            Err(Error::OddQubitCount { .. })
        ));
        assert!(matches!(
            build_xxz_hva(6, 2, &[0.0; 4]),
            Err(Error::ParameterCount { expected: 8, got: 4 })
        ));
    }

    #[test]
    fn hea_layer_structure() {
        let c = build_hea(8, 16, &vec![0.0; 256]).unwrap();
        assert_eq!(c.num_params(), 256);
        let cnots: Vec<_> = c.layers[0]
            .iter()
            .filter(|g| g.kind == GateKind::Cnot)
            .map(|g| g.qubits)
            .collect();
        assert_eq!(cnots.len(), 8);
        assert_eq!(cnots[0], [0, 1]);
        assert_eq!(cnots[7], [7, 0]);
        let open = build_hea_with(8, 1, &[0.0; 16], false).unwrap();
        assert_eq!(
            open.layers[0].iter().filter(|g| g.kind == GateKind::Cnot).count(),
            7
        );
        assert!(build_hea(4, 2, &[0.0; 15]).is_err());
    }

    #[test]
    fn with_params_rebinds_every_slot() {
        let c = build_hea(4, 2, &[0.0; 16]).unwrap();
        let p: Vec<f64> = (0..16).map(|k| k as f64).collect();
        let c = c.with_params(&p).unwrap();
        for g in c.layers.iter().flatten() {
            if let Some(slot) = g.param_slot {
                assert_eq!(g.angle, slot as f64);
            }
        }
    }

    #[test]
    fn family_round_trips_through_its_name() {
        for f in [Family::XxzHva, Family::Hea] {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
        assert!("random".parse::<Family>().is_err());
    }
}
