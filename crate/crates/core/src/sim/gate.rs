use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat2 = [[Complex64; 2]; 2];
pub type Mat4 = [[Complex64; 4]; 4];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Gate inventory of the two circuit families.
///
/// Rotations follow `U(theta) = exp(-i theta/2 A)` with `A` the generating
/// Pauli string, so `dU/dtheta = -i/2 A U` and the `+-pi/2` shift rule holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateKind {
    Rx,
    Ry,
    Rzz,
    Ryy,
    Rxx,
    Cnot,
    H,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::Rx | GateKind::Ry | GateKind::H => 1,
            GateKind::Rzz | GateKind::Ryy | GateKind::Rxx | GateKind::Cnot => 2,
        }
    }

    /// Whether the gate is a Pauli-generated rotation.
    pub fn is_rotation(self) -> bool {
        !matches!(self, GateKind::Cnot | GateKind::H)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateOp {
    pub kind: GateKind,
    /// For single-qubit gates only `qubits[0]` is meaningful. For CNOT,
    /// `qubits[0]` is the control.
    pub qubits: [usize; 2],
    /// Rotation angle in radians; ignored for CNOT and H.
    pub angle: f64,
    /// Index into the circuit's parameter vector this angle is bound to.
    pub param_slot: Option<usize>,
}

impl GateOp {
    pub fn h(q: usize) -> Self {
        Self::fixed(GateKind::H, [q, q])
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self::fixed(GateKind::Cnot, [control, target])
    }

    pub fn rx(q: usize, angle: f64) -> Self {
        Self::rotation(GateKind::Rx, [q, q], angle)
    }

    pub fn ry(q: usize, angle: f64) -> Self {
        Self::rotation(GateKind::Ry, [q, q], angle)
    }

    pub fn rzz(a: usize, b: usize, angle: f64) -> Self {
        Self::rotation(GateKind::Rzz, [a, b], angle)
    }

    pub fn ryy(a: usize, b: usize, angle: f64) -> Self {
        Self::rotation(GateKind::Ryy, [a, b], angle)
    }

    pub fn rxx(a: usize, b: usize, angle: f64) -> Self {
        Self::rotation(GateKind::Rxx, [a, b], angle)
    }

    fn fixed(kind: GateKind, qubits: [usize; 2]) -> Self {
        Self {
            kind,
            qubits,
            angle: 0.0,
            param_slot: None,
        }
    }

    fn rotation(kind: GateKind, qubits: [usize; 2], angle: f64) -> Self {
        Self {
            kind,
            qubits,
            angle,
            param_slot: None,
        }
    }

    pub fn bound_to(mut self, slot: usize) -> Self {
        self.param_slot = Some(slot);
        self
    }

    pub fn arity(&self) -> usize {
        self.kind.arity()
    }

    pub fn validate(&self, num_qubits: usize) -> Result<()> {
        let sites = &self.qubits[..self.arity()];
        for &q in sites {
            if q >= num_qubits {
                return Err(Error::QubitOutOfRange {
                    index: q,
                    num_qubits,
                });
            }
        }
        if self.arity() == 2 && self.qubits[0] == self.qubits[1] {
            return Err(Error::RepeatedQubit(self.qubits[0]));
        }
        if self.kind.is_rotation() && !self.angle.is_finite() {
            return Err(Error::NonFiniteAngle(self.angle));
        }
        Ok(())
    }

    pub fn matrix_1q(&self) -> Mat2 {
        let (c, s) = half_angle(self.angle);
        match self.kind {
            GateKind::H => {
                let r = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                [[r, r], [r, -r]]
            }
            GateKind::Rx => {
                let mis = Complex64::new(0.0, -s);
                [[c.into(), mis], [mis, c.into()]]
            }
            GateKind::Ry => [[c.into(), (-s).into()], [s.into(), c.into()]],
            other => panic!("{other:?} is not a single-qubit gate"),
        }
    }

    /// 4x4 matrix in the local basis `b0 + 2 b1` (`b0` the bit of `qubits[0]`).
    pub fn matrix_2q(&self) -> Mat4 {
        let (c, s) = half_angle(self.angle);
        let mut m = [[ZERO; 4]; 4];
        match self.kind {
            GateKind::Cnot => {
                // control is b0: |1,0> (k=1) <-> |1,1> (k=3)
                m[0][0] = ONE;
                m[2][2] = ONE;
                m[3][1] = ONE;
                m[1][3] = ONE;
            }
            GateKind::Rzz => {
                for (k, row) in m.iter_mut().enumerate() {
                    let parity = if (k & 1) == (k >> 1) { 1.0 } else { -1.0 };
                    row[k] = Complex64::new(c, -s * parity);
                }
            }
            GateKind::Rxx | GateKind::Ryy => {
                for (k, row) in m.iter_mut().enumerate() {
                    row[k] = c.into();
                    // X X |k> = |k^3>, Y Y |k> = -|k^3> on equal bits, +|k^3> otherwise.
                    let sign = match self.kind {
                        GateKind::Ryy if (k & 1) == (k >> 1) => -1.0,
                        _ => 1.0,
                    };
                    row[k ^ 3] = Complex64::new(0.0, -s * sign);
                }
            }
            other => panic!("{other:?} is not a two-qubit gate"),
        }
        m
    }
}

fn half_angle(angle: f64) -> (f64, f64) {
    let half = 0.5 * angle;
    (half.cos(), half.sin())
}

/// Product `a * b` of two 4x4 matrices.
pub(crate) fn matmul4(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Re-expresses a two-qubit matrix with its qubit order swapped.
pub(crate) fn swap_qubit_order(m: &Mat4) -> Mat4 {
    let perm = [0, 2, 1, 3];
    let mut out = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[perm[i]][perm[j]] = m[i][j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::StateVector;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn zero_rotation_is_identity() {
        let amps: Vec<Complex64> = (0..8)
            .map(|k| Complex64::new(k as f64 + 0.5, 1.0 - k as f64))
            .collect();
        let s = StateVector::from_amplitudes(amps).unwrap();
        for g in [
            GateOp::rx(1, 0.0),
            GateOp::ry(2, 0.0),
            GateOp::rzz(0, 2, 0.0),
            GateOp::ryy(1, 0, 0.0),
            GateOp::rxx(2, 1, 0.0),
        ] {
            let mut t = s.clone();
            t.apply(&g).unwrap();
            for (a, b) in t.amplitudes().iter().zip(s.amplitudes()) {
                assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn hadamard_on_zero() {
        let mut s = StateVector::zero(2).unwrap();
        s.apply(&GateOp::h(0)).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(s.amplitudes()[0].re, r, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitudes()[1].re, r, epsilon = 1e-15);
    }

    #[test]
    fn rzz_pi_keeps_00_up_to_phase() {
        // exp(-i pi/2 ZZ)|00> = -i |00>
        let mut s = StateVector::zero(2).unwrap();
        s.apply(&GateOp::rzz(0, 1, PI)).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].norm_sqr(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitudes()[0].im, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn invalid_gates_are_rejected() {
        let mut s = StateVector::zero(3).unwrap();
        assert!(matches!(
            s.apply(&GateOp::rx(3, 0.1)),
            Err(Error::QubitOutOfRange { index: 3, .. })
        ));
        assert!(matches!(s.apply(&GateOp::cnot(1, 1)), Err(Error::RepeatedQubit(1))));
        assert!(matches!(
            s.apply(&GateOp::rxx(0, 1, f64::NAN)),
            Err(Error::NonFiniteAngle(_))
        ));
    }

    #[test]
    fn swapping_qubit_order_twice_is_identity() {
        let g = GateOp::cnot(0, 1).matrix_2q();
        assert_eq!(swap_qubit_order(&swap_qubit_order(&g)), g);
        assert_ne!(swap_qubit_order(&g), g);
    }
}
