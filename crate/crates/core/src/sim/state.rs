use num_complex::Complex64;
use rand::Rng;

use super::gate::{GateOp, Mat2, Mat4};
use crate::error::{Error, Result};

/// Forced outcomes below this Born probability are treated as impossible.
pub const MIN_BRANCH_PROBABILITY: f64 = 1e-14;

/// Dense pure state of `num_qubits` qubits.
///
/// Basis index bit `q` holds the computational value of qubit `q`
/// (qubit 0 is the least significant bit).
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: Vec<Complex64>,
    num_qubits: usize,
}

/// Outcome of a single projective measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measured {
    pub outcome: u8,
    /// Born probability `<psi|P_outcome|psi>` before projection.
    pub probability: f64,
}

impl StateVector {
    /// `|0...0>` on `num_qubits` qubits.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        check_width(num_qubits)?;
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { amps, num_qubits })
    }

    /// Computational basis state `|index>`.
    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        check_width(num_qubits)?;
        if index >= 1 << num_qubits {
            return Err(Error::InvalidState(format!(
                "basis index {index} out of range for {num_qubits} qubits"
            )));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(Self { amps, num_qubits })
    }

    /// Builds a state from raw amplitudes, normalizing them.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 4 || !len.is_power_of_two() {
            return Err(Error::InvalidState(format!(
                "amplitude vector length {len} is not 2^N with N >= 2"
            )));
        }
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::InvalidState("non-finite amplitude".into()));
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero vector".into()));
        }
        let num_qubits = len.trailing_zeros() as usize;
        let amps = amps.into_iter().map(|a| a / norm).collect();
        Ok(Self { amps, num_qubits })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Applies a gate in place.
    pub fn apply(&mut self, gate: &GateOp) -> Result<()> {
        gate.validate(self.num_qubits)?;
        match gate.arity() {
            1 => self.apply_1q(gate.qubits[0], &gate.matrix_1q()),
            _ => self.apply_2q(gate.qubits[0], gate.qubits[1], &gate.matrix_2q()),
        }
        Ok(())
    }

    pub(crate) fn apply_1q(&mut self, q: usize, m: &Mat2) {
        let bit = 1usize << q;
        for hi in 0..self.amps.len() >> 1 {
            let i0 = insert_zero_bit(hi, q);
            let i1 = i0 | bit;
            let (a0, a1) = (self.amps[i0], self.amps[i1]);
            self.amps[i0] = m[0][0] * a0 + m[0][1] * a1;
            self.amps[i1] = m[1][0] * a0 + m[1][1] * a1;
        }
    }

    /// Local basis order is `b0 + 2 b1`, `b0` the bit of `q0`.
    pub(crate) fn apply_2q(&mut self, q0: usize, q1: usize, m: &Mat4) {
        let (lo, hi) = if q0 < q1 { (q0, q1) } else { (q1, q0) };
        let b0 = 1usize << q0;
        let b1 = 1usize << q1;
        for rest in 0..self.amps.len() >> 2 {
            let base = insert_zero_bit(insert_zero_bit(rest, lo), hi);
            let idx = [base, base | b0, base | b1, base | b0 | b1];
            let a = [
                self.amps[idx[0]],
                self.amps[idx[1]],
                self.amps[idx[2]],
                self.amps[idx[3]],
            ];
            for (row, &i) in m.iter().zip(&idx) {
                self.amps[i] = row[0] * a[0] + row[1] * a[1] + row[2] * a[2] + row[3] * a[3];
            }
        }
    }

    /// Probability of reading `outcome` on `qubit`.
    pub fn outcome_probability(&self, qubit: usize, outcome: u8) -> Result<f64> {
        self.check_qubit(qubit)?;
        let bit = 1usize << qubit;
        let want = if outcome == 0 { 0 } else { bit };
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & bit == want)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Projective Z-basis measurement with the outcome drawn by the Born rule.
    pub fn measure<R: Rng + ?Sized>(&mut self, qubit: usize, rng: &mut R) -> Result<Measured> {
        let p0 = self.outcome_probability(qubit, 0)?;
        let outcome = if rng.gen::<f64>() < p0 { 0 } else { 1 };
        let probability = if outcome == 0 { p0 } else { 1.0 - p0 };
        self.project(qubit, outcome, probability)?;
        Ok(Measured {
            outcome,
            probability,
        })
    }

    /// Projects onto a prescribed outcome, returning its Born probability.
    ///
    /// Fails with [`Error::ZeroProbabilityBranch`] when the outcome is
    /// (numerically) impossible; the state is left untouched in that case.
    pub fn measure_forced(&mut self, qubit: usize, outcome: u8) -> Result<f64> {
        if outcome > 1 {
            return Err(Error::MalformedRecord(format!("outcome {outcome} is not a bit")));
        }
        let probability = self.outcome_probability(qubit, outcome)?;
        self.project(qubit, outcome, probability)?;
        Ok(probability)
    }

    fn project(&mut self, qubit: usize, outcome: u8, probability: f64) -> Result<()> {
        if probability < MIN_BRANCH_PROBABILITY {
            return Err(Error::ZeroProbabilityBranch {
                qubit,
                outcome,
                probability,
            });
        }
        let bit = 1usize << qubit;
        let keep = if outcome == 0 { 0 } else { bit };
        let scale = 1.0 / probability.sqrt();
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & bit == keep {
                *a *= scale;
            } else {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        // Re-normalize exactly; the Born probability above may carry rounding.
        let norm = self.norm();
        self.amps.iter_mut().for_each(|a| *a /= norm);
        Ok(())
    }

    pub(crate) fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits {
            return Err(Error::QubitOutOfRange {
                index: qubit,
                num_qubits: self.num_qubits,
            });
        }
        Ok(())
    }
}

fn check_width(num_qubits: usize) -> Result<()> {
    if !(2..=30).contains(&num_qubits) {
        return Err(Error::InvalidState(format!(
            "{num_qubits} qubits is outside the supported range 2..=30"
        )));
    }
    Ok(())
}

/// Spreads `x` so that bit position `pos` is zero.
#[inline]
fn insert_zero_bit(x: usize, pos: usize) -> usize {
    let low = x & ((1 << pos) - 1);
    ((x >> pos) << (pos + 1)) | low
}
