//! Real linear combinations of Pauli strings.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sim::StateVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    X,
    Y,
    Z,
}

/// Tensor product of single-site Paulis; sites not listed carry identity.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PauliString {
    factors: Vec<(usize, Pauli)>,
}

impl PauliString {
    pub fn new(factors: impl IntoIterator<Item = (usize, Pauli)>) -> Result<Self> {
        let mut factors: Vec<_> = factors.into_iter().collect();
        factors.sort_by_key(|&(q, _)| q);
        if let Some(w) = factors.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Config(format!("qubit {} appears twice in a Pauli string", w[0].0)));
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[(usize, Pauli)] {
        &self.factors
    }

    /// `<psi|P|psi>`; real because `P` is Hermitian.
    pub fn expectation(&self, state: &StateVector) -> Result<f64> {
        let mut flip = 0usize;
        let mut phase_mask = 0usize;
        let mut y_count = 0u32;
        for &(q, p) in &self.factors {
            state.check_qubit(q)?;
            match p {
                Pauli::X => flip |= 1 << q,
                Pauli::Y => {
                    flip |= 1 << q;
                    phase_mask |= 1 << q;
                    y_count += 1;
                }
                Pauli::Z => phase_mask |= 1 << q,
            }
        }
        // P|i> = i^{#Y} (-1)^{popcount(i & phase_mask)} |i ^ flip>
        let amps = state.amplitudes();
        let total: Complex64 = amps
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let sign = if (i & phase_mask).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
                amps[i ^ flip].conj() * a * sign
            })
            .sum();
        let global = match y_count % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        Ok((global * total).re)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return f.write_str("I");
        }
        for (q, p) in &self.factors {
            write!(f, "{p:?}{q}")?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    /// Parses strings such as `Z0Z1` or `X2 Y5`; `I` is the identity.
    fn from_str(s: &str) -> Result<Self> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if s == "I" {
            return Ok(Self::default());
        }
        let bad = || Error::Config(format!("cannot parse Pauli string `{s}`"));
        let mut factors = Vec::new();
        let mut chars = s.chars().peekable();
        while let Some(c) = chars.next() {
            let pauli = match c {
                'X' => Pauli::X,
                'Y' => Pauli::Y,
                'Z' => Pauli::Z,
                _ => return Err(bad()),
            };
            let mut digits = String::new();
            while let Some(d) = chars.peek().filter(|d| d.is_ascii_digit()) {
                digits.push(*d);
                chars.next();
            }
            factors.push((digits.parse().map_err(|_| bad())?, pauli));
        }
        if factors.is_empty() {
            return Err(bad());
        }
        Self::new(factors)
    }
}

/// `O = sum_k c_k P_k` with real coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Observable {
    terms: Vec<(f64, PauliString)>,
}

impl Observable {
    pub fn new(terms: Vec<(f64, PauliString)>) -> Self {
        Self { terms }
    }

    /// `Z_a Z_b`.
    pub fn zz(a: usize, b: usize) -> Self {
        let s = PauliString::new([(a, Pauli::Z), (b, Pauli::Z)]).expect("distinct sites");
        Self::new(vec![(1.0, s)])
    }

    pub fn terms(&self) -> &[(f64, PauliString)] {
        &self.terms
    }

    pub fn expectation(&self, state: &StateVector) -> Result<f64> {
        self.terms
            .iter()
            .map(|(c, p)| Ok(c * p.expectation(state)?))
            .sum()
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &Observable, beta: f64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(c, p)| (alpha * c, p.clone()))
            .chain(other.terms.iter().map(|(c, p)| (beta * c, p.clone())))
            .collect();
        Self { terms }
    }
}

impl Default for Observable {
    fn default() -> Self {
        Self::zz(0, 1)
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (c, p)) in self.terms.iter().enumerate() {
            if k > 0 {
                f.write_str(" + ")?;
            }
            if *c == 1.0 {
                write!(f, "{p}")?;
            } else {
                write!(f, "{c}*{p}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for Observable {
    type Err = Error;

    /// Parses `Z0Z1`, `0.5*X0 + -1*Z2Z3`, and similar.
    fn from_str(s: &str) -> Result<Self> {
        let terms = s
            .split('+')
            .map(|term| {
                let term = term.trim();
                match term.split_once('*') {
                    Some((c, p)) => {
                        let c: f64 = c.trim().parse().map_err(|_| {
                            Error::Config(format!("bad coefficient in observable term `{term}`"))
                        })?;
                        Ok((c, p.parse()?))
                    }
                    None => Ok((1.0, term.parse()?)),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(terms))
    }
}
