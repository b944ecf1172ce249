use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{c, CMatrix, HermitianOperator, StateVector, C64};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const AXES: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn symbol(self) -> char {
        match self {
            Pauli::I => '0',
            Pauli::X => 'x',
            Pauli::Y => 'y',
            Pauli::Z => 'z',
        }
    }

    pub fn from_symbol(ch: char) -> Option<Self> {
        match ch {
            '0' | 'I' | 'i' => Some(Pauli::I),
            'x' | 'X' => Some(Pauli::X),
            'y' | 'Y' => Some(Pauli::Y),
            'z' | 'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn operator(self) -> HermitianOperator {
        let o = c(0.0, 0.0);
        let l = c(1.0, 0.0);
        let m = match self {
            Pauli::I => CMatrix::from_row_slice(2, 2, &[l, o, o, l]),
            Pauli::X => CMatrix::from_row_slice(2, 2, &[o, l, l, o]),
            Pauli::Y => CMatrix::from_row_slice(2, 2, &[o, c(0.0, -1.0), c(0.0, 1.0), o]),
            Pauli::Z => CMatrix::from_row_slice(2, 2, &[l, o, o, -l]),
        };
        HermitianOperator::from_raw(1, m)
    }

    /// Eigenvector for eigenvalue `+1` (`plus = true`) or `-1`.
    pub fn eigenvector(self, plus: bool) -> StateVector {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let (x, y) = match (self, plus) {
            (Pauli::X, true) => (c(a, 0.0), c(a, 0.0)),
            (Pauli::X, false) => (c(a, 0.0), c(-a, 0.0)),
            (Pauli::Y, true) => (c(a, 0.0), c(0.0, a)),
            (Pauli::Y, false) => (c(a, 0.0), c(0.0, -a)),
            (Pauli::Z | Pauli::I, true) => (c(1.0, 0.0), c(0.0, 0.0)),
            (Pauli::Z | Pauli::I, false) => (c(0.0, 0.0), c(1.0, 0.0)),
        };
        StateVector::from_vec(vec![x, y])
    }
}

/// Tensor product of single-qubit Paulis, qubit 0 first. Written over the
/// alphabet `{0, x, y, z}`, e.g. `"z0x"`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    labels: Vec<Pauli>,
}

impl PauliString {
    pub fn new(labels: Vec<Pauli>) -> Self {
        PauliString { labels }
    }

    pub fn identity(qubits: usize) -> Self {
        PauliString {
            labels: vec![Pauli::I; qubits],
        }
    }

    /// Single non-identity factor `p` on `qubit`.
    pub fn single(qubits: usize, qubit: usize, p: Pauli) -> Self {
        let mut s = Self::identity(qubits);
        s.labels[qubit] = p;
        s
    }

    /// All `4^n` strings in lexicographic order (`0 < x < y < z`).
    pub fn all(qubits: usize) -> Vec<PauliString> {
        (0..1usize << (2 * qubits))
            .map(|code| {
                let labels = (0..qubits)
                    .map(|q| Pauli::ALL[code >> (2 * (qubits - 1 - q)) & 3])
                    .collect();
                PauliString { labels }
            })
            .collect()
    }

    /// Strings with `1 <= weight <= k`, lexicographic.
    pub fn up_to_weight(qubits: usize, k: usize) -> Vec<PauliString> {
        Self::all(qubits)
            .into_iter()
            .filter(|p| (1..=k).contains(&p.weight()))
            .collect()
    }

    pub fn labels(&self) -> &[Pauli] {
        &self.labels
    }

    pub fn qubits(&self) -> usize {
        self.labels.len()
    }

    pub fn weight(&self) -> usize {
        self.labels.iter().filter(|&&p| p != Pauli::I).count()
    }

    pub fn is_identity(&self) -> bool {
        self.weight() == 0
    }

    /// Basis-index bits flipped by the string (X or Y factors).
    pub fn x_mask(&self) -> usize {
        let n = self.labels.len();
        self.labels.iter().enumerate().fold(0, |m, (q, p)| match p {
            Pauli::X | Pauli::Y => m | (1 << (n - 1 - q)),
            _ => m,
        })
    }

    /// Basis-index bits carrying a sign (Z or Y factors).
    pub fn z_mask(&self) -> usize {
        let n = self.labels.len();
        self.labels.iter().enumerate().fold(0, |m, (q, p)| match p {
            Pauli::Z | Pauli::Y => m | (1 << (n - 1 - q)),
            _ => m,
        })
    }

    fn y_phase(&self) -> C64 {
        let ny = self.labels.iter().filter(|&&p| p == Pauli::Y).count();
        [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)][ny % 4]
    }

    /// Nonzero entries `(row, col, value)`: exactly one per column.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        let xm = self.x_mask();
        let zm = self.z_mask();
        let phase = self.y_phase();
        (0..1usize << self.labels.len()).map(move |j| {
            let sign = if (j & zm).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            (j ^ xm, j, phase * sign)
        })
    }

    pub fn operator(&self) -> HermitianOperator {
        let d = 1usize << self.labels.len();
        let mut m = CMatrix::zeros(d, d);
        for (r, col, v) in self.entries() {
            m[(r, col)] = v;
        }
        HermitianOperator::from_raw(self.labels.len(), m)
    }

    /// `tr(a · P)`.
    pub fn trace_with(&self, a: &HermitianOperator) -> f64 {
        let m = a.matrix();
        self.entries().map(|(r, col, v)| (m[(col, r)] * v).re).sum()
    }

    /// True when every non-identity factor of `self` matches `setting`.
    pub fn is_restriction_of(&self, setting: &[Pauli]) -> bool {
        self.labels
            .iter()
            .zip(setting)
            .all(|(&p, &s)| p == Pauli::I || p == s)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.labels.iter().map(|p| p.symbol()).collect();
        f.write_str(&s)
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let labels = s
            .chars()
            .map(|ch| {
                Pauli::from_symbol(ch)
                    .ok_or_else(|| Error::InvalidArgument(format!("bad Pauli symbol {ch:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if labels.is_empty() {
            return Err(Error::InvalidArgument("empty Pauli string".into()));
        }
        Ok(PauliString { labels })
    }
}

impl Serialize for PauliString {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Coefficients `λ_P = tr(a·P)/2^n`, so that `a = Σ λ_P P`. Zero
/// coefficients (below 1e-15 in magnitude) are omitted.
pub fn pauli_expand(a: &HermitianOperator) -> BTreeMap<PauliString, f64> {
    let d = a.dim() as f64;
    PauliString::all(a.qubits())
        .into_iter()
        .filter_map(|p| {
            let v = p.trace_with(a) / d;
            (v.abs() > 1e-15).then_some((p, v))
        })
        .collect()
}

/// Inverse of [`pauli_expand`]: `Σ λ_P P`.
pub fn pauli_assemble(qubits: usize, coeffs: &BTreeMap<PauliString, f64>) -> Result<HermitianOperator> {
    let d = 1usize << qubits;
    let mut m = CMatrix::zeros(d, d);
    for (p, &v) in coeffs {
        if p.qubits() != qubits {
            return Err(Error::DimensionMismatch {
                expected: qubits,
                actual: p.qubits(),
            });
        }
        for (r, col, e) in p.entries() {
            m[(r, col)] += e * v;
        }
    }
    Ok(HermitianOperator::from_raw_symmetrized(qubits, m))
}
