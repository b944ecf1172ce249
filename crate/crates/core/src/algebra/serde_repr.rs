//! Serde forms: complex numbers as `[re, im]`, matrices as rows of them.
//! Deserialisation validates through the checked constructors.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{c, CMatrix, DensityOperator, HermitianOperator, StateVector};

#[derive(Serialize, Deserialize)]
struct OperatorRepr {
    qubits: usize,
    matrix: Vec<Vec<[f64; 2]>>,
}

pub fn matrix_to_rows(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn rows_to_matrix(rows: &[Vec<[f64; 2]>]) -> Result<CMatrix, String> {
    let n = rows.len();
    if let Some(bad) = rows.iter().position(|r| r.len() != n) {
        return Err(format!("row {bad} has {} entries, expected {n}", rows[bad].len()));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| c(rows[i][j][0], rows[i][j][1])))
}

pub fn vector_to_pairs(v: &StateVector) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

pub fn pairs_to_vector(p: &[[f64; 2]]) -> StateVector {
    StateVector::from_iterator(p.len(), p.iter().map(|z| c(z[0], z[1])))
}

fn parse<'de, D: Deserializer<'de>>(d: D) -> Result<HermitianOperator, D::Error> {
    let repr = OperatorRepr::deserialize(d)?;
    let m = rows_to_matrix(&repr.matrix).map_err(D::Error::custom)?;
    let op = HermitianOperator::new(m).map_err(D::Error::custom)?;
    if op.qubits() != repr.qubits {
        return Err(D::Error::custom(format!(
            "qubits = {} but the matrix is {}x{}",
            repr.qubits,
            op.dim(),
            op.dim()
        )));
    }
    Ok(op)
}

impl Serialize for HermitianOperator {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        OperatorRepr {
            qubits: self.qubits(),
            matrix: matrix_to_rows(self.matrix()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for HermitianOperator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        parse(d)
    }
}

impl Serialize for DensityOperator {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.operator().serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityOperator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        DensityOperator::new(parse(d)?).map_err(D::Error::custom)
    }
}
