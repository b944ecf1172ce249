//! Dense complex operator algebra on n-qubit Hilbert spaces.
//!
//! Qubit `0` is the leftmost tensor factor, so it owns the most significant
//! bit of a basis index: `|q0 q1 ... q(n-1)>` has index `q0·2^(n-1) + ... + q(n-1)`.

mod eigen;
mod entropy;
mod pauli;
pub mod random;
pub mod serde_repr;

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use eigen::{eig_hermitian, eig_symmetric, EigenDecomposition, RealEigen};
pub use entropy::{fidelity_pure, relative_entropy, vn_entropy};
pub use pauli::{pauli_assemble, pauli_expand, Pauli, PauliString};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type StateVector = DVector<C64>;

/// Largest supported register.
pub const MAX_QUBITS: usize = 6;

/// Asymmetry absorbed by symmetrisation on construction; anything larger is rejected.
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-10;

pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Number of qubits for a `2^n`-dimensional space.
pub fn qubits_for_dim(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::NotQubitDimension(dim));
    }
    let n = dim.trailing_zeros() as usize;
    if n > MAX_QUBITS {
        return Err(Error::QubitCountOutOfRange(n));
    }
    Ok(n)
}

/// A set of qubit indices stored as a bit mask (bit `i` = qubit `i`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QubitSet(pub u32);

impl QubitSet {
    pub fn from_indices(indices: &[usize]) -> Self {
        QubitSet(indices.iter().fold(0u32, |m, &i| m | (1 << i)))
    }

    pub fn all(qubits: usize) -> Self {
        QubitSet(((1u64 << qubits) - 1) as u32)
    }

    pub fn contains(self, qubit: usize) -> bool {
        self.0 >> qubit & 1 == 1
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn complement(self, qubits: usize) -> Self {
        QubitSet(!self.0 & Self::all(qubits).0)
    }

    pub fn indices(self) -> Vec<usize> {
        (0..32).filter(|&i| self.contains(i)).collect()
    }

    fn check(self, qubits: usize) -> Result<()> {
        if let Some(i) = self.indices().into_iter().find(|&i| i >= qubits) {
            return Err(Error::SubsystemOutOfRange { index: i, qubits });
        }
        Ok(())
    }

    /// Mask over basis-index bits (qubit `q` sits at bit `n-1-q`).
    pub(crate) fn index_mask(self, qubits: usize) -> usize {
        self.indices()
            .into_iter()
            .fold(0usize, |m, q| m | (1 << (qubits - 1 - q)))
    }
}

impl fmt::Display for QubitSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.indices().iter().map(|i| i.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// Hermitian matrix on `qubits` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    qubits: usize,
    mat: CMatrix,
}

impl HermitianOperator {
    /// Builds an operator from a square matrix, symmetrising drift up to
    /// [`HERMITIAN_TOL`] and rejecting anything larger.
    pub fn new(mat: CMatrix) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch {
                expected: mat.nrows(),
                actual: mat.ncols(),
            });
        }
        let qubits = qubits_for_dim(mat.nrows())?;
        let asym = max_asymmetry(&mat);
        if !asym.is_finite() || asym > HERMITIAN_TOL {
            return Err(Error::NotHermitian(asym));
        }
        Ok(Self::from_raw(qubits, symmetrize(mat)))
    }

    /// Internal constructor; caller guarantees Hermiticity up to rounding.
    pub(crate) fn from_raw(qubits: usize, mat: CMatrix) -> Self {
        debug_assert_eq!(mat.nrows(), 1 << qubits);
        HermitianOperator { qubits, mat }
    }

    /// Symmetrises unconditionally. Used where the product of Hermitian
    /// factors is Hermitian in exact arithmetic.
    pub(crate) fn from_raw_symmetrized(qubits: usize, mat: CMatrix) -> Self {
        Self::from_raw(qubits, symmetrize(mat))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let d = rows.len();
        let mat = CMatrix::from_fn(d, d, |i, j| c(rows[i][j], 0.0));
        Self::new(mat)
    }

    pub fn zeros(qubits: usize) -> Self {
        let d = 1 << qubits;
        Self::from_raw(qubits, CMatrix::zeros(d, d))
    }

    pub fn identity(qubits: usize) -> Self {
        let d = 1 << qubits;
        Self::from_raw(qubits, CMatrix::identity(d, d))
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let qubits = qubits_for_dim(values.len())?;
        let v: Vec<C64> = values.iter().map(|&x| c(x, 0.0)).collect();
        Ok(Self::from_raw(
            qubits,
            CMatrix::from_diagonal(&DVector::from_vec(v)),
        ))
    }

    /// `|v><v|` (not normalised).
    pub fn projector(v: &StateVector) -> Result<Self> {
        let qubits = qubits_for_dim(v.len())?;
        Ok(Self::from_raw_symmetrized(qubits, v * v.adjoint()))
    }

    pub fn sigma_x() -> Self {
        Pauli::X.operator()
    }

    pub fn sigma_y() -> Self {
        Pauli::Y.operator()
    }

    pub fn sigma_z() -> Self {
        Pauli::Z.operator()
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.mat[(i, i)].re).sum()
    }

    /// `tr(self · other)`, real for Hermitian arguments.
    pub fn trace_product(&self, other: &HermitianOperator) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                let a = self.mat[(i, j)];
                let b = other.mat[(j, i)];
                acc += a.re * b.re - a.im * b.im;
            }
        }
        acc
    }

    /// `<v|self|v>`.
    pub fn expectation_vector(&self, v: &StateVector) -> f64 {
        (v.adjoint() * &self.mat * v)[(0, 0)].re
    }

    pub fn max_abs(&self) -> f64 {
        self.mat.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Elementwise max-norm distance.
    pub fn max_abs_diff(&self, other: &HermitianOperator) -> f64 {
        self.mat
            .iter()
            .zip(other.mat.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_raw(self.qubits, self.mat.map(|z| z * s))
    }

    pub fn add_scaled(&mut self, other: &HermitianOperator, s: f64) {
        self.mat.zip_apply(&other.mat, |a, b| *a += b * s);
    }

    /// `U · self · U†` for a unitary `u`.
    pub fn conjugate_by(&self, u: &CMatrix) -> Self {
        Self::from_raw_symmetrized(self.qubits, u * &self.mat * u.adjoint())
    }

    pub fn tensor(&self, other: &HermitianOperator) -> Self {
        tensor(self, other)
    }

    pub fn partial_transpose(&self, mask: QubitSet) -> Result<Self> {
        partial_transpose(self, mask)
    }

    pub fn partial_trace(&self, keep: QubitSet) -> Result<Self> {
        partial_trace(self, keep)
    }

    pub fn eig(&self) -> Result<EigenDecomposition> {
        eig_hermitian(self)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eig()?.values[0])
    }
}

impl Add for &HermitianOperator {
    type Output = HermitianOperator;
    fn add(self, rhs: &HermitianOperator) -> HermitianOperator {
        HermitianOperator::from_raw(self.qubits, &self.mat + &rhs.mat)
    }
}

impl Sub for &HermitianOperator {
    type Output = HermitianOperator;
    fn sub(self, rhs: &HermitianOperator) -> HermitianOperator {
        HermitianOperator::from_raw(self.qubits, &self.mat - &rhs.mat)
    }
}

impl Mul<f64> for &HermitianOperator {
    type Output = HermitianOperator;
    fn mul(self, rhs: f64) -> HermitianOperator {
        self.scale(rhs)
    }
}

impl Neg for &HermitianOperator {
    type Output = HermitianOperator;
    fn neg(self) -> HermitianOperator {
        self.scale(-1.0)
    }
}

fn max_asymmetry(m: &CMatrix) -> f64 {
    let d = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in i..d {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn symmetrize(m: CMatrix) -> CMatrix {
    let adj = m.adjoint();
    (m + adj).map(|z| z * 0.5)
}

/// Trace-one positive-semidefinite operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    op: HermitianOperator,
}

impl DensityOperator {
    pub fn new(op: HermitianOperator) -> Result<Self> {
        let tr = op.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidTrace(tr));
        }
        let min = op.min_eigenvalue()?;
        if min < -PSD_TOL {
            return Err(Error::NotPositive(min));
        }
        Ok(DensityOperator { op })
    }

    pub fn from_matrix(mat: CMatrix) -> Result<Self> {
        Self::new(HermitianOperator::new(mat)?)
    }

    /// Skips validation. For operators that are states by construction.
    pub(crate) fn new_unchecked(op: HermitianOperator) -> Self {
        DensityOperator { op }
    }

    pub fn pure(psi: &StateVector) -> Result<Self> {
        let norm = psi.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized(norm));
        }
        Ok(DensityOperator {
            op: HermitianOperator::projector(psi)?,
        })
    }

    pub fn maximally_mixed(qubits: usize) -> Self {
        let d = (1usize << qubits) as f64;
        DensityOperator {
            op: HermitianOperator::identity(qubits).scale(1.0 / d),
        }
    }

    /// `p·self + (1-p)·other`.
    pub fn mix(&self, other: &DensityOperator, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "mixing weight {p} outside [0,1]"
            )));
        }
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        let mut op = self.op.scale(p);
        op.add_scaled(&other.op, 1.0 - p);
        Ok(DensityOperator { op })
    }

    pub fn tensor(&self, other: &DensityOperator) -> Self {
        DensityOperator {
            op: tensor(&self.op, &other.op),
        }
    }

    pub fn partial_trace(&self, keep: QubitSet) -> Result<Self> {
        Ok(DensityOperator {
            op: partial_trace(&self.op, keep)?,
        })
    }

    pub fn conjugate_by(&self, u: &CMatrix) -> Self {
        DensityOperator {
            op: self.op.conjugate_by(u),
        }
    }

    pub fn operator(&self) -> &HermitianOperator {
        &self.op
    }

    pub fn into_operator(self) -> HermitianOperator {
        self.op
    }

    pub fn qubits(&self) -> usize {
        self.op.qubits()
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn matrix(&self) -> &CMatrix {
        self.op.matrix()
    }

    /// `tr(rho · a)`.
    pub fn expectation(&self, a: &HermitianOperator) -> f64 {
        self.op.trace_product(a)
    }
}

/// Kronecker product `a ⊗ b`.
pub fn tensor(a: &HermitianOperator, b: &HermitianOperator) -> HermitianOperator {
    HermitianOperator::from_raw(a.qubits + b.qubits, a.mat.kronecker(&b.mat))
}

/// Kronecker product of state vectors.
pub fn tensor_vectors(a: &StateVector, b: &StateVector) -> StateVector {
    a.kronecker(b)
}

/// Transposes the tensor factors selected by `mask`.
pub fn partial_transpose(rho: &HermitianOperator, mask: QubitSet) -> Result<HermitianOperator> {
    mask.check(rho.qubits)?;
    let m = mask.index_mask(rho.qubits);
    let d = rho.dim();
    let src = &rho.mat;
    let out = CMatrix::from_fn(d, d, |r, col| {
        let r2 = (r & !m) | (col & m);
        let c2 = (col & !m) | (r & m);
        src[(r2, c2)]
    });
    Ok(HermitianOperator::from_raw(rho.qubits, out))
}

/// Reduced operator on `keep`, with kept qubits in ascending index order.
pub fn partial_trace(rho: &HermitianOperator, keep: QubitSet) -> Result<HermitianOperator> {
    if keep.is_empty() {
        return Err(Error::EmptySubsystem);
    }
    keep.check(rho.qubits)?;
    let n = rho.qubits;
    let kept = keep.indices();
    let traced = keep.complement(n).indices();
    let k = kept.len();
    let dk = 1usize << k;
    let dt = 1usize << traced.len();

    let embed = |red: usize, tr: usize| -> usize {
        let mut full = 0usize;
        for (pos, &q) in kept.iter().enumerate() {
            if red >> (k - 1 - pos) & 1 == 1 {
                full |= 1 << (n - 1 - q);
            }
        }
        for (pos, &q) in traced.iter().enumerate() {
            if tr >> (traced.len() - 1 - pos) & 1 == 1 {
                full |= 1 << (n - 1 - q);
            }
        }
        full
    };

    let mut out = CMatrix::zeros(dk, dk);
    for i in 0..dk {
        for j in 0..dk {
            let mut acc = C64::new(0.0, 0.0);
            for t in 0..dt {
                acc += rho.mat[(embed(i, t), embed(j, t))];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(HermitianOperator::from_raw(k, out))
}

/// Computational basis vector `|bits>` on `qubits` qubits.
pub fn basis_state(qubits: usize, index: usize) -> StateVector {
    let mut v = StateVector::zeros(1 << qubits);
    v[index] = c(1.0, 0.0);
    v
}

/// `(|0...0> + |1...1>)/√2`.
pub fn ghz_state(qubits: usize) -> StateVector {
    let d = 1usize << qubits;
    let mut v = StateVector::zeros(d);
    let a = std::f64::consts::FRAC_1_SQRT_2;
    v[0] = c(a, 0.0);
    v[d - 1] = c(a, 0.0);
    v
}

/// Singlet `(|01> - |10>)/√2`.
pub fn singlet_state() -> StateVector {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    StateVector::from_vec(vec![c(0.0, 0.0), c(a, 0.0), c(-a, 0.0), c(0.0, 0.0)])
}

/// `p|psi><psi| + (1-p)𝟙/d`.
pub fn noisy_pure_state(psi: &StateVector, p: f64) -> Result<DensityOperator> {
    let pure = DensityOperator::pure(psi)?;
    let mixed = DensityOperator::maximally_mixed(pure.qubits());
    pure.mix(&mixed, p)
}

/// Tensor product of single-qubit unitaries, qubit 0 first.
pub fn local_unitary(factors: &[CMatrix]) -> CMatrix {
    factors
        .iter()
        .fold(CMatrix::identity(1, 1), |acc, u| acc.kronecker(u))
}

/// Hadamard gate.
pub fn hadamard() -> CMatrix {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_row_slice(2, 2, &[c(a, 0.0), c(a, 0.0), c(a, 0.0), c(-a, 0.0)])
}
