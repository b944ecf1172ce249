//! Random states and unitaries for Monte-Carlo checks and certificates.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{c, CMatrix, DensityOperator, HermitianOperator, StateVector};

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Haar-random pure state.
pub fn random_state_vector<R: Rng + ?Sized>(rng: &mut R, qubits: usize) -> StateVector {
    let d = 1usize << qubits;
    let v = StateVector::from_fn(d, |_, _| c(gaussian(rng), gaussian(rng)));
    let norm = v.norm();
    v.map(|z| z / norm)
}

/// Full-rank random state from the Ginibre ensemble.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, qubits: usize) -> DensityOperator {
    let d = 1usize << qubits;
    let g = CMatrix::from_fn(d, d, |_, _| c(gaussian(rng), gaussian(rng)));
    let m = &g * g.adjoint();
    let tr: f64 = (0..d).map(|i| m[(i, i)].re).sum();
    DensityOperator::new_unchecked(HermitianOperator::from_raw_symmetrized(qubits, m.map(|z| z / tr)))
}

/// Random Hermitian matrix with independent Gaussian entries.
pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, qubits: usize) -> HermitianOperator {
    let d = 1usize << qubits;
    let g = CMatrix::from_fn(d, d, |_, _| c(gaussian(rng), gaussian(rng)));
    HermitianOperator::from_raw_symmetrized(qubits, (&g + g.adjoint()).map(|z| z * 0.5))
}

/// Haar-random unitary via QR of a Ginibre matrix with phase correction.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| c(gaussian(rng), gaussian(rng)));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut u = q;
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c(1.0, 0.0) };
        for i in 0..dim {
            u[(i, j)] *= phase;
        }
    }
    u
}
