use serde::{Deserialize, Serialize};

use crate::algebra::{c, fidelity_pure, DensityOperator, PauliString, StateVector};
use crate::error::{Error, Result};

/// Fidelity with `|R₅⟩` above which a state is not thermal for any
/// two-body Hamiltonian.
pub const EXCLUSION_FIDELITY: f64 = 31.0 / 32.0;

/// `g_i = σ_z^{(i−1)} σ_x^{(i)} σ_z^{(i+1)}` around a ring of five qubits.
pub fn ring_stabilizers() -> [PauliString; 5] {
    ["xz00z", "zxz00", "0zxz0", "00zxz", "z00zx"].map(|s| s.parse().expect("valid label"))
}

fn apply(p: &PauliString, v: &StateVector) -> StateVector {
    let mut out = StateVector::zeros(v.len());
    for (r, col, e) in p.entries() {
        out[r] += e * v[col];
    }
    out
}

/// The joint `+1` eigenvector of [`ring_stabilizers`], phased so that the
/// `|00000⟩` amplitude is real and positive.
pub fn ring_cluster_5() -> StateVector {
    let mut v = StateVector::zeros(32);
    v[0] = c(1.0, 0.0);
    for g in ring_stabilizers() {
        v = (&v + apply(&g, &v)) * c(0.5, 0.0);
    }
    let phase = v[0] / v[0].norm();
    v.map(|z| z / phase).normalize()
}

/// The locally rotated form with eight amplitudes `±1/√8`; it equals
/// `H ⊗ 𝟙 ⊗ H ⊗ 𝟙 ⊗ 𝟙` applied to [`ring_cluster_5`].
pub fn ring_cluster_5_local_form() -> StateVector {
    let a = 1.0 / 8f64.sqrt();
    let terms = [
        (0b00000, 1.0),
        (0b00110, 1.0),
        (0b01011, -1.0),
        (0b01101, 1.0),
        (0b10001, 1.0),
        (0b10111, -1.0),
        (0b11010, 1.0),
        (0b11100, 1.0),
    ];
    let mut v = StateVector::zeros(32);
    for (i, s) in terms {
        v[i] = c(s * a, 0.0);
    }
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExclusionCheck {
    pub fidelity: f64,
    /// True when `fidelity ≥ 31/32`, which rules out every thermal state of
    /// a two-body Hamiltonian.
    pub excluded: bool,
}

pub fn thermal_exclusion_check(rho: &DensityOperator) -> Result<ExclusionCheck> {
    if rho.qubits() != 5 {
        return Err(Error::DimensionMismatch {
            expected: 32,
            actual: rho.dim(),
        });
    }
    let fidelity = fidelity_pure(&ring_cluster_5(), rho)?;
    Ok(ExclusionCheck {
        fidelity,
        excluded: fidelity >= EXCLUSION_FIDELITY,
    })
}
