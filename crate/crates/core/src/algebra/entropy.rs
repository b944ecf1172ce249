use super::{DensityOperator, StateVector};
use crate::error::{Error, Result};

/// Eigenvalues at or below this count as exact zeros in entropies.
const ZERO_EIGENVALUE: f64 = 1e-14;
/// Support threshold for relative entropy.
const SUPPORT_TOL: f64 = 1e-12;

fn xlog2x(x: f64) -> f64 {
    if x <= ZERO_EIGENVALUE {
        0.0
    } else {
        x * x.log2()
    }
}

/// Von Neumann entropy in bits.
pub fn vn_entropy(rho: &DensityOperator) -> Result<f64> {
    let e = rho.operator().eig()?;
    Ok(-e.values.iter().map(|&x| xlog2x(x)).sum::<f64>())
}

/// `D(rho‖eta) = tr[rho log2 rho] - tr[rho log2 eta]` in bits; `+∞` when the
/// support of `rho` is not contained in that of `eta`.
pub fn relative_entropy(rho: &DensityOperator, eta: &DensityOperator) -> Result<f64> {
    if rho.dim() != eta.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            actual: eta.dim(),
        });
    }
    let er = rho.operator().eig()?;
    let ee = eta.operator().eig()?;
    let d = rho.dim();

    // Weight of rho on each eigenvector of eta: <v_j|rho|v_j>.
    let rho_m = rho.matrix();
    let mut cross = 0.0;
    let mut outside_support = 0.0;
    for j in 0..d {
        let v = ee.vectors.column(j);
        let w = (v.adjoint() * rho_m * v)[(0, 0)].re;
        let mu = ee.values[j];
        if mu <= SUPPORT_TOL {
            outside_support += w.max(0.0);
        } else {
            cross += w * mu.log2();
        }
    }
    if outside_support > SUPPORT_TOL {
        return Ok(f64::INFINITY);
    }
    let neg_entropy: f64 = er.values.iter().map(|&x| xlog2x(x)).sum();
    Ok(neg_entropy - cross)
}

/// `<psi|rho|psi>`, unclamped.
pub fn fidelity_pure(psi: &StateVector, rho: &DensityOperator) -> Result<f64> {
    if psi.len() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            actual: psi.len(),
        });
    }
    let norm = psi.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized(norm));
    }
    Ok(rho.operator().expectation_vector(psi))
}
