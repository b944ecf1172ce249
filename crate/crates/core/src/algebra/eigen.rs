use nalgebra::DMatrix;

use super::{c, CMatrix, HermitianOperator, C64};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_TOL: f64 = 1e-12;

/// Spectral decomposition `A = V diag(values) V†`, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    /// Unitary; column `i` belongs to `values[i]`.
    pub vectors: CMatrix,
    qubits: usize,
}

impl EigenDecomposition {
    pub fn reconstruct(&self) -> HermitianOperator {
        self.map(|x| x)
    }

    /// `f(A) = V diag(f(values)) V†`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> HermitianOperator {
        let d = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &lam) in self.values.iter().enumerate() {
            let fj = f(lam);
            for i in 0..d {
                scaled[(i, j)] *= fj;
            }
        }
        HermitianOperator::from_raw_symmetrized(self.qubits, scaled * self.vectors.adjoint())
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().expect("nonempty spectrum")
    }
}

/// Cyclic complex Jacobi eigensolver.
///
/// Each rotation zeroes one off-diagonal pair `(p, q)`: a phase is first
/// absorbed so `a_pq` becomes real, then the classic real Jacobi angle is
/// applied. Sweeps stop once the off-diagonal Frobenius norm drops below
/// `1e-12 · max(1, ‖A‖_F)`.
pub fn eig_hermitian(a: &HermitianOperator) -> Result<EigenDecomposition> {
    let d = a.dim();
    let mut m = a.matrix().clone();
    let mut v = CMatrix::identity(d, d);
    let scale = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1.0);
    if !scale.is_finite() {
        return Err(Error::EigenNonConvergence(0));
    }
    let tol = OFF_DIAGONAL_TOL * scale;

    let mut converged = d <= 1;
    for _sweep in 0..MAX_SWEEPS {
        if off_diagonal_norm(&m) <= tol {
            converged = true;
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }
    if !converged {
        if off_diagonal_norm(&m) <= tol {
            converged = true;
        } else {
            return Err(Error::EigenNonConvergence(MAX_SWEEPS));
        }
    }
    debug_assert!(converged);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| m[(i, i)].re.total_cmp(&m[(j, j)].re));
    let values = order.iter().map(|&i| m[(i, i)].re).collect();
    let vectors = CMatrix::from_fn(d, d, |r, col| v[(r, order[col])]);
    Ok(EigenDecomposition {
        values,
        vectors,
        qubits: a.qubits(),
    })
}

fn off_diagonal_norm(m: &CMatrix) -> f64 {
    let d = m.nrows();
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                acc += m[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

fn rotate(m: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize) {
    let apq = m[(p, q)];
    let b = apq.norm();
    if b < 1e-300 {
        return;
    }
    let phase = apq / b;
    let app = m[(p, p)].re;
    let aqq = m[(q, q)].re;
    let tau = (aqq - app) / (2.0 * b);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let cs = 1.0 / (1.0 + t * t).sqrt();
    let sn = t * cs;

    // U = D G D† with D = diag(.., phase* at q, ..); only the 2×2 block differs from 𝟙.
    let u_pp = c(cs, 0.0);
    let u_pq = phase * sn;
    let u_qp = -phase.conj() * sn;
    let u_qq = c(cs, 0.0);

    let d = m.nrows();
    for k in 0..d {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = mkp * u_pp + mkq * u_qp;
        m[(k, q)] = mkp * u_pq + mkq * u_qq;
    }
    for k in 0..d {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = u_pp.conj() * mpk + u_qp.conj() * mqk;
        m[(q, k)] = u_pq.conj() * mpk + u_qq.conj() * mqk;
    }
    m[(p, q)] = C64::new(0.0, 0.0);
    m[(q, p)] = C64::new(0.0, 0.0);
    m[(p, p)] = c(m[(p, p)].re, 0.0);
    m[(q, q)] = c(m[(q, q)].re, 0.0);

    for k in 0..d {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * u_pp + vkq * u_qp;
        v[(k, q)] = vkp * u_pq + vkq * u_qq;
    }
}

/// Spectral decomposition of a real symmetric matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct RealEigen {
    pub values: Vec<f64>,
    /// Orthogonal; column `i` belongs to `values[i]`.
    pub vectors: DMatrix<f64>,
}

/// Cyclic real Jacobi with the same stopping rule as [`eig_hermitian`].
///
/// Pairs whose entry is already below `tol / d` are skipped, which makes
/// nearly diagonal inputs cheap. The input is symmetrised first.
pub fn eig_symmetric(a: &DMatrix<f64>) -> Result<RealEigen> {
    let d = a.nrows();
    if a.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: a.ncols(),
        });
    }
    let mut m = (a + a.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(d, d);
    let scale = m.norm().max(1.0);
    if !scale.is_finite() {
        return Err(Error::EigenNonConvergence(0));
    }
    let tol = OFF_DIAGONAL_TOL * scale;
    let skip = tol / (d.max(1) as f64);

    let off = |m: &DMatrix<f64>| {
        let mut acc = 0.0;
        for j in 0..d {
            for i in 0..d {
                if i != j {
                    acc += m[(i, j)] * m[(i, j)];
                }
            }
        }
        acc.sqrt()
    };
    let mut sweeps = 0;
    while off(&m) > tol {
        if sweeps == MAX_SWEEPS {
            return Err(Error::EigenNonConvergence(MAX_SWEEPS));
        }
        sweeps += 1;
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m[(p, q)];
                if apq.abs() <= skip {
                    continue;
                }
                let tau = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * cs;
                for k in 0..d {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = cs * mkp - sn * mkq;
                    m[(k, q)] = sn * mkp + cs * mkq;
                }
                for k in 0..d {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = cs * mpk - sn * mqk;
                    m[(q, k)] = sn * mpk + cs * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..d {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = cs * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + cs * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    Ok(RealEigen {
        values: order.iter().map(|&i| m[(i, i)]).collect(),
        vectors: DMatrix::from_fn(d, d, |r, col| v[(r, order[col])]),
    })
}
