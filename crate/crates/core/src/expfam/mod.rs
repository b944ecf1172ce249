//! Exponential families of k-local thermal states, the information
//! projection onto them and the complexity measure `D_k`.

mod ring;

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{
    c, relative_entropy, vn_entropy, CMatrix, DensityOperator, EigenDecomposition, HermitianOperator, PauliString,
    QubitSet,
};
use crate::error::{Error, Result};

pub use ring::{
    ring_cluster_5, ring_cluster_5_local_form, ring_stabilizers, thermal_exclusion_check, ExclusionCheck,
    EXCLUSION_FIDELITY,
};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 5000;
/// Bound on `‖H‖_max` for [`thermal_state`] and on each coefficient during
/// the projection.
pub const COEFFICIENT_CAP: f64 = 50.0;
pub const MAX_QUBITS: usize = 6;

/// `H = Σ θ_P P` over Pauli strings of weight `1..=k`. The normaliser `ν`
/// with `tr exp(H + ν𝟙) = 1` is derived, see [`LocalHamiltonian::normalizer`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawHamiltonian")]
pub struct LocalHamiltonian {
    qubits: usize,
    k: usize,
    coefficients: BTreeMap<PauliString, f64>,
}

#[derive(Deserialize)]
struct RawHamiltonian {
    qubits: usize,
    k: usize,
    coefficients: BTreeMap<PauliString, f64>,
}

impl TryFrom<RawHamiltonian> for LocalHamiltonian {
    type Error = Error;

    fn try_from(r: RawHamiltonian) -> Result<Self> {
        LocalHamiltonian::new(r.qubits, r.k, r.coefficients)
    }
}

impl LocalHamiltonian {
    pub fn new(qubits: usize, k: usize, coefficients: BTreeMap<PauliString, f64>) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&qubits) {
            return Err(Error::QubitCountOutOfRange(qubits));
        }
        if !(1..=qubits).contains(&k) {
            return Err(Error::InvalidArgument(format!("locality {k} outside 1..={qubits}")));
        }
        for (p, v) in &coefficients {
            if p.qubits() != qubits {
                return Err(Error::DimensionMismatch {
                    expected: qubits,
                    actual: p.qubits(),
                });
            }
            if !(1..=k).contains(&p.weight()) {
                return Err(Error::InvalidArgument(format!("string {p} has weight {} outside 1..={k}", p.weight())));
            }
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("coefficient of {p} is {v}")));
            }
        }
        Ok(LocalHamiltonian { qubits, k, coefficients })
    }

    pub fn zero(qubits: usize, k: usize) -> Result<Self> {
        Self::new(qubits, k, BTreeMap::new())
    }

    /// Independent uniform coefficients in `[−scale, scale]` on every string
    /// of weight `1..=k`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, qubits: usize, k: usize, scale: f64) -> Result<Self> {
        let coefficients = PauliString::up_to_weight(qubits, k)
            .into_iter()
            .map(|p| (p, rng.gen_range(-scale..=scale)))
            .collect();
        Self::new(qubits, k, coefficients)
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn coefficients(&self) -> &BTreeMap<PauliString, f64> {
        &self.coefficients
    }

    /// `Σ θ_P P`, without the normaliser.
    pub fn operator(&self) -> HermitianOperator {
        crate::algebra::pauli_assemble(self.qubits, &self.coefficients)
            .expect("strings were checked against the qubit count")
    }

    /// `ν = −ln tr exp(H)`.
    pub fn normalizer(&self) -> Result<f64> {
        Ok(-Gibbs::new(&self.operator())?.log_z)
    }
}

/// Spectral data of `exp(H)/Z`.
struct Gibbs {
    eig: EigenDecomposition,
    p: Vec<f64>,
    log_z: f64,
}

impl Gibbs {
    fn new(h: &HermitianOperator) -> Result<Gibbs> {
        let eig = h.eig()?;
        let top = eig.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = eig.values.iter().map(|&l| (l - top).exp()).collect();
        let sum: f64 = w.iter().sum();
        let p = w.iter().map(|x| x / sum).collect();
        Ok(Gibbs {
            eig,
            p,
            log_z: top + sum.ln(),
        })
    }

    fn state(&self, qubits: usize) -> DensityOperator {
        let v = &self.eig.vectors;
        let d = v.nrows();
        let mut scaled = v.clone();
        for (j, &pj) in self.p.iter().enumerate() {
            scaled.column_mut(j).scale_mut(pj);
        }
        let m = scaled * v.adjoint();
        debug_assert_eq!(d, 1 << qubits);
        DensityOperator::new_unchecked(HermitianOperator::from_raw_symmetrized(qubits, m))
    }

    /// Kubo–Mori weights `(p_i − p_j)/(λ_i − λ_j)`, with limit `p_i` on
    /// degenerate pairs.
    fn kubo_mori(&self) -> DMatrix<f64> {
        let l = &self.eig.values;
        let d = l.len();
        DMatrix::from_fn(d, d, |i, j| {
            let (hi, lo) = if self.p[i] >= self.p[j] { (i, j) } else { (j, i) };
            let gap = l[hi] - l[lo];
            if gap < 1e-12 {
                self.p[hi]
            } else {
                self.p[hi] * (-(-gap).exp_m1()) / gap
            }
        })
    }
}

/// `exp(H)/tr exp(H)` via the eigendecomposition.
pub fn thermal_state(h: &LocalHamiltonian) -> Result<DensityOperator> {
    let op = h.operator();
    let size = op.max_abs();
    if size > COEFFICIENT_CAP {
        return Err(Error::HamiltonianOverflow(size));
    }
    Ok(Gibbs::new(&op)?.state(h.qubits))
}

fn check_locality(rho: &DensityOperator, k: usize, strict: bool) -> Result<usize> {
    let n = rho.qubits();
    if n > MAX_QUBITS {
        return Err(Error::QubitCountOutOfRange(n));
    }
    let hi = if strict { n.saturating_sub(1) } else { n };
    if k < 1 || k > hi {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={hi} for {n} qubits")));
    }
    Ok(n)
}

/// `tr(ϱP)` for every string of weight `1..=k`.
pub fn marginal_expectations(rho: &DensityOperator, k: usize) -> Result<BTreeMap<PauliString, f64>> {
    let n = check_locality(rho, k, false)?;
    Ok(PauliString::up_to_weight(n, k)
        .into_iter()
        .map(|p| {
            let v = p.trace_with(rho.operator());
            (p, v)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoProjection {
    pub state: DensityOperator,
    pub hamiltonian: LocalHamiltonian,
    /// Largest `|⟨P⟩_ϱ̃ − ⟨P⟩_ϱ|` over strings of weight `1..=k`.
    pub marginal_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximiser of the concave dual `⟨H_θ⟩_ϱ − ln tr exp(H_θ)`; its gradient
/// is the marginal mismatch and its Hessian the negative Kubo–Mori
/// covariance. Damped Newton steps with Armijo backtracking, falling back
/// to the gradient when the Newton direction fails.
///
/// Convergence needs the residual below `tol` and `‖θ‖₁ · residual` below
/// 1e-9, so that `D(ϱ‖ϱ̃) = S(ϱ̃) − S(ϱ)` holds to that accuracy.
pub fn info_projection(rho: &DensityOperator, k: usize, tol: f64, max_iter: usize) -> Result<InfoProjection> {
    let n = check_locality(rho, k, true)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol = {tol} must be positive")));
    }
    let strings = PauliString::up_to_weight(n, k);
    let target = DVector::from_iterator(strings.len(), strings.iter().map(|p| p.trace_with(rho.operator())));
    let ops: Vec<HermitianOperator> = strings.iter().map(|p| p.operator()).collect();
    let assemble = |theta: &DVector<f64>| {
        let mut h = HermitianOperator::zeros(n);
        for (a, &t) in ops.iter().zip(theta.iter()) {
            if t != 0.0 {
                h.add_scaled(a, t);
            }
        }
        h
    };
    let dual = |theta: &DVector<f64>, g: &Gibbs| theta.dot(&target) - g.log_z;

    let mut theta = DVector::zeros(strings.len());
    let mut gibbs = Gibbs::new(&assemble(&theta))?;
    let mut iterations = 0;
    let mut residual;
    let mut converged = false;
    loop {
        let rotated: Vec<CMatrix> = ops
            .iter()
            .map(|a| gibbs.eig.vectors.adjoint() * a.matrix() * &gibbs.eig.vectors)
            .collect();
        let mean = DVector::from_iterator(
            ops.len(),
            rotated
                .iter()
                .map(|r| r.diagonal().iter().zip(&gibbs.p).map(|(x, p)| x.re * p).sum::<f64>()),
        );
        let grad = &target - &mean;
        residual = grad.amax();
        if residual <= tol && theta.lp_norm(1) * residual <= 1e-9 {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let km = gibbs.kubo_mori();
        let weighted: Vec<CMatrix> = rotated
            .iter()
            .map(|r| r.zip_map(&km, |z, w| z * c(w, 0.0)))
            .collect();
        let m = ops.len();
        let mut hess = DMatrix::from_fn(m, m, |a, b| {
            if b < a {
                return 0.0;
            }
            rotated[a].iter().zip(weighted[b].iter()).map(|(x, y)| (x.conj() * y).re).sum::<f64>()
                - mean[a] * mean[b]
        });
        hess.fill_lower_triangle_with_upper_triangle();
        let shift = 1e-12 * hess.diagonal().amax().max(1e-300);
        for i in 0..m {
            hess[(i, i)] += shift;
        }
        let newton = Cholesky::new(hess).map(|ch| ch.solve(&grad));

        let current = dual(&theta, &gibbs);
        let mut moved = false;
        for dir in newton.into_iter().chain(std::iter::once(grad.clone())) {
            let slope = grad.dot(&dir);
            if !(slope > 0.0) {
                continue;
            }
            // Below this the predicted gain is lost in the rounding of the
            // dual value, so the Newton step is taken as is.
            let exact = slope < 1e-13 * (1.0 + current.abs());
            let mut step = 1.0;
            while step > 1e-12 {
                let trial = (&theta + &dir * step).map(|t| t.clamp(-COEFFICIENT_CAP, COEFFICIENT_CAP));
                let g = Gibbs::new(&assemble(&trial))?;
                if exact || dual(&trial, &g) >= current + 1e-4 * step * slope {
                    theta = trial;
                    gibbs = g;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if moved {
                break;
            }
        }
        if !moved {
            break;
        }
    }

    let coefficients = strings.iter().cloned().zip(theta.iter().copied()).collect();
    Ok(InfoProjection {
        state: gibbs.state(n),
        hamiltonian: LocalHamiltonian::new(n, k, coefficients)?,
        marginal_residual: residual,
        iterations,
        converged,
    })
}

fn converged_projection(rho: &DensityOperator, k: usize, tol: f64) -> Result<InfoProjection> {
    let proj = info_projection(rho, k, tol, DEFAULT_MAX_ITER)?;
    if !proj.converged {
        return Err(Error::NotConverged {
            iterations: proj.iterations,
            residual: proj.marginal_residual,
        });
    }
    Ok(proj)
}

/// `D_k(ϱ‖Q_k) = D(ϱ‖ϱ̃_k)` in bits.
pub fn d_k(rho: &DensityOperator, k: usize, tol: f64) -> Result<f64> {
    let proj = converged_projection(rho, k, tol)?;
    let d = relative_entropy(rho, &proj.state)?;
    let by_entropy = vn_entropy(&proj.state)? - vn_entropy(rho)?;
    if (d - by_entropy).abs() > 1e-6 {
        return Err(Error::NotConverged {
            iterations: proj.iterations,
            residual: proj.marginal_residual,
        });
    }
    Ok(d)
}

/// `Σ_i S(ϱ_i) − S(ϱ)`, the closed form of `D_1`.
pub fn multi_information(rho: &DensityOperator) -> Result<f64> {
    let mut sum = 0.0;
    for q in 0..rho.qubits() {
        sum += vn_entropy(&rho.partial_trace(QubitSet(1 << q))?)?;
    }
    Ok(sum - vn_entropy(rho)?)
}

/// Whether `log η` has no Pauli component of weight above `k`.
fn in_family(eta: &DensityOperator, k: usize) -> Result<bool> {
    let e = eta.operator().eig()?;
    if e.min() <= 0.0 {
        return Ok(false);
    }
    let log = e.map(f64::ln);
    let coeffs = crate::algebra::pauli_expand(&log);
    let scale = coeffs.values().fold(1.0f64, |a, v| a.max(v.abs()));
    Ok(coeffs.iter().all(|(p, v)| p.weight() <= k || v.abs() <= 1e-8 * scale))
}

/// `|D(ϱ‖η) − D(ϱ‖ϱ̃_k) − D(ϱ̃_k‖η)|` for `η ∈ Q_k`.
pub fn pythagorean_residual(rho: &DensityOperator, eta: &DensityOperator, k: usize, tol: f64) -> Result<f64> {
    check_locality(rho, k, true)?;
    if eta.qubits() != rho.qubits() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            actual: eta.dim(),
        });
    }
    if !in_family(eta, k)? {
        return Err(Error::InvalidArgument(format!("η is not a full-rank thermal state of a {k}-local Hamiltonian")));
    }
    let proj = converged_projection(rho, k, tol)?;
    let whole = relative_entropy(rho, eta)?;
    let first = relative_entropy(rho, &proj.state)?;
    let second = relative_entropy(&proj.state, eta)?;
    Ok((whole - first - second).abs())
}

#[cfg(test)]
mod tests;
