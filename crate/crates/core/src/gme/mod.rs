//! PPT criterion, bipartite negativity and the PPT-mixture program that
//! certifies genuine multipartite entanglement.

use serde::{Deserialize, Serialize};

use crate::algebra::{c, CMatrix, DensityOperator, HermitianOperator, QubitSet};
use crate::error::{Error, Result};
use crate::sdp::{self, BlockTerm, Equality, LinearFunctional, SdpProblem, SdpSolution, SdpStatus};

/// Eigenvalues of a partial transpose above this count as nonnegative.
pub const PPT_TOL: f64 = 1e-10;
/// Values below this certify genuine multipartite entanglement.
pub const VERDICT_THRESHOLD: f64 = -1e-6;
/// Interior-point tolerance used unless a caller supplies one.
pub const DEFAULT_SOLVER_TOL: f64 = 1e-7;

/// A cut of `qubits` qubits into `side_a` and its complement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bipartition {
    pub qubits: usize,
    pub side_a: QubitSet,
}

impl Bipartition {
    pub fn new(qubits: usize, side_a: QubitSet) -> Result<Self> {
        if side_a.is_empty() || side_a == QubitSet::all(qubits) {
            return Err(Error::InvalidArgument(format!(
                "side {side_a} is not a nonempty proper subset of {qubits} qubits"
            )));
        }
        if let Some(&i) = side_a.indices().iter().find(|&&i| i >= qubits) {
            return Err(Error::SubsystemOutOfRange { index: i, qubits });
        }
        Ok(Bipartition { qubits, side_a })
    }

    pub fn side_b(&self) -> QubitSet {
        self.side_a.complement(self.qubits)
    }

    /// Every cut once (`2^{n−1} − 1` of them), smaller side first; ties keep
    /// the side holding qubit 0. Ordered by side size, then mask.
    pub fn all(qubits: usize) -> Result<Vec<Bipartition>> {
        if !(2..=5).contains(&qubits) {
            return Err(Error::QubitCountOutOfRange(qubits));
        }
        let full = QubitSet::all(qubits).0;
        let mut cuts: Vec<Bipartition> = (1..full)
            .map(QubitSet)
            .filter(|s| {
                let k = s.len();
                2 * k < qubits || (2 * k == qubits && s.contains(0))
            })
            .map(|s| Bipartition { qubits, side_a: s })
            .collect();
        cuts.sort_by_key(|b| (b.side_a.len(), b.side_a.indices()));
        Ok(cuts)
    }
}

impl std::fmt::Display for Bipartition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}|{}", self.side_a, self.side_b())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PptCheck {
    pub is_ppt: bool,
    pub min_eigenvalue: f64,
}

fn check_cut(rho: &DensityOperator, cut: &Bipartition) -> Result<()> {
    if rho.qubits() != cut.qubits {
        return Err(Error::DimensionMismatch {
            expected: 1 << cut.qubits,
            actual: rho.dim(),
        });
    }
    Ok(())
}

pub fn ppt_check(rho: &DensityOperator, cut: &Bipartition) -> Result<PptCheck> {
    check_cut(rho, cut)?;
    let lmin = rho.operator().partial_transpose(cut.side_a)?.min_eigenvalue()?;
    Ok(PptCheck {
        is_ppt: lmin >= -PPT_TOL,
        min_eigenvalue: lmin,
    })
}

/// Sum of the magnitudes of the negative eigenvalues of `ϱ^{T_A}`.
pub fn negativity(rho: &DensityOperator, cut: &Bipartition) -> Result<f64> {
    check_cut(rho, cut)?;
    let e = rho.operator().partial_transpose(cut.side_a)?.eig()?;
    Ok(e.values.iter().filter(|&&v| v < -PPT_TOL).map(|v| -v).sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GmeVerdict {
    PptMixture,
    GenuinelyMultipartiteEntangled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutDecomposition {
    pub cut: Bipartition,
    pub p: HermitianOperator,
    pub q: HermitianOperator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmeCertificate {
    /// `tr(ϱW)`, or `Σ λ_i ⟨A_i⟩` for the expectation-value variant.
    pub value: f64,
    pub witness: HermitianOperator,
    pub decompositions: Vec<CutDecomposition>,
    pub dual_gap: f64,
    pub verdict: GmeVerdict,
}

impl GmeCertificate {
    /// Largest violation of `W = P_m + Q_m^{T_m}`, `P_m ⪰ 0`, `0 ⪯ Q_m ⪯ 𝟙`
    /// over all cuts, recomputed from the stored matrices.
    pub fn constraint_violation(&self) -> Result<f64> {
        let mut worst = 0.0f64;
        for d in &self.decompositions {
            let recon = &d.p + &d.q.partial_transpose(d.cut.side_a)?;
            worst = worst.max(recon.max_abs_diff(&self.witness));
            worst = worst.max(-d.p.min_eigenvalue()?);
            let qe = d.q.eig()?;
            worst = worst.max(-qe.min()).max(qe.max() - 1.0);
        }
        Ok(worst)
    }
}

/// Real coordinates of a `d × d` Hermitian matrix: diagonal entries, then
/// `(Re, Im)` of each upper-triangle entry.
fn coordinates(d: usize) -> Vec<(usize, usize, bool)> {
    let mut out: Vec<(usize, usize, bool)> = (0..d).map(|a| (a, a, false)).collect();
    for a in 0..d {
        for b in a + 1..d {
            out.push((a, b, false));
            out.push((a, b, true));
        }
    }
    out
}

fn coordinate_value(m: &CMatrix, (a, b, imag): (usize, usize, bool)) -> f64 {
    if imag {
        m[(a, b)].im
    } else {
        m[(a, b)].re
    }
}

fn entry_term(block: usize, (a, b, imag): (usize, usize, bool)) -> BlockTerm {
    if imag {
        BlockTerm::im_entry(block, a, b)
    } else {
        BlockTerm::re_entry(block, a, b)
    }
}

/// How `W` is parametrised by the free variables.
enum WitnessSpan<'a> {
    /// One free variable per real coordinate of `W`.
    Full,
    /// `W = Σ λ_i A_i`.
    Span(&'a [HermitianOperator]),
}

/// Blocks `P_m, Q_m, S_m` (indices `3m, 3m+1, 3m+2`) per cut with
/// `P_m + Q_m^{T_m} − W = 0` and `Q_m + S_m = 𝟙`.
fn build_problem(qubits: usize, cuts: &[Bipartition], span: &WitnessSpan, objective: LinearFunctional) -> SdpProblem {
    let d = 1usize << qubits;
    let coords = coordinates(d);
    let span_coords: Vec<Vec<f64>> = match span {
        WitnessSpan::Full => Vec::new(),
        WitnessSpan::Span(ops) => ops
            .iter()
            .map(|a| coords.iter().map(|&k| coordinate_value(a.matrix(), k)).collect())
            .collect(),
    };
    let free_vars = match span {
        WitnessSpan::Full => coords.len(),
        WitnessSpan::Span(ops) => ops.len(),
    };
    let mut equalities = Vec::with_capacity(cuts.len() * 2 * coords.len());
    for (m, cut) in cuts.iter().enumerate() {
        let mask = cut.side_a.index_mask(qubits);
        let (p, q, s) = (3 * m, 3 * m + 1, 3 * m + 2);
        for (k, &(a, b, imag)) in coords.iter().enumerate() {
            // (Q^{T_A})_{ab} = Q_{a'b'} with the A-bits of a and b exchanged.
            let a2 = (a & !mask) | (b & mask);
            let b2 = (b & !mask) | (a & mask);
            let mut f = LinearFunctional::default()
                .block(entry_term(p, (a, b, imag)))
                .block(entry_term(q, (a2, b2, imag)));
            match span {
                WitnessSpan::Full => f = f.free_var(k, -1.0),
                WitnessSpan::Span(_) => {
                    for (i, sc) in span_coords.iter().enumerate() {
                        if sc[k] != 0.0 {
                            f = f.free_var(i, -sc[k]);
                        }
                    }
                }
            }
            equalities.push(Equality { functional: f, rhs: 0.0 });
        }
        for &(a, b, imag) in &coords {
            let f = LinearFunctional::default()
                .block(entry_term(q, (a, b, imag)))
                .block(entry_term(s, (a, b, imag)));
            let rhs = if a == b && !imag { 1.0 } else { 0.0 };
            equalities.push(Equality { functional: f, rhs });
        }
    }
    SdpProblem {
        block_dims: vec![d; 3 * cuts.len()],
        free_vars,
        objective,
        equalities,
        box_bounds: Vec::new(),
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol.is_finite() && tol > 0.0 && tol < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("solver tolerance {tol} must lie in (0, 1)")))
    }
}

/// JSON record of a failed solve: reason, status, iteration count and the
/// full problem, so the failure can be replayed.
fn dump(problem: &SdpProblem, sol: &SdpSolution, reason: &str) -> String {
    serde_json::json!({
        "reason": reason,
        "status": format!("{:?}", sol.status),
        "iterations": sol.iterations,
        "problem": problem,
    })
    .to_string()
}

fn certificate(
    qubits: usize,
    cuts: &[Bipartition],
    problem: &SdpProblem,
    sol: SdpSolution,
    witness: HermitianOperator,
    tol: f64,
) -> Result<GmeCertificate> {
    if !sdp::verify_certificate(problem, &sol, tol) {
        return Err(Error::Solver(dump(problem, &sol, "certificate rejected")));
    }
    let decompositions = cuts
        .iter()
        .enumerate()
        .map(|(m, &cut)| {
            Ok(CutDecomposition {
                cut,
                p: sol.block(3 * m)?,
                q: sol.block(3 * m + 1)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let value = sol.primal_value;
    debug_assert_eq!(witness.qubits(), qubits);
    Ok(GmeCertificate {
        value,
        witness,
        decompositions,
        dual_gap: sol.primal_value - sol.dual_value,
        verdict: if value < VERDICT_THRESHOLD {
            GmeVerdict::GenuinelyMultipartiteEntangled
        } else {
            GmeVerdict::PptMixture
        },
    })
}

/// `min tr(ϱW)` over `W = P_m + Q_m^{T_m}` with `P_m ⪰ 0`, `0 ⪯ Q_m ⪯ 𝟙`
/// for every cut.
pub fn pptmix_sdp(rho: &DensityOperator) -> Result<GmeCertificate> {
    pptmix_sdp_cuts(rho, &Bipartition::all(rho.qubits())?)
}

/// [`pptmix_sdp`] restricted to the given cuts.
pub fn pptmix_sdp_cuts(rho: &DensityOperator, cuts: &[Bipartition]) -> Result<GmeCertificate> {
    pptmix_sdp_cuts_tol(rho, cuts, DEFAULT_SOLVER_TOL)
}

/// [`pptmix_sdp_cuts`] at solver tolerance `tol`.
pub fn pptmix_sdp_cuts_tol(rho: &DensityOperator, cuts: &[Bipartition], tol: f64) -> Result<GmeCertificate> {
    check_tol(tol)?;
    let n = rho.qubits();
    if !(2..=5).contains(&n) {
        return Err(Error::QubitCountOutOfRange(n));
    }
    if cuts.is_empty() {
        return Err(Error::InvalidArgument("no bipartitions given".into()));
    }
    for cut in cuts {
        check_cut(rho, cut)?;
    }
    let d = 1usize << n;
    let coords = coordinates(d);
    let r = rho.matrix();
    let mut objective = LinearFunctional::default();
    for (k, &(a, b, imag)) in coords.iter().enumerate() {
        // tr(ϱW) = Σ_a ϱ_aa W_aa + 2 Σ_{a<b} (Re ϱ_ab Re W_ab + Im ϱ_ab Im W_ab)
        let weight = if a == b { 1.0 } else { 2.0 };
        let v = weight * coordinate_value(r, (a, b, imag));
        if v != 0.0 {
            objective = objective.free_var(k, v);
        }
    }
    let problem = build_problem(n, cuts, &WitnessSpan::Full, objective);
    let sol = sdp::solve(&problem, tol)?;
    if sol.status != SdpStatus::Optimal {
        return Err(Error::Solver(dump(&problem, &sol, "not optimal")));
    }
    let mut w = CMatrix::zeros(d, d);
    for (&(a, b, imag), &v) in coords.iter().zip(&sol.free_values) {
        if imag {
            w[(a, b)] += c(0.0, v);
            w[(b, a)] -= c(0.0, v);
        } else if a == b {
            w[(a, a)] = c(v, 0.0);
        } else {
            w[(a, b)] += c(v, 0.0);
            w[(b, a)] += c(v, 0.0);
        }
    }
    let witness = HermitianOperator::new(w)?;
    certificate(n, cuts, &problem, sol, witness, tol)
}

/// `max(0, −value)` of [`pptmix_sdp`].
pub fn genuine_negativity(rho: &DensityOperator) -> Result<f64> {
    Ok((-pptmix_sdp(rho)?.value).max(0.0))
}

/// PPT-mixture program when only `⟨A_i⟩ = means[i]` are known: the witness
/// is restricted to `W = λ_0 𝟙 + Σ λ_i A_i` and the objective is
/// `λ_0 + Σ λ_i means[i]`. The identity term uses only the normalisation
/// `tr ϱ = 1` and keeps the program strictly feasible.
pub fn pptmix_from_expectations(
    observables: &[HermitianOperator],
    means: &[f64],
    qubits: usize,
) -> Result<GmeCertificate> {
    pptmix_from_expectations_tol(observables, means, qubits, DEFAULT_SOLVER_TOL)
}

/// [`pptmix_from_expectations`] at solver tolerance `tol`.
pub fn pptmix_from_expectations_tol(
    observables: &[HermitianOperator],
    means: &[f64],
    qubits: usize,
    tol: f64,
) -> Result<GmeCertificate> {
    check_tol(tol)?;
    if !(2..=5).contains(&qubits) {
        return Err(Error::QubitCountOutOfRange(qubits));
    }
    if observables.len() != means.len() {
        return Err(Error::DimensionMismatch {
            expected: observables.len(),
            actual: means.len(),
        });
    }
    let mut ops = vec![HermitianOperator::identity(qubits)];
    let mut values = vec![1.0];
    for (a, &m) in observables.iter().zip(means) {
        if a.qubits() != qubits {
            return Err(Error::DimensionMismatch {
                expected: 1 << qubits,
                actual: a.dim(),
            });
        }
        let e = a.eig()?;
        let bound = e.min().abs().max(e.max().abs());
        if !m.is_finite() || m.abs() > bound * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::InfeasibleData(format!(
                "mean {m} lies outside the spectrum range of its observable (±{bound})"
            )));
        }
        ops.push(a.clone());
        values.push(m);
    }
    let cuts = Bipartition::all(qubits)?;
    let mut objective = LinearFunctional::default();
    for (i, &v) in values.iter().enumerate() {
        if v != 0.0 {
            objective = objective.free_var(i, v);
        }
    }
    let problem = build_problem(qubits, &cuts, &WitnessSpan::Span(&ops), objective);
    let sol = sdp::solve(&problem, tol)?;
    match sol.status {
        SdpStatus::Optimal => {}
        SdpStatus::DualInfeasible => {
            return Err(Error::InfeasibleData(
                "no quantum state reproduces the given expectation values".into(),
            ))
        }
        _ => return Err(Error::Solver(dump(&problem, &sol, "not optimal"))),
    }
    let mut witness = HermitianOperator::zeros(qubits);
    for (a, &l) in ops.iter().zip(&sol.free_values) {
        witness.add_scaled(a, l);
    }
    certificate(qubits, &cuts, &problem, sol, witness, tol)
}

#[cfg(test)]
mod tests;
