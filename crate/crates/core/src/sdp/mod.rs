//! Dense semidefinite programs over Hermitian blocks with certificates.
//!
//! Problems are stated as
//!
//! ```text
//! minimise   Σ_b tr(C_b X_b) + fᵀu
//! subject to Σ_b tr(A_jb X_b) + B_j u = b_j   for every equality j
//!            X_b ⪰ 0,  lo ≤ u ≤ hi
//! ```
//!
//! with Hermitian `C_b`, `A_jb`. The dual is
//!
//! ```text
//! maximise   bᵀy + loᵀν⁺ − hiᵀν⁻
//! subject to C_b − Σ_j y_j A_jb ⪰ 0,   f − Bᵀy = ν⁺ − ν⁻,   ν± ≥ 0
//! ```
//!
//! where `ν⁺_i` (`ν⁻_i`) must vanish when `lo_i` (`hi_i`) is infinite.

mod ipm;
mod standard;

use serde::{Deserialize, Serialize};

use crate::algebra::{c, CMatrix, HermitianOperator, C64};
use crate::error::{Error, Result};

pub use ipm::SolverOptions;

/// Largest supported block dimension.
pub const MAX_BLOCK_DIM: usize = 64;
pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Hermitian coefficient matrix acting on one block, listed entry by entry.
/// Repeated positions add up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockTerm {
    pub block: usize,
    pub entries: Vec<(usize, usize, C64)>,
}

impl BlockTerm {
    /// The functional `X ↦ tr(C X)` for a dense Hermitian `C`.
    pub fn dense(block: usize, m: &CMatrix) -> Self {
        let mut entries = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != c(0.0, 0.0) {
                    entries.push((i, j, m[(i, j)]));
                }
            }
        }
        BlockTerm { block, entries }
    }

    /// `X ↦ Re X_ab`.
    pub fn re_entry(block: usize, a: usize, b: usize) -> Self {
        if a == b {
            return BlockTerm { block, entries: vec![(a, a, c(1.0, 0.0))] };
        }
        BlockTerm {
            block,
            entries: vec![(a, b, c(0.5, 0.0)), (b, a, c(0.5, 0.0))],
        }
    }

    /// `X ↦ Im X_ab`; zero on the diagonal.
    pub fn im_entry(block: usize, a: usize, b: usize) -> Self {
        if a == b {
            return BlockTerm { block, entries: Vec::new() };
        }
        BlockTerm {
            block,
            entries: vec![(a, b, c(0.0, 0.5)), (b, a, c(0.0, -0.5))],
        }
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for e in &mut self.entries {
            e.2 *= s;
        }
        self
    }

    /// `tr(C X)`.
    pub fn eval(&self, x: &CMatrix) -> f64 {
        self.entries.iter().map(|&(i, j, v)| (v * x[(j, i)]).re).sum()
    }

    fn to_dense(&self, dim: usize) -> CMatrix {
        let mut m = CMatrix::zeros(dim, dim);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }
}

/// Real-linear functional over `(blocks, free variables)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearFunctional {
    pub blocks: Vec<BlockTerm>,
    pub free: Vec<(usize, f64)>,
}

impl LinearFunctional {
    pub fn block(mut self, term: BlockTerm) -> Self {
        self.blocks.push(term);
        self
    }

    pub fn free_var(mut self, index: usize, coeff: f64) -> Self {
        self.free.push((index, coeff));
        self
    }

    pub fn eval(&self, blocks: &[CMatrix], free: &[f64]) -> f64 {
        self.blocks.iter().map(|t| t.eval(&blocks[t.block])).sum::<f64>()
            + self.free.iter().map(|&(i, v)| v * free[i]).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equality {
    pub functional: LinearFunctional,
    pub rhs: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    /// Dimensions of the Hermitian PSD blocks.
    pub block_dims: Vec<usize>,
    pub free_vars: usize,
    /// Minimised.
    pub objective: LinearFunctional,
    pub equalities: Vec<Equality>,
    /// Either empty (all free variables unbounded) or one `(lo, hi)` per free
    /// variable; infinite ends are allowed.
    pub box_bounds: Vec<(f64, f64)>,
}

impl SdpProblem {
    pub fn bounds(&self, i: usize) -> (f64, f64) {
        self.box_bounds.get(i).copied().unwrap_or((f64::NEG_INFINITY, f64::INFINITY))
    }

    pub fn validate(&self) -> Result<()> {
        for (b, &d) in self.block_dims.iter().enumerate() {
            if d == 0 || d > MAX_BLOCK_DIM {
                return Err(Error::InvalidProblem(format!("block {b} has dimension {d}")));
            }
        }
        if !self.box_bounds.is_empty() && self.box_bounds.len() != self.free_vars {
            return Err(Error::InvalidProblem(format!(
                "{} box bounds for {} free variables",
                self.box_bounds.len(),
                self.free_vars
            )));
        }
        for (i, &(lo, hi)) in self.box_bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(Error::InvalidProblem(format!("bad bounds [{lo}, {hi}] on free variable {i}")));
            }
        }
        let check = |f: &LinearFunctional, what: &str| -> Result<()> {
            for t in &f.blocks {
                let d = *self
                    .block_dims
                    .get(t.block)
                    .ok_or_else(|| Error::InvalidProblem(format!("{what}: no block {}", t.block)))?;
                if t.entries.iter().any(|&(i, j, v)| i >= d || j >= d || !v.re.is_finite() || !v.im.is_finite()) {
                    return Err(Error::InvalidProblem(format!("{what}: entry out of range or not finite")));
                }
                let m = t.to_dense(d);
                let asym = (&m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
                if asym > 1e-12 * (1.0 + m.iter().map(|z| z.norm()).fold(0.0, f64::max)) {
                    return Err(Error::InvalidProblem(format!("{what}: coefficient matrix is not Hermitian")));
                }
            }
            for &(i, v) in &f.free {
                if i >= self.free_vars || !v.is_finite() {
                    return Err(Error::InvalidProblem(format!("{what}: bad free-variable term ({i}, {v})")));
                }
            }
            Ok(())
        };
        check(&self.objective, "objective")?;
        for (j, e) in self.equalities.iter().enumerate() {
            check(&e.functional, &format!("equality {j}"))?;
            if !e.rhs.is_finite() {
                return Err(Error::InvalidProblem(format!("equality {j}: rhs not finite")));
            }
        }
        Ok(())
    }

    /// `C_b − Σ_j y_j A_jb` for every block.
    pub fn dual_slacks(&self, y: &[f64]) -> Vec<CMatrix> {
        let mut z: Vec<CMatrix> = self.block_dims.iter().map(|&d| CMatrix::zeros(d, d)).collect();
        for t in &self.objective.blocks {
            for &(i, j, v) in &t.entries {
                z[t.block][(i, j)] += v;
            }
        }
        for (e, &yj) in self.equalities.iter().zip(y) {
            for t in &e.functional.blocks {
                for &(i, j, v) in &t.entries {
                    z[t.block][(i, j)] -= v * yj;
                }
            }
        }
        z
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Optimal,
    /// No feasible primal point; the dual is unbounded.
    PrimalInfeasible,
    /// The primal is unbounded below (no feasible dual point).
    DualInfeasible,
    NumericalFailure,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub primal_value: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub block_values: Vec<CMatrix>,
    pub free_values: Vec<f64>,
    /// Multipliers `y_j` of the equalities.
    pub duals: Vec<f64>,
    /// Multipliers `(ν⁺_i, ν⁻_i)` of the lower and upper bounds.
    pub bound_duals: Vec<(f64, f64)>,
    pub iterations: usize,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }

    /// Block `b` as an operator; fails unless its dimension is a power of two.
    pub fn block(&self, b: usize) -> Result<HermitianOperator> {
        let m = &self.block_values[b];
        let q = crate::algebra::qubits_for_dim(m.nrows())?;
        Ok(HermitianOperator::from_raw_symmetrized(q, m.clone()))
    }
}

pub fn solve(p: &SdpProblem, tol: f64) -> Result<SdpSolution> {
    solve_with(p, &SolverOptions { tol, ..Default::default() })
}

pub fn solve_with(p: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution> {
    p.validate()?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol = {} must be positive", opts.tol)));
    }
    ipm::solve(p, opts)
}

/// Dual objective `bᵀy + loᵀν⁺ − hiᵀν⁻`, skipping infinite bounds.
pub fn dual_objective(p: &SdpProblem, y: &[f64], bound_duals: &[(f64, f64)]) -> f64 {
    let mut d: f64 = p.equalities.iter().zip(y).map(|(e, &yj)| e.rhs * yj).sum();
    for (i, &(np, nm)) in bound_duals.iter().enumerate() {
        let (lo, hi) = p.bounds(i);
        if lo.is_finite() {
            d += lo * np;
        }
        if hi.is_finite() {
            d -= hi * nm;
        }
    }
    d
}

fn min_eigenvalue(m: &CMatrix) -> Option<f64> {
    let asym = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if asym > 1e-8 * (1.0 + m.iter().map(|z| z.norm()).fold(0.0, f64::max)) {
        return None;
    }
    crate::algebra::eig_symmetric(&standard::embed(m)).ok().map(|e| e.values[0])
}

/// Re-evaluates a claimed optimal solution from the problem data alone:
/// primal and dual feasibility within `10·tol` and a duality gap within `tol`.
pub fn verify_certificate(p: &SdpProblem, s: &SdpSolution, tol: f64) -> bool {
    if s.status != SdpStatus::Optimal || p.validate().is_err() {
        return false;
    }
    if s.block_values.len() != p.block_dims.len()
        || s.free_values.len() != p.free_vars
        || s.duals.len() != p.equalities.len()
        || s.bound_duals.len() != p.free_vars
    {
        return false;
    }
    let slack = 10.0 * tol;
    for (x, &d) in s.block_values.iter().zip(&p.block_dims) {
        if x.nrows() != d || x.ncols() != d {
            return false;
        }
        match min_eigenvalue(x) {
            Some(m) if m >= -slack => {}
            _ => return false,
        }
    }
    for e in &p.equalities {
        if (e.functional.eval(&s.block_values, &s.free_values) - e.rhs).abs() > slack {
            return false;
        }
    }
    for (i, &u) in s.free_values.iter().enumerate() {
        let (lo, hi) = p.bounds(i);
        if !(u >= lo - slack && u <= hi + slack) {
            return false;
        }
    }

    for z in p.dual_slacks(&s.duals) {
        match min_eigenvalue(&z) {
            Some(m) if m >= -slack => {}
            _ => return false,
        }
    }
    let mut reduced = vec![0.0; p.free_vars];
    for &(i, v) in &p.objective.free {
        reduced[i] += v;
    }
    for (e, &yj) in p.equalities.iter().zip(&s.duals) {
        for &(i, v) in &e.functional.free {
            reduced[i] -= v * yj;
        }
    }
    for (i, &(np, nm)) in s.bound_duals.iter().enumerate() {
        let (lo, hi) = p.bounds(i);
        if np < -slack || nm < -slack || (!lo.is_finite() && np != 0.0) || (!hi.is_finite() && nm != 0.0) {
            return false;
        }
        if (reduced[i] - np + nm).abs() > slack {
            return false;
        }
    }

    let primal = p.objective.eval(&s.block_values, &s.free_values);
    let dual = dual_objective(p, &s.duals, &s.bound_duals);
    (primal - s.primal_value).abs() <= tol
        && (dual - s.dual_value).abs() <= tol
        && (primal - dual).abs() <= tol
}

#[cfg(test)]
mod tests;
