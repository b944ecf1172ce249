//! Homogeneous self-dual interior point for the real standard form, with
//! Nesterov–Todd scaling and a Mehrotra predictor–corrector.
//!
//! The embedding solves, for `x, z ⪰ 0`, `τ, κ ≥ 0`,
//!
//! ```text
//! A x + B u − b τ = 0,   Aᵀy + z − c τ = 0,   Bᵀy − f τ = 0,
//! bᵀy − cᵀx − fᵀu − κ = 0.
//! ```
//!
//! `τ > 0` at the limit gives an optimal pair; `κ > 0` gives an infeasibility
//! certificate. The Newton matrix `M_ij = ⟨A_i, W A_j W⟩` is block diagonal
//! over groups of rows that share blocks, and unbounded free variables are
//! eliminated through the Schur complement `Bᵀ M⁻¹ B`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, FullPivLU};

use super::standard::{unembed, Row, Standard, VarMap};
use super::{dual_objective, SdpProblem, SdpSolution, SdpStatus, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::algebra::{eig_symmetric, CMatrix};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Prints one line per iteration to stderr.
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            verbose: std::env::var_os("SDP_TRACE").is_some(),
        }
    }
}

const STEP_FRACTION: f64 = 0.99;
const DEPENDENCE_TOL: f64 = 1e-11;
/// Saddle systems up to this order with free variables are factored whole.
const DENSE_SADDLE_LIMIT: usize = 400;

type Blocks = Vec<DMatrix<f64>>;

struct Group {
    rows: Vec<usize>,
    blocks: Vec<usize>,
}

struct Problem {
    sizes: Vec<usize>,
    rows: Vec<Row>,
    b: DVector<f64>,
    c: Blocks,
    f: DVector<f64>,
    groups: Vec<Group>,
    /// Position of each row inside its group.
    local: Vec<usize>,
    /// `(row, term index)` pairs touching each block.
    incidence: Vec<Vec<(usize, usize)>>,
}

fn frob(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn max_abs_blocks(a: &[DMatrix<f64>]) -> f64 {
    a.iter().flat_map(|m| m.iter()).fold(0.0, |acc, v| acc.max(v.abs()))
}

fn norm_blocks(a: &[DMatrix<f64>]) -> f64 {
    a.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

fn axpy_blocks(y: &mut [DMatrix<f64>], a: f64, x: &[DMatrix<f64>]) {
    for (yb, xb) in y.iter_mut().zip(x) {
        *yb += xb * a;
    }
}

impl Problem {
    fn new(std: &Standard, keep: &[usize]) -> Problem {
        let rows: Vec<Row> = keep.iter().map(|&i| std.rows[i].clone()).collect();
        let nb = std.sizes.len();
        let mut incidence = vec![Vec::new(); nb];
        for (i, r) in rows.iter().enumerate() {
            for (t, term) in r.terms.iter().enumerate() {
                incidence[term.0].push((i, t));
            }
        }
        let mut p = Problem {
            sizes: std.sizes.clone(),
            b: DVector::from_iterator(rows.len(), rows.iter().map(|r| r.rhs)),
            rows,
            c: std.c.clone(),
            f: DVector::from_vec(std.f.clone()),
            groups: Vec::new(),
            local: Vec::new(),
            incidence,
        };
        let sub = Standard {
            rows: p.rows.clone(),
            ..std.clone()
        };
        p.groups = sub
            .components()
            .into_iter()
            .map(|(rows, blocks)| Group { rows, blocks })
            .collect();
        p.local = vec![0; p.rows.len()];
        for grp in &p.groups {
            for (l, &r) in grp.rows.iter().enumerate() {
                p.local[r] = l;
            }
        }
        p
    }

    fn m(&self) -> usize {
        self.rows.len()
    }

    fn nf(&self) -> usize {
        self.f.len()
    }

    fn zeros(&self) -> Blocks {
        self.sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect()
    }

    fn nu(&self) -> f64 {
        self.sizes.iter().sum::<usize>() as f64
    }

    fn a_apply(&self, x: &[DMatrix<f64>]) -> DVector<f64> {
        DVector::from_iterator(
            self.m(),
            self.rows.iter().map(|r| {
                r.terms
                    .iter()
                    .map(|(b, e)| e.iter().map(|&(i, j, v)| v * x[*b][(i, j)]).sum::<f64>())
                    .sum()
            }),
        )
    }

    fn at_apply(&self, y: &DVector<f64>) -> Blocks {
        let mut out = self.zeros();
        for (r, &yr) in self.rows.iter().zip(y.iter()) {
            if yr == 0.0 {
                continue;
            }
            for (b, e) in &r.terms {
                for &(i, j, v) in e {
                    out[*b][(i, j)] += v * yr;
                }
            }
        }
        out
    }

    fn b_apply(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.m(),
            self.rows.iter().map(|r| r.free.iter().map(|&(k, v)| v * u[k]).sum()),
        )
    }

    fn bt_apply(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.nf());
        for (r, &yr) in self.rows.iter().zip(y.iter()) {
            for &(k, v) in &r.free {
                out[k] += v * yr;
            }
        }
        out
    }

    /// `⟨A_i, W A_j W⟩` for the rows of one group; `w = None` means `W = 𝟙`.
    fn schur_block(&self, g: &Group, w: Option<&[DMatrix<f64>]>) -> DMatrix<f64> {
        let m = g.rows.len();
        let mut out = DMatrix::zeros(m, m);
        for &blk in &g.blocks {
            let n = self.sizes[blk];
            let inc = &self.incidence[blk];
            let mut gm = DMatrix::<f64>::zeros(n, n);
            for &(j, tj) in inc {
                let aj = &self.rows[j].terms[tj].1;
                let lj = self.local[j];
                match w {
                    Some(w) => {
                        let wb = &w[blk];
                        gm.fill(0.0);
                        for &(p, q, v) in aj {
                            for col in 0..n {
                                let s = v * wb[(q, col)];
                                if s == 0.0 {
                                    continue;
                                }
                                for row in 0..n {
                                    gm[(row, col)] += wb[(row, p)] * s;
                                }
                            }
                        }
                    }
                    None => {
                        gm.fill(0.0);
                        for &(p, q, v) in aj {
                            gm[(p, q)] += v;
                        }
                    }
                }
                for &(i, ti) in inc {
                    let li = self.local[i];
                    if li < lj {
                        continue;
                    }
                    let ai = &self.rows[i].terms[ti].1;
                    let s: f64 = ai.iter().map(|&(p, q, v)| v * gm[(p, q)]).sum();
                    out[(li, lj)] += s;
                }
            }
        }
        for j in 0..m {
            for i in (j + 1)..m {
                out[(j, i)] = out[(i, j)];
            }
        }
        out
    }

    fn b_dense(&self, g: &Group) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(g.rows.len(), self.nf());
        for (l, &r) in g.rows.iter().enumerate() {
            for &(k, v) in &self.rows[r].free {
                out[(l, k)] += v;
            }
        }
        out
    }
}

/// A row whose block part is a combination of kept rows; what remains is an
/// equality on the free variables alone.
struct PureRow {
    row: usize,
    combo: Vec<(usize, f64)>,
    coeffs: DVector<f64>,
    rhs: f64,
}

/// Outcome of presolve: kept rows, and `u = u0 + N v` solving every pure row.
struct Reduced {
    keep: Vec<usize>,
    pure: Vec<PureRow>,
    u0: DVector<f64>,
    null: DMatrix<f64>,
}

enum Presolve {
    Reduced(Reduced),
    Inconsistent,
}

/// Pivoted Cholesky of a Gram matrix; returns the pivot order of the
/// numerically independent rows.
fn independent_rows(gram: &DMatrix<f64>) -> Vec<usize> {
    let m = gram.nrows();
    let mut diag: Vec<f64> = (0..m).map(|i| gram[(i, i)]).collect();
    let scale = diag.iter().copied().fold(0.0, f64::max);
    let mut l = DMatrix::<f64>::zeros(m, m);
    let mut pivots = Vec::new();
    let mut used = vec![false; m];
    for k in 0..m {
        let (j, dj) = (0..m)
            .filter(|&i| !used[i])
            .map(|i| (i, diag[i]))
            .fold((usize::MAX, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        if j == usize::MAX || dj <= DEPENDENCE_TOL * scale {
            break;
        }
        used[j] = true;
        pivots.push(j);
        let s = dj.sqrt();
        for i in 0..m {
            if used[i] && i != j {
                continue;
            }
            let mut v = gram[(i, j)];
            for t in 0..k {
                v -= l[(i, t)] * l[(j, t)];
            }
            l[(i, k)] = v / s;
        }
        for i in 0..m {
            if !used[i] {
                diag[i] -= l[(i, k)] * l[(i, k)];
            }
        }
    }
    pivots
}

/// Moore–Penrose solve `x = G⁺ r` for symmetric PSD `G`.
fn pinv_solve(g: &DMatrix<f64>, r: &DVector<f64>) -> Result<DVector<f64>> {
    let e = eig_symmetric(g)?;
    let top = e.values.iter().copied().fold(0.0, f64::max);
    let mut out = DVector::zeros(r.len());
    for (k, &l) in e.values.iter().enumerate() {
        if l > 1e-12 * top {
            let v = e.vectors.column(k);
            out += v * (v.dot(r) / l);
        }
    }
    Ok(out)
}

/// Splits the rows into an independent set per group. Dependent rows either
/// drop out (consistent), prove infeasibility, or leave an equality on the
/// free variables, which is then eliminated by substitution.
fn presolve(std: &Standard) -> Result<Presolve> {
    let all: Vec<usize> = (0..std.rows.len()).collect();
    let full = Problem::new(std, &all);
    let nf = full.nf();
    let mut keep = Vec::new();
    let mut pure = Vec::new();
    let dense_free = |r: &Row| {
        let mut v = DVector::zeros(nf);
        for &(k, c) in &r.free {
            v[k] += c;
        }
        v
    };
    for g in &full.groups {
        let (pivots, gram) = if g.blocks.is_empty() {
            (Vec::new(), DMatrix::zeros(g.rows.len(), g.rows.len()))
        } else {
            let gram = full.schur_block(g, None);
            (independent_rows(&gram), gram)
        };
        for &pv in &pivots {
            keep.push(g.rows[pv]);
        }
        let chol = if pivots.is_empty() {
            None
        } else {
            let gii = DMatrix::from_fn(pivots.len(), pivots.len(), |a, b| gram[(pivots[a], pivots[b])]);
            Some(Cholesky::new(gii).ok_or_else(|| Error::Solver("row Gram matrix not positive".into()))?)
        };
        for dep in (0..g.rows.len()).filter(|i| !pivots.contains(i)) {
            let r = &full.rows[g.rows[dep]];
            let mut coeffs = dense_free(r);
            let mut rhs = r.rhs;
            let mut scale = 1.0f64.max(r.rhs.abs()).max(coeffs.amax());
            let mut combo = Vec::new();
            if let Some(chol) = &chol {
                let col = DVector::from_iterator(pivots.len(), pivots.iter().map(|&p| gram[(p, dep)]));
                let coef = chol.solve(&col);
                for (a, &pv) in pivots.iter().enumerate() {
                    let pr = &full.rows[g.rows[pv]];
                    let bp = dense_free(pr) * coef[a];
                    scale = scale.max(bp.amax()).max((coef[a] * pr.rhs).abs());
                    coeffs -= bp;
                    rhs -= coef[a] * pr.rhs;
                    combo.push((g.rows[pv], coef[a]));
                }
            }
            if coeffs.amax() > 1e-9 * scale {
                pure.push(PureRow { row: g.rows[dep], combo, coeffs, rhs });
            } else if rhs.abs() > 1e-9 * scale {
                return Ok(Presolve::Inconsistent);
            }
        }
    }
    keep.sort_unstable();

    let mut u0 = DVector::zeros(nf);
    let mut null = DMatrix::identity(nf, nf);
    if !pure.is_empty() {
        let e = DMatrix::from_fn(pure.len(), nf, |i, k| pure[i].coeffs[k]);
        let rhs = DVector::from_iterator(pure.len(), pure.iter().map(|p| p.rhs));
        let gram = e.transpose() * &e;
        u0 = pinv_solve(&gram, &(e.transpose() * &rhs))?;
        if (&e * &u0 - &rhs).amax() > 1e-9 * (1.0 + rhs.amax()) {
            return Ok(Presolve::Inconsistent);
        }
        let eig = eig_symmetric(&gram)?;
        let top = eig.values.iter().copied().fold(0.0, f64::max);
        let cols: Vec<usize> = (0..nf).filter(|&k| eig.values[k] <= 1e-12 * top).collect();
        null = DMatrix::from_fn(nf, cols.len(), |i, j| eig.vectors[(i, cols[j])]);
    }
    Ok(Presolve::Reduced(Reduced { keep, pure, u0, null }))
}

impl Reduced {
    /// The standard form after substituting `u = u0 + N v`.
    fn substitute(&self, std: &Standard) -> Standard {
        if self.pure.is_empty() {
            return std.clone();
        }
        let mut out = std.clone();
        let nv = self.null.ncols();
        for r in &mut out.rows {
            if r.free.is_empty() {
                continue;
            }
            let mut dense = DVector::zeros(std.f.len());
            for &(k, c) in &r.free {
                dense[k] += c;
            }
            r.rhs -= dense.dot(&self.u0);
            let reduced = self.null.transpose() * dense;
            r.free = (0..nv).filter(|&k| reduced[k] != 0.0).map(|k| (k, reduced[k])).collect();
        }
        let f = DVector::from_vec(std.f.clone());
        out.offset += f.dot(&self.u0);
        out.f = (self.null.transpose() * f).iter().copied().collect();
        out
    }
}

/// Nesterov–Todd scaling of one block: `Rᵀ z R = R⁻¹ x R⁻ᵀ = diag(λ)`,
/// `W = R Rᵀ`.
struct Scaling {
    r: DMatrix<f64>,
    rinv: DMatrix<f64>,
    lambda: Vec<f64>,
    w: DMatrix<f64>,
}

fn scaling(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<Scaling> {
    let n = x.nrows();
    let lx = Cholesky::new(x.clone())?.l();
    let lz = Cholesky::new(z.clone())?.l();
    let p = lz.transpose() * &lx;
    let e = eig_symmetric(&(p.transpose() * &p)).ok()?;
    if e.values[0] <= 0.0 || !e.values[0].is_finite() {
        return None;
    }
    let lambda: Vec<f64> = e.values.iter().map(|v| v.sqrt()).collect();
    let mut r = &lx * &e.vectors;
    for (k, l) in lambda.iter().enumerate() {
        let s = l.powf(-0.5);
        r.column_mut(k).scale_mut(s);
    }
    let lx_inv = lx.solve_lower_triangular(&DMatrix::identity(n, n))?;
    let mut rinv = e.vectors.transpose() * lx_inv;
    for (k, l) in lambda.iter().enumerate() {
        let s = l.sqrt();
        rinv.row_mut(k).scale_mut(s);
    }
    let w = &r * r.transpose();
    Some(Scaling { r, rinv, lambda, w })
}

/// Largest `α ≤ 1/STEP_FRACTION`-safe step with `diag(λ) + α d ⪰ 0`.
fn max_step(lambda: &[f64], d: &DMatrix<f64>) -> f64 {
    let n = lambda.len();
    let s = DMatrix::from_fn(n, n, |i, j| d[(i, j)] / (lambda[i] * lambda[j]).sqrt());
    match eig_symmetric(&s) {
        Ok(e) if e.values[0] < 0.0 => -1.0 / e.values[0],
        Ok(_) => f64::INFINITY,
        Err(_) => 0.0,
    }
}

fn ratio_step(v: f64, dv: f64) -> f64 {
    if dv < 0.0 {
        -v / dv
    } else {
        f64::INFINITY
    }
}

struct State {
    x: Blocks,
    z: Blocks,
    y: DVector<f64>,
    u: DVector<f64>,
    tau: f64,
    kappa: f64,
}

struct Direction {
    dx: Blocks,
    dz: Blocks,
    dy: DVector<f64>,
    du: DVector<f64>,
    dtau: f64,
    dkappa: f64,
}

struct Factor {
    chol: Vec<Cholesky<f64, Dyn>>,
    /// `M_g⁻¹ B_g` per group.
    minv_b: Vec<DMatrix<f64>>,
    b_dense: Vec<DMatrix<f64>>,
    /// Upper triangular `R` with `RᵀR = Bᵀ M⁻¹ B`, taken from a QR of the
    /// stacked `L_g⁻¹ B_g` so the condition number is not squared.
    schur: Option<DMatrix<f64>>,
    /// Pivoted LU of `[M B; Bᵀ 0]`. Stays accurate when `M` alone is
    /// nearly singular, e.g. when equalities pin a block down to the free
    /// variables.
    dense: Option<FullPivLU<f64, Dyn, Dyn>>,
    /// `M_g` per group, kept for refining Schur-path solves.
    m_groups: Vec<DMatrix<f64>>,
}

fn cholesky_regularised(m: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let scale = m.diagonal().iter().copied().fold(0.0, f64::max).max(1e-300);
    let mut shift = 1e-14 * scale;
    for _ in 0..6 {
        let mut r = m.clone();
        for i in 0..r.nrows() {
            r[(i, i)] += shift;
        }
        if let Some(c) = Cholesky::new(r) {
            return Some(c);
        }
        shift *= 100.0;
    }
    None
}

/// `R` of a thin QR of `s`, zero-padded when `s` has fewer rows than
/// columns.
fn triangular_factor(s: DMatrix<f64>) -> Option<DMatrix<f64>> {
    let nf = s.ncols();
    let s = if s.nrows() < nf { s.resize_vertically(nf, 0.0) } else { s };
    let r = s.qr().r();
    r.iter().all(|v| v.is_finite()).then_some(r)
}

/// Solves `RᵀR x = v`, setting components at negligible pivots to zero.
/// For a consistent singular system this gives one exact solution.
fn solve_normal(r: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    let n = r.ncols();
    let scale = r.diagonal().iter().fold(0.0f64, |a, d| a.max(d.abs()));
    let live = |i: usize| r[(i, i)].abs() > 1e-14 * scale;
    let mut z = DVector::zeros(n);
    for i in 0..n {
        if live(i) {
            let acc: f64 = (0..i).map(|j| r[(j, i)] * z[j]).sum();
            z[i] = (v[i] - acc) / r[(i, i)];
        }
    }
    let mut x = DVector::zeros(n);
    for i in (0..n).rev() {
        if live(i) {
            let acc: f64 = (i + 1..n).map(|j| r[(i, j)] * x[j]).sum();
            x[i] = (z[i] - acc) / r[(i, i)];
        }
    }
    x
}

impl Factor {
    fn new(p: &Problem, w: &[DMatrix<f64>]) -> Option<Factor> {
        let mut chol = Vec::with_capacity(p.groups.len());
        let mut minv_b = Vec::new();
        let mut b_dense = Vec::new();
        let nf = p.nf();
        let mut stacked = DMatrix::<f64>::zeros(if nf > 0 { p.m() } else { 0 }, nf);
        let mut offset = 0;
        let n = p.m() + nf;
        let mut k = (nf > 0 && n <= DENSE_SADDLE_LIMIT).then(|| DMatrix::<f64>::zeros(n, n));
        let mut m_groups = Vec::new();
        for g in &p.groups {
            let m = p.schur_block(g, Some(w));
            if nf > 0 {
                m_groups.push(m.clone());
            }
            if let Some(k) = &mut k {
                for (a, &ra) in g.rows.iter().enumerate() {
                    for (b, &rb) in g.rows.iter().enumerate() {
                        k[(ra, rb)] = m[(a, b)];
                    }
                }
            }
            let c = cholesky_regularised(m)?;
            if nf > 0 {
                let bd = p.b_dense(g);
                let mut lb = bd.clone();
                c.l_dirty().solve_lower_triangular_mut(&mut lb);
                stacked.rows_mut(offset, g.rows.len()).copy_from(&lb);
                offset += g.rows.len();
                c.l_dirty().tr_solve_lower_triangular_mut(&mut lb);
                minv_b.push(lb);
                b_dense.push(bd);
            }
            chol.push(c);
        }
        let schur = if nf > 0 { Some(triangular_factor(stacked)?) } else { None };
        let dense = k.map(|mut k| {
            for (i, r) in p.rows.iter().enumerate() {
                for &(j, v) in &r.free {
                    k[(i, p.m() + j)] += v;
                    k[(p.m() + j, i)] += v;
                }
            }
            k.full_piv_lu()
        });
        Some(Factor { chol, minv_b, b_dense, schur, dense, m_groups })
    }

    /// Solves `[M B; Bᵀ 0] [dy; du] = [ry; ru]`.
    fn saddle(&self, p: &Problem, ry: &DVector<f64>, ru: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        if let Some(lu) = &self.dense {
            let rhs = DVector::from_iterator(p.m() + p.nf(), ry.iter().chain(ru.iter()).copied());
            if let Some(sol) = lu.solve(&rhs) {
                return (sol.rows(0, p.m()).into_owned(), sol.rows(p.m(), p.nf()).into_owned());
            }
        }
        let (mut t, mut du) = self.saddle_schur(p, ry, ru);
        if self.m_groups.is_empty() {
            return (t, du);
        }
        // Forming Bᵀ M⁻¹ B loses accuracy as μ → 0; refine against the
        // unfactored system.
        for _ in 0..2 {
            let mut ey = ry - p.b_apply(&du);
            for (g, m) in p.groups.iter().zip(&self.m_groups) {
                let local = DVector::from_iterator(g.rows.len(), g.rows.iter().map(|&r| t[r]));
                let mt = m * local;
                for (l, &r) in g.rows.iter().enumerate() {
                    ey[r] -= mt[l];
                }
            }
            let eu = ru - p.bt_apply(&t);
            let (ct, cu) = self.saddle_schur(p, &ey, &eu);
            t += ct;
            du += cu;
        }
        (t, du)
    }

    fn saddle_schur(&self, p: &Problem, ry: &DVector<f64>, ru: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let mut t = DVector::zeros(p.m());
        let mut bt_t = DVector::zeros(p.nf());
        for (gi, g) in p.groups.iter().enumerate() {
            let local = DVector::from_iterator(g.rows.len(), g.rows.iter().map(|&r| ry[r]));
            let sol = self.chol[gi].solve(&local);
            if let Some(bd) = self.b_dense.get(gi) {
                bt_t += bd.transpose() * &sol;
            }
            for (l, &r) in g.rows.iter().enumerate() {
                t[r] = sol[l];
            }
        }
        let Some(schur) = &self.schur else {
            return (t, DVector::zeros(0));
        };
        let du = solve_normal(schur, &(bt_t - ru));
        for (gi, g) in p.groups.iter().enumerate() {
            let corr = &self.minv_b[gi] * &du;
            for (l, &r) in g.rows.iter().enumerate() {
                t[r] -= corr[l];
            }
        }
        (t, du)
    }
}

struct Residuals {
    fp: DVector<f64>,
    fd: Blocks,
    ff: DVector<f64>,
    fg: f64,
}

fn residuals(p: &Problem, s: &State) -> Residuals {
    let fp = p.a_apply(&s.x) + p.b_apply(&s.u) - &p.b * s.tau;
    let mut fd = p.at_apply(&s.y);
    axpy_blocks(&mut fd, 1.0, &s.z);
    axpy_blocks(&mut fd, -s.tau, &p.c);
    let ff = p.bt_apply(&s.y) - &p.f * s.tau;
    let fg = p.b.dot(&s.y) - frob(&p.c, &s.x) - p.f.dot(&s.u) - s.kappa;
    Residuals { fp, fd, ff, fg }
}

struct Rhs {
    r1: DVector<f64>,
    r2: Blocks,
    r3: DVector<f64>,
    r4: f64,
    rc: Blocks,
    rk: f64,
}

/// The Newton system is solved in the shifted dual variable `dy − ỹ dτ`
/// with `ỹ = y/τ`, so the cost data become `ĉ = c − Aᵀỹ` and `f̂ = f − Bᵀỹ`.
/// Near the optimum `WĉW ≈ x/τ` stays bounded, which avoids cancellation in
/// the `dτ` pivot.
struct Iteration<'a> {
    p: &'a Problem,
    sc: Vec<Scaling>,
    factor: Factor,
    y_ref: DVector<f64>,
    c_hat: Blocks,
    f_hat: DVector<f64>,
    g: DVector<f64>,
    h0: f64,
    p2: DVector<f64>,
    q2: DVector<f64>,
}

fn wxw(sc: &[Scaling], x: &[DMatrix<f64>]) -> Blocks {
    sc.iter().zip(x).map(|(s, xb)| &s.w * xb * &s.w).collect()
}

impl<'a> Iteration<'a> {
    fn new(p: &'a Problem, s: &State) -> Option<Iteration<'a>> {
        let sc: Vec<Scaling> = s.x.iter().zip(&s.z).map(|(x, z)| scaling(x, z)).collect::<Option<_>>()?;
        let w: Blocks = sc.iter().map(|s| s.w.clone()).collect();
        let factor = Factor::new(p, &w)?;
        let y_ref = &s.y / s.tau;
        let mut c_hat = p.c.clone();
        axpy_blocks(&mut c_hat, -1.0, &p.at_apply(&y_ref));
        let f_hat = &p.f - p.bt_apply(&y_ref);
        let wcw = wxw(&sc, &c_hat);
        let g = p.a_apply(&wcw);
        let h0 = frob(&c_hat, &wcw);
        let (p2, q2) = factor.saddle(p, &(&p.b + &g), &f_hat);
        Some(Iteration {
            p,
            sc,
            factor,
            y_ref,
            c_hat,
            f_hat,
            g,
            h0,
            p2,
            q2,
        })
    }

    /// Newton direction with two rounds of iterative refinement on the
    /// linear equations (the complementarity rows are exact by construction).
    fn direction(&self, s: &State, rhs: &Rhs) -> Direction {
        let p = self.p;
        let mut d = self.solve_once(s, rhs);
        for _ in 0..2 {
            let e1 = &rhs.r1 - (p.a_apply(&d.dx) + p.b_apply(&d.du) - &p.b * d.dtau);
            let e3 = &rhs.r3 - (p.bt_apply(&d.dy) - &p.f * d.dtau);
            let e4 = rhs.r4 - (p.b.dot(&d.dy) - frob(&p.c, &d.dx) - p.f.dot(&d.du) - d.dkappa);
            let mut e2 = p.at_apply(&d.dy);
            axpy_blocks(&mut e2, 1.0, &d.dz);
            axpy_blocks(&mut e2, -d.dtau, &p.c);
            for (eb, rb) in e2.iter_mut().zip(&rhs.r2) {
                *eb = rb - &*eb;
            }
            let size = e1.amax().max(e3.amax()).max(e4.abs()).max(max_abs_blocks(&e2));
            if size == 0.0 {
                break;
            }
            let fix = self.solve_once(
                s,
                &Rhs {
                    r1: e1,
                    r2: e2,
                    r3: e3,
                    r4: e4,
                    rc: p.zeros(),
                    rk: 0.0,
                },
            );
            axpy_blocks(&mut d.dx, 1.0, &fix.dx);
            axpy_blocks(&mut d.dz, 1.0, &fix.dz);
            d.dy += fix.dy;
            d.du += fix.du;
            d.dtau += fix.dtau;
            d.dkappa += fix.dkappa;
        }
        d
    }

    fn solve_once(&self, s: &State, rhs: &Rhs) -> Direction {
        let p = self.p;
        let mut tmp = rhs.rc.clone();
        axpy_blocks(&mut tmp, -1.0, &wxw(&self.sc, &rhs.r2));
        let s1 = &rhs.r1 - p.a_apply(&tmp);
        let s4 = rhs.r4 + self.y_ref.dot(&rhs.r1) + frob(&self.c_hat, &tmp) + rhs.rk / s.tau;
        let (p1, q1) = self.factor.saddle(p, &s1, &rhs.r3);
        let bg = &p.b - &self.g;
        let denom = bg.dot(&self.p2) - self.f_hat.dot(&self.q2) + self.h0 + s.kappa / s.tau;
        let dtau = (s4 - bg.dot(&p1) + self.f_hat.dot(&q1)) / denom;
        let dy_shift = p1 + &self.p2 * dtau;
        let du = q1 + &self.q2 * dtau;
        let mut dz = rhs.r2.clone();
        axpy_blocks(&mut dz, dtau, &self.c_hat);
        axpy_blocks(&mut dz, -1.0, &p.at_apply(&dy_shift));
        let dy = dy_shift + &self.y_ref * dtau;
        let mut dx = rhs.rc.clone();
        axpy_blocks(&mut dx, -1.0, &wxw(&self.sc, &dz));
        let dkappa = (rhs.rk - s.kappa * dtau) / s.tau;
        Direction { dx, dz, dy, du, dtau, dkappa }
    }

    /// Directions in the scaled frame: `R⁻¹ dx R⁻ᵀ`, `Rᵀ dz R`.
    fn scaled(&self, d: &Direction) -> (Blocks, Blocks) {
        let sx = self.sc.iter().zip(&d.dx).map(|(s, m)| &s.rinv * m * s.rinv.transpose()).collect();
        let sz = self.sc.iter().zip(&d.dz).map(|(s, m)| s.r.transpose() * m * &s.r).collect();
        (sx, sz)
    }

    fn step_length(&self, s: &State, d: &Direction, sx: &[DMatrix<f64>], sz: &[DMatrix<f64>]) -> f64 {
        let mut a = ratio_step(s.tau, d.dtau).min(ratio_step(s.kappa, d.dkappa));
        for (k, sc) in self.sc.iter().enumerate() {
            a = a.min(max_step(&sc.lambda, &sx[k])).min(max_step(&sc.lambda, &sz[k]));
        }
        a
    }
}

/// Scaled identities sized from the data norms, with `κ` chosen so the gap
/// residual starts clearly negative. Along the path the reported duality gap
/// is `−(κ + F_g)/τ`, so this keeps it positive.
fn initial_point(p: &Problem) -> State {
    let mut a_norm = vec![0.0f64; p.sizes.len()];
    let mut xi = vec![0.0f64; p.sizes.len()];
    for (r, row) in p.rows.iter().enumerate() {
        for (b, e) in &row.terms {
            let n = e.iter().map(|t| t.2 * t.2).sum::<f64>().sqrt();
            a_norm[*b] = a_norm[*b].max(n);
            xi[*b] = xi[*b].max((1.0 + p.b[r].abs()) / (1.0 + n));
        }
    }
    let mut x = Vec::with_capacity(p.sizes.len());
    let mut z = Vec::with_capacity(p.sizes.len());
    for (k, &n) in p.sizes.iter().enumerate() {
        let sn = (n as f64).sqrt();
        let xk = sn.max(n as f64 * xi[k]);
        let zk = sn.max(a_norm[k]).max(p.c[k].norm()).max(1.0) / sn;
        x.push(DMatrix::identity(n, n) * xk);
        z.push(DMatrix::identity(n, n) * zk);
    }
    let mu0 = frob(&x, &z) / p.nu();
    let kappa = (mu0 * (p.nu() + 1.0) - frob(&p.c, &x)).max(mu0);
    State {
        x,
        z,
        y: DVector::zeros(p.m()),
        u: DVector::zeros(p.nf()),
        tau: 1.0,
        kappa,
    }
}

fn mu(p: &Problem, s: &State) -> f64 {
    (frob(&s.x, &s.z) + s.tau * s.kappa) / (p.nu() + 1.0)
}

pub(super) fn solve(user: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution> {
    let std = Standard::new(user);
    let mut unused_cost = false;
    for &(i, v) in &user.objective.free {
        let (lo, hi) = user.bounds(i);
        if v != 0.0 && !lo.is_finite() && !hi.is_finite() && matches!(std.vars[i], VarMap::Fixed(_)) {
            unused_cost = true;
        }
    }
    if unused_cost {
        return Ok(failed(user, SdpStatus::DualInfeasible, 0));
    }
    let red = match presolve(&std)? {
        Presolve::Reduced(r) => r,
        Presolve::Inconsistent => return Ok(failed(user, SdpStatus::PrimalInfeasible, 0)),
    };
    let sub = red.substitute(&std);
    let p = Problem::new(&sub, &red.keep);
    let tol = opts.tol;

    let mut s = initial_point(&p);
    let mut stalls = 0;
    for iter in 0..opts.max_iter {
        let r = residuals(&p, &s);
        let pres = r.fp.amax() / s.tau;
        let dres = 2.0 * norm_blocks(&r.fd).max(r.ff.amax()) / s.tau;
        let pobj = (frob(&p.c, &s.x) + p.f.dot(&s.u)) / s.tau;
        let dobj = p.b.dot(&s.y) / s.tau;
        let gap = pobj - dobj;
        let m = mu(&p, &s);
        if opts.verbose {
            eprintln!(
                "sdp {iter:3}  pobj {:+.9e}  dobj {:+.9e}  gap {gap:+.2e}  pres {pres:.2e}  dres {dres:.2e}  mu {m:.2e}  tau {:.2e}  kappa {:.2e}",
                pobj + sub.offset,
                dobj + sub.offset,
                s.tau,
                s.kappa
            );
        }
        if pres <= tol && dres <= tol && gap.abs() <= 0.5 * tol && gap >= -1e-12 {
            return Ok(finish(user, &std, &red, &s, iter));
        }
        let by = p.b.dot(&s.y);
        if by > 0.0 {
            let mut aty = p.at_apply(&s.y);
            axpy_blocks(&mut aty, 1.0, &s.z);
            if 2.0 * norm_blocks(&aty) <= tol * by && p.bt_apply(&s.y).amax() <= tol * by {
                return Ok(failed(user, SdpStatus::PrimalInfeasible, iter));
            }
        }
        let cx = frob(&p.c, &s.x) + p.f.dot(&s.u);
        if cx < 0.0 {
            let ax = p.a_apply(&s.x) + p.b_apply(&s.u);
            if ax.amax() <= -tol * cx {
                return Ok(failed(user, SdpStatus::DualInfeasible, iter));
            }
        }

        let Some(it) = Iteration::new(&p, &s) else {
            return Ok(failed(user, SdpStatus::NumericalFailure, iter));
        };

        // Predictor.
        let neg = |v: &DVector<f64>| -v;
        let neg_blocks = |b: &Blocks| b.iter().map(|m| -m).collect::<Blocks>();
        let aff = it.direction(
            &s,
            &Rhs {
                r1: neg(&r.fp),
                r2: neg_blocks(&r.fd),
                r3: neg(&r.ff),
                r4: -r.fg,
                rc: neg_blocks(&s.x),
                rk: -s.tau * s.kappa,
            },
        );
        let (ax, az) = it.scaled(&aff);
        let a_aff = it.step_length(&s, &aff, &ax, &az).min(1.0);
        let sigma = (1.0 - a_aff).powi(3).clamp(0.0, 1.0);

        // Corrector.
        let eta = 1.0 - sigma;
        let mut rc = Vec::with_capacity(p.sizes.len());
        for (k, sc) in it.sc.iter().enumerate() {
            let n = sc.lambda.len();
            let prod = &ax[k] * &az[k];
            let v = DMatrix::from_fn(n, n, |i, j| {
                let mut h = -0.5 * (prod[(i, j)] + prod[(j, i)]);
                if i == j {
                    h += sigma * m - sc.lambda[i] * sc.lambda[i];
                }
                2.0 * h / (sc.lambda[i] + sc.lambda[j])
            });
            rc.push(&sc.r * v * sc.r.transpose());
        }
        let dir = it.direction(
            &s,
            &Rhs {
                r1: &r.fp * -eta,
                r2: r.fd.iter().map(|b| b * -eta).collect(),
                r3: &r.ff * -eta,
                r4: -eta * r.fg,
                rc,
                rk: sigma * m - s.tau * s.kappa - aff.dtau * aff.dkappa,
            },
        );
        let (sx, sz) = it.scaled(&dir);
        let a_max = it.step_length(&s, &dir, &sx, &sz);
        let alpha = (STEP_FRACTION * a_max).min(1.0);
        if !(alpha > 1e-10) {
            stalls += 1;
            if stalls > 3 {
                return Ok(failed(user, SdpStatus::NumericalFailure, iter));
            }
            continue;
        }
        axpy_blocks(&mut s.x, alpha, &dir.dx);
        axpy_blocks(&mut s.z, alpha, &dir.dz);
        for b in s.x.iter_mut().chain(s.z.iter_mut()) {
            let t = b.transpose();
            *b += t;
            *b *= 0.5;
        }
        s.y += &dir.dy * alpha;
        s.u += &dir.du * alpha;
        s.tau += alpha * dir.dtau;
        s.kappa += alpha * dir.dkappa;
        // Keep the homogeneous scale bounded.
        let scale = s.tau + s.kappa;
        if !(scale.is_finite()) || max_abs_blocks(&s.x) > 1e12 {
            return Ok(failed(user, SdpStatus::NumericalFailure, iter));
        }
    }
    Ok(failed(user, SdpStatus::NumericalFailure, opts.max_iter))
}

fn failed(user: &SdpProblem, status: SdpStatus, iterations: usize) -> SdpSolution {
    let (primal_value, dual_value) = match status {
        SdpStatus::PrimalInfeasible => (f64::INFINITY, f64::INFINITY),
        SdpStatus::DualInfeasible => (f64::NEG_INFINITY, f64::NEG_INFINITY),
        _ => (f64::INFINITY, f64::NEG_INFINITY),
    };
    SdpSolution {
        status,
        primal_value,
        dual_value,
        gap: f64::NAN,
        block_values: user.block_dims.iter().map(|&d| CMatrix::zeros(d, d)).collect(),
        free_values: vec![0.0; user.free_vars],
        duals: vec![0.0; user.equalities.len()],
        bound_duals: vec![(0.0, 0.0); user.free_vars],
        iterations,
    }
}

fn finish(user: &SdpProblem, std: &Standard, red: &Reduced, s: &State, iterations: usize) -> SdpSolution {
    let t = s.tau;
    let block_values: Vec<CMatrix> = (0..std.user_blocks).map(|b| unembed(&s.x[b]) / crate::algebra::c(t, 0.0)).collect();
    let u = &red.u0 + &red.null * &s.u / t;
    let mut y = DVector::zeros(std.rows.len());
    for (k, &row) in red.keep.iter().enumerate() {
        y[row] = s.y[k] / t;
    }
    if !red.pure.is_empty() {
        // Multipliers of the eliminated free-variable equalities, pushed back
        // onto the rows they combine.
        let mut rho = DVector::from_vec(std.f.clone());
        for (r, &yr) in std.rows.iter().zip(y.iter()) {
            for &(k, v) in &r.free {
                rho[k] -= v * yr;
            }
        }
        let e = DMatrix::from_fn(red.pure.len(), std.f.len(), |i, k| red.pure[i].coeffs[k]);
        if let Ok(w) = pinv_solve(&(&e * e.transpose()), &(&e * rho)) {
            for (pr, &wk) in red.pure.iter().zip(w.iter()) {
                y[pr.row] += wk;
                for &(i, c) in &pr.combo {
                    y[i] -= wk * c;
                }
            }
        }
    }
    let mut duals = vec![0.0; user.equalities.len()];
    for (row, origin) in std.origin.iter().enumerate() {
        if let Some(j) = origin {
            duals[*j] = y[row];
        }
    }
    let mut free_values = vec![0.0; user.free_vars];
    let mut bound_duals = vec![(0.0, 0.0); user.free_vars];
    for (i, v) in std.vars.iter().enumerate() {
        match *v {
            VarMap::Free(k) => free_values[i] = u[k],
            VarMap::Fixed(val) => {
                free_values[i] = val;
                let mut red: f64 = user.objective.free.iter().filter(|e| e.0 == i).map(|e| e.1).sum();
                for (e, &yj) in user.equalities.iter().zip(&duals) {
                    red -= yj * e.functional.free.iter().filter(|e| e.0 == i).map(|e| e.1).sum::<f64>();
                }
                bound_duals[i] = (red.max(0.0), (-red).max(0.0));
            }
            VarMap::Lower { lo, s: sb } => {
                free_values[i] = lo + s.x[sb][(0, 0)] / t;
                bound_duals[i] = (s.z[sb][(0, 0)] / t, 0.0);
            }
            VarMap::Upper { hi, t: tb } => {
                free_values[i] = hi - s.x[tb][(0, 0)] / t;
                bound_duals[i] = (0.0, s.z[tb][(0, 0)] / t);
            }
            VarMap::Boxed { lo, s: sb, t: tb } => {
                free_values[i] = lo + s.x[sb][(0, 0)] / t;
                bound_duals[i] = (s.z[sb][(0, 0)] / t, s.z[tb][(0, 0)] / t);
            }
        }
    }
    let primal_value = user.objective.eval(&block_values, &free_values);
    let dual_value = dual_objective(user, &duals, &bound_duals);
    SdpSolution {
        status: SdpStatus::Optimal,
        primal_value,
        dual_value,
        gap: primal_value - dual_value,
        block_values,
        free_values,
        duals,
        bound_duals,
        iterations,
    }
}
